"""Hindsight constructs, regret bounds, exceedance diagnostics and metrics.

Wealth series are passed as log-wealth arrays indexed by period. Unless a
function says otherwise, index 0 is period 1 (S_0 = 1 is not included).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError, DomainError


@dataclass(frozen=True)
class MetricsReport:
    final_wealth: float
    avg_growth_rate: float
    avg_return: float
    sharpe: float
    sharpe_infinite: bool = False
    periods: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        if self.sharpe_infinite:
            d["sharpe"] = None  # strict JSON has no infinity
        return d


@dataclass(frozen=True)
class ExceedanceReport:
    """Finite-horizon view of how series A compares with series B.

    ``exceed_count`` counts periods with S_n(A) > S_n(B) and ``exceeded_count``
    the reverse, the finite proxy for "infinitely often exceeded".
    Periods are 1-based.
    """

    exceed_count: int
    exceeded_count: int
    crossing_count: int
    last_crossing: int | None
    always_exceeds_from: int | None
    horizon: int


@dataclass(frozen=True)
class BoundCurve:
    gap: np.ndarray
    bound: np.ndarray | None = None

    def __len__(self):
        return len(self.gap)

    def holds(self, slack: float = 1e-12) -> bool:
        return self.bound is None or bool(np.all(self.gap <= self.bound + slack))


def _series(x, name="series") -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ConfigError(f"{name} must be one-dimensional")
    return x


def baseline_wealth(comp_log_wealth) -> np.ndarray:
    """Per-period max over components of a (T, k) log-wealth history."""
    w = np.asarray(comp_log_wealth, dtype=float)
    if w.ndim == 1:
        w = w[:, None]
    if w.ndim != 2 or w.shape[1] == 0:
        raise ConfigError("need at least one component")
    return w.max(axis=1)


def benchmark_wealth(grid_log_history, grid=None) -> np.ndarray:
    """Per-period max over grid points of a (T, |grid|) log-wealth history."""
    if grid is not None and not grid.has_all_vertices():
        raise ConfigError("benchmark needs a grid containing every vertex")
    w = np.asarray(grid_log_history, dtype=float)
    if w.ndim == 1:
        w = w[None, :]
    return w.max(axis=1)


def grid_log_history(grid, comp_returns) -> np.ndarray:
    """(T, |grid|) log wealth of every constant combination on ``grid``."""
    R = np.asarray(comp_returns, dtype=float)
    pts_t = np.ascontiguousarray(grid.points.T)
    out = np.empty((R.shape[0], len(grid)))
    acc = np.zeros(len(grid))
    for t, r in enumerate(R):
        acc = acc + np.log((pts_t * r[:, None]).sum(axis=0))
        out[t] = acc
    return out


def best_constant_combination(grid, grid_log_wealth) -> np.ndarray:
    """Grid point with the highest wealth; ties go to the lowest index."""
    lw = np.asarray(grid_log_wealth, dtype=float)
    if lw.shape != (len(grid),):
        raise ConfigError("ledger does not match grid")
    return grid.points[int(np.argmax(lw))].copy()


def small_scale_bound(k: int, n):
    """(k-1) log(n+1): worst-case regret of the uniform mixture over B^k."""
    if k < 1:
        raise DomainError("k must be >= 1")
    n = np.asarray(n, dtype=float)
    if np.any(n < 0):
        raise DomainError("n must be >= 0")
    out = (k - 1) * np.log1p(n)
    return float(out) if out.ndim == 0 else out


def large_scale_bound(N: int, n, eps_n):
    """(N-1) log(n+1) - log eps_n."""
    eps = np.asarray(eps_n, dtype=float)
    if np.any(eps <= 0) or np.any(eps > 1):
        raise DomainError("eps_n must lie in (0, 1]")
    out = small_scale_bound(N, n) - np.log(eps)
    return float(out) if np.ndim(out) == 0 else out


def grid_bound(grid_size: int) -> float:
    """log |grid|: regret of a uniform finite mixture against its best member."""
    return math.log(grid_size)


def epsilon_n(partition, comp_log_wealth) -> float:
    """Smallest member mass at each base set's best member (ties to the lower index)."""
    lw = np.asarray(comp_log_wealth, dtype=float)
    best = []
    for s, m in zip(partition.base_sets, partition.masses):
        j = int(np.argmax(lw[list(s)]))
        best.append(float(m[j]))
    return min(best)


def exceedance_report(wealth_a, wealth_b) -> ExceedanceReport:
    a, b = _series(wealth_a, "wealth_a"), _series(wealth_b, "wealth_b")
    if a.shape != b.shape:
        raise ConfigError(f"series lengths differ: {a.size} vs {b.size}")
    d = np.sign(a - b)
    n = d.size
    changes = np.flatnonzero(d[1:] != d[:-1]) + 2  # 1-based period of the change
    last = int(changes[-1]) if changes.size else None
    always = None
    if n and d[-1] > 0:
        not_ahead = np.flatnonzero(d <= 0)
        always = int(not_ahead[-1]) + 2 if not_ahead.size else 1
    return ExceedanceReport(exceed_count=int(np.sum(d > 0)), exceeded_count=int(np.sum(d < 0)),
                            crossing_count=int(changes.size), last_crossing=last,
                            always_exceeds_from=always, horizon=n)


def metrics(log_wealth, per_period_returns) -> MetricsReport:
    """Final wealth, growth rate W_n, mean gross return and mean/std Sharpe.

    ``log_wealth`` may be the whole path or just its final value. The Sharpe
    ratio is mean(gross return) / std(gross return) with divisor n-1, with no
    risk-free rate and no annualisation.
    """
    r = _series(per_period_returns, "returns")
    n = r.size
    if n < 2:
        raise ConfigError("metrics need at least two periods")
    final_log = float(np.asarray(log_wealth, dtype=float).reshape(-1)[-1])
    mean = float(r.mean())
    sd = float(r.std(ddof=1))
    if sd == 0.0:
        sharpe, flag = math.inf, True
    else:
        sharpe, flag = mean / sd, False
    return MetricsReport(final_wealth=math.exp(final_log), avg_growth_rate=final_log / n,
                         avg_return=mean, sharpe=sharpe, sharpe_infinite=flag, periods=n)


def growth_gap_series(log_a, log_b) -> BoundCurve:
    """W_n(a) - W_n(b) for n = 1..T."""
    a, b = _series(log_a), _series(log_b)
    if a.shape != b.shape:
        raise ConfigError(f"series lengths differ: {a.size} vs {b.size}")
    n = np.arange(1, a.size + 1)
    return BoundCurve(gap=(a - b) / n)


@dataclass
class DominanceReport:
    precondition_ok: bool
    verdict: bool | None
    dominating: tuple[int, ...]
    max_rel_gap: float | None = None
    rel_gaps: np.ndarray | None = None
    violations: list[tuple[int, int, int]] | None = None  # (set, member, period)
    best_support_ok: bool | None = None


def dominance_reduction_check(comp_returns, partition, step_den: int = 20,
                              rtol: float = 1e-9) -> DominanceReport:
    """Compare the best constant combination over all components with the
    best one over each base set's dominating member only.

    Within every base set one member must earn at least as much as every
    other member in every period; otherwise a precondition report is
    returned without a verdict. Both grids use the same step 1/step_den, so
    the reduced grid embeds in the full one.
    """
    from .simplex_grid import enumerate_grid

    R = np.asarray(comp_returns, dtype=float)
    if R.ndim != 2 or R.shape[1] != partition.k:
        raise ConfigError(f"returns {R.shape} do not match a partition of {partition.k} components")
    dominating, violations = [], []
    for j, s in enumerate(partition.base_sets):
        s = list(s)
        sub = R[:, s]
        ok = np.all(sub >= sub.max(axis=1, keepdims=True), axis=0)
        if ok.any():
            dominating.append(s[int(np.argmax(ok))])
        else:
            lead = s[int(np.argmax(sub.sum(axis=0)))]
            bad = np.flatnonzero(np.any(sub > R[:, [lead]], axis=1))
            violations.append((j, lead, int(bad[0]) + 1))
            dominating.append(lead)
    if violations:
        return DominanceReport(False, None, tuple(dominating), violations=violations)

    full = enumerate_grid(partition.k, step_den)
    reduced = enumerate_grid(len(dominating), step_den)
    full_hist = grid_log_history(full, R)
    red_hist = grid_log_history(reduced, R[:, dominating])
    full_best = full_hist.max(axis=1)
    red_best = red_hist.max(axis=1)
    rel = np.abs(np.expm1(full_best - red_best))

    # argmax of the full grid must put weight on dominating members only
    arg = np.argmax(full_hist, axis=1)
    others = np.setdiff1d(np.arange(partition.k), dominating)
    support_ok = bool(np.all(full.counts[arg][:, others] == 0)) if others.size else True
    return DominanceReport(True, bool(np.all(rel <= rtol)), tuple(dominating),
                           max_rel_gap=float(rel.max()), rel_gaps=rel, best_support_ok=support_ok)
