"""Online ensembles of component strategies.

Every ensemble here reduces to a per-period capital allocation over the k
component strategies: the emitted portfolio is ``alloc @ comps`` where
``comps`` stacks the components' period-n portfolios. All wealth is kept
in log space and mixture weights go through a max-subtracted softmax.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .analysis import epsilon_n
from .errors import ConfigError, DataError, PartitionError, SupportError
from .simplex_grid import SimplexGrid


@dataclass(frozen=True)
class WealthLedger:
    """Log cumulative wealth (nats) per tracked entity after ``period`` periods."""

    log_wealth: np.ndarray
    period: int = 0

    @classmethod
    def fresh(cls, size: int) -> "WealthLedger":
        return cls(np.zeros(size), 0)

    def __len__(self):
        return self.log_wealth.shape[0]

    @property
    def wealth(self) -> np.ndarray:
        return np.exp(self.log_wealth)


def update_ledger(ledger: WealthLedger, per_entity_returns) -> WealthLedger:
    r = np.asarray(per_entity_returns, dtype=float)
    if r.shape != ledger.log_wealth.shape:
        raise ConfigError(f"expected {ledger.log_wealth.shape} returns, got {r.shape}")
    if not np.all(r > 0) or not np.all(np.isfinite(r)):
        raise DataError("per-entity returns must be finite and strictly positive")
    return WealthLedger(ledger.log_wealth + np.log(r), ledger.period + 1)


def mixture_weights(log_w, log_prior=None) -> np.ndarray:
    """Normalised exp(log_w + log_prior) via max subtraction."""
    z = np.asarray(log_w, dtype=float)
    if log_prior is not None:
        z = z + log_prior
    e = np.exp(z - z.max())
    return e / e.sum()


@dataclass(frozen=True)
class SupportMask:
    included: np.ndarray
    fraction: float

    def __post_init__(self):
        if len(self.included) == 0:
            raise SupportError("support mask is empty")


def support_size(n_points: int, p: float) -> int:
    if not 0 < p <= 1:
        raise ConfigError(f"support fraction must lie in (0, 1], got {p}")
    # round first so that e.g. 0.3 * 10 does not ceil to 4
    return max(1, min(n_points, math.ceil(round(p * n_points, 9))))


def support_winners(grid_ledger: WealthLedger, p: float) -> SupportMask:
    """Top ceil(p*|grid|) points by past wealth, ties to the lower index."""
    lw = grid_ledger.log_wealth
    size = support_size(lw.size, p)
    if grid_ledger.period == 0 or size == lw.size:
        return SupportMask(np.arange(lw.size), p)
    order = np.argsort(-lw, kind="stable")
    return SupportMask(np.sort(order[:size]), p)


def support_losers(grid_ledger: WealthLedger, p: float) -> SupportMask:
    """Bottom ceil(p*|grid|) points by past wealth, ties to the lower index."""
    lw = grid_ledger.log_wealth
    size = support_size(lw.size, p)
    if grid_ledger.period == 0 or size == lw.size:
        return SupportMask(np.arange(lw.size), p)
    order = np.argsort(lw, kind="stable")
    return SupportMask(np.sort(order[:size]), p)


def _as_comps(comps) -> np.ndarray:
    c = np.asarray(comps, dtype=float)
    if c.ndim != 2:
        raise ConfigError(f"component portfolios must be a k x m array, got shape {c.shape}")
    return c


def constant_combo_portfolio(lam, comps) -> np.ndarray:
    lam = np.asarray(lam, dtype=float)
    c = _as_comps(comps)
    if lam.shape != (c.shape[0],):
        raise ConfigError(f"combination of length {lam.shape} for {c.shape[0]} components")
    return (lam[:, None] * c).sum(axis=0)


def grid_allocation(grid: SimplexGrid, grid_ledger: WealthLedger, mask: SupportMask | None = None) -> np.ndarray:
    """Wealth-weighted mean of grid points, i.e. the implied weight per component."""
    if len(grid_ledger) != len(grid):
        raise ConfigError(f"ledger tracks {len(grid_ledger)} entities, grid has {len(grid)} points")
    pts = grid.points
    lw = grid_ledger.log_wealth
    if mask is not None and len(mask.included) != len(grid):
        if len(mask.included) == 0:
            raise SupportError("support mask is empty")
        pts = pts[mask.included]
        lw = lw[mask.included]
    w = mixture_weights(lw)
    # fixed-order reduction along the point axis
    alloc = (pts.T * w).sum(axis=1)
    return alloc / alloc.sum()


def uc_portfolio(grid: SimplexGrid, grid_ledger: WealthLedger, comps, mask: SupportMask | None = None) -> np.ndarray:
    c = _as_comps(comps)
    if grid.dim != c.shape[0]:
        raise ConfigError(f"grid over B^{grid.dim} but {c.shape[0]} components")
    return constant_combo_portfolio(grid_allocation(grid, grid_ledger, mask), c)


def uc_large_portfolio(grid: SimplexGrid, grid_ledger: WealthLedger, reps, mask: SupportMask | None = None) -> np.ndarray:
    """Same mixture as :func:`uc_portfolio`, over representative portfolios."""
    return uc_portfolio(grid, grid_ledger, reps, mask)


@dataclass(frozen=True, eq=False)
class Partition:
    """Disjoint base sets covering range(k) with a probability mass per member."""

    base_sets: tuple[tuple[int, ...], ...]
    masses: tuple[np.ndarray, ...] = field(default=())

    def __post_init__(self):
        sets = tuple(tuple(int(a) for a in s) for s in self.base_sets)
        if not sets or any(len(s) == 0 for s in sets):
            raise PartitionError("base sets must be non-empty")
        members = [a for s in sets for a in s]
        if len(set(members)) != len(members):
            raise PartitionError("base sets overlap")
        if sorted(members) != list(range(len(members))):
            raise PartitionError(f"base sets must cover 0..{len(members) - 1} exactly")
        if self.masses:
            if len(self.masses) != len(sets):
                raise PartitionError("need one mass vector per base set")
            masses = []
            for s, m in zip(sets, self.masses):
                m = np.asarray(m, dtype=float)
                if m.shape != (len(s),) or np.any(m <= 0) or abs(m.sum() - 1.0) > 1e-9:
                    raise PartitionError(f"masses for set {s} must be positive and sum to 1")
                masses.append(m)
            masses = tuple(masses)
        else:
            masses = tuple(np.full(len(s), 1.0 / len(s)) for s in sets)
        object.__setattr__(self, "base_sets", sets)
        object.__setattr__(self, "masses", masses)

    @classmethod
    def singletons(cls, k: int) -> "Partition":
        return cls(tuple((a,) for a in range(k)))

    @property
    def k(self) -> int:
        return sum(len(s) for s in self.base_sets)

    @property
    def N(self) -> int:
        return len(self.base_sets)

    def mass_of(self) -> np.ndarray:
        out = np.empty(self.k)
        for s, m in zip(self.base_sets, self.masses):
            out[list(s)] = m
        return out


def within_set_weights(members, masses, comp_ledger: WealthLedger) -> np.ndarray:
    members = list(members)
    if not members:
        raise PartitionError("empty base set")
    masses = np.asarray(masses, dtype=float)
    if np.any(masses <= 0):
        raise PartitionError("member masses must be positive")
    return mixture_weights(comp_ledger.log_wealth[members], np.log(masses))


def representative_portfolio(members, masses, comp_ledger: WealthLedger, comps) -> np.ndarray:
    """Mass- and wealth-weighted mixture of a base set's member portfolios."""
    c = _as_comps(comps)
    v = within_set_weights(members, masses, comp_ledger)
    return (v[:, None] * c[list(members)]).sum(axis=0)


def representative_portfolios(partition: Partition, comp_ledger: WealthLedger, comps) -> np.ndarray:
    c = _as_comps(comps)
    return np.stack([representative_portfolio(s, m, comp_ledger, c)
                     for s, m in zip(partition.base_sets, partition.masses)])


def inner_weights(partition: Partition, comp_ledger: WealthLedger) -> np.ndarray:
    """N x k matrix; row i holds the within-set weights of base set i."""
    V = np.zeros((partition.N, partition.k))
    for i, (s, m) in enumerate(zip(partition.base_sets, partition.masses)):
        V[i, list(s)] = within_set_weights(s, m, comp_ledger)
    return V


def allocation_distribution(grid: SimplexGrid, grid_ledger: WealthLedger, comp_ledger: WealthLedger,
                            partition: Partition, mask: SupportMask | None = None) -> np.ndarray:
    """Capital share of each component under the large-scale UC.

    Outer weight of base set i is the wealth-weighted mean of lambda_i over
    the grid; inner weight is the member's share within its representative.
    """
    if grid.dim != partition.N:
        raise ConfigError(f"grid over B^{grid.dim} but {partition.N} base sets")
    outer = grid_allocation(grid, grid_ledger, mask)
    V = inner_weights(partition, comp_ledger)
    P = (outer[:, None] * V).sum(axis=0)
    return P / P.sum()


def wae_portfolio(comp_ledger: WealthLedger, comps) -> np.ndarray:
    c = _as_comps(comps)
    return (mixture_weights(comp_ledger.log_wealth)[:, None] * c).sum(axis=0)


def leader_index(comp_ledger: WealthLedger) -> int:
    return int(np.argmax(comp_ledger.log_wealth))


def fl_allocation(comp_ledger: WealthLedger) -> np.ndarray:
    k = len(comp_ledger)
    if comp_ledger.period == 0:
        return np.full(k, 1.0 / k)
    a = np.zeros(k)
    a[leader_index(comp_ledger)] = 1.0
    return a


def fl_portfolio(comp_ledger: WealthLedger, comps) -> np.ndarray:
    c = _as_comps(comps)
    if comp_ledger.period == 0:
        return c.mean(axis=0)
    return c[leader_index(comp_ledger)].copy()


# --- online engine -------------------------------------------------------


class _GridTrack:
    """Grid ledger shared by every ensemble mixing over the same grid."""

    def __init__(self, grid: SimplexGrid):
        self.grid = grid
        self.ledger = WealthLedger.fresh(len(grid))
        self._pts_t = np.ascontiguousarray(grid.points.T)

    def point_returns(self, entity_returns):
        return (self._pts_t * entity_returns[:, None]).sum(axis=0)

    def commit(self, entity_returns):
        r = self.point_returns(entity_returns)
        self.ledger = WealthLedger(self.ledger.log_wealth + np.log(r), self.ledger.period + 1)


class Ensemble:
    name = "ensemble"

    def allocation(self, comp_ledger: WealthLedger) -> np.ndarray:
        raise NotImplementedError


class WAE(Ensemble):
    def __init__(self, name="wae"):
        self.name = name

    def allocation(self, comp_ledger):
        return mixture_weights(comp_ledger.log_wealth)


class FL(Ensemble):
    def __init__(self, name="fl"):
        self.name = name

    def allocation(self, comp_ledger):
        return fl_allocation(comp_ledger)


class UC(Ensemble):
    """Universal combination over a grid on B^k, optionally on a winners/losers support."""

    def __init__(self, track: _GridTrack, name="uc", support: str | None = None, fraction: float = 1.0):
        if support not in (None, "winners", "losers"):
            raise ConfigError(f"unknown support rule {support!r}")
        self.track, self.name, self.support, self.fraction = track, name, support, fraction
        self.last_mask: SupportMask | None = None

    def mask(self):
        if self.support is None:
            return None
        rule = support_winners if self.support == "winners" else support_losers
        return rule(self.track.ledger, self.fraction)

    def allocation(self, comp_ledger):
        self.last_mask = self.mask()
        return grid_allocation(self.track.grid, self.track.ledger, self.last_mask)


class UCLarge(UC):
    """Universal combination over representatives of a partition (grid on B^N)."""

    def __init__(self, track: _GridTrack, partition: Partition, name="uc-large",
                 support: str | None = None, fraction: float = 1.0):
        super().__init__(track, name, support, fraction)
        self.partition = partition

    def allocation(self, comp_ledger):
        self.last_mask = self.mask()
        return allocation_distribution(self.track.grid, self.track.ledger, comp_ledger,
                                       self.partition, self.last_mask)


@dataclass
class EnsembleRun:
    """Per-period history of an engine run over T tradable periods."""

    names: list[str]
    component_names: list[str]
    log_wealth: dict[str, np.ndarray]  # length T+1, starting at 0
    returns: dict[str, np.ndarray]  # length T
    allocations: dict[str, np.ndarray]  # T x k
    portfolios: dict[str, np.ndarray]  # T x m
    support_sizes: dict[str, np.ndarray] = field(default_factory=dict)
    grid_max_log: np.ndarray | None = None  # T+1, benchmark on the B^k grid
    grid_argmax: np.ndarray | None = None  # T+1 grid indices
    grid: SimplexGrid | None = None
    rep_grid_max_log: np.ndarray | None = None
    epsilon: np.ndarray | None = None  # T+1, from S_n of the components
    partition: Partition | None = None
    rep_grid: SimplexGrid | None = None

    @property
    def horizon(self) -> int:
        return len(next(iter(self.returns.values())))


class Engine:
    """Drives ensembles period by period over precomputed component portfolios.

    ``comp_portfolios`` has shape (T, k, m) and ``asset_returns`` (T, m); both
    start at the first tradable period so every ledger starts from S_0 = 1.
    """

    def __init__(self, comp_portfolios, asset_returns, component_names=None):
        C = np.asarray(comp_portfolios, dtype=float)
        X = np.asarray(asset_returns, dtype=float)
        if C.ndim != 3 or X.ndim != 2 or C.shape[0] != X.shape[0] or C.shape[2] != X.shape[1]:
            raise ConfigError(f"component portfolios {C.shape} do not match returns {X.shape}")
        if not np.all(X > 0):
            raise DataError("asset returns must be strictly positive")
        self.C, self.X = C, X
        self.T, self.k, self.m = C.shape
        self.component_names = list(component_names or [f"c{a}" for a in range(self.k)])
        if len(self.component_names) != self.k:
            raise ConfigError("need one name per component")
        self.ensembles: list[Ensemble] = []
        self.small_track: _GridTrack | None = None
        self.rep_track: _GridTrack | None = None
        self.partition: Partition | None = None

    def _small(self, grid):
        if self.small_track is None:
            if grid is None:
                raise ConfigError("a grid over B^k is required")
            if grid.dim != self.k:
                raise ConfigError(f"grid over B^{grid.dim} but {self.k} components")
            self.small_track = _GridTrack(grid)
        elif grid is not None and grid is not self.small_track.grid:
            raise ConfigError("all small-scale ensembles must share one grid")
        return self.small_track

    def track_grid(self, grid: SimplexGrid):
        """Track the B^k grid for benchmark/lambda output without adding a strategy."""
        self._small(grid)
        return self

    def add_uc(self, grid=None, name="uc", support=None, fraction=1.0):
        self.ensembles.append(UC(self._small(grid), name, support, fraction))
        return self

    def add_uc_large(self, partition: Partition, grid: SimplexGrid | None = None, name="uc-large",
                     support=None, fraction=1.0):
        if partition.k != self.k:
            raise PartitionError(f"partition covers {partition.k} components, engine has {self.k}")
        if self.rep_track is None:
            if grid is None or grid.dim != partition.N:
                raise ConfigError(f"uc-large needs a grid over B^{partition.N}")
            self.rep_track = _GridTrack(grid)
            self.partition = partition
        elif partition.base_sets != self.partition.base_sets:
            raise ConfigError("all large-scale ensembles must share one partition")
        self.ensembles.append(UCLarge(self.rep_track, self.partition, name, support, fraction))
        return self

    def add_wae(self, name="wae"):
        self.ensembles.append(WAE(name))
        return self

    def add_fl(self, name="fl"):
        self.ensembles.append(FL(name))
        return self

    def run(self) -> EnsembleRun:
        T, k = self.T, self.k
        names = [e.name for e in self.ensembles]
        if len(set(names)) != len(names) or set(names) & set(self.component_names):
            raise ConfigError(f"strategy names must be unique: {names}")
        comp = WealthLedger.fresh(k)
        comp_returns = (self.C * self.X[:, None, :]).sum(axis=2)  # T x k

        log_w = {n: np.zeros(T + 1) for n in names}
        rets = {n: np.empty(T) for n in names}
        allocs = {n: np.empty((T, k)) for n in names}
        ports = {n: np.empty((T, self.m)) for n in names}
        sizes = {e.name: np.empty(T, dtype=np.int64) for e in self.ensembles if isinstance(e, UC)}

        track, rtrack = self.small_track, self.rep_track
        if track is not None:
            gmax = np.zeros(T + 1)
            garg = np.zeros(T + 1, dtype=np.int64)
        if rtrack is not None:
            rmax = np.zeros(T + 1)
            eps = np.empty(T + 1)
            eps[0] = epsilon_n(self.partition, comp.log_wealth)

        for t in range(T):
            Cn, xn, rn = self.C[t], self.X[t], comp_returns[t]
            for e in self.ensembles:
                a = e.allocation(comp)
                b = (a[:, None] * Cn).sum(axis=0)
                r = float((b * xn).sum())
                if not r > 0:
                    raise DataError(f"{e.name}: non-positive portfolio return at period {t + 1}")
                allocs[e.name][t] = a
                ports[e.name][t] = b
                rets[e.name][t] = r
                log_w[e.name][t + 1] = log_w[e.name][t] + math.log(r)
                if e.name in sizes:
                    sizes[e.name][t] = len(e.track.grid) if e.last_mask is None else len(e.last_mask.included)
            # representative returns use within-set weights from S_{n-1}
            if rtrack is not None:
                rep_r = (inner_weights(self.partition, comp) * rn).sum(axis=1)
                rtrack.commit(rep_r)
            if track is not None:
                track.commit(rn)
                lw = track.ledger.log_wealth
                garg[t + 1] = int(np.argmax(lw))
                gmax[t + 1] = lw[garg[t + 1]]
            comp = WealthLedger(comp.log_wealth + np.log(rn), comp.period + 1)
            if rtrack is not None:
                rmax[t + 1] = rtrack.ledger.log_wealth.max()
                eps[t + 1] = epsilon_n(self.partition, comp.log_wealth)

        comp_log = np.vstack([np.zeros(k), np.cumsum(np.log(comp_returns), axis=0)])
        for a, cname in enumerate(self.component_names):
            log_w[cname] = comp_log[:, a]
            rets[cname] = comp_returns[:, a]
        out = EnsembleRun(names=names, component_names=self.component_names, log_wealth=log_w,
                          returns=rets, allocations=allocs, portfolios=ports, support_sizes=sizes)
        if track is not None:
            out.grid, out.grid_max_log, out.grid_argmax = track.grid, gmax, garg
        if rtrack is not None:
            out.rep_grid, out.rep_grid_max_log, out.epsilon = rtrack.grid, rmax, eps
            out.partition = self.partition
        return out

