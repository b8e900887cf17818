"""Component strategies: rolling Mean-Variance portfolios over the simplex."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, EstimatorError, InsufficientDataError

SIMPLEX_ATOL = 1e-12
PSD_TOL = 1e-10
MAX_ITER = 10_000


def check_portfolio(b, atol: float = SIMPLEX_ATOL) -> np.ndarray:
    """Return ``b`` as a float array, raising if it is not on the simplex."""
    b = np.asarray(b, dtype=float)
    if b.ndim != 1 or b.size == 0:
        raise ConfigError("portfolio must be a non-empty vector")
    if np.any(b < 0) or abs(b.sum() - 1.0) > atol:
        raise ConfigError(f"not a simplex point: {b}")
    return b


def is_portfolio(b, atol: float = SIMPLEX_ATOL) -> bool:
    b = np.asarray(b, dtype=float)
    return bool(b.ndim == 1 and np.all(b >= 0) and abs(b.sum() - 1.0) <= atol)


@dataclass(frozen=True)
class RollingEstimates:
    mean: np.ndarray
    cov: np.ndarray
    window: int

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        cov = np.asarray(self.cov, dtype=float)
        m = mean.shape[0]
        if mean.ndim != 1 or cov.shape != (m, m):
            raise ConfigError(f"mean {mean.shape} and cov {cov.shape} disagree")
        if not np.allclose(cov, cov.T, rtol=0, atol=1e-12):
            raise EstimatorError("covariance is not symmetric")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)


@dataclass(frozen=True)
class MVConfig:
    alpha: float
    window: int = 20
    solver_tol: float = 1e-10

    def __post_init__(self):
        if not self.alpha >= 0:
            raise ConfigError(f"risk aversion must be >= 0, got {self.alpha}")
        if self.window < 2:
            raise ConfigError(f"window must be >= 2, got {self.window}")


def _window(r, n: int, J: int) -> np.ndarray:
    x = r.returns if hasattr(r, "returns") else np.asarray(r, dtype=float)
    if J < 1 or n <= J:
        raise InsufficientDataError(f"period n={n} needs more than J={J} past rows")
    if n - 1 > x.shape[0]:
        raise InsufficientDataError(f"period n={n} beyond {x.shape[0]} rows")
    # periods are 1-based: rows n-J .. n-1 are 0-based n-1-J .. n-2
    return x[n - 1 - J:n - 1]


def rolling_mean(r, n: int, J: int) -> np.ndarray:
    return _window(r, n, J).mean(axis=0)


def rolling_cov(r, n: int, J: int) -> np.ndarray:
    if J < 2:
        raise InsufficientDataError("covariance needs a window of at least 2")
    w = _window(r, n, J)
    d = w - w.mean(axis=0)
    c = d.T @ d / (J - 1)
    return 0.5 * (c + c.T)


def rolling_estimates(r, n: int, J: int) -> RollingEstimates:
    return RollingEstimates(rolling_mean(r, n, J), rolling_cov(r, n, J), J)


def project_simplex(v) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort and threshold)."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise ConfigError("cannot project an empty vector")
    if not np.all(np.isfinite(v)):
        raise ConfigError("cannot project a non-finite vector")
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, v.size + 1)
    rho = np.count_nonzero(u - css / ind > 0)
    theta = css[rho - 1] / rho
    return np.maximum(v - theta, 0.0)


def mv_objective(b, mean, cov, alpha: float):
    """alpha*<b, mean> - <b, cov b>, vectorised over rows of ``b``."""
    b = np.asarray(b, dtype=float)
    if b.ndim == 1:
        return alpha * float(b @ mean) - float(b @ cov @ b)
    return alpha * (b * mean).sum(axis=1) - ((b @ cov) * b).sum(axis=1)


def _kkt_polish(g, cov, support, scale):
    """Solve the equality-constrained problem on ``support`` and verify KKT.

    Returns the exact optimum if ``support`` is the optimal support, else None.
    """
    s = np.flatnonzero(support)
    m = g.size
    k = s.size
    A = np.zeros((k + 1, k + 1))
    A[:k, :k] = 2.0 * cov[np.ix_(s, s)]
    A[:k, k] = 1.0
    A[k, :k] = 1.0
    rhs = np.append(g[s], 1.0)
    try:
        sol = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(sol)):
        return None
    bs, nu = sol[:k], sol[k]
    tol = 1e-12 * scale
    if np.any(bs < -1e-12):
        return None
    b = np.zeros(m)
    b[s] = np.maximum(bs, 0.0)
    b /= b.sum()
    grad = g - 2.0 * cov @ b
    off = np.ones(m, dtype=bool)
    off[s] = False
    if np.any(grad[off] > nu + tol):
        return None
    return b


def mv_portfolio(est: RollingEstimates, alpha: float, tol: float = 1e-10,
                 support_hint=None, max_iter: int = MAX_ITER) -> np.ndarray:
    """Maximise alpha*<b, mean> - <b, cov b> over the simplex.

    Accelerated projected gradient (FISTA with monotone restart) with step
    1/(2*lambda_max + eps), stopped when the objective improves by less than
    ``tol``. Iterates are periodically polished by solving the KKT system on
    the current support, which returns the exact optimum once the support is
    identified. ``support_hint`` (e.g. the previous period's support) is tried
    first and only changes speed, not the result.
    """
    if not alpha >= 0:
        raise ConfigError(f"risk aversion must be >= 0, got {alpha}")
    mu, cov = est.mean, est.cov
    m = mu.size
    eig = np.linalg.eigvalsh(cov)
    if eig[0] < -PSD_TOL:
        raise EstimatorError(f"covariance not PSD (min eigenvalue {eig[0]:.3e})")
    lam_max = max(eig[-1], 0.0)
    g = alpha * mu

    if lam_max <= PSD_TOL:
        # linear objective: split equally over the maximisers of alpha*mu
        if alpha == 0:
            return np.full(m, 1.0 / m)
        top = g >= g.max() - 1e-15 * max(1.0, abs(g.max()))
        return top / top.sum()

    scale = max(1.0, np.abs(g).max(), 2.0 * lam_max)
    if support_hint is not None:
        hint = np.asarray(support_hint, dtype=bool)
        if hint.shape == (m,) and hint.any():
            b = _kkt_polish(g, cov, hint, scale)
            if b is not None:
                return b

    step = 1.0 / (2.0 * lam_max + 1e-12)
    b = np.full(m, 1.0 / m)
    f = mv_objective(b, mu, cov, alpha)
    y, t = b.copy(), 1.0
    stalled = 0
    for it in range(1, max_iter + 1):
        b_new = project_simplex(y + step * (g - 2.0 * cov @ y))
        f_new = mv_objective(b_new, mu, cov, alpha)
        if f_new < f:
            # non-monotone FISTA step: restart momentum from the last iterate
            t = 1.0
            b_new = project_simplex(b + step * (g - 2.0 * cov @ b))
            f_new = mv_objective(b_new, mu, cov, alpha)
        improvement = f_new - f
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y = b_new + ((t - 1.0) / t_new) * (b_new - b)
        b, f, t = b_new, max(f, f_new), t_new
        stalled = stalled + 1 if improvement < tol else 0
        if it % 25 == 0 or stalled:
            polished = _kkt_polish(g, cov, b > 0, scale)
            if polished is not None:
                return polished
            if stalled >= 10:
                break
    return b


def mv_grid_oracle(est: RollingEstimates, alpha: float, grid) -> np.ndarray:
    """Best grid point for the M-V objective; ties go to the lowest index."""
    pts = grid.points
    if pts.shape[1] != est.mean.size:
        raise ConfigError(f"grid dimension {pts.shape[1]} != {est.mean.size} assets")
    vals = mv_objective(pts, est.mean, est.cov, alpha)
    return pts[int(np.argmax(vals))].copy()


def portfolio_return(b, x) -> float:
    b = np.asarray(b, dtype=float)
    x = np.asarray(x, dtype=float)
    if b.shape != x.shape:
        raise ConfigError(f"portfolio {b.shape} and return row {x.shape} disagree")
    return float((b * x).sum())


def thread_count(default: int | None = None) -> int:
    env = os.environ.get("ENSEMBLEFOLIO_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(f"ENSEMBLEFOLIO_THREADS must be an integer, got {env!r}") from None
        return max(1, n)
    return default or 1


def mv_path(returns, alpha: float, window: int = 20, tol: float = 1e-10) -> np.ndarray:
    """M-V portfolios for every tradable period n = J+1..T, shape (T-J, m)."""
    x = returns.returns if hasattr(returns, "returns") else np.asarray(returns, dtype=float)
    T, m = x.shape
    if T <= window:
        raise InsufficientDataError(f"{T} return rows leave no tradable period after a {window}-row burn-in")
    out = np.empty((T - window, m))
    hint = None
    for i, n in enumerate(range(window + 1, T + 1)):
        est = rolling_estimates(x, n, window)
        b = mv_portfolio(est, alpha, tol, support_hint=hint)
        out[i] = b
        hint = b > 0
    return out


def component_portfolios(returns, alphas, window: int = 20, tol: float = 1e-10,
                         threads: int | None = None) -> np.ndarray:
    """Stack M-V paths for each risk aversion: shape (T-J, k, m).

    Each alpha is an independent sequential job, so the worker count has no
    effect on the output.
    """
    alphas = [float(a) for a in alphas]
    if not alphas:
        raise ConfigError("need at least one risk aversion level")
    for a in alphas:
        MVConfig(alpha=a, window=window, solver_tol=tol)
    workers = min(threads or thread_count(), len(alphas))
    if workers <= 1:
        paths = [mv_path(returns, a, window, tol) for a in alphas]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            paths = list(pool.map(lambda a: mv_path(returns, a, window, tol), alphas))
    return np.stack(paths, axis=1)
