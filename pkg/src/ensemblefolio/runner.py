"""End-to-end experiment pipeline and the checks run on its outputs."""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (baseline_wealth, grid_bound, growth_gap_series, large_scale_bound, metrics,
                       small_scale_bound)
from .config import ExperimentConfig
from .ensemble import Engine, EnsembleRun, Partition
from .errors import CapacityError, ConfigError, DataError, InsufficientDataError
from .market_data import (ReturnSeries, SynthRegime, business_dates, load_prices, load_returns,
                          prices_to_returns, synth_returns)
from .simplex_grid import DEFAULT_CAP, enumerate_grid, grid_memory_bytes, grid_point_count
from .strategies import component_portfolios

OUTPUT_FILES = ("wealth.csv", "metrics.json", "allocations.csv", "lambda_best.csv", "gaps.csv", "bounds.csv")

# reference log-wealth that each bounded strategy is measured against in gaps.csv
BOUND_REFERENCE = {"uc": "benchmark.log", "uc-large": "baseline.log"}
BOUND_SLACK = 1e-12
INTEGRITY_TOL = 1e-9


@dataclass
class RunManifest:
    out_dir: Path
    config_hash: str
    engine_version: str
    files: dict[str, Path]
    timings: dict[str, float] = field(default_factory=dict)
    strategies: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "config_sha256": self.config_hash,
            "engine_version": self.engine_version,
            "files": {k: p.name for k, p in self.files.items()},
            "strategies": self.strategies,
            "timings_s": {k: round(v, 4) for k, v in self.timings.items()},
        }


def _fmt(v) -> str:
    return repr(float(v))


def _pct(p: float) -> str:
    return f"{p * 100:g}"


def component_name(alpha: float) -> str:
    return f"mv_{alpha:g}"


def load_data(cfg: ExperimentConfig) -> ReturnSeries:
    data = cfg.data
    if data.get("path"):
        path = Path(data["path"])
        if data["kind"] == "prices":
            return prices_to_returns(load_prices(path))
        return load_returns(path)
    s = data["synth"]
    regime = SynthRegime.from_dict(s.get("regime") or {})
    try:
        m, T, seed = int(s["assets"]), int(s["periods"]), int(s.get("seed", cfg.seed))
    except (KeyError, TypeError, ValueError):
        raise ConfigError("data.synth needs integer assets and periods") from None
    r = synth_returns(m, T, regime, seed=seed)
    return ReturnSeries(returns=r.returns, symbols=r.symbols, dates=business_dates(T))


def _build_partition(cfg: ExperimentConfig, k: int) -> Partition:
    large = cfg.large
    sets = [tuple(s) for s in large["partition"]]
    masses = large.get("masses", "uniform")
    part = Partition(tuple(sets), () if masses == "uniform" else tuple(masses))
    if part.k != k:
        raise ConfigError(f"partition covers {part.k} components but {k} alphas are configured")
    return part


def build_engine(cfg: ExperimentConfig, comps, X, names) -> Engine:
    k = len(names)
    eng = Engine(comps, X, names)
    small_kinds = {"uc", "ucw", "ucl"} & set(cfg.kinds)
    count = grid_point_count(k, cfg.step_den)
    if small_kinds or count <= cfg.grid_cap:
        # the B^k grid also feeds the benchmark and lambda trajectory outputs
        eng.track_grid(enumerate_grid(k, cfg.step_den, cfg.grid_cap))
    for kind in cfg.kinds:
        if kind == "uc":
            eng.add_uc()
        elif kind == "wae":
            eng.add_wae()
        elif kind == "fl":
            eng.add_fl()
        elif kind in ("ucw", "ucl"):
            rule = "winners" if kind == "ucw" else "losers"
            for p in cfg.fractions[kind]:
                eng.add_uc(name=f"{kind}_{_pct(p)}", support=rule, fraction=p)
        elif kind == "uc-large":
            part = _build_partition(cfg, k)
            grid = enumerate_grid(part.N, int(cfg.large["step_den"]), cfg.grid_cap)
            eng.add_uc_large(part, grid)
            for sub, rule in (("ucw", "winners"), ("ucl", "losers")):
                for p in cfg.large["fractions"][sub]:
                    eng.add_uc_large(part, name=f"uc-large-{sub[-1]}_{_pct(p)}", support=rule, fraction=p)
    return eng


def _write_csv(path: Path, header, rows):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_outputs(res: EnsembleRun, labels, out: Path) -> dict[str, Path]:
    T = res.horizon
    strategies = res.component_names + res.names
    files = {name: out / name for name in OUTPUT_FILES}

    # wealth.csv: linear wealth is derived from the log column at write time
    cols = []
    header = ["period", "label"]
    for s in strategies:
        header += [f"{s}.log", f"{s}.S"]
        lw = res.log_wealth[s]
        cols += [lw, np.exp(lw)]
    _write_csv(files["wealth.csv"], header,
               ([n, labels[n], *(_fmt(c[n]) for c in cols)] for n in range(T + 1)))

    report = {s: metrics(res.log_wealth[s][1:], res.returns[s]).to_dict() for s in strategies}
    files["metrics.json"].write_text(json.dumps(report, indent=2, allow_nan=False) + "\n")

    rows = []
    for n in range(T):
        for e in res.names:
            size = res.support_sizes.get(e)
            rows.append([n + 1, labels[n + 1], e, "" if size is None else int(size[n]),
                         *(_fmt(a) for a in res.allocations[e][n])])
    _write_csv(files["allocations.csv"], ["period", "label", "strategy", "support", *res.component_names], rows)

    if res.grid is not None:
        pts = res.grid.points
        _write_csv(files["lambda_best.csv"],
                   ["period", "label", "grid_index", *(f"lambda.{c}" for c in res.component_names), "log_S"],
                   ([n, labels[n], int(res.grid_argmax[n]), *(_fmt(v) for v in pts[res.grid_argmax[n]]),
                     _fmt(res.grid_max_log[n])] for n in range(1, T + 1)))
    else:
        _write_csv(files["lambda_best.csv"], ["period", "label", "grid_index", "log_S"], [])

    comp_log = np.column_stack([res.log_wealth[c] for c in res.component_names])[1:]
    base = baseline_wealth(comp_log)
    gcols = {"baseline.log": base}
    if res.grid is not None:
        bench = res.grid_max_log[1:]
        gcols["benchmark.log"] = bench
        gcols["W.benchmark-W.baseline"] = growth_gap_series(bench, base).gap
    for e in res.names:
        le = res.log_wealth[e][1:]
        gcols[f"W.baseline-W.{e}"] = growth_gap_series(base, le).gap
        if res.grid is not None:
            gcols[f"W.benchmark-W.{e}"] = growth_gap_series(bench, le).gap
    _write_csv(files["gaps.csv"], ["period", "label", *gcols],
               ([n, labels[n], *(_fmt(c[n - 1]) for c in gcols.values())] for n in range(1, T + 1)))

    n = np.arange(1, T + 1)
    k = len(res.component_names)
    bcols = {}
    if "uc" in res.names:
        bcols["uc.gap"] = res.grid_max_log[1:] - res.log_wealth["uc"][1:]
        bcols["uc.bound"] = np.full(T, grid_bound(len(res.grid)))
        bcols["uc.continuous_bound"] = small_scale_bound(k, n) * np.ones(T)
        bcols["uc.stricter_bound"] = np.minimum(bcols["uc.bound"], bcols["uc.continuous_bound"])
    if "uc-large" in res.names:
        eps = res.epsilon[1:]
        N = res.partition.N
        bcols["uc-large.gap"] = base - res.log_wealth["uc-large"][1:]
        bcols["uc-large.epsilon"] = eps
        bcols["uc-large.bound"] = large_scale_bound(N, n, eps) * np.ones(T)
        bcols["uc-large.grid_bound"] = grid_bound(len(res.rep_grid)) - np.log(eps)
    _write_csv(files["bounds.csv"], ["period", *bcols],
               ([i, *(_fmt(c[i - 1]) for c in bcols.values())] for i in range(1, T + 1)))
    return files


def run(cfg: ExperimentConfig, out_dir=None) -> RunManifest:
    timings = {}
    t0 = time.perf_counter()
    series = load_data(cfg)
    x = series.returns
    T_all, m = x.shape
    if T_all <= cfg.burn_in + 1:
        raise InsufficientDataError(f"{T_all} return rows leave fewer than two periods after burn-in {cfg.burn_in}")
    timings["load"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    comps = component_portfolios(x, cfg.alphas, cfg.window, cfg.solver_tol)
    comps = comps[cfg.burn_in - cfg.window:]
    X = x[cfg.burn_in:]
    names = [component_name(a) for a in cfg.alphas]
    timings["components"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    res = build_engine(cfg, comps, X, names).run()
    timings["ensembles"] = time.perf_counter() - t0

    dates = series.dates or business_dates(T_all)
    labels = list(dates[cfg.burn_in - 1:])  # label of period n is the date of its return row

    out = Path(out_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    files = write_outputs(res, labels, out)
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2) + "\n")
    timings["write"] = time.perf_counter() - t0

    manifest = RunManifest(out_dir=out, config_hash=cfg.digest(), engine_version=__version__,
                           files=files, timings=timings,
                           strategies=res.component_names + res.names)
    (out / "manifest.json").write_text(json.dumps(manifest.to_dict(), indent=2) + "\n")
    return manifest


# --- post-run checks -------------------------------------------------------


def read_columns(path: Path) -> dict[str, list[str]]:
    if not path.is_file():
        raise DataError(f"missing run output {path}")
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path} is empty")
    header, body = rows[0], rows[1:]
    return {h: [r[i] for r in body] for i, h in enumerate(header)}


def _floats(values) -> np.ndarray:
    try:
        return np.array([float(v) for v in values], dtype=float)
    except ValueError as exc:
        raise DataError(f"unparseable number in run output: {exc}") from None


@dataclass
class BoundCheckReport:
    passed: bool
    lines: list[str]


def bound_check(run_dir) -> BoundCheckReport:
    """Check every ``<name>.gap`` column of bounds.csv against ``<name>.bound``.

    Gaps are also recomputed from wealth.csv and gaps.csv, so edits to any of
    the three files that raise a gap or hide one are caught.
    """
    run_dir = Path(run_dir)
    bounds = read_columns(run_dir / "bounds.csv")
    wealth = read_columns(run_dir / "wealth.csv")
    gaps = read_columns(run_dir / "gaps.csv")
    lines, ok = [], True
    names = [h[:-4] for h in bounds if h.endswith(".gap")]
    if not names:
        lines.append("no bounded strategies in this run: nothing to check")
    for name in names:
        if f"{name}.bound" not in bounds:
            raise DataError(f"bounds.csv has {name}.gap but no {name}.bound")
        gap = _floats(bounds[f"{name}.gap"])
        bound = _floats(bounds[f"{name}.bound"])
        ref_col = BOUND_REFERENCE.get(name)
        if ref_col is None or ref_col not in gaps or f"{name}.log" not in wealth:
            raise DataError(f"cannot locate the wealth series behind {name}.gap")
        ref = _floats(gaps[ref_col])
        own = _floats(wealth[f"{name}.log"])[1:]
        if not (ref.size == own.size == gap.size):
            raise DataError(f"{name}: run outputs disagree on the number of periods")
        recomputed = ref - own
        drift = float(np.max(np.abs(recomputed - gap))) if gap.size else 0.0
        viol = np.flatnonzero(np.maximum(gap, recomputed) > bound + BOUND_SLACK)
        margin = float(np.min(bound - np.maximum(gap, recomputed))) if gap.size else math.inf
        if drift > INTEGRITY_TOL:
            ok = False
            lines.append(f"FAIL {name}: bounds.csv gap differs from wealth/gaps files by {drift:.3e}")
        if viol.size:
            ok = False
            lines.append(f"FAIL {name}: gap exceeds bound at {viol.size} periods, first n={viol[0] + 1}")
        elif drift <= INTEGRITY_TOL:
            lines.append(f"PASS {name}: gap <= bound for all {gap.size} periods (min margin {margin:.6g})")
        if f"{name}.continuous_bound" in bounds:
            cont = _floats(bounds[f"{name}.continuous_bound"])
            held = int(np.sum(gap <= cont + BOUND_SLACK))
            lines.append(f"info {name}: gap <= (k-1)log(n+1) at {held}/{gap.size} periods")
    return BoundCheckReport(ok, lines)


def grid_info(k: int, step_den: int, cap: int = DEFAULT_CAP) -> str:
    count = grid_point_count(k, step_den)
    mem = grid_memory_bytes(k, step_den)
    line = f"k={k} step_den={step_den} points={count} memory_bytes={mem} ({mem / 2**20:.3f} MiB)"
    if count > cap:
        raise CapacityError(f"{line} exceeds the cap of {cap} points", count=count)
    return line
