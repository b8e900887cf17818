"""Price/return ingestion and synthetic return generation."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, IngestionError, InsufficientDataError


@dataclass(frozen=True)
class PriceSeries:
    dates: tuple[str, ...]
    prices: np.ndarray
    symbols: tuple[str, ...]

    def __post_init__(self):
        p = np.asarray(self.prices, dtype=float)
        if p.ndim != 2 or p.shape[1] < 2:
            raise ConfigError(f"prices must be T x m with m >= 2, got shape {p.shape}")
        if p.shape[0] != len(self.dates) or p.shape[1] != len(self.symbols):
            raise ConfigError("dates/symbols do not match price matrix shape")
        if not np.all(p > 0):
            raise IngestionError("all prices must be > 0")
        p.setflags(write=False)
        object.__setattr__(self, "prices", p)

    @property
    def shape(self) -> tuple[int, int]:
        return self.prices.shape


@dataclass(frozen=True)
class ReturnSeries:
    """Gross returns x_n (price ratios), one row per period."""

    returns: np.ndarray
    symbols: tuple[str, ...]
    dates: tuple[str, ...] | None = None

    def __post_init__(self):
        r = np.asarray(self.returns, dtype=float)
        if r.ndim != 2 or r.shape[1] < 2:
            raise ConfigError(f"returns must be T x m with m >= 2, got shape {r.shape}")
        if r.shape[1] != len(self.symbols):
            raise ConfigError("symbols do not match return matrix width")
        if self.dates is not None and len(self.dates) != r.shape[0]:
            raise ConfigError("dates do not match return matrix length")
        if not np.all(np.isfinite(r)) or not np.all(r > 0):
            raise IngestionError("all gross returns must be finite and > 0")
        r.setflags(write=False)
        object.__setattr__(self, "returns", r)

    def __len__(self):
        return self.returns.shape[0]

    @property
    def m(self) -> int:
        return self.returns.shape[1]


def _read_table(path, value_name: str):
    path = Path(path)
    if not path.is_file():
        raise IngestionError(f"file not found: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestionError("empty file", row=1) from None
        header = [h.strip() for h in header]
        if len(header) < 3 or header[0].lower() != "date":
            raise IngestionError("header must be 'date' followed by at least two symbols", row=1)
        symbols = tuple(header[1:])
        if len(set(symbols)) != len(symbols):
            raise IngestionError("duplicate symbol in header", row=1)

        rows: dict[str, list[float]] = {}
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise IngestionError(f"expected {len(header)} fields, got {len(rec)}", row=lineno)
            date = rec[0].strip()
            if not date:
                raise IngestionError("missing date", row=lineno)
            if date in rows:
                raise IngestionError(f"duplicate date {date!r}", row=lineno)
            values = []
            for sym, cell in zip(symbols, rec[1:]):
                try:
                    v = float(cell)
                except ValueError:
                    raise IngestionError(f"unparseable {value_name} {cell!r} for {sym}", row=lineno) from None
                if not math.isfinite(v) or v <= 0:
                    raise IngestionError(f"non-positive {value_name} {cell!r} for {sym}", row=lineno)
                values.append(v)
            rows[date] = values
    if not rows:
        raise IngestionError("no data rows", row=2)
    # ISO-8601 labels sort chronologically as strings; no calendar parsing
    dates = tuple(sorted(rows))
    return dates, np.array([rows[d] for d in dates], dtype=float), symbols


def load_prices(path) -> PriceSeries:
    """Read a ``date,SYM1,SYM2,...`` price CSV into a :class:`PriceSeries`."""
    dates, prices, symbols = _read_table(path, "price")
    return PriceSeries(dates=dates, prices=prices, symbols=symbols)


def load_returns(path) -> ReturnSeries:
    """Read a CSV with the price layout whose cells are already gross returns."""
    dates, returns, symbols = _read_table(path, "return")
    return ReturnSeries(returns=returns, symbols=symbols, dates=dates)


def prices_to_returns(p: PriceSeries) -> ReturnSeries:
    if p.prices.shape[0] < 2:
        raise InsufficientDataError("need at least two price rows to form a return")
    r = p.prices[1:] / p.prices[:-1]
    return ReturnSeries(returns=r, symbols=p.symbols, dates=p.dates[1:])


@dataclass(frozen=True)
class SynthRegime:
    """Generator settings for :func:`synth_returns`.

    ``kind`` is ``"lognormal"`` (iid per asset) or ``"regime-switching"``,
    a two-state Markov chain alternating between a calm growth state and a
    turbulent state with ``vol_multiplier`` times the volatility and
    ``turbulent_drift`` as log drift.  Draws are clipped into ``band``.
    ``drift``/``vol`` are per-period log-return parameters, either one
    value for every asset or a sequence of length m.
    """

    kind: str = "lognormal"
    drift: float | tuple[float, ...] = 0.0004
    vol: float | tuple[float, ...] = 0.015
    band: tuple[float, float] = (0.8, 1.25)
    switch_prob: float = 0.01
    vol_multiplier: float = 3.0
    turbulent_drift: float = -0.0005
    spread: bool = True

    def __post_init__(self):
        lo, hi = self.band
        if not (lo > 0 and hi >= lo and math.isfinite(hi)):
            raise ConfigError(f"band must satisfy 0 < low <= high, got {self.band}")
        if self.kind not in ("lognormal", "regime-switching"):
            raise ConfigError(f"unknown regime kind {self.kind!r}")
        if not 0 <= self.switch_prob <= 1:
            raise ConfigError("switch_prob must lie in [0, 1]")

    @classmethod
    def from_dict(cls, d: dict) -> "SynthRegime":
        d = dict(d)
        for key in ("band", "drift", "vol"):
            if isinstance(d.get(key), list):
                d[key] = tuple(d[key])
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(f"bad synth regime: {exc}") from None


def _per_asset(value, m: int, spread: bool, scale: float) -> np.ndarray:
    if np.ndim(value) == 0:
        v = np.full(m, float(value))
        if spread and m > 1:
            # heterogeneous assets around the nominal value
            v = v * np.linspace(1.0 - scale, 1.0 + scale, m)
        return v
    v = np.asarray(value, dtype=float)
    if v.shape != (m,):
        raise ConfigError(f"expected {m} per-asset values, got {v.shape}")
    return v


def synth_returns(m: int, T: int, regime: SynthRegime | str | None = None, seed: int = 0,
                  symbols=None) -> ReturnSeries:
    if m < 2 or T < 1:
        raise ConfigError(f"need m >= 2 and T >= 1, got m={m}, T={T}")
    if regime is None:
        regime = SynthRegime()
    elif isinstance(regime, str):
        regime = SynthRegime(kind=regime)
    rng = np.random.default_rng(seed)
    drift = _per_asset(regime.drift, m, regime.spread, 0.5)
    vol = _per_asset(regime.vol, m, regime.spread, 0.5)

    z = rng.standard_normal((T, m))
    if regime.kind == "lognormal":
        logr = drift + vol * z
    else:
        flips = rng.random(T) < regime.switch_prob
        state = np.cumsum(flips) % 2  # 0 calm, 1 turbulent
        turbulent = state[:, None] == 1
        mu = np.where(turbulent, regime.turbulent_drift, drift)
        sd = np.where(turbulent, vol * regime.vol_multiplier, vol)
        logr = mu + sd * z
    lo, hi = regime.band
    r = np.clip(np.exp(logr), lo, hi)
    if symbols is None:
        symbols = tuple(f"A{j}" for j in range(m))
    return ReturnSeries(returns=r, symbols=tuple(symbols))


def business_dates(T: int, start: str = "2000-01-03") -> tuple[str, ...]:
    """ISO labels for T consecutive weekdays, used when a series has no dates."""
    days = np.busday_offset(np.datetime64(start, "D"), np.arange(T), roll="forward")
    return tuple(str(d) for d in days)


def write_returns_csv(series: ReturnSeries, path) -> None:
    dates = series.dates or business_dates(len(series))
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["date", *series.symbols])
        for d, row in zip(dates, series.returns):
            w.writerow([d, *(repr(float(v)) for v in row)])
