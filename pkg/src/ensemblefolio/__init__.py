"""Online ensembles of portfolio strategies via universal combinations."""

__version__ = "0.1.0"

from .errors import (CapacityError, ConfigError, DataError, DomainError, EnsembleError,
                     IngestionError, PartitionError, SupportError)
from .market_data import PriceSeries, ReturnSeries, load_prices, load_returns, prices_to_returns, synth_returns
from .simplex_grid import SimplexGrid, enumerate_grid, grid_point_count, union_grid
from .strategies import mv_portfolio, project_simplex, rolling_estimates
from .ensemble import Engine, EnsembleRun, Partition, WealthLedger
from .analysis import metrics, MetricsReport

__all__ = [
    "CapacityError", "ConfigError", "DataError", "DomainError", "EnsembleError", "IngestionError",
    "PartitionError", "SupportError", "PriceSeries", "ReturnSeries", "load_prices", "load_returns",
    "prices_to_returns", "synth_returns", "SimplexGrid", "enumerate_grid", "grid_point_count",
    "union_grid", "mv_portfolio", "project_simplex", "rolling_estimates", "Engine", "EnsembleRun",
    "Partition", "WealthLedger", "metrics", "MetricsReport",
]
