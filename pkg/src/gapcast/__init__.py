"""Supply-demand gap forecasting from imaged time series with a residual CNN."""

__version__ = "0.1.0"
