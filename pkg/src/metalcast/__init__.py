"""Real-time metal price forecasting: vintages, nowcasts, direct forecasts, MCS, pooling."""

__version__ = "0.1.0"
