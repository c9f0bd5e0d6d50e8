"""Spatio-temporal spectrum demand forecasting from crowdsourced KPIs."""

__version__ = "0.1.0"
