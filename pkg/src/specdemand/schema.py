"""Column layouts of the stage files and the shared exception types."""

KPI_NAMES = (
    "traffic_volume",
    "latency_ratio",
    "tx_rx_ratio",
    "norm_connections",
    "signal_strength",
    "jitter_variability",
    "sum_throughput",
)

SAMPLE_COLUMNS = (
    "device_id", "timestamp", "lat", "lon", "band", "ul_mbps", "dl_mbps",
    "latency_ms", "jitter_ms", "bytes_tx", "bytes_rx", "signal_dbm", "connections",
)

REGULATORY_COLUMNS = ("site_id", "lat", "lon", "band", "deployed_bw_mhz", "effective_from")

CELL_COLUMNS = (
    "row", "col", "band", "window",
    "avg_ul", "avg_dl", "min_latency", "mean_latency", "avg_jitter", "min_jitter",
    "sum_bytes_tx", "sum_bytes_rx", "mean_signal", "connection_count",
    "unique_devices", "sample_count",
)

PROXY_COLUMNS = ("row", "col", "window", "deployed_bw_mhz")

CLEANSING_LOG_COLUMNS = ("key", "window", "action", "before", "after")

CORRELATION_COLUMNS = ("kpi", "lag", "pearson", "n")

METRICS_COLUMNS = ("model", "scenario", "rmse", "nrmse", "r2", "accuracy")

TRANSFER_COLUMNS = (
    "source", "target", "target_fraction", "seed", "nrmse_with", "nrmse_without", "reduction",
)


def lag_column(kpi, lag):
    return f"{kpi}_lag{lag}"


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending entry."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message


class OutOfExtentError(ValueError):
    pass


class SchemaError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    """Iterative solver hit ``max_iter``; ``model`` carries the last iterate."""

    def __init__(self, message, model=None):
        super().__init__(message)
        self.model = model
