"""Deterministic synthetic crowdsourced samples and regulatory records.

Every tile carries seven latent AR(1) drivers, one per engineered KPI. Raw
sample fields are noisy transforms of those drivers, and the tile's deployed
bandwidth is a fixed linear combination of the drivers at the current and two
previous windows plus a seasonal sinusoid, a linear trend and Gaussian noise.
The generator therefore plants a known lag structure for the pipeline to find.
"""

from __future__ import annotations

import logging
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np
import pandas as pd

from .schema import KPI_NAMES, REGULATORY_COLUMNS, SAMPLE_COLUMNS, ConfigError
from .spatial import GridSpec

log = logging.getLogger(__name__)

N_KPI = len(KPI_NAMES)
MAX_LAG = 2
SEASON_PERIOD = 4

# RNG stream ids, combined with (seed, region, row, col, window)
_STREAM_DRIVERS = 0
_STREAM_SAMPLES = 1
_STREAM_PROXY = 2
_STREAM_SITES = 3


def radial_density(n_rows, n_cols, spread, floor=0.05, centre=None):
    """Density map peaking at ``centre`` (tile units) and decaying to ``floor``."""
    if centre is None:
        centre = ((n_rows - 1) / 2.0, (n_cols - 1) / 2.0)
    r, c = np.mgrid[0:n_rows, 0:n_cols]
    d2 = (r - centre[0]) ** 2 + (c - centre[1]) ** 2
    return floor + (1.0 - floor) * np.exp(-d2 / (2.0 * spread ** 2))


@dataclass(eq=False)
class RegionProfile:
    """Geography and volume of one synthetic region.

    The density map fixes the tile grid: its shape is (rows, cols) over the
    bounding box, and tiles must come out square in degrees.
    """

    name: str
    bbox: tuple  # (lat_min, lat_max, lon_min, lon_max)
    density_map: np.ndarray
    bands: tuple = ("700", "1900", "3500")
    years: tuple = (2019, 2023)
    samples_per_window: float = 40.0  # expected samples per full-density tile and window
    sites_per_tile: int = 2

    def __post_init__(self):
        self.bbox = tuple(float(v) for v in self.bbox)
        self.density_map = np.atleast_2d(np.asarray(self.density_map, dtype=float))
        self.bands = tuple(str(b) for b in self.bands)
        self.years = tuple(int(y) for y in self.years)
        self.validate()

    def validate(self):
        lat_min, lat_max, lon_min, lon_max = self.bbox
        if not lat_min < lat_max:
            raise ConfigError("bbox", "lat_min must be below lat_max")
        if not lon_min < lon_max:
            raise ConfigError("bbox", "lon_min must be below lon_max")
        if self.density_map.ndim != 2 or self.density_map.size == 0:
            raise ConfigError("density_map", "must be a non-empty 2-D grid")
        dm = self.density_map
        if not np.all(np.isfinite(dm)) or dm.min() < 0.0 or dm.max() > 1.0:
            raise ConfigError("density_map", "values must lie in [0, 1]")
        size_lat = (lat_max - lat_min) / self.n_rows
        size_lon = (lon_max - lon_min) / self.n_cols
        if size_lat <= 0 or size_lon <= 0:
            raise ConfigError("bbox", "zero-area tiles")
        if not np.isclose(size_lat, size_lon, rtol=1e-9, atol=0.0):
            raise ConfigError("density_map", "shape does not give square tiles over bbox")
        if not self.bands:
            raise ConfigError("bands", "at least one band required")
        if self.years[0] > self.years[1]:
            raise ConfigError("years", "start_year must not exceed end_year")
        if self.samples_per_window <= 0:
            raise ConfigError("samples_per_window", "must be positive")
        if self.sites_per_tile < 1:
            raise ConfigError("sites_per_tile", "must be at least 1")

    @property
    def n_rows(self):
        return self.density_map.shape[0]

    @property
    def n_cols(self):
        return self.density_map.shape[1]

    @property
    def tile_size_deg(self):
        return (self.bbox[1] - self.bbox[0]) / self.n_rows

    @property
    def n_windows(self):
        return SEASON_PERIOD * (self.years[1] - self.years[0] + 1)

    def grid(self):
        return GridSpec(self.bbox[0], self.bbox[2], self.tile_size_deg, self.n_rows, self.n_cols)

    def expected_sample_count(self):
        return float(self.samples_per_window * self.density_map.sum() * self.n_windows)

    def to_dict(self):
        return {
            "name": self.name,
            "bbox": list(self.bbox),
            "density_map": self.density_map.tolist(),
            "bands": list(self.bands),
            "years": list(self.years),
            "samples_per_window": self.samples_per_window,
            "sites_per_tile": self.sites_per_tile,
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        dm = d.get("density_map")
        if isinstance(dm, dict):
            # {"radial": {"n_rows": .., "n_cols": .., "spread": .., "floor": ..}}
            spec = dm.get("radial")
            if spec is None:
                raise ConfigError("density_map", "unknown density map generator")
            d["density_map"] = radial_density(**spec)
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError("profile", str(exc)) from None


@dataclass
class CouplingSpec:
    """How deployed bandwidth responds to the latent KPI drivers.

    Weights are MHz per unit (standard-normal) driver, keyed by KPI name;
    absent KPIs weigh zero.
    """

    weights_lag0: dict = field(default_factory=dict)
    weights_lag1: dict = field(default_factory=dict)
    weights_lag2: dict = field(default_factory=dict)
    noise_sigma: float = 2.0
    seasonal_amplitude: float = 0.5
    trend_per_quarter: float = 0.2
    base_bw_mhz: float = 120.0
    driver_ar: float = 0.3

    def __post_init__(self):
        self.validate()

    def validate(self):
        for name in ("weights_lag0", "weights_lag1", "weights_lag2"):
            w = getattr(self, name)
            unknown = set(w) - set(KPI_NAMES)
            if unknown:
                raise ConfigError(f"coupling.{name}", f"unknown KPI(s) {sorted(unknown)}")
            if not all(np.isfinite(float(v)) for v in w.values()):
                raise ConfigError(f"coupling.{name}", "weights must be finite")
        if not self.noise_sigma >= 0:
            raise ConfigError("coupling.noise_sigma", "must be >= 0")
        if not self.seasonal_amplitude >= 0:
            raise ConfigError("coupling.seasonal_amplitude", "must be >= 0")
        if not -1.0 < self.driver_ar < 1.0:
            raise ConfigError("coupling.driver_ar", "must lie in (-1, 1)")

    def weight_matrix(self):
        """(lag, kpi) array of coupling weights."""
        rows = (self.weights_lag0, self.weights_lag1, self.weights_lag2)
        return np.array([[float(w.get(k, 0.0)) for k in KPI_NAMES] for w in rows])

    def to_dict(self):
        return {
            "weights_lag0": dict(self.weights_lag0),
            "weights_lag1": dict(self.weights_lag1),
            "weights_lag2": dict(self.weights_lag2),
            "noise_sigma": self.noise_sigma,
            "seasonal_amplitude": self.seasonal_amplitude,
            "trend_per_quarter": self.trend_per_quarter,
            "base_bw_mhz": self.base_bw_mhz,
            "driver_ar": self.driver_ar,
        }

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError("coupling", str(exc)) from None


def default_coupling():
    """Lag-1 traffic dominated coupling with modest contributions elsewhere."""
    return CouplingSpec(
        weights_lag0={"tx_rx_ratio": 1.0, "norm_connections": 2.0,
                      "signal_strength": 1.5, "sum_throughput": 1.0},
        weights_lag1={"traffic_volume": 10.0, "latency_ratio": 2.0,
                      "norm_connections": 1.5, "sum_throughput": 1.0},
        weights_lag2={"traffic_volume": 3.0, "jitter_variability": 1.0},
    )


# KPIs whose cell aggregates track their driver closely
_WELL_MEASURED = ("traffic_volume", "tx_rx_ratio", "norm_connections", "signal_strength",
                  "latency_ratio", "jitter_variability")


def linear_coupling():
    """Equal additive weights on the well-measured KPIs, no season or trend."""
    return CouplingSpec(
        weights_lag0={k: 2.0 for k in _WELL_MEASURED},
        weights_lag1={k: 4.0 for k in _WELL_MEASURED},
        weights_lag2={k: 2.0 for k in _WELL_MEASURED},
        noise_sigma=0.5,
        seasonal_amplitude=0.0,
        trend_per_quarter=0.0,
    )


def builtin_couplings():
    return {"default": default_coupling(), "linear": linear_coupling()}


def get_coupling(name):
    try:
        return builtin_couplings()[name]
    except KeyError:
        raise ConfigError("coupling", f"no built-in coupling named {name!r}") from None


def builtin_profiles():
    """Preset regions: a small short-history market, a dense data-rich one, and a
    compact market for the linear scenario."""
    return [
        # smaller market with only three years of history
        RegionProfile(
            name="ottawa-like",
            bbox=(45.36, 45.41, -75.74, -75.69),
            density_map=radial_density(5, 5, spread=1.5, floor=0.08),
            samples_per_window=40.0,
            years=(2021, 2023),
        ),
        RegionProfile(
            name="toronto-like",
            bbox=(43.60, 43.72, -79.46, -79.34),
            density_map=radial_density(12, 12, spread=4.5, floor=0.15),
            samples_per_window=60.0,
        ),
        # small market with a short history: few rows per feature
        RegionProfile(
            name="compact-linear",
            bbox=(45.48, 45.53, -73.62, -73.57),
            density_map=radial_density(5, 5, spread=1.5, floor=0.3),
            samples_per_window=100.0,
            years=(2021, 2023),
        ),
    ]


def get_profile(name):
    for p in builtin_profiles():
        if p.name == name:
            return p
    raise ConfigError("regions", f"no built-in profile named {name!r}")


def window_starts(years):
    """UTC second at which each quarter starts, plus the end of the last one."""
    n = SEASON_PERIOD * (years[1] - years[0] + 1)
    out = []
    for i in range(n + 1):
        y, q = years[0] + i // SEASON_PERIOD, i % SEASON_PERIOD
        out.append(int(datetime(y, 1 + 3 * q, 1, tzinfo=timezone.utc).timestamp()))
    return np.array(out, dtype=np.int64)


@dataclass
class GeneratedRegion:
    """Generator output; ``drivers`` and ``proxy`` are the planted ground truth.

    ``drivers`` has shape (tiles, windows + 2, 7): index 0 and 1 are the two
    pre-history windows needed for the lagged terms of windows 0 and 1.
    """

    profile: RegionProfile
    samples: pd.DataFrame
    regulatory: pd.DataFrame
    tiles: np.ndarray  # (tiles, 2) of (row, col)
    drivers: np.ndarray
    proxy: np.ndarray  # (tiles, windows)
    window_starts: np.ndarray


def _region_key(name):
    return zlib.crc32(name.encode("utf-8"))


def _rng(seed, region_key, row, col, window, stream):
    # window is shifted by MAX_LAG so pre-history windows stay non-negative
    return np.random.default_rng([seed, region_key, row, col, window + MAX_LAG, stream])


def _latent_drivers(rng, n_windows, phi):
    total = n_windows + MAX_LAG
    d = np.empty((total, N_KPI))
    d[0] = rng.standard_normal(N_KPI)
    innov = np.sqrt(1.0 - phi * phi)
    for t in range(1, total):
        d[t] = phi * d[t - 1] + innov * rng.standard_normal(N_KPI)
    return d


def proxy_from_drivers(drivers, coupling, noise):
    """Deployed bandwidth series of one tile from its drivers (windows + 2, 7)."""
    n_windows = drivers.shape[0] - MAX_LAG
    w = coupling.weight_matrix()
    t = np.arange(n_windows)
    p = np.full(n_windows, coupling.base_bw_mhz, dtype=float)
    for lag in range(MAX_LAG + 1):
        p += drivers[MAX_LAG - lag:MAX_LAG - lag + n_windows] @ w[lag]
    p += coupling.seasonal_amplitude * np.sin(2.0 * np.pi * t / SEASON_PERIOD)
    p += coupling.trend_per_quarter * t
    p += coupling.noise_sigma * noise
    return p


def _tile_samples(rng, d, n, start, end, lat0, lon0, size, row, col, prefix, pool, band_p):
    u = rng.uniform(size=(10, n))
    z = rng.standard_normal(size=(8, n))
    ts = start + np.floor(u[0] * (end - start)).astype(np.int64)
    lat = lat0 + (row + 0.02 + 0.96 * u[1]) * size
    lon = lon0 + (col + 0.02 + 0.96 * u[2]) * size
    band = np.searchsorted(np.cumsum(band_p), u[3] * band_p.sum(), side="right")
    band = np.minimum(band, len(band_p) - 1)
    dev = np.minimum((u[4] * pool).astype(np.int64), pool - 1)

    ul = np.maximum(0.0, 5.0 + 1.5 * d[0] + 0.75 * z[0])
    dl = np.maximum(0.0, 25.0 + 6.0 * d[0] + 2.5 * z[1])
    # latency and jitter sit on an idle floor for about half the samples, so
    # the cell minimum is the floor even in sparse tiles
    ratio = np.clip(0.55 + 0.12 * d[1], 0.1, 0.95)
    busy = u[7] >= 0.5
    latency = 12.0 * (1.0 + busy * 4.0 * (1.0 / ratio - 1.0) * u[5])
    rx = np.exp(np.log(4.0e6) + 0.25 * d[6] + 0.5 * z[2])
    tx = rx * np.exp(np.log(0.25) + 0.3 * d[2] + 0.1 * z[3])
    conns = rng.poisson(max(0.1, 4.0 + 1.2 * d[3]), size=n)
    signal = np.clip(-95.0 + 6.0 * d[4] + 3.0 * z[4], -140.0, -40.0)
    jitter = 2.0 + (u[8] >= 0.5) * max(0.2, 6.0 + 2.0 * d[5]) * 2.0 * u[6]

    return {
        "device_id": [f"{prefix}-{row:03d}{col:03d}-{k:04d}" for k in dev],
        "timestamp": ts,
        "lat": lat,
        "lon": lon,
        "band": band,
        "ul_mbps": ul,
        "dl_mbps": dl,
        "latency_ms": latency,
        "jitter_ms": jitter,
        "bytes_tx": np.rint(tx).astype(np.int64),
        "bytes_rx": np.rint(rx).astype(np.int64),
        "signal_dbm": signal,
        "connections": conns.astype(np.int64),
    }


def _generate_tile(args):
    profile, coupling, seed, row, col, starts = args
    key = _region_key(profile.name)
    n_windows = len(starts) - 1
    drivers = _latent_drivers(_rng(seed, key, row, col, -MAX_LAG, _STREAM_DRIVERS),
                              n_windows, coupling.driver_ar)
    noise = np.array([_rng(seed, key, row, col, t, _STREAM_PROXY).standard_normal()
                      for t in range(n_windows)])
    proxy = proxy_from_drivers(drivers, coupling, noise)
    if proxy.min() < 1.0:
        log.warning("tile (%d, %d): deployed bandwidth clipped at 1 MHz", row, col)
        proxy = np.maximum(proxy, 1.0)

    size = profile.tile_size_deg
    lat0, lon0 = profile.bbox[0], profile.bbox[2]
    density = float(profile.density_map[row, col])
    lam = profile.samples_per_window * density
    # large device pool: most samples in a cell come from distinct devices
    pool = max(1, int(np.ceil(10.0 * lam)))
    band_p = np.ones(len(profile.bands))
    prefix = profile.name.split("-")[0][:3].upper()

    parts = []
    for t in range(n_windows):
        rng = _rng(seed, key, row, col, t, _STREAM_SAMPLES)
        n = int(rng.poisson(lam)) if lam > 0 else 0
        if n == 0:
            continue
        parts.append(_tile_samples(rng, drivers[t + MAX_LAG], n, starts[t], starts[t + 1],
                                   lat0, lon0, size, row, col, prefix, pool, band_p))

    srng = _rng(seed, key, row, col, -MAX_LAG, _STREAM_SITES)
    n_sites, n_bands = profile.sites_per_tile, len(profile.bands)
    site_lat = lat0 + (row + 0.05 + 0.9 * srng.uniform(size=n_sites)) * size
    site_lon = lon0 + (col + 0.05 + 0.9 * srng.uniform(size=n_sites)) * size
    shares = srng.dirichlet(np.full(n_sites * n_bands, 4.0)).reshape(n_sites, n_bands)
    reg = []
    for t in range(n_windows):
        for s in range(n_sites):
            for b in range(n_bands):
                reg.append((f"{prefix}-S{row:03d}{col:03d}-{s}", site_lat[s], site_lon[s],
                            profile.bands[b], shares[s, b] * proxy[t],
                            int(starts[t]) + 86400 * (1 + s)))
    return parts, reg, drivers, proxy


def generate_region(profile, coupling, seed, jobs=1):
    """Generate one region. Output depends only on (profile, coupling, seed)."""
    profile.validate()
    coupling.validate()
    if seed < 0:
        raise ConfigError("seed", "must be non-negative")
    starts = window_starts(profile.years)
    tiles = [(r, c) for r in range(profile.n_rows) for c in range(profile.n_cols)]
    args = [(profile, coupling, int(seed), r, c, starts) for r, c in tiles]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_generate_tile, args, chunksize=8))
    else:
        results = [_generate_tile(a) for a in args]

    cols = {k: [] for k in SAMPLE_COLUMNS}
    for parts, _, _, _ in results:
        for part in parts:
            for k in SAMPLE_COLUMNS:
                cols[k].append(part[k])
    if cols["timestamp"]:
        samples = pd.DataFrame({k: np.concatenate(v) for k, v in cols.items()})
    else:
        samples = pd.DataFrame({k: [] for k in SAMPLE_COLUMNS})
    bands = np.asarray(profile.bands, dtype=object)
    samples["band"] = bands[samples["band"].to_numpy(dtype=np.int64)]
    samples = samples.sort_values(["timestamp", "device_id", "lat", "lon"], kind="mergesort")
    samples = samples.reset_index(drop=True)

    reg = pd.DataFrame([r for _, recs, _, _ in results for r in recs],
                       columns=list(REGULATORY_COLUMNS))
    reg = reg.sort_values(["effective_from", "site_id", "band"], kind="mergesort")
    reg = reg.reset_index(drop=True)

    return GeneratedRegion(
        profile=profile,
        samples=samples,
        regulatory=reg,
        tiles=np.array(tiles, dtype=np.int64),
        drivers=np.stack([r[2] for r in results]),
        proxy=np.stack([r[3] for r in results]),
        window_starts=starts,
    )


def validate_samples(samples, profile=None):
    """Raise ``ValueError`` if any sample breaks the raw-sample value ranges."""
    s = samples
    checks = {
        "ul_mbps": s["ul_mbps"] >= 0,
        "dl_mbps": s["dl_mbps"] >= 0,
        "latency_ms": s["latency_ms"] > 0,
        "jitter_ms": s["jitter_ms"] >= 0,
        "bytes_tx": s["bytes_tx"] >= 0,
        "bytes_rx": s["bytes_rx"] >= 0,
        "signal_dbm": s["signal_dbm"].between(-140.0, -40.0),
        "connections": s["connections"] >= 0,
    }
    if profile is not None:
        starts = window_starts(profile.years)
        checks["timestamp"] = s["timestamp"].between(starts[0], starts[-1] - 1)
    for name, ok in checks.items():
        if not bool(np.all(ok)):
            raise ValueError(f"sample field {name} out of range")
