"""Deterministic synthetic world with planted search-to-death lead lags.

Every region carries a latent log-intensity (a few smooth waves plus a rough
AR(1) wiggle); a state's log-intensity is a shared national latent plus a
blend of its region's latent and its own. Deaths are
Poisson around the intensity, cases lead deaths by
ten days, and each signal query tracks the intensity ``lag`` days ahead with
Gaussian noise and occasional multiplicative spikes. Noise queries carry no
signal; half of them sit at low volume so pruning removes them.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from . import geo as geo_mod
from .exceptions import ConfigError
from .features import DEFAULT_LAG_RANGE
from .ingest import SurveillancePanel, assemble_feed, query_panel_from_states

CASE_LEAD_DAYS = 10
LOCAL_HEIGHT = (0.5, 1.2)
START_DATE = "2020-01-05"


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 42
    n_states: int = 51
    n_queries: int = 40
    n_signal_queries: int = 12
    lags: tuple | None = None
    snr: float = 10.0
    mixing_weight: float = 0.7
    n_weeks: int = 80
    spike_rate: float = 0.003
    revision_noise: float = 0.02
    start_date: str = START_DATE

    def __post_init__(self):
        lo, hi = DEFAULT_LAG_RANGE
        if not 1 <= self.n_states <= len(geo_mod.STATES):
            raise ConfigError(f"n_states must lie in [1, {len(geo_mod.STATES)}]")
        if not 0 <= self.n_signal_queries <= self.n_queries:
            raise ConfigError("n_signal_queries must lie in [0, n_queries]")
        if not self.snr > 0:
            raise ConfigError("snr must be positive")
        if not 0 <= self.mixing_weight <= 1:
            raise ConfigError("mixing_weight must lie in [0, 1]")
        if self.n_weeks < 20:
            raise ConfigError("n_weeks must be at least 20")
        if not 0 <= self.spike_rate < 1:
            raise ConfigError("spike_rate must lie in [0, 1)")
        if not 0 <= self.revision_noise < 1:
            raise ConfigError("revision_noise must lie in [0, 1)")
        if pd.Timestamp(self.start_date).weekday() != 6:
            raise ConfigError("start_date must be a Sunday so that weeks are complete")
        if self.lags is not None:
            lags = tuple(int(v) for v in self.lags)
            if len(lags) != self.n_signal_queries:
                raise ConfigError("need one planted lag per signal query")
            if any(not lo <= v <= hi for v in lags):
                raise ConfigError(f"planted lags must lie in [{lo}, {hi}]")
            object.__setattr__(self, "lags", lags)

    @property
    def n_days(self) -> int:
        return 7 * self.n_weeks

    def selection_window(self) -> tuple[str, str]:
        """A 91-day window starting once the longest lag has history."""
        start = pd.Timestamp(self.start_date) + pd.Timedelta(days=DEFAULT_LAG_RANGE[1])
        return (start.date().isoformat(), (start + pd.Timedelta(days=90)).date().isoformat())

    def to_dict(self):
        d = asdict(self)
        d["lags"] = None if self.lags is None else list(self.lags)
        return d


@dataclass
class SynthWorld:
    config: SynthConfig
    input_feed: SurveillancePanel
    truth_feed: SurveillancePanel
    queries: object
    input_cumulative: dict
    truth_cumulative: dict
    query_table: pd.DataFrame
    planted: pd.DataFrame
    intensity: np.ndarray


def _latent(rng, n_ext: int, first_center=None, height=(0.8, 1.8)) -> np.ndarray:
    t = np.arange(n_ext, dtype=float)
    out = np.full(n_ext, rng.uniform(-0.3, 0.3))
    for i in range(rng.integers(3, 5)):
        if i == 0 and first_center is not None:
            center = rng.uniform(*first_center)
        else:
            center = rng.uniform(-40, n_ext + 40)
        width = rng.uniform(25, 70)
        out += rng.uniform(*height) * np.exp(-0.5 * ((t - center) / width) ** 2)
    ar = np.empty(n_ext)
    ar[0] = 0.0
    eps = rng.normal(0.0, 0.04, n_ext)
    for i in range(1, n_ext):
        ar[i] = 0.9 * ar[i - 1] + eps[i]
    return out + ar


def generate(cfg: SynthConfig = SynthConfig()) -> SynthWorld:
    rng = np.random.default_rng(cfg.seed)
    lo, hi = DEFAULT_LAG_RANGE
    D = cfg.n_days
    n_ext = D + hi + CASE_LEAD_DAYS + 1
    dates = pd.date_range(cfg.start_date, periods=D, freq="D")
    states = list(geo_mod.STATES[:cfg.n_states]) if cfg.n_states < len(geo_mod.STATES) \
        else list(geo_mod.STATES)

    # The shared national wave peaks inside the lag-selection window.
    lag_hi = DEFAULT_LAG_RANGE[1]
    national = _latent(rng, n_ext, first_center=(lag_hi + 40, lag_hi + 60), height=(1.2, 2.0))
    region_latent = {r: _latent(rng, n_ext, height=LOCAL_HEIGHT) for r in geo_mod.REGIONS}
    scale = np.exp(rng.uniform(np.log(3.0), np.log(60.0), len(states)))
    intensity = np.empty((len(states), n_ext))
    for i, s in enumerate(states):
        own = _latent(rng, n_ext, height=LOCAL_HEIGHT)
        local = cfg.mixing_weight * region_latent[geo_mod.STATE_TO_REGION[s]] + (1 - cfg.mixing_weight) * own
        intensity[i] = scale[i] * np.exp(national + local)

    deaths = rng.poisson(intensity[:, :D]).astype(float)
    cases = rng.poisson(60.0 * intensity[:, CASE_LEAD_DAYS:CASE_LEAD_DAYS + D]).astype(float)

    # Queries: signal ones lead deaths by their planted lag.
    n_sig = cfg.n_signal_queries
    lags = np.array(cfg.lags if cfg.lags is not None else rng.integers(lo, hi + 1, n_sig), dtype=int)
    names = [f"signal_{k:02d}" for k in range(n_sig)] + \
            [f"noise_{k:02d}" for k in range(cfg.n_queries - n_sig)]
    q = np.empty((len(states), cfg.n_queries, D))
    base = intensity[:, :D].mean(axis=1)
    for k in range(n_sig):
        amp = rng.uniform(8.0, 12.0)
        sig = amp * intensity[:, lags[k]:lags[k] + D]
        sd = np.sqrt(sig.var(axis=1, keepdims=True) / cfg.snr)
        q[:, k] = sig + sd * rng.standard_normal(sig.shape)
    n_noise = cfg.n_queries - n_sig
    for j in range(n_noise):
        level = rng.uniform(4.0, 7.0) if j < n_noise // 2 else rng.uniform(0.5, 2.0)
        mean = level * base[:, None]
        q[:, n_sig + j] = mean * (1.0 + 0.3 * rng.standard_normal((len(states), D)))
    spikes = rng.random(q.shape) < cfg.spike_rate
    q = np.where(spikes, q * rng.uniform(5.0, 20.0, q.shape), q)
    q = np.round(np.maximum(q, 0.0), 3)

    revision = 1.0 + rng.uniform(-cfg.revision_noise, cfg.revision_noise, (2,) + deaths.shape)
    truth_deaths = np.round(deaths * revision[0])
    truth_cases = np.round(cases * revision[1])

    def cumulative(d, c):
        return {s: pd.DataFrame({"cases": np.cumsum(c[i]), "deaths": np.cumsum(d[i])}, index=dates)
                for i, s in enumerate(states)}

    def panel(d, c, tag):
        sp = SurveillancePanel(dates, states, d, c, source=tag)
        return assemble_feed(sp)

    full_q = np.zeros((len(geo_mod.STATES), cfg.n_queries, D))
    pos = {s: i for i, s in enumerate(geo_mod.STATES)}
    full_q[[pos[s] for s in states]] = q
    qpanel = query_panel_from_states(dates, names, full_q)

    g_idx, k_idx, d_idx = np.meshgrid(np.arange(len(states)), np.arange(cfg.n_queries),
                                      np.arange(D), indexing="ij")
    table = pd.DataFrame({
        "date": np.asarray(dates.strftime("%Y-%m-%d"))[d_idx.ravel()],
        "geo": np.asarray(states)[g_idx.ravel()],
        "query": np.asarray(names)[k_idx.ravel()],
        "value": q.ravel(),
    }).sort_values(["date", "geo", "query"], kind="stable")
    planted = pd.DataFrame({
        "query": names,
        "kind": ["signal"] * n_sig + ["noise"] * n_noise,
        "lag": list(lags) + [""] * n_noise,
    })
    return SynthWorld(cfg, panel(deaths, cases, "input"), panel(truth_deaths, truth_cases, "truth"),
                      qpanel, cumulative(deaths, cases), cumulative(truth_deaths, truth_cases),
                      table, planted, intensity[:, :D])


FILES = {
    "input": "input_states.csv",
    "truth": "truth_states.csv",
    "queries": "queries.csv",
    "planted": "planted_lags.csv",
    "config": "config.json",
}


def write_world(world: SynthWorld, out_dir) -> dict[str, Path]:
    """Write the three ingest CSVs, the planted lags and a ready-to-run pipeline config."""
    from .ingest import write_surveillance_csv

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {k: out / v for k, v in FILES.items()}
    write_surveillance_csv(paths["input"], world.input_cumulative)
    write_surveillance_csv(paths["truth"], world.truth_cumulative)
    world.query_table.to_csv(paths["queries"], index=False, float_format="%.3f")
    world.planted.to_csv(paths["planted"], index=False)
    start, end = world.config.selection_window()
    config = {
        "paths": {
            "input_feed": FILES["input"],
            "truth_feed": FILES["truth"],
            "queries": FILES["queries"],
            "out_dir": "out",
        },
        "feature_select": {"window": [start, end]},
        "synth": world.config.to_dict(),
    }
    paths["config"].write_text(json.dumps(config, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return paths
