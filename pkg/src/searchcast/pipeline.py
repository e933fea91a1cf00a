"""Configuration and the rolling retrospective backtest.

For every forecast Saturday in the span the driver produces 1-4 week ahead
forecasts from four methods (state ARGO, the two second-step variants and
persistence) plus the ensemble, then scores them against the truth feed.
First-step estimates are also produced for a warm-up stretch before the span
so that the second step has its 30-week covariance window from the start.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import pickle
import shutil
import tempfile
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from . import argox as AX
from . import geo as geo_mod
from .argo import ArgoConfig, ArgoInputs, forecast_block, write_coefficient_trace
from .ensemble import MethodId, attach_ensemble
from .evaluate import REPORT_FILES, emit_reports, read_forecasts
from .exceptions import ConfigError, InsufficientHistory, NumericalFailure, SearchcastError
from .features import DEFAULT_LAG_RANGE, DEFAULT_THRESHOLD, DEFAULT_WINDOW, LagTable, score_and_select
from .ingest import load_feed, load_query_panel
from .preprocess import IqrConfig, preprocess_panel

log = logging.getLogger(__name__)

HORIZON_WEEKS = 4
CACHE_DIR = ".cache"
LAG_TABLE_FILE = "lag_table.csv"
TRACE_FILE = "coefficient_trace.csv"
METADATA_FILE = "run_metadata.json"
ACTIVITY_FILE = "query_activity.csv"


class StageError(SearchcastError):
    """A pipeline error tagged with the stage that raised it."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


class _stage:
    def __init__(self, name):
        self.name = name

    def __enter__(self):
        log.info("stage %s", self.name)

    def __exit__(self, et, ev, tb):
        if ev is None or isinstance(ev, (StageError, FileNotFoundError, ConfigError)):
            return False
        if isinstance(ev, (SearchcastError, ValueError, ArithmeticError, OSError, KeyError)):
            raise StageError(self.name, str(ev) or et.__name__) from ev
        return False


@dataclass(frozen=True)
class Paths:
    input_feed: str = "input_states.csv"
    truth_feed: str = "truth_states.csv"
    queries: str = "queries.csv"
    out_dir: str = "out"
    input_nation: str | None = None
    truth_nation: str | None = None
    region_table: str | None = None


@dataclass(frozen=True)
class FeatureSelectConfig:
    window: tuple = DEFAULT_WINDOW
    threshold: float = DEFAULT_THRESHOLD
    lag_range: tuple = DEFAULT_LAG_RANGE


@dataclass(frozen=True)
class ArgoxConfig:
    alone_states: tuple = AX.DEFAULT_ALONE
    excluded_from_constraint: tuple = AX.DEFAULT_EXCLUDED
    cov_window: int = AX.COV_WINDOW
    jitter: float = AX.JITTER
    recompute_alone: bool = False


@dataclass(frozen=True)
class EnsembleConfig:
    window: int = 15
    pooled: bool = False
    min_interval_residuals: int = 8


@dataclass(frozen=True)
class BacktestConfig:
    first: str | None = None
    last: str | None = None


@dataclass(frozen=True)
class ReportConfig:
    trace_geos: tuple = (geo_mod.NATION,)
    common_support: bool = True


_SECTIONS = {
    "paths": Paths,
    "feature_select": FeatureSelectConfig,
    "preprocess": IqrConfig,
    "argo": ArgoConfig,
    "argox": ArgoxConfig,
    "ensemble": EnsembleConfig,
    "backtest": BacktestConfig,
    "report": ReportConfig,
}


def _build(cls, values: dict, section: str):
    known = {f.name for f in fields(cls)}
    extra = set(values) - known
    if extra:
        raise ConfigError(f"unknown keys in '{section}': {sorted(extra)}")
    kw = {k: tuple(v) if isinstance(v, list) else v for k, v in values.items()}
    try:
        return cls(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid '{section}' section: {exc}") from exc


def _plain(obj):
    if isinstance(obj, tuple):
        return [_plain(v) for v in obj]
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    return obj


@dataclass(frozen=True)
class PipelineConfig:
    paths: Paths = Paths()
    feature_select: FeatureSelectConfig = FeatureSelectConfig()
    preprocess: IqrConfig = IqrConfig()
    argo: ArgoConfig = ArgoConfig()
    argox: ArgoxConfig = ArgoxConfig()
    ensemble: EnsembleConfig = EnsembleConfig()
    backtest: BacktestConfig = BacktestConfig()
    report: ReportConfig = ReportConfig()
    jobs: int = 1
    seed: int = 42
    clamp_nonneg: bool = False
    base_dir: str = "."
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.jobs < 1:
            raise ConfigError("jobs must be at least 1")
        w = self.feature_select.window
        if pd.Timestamp(w[0]) > pd.Timestamp(w[1]):
            raise ConfigError("feature_select.window must be ordered")
        b = self.backtest
        if b.first and b.last and pd.Timestamp(b.first) > pd.Timestamp(b.last):
            raise ConfigError("backtest.first must not be after backtest.last")
        for d in (b.first, b.last):
            if d and pd.Timestamp(d).weekday() != 5:
                raise ConfigError(f"backtest dates must be Saturdays, got {d}")
        if self.argo.horizon_days != 7 * HORIZON_WEEKS:
            raise ConfigError(f"argo.horizon_days must be {7 * HORIZON_WEEKS}")
        if self.argo.mode != "full":
            raise ConfigError("argo.mode must be 'full' for the backtest")

    @classmethod
    def from_dict(cls, data: dict, base_dir=".") -> "PipelineConfig":
        kw, extra = {}, {}
        for key, value in data.items():
            if key in _SECTIONS:
                if not isinstance(value, dict):
                    raise ConfigError(f"section '{key}' must be an object")
                kw[key] = _build(_SECTIONS[key], value, key)
            elif key in ("jobs", "seed"):
                kw[key] = int(value)
            elif key == "clamp_nonneg":
                kw[key] = bool(value)
            elif key == "synth":
                extra[key] = value
            else:
                raise ConfigError(f"unknown config section '{key}'")
        return cls(base_dir=str(base_dir), extra=extra, **kw)

    @classmethod
    def from_json(cls, path) -> "PipelineConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be an object")
        return cls.from_dict(data, path.parent)

    def with_overrides(self, out_dir=None, jobs=None, seed=None, clamp_nonneg=None) -> "PipelineConfig":
        cfg = self
        if out_dir is not None:
            cfg = replace(cfg, paths=replace(cfg.paths, out_dir=str(Path(out_dir).resolve())))
        if jobs is not None:
            cfg = replace(cfg, jobs=int(jobs))
        if seed is not None:
            cfg = replace(cfg, seed=int(seed))
        if clamp_nonneg:
            cfg = replace(cfg, clamp_nonneg=True)
        return cfg

    def path(self, name: str) -> Path | None:
        value = getattr(self.paths, name)
        if value is None:
            return None
        p = Path(value)
        return p if p.is_absolute() else Path(self.base_dir) / p

    @property
    def out_dir(self) -> Path:
        return self.path("out_dir")

    def to_dict(self) -> dict:
        d = {name: _plain(asdict(getattr(self, name))) for name in _SECTIONS}
        d.update(jobs=self.jobs, seed=self.seed, clamp_nonneg=self.clamp_nonneg)
        return d


# ---------------------------------------------------------------- loading

def _require(path: Path | None, what: str) -> Path:
    if path is None or not path.is_file():
        raise FileNotFoundError(f"{what} not found: {path}")
    return path


def _file_digest(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _key(*parts) -> str:
    return hashlib.sha256(json.dumps(parts, sort_keys=True, default=str).encode()).hexdigest()[:20]


@dataclass
class Loaded:
    input_feed: object
    truth_feed: object | None
    queries: object
    region_table: dict | None
    digests: dict


def load_inputs(cfg: PipelineConfig, need_truth: bool = True) -> Loaded:
    region_path = cfg.path("region_table")
    table = geo_mod.load_region_table(_require(region_path, "region table")) if region_path else None
    digests = {}
    with _stage("ingest"):
        inp = _require(cfg.path("input_feed"), "input feed")
        truth = _require(cfg.path("truth_feed"), "truth feed") if need_truth else None
        qpath = _require(cfg.path("queries"), "query panel")
        nat_in = cfg.path("input_nation")
        nat_truth = cfg.path("truth_nation")
        for name, p in (("input_feed", inp), ("truth_feed", truth), ("queries", qpath),
                        ("input_nation", nat_in), ("truth_nation", nat_truth), ("region_table", region_path)):
            if p is not None:
                digests[name] = _file_digest(_require(p, name.replace("_", " ")))
        input_feed = load_feed(inp, nat_in, "input", table)
        truth_feed = load_feed(truth, nat_truth, "truth", table) if truth is not None else None
        queries = load_query_panel(qpath, table)
    return Loaded(input_feed, truth_feed, queries, table, digests)


def _cached(cache_dir: Path, name: str, key: str, build, dump, load):
    path = cache_dir / f"{name}-{key}"
    if path.exists():
        try:
            return load(path)
        except Exception:  # corrupt entry: rebuild
            path.unlink(missing_ok=True)
    value = build()
    cache_dir.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=cache_dir, prefix=".tmp-")
    os.close(fd)
    dump(value, Path(tmp))
    os.replace(tmp, path)
    return value


def _pickle_dump(value, path):
    with open(path, "wb") as fh:
        pickle.dump(value, fh, protocol=pickle.HIGHEST_PROTOCOL)


def _pickle_load(path):
    with open(path, "rb") as fh:
        return pickle.load(fh)


def preprocessed_queries(cfg: PipelineConfig, data: Loaded):
    key = _key(data.digests.get("queries"), data.digests.get("region_table"), cfg.preprocess.to_dict())
    with _stage("preprocess"):
        return _cached(cfg.out_dir / CACHE_DIR, "queries", key + ".pkl",
                       lambda: preprocess_panel(data.queries, cfg.preprocess, data.region_table),
                       _pickle_dump, _pickle_load), key


def select_features(cfg: PipelineConfig, data: Loaded, panel, panel_key: str) -> LagTable:
    fs = cfg.feature_select
    key = _key(panel_key, data.digests.get("input_feed"), data.digests.get("input_nation"),
               _plain(asdict(fs)))

    def build():
        deaths = data.input_feed.series(geo_mod.NATION)
        nat = panel.levels["nation"]
        frame = pd.DataFrame((nat.values[0] * nat.active[0][:, None]).T, index=panel.dates,
                             columns=panel.queries)
        return score_and_select(deaths, frame, fs.window, fs.threshold, fs.lag_range)

    meta = dict(window=tuple(str(w) for w in fs.window), lag_range=tuple(fs.lag_range),
                threshold=fs.threshold)
    with _stage("select-features"):
        return _cached(cfg.out_dir / CACHE_DIR, "lags", key + ".csv", build,
                       lambda t, p: t.to_csv(p), lambda p: LagTable.from_csv(p, **meta))


# ---------------------------------------------------------------- backtest

@dataclass
class Schedule:
    warm: pd.DatetimeIndex
    span: pd.DatetimeIndex
    first_possible: pd.Timestamp


def _saturdays(dates: pd.DatetimeIndex, lo: int, hi: int) -> pd.DatetimeIndex:
    days = dates[lo:hi + 1]
    return days[days.weekday == 5]


def plan_schedule(cfg: PipelineConfig, inputs: dict, weekly_index: pd.DatetimeIndex) -> Schedule:
    """Warm-up and forecast anchors.

    The span starts once every horizon has a full covariance window of
    first-step estimates and, by default, ends at the last Saturday whose
    1-week target is observed in the input feed.
    """
    full, gt = cfg.argo, cfg.argo.with_mode("gt_only")
    L = cfg.argo.horizon_days
    first = 0
    for mode_cfg, inp in ((gt, inputs["state"]), (gt, inputs["region"]),
                          (full, inputs["nation"]), (full, inputs["state"])):
        first = max(first, max(inp.earliest_anchor(l, mode_cfg) for l in range(1, L + 1)))
    latest = min(inputs["nation"].latest_anchor(full), inputs["state"].latest_anchor(gt))
    anchors = _saturdays(inputs["nation"].dates, first, latest)
    # the second step also needs the week before each anchor
    anchors = anchors[anchors.isin(weekly_index) & (anchors - pd.Timedelta(weeks=1)).isin(weekly_index)]
    need = cfg.argox.cov_window + HORIZON_WEEKS - 1
    if len(anchors) <= need:
        raise InsufficientHistory(
            f"only {len(anchors)} forecastable Saturdays; the second step needs more than {need}")
    first_possible = anchors[need]
    last_default = weekly_index[-2] if len(weekly_index) > 1 else weekly_index[-1]
    span_first = pd.Timestamp(cfg.backtest.first) if cfg.backtest.first else first_possible
    span_last = pd.Timestamp(cfg.backtest.last) if cfg.backtest.last else min(last_default, anchors[-1])
    if span_first < first_possible:
        raise ConfigError(f"backtest.first {span_first.date()} is too early; the earliest anchor "
                          f"with full second-step history is {first_possible.date()}")
    if span_last > anchors[-1]:
        raise ConfigError(f"backtest.last {span_last.date()} is beyond the last forecastable "
                          f"Saturday {anchors[-1].date()}")
    span = anchors[(anchors >= span_first) & (anchors <= span_last)]
    if len(span) == 0:
        raise ConfigError("backtest span contains no Saturdays")
    warm = anchors[anchors <= span[-1]]
    return Schedule(warm, span, first_possible)


@dataclass
class FirstStep:
    """Weekly first-step estimates on the warm-up anchors, shape (geos, anchors, horizon)."""

    anchors: pd.DatetimeIndex
    gt_state: np.ndarray
    gt_region: np.ndarray
    nation: np.ndarray
    blocks: dict


def first_step(cfg: PipelineConfig, inputs: dict, anchors) -> FirstStep:
    gt = cfg.argo.with_mode("gt_only")
    bs = forecast_block(inputs["state"], anchors, gt)
    br = forecast_block(inputs["region"], anchors, gt)
    bn = forecast_block(inputs["nation"], anchors, cfg.argo)
    return FirstStep(pd.DatetimeIndex(anchors), bs.weekly(), br.weekly(), bn.weekly()[0],
                     {"gt_state": bs, "gt_region": br, "nation": bn})


def first_step_estimates(fs: FirstStep, weekly: pd.DataFrame, week, horizon: int,
                         region_table=None) -> AX.WeeklyEstimateBundle:
    """Bundle of first-step estimates at anchor ``week`` for ``horizon`` weeks ahead."""
    a = fs.anchors.get_loc(pd.Timestamp(week))
    h = int(horizon) - 1
    states = list(geo_mod.STATES)
    w = weekly.index.get_loc(pd.Timestamp(week))
    return AX.WeeklyEstimateBundle.assemble(
        fs.anchors[a], horizon, states, fs.gt_state[:, a, h],
        dict(zip(geo_mod.REGIONS, fs.gt_region[:, a, h])), fs.nation[a, h],
        weekly[states].iloc[w].to_numpy(), weekly[states].iloc[w - 1].to_numpy(), region_table)


def second_step(cfg: PipelineConfig, fs: FirstStep, weekly: pd.DataFrame, argo_state: pd.DataFrame,
                span, alone, region_table=None):
    """ARGOX_2STEP and ARGOX_NATCONSTRAINT weekly forecasts for the span.

    ``argo_state`` maps (anchor, horizon) to state-level ARGO estimates.
    Returns (records, warnings).
    """
    grouping = AX.StateGrouping(tuple(alone), tuple(cfg.argox.excluded_from_constraint))
    joint, constrained = grouping.joint, grouping.constrained
    excluded = list(grouping.excluded)
    Wn = cfg.argox.cov_window
    eps = cfg.argox.jitter
    bundles = {}

    def bundle(a, h):
        if (a, h) not in bundles:
            bundles[(a, h)] = first_step_estimates(fs, weekly, a, h, region_table)
        return bundles[(a, h)]

    recs, warnings = [], []
    for anchor in span:
        ia = fs.anchors.get_loc(anchor)
        for h in range(1, HORIZON_WEEKS + 1):
            train = fs.anchors[ia - h - Wn + 1: ia - h + 1]
            if len(train) != Wn:
                raise InsufficientHistory(f"{anchor.date()} h={h}: covariance window incomplete")
            hist = [bundle(a, h) for a in train]
            targets = [weekly.loc[a + pd.Timedelta(weeks=h)].to_dict() for a in train]
            now = bundle(anchor, h)
            target_end = anchor + pd.Timedelta(weeks=h)
            y_now = dict(zip(now.states, now.y_last))

            def emit(method, states, values):
                for s, v in zip(states, values):
                    recs.append((anchor, target_end, h, s, method, float(v)))

            try:
                Z, W = AX.joint_history(hist, joint, targets)
                cov = AX.CovStats(Z, W, eps)
                emit(MethodId.ARGOX_2STEP.value, joint,
                     [y_now[s] for s in joint] + AX.blp_joint(now.joint_predictors(joint), cov))
            except NumericalFailure as exc:
                warnings.append(f"{anchor.date()} h={h} joint: {exc}")
            for s in alone:
                try:
                    Z = np.array([[t[s] - b.y_last[b.states.index(s)]] for t, b in zip(targets, hist)])
                    W = np.array([b.alone_predictors(s) for b in hist])
                    z = AX.blp_alone(now.alone_predictors(s), AX.CovStats(Z, W, eps))
                    emit(MethodId.ARGOX_2STEP.value, [s], [y_now[s] + z])
                except NumericalFailure as exc:
                    warnings.append(f"{anchor.date()} h={h} {s}: {exc}")
            try:
                Z, W = AX.joint_history(hist, constrained, targets)
                cov = AX.CovStats(Z, W, eps)
                target = fs.nation[ia, h - 1] - sum(argo_state[(anchor, h)][s] for s in excluded)
                y_last = np.array([y_now[s] for s in constrained])
                sol = AX.blp_nat_constrained(now.joint_predictors(constrained), cov, y_last, target)
                emit(MethodId.ARGOX_NATCONSTRAINT.value, constrained, y_last + sol.increments)
                emit(MethodId.ARGOX_NATCONSTRAINT.value, excluded,
                     [argo_state[(anchor, h)][s] for s in excluded])
            except NumericalFailure as exc:
                warnings.append(f"{anchor.date()} h={h} constrained: {exc}")
    return recs, warnings


@dataclass
class BacktestResult:
    forecasts: pd.DataFrame
    schedule: Schedule
    lag_table: LagTable
    alone_states: tuple
    warnings: list
    metadata: dict
    trace_blocks: list


def backtest_forecasts(cfg: PipelineConfig, data: Loaded) -> BacktestResult:
    """Run all forecasting stages; returns the forecast table with ensemble and intervals."""
    _set_threads(cfg.jobs)
    panel, panel_key = preprocessed_queries(cfg, data)
    lags = select_features(cfg, data, panel, panel_key)
    feed = data.input_feed
    weekly = feed.weekly("deaths")
    with _stage("argo"):
        inputs = {
            "state": ArgoInputs.from_panels(feed, panel, lags, geo_mod.STATES),
            "region": ArgoInputs.from_panels(feed, panel, lags, geo_mod.REGIONS),
            "nation": ArgoInputs.from_panels(feed, panel, lags, [geo_mod.NATION]),
        }
        sched = plan_schedule(cfg, inputs, weekly.index)
        fs = first_step(cfg, inputs, sched.warm)
        state_block = forecast_block(inputs["state"], sched.span, cfg.argo)
        state_weekly = state_block.weekly()
        argo_state = {(a, h): dict(zip(geo_mod.STATES, state_weekly[:, i, h - 1]))
                      for i, a in enumerate(sched.span) for h in range(1, HORIZON_WEEKS + 1)}

    recs = []
    for i, anchor in enumerate(sched.span):
        iw = fs.anchors.get_loc(anchor)
        for h in range(1, HORIZON_WEEKS + 1):
            end = anchor + pd.Timedelta(weeks=h)
            for s in geo_mod.STATES:
                recs.append((anchor, end, h, s, MethodId.ARGO.value, argo_state[(anchor, h)][s]))
                recs.append((anchor, end, h, s, MethodId.NAIVE.value, float(weekly.at[anchor, s])))
            recs.append((anchor, end, h, geo_mod.NATION, MethodId.ARGO.value, float(fs.nation[iw, h - 1])))
            recs.append((anchor, end, h, geo_mod.NATION, MethodId.NAIVE.value,
                         float(weekly.at[anchor, geo_mod.NATION])))

    with _stage("argox"):
        alone = tuple(cfg.argox.alone_states)
        if cfg.argox.recompute_alone:
            hist = weekly.loc[:sched.span[0]]
            alone = AX.select_alone_states(hist.diff().iloc[1:], region_table=data.region_table)
        rx, warnings = second_step(cfg, fs, weekly, argo_state, sched.span, alone, data.region_table)
    recs += rx

    with _stage("ensemble"):
        df = pd.DataFrame(recs, columns=["forecast_date", "target_week_end", "horizon_weeks",
                                         "geo", "method", "point"])
        if cfg.clamp_nonneg:
            df["point"] = df["point"].clip(lower=0.0)
        df, _ = attach_ensemble(df, weekly, cfg.ensemble.window, cfg.ensemble.min_interval_residuals,
                                cfg.ensemble.pooled, geos=geo_mod.STATES)
        if cfg.clamp_nonneg:
            df["lo95"] = df["lo95"].clip(lower=0.0)

    trace = []
    for code in cfg.report.trace_geos:
        level = geo_mod.geo(code).level
        if level == "nation":
            trace.append((fs.blocks["nation"], [code]))
        elif level == "state":
            trace.append((state_block, [code]))
        else:
            trace.append((fs.blocks["gt_region"], [code]))

    metadata = {
        "version": __version__,
        "config": _metadata_config(cfg),
        "inputs_sha256": data.digests,
        "span": {"first": str(sched.span[0].date()), "last": str(sched.span[-1].date()),
                 "n_anchors": len(sched.span)},
        "warmup": {"first": str(sched.warm[0].date()), "n_anchors": len(sched.warm)},
        "selected_queries": lags.selected,
        "alone_states": list(alone),
        "constrained_states": AX.StateGrouping(tuple(alone), tuple(cfg.argox.excluded_from_constraint)).constrained,
        "covariance_jitter": cfg.argox.jitter,
        "correlation_ridge": AX.CORRELATION_RIDGE,
        "interval": {"z": 1.96, "window": cfg.ensemble.window,
                     "min_residuals": cfg.ensemble.min_interval_residuals, "ddof": 1},
        "warnings": warnings,
    }
    if cfg.extra.get("synth") is not None:
        metadata["synth"] = cfg.extra["synth"]
    return BacktestResult(df, sched, lags, alone, warnings, metadata, trace)


def _metadata_config(cfg: PipelineConfig) -> dict:
    # neither the output location nor the thread count affects results
    d = cfg.to_dict()
    d["paths"].pop("out_dir")
    d.pop("jobs")
    return d


def _set_threads(jobs: int):
    import numba

    numba.set_num_threads(max(1, min(int(jobs), numba.config.NUMBA_NUM_THREADS)))


class _Staging:
    """Write into a scratch directory and move finished files into place."""

    def __init__(self, out_dir: Path):
        self.out_dir = out_dir

    def __enter__(self) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.tmp = Path(tempfile.mkdtemp(dir=self.out_dir, prefix=".staging-"))
        return self.tmp

    def __exit__(self, et, ev, tb):
        try:
            if ev is None:
                for p in sorted(self.tmp.iterdir()):
                    os.replace(p, self.out_dir / p.name)
        finally:
            shutil.rmtree(self.tmp, ignore_errors=True)
        return False


def _truth_weekly(data: Loaded) -> pd.DataFrame:
    return data.truth_feed.weekly("deaths")


def write_metadata(path: Path, metadata: dict):
    path.write_text(json.dumps(metadata, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def run_backtest(cfg: PipelineConfig) -> dict[str, Path]:
    """Full backtest: forecasts, ensemble, scoring and every report file."""
    data = load_inputs(cfg, need_truth=True)
    result = backtest_forecasts(cfg, data)
    out = cfg.out_dir
    with _Staging(out) as tmp:
        with _stage("report"):
            emit_reports(result.forecasts, _truth_weekly(data), tmp, cfg.report.common_support)
            result.lag_table.to_csv(tmp / LAG_TABLE_FILE)
            write_coefficient_trace(tmp / TRACE_FILE, result.trace_blocks)
            write_metadata(tmp / METADATA_FILE, result.metadata)
    return {name: out / name for name in REPORT_FILES + (LAG_TABLE_FILE, TRACE_FILE, METADATA_FILE)}


def evaluate_forecasts(cfg: PipelineConfig, forecasts_path=None, out_dir=None) -> dict[str, Path]:
    """Score an existing forecast CSV (ours or third-party) and rewrite the reports."""
    out = Path(out_dir) if out_dir else cfg.out_dir
    src = Path(forecasts_path) if forecasts_path else out / "forecasts.csv"
    _require(src, "forecast file")
    truth = _require(cfg.path("truth_feed"), "truth feed")
    table = geo_mod.load_region_table(cfg.path("region_table")) if cfg.paths.region_table else None
    with _stage("evaluate"):
        fc = read_forecasts(src)
        tw = load_feed(truth, cfg.path("truth_nation"), "truth", table).weekly("deaths")
    with _Staging(out) as tmp:
        with _stage("report"):
            emit_reports(fc, tw, tmp, cfg.report.common_support)
    return {name: out / name for name in REPORT_FILES}


def write_query_activity(cfg: PipelineConfig, data: Loaded) -> Path:
    panel, _ = preprocessed_queries(cfg, data)
    rows = []
    for level, lvl in panel.levels.items():
        for g, code in enumerate(lvl.codes):
            for k, q in enumerate(panel.queries):
                rows.append((level, code, q, bool(lvl.active[g, k])))
    df = pd.DataFrame(rows, columns=["level", "geo", "query", "active"])
    df["active"] = df["active"].map({True: "true", False: "false"})
    with _Staging(cfg.out_dir) as tmp:
        df.to_csv(tmp / ACTIVITY_FILE, index=False, lineterminator="\n")
    return cfg.out_dir / ACTIVITY_FILE


def write_lag_table(cfg: PipelineConfig, data: Loaded) -> Path:
    panel, key = preprocessed_queries(cfg, data)
    lags = select_features(cfg, data, panel, key)
    with _Staging(cfg.out_dir) as tmp:
        lags.to_csv(tmp / LAG_TABLE_FILE)
    return cfg.out_dir / LAG_TABLE_FILE
