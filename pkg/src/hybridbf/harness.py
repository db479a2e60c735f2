"""Monte-Carlo experiment driver.

One trial draws a channel, factors it with :func:`gc_svd`, designs a precoder
and combiner with every configured method and evaluates the link after noise
calibration. Rows come out in (snr, n_rf, trial, method) order no matter how
the trials were scheduled, so the CSV is byte-stable for a given config.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .beamform import (INITS, PartitionSpec, StoppingRule, design_combiner, design_precoder,
                       optimal_combiner, optimal_precoder)
from .channel import DESK_CONFIG, SystemConfig, sample_channel
from .errors import CalibrationError, HybridBFError, InvalidArgumentError
from .metrics import beam_pattern, equivalent_channel, link_report
from .svd import gc_svd

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

logger = logging.getLogger(__name__)

CSV_COLUMNS = ("method", "snr_db", "n_rf", "trial", "seed", "se_bits", "mi_bits", "objective",
               "gap_energy", "n_iter1", "n_iter2", "n_iter3", "nmse_bb1", "nmse_bb2")
METRIC_COLUMNS = CSV_COLUMNS[5:]
FULLY_DIGITAL = "fully_digital"
BASE_METHODS = (FULLY_DIGITAL, "aree", "pe_omp", "pe_smd", "omp")
CALIBRATIONS = ("per_method", "reference")

# sub-streams of the per-trial seed used by random initializers
_TX_STREAM, _RX_STREAM = 1, 2


@dataclass(frozen=True)
class MethodSpec:
    """One competitor. ``init`` and ``partition`` only apply to ``aree``."""

    name: str
    init: str = "pe_smd"
    partition: int | None = None

    def __post_init__(self):
        if self.name not in BASE_METHODS:
            raise InvalidArgumentError(f"unknown method {self.name!r}; choose from {BASE_METHODS}")
        if self.name == "aree" and self.init not in INITS:
            raise InvalidArgumentError(f"unknown initializer {self.init!r}; choose from {INITS}")

    @property
    def label(self) -> str:
        if self.name != "aree":
            return self.name
        label = f"aree:{self.init}"
        return label if self.partition is None else f"{label}:{self.partition}"

    @classmethod
    def parse(cls, text: str) -> "MethodSpec":
        """Parse ``name`` or ``aree[:init[:partition]]``, e.g. ``aree:random:3``."""
        parts = [p.strip() for p in str(text).strip().split(":")]
        name = parts[0]
        if name != "aree":
            if len(parts) > 1:
                raise InvalidArgumentError(f"method {name!r} takes no options")
            return cls(name)
        if len(parts) > 3:
            raise InvalidArgumentError(f"cannot parse method {text!r}")
        init = parts[1] if len(parts) > 1 and parts[1] else "pe_smd"
        partition = None
        if len(parts) > 2:
            try:
                partition = int(parts[2])
            except ValueError:
                raise InvalidArgumentError(f"partition in {text!r} is not an integer") from None
        return cls("aree", init, partition)


DEFAULT_METHODS = tuple(MethodSpec.parse(m) for m in (FULLY_DIGITAL, "aree:pe_smd", "pe_omp", "pe_smd", "omp"))


@dataclass(frozen=True)
class ExperimentConfig:
    system: SystemConfig = DESK_CONFIG
    methods: tuple = DEFAULT_METHODS
    snr_db: tuple = (-10.0,)
    n_rf: tuple | None = None  # None: use the system's own RF chain counts
    trials: int = 200
    seed: int = 0
    partition: int | None = None
    calibration: str = "per_method"
    stop: StoppingRule = field(default_factory=StoppingRule)
    out: str | None = None
    emit_beam_patterns: bool = False
    jobs: int = 1

    def __post_init__(self):
        if not isinstance(self.trials, int) or self.trials < 1:
            raise InvalidArgumentError("trials must be a positive integer")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise InvalidArgumentError("seed must be a nonnegative integer")
        if not self.methods:
            raise InvalidArgumentError("method list is empty")
        if not self.snr_db:
            raise InvalidArgumentError("snr_db sweep is empty")
        if any(not math.isfinite(s) for s in self.snr_db):
            raise InvalidArgumentError("snr_db values must be finite")
        if self.n_rf is not None and not self.n_rf:
            raise InvalidArgumentError("n_rf sweep is empty")
        if self.calibration not in CALIBRATIONS:
            raise InvalidArgumentError(f"calibration must be one of {CALIBRATIONS}")
        if self.jobs < 1:
            raise InvalidArgumentError("jobs must be positive")
        labels = [m.label for m in self.methods]
        if len(set(labels)) != len(labels):
            raise InvalidArgumentError(f"duplicate methods in {labels}")
        # fail early on RF chain counts the system cannot take
        for n in self.n_rf_values():
            self.system.with_rf_chains(n)

    def n_rf_values(self) -> tuple:
        if self.n_rf is None:
            return (self.system.n_rf_t,)
        return tuple(int(n) for n in self.n_rf)

    def sweep_points(self) -> list[tuple[float, int]]:
        return [(float(s), n) for s in self.snr_db for n in self.n_rf_values()]


def _as_tuple(value, cast):
    if isinstance(value, (list, tuple)):
        return tuple(cast(v) for v in value)
    if isinstance(value, str):
        return tuple(cast(v) for v in value.split(",") if v.strip())
    return (cast(value),)


def _system_from_dict(d: dict) -> SystemConfig:
    d = dict(d)
    for key in ("sigma_phi", "sigma_theta"):
        deg = d.pop(f"{key}_deg", None)
        if deg is not None:
            if key in d:
                raise InvalidArgumentError(f"give either {key} or {key}_deg, not both")
            d[key] = math.radians(float(deg))
    known = SystemConfig.__dataclass_fields__
    unknown = set(d) - set(known)
    if unknown:
        raise InvalidArgumentError(f"unknown system keys: {sorted(unknown)}")
    return SystemConfig(**d)


def config_from_dict(d: dict) -> ExperimentConfig:
    """Build a config from the parsed TOML layout (see README)."""
    d = dict(d)
    kwargs = {}
    if "system" in d:
        kwargs["system"] = _system_from_dict(d.pop("system"))
    if "methods" in d:
        kwargs["methods"] = _as_tuple(d.pop("methods"), MethodSpec.parse)
    sweep = dict(d.pop("sweep", {}))
    if "snr_db" in sweep:
        kwargs["snr_db"] = _as_tuple(sweep.pop("snr_db"), float)
    if "n_rf" in sweep:
        kwargs["n_rf"] = _as_tuple(sweep.pop("n_rf"), int)
    if sweep:
        raise InvalidArgumentError(f"unknown sweep keys: {sorted(sweep)}")
    if "stopping" in d:
        kwargs["stop"] = StoppingRule(**d.pop("stopping"))
    output = dict(d.pop("output", {}))
    if "path" in output:
        kwargs["out"] = str(output.pop("path"))
    if "beam_patterns" in output:
        kwargs["emit_beam_patterns"] = bool(output.pop("beam_patterns"))
    if output:
        raise InvalidArgumentError(f"unknown output keys: {sorted(output)}")
    for key in ("trials", "seed", "partition", "calibration", "jobs"):
        if key in d:
            kwargs[key] = d.pop(key)
    if d:
        raise InvalidArgumentError(f"unknown config keys: {sorted(d)}")
    return ExperimentConfig(**kwargs)


def load_config(path) -> ExperimentConfig:
    with open(path, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise InvalidArgumentError(f"{path}: {exc}") from None
    return config_from_dict(data)


def calibrate_noise(h, f, w, p_t: float, target_snr: float) -> float:
    """Noise variance at which the link realizes ``target_snr`` (linear) for this (F, W) pair."""
    if not target_snr > 0:
        raise InvalidArgumentError("target SNR must be positive")
    f = f.f_rf @ f.f_bb if hasattr(f, "f_rf") else np.asarray(f)
    w = w.f_rf @ w.f_bb if hasattr(w, "f_rf") else np.asarray(w)
    n_s = f.shape[1]
    signal = np.linalg.norm(w.conj().T @ np.asarray(h) @ f) ** 2
    w_norm = np.linalg.norm(w) ** 2
    if signal == 0 or w_norm == 0:
        raise CalibrationError("received signal is zero; noise cannot be calibrated")
    return float(p_t / (n_s * target_snr) * signal / w_norm)


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


@dataclass
class ExperimentResult:
    rows: list = field(default_factory=list)
    aggregates: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    beam_patterns: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors


def _empty_metrics() -> dict:
    return {k: float("nan") for k in METRIC_COLUMNS} | {"n_iter1": 0, "n_iter2": 0, "n_iter3": 0}


def _trace_columns(trace) -> dict:
    if trace is None:
        return {"n_iter1": 0, "n_iter2": 0, "n_iter3": 0, "nmse_bb1": float("nan"), "nmse_bb2": float("nan")}
    it1, it2 = trace.total_inner
    return {"n_iter1": it1, "n_iter2": it2, "n_iter3": trace.total_outer,
            "nmse_bb1": trace.nmse_bb1[-1], "nmse_bb2": trace.nmse_bb2[-1]}


def _design_pair(spec: MethodSpec, g, ch, system, partition, stop, seed):
    if spec.name == FULLY_DIGITAL:
        return optimal_precoder(g, system.n_s), optimal_combiner(g, system.n_s), None
    part = spec.partition if spec.partition is not None else partition
    part = None if part is None else PartitionSpec(int(part))
    kw = {"init": spec.init, "partition": part, "stop": stop}
    f, trace = design_precoder(g, ch, system, spec.name, rng=np.random.default_rng([seed, _TX_STREAM]), **kw)
    w, _ = design_combiner(g, ch, system, spec.name, rng=np.random.default_rng([seed, _RX_STREAM]), **kw)
    f.check()
    w.check()
    return f, w, trace


def run_trial(cfg: ExperimentConfig, snr_db: float, n_rf: int, trial: int):
    """Rows, error records and (optionally) beam patterns for one channel draw."""
    system = cfg.system.with_rf_chains(n_rf)
    seed = cfg.seed + trial
    target = db_to_linear(snr_db)
    base = {"snr_db": snr_db, "n_rf": n_rf, "trial": trial, "seed": seed}
    rows, errors, patterns = [], [], []
    try:
        ch = sample_channel(np.random.default_rng(seed), system)
        g = gc_svd(ch)
        f_opt, w_opt = optimal_precoder(g, system.n_s), optimal_combiner(g, system.n_s)
        ref_noise = calibrate_noise(ch.h, f_opt, w_opt, system.p_t, target)
    except HybridBFError as exc:
        for spec in cfg.methods:
            rows.append({"method": spec.label, **base, **_empty_metrics()})
            errors.append({**base, "method": spec.label, "error": type(exc).__name__, "message": str(exc)})
        return rows, errors, patterns

    if cfg.emit_beam_patterns and trial == 0:
        patterns.append({**base, "method": "channel", **beam_pattern(ch.h).to_dict()})
    for spec in cfg.methods:
        row = {"method": spec.label, **base}
        try:
            f, w, trace = _design_pair(spec, g, ch, system, cfg.partition, cfg.stop, seed)
            if cfg.calibration == "per_method":
                noise = calibrate_noise(ch.h, f, w, system.p_t, target)
            else:
                noise = ref_noise
            rep = link_report(ch.h, f, w, f_opt, w_opt, system.p_t, noise)
            row.update(se_bits=rep.spectral_efficiency, mi_bits=rep.mutual_information,
                       objective=rep.objective, gap_energy=rep.gap_energy, **_trace_columns(trace))
            if cfg.emit_beam_patterns and trial == 0:
                h_eq = equivalent_channel(ch.h, f, w)
                patterns.append({**base, "method": spec.label, **beam_pattern(h_eq).to_dict()})
        except (HybridBFError, ArithmeticError, np.linalg.LinAlgError) as exc:
            logger.warning("%s failed at snr=%g n_rf=%d trial=%d: %s", spec.label, snr_db, n_rf, trial, exc)
            row.update(_empty_metrics())
            errors.append({**base, "method": spec.label, "error": type(exc).__name__, "message": str(exc)})
        rows.append(row)
    return rows, errors, patterns


def _run_task(args):
    return run_trial(*args)


def aggregate(rows: list, methods, points) -> list:
    """Mean and (population) std of each metric per method and sweep point, NaNs skipped."""
    out = []
    for snr_db, n_rf in points:
        for label in methods:
            sel = [r for r in rows if r["method"] == label and r["snr_db"] == snr_db and r["n_rf"] == n_rf]
            mean = {"method": label, "snr_db": snr_db, "n_rf": n_rf, "trial": "mean", "seed": ""}
            std = {"method": label, "snr_db": snr_db, "n_rf": n_rf, "trial": "std", "seed": ""}
            for col in METRIC_COLUMNS:
                vals = np.array([float(r[col]) for r in sel], dtype=float)
                vals = vals[np.isfinite(vals)]
                mean[col] = float(np.mean(vals)) if vals.size else float("nan")
                std[col] = float(np.std(vals)) if vals.size else float("nan")
            out.extend([mean, std])
    return out


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    points = cfg.sweep_points()
    tasks = [(cfg, s, n, t) for s, n in points for t in range(cfg.trials)]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            # map keeps submission order, so output order is independent of scheduling
            outputs = list(pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (4 * cfg.jobs))))
    else:
        outputs = [_run_task(t) for t in tasks]
    result = ExperimentResult()
    for rows, errors, patterns in outputs:
        result.rows.extend(rows)
        result.errors.extend(errors)
        result.beam_patterns.extend(patterns)
    result.aggregates = aggregate(result.rows, [m.label for m in cfg.methods], points)
    return result


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def to_csv(result: ExperimentResult) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in result.rows + result.aggregates:
        writer.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def write_outputs(result: ExperimentResult, out: str | Path, emit_beam_patterns: bool = False) -> list[Path]:
    """Write the CSV (and the beam-pattern JSON next to it, if requested)."""
    out = Path(out)
    out.write_text(to_csv(result), encoding="utf-8")
    written = [out]
    if emit_beam_patterns:
        path = out.with_suffix(".beams.json")
        path.write_text(json.dumps(result.beam_patterns, separators=(",", ":")), encoding="utf-8")
        written.append(path)
    return written


def with_overrides(cfg: ExperimentConfig, **overrides) -> ExperimentConfig:
    return replace(cfg, **{k: v for k, v in overrides.items() if v is not None})
