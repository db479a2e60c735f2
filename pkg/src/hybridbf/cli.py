"""Command-line entry point: ``hybridbf --config sweep.toml --out results.csv``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .errors import HybridBFError
from .harness import ExperimentConfig, MethodSpec, load_config, run_experiment, to_csv, with_overrides, write_outputs


def _floats(text):
    return tuple(float(v) for v in text.split(",") if v.strip())


def _ints(text):
    return tuple(int(v) for v in text.split(",") if v.strip())


def _methods(text):
    return tuple(MethodSpec.parse(v) for v in text.split(",") if v.strip())


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hybridbf", description="Monte-Carlo hybrid beamforming benchmark.")
    p.add_argument("--config", help="TOML experiment file")
    p.add_argument("--seed", type=int, help="base seed; trial t uses seed + t")
    p.add_argument("--trials", type=int)
    p.add_argument("--snr-db", type=_floats, help="comma-separated SNR targets in dB; write --snr-db=-10,0 for negative values")
    p.add_argument("--n-rf", type=_ints, help="comma-separated RF chain counts (both ends)")
    p.add_argument("--methods", type=_methods,
                   help="comma-separated, e.g. fully_digital,aree:pe_smd,aree:random:3,pe_omp,omp")
    p.add_argument("--partition", type=int, help="first-block size for aree methods without their own")
    p.add_argument("--calibration", choices=("per_method", "reference"))
    p.add_argument("--jobs", type=int, help="worker processes")
    p.add_argument("--out", help="CSV path; stdout if omitted")
    p.add_argument("--emit-beam-patterns", action="store_true", default=None,
                   help="also write <out>.beams.json for trial 0 of every sweep point")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config) if args.config else ExperimentConfig()
        cfg = with_overrides(cfg, seed=args.seed, trials=args.trials, snr_db=args.snr_db, n_rf=args.n_rf,
                             methods=args.methods, partition=args.partition, calibration=args.calibration,
                             jobs=args.jobs, out=args.out, emit_beam_patterns=args.emit_beam_patterns)
        if cfg.emit_beam_patterns and cfg.out is None:
            raise HybridBFError("--emit-beam-patterns needs --out")
        result = run_experiment(cfg)
        if cfg.out is None:
            sys.stdout.write(to_csv(result))
        else:
            write_outputs(result, cfg.out, cfg.emit_beam_patterns)
    except (HybridBFError, ValueError, OSError) as exc:
        json.dump({"status": "error", "error": type(exc).__name__, "message": str(exc)}, sys.stderr)
        sys.stderr.write("\n")
        return 2
    if not result.ok:
        json.dump({"status": "partial", "failed_rows": len(result.errors), "errors": result.errors},
                  sys.stderr, indent=1)
        sys.stderr.write("\n")
        return 1
    return 0
