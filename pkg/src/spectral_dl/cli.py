"""``spectral-dl`` command line: synth, estimate and bench subcommands.

Exit codes: 0 ok, 2 input error, 3 degenerate result, 4 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import DegenerateResultError, InvalidArgumentError, SpectralDLError
from .experiment import ESTIMATORS, ExperimentConfig, cmd_bench, nksvd_params, resolve_eps
from .nksvd import run
from .signal_model import (
    ObservationSet,
    SensingOperator,
    generate_scenario,
    load_observations,
    load_scenario,
    psnr_to_sigma,
    save_observations,
    save_scenario,
)

EXIT_OK, EXIT_INPUT, EXIT_DEGENERATE, EXIT_INTERNAL = 0, 2, 3, 4

# flag name -> ExperimentConfig field
OVERRIDES = {
    "n": "n",
    "m": "m",
    "t": "t",
    "k": "k",
    "psnr": "psnr_db",
    "mu": "mu",
    "gamma": "gamma",
    "grid_r": "r",
    "max_iter": "max_iter",
    "tol": "tol",
    "trials": "trials",
    "seed": "base_seed",
}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON experiment config; flags override its values")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=Path)
    p.add_argument("--n", type=int, help="full aperture N")
    p.add_argument("--m", type=int, help="number of sensed rows M")
    p.add_argument("--t", type=int, help="snapshots T")
    p.add_argument("--k", type=int, help="number of sources K")
    p.add_argument("--psnr", type=float, help="PSNR in dB")
    p.add_argument("--mu", type=float, help="minimum spacing in units of 2 pi / N")
    p.add_argument("--gamma", type=int)
    p.add_argument("--grid-r", type=int, help="initial grid size R (default N)")
    p.add_argument("--max-iter", type=int)
    p.add_argument("--tol", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spectral-dl", description="Line spectral estimation by cubic NK-SVD")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="draw a scenario and write its observation and scenario files")
    _add_common(p)

    p = sub.add_parser("estimate", help="estimate the line spectrum of an observation file")
    p.add_argument("observations", type=Path)
    p.add_argument("--scenario", type=Path, help="scenario JSON giving the sensing rows and noise level")
    p.add_argument("--eps", type=float, help="error bound (overrides --psnr and the scenario)")
    _add_common(p)

    p = sub.add_parser("bench", help="Monte Carlo sweep, writes CSV")
    p.add_argument("--trials", type=int)
    p.add_argument("--estimators", help=f"comma list from {','.join(ESTIMATORS)}")
    p.add_argument("--sweep", help="sweep variable: M, K, psnr_db or mu")
    p.add_argument("--values", help="comma list of sweep values")
    p.add_argument("--timing", action="store_true", help="fill runtime_ms (makes the CSV nondeterministic)")
    _add_common(p)
    return parser


def config_from_args(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if getattr(args, "config", None) else ExperimentConfig()
    for flag, attr in OVERRIDES.items():
        val = getattr(args, flag, None)
        if val is not None:
            setattr(cfg, attr, val)
    if getattr(args, "estimators", None):
        cfg.estimators = [e.strip() for e in args.estimators.split(",") if e.strip()]
    if getattr(args, "sweep", None):
        cfg.sweep_variable = args.sweep
    if getattr(args, "values", None):
        cfg.sweep_values = [float(v) for v in args.values.split(",")]
    if getattr(args, "timing", False):
        cfg.timing = True
    if getattr(args, "out", None):
        cfg.output_path = str(args.out)
    return cfg.validate()


def cmd_synth(cfg: ExperimentConfig, out: Path) -> tuple[Path, Path]:
    """Write ``<out>.obs.txt`` and ``<out>.scenario.json``; returns both paths."""
    m = cfg.n if cfg.sensing == "identity" else cfg.m
    scenario, obs = generate_scenario(cfg.n, m, cfg.t, cfg.k, cfg.sigma, cfg.separation, seed=cfg.base_seed)
    obs_path = Path(f"{out}.obs.txt")
    scn_path = Path(f"{out}.scenario.json")
    save_observations(obs_path, obs.y)
    save_scenario(scn_path, scenario)
    return obs_path, scn_path


def cmd_estimate(obs_path: Path, args, cfg: ExperimentConfig) -> dict:
    """Run the estimator on one observation file; returns the result document."""
    obs = load_observations(obs_path)
    y = obs.y
    if args.scenario is not None:
        scenario = load_scenario(args.scenario)
        sensing, sigma = scenario.sensing, scenario.noise_sigma
    else:
        if args.n is not None and args.n != y.shape[0]:
            raise InvalidArgumentError("--n differs from M; pass --scenario to give the sensed rows")
        sensing, sigma = SensingOperator.identity(y.shape[0]), None
    if args.eps is not None:
        eps = args.eps
    elif args.psnr is not None:
        eps = resolve_eps("sqrtM_sigma", y.shape[0], psnr_to_sigma(args.psnr), y)
    elif sigma is not None:
        eps = resolve_eps("sqrtM_sigma", y.shape[0], sigma, y)
    else:
        raise InvalidArgumentError("no error bound: pass --eps, --psnr or --scenario")
    result = run(ObservationSet(y), nksvd_params(cfg, eps), sensing=sensing)
    doc = result.to_json()
    doc["eps"] = float(eps)
    return doc


def _dispatch(args) -> int:
    if args.command == "synth":
        cfg = config_from_args(args)
        paths = cmd_synth(cfg, args.out or Path("scenario"))
        for p in paths:
            print(p)
    elif args.command == "estimate":
        cfg = config_from_args(args)
        doc = cmd_estimate(args.observations, args, cfg)
        text = json.dumps(doc, indent=2, sort_keys=True)
        if args.out:
            args.out.write_text(text + "\n")
        else:
            print(text)
    elif args.command == "bench":
        cfg = config_from_args(args)
        text = cmd_bench(cfg)
        if not cfg.output_path:
            sys.stdout.write(text)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return _dispatch(args)
    except DegenerateResultError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (SpectralDLError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001 - last-resort exit code
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
