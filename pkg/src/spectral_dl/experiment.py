"""Monte Carlo benchmark sweeps, the on-grid OMP baseline and config handling."""

from __future__ import annotations

import copy
import csv
import io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .dictionary import ParametricDictionary
from .errors import ConfigurationError, SpectralDLError
from .metrics import beta, rsnr, success
from .nksvd import ConvergenceTrace, EstimationResult, NKSVDParams, run
from .signal_model import TWO_PI, ObservationSet, SensingOperator, generate_scenario, psnr_to_sigma
from .sparse_coding import encode_all

CSV_COLUMNS = [
    "sweep_value",
    "trial",
    "estimator",
    "k_hat",
    "beta",
    "rsnr_db",
    "success",
    "runtime_ms",
    "iterations",
    "stop_reason",
]
SWEEP_VARIABLES = ("M", "K", "psnr_db", "mu")
ESTIMATORS = ("nksvd", "omp_grid")
THREADS_ENV = "SPECTRAL_DL_THREADS"
# relative bound used when the data are noise-free and sqrt(M) sigma is zero
NOISELESS_EPS_REL = 1e-9
BASELINE_NOTE = "omp_grid stops on the error bound (it is not given the true K)"


@dataclass
class ExperimentConfig:
    """Scenario, algorithm and sweep settings of one benchmark.

    ``psnr_db`` of ``None`` means noise-free. The minimum frequency
    separation is ``mu * 2 pi / N`` unless ``min_separation`` is set.
    Trial ``t`` of every sweep value uses seed ``base_seed + t``.
    """

    n: int = 64
    m: int = 32
    t: int = 1
    k: int = 3
    psnr_db: float | None = 20.0
    mu: float | None = 2.0
    min_separation: float | None = None
    sensing: str = "subsample"  # or "identity" (forces M = N)
    r: int | None = None
    gamma: int = 10
    eps_rule: str | float = "sqrtM_sigma"
    max_iter: int = 30
    tol: float = 1e-3
    floor: float = 1e-6
    sweep_variable: str = "psnr_db"
    sweep_values: list = field(default_factory=lambda: [20.0])
    trials: int = 50
    base_seed: int = 0
    baselines: list[str] = field(default_factory=lambda: ["omp_grid"])
    estimators: list[str] | None = None  # overrides ["nksvd"] + baselines
    output_path: str | None = None
    timing: bool = False

    def validate(self) -> "ExperimentConfig":
        if self.sweep_variable not in SWEEP_VARIABLES:
            raise ConfigurationError(f"sweep variable must be one of {SWEEP_VARIABLES}, got {self.sweep_variable!r}")
        if not self.sweep_values:
            raise ConfigurationError("sweep value list is empty")
        if self.trials < 1:
            raise ConfigurationError(f"trials must be >= 1, got {self.trials}")
        if self.n < 1 or self.t < 1 or self.k < 1:
            raise ConfigurationError("n, t and k must be >= 1")
        if self.sensing not in ("subsample", "identity"):
            raise ConfigurationError(f"unknown sensing kind {self.sensing!r}")
        if not (isinstance(self.eps_rule, (int, float)) and self.eps_rule > 0) and self.eps_rule != "sqrtM_sigma":
            raise ConfigurationError(f"eps_rule must be 'sqrtM_sigma' or a positive number, got {self.eps_rule!r}")
        unknown = [e for e in self.estimator_list() if e not in ESTIMATORS]
        if unknown:
            raise ConfigurationError(f"unknown estimators {unknown}")
        return self

    def estimator_list(self) -> list[str]:
        if self.estimators is not None:
            return list(self.estimators)
        return ["nksvd"] + [b for b in self.baselines if b != "nksvd"]

    def at(self, value) -> "ExperimentConfig":
        """Copy with the sweep variable set to ``value``."""
        cfg = copy.deepcopy(self)
        attr = {"M": "m", "K": "k", "psnr_db": "psnr_db", "mu": "mu"}[self.sweep_variable]
        setattr(cfg, attr, int(value) if attr in ("m", "k") else (None if value is None else float(value)))
        return cfg

    @property
    def sigma(self) -> float:
        return 0.0 if self.psnr_db is None else psnr_to_sigma(self.psnr_db)

    @property
    def separation(self) -> float:
        if self.min_separation is not None:
            return float(self.min_separation)
        return 0.0 if self.mu is None else self.mu * TWO_PI / self.n

    def to_dict(self) -> dict:
        return {k: copy.deepcopy(v) for k, v in self.__dict__.items()}

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        """Build from the flat JSON form or the nested scenario/algorithm/sweep form."""
        flat = {}
        for key, val in doc.items():
            if key in ("scenario", "algorithm"):
                flat.update(val)
            elif key == "sweep":
                flat["sweep_variable"] = val.get("variable", "psnr_db")
                flat["sweep_values"] = val.get("values", [])
            else:
                flat[key] = val
        known = set(cls.__dataclass_fields__)
        extra = sorted(set(flat) - known)
        if extra:
            raise ConfigurationError(f"unknown config keys {extra}")
        try:
            return cls(**flat).validate()
        except TypeError as exc:
            raise ConfigurationError(f"config value has the wrong type ({exc})") from exc

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(doc, dict):
            raise ConfigurationError(f"{path}: config must be a JSON object")
        return cls.from_dict(doc)


def resolve_eps(rule, n_meas: int, sigma: float, y: np.ndarray) -> float:
    """Error bound from the config rule; noise-free data get a tiny relative bound."""
    if rule != "sqrtM_sigma":
        return float(rule)
    eps = math.sqrt(n_meas) * sigma
    if eps > 0:
        return eps
    col = float(np.max(np.abs(y))) * math.sqrt(n_meas)
    return max(NOISELESS_EPS_REL * col, np.finfo(float).tiny)


def baseline_omp_grid(y, eps: float, sensing: SensingOperator, eps_margin: float = NKSVDParams.eps_margin) -> EstimationResult:
    """On-grid OMP over the fixed ``2N``-point grid, no refinement.

    Each column is coded independently with the same error bound the main
    estimator uses. The estimate is the union of selected grid points and
    the gains are a joint least-squares refit on that union.
    """
    y = y.y if isinstance(y, ObservationSet) else np.asarray(y, dtype=complex)
    if y.ndim == 1:
        y = y[:, None]
    grid = ParametricDictionary.uniform(2 * sensing.n_full, sensing)
    code = encode_all(y, grid, eps * eps_margin)
    used = np.flatnonzero(np.any(code.to_dense() != 0, axis=1))
    atoms = grid.atoms[:, used]
    gains = np.linalg.lstsq(atoms, y, rcond=None)[0] if used.size else np.zeros((0, y.shape[1]), complex)
    resid = y - atoms @ gains
    return EstimationResult(
        k_hat=int(used.size),
        frequencies=grid.frequencies[used].copy(),
        gains=gains,
        residual_fro=float(np.linalg.norm(resid)),
        trace=ConvergenceTrace(),
        stop_reason="omp",
        sensing=sensing,
    )


def nksvd_params(cfg: ExperimentConfig, eps: float) -> NKSVDParams:
    return NKSVDParams(eps=eps, r=cfg.r, gamma=cfg.gamma, max_iter=cfg.max_iter, tol=cfg.tol, floor=cfg.floor)


def run_trial(cfg: ExperimentConfig, sweep_value, trial: int) -> list[dict]:
    """All estimators on one seeded scenario; failures become rows, not exceptions."""
    c = cfg.at(sweep_value)
    m = c.n if c.sensing == "identity" else c.m
    scenario, obs = generate_scenario(c.n, m, c.t, c.k, c.sigma, c.separation, seed=cfg.base_seed + trial)
    eps = resolve_eps(c.eps_rule, m, c.sigma, obs.y)
    rows = []
    for name in cfg.estimator_list():
        t0 = time.perf_counter()
        try:
            if name == "nksvd":
                res = run(obs, nksvd_params(c, eps))
            else:
                res = baseline_omp_grid(obs, eps, scenario.sensing)
            row = {
                "k_hat": res.k_hat,
                "beta": beta(scenario.frequencies, res.frequencies),
                "rsnr_db": rsnr(scenario, res),
                "success": success(scenario, res),
                "iterations": res.trace.iterations,
                "stop_reason": res.stop_reason,
            }
        except SpectralDLError as exc:
            row = {
                "k_hat": 0,
                "beta": math.inf,
                "rsnr_db": math.nan,
                "success": False,
                "iterations": 0,
                "stop_reason": f"error:{type(exc).__name__}",
            }
        elapsed = (time.perf_counter() - t0) * 1e3
        row.update(sweep_value=sweep_value, trial=trial, estimator=name,
                   runtime_ms=elapsed if cfg.timing else None)
        rows.append(row)
    return rows


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def aggregate(rows: list[dict]) -> list[dict]:
    """One ``trial = "mean"`` row per (sweep value, estimator).

    RSNR is averaged over trials that produced an estimate, beta over all
    trials (so one empty estimate makes it infinite), success is the rate.
    """
    out = []
    keys = []
    for r in rows:
        key = (r["sweep_value"], r["estimator"])
        if key not in keys:
            keys.append(key)
    for sv, est in keys:
        group = [r for r in rows if r["sweep_value"] == sv and r["estimator"] == est]
        rs = [r["rsnr_db"] for r in group if not math.isnan(r["rsnr_db"])]
        times = [r["runtime_ms"] for r in group if r["runtime_ms"] is not None]
        out.append({
            "sweep_value": sv,
            "trial": "mean",
            "estimator": est,
            "k_hat": float(np.mean([r["k_hat"] for r in group])),
            "beta": float(np.mean([r["beta"] for r in group])),
            "rsnr_db": float(np.mean(rs)) if rs else math.nan,
            "success": float(np.mean([bool(r["success"]) for r in group])),
            "runtime_ms": float(np.mean(times)) if times else None,
            "iterations": float(np.mean([r["iterations"] for r in group])),
            "stop_reason": "aggregate",
        })
    return out


def _threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigurationError(f"{THREADS_ENV} must be an integer, got {raw!r}") from exc
    return max(n, 1)


def bench_rows(cfg: ExperimentConfig, threads: int | None = None) -> list[dict]:
    """Per-trial rows in (sweep value, trial, estimator) order."""
    cfg.validate()
    jobs = [(sv, t) for sv in cfg.sweep_values for t in range(cfg.trials)]
    threads = _threads() if threads is None else max(int(threads), 1)
    if threads == 1:
        results = [run_trial(cfg, sv, t) for sv, t in jobs]
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(run_trial, cfg, sv, t) for sv, t in jobs]
            results = [f.result() for f in futures]
    return [row for trial_rows in results for row in trial_rows]


def format_csv(cfg: ExperimentConfig, rows: list[dict]) -> str:
    """CSV text: ``#`` metadata lines, the header, trial rows, then aggregates."""
    buf = io.StringIO()
    meta = cfg.to_dict()
    meta.pop("output_path", None)
    buf.write(f"# spectral_dl {__version__}\n")
    buf.write(f"# note: {BASELINE_NOTE}\n")
    buf.write(f"# config: {json.dumps(meta, sort_keys=True)}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in rows + aggregate(rows):
        writer.writerow([_fmt(r[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def read_csv(text: str) -> list[dict]:
    """Parse :func:`format_csv` output back into string-valued dicts."""
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def cmd_bench(cfg: ExperimentConfig, out=None, threads: int | None = None) -> str:
    """Run the sweep and write the CSV to ``out`` (or ``cfg.output_path``)."""
    text = format_csv(cfg, bench_rows(cfg, threads))
    path = out or cfg.output_path
    if path:
        Path(path).write_text(text)
    return text
