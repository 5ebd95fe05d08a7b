"""Cubic Newtonized K-SVD: alternate OMP coding with sequential atom updates."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .atoms import AtomContext, RefineConfig, coarse_estimate, gain_update, objective_S, refine_atom
from .dictionary import ParametricDictionary
from .errors import DegenerateResultError, InvalidArgumentError
from .numerics import leading_left_singular_vector
from .metrics import wrap_distance
from .signal_model import TWO_PI, ObservationSet, SensingOperator
from .sparse_coding import SparseCode, encode_all, omp_encode

log = logging.getLogger(__name__)


@dataclass
class NKSVDParams:
    """Run settings.

    ``eps`` is the nominal per-column noise norm (usually ``sqrt(M) sigma``);
    OMP stops at ``eps * eps_margin``. The margin leaves room for the chi
    square spread of the noise so a correct model is not padded with a noise
    atom.
    """

    eps: float
    r: int | None = None  # initial grid size, defaults to N
    gamma: int = 10
    max_iter: int = 30
    tol: float = 1e-3
    floor: float = 1e-6
    max_support: int | None = None
    inner_steps: int = 100
    eps_margin: float = 1.15
    merge_bins: float | None = None  # merge radius in units of 2pi/N; default 1/(4 gamma)
    collapse_bins: float = 1.5
    eliminate: bool = True
    settle: float = 0.5

    def refine_config(self) -> RefineConfig:
        return RefineConfig(floor=self.floor, inner_steps=self.inner_steps)


@dataclass
class RefineTraceEntry:
    iteration: int
    atom: int
    delta: float
    lip: float
    decrease: float
    accepted: bool


@dataclass
class ConvergenceTrace:
    """Objective history of one run.

    ``atom_stage_objectives[i][0]`` is the objective entering the atom stage
    of iteration ``i`` and each later entry follows one atom update.
    """

    outer_objectives: list[float] = field(default_factory=list)
    atom_stage_objectives: list[list[float]] = field(default_factory=list)
    pruned_counts: list[int] = field(default_factory=list)
    merged_counts: list[int] = field(default_factory=list)
    eliminated_counts: list[int] = field(default_factory=list)
    refine_records: list[RefineTraceEntry] = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.outer_objectives)

    def summary(self) -> dict:
        return {
            "iterations": self.iterations,
            "outer_objectives": [float(v) for v in self.outer_objectives],
            "pruned_counts": list(self.pruned_counts),
            "merged_counts": list(self.merged_counts),
            "eliminated_counts": list(self.eliminated_counts),
            "refine_steps": len(self.refine_records),
        }


@dataclass
class EstimationResult:
    k_hat: int
    frequencies: np.ndarray
    gains: np.ndarray
    residual_fro: float
    trace: ConvergenceTrace
    stop_reason: str
    sensing: SensingOperator | None = None

    def to_json(self) -> dict:
        return {
            "k_hat": int(self.k_hat),
            "frequencies": [float(f) for f in self.frequencies],
            "gains_re": np.real(self.gains).tolist(),
            "gains_im": np.imag(self.gains).tolist(),
            "residual_fro": float(self.residual_fro),
            "stop_reason": self.stop_reason,
            "trace": self.trace.summary(),
        }


def initialize(n: int, r: int, sensing: SensingOperator | None = None) -> ParametricDictionary:
    """Uniform grid ``{2 pi k / r}`` of ``r`` atoms."""
    if r < 1:
        raise InvalidArgumentError(f"r must be >= 1, got {r}")
    return ParametricDictionary.uniform(r, sensing or SensingOperator.identity(n))


def objective(y, dictionary: ParametricDictionary, code) -> float:
    """``||Y - D X||_F**2`` for a :class:`SparseCode` or dense ``X``."""
    y = y.y if isinstance(y, ObservationSet) else np.asarray(y)
    x = code.to_dense() if isinstance(code, SparseCode) else np.asarray(code)
    r = y - dictionary.atoms @ x
    return float(np.real(np.vdot(r, r)))


def _fro2(a: np.ndarray) -> float:
    return float(np.real(np.vdot(a, a)))


def _merge_duplicates(freqs: np.ndarray, x: np.ndarray, radius: float) -> int:
    """Zero the weaker row of every atom pair closer than ``radius``."""
    energy = np.sum(np.abs(x) ** 2, axis=1)
    alive = energy > 0
    merged = 0
    order = np.argsort(-energy, kind="stable")
    for i in order:
        if not alive[i]:
            continue
        for j in order:
            if j == i or not alive[j]:
                continue
            d = abs(freqs[i] - freqs[j]) % TWO_PI
            if min(d, TWO_PI - d) < radius and energy[j] <= energy[i]:
                x[j] = 0.0
                alive[j] = False
                merged += 1
    return merged


def _encode(y, dictionary, eps_cols, max_support):
    x = np.zeros((dictionary.n_atoms, y.shape[1]), dtype=complex)
    for t in range(y.shape[1]):
        res = omp_encode(y[:, t], dictionary.atoms, float(eps_cols[t]), max_support)
        x[res.support, t] = res.coeffs
    return x


def _sweep(y, dictionary, x, resid, gamma, cfg, trace=None, it=0):
    """Gauss-Seidel pass over the atoms with a nonempty gain row."""
    stage = [_fro2(resid)]
    for k in range(dictionary.n_atoms):
        if not np.any(x[k]):
            continue
        resid, ctx = update_atom(k, dictionary, x, resid, gamma, cfg)
        stage.append(_fro2(resid))
        if trace is not None:
            for rec in ctx.records:
                trace.refine_records.append(RefineTraceEntry(it, k, rec.delta, rec.lip, rec.decrease, rec.accepted))
    return resid, stage


def _try_without(y, dictionary, drop, target, gamma, cfg, max_support, rounds):
    """Re-fit without the atoms flagged in ``drop``; ``None`` if the bound fails."""
    trial = dictionary.copy()
    trial.keep(~drop)
    ms = None if max_support is None else min(max_support, y.shape[0], trial.n_atoms)
    for _ in range(rounds):
        xt = _encode(y, trial, target, ms)
        rt = y - trial.atoms @ xt
        rt, _ = _sweep(y, trial, xt, rt, gamma, cfg)
        if np.all(np.linalg.norm(rt, axis=0) <= target):
            return trial, xt
    return None


def _eliminate(y, dictionary, x, target, gamma, cfg, max_support, radius, rounds=3):
    """Drop atoms the data do not need.

    First every cluster of atoms within ``radius`` of a stronger atom is
    collapsed onto that atom, then single atoms are tried weakest first. A
    removal stands only if re-coding and sweeping the reduced dictionary
    meets the error bound on every column within ``rounds`` tries. Returns
    ``(dictionary, x, removed)``.
    """
    removed = 0
    energy = np.sum(np.abs(x) ** 2, axis=1)
    # candidates are tracked by frequency since indices shift after removals
    for theta in dictionary.frequencies[np.argsort(-energy, kind="stable")]:
        freqs = dictionary.frequencies
        if theta not in freqs:
            continue
        drop = (wrap_distance(freqs, theta) < radius) & (freqs != theta)
        if not drop.any():
            continue
        out = _try_without(y, dictionary, drop, target, gamma, cfg, max_support, rounds)
        if out is not None:
            dictionary, x = out
            removed += int(drop.sum())

    energy = np.sum(np.abs(x) ** 2, axis=1)
    for theta in dictionary.frequencies[np.argsort(energy, kind="stable")]:
        if dictionary.n_atoms <= 1:
            break
        out = _try_without(y, dictionary, dictionary.frequencies == theta, target, gamma, cfg, max_support, rounds)
        if out is not None:
            dictionary, x = out
            removed += 1
    return dictionary, x, removed


def update_atom(
    k: int,
    dictionary: ParametricDictionary,
    x: np.ndarray,
    resid: np.ndarray,
    gamma: int,
    cfg: RefineConfig,
) -> tuple[np.ndarray, AtomContext]:
    """Coarse-plus-refine update of atom ``k`` in place; returns the new residual.

    Two candidates are refined: one started from the coarse grid estimate and
    one from the current frequency. The one with the lower restricted
    objective is written back, so the full objective never increases.
    """
    sensing = dictionary.sensing
    support = np.flatnonzero(x[k]).tolist()
    atom = dictionary.atoms[:, k]
    e_k = resid + np.outer(atom, x[k])
    e_r = e_k[:, support]

    u1 = leading_left_singular_vector(e_r, warn=False).u
    theta_c = coarse_estimate(u1, sensing, gamma)
    from_coarse = refine_atom(
        AtomContext(k, theta_c, support, e_r, gain_update(theta_c, e_r, sensing)), sensing, cfg
    )
    from_current = refine_atom(
        AtomContext(k, float(dictionary.frequencies[k]), support, e_r, x[k, support]), sensing, cfg
    )
    s_c = objective_S(from_coarse.theta, from_coarse.gains_row, e_r, sensing)
    s_r = objective_S(from_current.theta, from_current.gains_row, e_r, sensing)
    best = from_coarse if s_c < s_r else from_current

    dictionary.set_frequency(k, best.theta)
    x[k] = 0.0
    x[k, support] = best.gains_row
    return e_k - np.outer(dictionary.atoms[:, k], x[k]), best


def run(obs, params: NKSVDParams, sensing: SensingOperator | None = None) -> EstimationResult:
    """Estimate the line spectrum of ``obs``.

    Each outer iteration re-encodes ``Y`` by OMP, drops atoms nobody uses,
    then sweeps the survivors in index order (Gauss-Seidel) and merges
    near-duplicates. During warm-up the OMP support is capped at one more
    atom per iteration, so every source is picked up by an atom that has
    already been refined onto the stronger ones. Once all columns meet the
    error bound the cap is lifted and redundant atoms are eliminated.
    Iteration stops when the post-coding objective changes by less than
    ``tol`` with nothing merged or eliminated, or after ``max_iter`` sweeps.
    """
    if params.eps <= 0:
        raise InvalidArgumentError(f"eps must be positive, got {params.eps}")
    if params.eps_margin <= 0:
        raise InvalidArgumentError(f"eps_margin must be positive, got {params.eps_margin}")
    if isinstance(obs, ObservationSet):
        y = obs.y
        if sensing is None and obs.scenario is not None:
            sensing = obs.scenario.sensing
    else:
        y = np.asarray(obs, dtype=complex)
        if y.ndim == 1:
            y = y[:, None]
    if sensing is None:
        sensing = SensingOperator.identity(y.shape[0])
    if sensing.n_meas != y.shape[0]:
        raise InvalidArgumentError(f"sensing gives {sensing.n_meas} rows, observations have {y.shape[0]}")
    n = sensing.n_full
    r = params.r or n
    cfg = params.refine_config()
    merge_radius = TWO_PI / n * (params.merge_bins if params.merge_bins is not None else 1 / (4 * params.gamma))
    collapse_radius = TWO_PI / n * params.collapse_bins
    target = np.full(y.shape[1], params.eps * params.eps_margin)

    dictionary = initialize(n, r, sensing)
    trace = ConvergenceTrace()
    x = np.zeros((r, y.shape[1]), dtype=complex)
    f_prev = None
    growing = True
    grow_cap = 1
    stop_reason = "max_iter"

    for it in range(params.max_iter):
        limit = min(y.shape[0], dictionary.n_atoms)
        if params.max_support is not None:
            limit = min(limit, params.max_support)
        cap = min(limit, grow_cap) if growing else limit
        x = _encode(y, dictionary, target, cap)
        resid = y - dictionary.atoms @ x
        if growing and (cap == limit or np.all(np.linalg.norm(resid, axis=0) <= target)):
            growing = False
        f_now = _fro2(resid)
        trace.outer_objectives.append(f_now)

        used = np.any(x != 0, axis=1)
        if growing:
            # unused grid atoms are still candidates for later sources
            trace.pruned_counts.append(0)
        else:
            trace.pruned_counts.append(int(dictionary.n_atoms - used.sum()))
            dictionary.keep(used)
            x = x[used]
        if dictionary.n_atoms == 0:
            raise DegenerateResultError("every atom was pruned; the data look like pure noise for this eps")

        resid, stage = _sweep(y, dictionary, x, resid, params.gamma, cfg, trace, it)
        trace.atom_stage_objectives.append(stage)
        if growing and stage[-1] >= params.settle * stage[0]:
            # only admit another atom once the current ones have settled
            grow_cap += 1

        merged = _merge_duplicates(dictionary.frequencies, x, merge_radius)
        trace.merged_counts.append(merged)
        eliminated = 0
        if not growing and params.eliminate and merged == 0:
            dictionary, x, eliminated = _eliminate(
                y, dictionary, x, target, params.gamma, cfg, params.max_support, collapse_radius
            )
        trace.eliminated_counts.append(eliminated)
        log.debug("iteration %d: objective %.6g, atoms %d, merged %d, eliminated %d",
                  it, f_now, dictionary.n_atoms, merged, eliminated)

        if not growing and f_prev is not None and abs(f_prev - f_now) < params.tol and merged + eliminated == 0:
            stop_reason = "tol"
            break
        f_prev = None if growing else f_now

    used = np.any(x != 0, axis=1)
    dictionary.keep(used)
    x = x[used]
    if dictionary.n_atoms == 0:
        raise DegenerateResultError("every atom was pruned")
    resid = y - dictionary.atoms @ x
    return EstimationResult(
        k_hat=dictionary.n_atoms,
        frequencies=dictionary.frequencies.copy(),
        gains=x,
        residual_fro=float(np.linalg.norm(resid)),
        trace=trace,
        stop_reason=stop_reason,
        sensing=sensing,
    )
