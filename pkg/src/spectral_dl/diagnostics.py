"""Descent and gradient-gap checks for the two-block frequency/gain iteration.

The reference iteration works on the single-atom objective
``H(x, y) = ||E - a~(x) y^H||_F**2``: a cubic Newton step in ``x`` with the
closed-form Hessian modulus, then the exact minimizer
``y = E^H a~(x) / ||a~||**2``. Nothing is safeguarded, so the checks below
test the theory rather than the implementation's safety nets.

Reports are plain dicts with JSON-ready values.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .atoms import grad_hess_theta, lipschitz_modulus
from .errors import DegenerateInputError, InvalidArgumentError
from .numerics import cubic_step
from .signal_model import SensingOperator, sensed_atoms

STEP_TOL = 1e-9
SUM_TOL = 1e-6
GRAD_TOL = 1e-6


@dataclass
class BCDTrace:
    """Iterates of :func:`reference_bcd`; ``thetas`` are not wrapped."""

    e: np.ndarray
    sensing: SensingOperator
    floor: float
    thetas: list[float] = field(default_factory=list)
    ys: list[np.ndarray] = field(default_factory=list)
    objectives: list[float] = field(default_factory=list)
    lips: list[float] = field(default_factory=list)

    @property
    def nu(self) -> float:
        """Strong convexity constant of ``H`` in ``y``, ``2 ||a~||**2``."""
        return 2.0 * self.sensing.n_meas / self.sensing.n_full

    @property
    def steps(self) -> int:
        return len(self.thetas) - 1


def _h_value(e, theta, y, sensing) -> float:
    r = e - np.outer(sensed_atoms([theta], sensing)[:, 0], y.conj())
    return float(np.real(np.vdot(r, r)))


def _best_gain(e, theta, sensing) -> np.ndarray:
    a = sensed_atoms([theta], sensing)[:, 0]
    return e.conj().T @ a / np.real(np.vdot(a, a))


def reference_bcd(
    e,
    theta0: float,
    max_iter: int = 200,
    floor: float = 1e-6,
    sensing: SensingOperator | None = None,
) -> BCDTrace:
    """Run the unsafeguarded two-block iteration from ``theta0``.

    ``y^0`` is the exact gain for ``theta0``. Each step takes the global
    minimizer of the cubic model at the current ``y`` with modulus
    ``max(L(y), floor)`` and then refits ``y`` exactly.
    """
    e = np.asarray(e, dtype=complex)
    if e.ndim == 1:
        e = e[:, None]
    if not np.any(e):
        raise DegenerateInputError("reference iteration needs a nonzero E")
    if max_iter < 0 or floor <= 0:
        raise InvalidArgumentError("max_iter must be >= 0 and floor > 0")
    sensing = sensing or SensingOperator.identity(e.shape[0])
    if sensing.n_meas != e.shape[0]:
        raise InvalidArgumentError(f"E has {e.shape[0]} rows, sensing gives {sensing.n_meas}")

    theta = float(theta0)
    y = _best_gain(e, theta, sensing)
    tr = BCDTrace(e.copy(), sensing, floor)
    tr.thetas.append(theta)
    tr.ys.append(y)
    tr.objectives.append(_h_value(e, theta, y, sensing))
    for _ in range(max_iter):
        gains = y.conj()
        g, h = grad_hess_theta(theta, gains, e, sensing)
        lip = lipschitz_modulus(gains, e, sensing, floor)
        theta = theta + cubic_step(g, h, lip).delta
        y = _best_gain(e, theta, sensing)
        tr.lips.append(lip)
        tr.thetas.append(theta)
        tr.ys.append(y)
        tr.objectives.append(_h_value(e, theta, y, sensing))
    return tr


def _report(name: str, violations: list[int], **extra) -> dict:
    out = {"check": name, "passed": not violations, "violations": violations}
    out.update({k: (float(v) if isinstance(v, (np.floating, float)) else v) for k, v in extra.items()})
    return out


def _lemma1_steps(trace: BCDTrace):
    """Per step: (actual decrease, required decrease)."""
    lam = trace.floor
    half_nu = trace.nu / 2.0
    for k in range(trace.steps):
        dx = trace.thetas[k + 1] - trace.thetas[k]
        dy = np.linalg.norm(trace.ys[k + 1] - trace.ys[k])
        dec = trace.objectives[k] - trace.objectives[k + 1]
        yield dec, lam / 12.0 * abs(dx) ** 3 + half_nu * dy**2


def assert_lemma1(trace, floor: float | None = None) -> dict:
    """Sufficient decrease per step and the telescoped sum bound.

    Accepts a :class:`BCDTrace` (checks ``(floor/12)|dx|**3 + (nu/2)||dy||**2``)
    or an NK-SVD ``ConvergenceTrace`` (checks ``(floor/12)|dtheta|**3``
    against the recorded per-step decrease of accepted refinement steps).
    """
    if isinstance(trace, BCDTrace):
        pairs = list(_lemma1_steps(trace))
        total = trace.objectives[0] - trace.objectives[-1] if trace.objectives else 0.0
        scale = max(1.0, abs(trace.objectives[0])) if trace.objectives else 1.0
    else:
        lam = 1e-6 if floor is None else floor
        recs = [r for r in trace.refine_records if r.accepted]
        pairs = [(r.decrease, lam / 12.0 * abs(r.delta) ** 3) for r in recs]
        total = sum(r.decrease for r in recs)
        scale = max(1.0, max(trace.outer_objectives, default=1.0))
    margins = [dec - req for dec, req in pairs]
    bad = [k for k, m in enumerate(margins) if m < -STEP_TOL * scale]
    partial = float(np.sum([req for _, req in pairs])) if pairs else 0.0
    sum_ok = partial <= total + SUM_TOL
    return _report(
        "lemma1",
        bad,
        passed_sum=bool(sum_ok),
        worst_margin=min(margins) if margins else 0.0,
        required_sum=partial,
        total_decrease=float(total),
    ) | {"passed": not bad and sum_ok}


def _grad_x(trace: BCDTrace, k: int) -> float:
    return grad_hess_theta(trace.thetas[k], trace.ys[k].conj(), trace.e, trace.sensing)[0]


def iterate_norms(trace: BCDTrace) -> np.ndarray:
    """``||z^k|| = sqrt(x_k**2 + ||y_k||**2)`` for every iterate."""
    return np.array([np.hypot(t, np.linalg.norm(y)) for t, y in zip(trace.thetas, trace.ys)])


def assert_lemma2(trace: BCDTrace, sigma_bound: float) -> dict:
    """Gradient gap ``|dH/dx(z^{k+1})| <= lam_plus |dx|**2 + 2 sigma ||dy||``.

    ``lam_plus`` is the largest modulus the trace used. Also checks that the
    gain gradient vanishes after each exact refit. The report carries
    ``required_sigma``, the smallest ``sigma`` that would have made every
    step pass, so a failure can be told apart from a loose bound.
    """
    norms = iterate_norms(trace)
    if np.max(norms) > sigma_bound:
        return _report(
            "lemma2", [], precondition=False, max_iterate_norm=float(np.max(norms)), sigma_bound=float(sigma_bound)
        ) | {"passed": False}
    lam_plus = max(trace.lips, default=trace.floor)
    e_norm = float(np.linalg.norm(trace.e))
    a2 = trace.nu / 2.0
    bad, bad_y, margins = [], [], []
    need = 0.0
    for k in range(trace.steps):
        dx = trace.thetas[k + 1] - trace.thetas[k]
        dy = float(np.linalg.norm(trace.ys[k + 1] - trace.ys[k]))
        grad = abs(_grad_x(trace, k + 1))
        bound = lam_plus * dx**2 + 2.0 * sigma_bound * dy + GRAD_TOL
        margins.append(bound - grad)
        if grad > bound:
            bad.append(k)
        if dy > 0:
            need = max(need, (grad - lam_plus * dx**2 - GRAD_TOL) / (2.0 * dy))
        a = sensed_atoms([trace.thetas[k + 1]], trace.sensing)[:, 0]
        grad_y = 2.0 * (a2 * trace.ys[k + 1] - trace.e.conj().T @ a)
        if np.linalg.norm(grad_y) > 1e-10 * max(e_norm, 1.0):
            bad_y.append(k)
    return _report(
        "lemma2",
        sorted(set(bad) | set(bad_y)),
        precondition=True,
        gain_gradient_violations=bad_y,
        worst_margin=min(margins) if margins else 0.0,
        lambda_plus=float(lam_plus),
        sigma_bound=float(sigma_bound),
        required_sigma=float(need),
    )


def assert_gradient_gap(trace: BCDTrace) -> dict:
    """Gradient bound ``|dH/dx(z^{k+1})| <= rho2 ||z^{k+1} - z^k||``.

    ``rho2 = max(lam_plus, 2 max_k ||z^k||)`` is measured from the trace.
    """
    norms = iterate_norms(trace)
    rho2 = max(max(trace.lips, default=trace.floor), 2.0 * float(np.max(norms)))
    bad, margins = [], []
    for k in range(trace.steps):
        dz = float(np.hypot(trace.thetas[k + 1] - trace.thetas[k], np.linalg.norm(trace.ys[k + 1] - trace.ys[k])))
        bound = rho2 * dz + GRAD_TOL
        grad = abs(_grad_x(trace, k + 1))
        margins.append(bound - grad)
        if grad > bound:
            bad.append(k)
    return _report("gradient_gap", bad, rho2=rho2, worst_margin=min(margins) if margins else 0.0)


def report_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True)
