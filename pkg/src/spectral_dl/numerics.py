"""Scalar cubic-regularized Newton step and leading singular vector extraction."""

from __future__ import annotations

import math
import warnings
from typing import NamedTuple

import numpy as np

from .errors import DegenerateInputError, InvalidArgumentError, NumericError


class CubicStep(NamedTuple):
    delta: float
    model_decrease: float


def cubic_model(delta, g: float, h: float, lip: float):
    """``xi(delta) = g*delta + h/2*delta**2 + lip/6*|delta|**3``."""
    delta = np.asarray(delta, dtype=float)
    return g * delta + 0.5 * h * delta**2 + lip / 6.0 * np.abs(delta) ** 3


def _quadratic_roots(a: float, b: float, c: float) -> list[float]:
    """Real roots of ``a x**2 + b x + c`` (a != 0), cancellation-free."""
    disc = b * b - 4.0 * a * c
    if disc < 0.0:
        return []
    sq = math.sqrt(disc)
    q = -0.5 * (b + math.copysign(sq, b))
    if q == 0.0:
        return [0.0]
    return [q / a, c / q]


def cubic_step(g: float, h: float, lip: float) -> CubicStep:
    """Global minimizer of the scalar cubic model ``xi``.

    Stationary points of ``xi`` solve ``g + h d + lip/2 |d| d = 0``, which on
    each half-line is an ordinary quadratic. All real roots on the matching
    half-line are enumerated together with ``d = 0`` and the one with the
    smallest model value wins; ties go to the smaller ``|d|``.
    """
    if not (math.isfinite(g) and math.isfinite(h) and math.isfinite(lip)):
        raise NumericError(f"non-finite cubic step inputs g={g}, h={h}, L={lip}")
    if lip <= 0.0:
        raise InvalidArgumentError(f"Lipschitz modulus must be positive, got {lip}")
    g, h, lip = float(g), float(h), float(lip)

    candidates = [0.0]
    candidates += [r for r in _quadratic_roots(0.5 * lip, h, g) if r >= 0.0]
    candidates += [r for r in _quadratic_roots(-0.5 * lip, h, g) if r <= 0.0]

    best, best_val = 0.0, 0.0
    for d in candidates:
        val = g * d + 0.5 * h * d * d + lip / 6.0 * abs(d) ** 3
        if val < best_val or (val == best_val and abs(d) < abs(best)):
            best, best_val = d, val
    return CubicStep(best, max(-best_val, 0.0))


class SingularVector(NamedTuple):
    u: np.ndarray
    converged: bool
    iterations: int
    rayleigh: list[float]


def leading_left_singular_vector(e, tol: float = 1e-10, max_iter: int = 200, warn: bool = True) -> SingularVector:
    """Leading left singular vector of ``e`` by power iteration.

    Iterates on the smaller of the two Gram matrices and maps back when the
    column count is the smaller side. Starts from the largest-norm column
    so repeated calls agree bit for bit. A single column
    is returned normalized without iterating.
    """
    e = np.asarray(e, dtype=complex)
    if e.ndim == 1:
        e = e[:, None]
    if tol <= 0 or max_iter < 1:
        raise InvalidArgumentError("tol must be > 0 and max_iter >= 1")
    col_norms = np.linalg.norm(e, axis=0)
    if not np.any(col_norms > 0):
        raise DegenerateInputError("leading singular vector of a zero matrix")
    m, p = e.shape
    if p == 1:
        u = e[:, 0] / col_norms[0]
        return SingularVector(u, True, 0, [float(col_norms[0] ** 2)])

    # power iteration on whichever Gram is smaller
    small_side = p < m
    gram = e.conj().T @ e if small_side else e @ e.conj().T
    if small_side:
        # largest-norm column of e, mapped to the P side
        v = gram[:, int(np.argmax(col_norms))].copy()
    else:
        v = e[:, int(np.argmax(col_norms))].copy()
    v /= np.linalg.norm(v)

    rayleigh = [float(np.real(v.conj() @ gram @ v))]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        w = gram @ v
        lam = float(np.real(v.conj() @ w))
        resid = np.linalg.norm(w - lam * v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            break
        v = w / nw
        rayleigh.append(float(np.real(v.conj() @ gram @ v)))
        if resid <= tol * max(lam, np.finfo(float).tiny):
            converged = True
            break
    if small_side:
        u = e @ v
        u /= np.linalg.norm(u)
    else:
        u = v
    if not converged and warn:
        warnings.warn(f"power iteration did not converge in {max_iter} iterations", RuntimeWarning, stacklevel=2)
    return SingularVector(u, converged, it, rayleigh)
