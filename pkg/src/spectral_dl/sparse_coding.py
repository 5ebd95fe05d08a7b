"""Orthogonal Matching Pursuit with a residual-norm stopping rule."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .dictionary import ParametricDictionary
from .errors import InvalidArgumentError, InvalidDictionaryError
from .signal_model import ObservationSet

COND_LIMIT = 1e12


class OMPResult(NamedTuple):
    support: list[int]
    coeffs: np.ndarray
    residual_norm: float
    ill_conditioned: bool = False


@dataclass
class SparseCode:
    """Column-sparse coefficient matrix stored per snapshot."""

    n_atoms: int
    supports: list[list[int]]
    coeffs: list[np.ndarray]
    ill_conditioned: int = 0

    @property
    def snapshots(self) -> int:
        return len(self.supports)

    def to_dense(self) -> np.ndarray:
        x = np.zeros((self.n_atoms, self.snapshots), dtype=complex)
        for t, (supp, c) in enumerate(zip(self.supports, self.coeffs)):
            x[supp, t] = c
        return x

    def row_support(self, k: int) -> list[int]:
        """Snapshots whose support contains atom ``k``."""
        return [t for t, supp in enumerate(self.supports) if k in supp]

    @classmethod
    def from_dense(cls, x: np.ndarray) -> "SparseCode":
        x = np.asarray(x, dtype=complex)
        supports, coeffs = [], []
        for t in range(x.shape[1]):
            nz = np.flatnonzero(x[:, t])
            supports.append(nz.tolist())
            coeffs.append(x[nz, t].copy())
        return cls(x.shape[0], supports, coeffs)


def _ls_fit(sub: np.ndarray, y: np.ndarray):
    """Least squares via the Gram matrix; returns (coeffs, cond) or (None, cond)."""
    gram = sub.conj().T @ sub
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        return None, cond
    try:
        c = cho_solve(cho_factor(gram, lower=True), sub.conj().T @ y)
    except LinAlgError:
        return None, np.inf
    return c, cond


def omp_encode(y_col, dictionary, eps: float, max_support: int | None = None) -> OMPResult:
    """Greedy sparse code of one observation column.

    ``dictionary`` is a :class:`ParametricDictionary` or a plain M x R atom
    matrix. Atoms are ranked by normalized correlation with the residual;
    after each pick the coefficients are refit by least squares on the
    unnormalized atoms. Stops once ``||r|| <= eps`` or the support reaches
    ``max_support`` (default ``min(M, R)``). If a refit would be
    ill-conditioned the previous fit is kept and ``ill_conditioned`` is set.
    """
    atoms = dictionary.atoms if isinstance(dictionary, ParametricDictionary) else np.asarray(dictionary)
    y_col = np.asarray(y_col, dtype=complex).ravel()
    m, r = atoms.shape
    if r == 0:
        raise InvalidDictionaryError("empty dictionary")
    if eps <= 0:
        raise InvalidArgumentError(f"eps must be positive, got {eps}")
    limit = min(m, r)
    if max_support is None:
        max_support = limit
    if not 1 <= max_support <= limit:
        raise InvalidArgumentError(f"max_support must lie in [1, {limit}], got {max_support}")
    norms = np.linalg.norm(atoms, axis=0)
    if np.any(norms == 0):
        raise InvalidDictionaryError("dictionary contains a zero-norm atom")

    support: list[int] = []
    coeffs = np.zeros(0, dtype=complex)
    resid = y_col.copy()
    rnorm = float(np.linalg.norm(resid))
    available = np.ones(r, dtype=bool)
    while rnorm > eps and len(support) < max_support:
        corr = np.abs(atoms.conj().T @ resid) / norms
        corr[~available] = -1.0
        k = int(np.argmax(corr))
        trial = support + [k]
        c, _ = _ls_fit(atoms[:, trial], y_col)
        if c is None:
            return OMPResult(support, coeffs, rnorm, True)
        support, coeffs = trial, c
        available[k] = False
        resid = y_col - atoms[:, support] @ coeffs
        rnorm = float(np.linalg.norm(resid))
    return OMPResult(support, coeffs, rnorm, False)


def encode_all(obs, dictionary, eps: float, max_support: int | None = None) -> SparseCode:
    """Independent OMP on every snapshot column."""
    y = obs.y if isinstance(obs, ObservationSet) else np.asarray(obs)
    if y.ndim == 1:
        y = y[:, None]
    atoms = dictionary.atoms if isinstance(dictionary, ParametricDictionary) else np.asarray(dictionary)
    supports, coeffs, bad = [], [], 0
    for t in range(y.shape[1]):
        res = omp_encode(y[:, t], atoms, eps, max_support)
        supports.append(res.support)
        coeffs.append(res.coeffs)
        bad += res.ill_conditioned
    return SparseCode(atoms.shape[1], supports, coeffs, bad)
