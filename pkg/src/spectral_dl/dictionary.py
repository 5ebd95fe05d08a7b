"""Parametric Fourier dictionary with a cached sensed atom matrix."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError
from .signal_model import TWO_PI, SensingOperator, sensed_atoms, wrap_angle


@dataclass
class ParametricDictionary:
    """Atoms ``Phi a(theta_r)`` for a list of frequencies.

    ``atoms`` is kept in sync with ``frequencies``; use :meth:`set_frequency`
    and :meth:`keep` rather than assigning to either directly.
    """

    frequencies: np.ndarray
    sensing: SensingOperator
    atoms: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.frequencies = wrap_angle(np.atleast_1d(np.asarray(self.frequencies, dtype=float)).copy())
        self.atoms = sensed_atoms(self.frequencies, self.sensing)

    @classmethod
    def uniform(cls, r: int, sensing: SensingOperator) -> "ParametricDictionary":
        if r < 1:
            raise InvalidArgumentError(f"grid size must be >= 1, got {r}")
        return cls(np.arange(r) * (TWO_PI / r), sensing)

    @property
    def n_atoms(self) -> int:
        return len(self.frequencies)

    @property
    def n_full(self) -> int:
        return self.sensing.n_full

    def set_frequency(self, k: int, theta: float) -> None:
        theta = wrap_angle(theta)
        self.frequencies[k] = theta
        self.atoms[:, k] = sensed_atoms([theta], self.sensing)[:, 0]

    def keep(self, mask) -> None:
        """Drop every atom whose entry in ``mask`` is false."""
        mask = np.asarray(mask, dtype=bool)
        self.frequencies = self.frequencies[mask]
        self.atoms = self.atoms[:, mask]

    def copy(self) -> "ParametricDictionary":
        return ParametricDictionary(self.frequencies.copy(), self.sensing)
