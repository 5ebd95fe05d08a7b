"""Uniform-linear-array signal model: steering vectors, sensing and scenarios.

Observations follow ``Y = Phi A(theta) S + E`` where the columns of ``A`` are
unit-norm Fourier atoms ``a(theta)[m] = exp(1j*m*theta) / sqrt(N)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, InvalidArgumentError, InvalidDimensionError, ParseError

TWO_PI = 2.0 * np.pi

AMPLITUDE_MEAN = 10.0
AMPLITUDE_VAR = 3.0
AMPLITUDE_FLOOR = 1e-3
MAX_REJECTION_DRAWS = 100_000


def wrap_angle(theta):
    """Reduce angles to [0, 2*pi)."""
    out = np.mod(theta, TWO_PI)
    # np.mod can round tiny negative inputs up to exactly 2*pi
    out = np.where(out >= TWO_PI, 0.0, out)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class SensingOperator:
    """Identity or row-subsampling operator ``Phi``.

    ``indices`` is empty for the identity; otherwise it lists the kept rows of
    the full ``n_full``-point aperture in increasing order.
    """

    n_full: int
    indices: tuple[int, ...] = ()
    kind: str = "identity"

    def __post_init__(self):
        if self.n_full < 1:
            raise InvalidDimensionError(f"n_full must be >= 1, got {self.n_full}")
        if self.kind not in ("identity", "row-subsampling"):
            raise InvalidArgumentError(f"unknown sensing kind {self.kind!r}")
        idx = tuple(int(i) for i in self.indices)
        object.__setattr__(self, "indices", idx)
        if self.kind == "identity":
            if idx:
                raise InvalidArgumentError("identity sensing takes no indices")
            return
        if not idx:
            raise InvalidArgumentError("row-subsampling needs at least one index")
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise InvalidArgumentError("indices must be strictly increasing")
        if idx[0] < 0 or idx[-1] >= self.n_full:
            raise InvalidArgumentError(f"indices must lie in [0, {self.n_full})")

    @classmethod
    def identity(cls, n: int) -> "SensingOperator":
        return cls(n_full=n)

    @classmethod
    def subsample(cls, n: int, indices) -> "SensingOperator":
        return cls(n_full=n, indices=tuple(sorted(int(i) for i in indices)), kind="row-subsampling")

    @classmethod
    def random_subsample(cls, n: int, m: int, rng: np.random.Generator) -> "SensingOperator":
        """Pick ``m`` of ``n`` rows uniformly without replacement."""
        if not 1 <= m <= n:
            raise InvalidDimensionError(f"need 1 <= M <= N, got M={m}, N={n}")
        if m == n:
            return cls.identity(n)
        return cls.subsample(n, rng.choice(n, size=m, replace=False))

    @property
    def n_meas(self) -> int:
        return self.n_full if self.kind == "identity" else len(self.indices)

    @property
    def rows(self) -> np.ndarray:
        """Integer sample positions ``m`` seen by the operator."""
        if self.kind == "identity":
            return np.arange(self.n_full)
        return np.asarray(self.indices, dtype=int)


def steering_vector(theta: float, n: int) -> np.ndarray:
    """Unit-norm Fourier atom of length ``n`` at angular frequency ``theta``."""
    if n < 1:
        raise InvalidDimensionError(f"n must be >= 1, got {n}")
    m = np.arange(n)
    return np.exp(1j * m * theta) / np.sqrt(n)


def steering_derivative(theta: float, n: int, order: int) -> np.ndarray:
    """``D**order @ a(theta)`` with ``D = diag(0, 1j, 2j, ..., (n-1)j)``."""
    if order not in (1, 2, 3):
        raise InvalidArgumentError(f"order must be 1, 2 or 3, got {order}")
    if n < 1:
        raise InvalidDimensionError(f"n must be >= 1, got {n}")
    m = np.arange(n)
    return (1j * m) ** order * np.exp(1j * m * theta) / np.sqrt(n)


def apply_sensing(op: SensingOperator, v: np.ndarray) -> np.ndarray:
    """Apply ``Phi`` to a length-N vector (or to each column of an N x P array)."""
    v = np.asarray(v)
    if v.shape[0] != op.n_full:
        raise InvalidDimensionError(f"expected leading dimension {op.n_full}, got {v.shape[0]}")
    if op.kind == "identity":
        return v
    return v[list(op.indices)]


def sensed_atoms(thetas, op: SensingOperator) -> np.ndarray:
    """M x R matrix whose columns are ``Phi a(theta_r)``."""
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    return np.exp(1j * np.outer(op.rows, thetas)) / np.sqrt(op.n_full)


def psnr_to_sigma(psnr_db: float) -> float:
    """Noise standard deviation for ``PSNR = 10 log10(1 / sigma**2)``."""
    return float(10.0 ** (-psnr_db / 20.0))


def sigma_to_psnr(sigma: float) -> float:
    return float(10.0 * np.log10(1.0 / sigma**2))


def wrap_gaps(thetas) -> np.ndarray:
    """All pairwise wrap-around distances (upper triangle, flattened)."""
    t = np.asarray(thetas, dtype=float)
    d = np.abs(t[:, None] - t[None, :]) % TWO_PI
    d = np.minimum(d, TWO_PI - d)
    iu = np.triu_indices(len(t), k=1)
    return d[iu]


@dataclass
class Scenario:
    n_full: int
    n_meas: int
    snapshots: int
    k_true: int
    frequencies: np.ndarray
    gains: np.ndarray
    noise_sigma: float
    sensing: SensingOperator
    min_separation: float
    seed: int

    def clean_signal(self) -> np.ndarray:
        """Noiseless full-aperture signal ``A(theta) S`` (N x T)."""
        full = SensingOperator.identity(self.n_full)
        return sensed_atoms(self.frequencies, full) @ self.gains

    def to_json(self) -> dict:
        return {
            "n_full": self.n_full,
            "n_meas": self.n_meas,
            "snapshots": self.snapshots,
            "k_true": self.k_true,
            "frequencies": [float(f) for f in self.frequencies],
            "noise_sigma": float(self.noise_sigma),
            "sensing_indices": list(self.sensing.rows.tolist()),
            "seed": int(self.seed),
            "min_separation": float(self.min_separation),
            "gains_re": np.real(self.gains).tolist(),
            "gains_im": np.imag(self.gains).tolist(),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "Scenario":
        n = int(doc["n_full"])
        idx = [int(i) for i in doc["sensing_indices"]]
        if len(idx) == n:
            sensing = SensingOperator.identity(n)
        else:
            sensing = SensingOperator.subsample(n, idx)
        freqs = np.asarray(doc["frequencies"], dtype=float)
        if "gains_re" in doc:
            gains = np.asarray(doc["gains_re"]) + 1j * np.asarray(doc["gains_im"])
        else:
            gains = np.zeros((len(freqs), int(doc["snapshots"])), dtype=complex)
        return cls(
            n_full=n,
            n_meas=int(doc["n_meas"]),
            snapshots=int(doc["snapshots"]),
            k_true=int(doc["k_true"]),
            frequencies=freqs,
            gains=gains.reshape(len(freqs), int(doc["snapshots"])),
            noise_sigma=float(doc["noise_sigma"]),
            sensing=sensing,
            min_separation=float(doc.get("min_separation", 0.0)),
            seed=int(doc["seed"]),
        )


@dataclass
class ObservationSet:
    y: np.ndarray
    scenario: Scenario | None = field(default=None, repr=False)

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=complex)
        if self.y.ndim == 1:
            self.y = self.y[:, None]
        if self.y.ndim != 2:
            raise InvalidDimensionError("observations must be an M x T matrix")
        if self.scenario is not None and self.y.shape != (self.scenario.n_meas, self.scenario.snapshots):
            raise InvalidDimensionError(
                f"observation shape {self.y.shape} does not match scenario "
                f"({self.scenario.n_meas}, {self.scenario.snapshots})"
            )

    @property
    def n_meas(self) -> int:
        return self.y.shape[0]

    @property
    def snapshots(self) -> int:
        return self.y.shape[1]


def draw_frequencies(k: int, min_separation: float, rng: np.random.Generator) -> np.ndarray:
    """Uniform frequencies on [0, 2pi) whose wrap-around gaps all reach ``min_separation``."""
    if k * min_separation >= TWO_PI:
        raise ConfigurationError(f"cannot place {k} frequencies {min_separation:.4g} apart on the circle")
    for _ in range(MAX_REJECTION_DRAWS):
        thetas = rng.uniform(0.0, TWO_PI, size=k)
        if k < 2 or wrap_gaps(thetas).min() >= min_separation:
            return thetas
    raise ConfigurationError(
        f"no feasible draw of {k} frequencies with separation {min_separation:.4g} "
        f"after {MAX_REJECTION_DRAWS} attempts"
    )


def generate_scenario(
    n_full: int,
    n_meas: int,
    snapshots: int,
    k_true: int,
    noise_sigma: float,
    min_separation: float = 0.0,
    seed: int = 0,
) -> tuple[Scenario, ObservationSet]:
    """Draw a random line-spectrum scenario and its observations.

    Amplitudes are ``N(10, 3)`` clamped to a small positive floor and are
    shared across snapshots; each snapshot gets an independent uniform phase.
    Noise is circular complex Gaussian with per-entry variance ``sigma**2``.
    When ``n_meas < n_full`` the rows are subsampled uniformly at random.
    """
    if n_meas > n_full or n_meas < 1:
        raise ConfigurationError(f"need 1 <= M <= N, got M={n_meas}, N={n_full}")
    if snapshots < 1 or k_true < 1:
        raise ConfigurationError("snapshots and k_true must be >= 1")
    if noise_sigma < 0:
        raise ConfigurationError("noise_sigma must be nonnegative")
    rng = np.random.default_rng(seed)
    thetas = draw_frequencies(k_true, min_separation, rng)
    amps = np.maximum(rng.normal(AMPLITUDE_MEAN, np.sqrt(AMPLITUDE_VAR), size=k_true), AMPLITUDE_FLOOR)
    phases = rng.uniform(0.0, TWO_PI, size=(k_true, snapshots))
    gains = amps[:, None] * np.exp(1j * phases)
    sensing = SensingOperator.random_subsample(n_full, n_meas, rng)
    noise = noise_sigma / np.sqrt(2.0) * (
        rng.standard_normal((n_meas, snapshots)) + 1j * rng.standard_normal((n_meas, snapshots))
    )
    y = sensed_atoms(thetas, sensing) @ gains + noise
    scenario = Scenario(
        n_full=n_full,
        n_meas=n_meas,
        snapshots=snapshots,
        k_true=k_true,
        frequencies=thetas,
        gains=gains,
        noise_sigma=float(noise_sigma),
        sensing=sensing,
        min_separation=float(min_separation),
        seed=int(seed),
    )
    return scenario, ObservationSet(y, scenario)


# -- observation files -------------------------------------------------------


def format_observations(y: np.ndarray) -> str:
    """Text form: ``"M T"`` then M rows of 2T floats, re/im interleaved."""
    y = np.asarray(y, dtype=complex)
    if y.ndim == 1:
        y = y[:, None]
    m, t = y.shape
    lines = [f"{m} {t}"]
    for row in y:
        inter = np.empty(2 * t)
        inter[0::2] = row.real
        inter[1::2] = row.imag
        lines.append(" ".join(repr(float(v)) for v in inter))
    return "\n".join(lines) + "\n"


def parse_observations(text: str) -> np.ndarray:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ParseError("empty observation file")
    head = lines[0].split()
    try:
        m, t = int(head[0]), int(head[1])
    except (IndexError, ValueError) as exc:
        raise ParseError(f"bad header line {lines[0]!r}") from exc
    if len(head) != 2 or m < 1 or t < 1:
        raise ParseError(f"bad header line {lines[0]!r}")
    if len(lines) - 1 != m:
        raise ParseError(f"expected {m} data rows, found {len(lines) - 1}")
    y = np.empty((m, t), dtype=complex)
    for i, ln in enumerate(lines[1:]):
        try:
            vals = [float(v) for v in ln.split()]
        except ValueError as exc:
            raise ParseError(f"row {i + 1}: {exc}") from exc
        if len(vals) != 2 * t:
            raise ParseError(f"row {i + 1}: expected {2 * t} values, found {len(vals)}")
        y[i] = np.asarray(vals[0::2]) + 1j * np.asarray(vals[1::2])
    return y


def save_observations(path, y: np.ndarray) -> None:
    Path(path).write_text(format_observations(y))


def load_observations(path) -> ObservationSet:
    return ObservationSet(parse_observations(Path(path).read_text()))


def save_scenario(path, scenario: Scenario) -> None:
    Path(path).write_text(json.dumps(scenario.to_json(), indent=2, sort_keys=True) + "\n")


def load_scenario(path) -> Scenario:
    return Scenario.from_json(json.loads(Path(path).read_text()))
