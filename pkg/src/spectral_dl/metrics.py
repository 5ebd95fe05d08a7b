"""Recovery metrics: wrap-around distance, beta, RSNR and trial success."""

from __future__ import annotations

import math

import numpy as np

from .errors import DegenerateInputError, InvalidArgumentError
from .signal_model import TWO_PI, SensingOperator, sensed_atoms

RSNR_CAP_DB = 300.0
SUCCESS_BETA = 1e-3


def wrap_distance(a, b):
    """Distance on the circle [0, 2pi); broadcasts over arrays.

    Both angles are reduced with ``fmod`` first, so their difference lies in
    ``(-4pi, 4pi)`` and the answer is the smallest ``|r + 2pi k|`` over
    ``|k| <= 2``.
    """
    r = np.fmod(np.asarray(a, dtype=float), TWO_PI) - np.fmod(np.asarray(b, dtype=float), TWO_PI)
    d = np.abs(r)
    for k in (-2, -1, 1, 2):
        d = np.minimum(d, np.abs(r + TWO_PI * k))
    return float(d) if d.ndim == 0 else d


def beta(theta_true, theta_hat) -> float:
    """Mean squared distance from each true frequency to its nearest estimate.

    Returns ``inf`` when there are no estimates.
    """
    t = np.atleast_1d(np.asarray(theta_true, dtype=float))
    e = np.atleast_1d(np.asarray(theta_hat, dtype=float))
    if t.size == 0:
        raise InvalidArgumentError("beta needs at least one true frequency")
    if e.size == 0:
        return float("inf")
    nearest = wrap_distance(t[:, None], e[None, :]).min(axis=1)
    # correctly rounded sum, so the value does not depend on summation order
    return math.fsum(nearest**2) / t.size


def rsnr(scenario, result) -> float:
    """Reconstruction SNR in dB on the full aperture, all snapshots stacked.

    Exact reconstructions are reported as ``RSNR_CAP_DB``.
    """
    truth = scenario.clean_signal()
    signal_norm = np.linalg.norm(truth)
    if signal_norm == 0:
        raise DegenerateInputError("true signal is identically zero")
    full = SensingOperator.identity(scenario.n_full)
    if len(result.frequencies):
        recon = sensed_atoms(result.frequencies, full) @ result.gains
    else:
        recon = np.zeros_like(truth)
    err = np.linalg.norm(truth - recon)
    if err == 0:
        return RSNR_CAP_DB
    return float(min(20.0 * np.log10(signal_norm / err), RSNR_CAP_DB))


def success(scenario, result, beta_threshold: float = SUCCESS_BETA) -> bool:
    """Correct model order and ``beta`` under the threshold."""
    if result.k_hat != scenario.k_true:
        return False
    return beta(scenario.frequencies, result.frequencies) < beta_threshold
