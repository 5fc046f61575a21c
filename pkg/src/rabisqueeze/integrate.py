"""Adaptive Dormand-Prince 5(4) propagation with quartic dense output.

This is the production integrator for every engine in the package; the
numba kernels in ``_kernels`` run the same tableau and acceptance logic
for the large state vectors, and scipy's solve_ivp appears only in the
test suite as an independent oracle.

Error control follows the standard embedded-pair recipe: componentwise
scale sc_i = atol + rtol * max(|y0_i|, |y1_i|), RMS error norm, step
factor 0.9 * errnorm^(-1/5) clamped to [0.2, 10]. Sampling uses the
degree-4 continuous extension of the pair (interpolation order 4), so
output times are decoupled from step placement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Dormand-Prince 5(4) tableau (exact rationals).
DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
DP_A = np.zeros((7, 7))
DP_A[1, 0] = 1 / 5
DP_A[2, :2] = (3 / 40, 9 / 40)
DP_A[3, :3] = (44 / 45, -56 / 15, 32 / 9)
DP_A[4, :4] = (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729)
DP_A[5, :5] = (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656)
DP_A[6, :6] = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84)
DP_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
DP_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920,
                 -17253 / 339200, 22 / 525, -1 / 40])
# Continuous extension: b_i(theta) = sum_j DP_P[i, j] theta^(j+1).
DP_P = np.array([
    [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

STATUS_OK = 0
STATUS_MAX_STEPS = 1
STATUS_STEP_UNDERFLOW = 2


class IntegrationFailure(RuntimeError):
    """Raised when the adaptive loop cannot reach t_end."""


@dataclass
class IntegratorConfig:
    """Tolerances and stepping policy shared by all engines.

    Attributes
    ----------
    rtol, atol : embedded-pair error control tolerances
    max_step : cap on the step size in units of 1/Omega (the qubit
        splitting is the fastest scale in the full models); the engine
        converts to an absolute cap via ``absolute_max_step``
    sample_dt : observable recording interval; None lets the engine pick
        a protocol-appropriate default
    max_steps : hard safety limit on accepted+rejected steps
    """

    rtol: float = 1e-8
    atol: float = 1e-10
    max_step: float = 0.1
    sample_dt: float | None = None
    max_steps: int = 20_000_000

    def __post_init__(self):
        if self.rtol <= 0 or self.atol <= 0:
            raise ValueError("rtol and atol must be positive")
        if self.max_step <= 0:
            raise ValueError("max_step must be positive")
        if self.sample_dt is not None and self.sample_dt <= 0:
            raise ValueError("sample_dt must be positive")

    def absolute_max_step(self, Omega: float) -> float:
        return self.max_step / Omega


def sample_grid(t0: float, t_end: float, dt: float) -> np.ndarray:
    """Uniform sample times from t0 to t_end inclusive (endpoint snapped)."""
    if t_end < t0:
        raise ValueError("t_end must be >= t0")
    n = max(1, int(round((t_end - t0) / dt)))
    return t0 + (t_end - t0) * np.arange(n + 1) / n


@dataclass
class StepStats:
    accepted: int
    rejected: int
    status: int
    t_last: float = math.nan

    def raise_on_failure(self):
        where = "" if math.isnan(self.t_last) else f" at t = {self.t_last:.6g}"
        if self.status == STATUS_MAX_STEPS:
            raise IntegrationFailure(
                f"step budget exhausted after {self.accepted} steps{where}")
        if self.status == STATUS_STEP_UNDERFLOW:
            raise IntegrationFailure(
                f"step size underflow{where} (problem too stiff for the tolerance)")


def initial_step(y0, f0, rtol, atol, h_max, span):
    sc = atol + rtol * np.abs(y0)
    d0 = math.sqrt(float(np.mean(np.abs(y0 / sc) ** 2)))
    d1 = math.sqrt(float(np.mean(np.abs(f0 / sc) ** 2)))
    if d0 < 1e-10 or d1 < 1e-30:
        h = 1e-6 * span
    else:
        h = 0.01 * d0 / d1
    return min(h, h_max, span)


def integrate_adaptive(rhs, t0: float, y0: np.ndarray, t_end: float,
                       samples: np.ndarray, rtol: float, atol: float,
                       h_max: float, renorm: bool = False,
                       max_steps: int = 20_000_000):
    """Propagate dy/dt = rhs(t, y) and return the states at ``samples``.

    Pure-python reference implementation; the numba drivers mirror the
    identical logic. ``renorm`` rescales to unit 2-norm after each
    accepted step (valid for linear norm-preserving flows).

    Returns
    -------
    (ys, stats) : ys has shape (len(samples), len(y0)), complex
    """
    y = np.asarray(y0, dtype=np.complex128).copy()
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size and (samples[0] < t0 - 1e-12 or samples[-1] > t_end + 1e-12):
        raise ValueError("sample times outside the integration window")
    out = np.empty((samples.size, y.size), dtype=np.complex128)
    si = 0
    # samples at or before t0 get the initial state
    while si < samples.size and samples[si] <= t0 + 1e-15 * max(1.0, abs(t0)):
        out[si] = y
        si += 1
    if t_end <= t0:
        stats = StepStats(0, 0, STATUS_OK)
        return out, stats

    span = t_end - t0
    k = np.empty((7, y.size), dtype=np.complex128)
    k[0] = rhs(t0, y)
    h = initial_step(y, k[0], rtol, atol, h_max, span)
    t = t0
    accepted = rejected = 0
    status = STATUS_OK

    while t < t_end:
        if accepted + rejected >= max_steps:
            status = STATUS_MAX_STEPS
            break
        if h < 1e-14 * max(1.0, abs(t)):
            # controller collapse, not an end-of-interval clamp
            status = STATUS_STEP_UNDERFLOW
            break
        h = min(h, t_end - t)
        for i in range(1, 7):
            yi = y + h * (DP_A[i, :i] @ k[:i])
            k[i] = rhs(t + DP_C[i] * h, yi)
        y1 = y + h * (DP_B @ k)
        err = h * (DP_E @ k)
        sc = atol + rtol * np.maximum(np.abs(y), np.abs(y1))
        errn = math.sqrt(float(np.mean(np.abs(err / sc) ** 2)))
        if math.isnan(errn):
            # state diverged; NaN would defeat the step controller
            status = STATUS_STEP_UNDERFLOW
            break
        if errn <= 1.0:
            # dense output for samples inside (t, t+h]
            t_new = t + h
            if t_end - t_new < 1e-14 * max(1.0, abs(t_end)):
                t_new = t_end
            scale = 1.0
            if renorm:
                scale = 1.0 / float(np.linalg.norm(y1))
                y1 = y1 * scale
            while si < samples.size and samples[si] <= t_new + 1e-15 * max(1.0, abs(t_new)):
                theta = (samples[si] - t) / h
                if theta >= 1.0 - 1e-12:
                    out[si] = y1  # step node: exact (renormalized) state
                else:
                    pvec = np.array([theta, theta ** 2, theta ** 3, theta ** 4])
                    out[si] = y + h * ((DP_P @ pvec) @ k)
                si += 1
            y = y1
            k[0] = k[6] * scale  # FSAL (linear flow commutes with the rescale)
            t = t_new
            accepted += 1
            factor = 10.0 if errn == 0.0 else min(10.0, max(0.2, 0.9 * errn ** -0.2))
            h = min(h * factor, h_max)
        else:
            rejected += 1
            h *= max(0.2, 0.9 * errn ** -0.2)

    stats = StepStats(accepted, rejected, status, t_last=t)
    if status == STATUS_OK and si < samples.size:
        # floating point shaved the last sample past t_end; snap it
        out[si:] = y
    return out, stats
