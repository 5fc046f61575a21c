"""Quadrature statistics, squeezing measures, Husimi grids, spin excitation.

Works on any snapshot kind a Trajectory can carry: kets, density matrices
(spin factor traced out where only the field matters), cumulant MomentState
records, and bare QuadraturePoint pairs.  Conventions: X = (a + a')/2,
P = (a - a')/2i, vacuum variance 1/4.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import hilbert as hb
from .analytics import fold_tilt
from .dynamics import MomentState, QuadraturePoint, Trajectory

UNCERTAINTY_FLOOR = 1.0 / 16.0 - 1e-9

_HUSIMI_CHUNK = 8192
_TABLE_COLUMNS = ("t", "meanX", "meanP", "varX", "varP", "covXP",
                  "sigma22", "photon_number")


@dataclass(frozen=True)
class QuadratureStats:
    """Means and second moments of the field quadratures at one time."""

    t: float
    meanX: float
    meanP: float
    varX: float
    varP: float
    covXP: float
    uncertainty_product: float
    tilt_fit: float

    def __post_init__(self):
        if not (self.varX > 0.0 and self.varP > 0.0):
            raise ValueError(
                f"variances must be positive, got ({self.varX:.6g}, {self.varP:.6g})")
        if self.uncertainty_product < UNCERTAINTY_FLOOR:
            raise ValueError(
                f"uncertainty product {self.uncertainty_product:.6g} below 1/16")


@dataclass(frozen=True)
class HusimiGrid:
    """Q(beta) sampled on a rectangular grid, values indexed [im, re]."""

    re_range: tuple[float, float]
    im_range: tuple[float, float]
    resolution: int
    values: np.ndarray
    mass: float

    @property
    def re_axis(self) -> np.ndarray:
        return np.linspace(*self.re_range, self.resolution)

    @property
    def im_axis(self) -> np.ndarray:
        return np.linspace(*self.im_range, self.resolution)


def _field_reduce(state: hb.State) -> hb.State:
    space = state.space
    if space.kind == "fock":
        return state
    if space.kind == "tensor" and space.factors[0].kind == "fock":
        rho = state.to_density_matrix() if isinstance(state, hb.Ket) else state
        return hb.partial_trace(rho, keep=0)
    raise ValueError(f"no oscillator factor in {space.label()}")


def _field_moments(state: hb.State) -> tuple[complex, complex, float]:
    """(<a>, <a^2>, <a'a>) of the oscillator factor."""
    field = _field_reduce(state)
    a = hb.annihilation(field.space)
    mean_a = hb.expectation(a, field)
    mean_a2 = hb.expectation(a @ a, field)
    nbar = hb.expectation(hb.number(field.space), field).real
    return mean_a, mean_a2, nbar


def _second_moments(mean_a: complex, mean_a2: complex,
                    nbar: float) -> tuple[float, float, float, float, float]:
    mean_x, mean_p = mean_a.real, mean_a.imag
    var_x = 0.25 * (2.0 * mean_a2.real + 2.0 * nbar + 1.0) - mean_x * mean_x
    var_p = 0.25 * (2.0 * nbar + 1.0 - 2.0 * mean_a2.real) - mean_p * mean_p
    cov = 0.5 * mean_a2.imag - mean_x * mean_p
    return mean_x, mean_p, var_x, var_p, cov


def quadrature_stats(state, t: float = 0.0) -> QuadratureStats:
    """Quadrature means, covariance, uncertainty product, and covariance tilt.

    Accepts a Ket, DensityMatrix, or a MomentState that tracks second
    moments; the tilt is the unfolded principal-axis angle
    tilt = atan2(2 covXP, varX - varP) / 2.
    """
    if isinstance(state, QuadraturePoint):
        raise ValueError("quadrature means carry no second moments")
    if isinstance(state, MomentState):
        if math.isnan(abs(state.a2)) or math.isnan(state.photon_number):
            raise ValueError("moment state does not track second moments")
        mean_a, mean_a2, nbar = state.a_mean, state.a2, state.photon_number
    else:
        mean_a, mean_a2, nbar = _field_moments(state)
    mean_x, mean_p, var_x, var_p, cov = _second_moments(mean_a, mean_a2, nbar)
    return QuadratureStats(
        t=t, meanX=mean_x, meanP=mean_p, varX=var_x, varP=var_p, covXP=cov,
        uncertainty_product=var_x * var_p - cov * cov,
        tilt_fit=0.5 * math.atan2(2.0 * cov, var_x - var_p))


def stats_series(traj: Trajectory) -> list[QuadratureStats]:
    return [quadrature_stats(snap, t=float(t))
            for t, snap in zip(traj.times, traj.snapshots)]


def _husimi_components(state: hb.State) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of the field state: (weights, coefficient rows)."""
    field = _field_reduce(state)
    if isinstance(field, hb.Ket):
        return np.ones(1), field.vec[np.newaxis, :]
    mat = 0.5 * (field.mat + field.mat.conj().T)
    weights, vectors = np.linalg.eigh(mat)
    keep = weights > 1e-15
    return weights[keep], vectors[:, keep].T


def husimi_q(state, re_range: tuple[float, float] | None = None,
             im_range: tuple[float, float] | None = None,
             resolution: int = 201) -> HusimiGrid:
    """Husimi Q on a grid, auto-sized to 4 sigma around the state if no range.

    Q is assembled from overlaps with truncated coherent states; the
    reported mass is the Riemann sum times the cell area and should land in
    [0.95, 1.0001] when the grid covers the state.
    """
    if not isinstance(state, (hb.Ket, hb.DensityMatrix)):
        raise ValueError("Husimi needs a ket or density-matrix state")
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    mean_a, mean_a2, nbar = _field_moments(state)
    _, _, var_x, var_p, _ = _second_moments(mean_a, mean_a2, nbar)
    half = 4.0 * math.sqrt(max(var_x, var_p, 0.0))
    if re_range is None:
        re_range = (mean_a.real - half, mean_a.real + half)
    if im_range is None:
        im_range = (mean_a.imag - half, mean_a.imag + half)

    weights, coeffs = _husimi_components(state)
    dim = coeffs.shape[1]
    inv_sqrt = 1.0 / np.sqrt(np.arange(1, dim))
    re_axis = np.linspace(*re_range, resolution)
    im_axis = np.linspace(*im_range, resolution)
    beta = (re_axis[np.newaxis, :] + 1j * im_axis[:, np.newaxis]).ravel()

    values = np.empty(beta.size)
    for lo in range(0, beta.size, _HUSIMI_CHUNK):
        chunk = beta[lo:lo + _HUSIMI_CHUNK]
        ladder = np.empty((dim, chunk.size), dtype=np.complex128)
        ladder[0] = np.exp(-0.5 * np.abs(chunk) ** 2)
        step = chunk.conj()
        for n in range(1, dim):
            ladder[n] = ladder[n - 1] * step * inv_sqrt[n - 1]
        overlaps = coeffs @ ladder
        values[lo:lo + chunk.size] = weights @ (
            overlaps.real ** 2 + overlaps.imag ** 2)
    values = values.reshape(resolution, resolution) / math.pi

    cell = ((re_range[1] - re_range[0]) / (resolution - 1)
            * (im_range[1] - im_range[0]) / (resolution - 1))
    mass = float(values.sum() * cell)
    if mass < 0.95:
        warnings.warn(
            f"Husimi grid mass {mass:.4f} < 0.95; try re_range "
            f"({mean_a.real - half:.3g}, {mean_a.real + half:.3g}), im_range "
            f"({mean_a.imag - half:.3g}, {mean_a.imag + half:.3g})",
            RuntimeWarning, stacklevel=2)
    return HusimiGrid(re_range=(float(re_range[0]), float(re_range[1])),
                      im_range=(float(im_range[0]), float(im_range[1])),
                      resolution=resolution, values=values, mass=mass)


def spin_excitation(state) -> float:
    """Excited population per spin: (<Jz> + N/2)/N on the symmetric subspace."""
    if isinstance(state, MomentState):
        if math.isnan(state.sigma22):
            raise ValueError("moment state does not track the spin population")
        return float(state.sigma22)
    if isinstance(state, (hb.Ket, hb.DensityMatrix)):
        space = state.space
        if space.kind == "spin":
            spin = state
        elif space.kind == "tensor" and space.factors[1].kind == "spin":
            rho = state.to_density_matrix() if isinstance(state, hb.Ket) else state
            spin = hb.partial_trace(rho, keep=1)
        else:
            raise ValueError(f"no spin factor in {space.label()}")
        spin_dim = spin.space.spin_dim
        jz_mean = hb.expectation(hb.spin_operators(spin_dim).jz, spin).real
        n_spins = spin_dim - 1
        return float((jz_mean + 0.5 * n_spins) / n_spins)
    raise ValueError(f"no spin factor in a {type(state).__name__}")


def squeezing_db(var: float) -> float:
    """Variance relative to vacuum in dB: 10 log10(4 var)."""
    if not var > 0.0:
        raise ValueError(f"variance must be positive, got {var:.6g}")
    return 10.0 * math.log10(4.0 * var)


def orbit_tilt_fit(mean_x, mean_p) -> float:
    """Principal-axis angle of a sampled mean-value orbit, in (-pi/4, pi/4].

    Least-squares axis of the centered second moments; sample over whole
    drive periods for an unbiased comparison with the analytic orbit tilt.
    """
    x = np.asarray(mean_x, dtype=float)
    p = np.asarray(mean_p, dtype=float)
    if x.shape != p.shape or x.size < 3:
        raise ValueError("need matching orbits with at least 3 samples")
    x = x - x.mean()
    p = p - p.mean()
    a, c, b = float(x @ x), float(p @ p), float(x @ p)
    if abs(2.0 * b) <= 1e-12 * (a + c) and abs(a - c) <= 1e-12 * (a + c):
        return 0.0  # circular orbit: no preferred axis
    return fold_tilt(0.5 * math.atan2(2.0 * b, a - c))


def trajectory_table(traj: Trajectory) -> dict[str, np.ndarray]:
    """Per-sample observable columns; NaN where a snapshot kind has no value."""
    n = len(traj)
    table = {name: np.full(n, math.nan) for name in _TABLE_COLUMNS}
    table["t"] = np.array(traj.times, dtype=float)
    for i, snap in enumerate(traj.snapshots):
        if isinstance(snap, QuadraturePoint):
            table["meanX"][i] = snap.x
            table["meanP"][i] = snap.p
        elif isinstance(snap, MomentState):
            table["meanX"][i] = snap.a_mean.real
            table["meanP"][i] = snap.a_mean.imag
            table["sigma22"][i] = snap.sigma22
            table["photon_number"][i] = snap.photon_number
            if not (math.isnan(abs(snap.a2)) or math.isnan(snap.photon_number)):
                _, _, var_x, var_p, cov = _second_moments(
                    snap.a_mean, snap.a2, snap.photon_number)
                table["varX"][i] = var_x
                table["varP"][i] = var_p
                table["covXP"][i] = cov
        elif isinstance(snap, (hb.Ket, hb.DensityMatrix)):
            mean_a, mean_a2, nbar = _field_moments(snap)
            mean_x, mean_p, var_x, var_p, cov = _second_moments(
                mean_a, mean_a2, nbar)
            table["meanX"][i] = mean_x
            table["meanP"][i] = mean_p
            table["varX"][i] = var_x
            table["varP"][i] = var_p
            table["covXP"][i] = cov
            table["photon_number"][i] = nbar
            space = snap.space
            if space.kind == "tensor" and space.factors[1].kind == "spin":
                table["sigma22"][i] = spin_excitation(snap)
        else:
            raise TypeError(f"unsupported snapshot type {type(snap).__name__}")
    return table
