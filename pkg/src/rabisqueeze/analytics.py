"""Closed-form squeezing analytics for the critically coupled oscillator.

Squeezing convention: results are expressed with the magnitude r = |xi|, so
the X quadrature is anti-squeezed (Var X = e^{2r}/4 grows as the coupling
approaches critical) and P is squeezed, matching the ground state of the
quadratic field Hamiltonian.  Functions that also admit the signed-parameter
form (axes mirrored) expose it behind a ``signed_xi`` flag for cross-checks.

Driven-dissipative steady orbits are closed-form only at coupling phase
theta = 0; the orbit functions raise for any other phase.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import hilbert as hb
from .models import RabiSystem

SQUEEZE_CONVENTION = "r = |xi|, X anti-squeezed"


@dataclass(frozen=True)
class SqueezeParams:
    """Squeezing parameters of the subcritical field.

    xi is the (non-positive) squeezing parameter, r = -xi its magnitude,
    epsilon = 1 - g^2/g_c^2 the distance from criticality, and omega_eff
    = omega sqrt(epsilon) the effective oscillator frequency.  Identities
    epsilon = e^{-4r} and omega_eff = omega e^{-2r} hold by construction.
    """

    xi: float
    r: float
    epsilon: float
    omega_eff: float


def squeeze_params(sys: RabiSystem) -> SqueezeParams:
    eps = sys.epsilon
    if eps <= 0.0:
        raise ValueError(
            f"coupling g = {sys.g:.6g} at or above critical g_c = {sys.g_c:.6g}")
    xi = 0.25 * math.log(eps)
    return SqueezeParams(xi=xi, r=-xi, epsilon=eps,
                         omega_eff=sys.omega * math.sqrt(eps))


# ---------------------------------------------------------------------------
# Squeezed states
# ---------------------------------------------------------------------------

def squeezed_fock_state(space: hb.HilbertSpace, n: int, xi: float) -> hb.Ket:
    """Squeeze operator applied to Fock level ``n``, renormalized after truncation."""
    psi = hb.squeeze(space, xi) @ hb.fock_ket(space, n)
    psi = hb.Ket(psi.vec, space, normalize=True)
    hb.check_truncation(psi)
    return psi


def squeezed_coherent_state(space: hb.HilbertSpace, alpha: complex, xi: float,
                            t: float = 0.0, omega_eff: float | None = None) -> hb.Ket:
    """Coherent superposition of squeezed Fock levels at evolution time ``t``.

    Level ``n`` carries phase e^{-i n omega_eff t}; ``omega_eff`` defaults to
    exp(2 xi), the effective frequency in units of the bare one when ``xi``
    is the (negative) squeezing parameter.  The result is normalized.
    """
    if omega_eff is None:
        omega_eff = math.exp(2.0 * xi)
    base = hb.coherent_ket(space, alpha)
    phases = np.exp(-1j * omega_eff * t * np.arange(space.dim))
    rot = hb.Ket(base.vec * phases, space, _checked=False)
    psi = hb.squeeze(space, xi) @ rot
    psi = hb.Ket(psi.vec, space, normalize=True)
    hb.check_truncation(psi)
    return psi


# ---------------------------------------------------------------------------
# Kicked orbits
# ---------------------------------------------------------------------------

def kicked_orbit(sys: RabiSystem, alpha: float, t,
                 signed_xi: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature means of a kicked state: an ellipse traversed at omega_eff.

    The X amplitude is stretched by e^{r} and the P amplitude shrunk by
    e^{-r}; their ratio equals omega_eff / omega.  ``signed_xi`` evaluates
    the mirrored form with the signed parameter instead.
    """
    alpha = float(alpha)
    sp = squeeze_params(sys)
    stretch = math.exp(sp.xi if signed_xi else sp.r)
    t = np.asarray(t, dtype=float)
    phase = sp.omega_eff * t
    return alpha * np.cos(phase) * stretch, -alpha * np.sin(phase) / stretch


def kicked_variances(sys: RabiSystem,
                     signed_xi: bool = False) -> tuple[float, float]:
    """Time-independent quadrature variances of a kicked state."""
    sp = squeeze_params(sys)
    s = sp.xi if signed_xi else sp.r
    return 0.25 * math.exp(2.0 * s), 0.25 * math.exp(-2.0 * s)


# ---------------------------------------------------------------------------
# Adiabatic spin elimination
# ---------------------------------------------------------------------------

def adiabatic_sigma12(sys: RabiSystem, a_mean: complex) -> complex:
    """Spin coherence tracking a slowly varying field amplitude.

    Valid when the spin splitting dominates drive and decay scales; warns
    otherwise.  Feeding the result back into the first-order field equation
    reproduces the quadratic drift of the low-energy Hamiltonian exactly.
    """
    if sys.Omega < 10.0 * max(sys.omega_d, sys.gamma):
        warnings.warn(
            f"Omega = {sys.Omega:.3g} is not large against drive/decay scales; "
            "adiabatic elimination is inaccurate here", RuntimeWarning,
            stacklevel=2)
    am = complex(a_mean)
    return -(sys.g / 2.0) * (am + am.conjugate()) / sys.Omega


# ---------------------------------------------------------------------------
# Driven-dissipative steady orbit
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SteadyOrbit:
    """Harmonic coefficients of the steady quadrature orbit.

    X(t) = x_sin sin(omega_d t) + x_cos cos(omega_d t) and likewise for P;
    ``tilt`` is the principal-axis angle of the swept ellipse.
    """

    x_sin: float
    x_cos: float
    p_sin: float
    p_cos: float
    tilt: float
    omega_d: float

    def means(self, t) -> tuple[np.ndarray, np.ndarray]:
        t = np.asarray(t, dtype=float)
        s = np.sin(self.omega_d * t)
        c = np.cos(self.omega_d * t)
        return self.x_sin * s + self.x_cos * c, self.p_sin * s + self.p_cos * c


def fold_tilt(phi: float) -> float:
    """Reduce an axis angle modulo pi/2 into (-pi/4, pi/4]."""
    while phi > math.pi / 4:
        phi -= math.pi / 2
    while phi <= -math.pi / 4:
        phi += math.pi / 2
    return phi


def _axis_angle(x_sin: float, x_cos: float, p_sin: float, p_cos: float) -> float:
    # principal axes of the ellipse swept by (sin, cos) -> (X, P)
    a = x_sin * x_sin + x_cos * x_cos
    c = p_sin * p_sin + p_cos * p_cos
    b = x_sin * p_sin + x_cos * p_cos
    if abs(2.0 * b) <= 1e-15 * (a + c) and abs(a - c) <= 1e-15 * (a + c):
        return 0.0  # circular orbit: no preferred axis
    return fold_tilt(0.5 * math.atan2(2.0 * b, a - c))


def steady_orbit(sys: RabiSystem) -> SteadyOrbit:
    """Long-time quadrature orbit of the driven-dissipative low-energy model."""
    if sys.theta != 0.0:
        raise ValueError("steady orbit closed forms require coupling phase theta = 0")
    eps = sys.epsilon
    w, wd, k, eta = sys.omega, sys.omega_d, sys.kappa, sys.eta
    if k == 0.0 and abs(wd * wd - eps * w * w) <= \
            1e-12 * max(wd * wd, abs(eps) * w * w):
        raise ValueError("undamped resonance omega_d^2 = epsilon omega^2; "
                         "no steady orbit")
    den = k ** 4 + 8 * k ** 2 * (eps * w ** 2 + wd ** 2) \
        + 16 * (wd ** 2 - eps * w ** 2) ** 2
    x_sin = -2 * eta * k * (k ** 2 + 4 * eps * w ** 2 + 4 * wd * (2 * w + wd)) / den
    x_cos = -4 * eta * (k ** 2 * (w - wd)
                        + 4 * (w + wd) * (eps * w ** 2 - wd ** 2)) / den
    p_sin = 4 * eta * (k ** 2 * (eps * w - wd)
                       + 4 * (eps * w + wd) * (eps * w ** 2 - wd ** 2)) / den
    p_cos = -2 * eta * k * (k ** 2 + 4 * (eps * w * (w + 2 * wd) + wd ** 2)) / den
    return SteadyOrbit(x_sin, x_cos, p_sin, p_cos,
                       _axis_angle(x_sin, x_cos, p_sin, p_cos), wd)


def steady_state_means(sys: RabiSystem, t) -> tuple[np.ndarray, np.ndarray]:
    """Steady ⟨X⟩ and ⟨P⟩ at the given times."""
    return steady_orbit(sys).means(t)


def tilt_angle(sys: RabiSystem, formula: str = "orbit") -> float:
    """Tilt of the steady orbit, folded to (-pi/4, pi/4].

    ``formula="orbit"`` (default) returns the principal-axis angle of the
    actual steady ellipse, equal to atan(kappa / (omega (1 + epsilon)
    + 2 omega_d)) / 2.  ``formula="rational"`` evaluates an alternative
    rational closed form for tan(2 phi); it does not reproduce the orbit
    axes (off by 1-4 degrees with opposite sign at typical driven points)
    and is retained for magnitude-level cross-checks only.
    """
    if sys.theta != 0.0:
        raise ValueError("tilt closed forms require coupling phase theta = 0")
    if formula == "orbit":
        return steady_orbit(sys).tilt
    if formula == "rational":
        eps = sys.epsilon
        w, wd, k = sys.omega, sys.omega_d, sys.kappa
        num = k * (k ** 4
                   + 8 * k ** 2 * (eps * w * (w + wd) + wd * (w - wd))
                   + 16 * (eps * w ** 2 - wd ** 2)
                   * (eps * w * (w + 2 * wd) + wd * (2 * w + 3 * wd)))
        den = (k ** 4 * (eps * w + w - 6 * wd)
               + 8 * k ** 2 * (eps * (eps + 1) * w ** 3 - 2 * eps * w ** 2 * wd
                               - 3 * (eps + 1) * w * wd ** 2 - 2 * wd ** 3)
               + 16 * (eps * w + w + 2 * wd) * (wd ** 2 - eps * w ** 2) ** 2)
        if num == 0.0 and den == 0.0:
            return 0.0
        return fold_tilt(0.5 * math.atan2(num, den))
    raise ValueError(f"unknown tilt formula {formula!r}")


# ---------------------------------------------------------------------------
# Field spectrum
# ---------------------------------------------------------------------------

def bogoliubov(sys: RabiSystem) -> tuple[float, float, float]:
    """Diagonalized field frequency and transform coefficients.

    Returns (omega_eff, cosh xi, sinh xi) for the mode b = a cosh xi
    - a† sinh xi that diagonalizes the quadratic field Hamiltonian.
    """
    sp = squeeze_params(sys)
    return sp.omega_eff, math.cosh(sp.xi), math.sinh(sp.xi)


def naive_photon_number(sys: RabiSystem) -> float:
    """Ground-state photon number sinh^2 xi of the squeezed field.

    Diverges like (1/4) epsilon^{-1/2} near criticality (the prefactor is
    exactly one quarter).
    """
    sp = squeeze_params(sys)
    return math.sinh(sp.xi) ** 2


def dispersive_shift(sys: RabiSystem) -> float:
    """Dispersive approximation omega - g^2/(2 Omega) of the field frequency."""
    return sys.omega - sys.g ** 2 / (2.0 * sys.Omega)
