"""System parameters and Hamiltonian/Liouvillian builders.

All frequencies are in units of the cavity frequency omega (so omega = 1
in every preset) and times in 1/omega. The coupling is specified either
directly (g) or via the ratio g/g_c with g_c = sqrt(omega * Omega).

Model zoo:

* ``rabi``:      H = omega a†a + (Omega/2) sigma_z + (g/2)(a e^{i theta} + a† e^{-i theta}) sigma_x
* ``dicke``:     H = omega a†a + Omega J_z + (g/sqrt(N))(a e^{i theta} + a† e^{-i theta}) J_x
                 on the symmetric subspace (spin_dim = N + 1); N = 1 is exactly ``rabi``
* ``jc``:        rotating-wave form (g/2)(a e^{i theta} sigma_+ + a† e^{-i theta} sigma_-)
* ``effective``: field-only H = omega a†a - (g^2/4 Omega)(a + a†)^2, the
                 low-energy description after the dispersive (Schrieffer-Wolff)
                 transformation; spectrum (n + 1/2) omega sqrt(eps) - omega/2
                 with eps = 1 - g^2/g_c^2

Open-system pieces: cavity decay (kappa, a), spin decay (gamma, sigma_-)
for one spin or collective (gamma, J_-) for Dicke, and a classical drive
eta (a e^{i omega_d t} + a† e^{-i omega_d t}).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import hilbert as hb

MODEL_NAMES = ("rabi", "dicke", "jc", "effective")


def critical_coupling(omega: float, Omega: float) -> float:
    """Normal/superradiant boundary g_c = sqrt(omega * Omega)."""
    if omega <= 0 or Omega <= 0:
        raise ValueError("frequencies must be positive")
    return math.sqrt(omega * Omega)


@dataclass(frozen=True)
class RabiSystem:
    """Immutable parameter set for one scenario.

    Attributes
    ----------
    omega : cavity frequency (sets the unit system; presets use 1.0)
    Omega : qubit/spin splitting
    g : coupling strength (absolute; see ``from_ratio``)
    theta : coupling phase
    kappa : cavity decay rate
    gamma : spin decay rate
    eta : drive amplitude
    omega_d : drive frequency
    n_spins : number of spins (1 for Rabi, N for Dicke)
    """

    omega: float = 1.0
    Omega: float = 1.0
    g: float = 0.0
    theta: float = 0.0
    kappa: float = 0.0
    gamma: float = 0.0
    eta: float = 0.0
    omega_d: float = 0.0
    n_spins: int = 1

    def __post_init__(self):
        if self.omega <= 0 or self.Omega <= 0:
            raise ValueError("omega and Omega must be positive")
        if self.g < 0 or self.kappa < 0 or self.gamma < 0 or self.eta < 0:
            raise ValueError("g, kappa, gamma, eta must be non-negative")
        if int(self.n_spins) != self.n_spins or self.n_spins < 1:
            raise ValueError(f"n_spins must be a positive integer, got {self.n_spins}")

    @classmethod
    def from_ratio(cls, Omega: float, g_over_gc: float, **kwargs) -> "RabiSystem":
        """Build a system from g/g_c instead of the absolute coupling."""
        omega = kwargs.pop("omega", 1.0)
        g = g_over_gc * critical_coupling(omega, Omega)
        return cls(omega=omega, Omega=Omega, g=g, **kwargs)

    @property
    def g_c(self) -> float:
        return critical_coupling(self.omega, self.Omega)

    @property
    def epsilon(self) -> float:
        """1 - g^2/g_c^2; positive in the normal phase."""
        return 1.0 - (self.g / self.g_c) ** 2

    def with_coupling(self, g: float) -> "RabiSystem":
        return replace(self, g=g)

    def describe(self) -> dict:
        d = {k: getattr(self, k) for k in (
            "omega", "Omega", "g", "theta", "kappa", "gamma", "eta", "omega_d", "n_spins")}
        d["g_over_gc"] = self.g / self.g_c
        d["epsilon"] = self.epsilon
        return d


def sw_validity_margin(sys: RabiSystem) -> tuple[float, str]:
    """Margin of the dispersive decoupling, epsilon * (Omega/omega)^(2/3).

    Returns (margin, classification): 'valid' for margin >= 10, 'marginal'
    between 1 and 10, 'invalid' at or below 1. Near criticality the margin
    collapses and the low-energy description loses its separation of scales.
    """
    margin = sys.epsilon * (sys.Omega / sys.omega) ** (2.0 / 3.0)
    if margin >= 10.0:
        cls = "valid"
    elif margin > 1.0:
        cls = "marginal"
    else:
        cls = "invalid"
    return margin, cls


# ---------------------------------------------------------------------------
# Hamiltonians
# ---------------------------------------------------------------------------

def field_spin_space(cutoff: int, spin_dim: int) -> hb.HilbertSpace:
    return hb.tensor_space(hb.fock_space(cutoff), hb.spin_space(spin_dim))


def build_rabi(sys: RabiSystem, cutoff: int) -> hb.Operator:
    """Quantum Rabi Hamiltonian on fock(cutoff) (x) spin(2)."""
    if sys.n_spins != 1:
        raise ValueError("build_rabi requires n_spins = 1; use build_dicke")
    space = field_spin_space(cutoff, 2)
    f = space.factors[0]
    a = hb.embed(hb.annihilation(f), space, 0)
    ops = hb.spin_operators(2)
    sz = hb.embed(ops.sigma_z, space, 1)
    sx = hb.embed(ops.sigma_x, space, 1)
    phase = complex(math.cos(sys.theta), math.sin(sys.theta))
    coupling = phase * a + np.conj(phase) * a.dag()
    return sys.omega * (a.dag() @ a) + (sys.Omega / 2.0) * sz \
        + (sys.g / 2.0) * (coupling @ sx)


def build_dicke(sys: RabiSystem, cutoff: int) -> hb.Operator:
    """Dicke Hamiltonian on the symmetric subspace, fock(cutoff) (x) spin(N+1)."""
    n = sys.n_spins
    space = field_spin_space(cutoff, n + 1)
    f = space.factors[0]
    a = hb.embed(hb.annihilation(f), space, 0)
    ops = hb.spin_operators(n + 1)
    jz = hb.embed(ops.jz, space, 1)
    jx = hb.embed(ops.jx, space, 1)
    phase = complex(math.cos(sys.theta), math.sin(sys.theta))
    coupling = phase * a + np.conj(phase) * a.dag()
    return sys.omega * (a.dag() @ a) + sys.Omega * jz \
        + (sys.g / math.sqrt(n)) * (coupling @ jx)


def build_jc(sys: RabiSystem, cutoff: int) -> hb.Operator:
    """Jaynes-Cummings Hamiltonian (rotating-wave coupling)."""
    if sys.n_spins != 1:
        raise ValueError("build_jc requires n_spins = 1")
    space = field_spin_space(cutoff, 2)
    f = space.factors[0]
    a = hb.embed(hb.annihilation(f), space, 0)
    ops = hb.spin_operators(2)
    sz = hb.embed(ops.sigma_z, space, 1)
    sp = hb.embed(ops.sigma_plus, space, 1)
    phase = complex(math.cos(sys.theta), math.sin(sys.theta))
    half = (sys.g / 2.0) * phase * (a @ sp)
    return sys.omega * (a.dag() @ a) + (sys.Omega / 2.0) * sz + half + half.dag()


def build_effective(sys: RabiSystem, cutoff: int) -> hb.Operator:
    """Field-only low-energy Hamiltonian omega a†a - (g^2/4 Omega)(a + a†)^2.

    The square is expanded to a^2 + a†^2 + 2 a†a + 1 before truncation, so
    every kept matrix element equals its untruncated value (a literal
    truncated product would corrupt the top Fock level).
    """
    f = hb.fock_space(cutoff)
    a = hb.annihilation(f)
    n = hb.number(f)
    a2 = a @ a
    q2 = a2 + a2.dag() + 2.0 * n + hb.identity(f)
    return sys.omega * (a.dag() @ a) - (sys.g ** 2 / (4.0 * sys.Omega)) * q2


def build_hamiltonian(sys: RabiSystem, model: str, cutoff: int) -> hb.Operator:
    if model == "rabi":
        return build_rabi(sys, cutoff)
    if model == "dicke":
        return build_dicke(sys, cutoff)
    if model == "jc":
        return build_jc(sys, cutoff)
    if model == "effective":
        return build_effective(sys, cutoff)
    raise ValueError(f"unknown model '{model}' (choose from {MODEL_NAMES})")


# ---------------------------------------------------------------------------
# Open-system description
# ---------------------------------------------------------------------------

class HarmonicDrive:
    """Time-dependent Hamiltonian H0 + eta (a e^{i w_d t} + a† e^{-i w_d t}).

    Callable (t -> Operator) so generic propagators can consume it, while
    the structured fields let fast paths avoid rebuilding matrices.
    """

    def __init__(self, static: hb.Operator, field_op: hb.Operator,
                 amplitude: float, frequency: float):
        self.static = static
        self.field_op = field_op  # annihilation on the composite space
        self.amplitude = amplitude
        self.frequency = frequency

    def __call__(self, t: float) -> hb.Operator:
        phase = complex(math.cos(self.frequency * t), math.sin(self.frequency * t))
        term = (self.amplitude * phase) * self.field_op
        return self.static + term + term.dag()


@dataclass
class Liouvillian:
    """Lindblad generator: Hamiltonian plus a list of (rate, jump operator).

    ``hamiltonian`` is an Operator for autonomous systems or a callable
    t -> Operator (see HarmonicDrive) when driven.
    """

    hamiltonian: object
    jump_ops: list
    space: hb.HilbertSpace

    def h_at(self, t: float) -> hb.Operator:
        h = self.hamiltonian
        return h(t) if callable(h) else h


def build_lindblad(sys: RabiSystem, model: str, cutoff: int) -> Liouvillian:
    """Liouvillian for the given model with cavity decay, spin decay, drive.

    Spin decay uses sigma_- for one spin and the collective J_- on the
    symmetric subspace for Dicke.
    """
    h0 = build_hamiltonian(sys, model, cutoff)
    space = h0.space
    jumps = []
    if model == "effective":
        a = hb.annihilation(space)
    else:
        a = hb.embed(hb.annihilation(space.factors[0]), space, 0)
    if sys.kappa > 0:
        jumps.append((sys.kappa, a))
    if sys.gamma > 0 and model != "effective":
        spin_dim = space.factors[1].spin_dim
        lower = hb.spin_operators(spin_dim).jminus
        jumps.append((sys.gamma, hb.embed(lower, space, 1)))
    if sys.eta != 0.0:
        ham: object = HarmonicDrive(h0, a, sys.eta, sys.omega_d)
    else:
        ham = h0
    return Liouvillian(hamiltonian=ham, jump_ops=jumps, space=space)
