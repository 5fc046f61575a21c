"""Finite-dimensional Hilbert spaces, operators, and states.

Dense complex128 linear algebra on truncated Fock and spin spaces.
Conventions used throughout the package:

* Fock space with ``cutoff`` keeps number states 0..cutoff (dim = cutoff + 1).
* Quadratures X = (a + a†)/2, P = (a - a†)/(2i), so [X, P] = i/2 and the
  vacuum has Var X = Var P = 1/4.
* Spin basis index 0 is the ground state. For spin_dim = 2 the Pauli
  sigma_z is diag(-1, +1) and sigma_minus maps excited to ground.
* Composite spaces are always field (x) spin, in that order.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh as _eigh
from scipy.linalg import expm as _expm

HERMITIAN_TOL = 1e-12
UNITARY_TOL = 1e-10
KET_NORM_TOL = 1e-10
TRACE_TOL = 1e-8
POSITIVITY_TOL = -1e-8

TRUNCATION_WARN = 1e-6
TRUNCATION_FAIL = 1e-3


class TruncationError(RuntimeError):
    """Raised when a state carries too much weight near the Fock cutoff."""


@dataclass(frozen=True)
class HilbertSpace:
    """Structural tag for a truncated Hilbert space.

    Spaces compare by structure, and every operator and state carries one;
    mixing objects from different spaces raises ValueError.
    """

    kind: str
    dim: int
    cutoff: int | None = None
    spin_dim: int | None = None
    factors: tuple["HilbertSpace", ...] | None = None

    def label(self) -> str:
        if self.kind == "fock":
            return f"fock(cutoff={self.cutoff})"
        if self.kind == "spin":
            return f"spin(dim={self.spin_dim})"
        return "(" + " * ".join(f.label() for f in self.factors) + ")"


def fock_space(cutoff: int) -> HilbertSpace:
    """Bosonic space keeping Fock states 0..cutoff."""
    if cutoff < 1:
        raise ValueError(f"Fock cutoff must be >= 1, got {cutoff}")
    return HilbertSpace(kind="fock", dim=cutoff + 1, cutoff=cutoff)


def spin_space(spin_dim: int) -> HilbertSpace:
    """Spin (or collective symmetric-subspace) space of dimension spin_dim."""
    if spin_dim < 2:
        raise ValueError(f"spin_dim must be >= 2, got {spin_dim}")
    return HilbertSpace(kind="spin", dim=spin_dim, spin_dim=spin_dim)


def tensor_space(a: HilbertSpace, b: HilbertSpace) -> HilbertSpace:
    return HilbertSpace(kind="tensor", dim=a.dim * b.dim, factors=(a, b))


def _require_same_space(sa: HilbertSpace, sb: HilbertSpace, what: str) -> None:
    if sa != sb:
        raise ValueError(f"{what} across different spaces: {sa.label()} vs {sb.label()}")


class Operator:
    """Dense operator on a tagged space. The backing array is read-only."""

    __slots__ = ("mat", "space")

    def __init__(self, mat: np.ndarray, space: HilbertSpace):
        mat = np.asarray(mat, dtype=np.complex128)
        if mat.shape != (space.dim, space.dim):
            raise ValueError(f"operator shape {mat.shape} does not match dim {space.dim}")
        mat.setflags(write=False)
        self.mat = mat
        self.space = space

    def dag(self) -> "Operator":
        return Operator(self.mat.conj().T, self.space)

    def trace(self) -> complex:
        return complex(np.trace(self.mat))

    def is_hermitian(self, tol: float = HERMITIAN_TOL) -> bool:
        return float(np.max(np.abs(self.mat - self.mat.conj().T))) <= tol

    def is_unitary(self, tol: float = UNITARY_TOL) -> bool:
        d = self.space.dim
        return float(np.max(np.abs(self.mat.conj().T @ self.mat - np.eye(d)))) <= tol

    def expm(self) -> "Operator":
        return Operator(_expm(self.mat), self.space)

    def eigh(self) -> tuple[np.ndarray, np.ndarray]:
        """Eigendecomposition for Hermitian operators.

        Returns
        -------
        (vals, vecs) with eigenvalues ascending and eigenvectors as columns.
        """
        if not self.is_hermitian(tol=1e-9):
            raise ValueError("eigh called on a non-Hermitian operator")
        return _eigh(self.mat)

    def __matmul__(self, other):
        if isinstance(other, Operator):
            _require_same_space(self.space, other.space, "operator product")
            return Operator(self.mat @ other.mat, self.space)
        if isinstance(other, Ket):
            _require_same_space(self.space, other.space, "operator application")
            return Ket(self.mat @ other.vec, self.space, _checked=False)
        return NotImplemented

    def __add__(self, other: "Operator") -> "Operator":
        _require_same_space(self.space, other.space, "operator sum")
        return Operator(self.mat + other.mat, self.space)

    def __sub__(self, other: "Operator") -> "Operator":
        _require_same_space(self.space, other.space, "operator difference")
        return Operator(self.mat - other.mat, self.space)

    def __mul__(self, scalar) -> "Operator":
        return Operator(self.mat * complex(scalar), self.space)

    __rmul__ = __mul__

    def __neg__(self) -> "Operator":
        return Operator(-self.mat, self.space)

    def __repr__(self) -> str:
        return f"Operator(dim={self.space.dim}, space={self.space.label()})"


class Ket:
    """Normalized state vector on a tagged space."""

    __slots__ = ("vec", "space")

    def __init__(self, vec: np.ndarray, space: HilbertSpace, normalize: bool = False,
                 _checked: bool = True):
        vec = np.asarray(vec, dtype=np.complex128).reshape(-1)
        if vec.shape[0] != space.dim:
            raise ValueError(f"ket length {vec.shape[0]} does not match dim {space.dim}")
        if normalize:
            n = float(np.linalg.norm(vec))
            if n == 0.0:
                raise ValueError("cannot normalize the zero vector")
            vec = vec / n
        elif _checked:
            n = float(np.linalg.norm(vec))
            if abs(n - 1.0) > KET_NORM_TOL:
                raise ValueError(f"ket norm {n:.12g} deviates from 1 beyond {KET_NORM_TOL}")
        vec.setflags(write=False)
        self.vec = vec
        self.space = space

    def norm(self) -> float:
        return float(np.linalg.norm(self.vec))

    def dagger_dot(self, other: "Ket") -> complex:
        """Inner product <self|other>."""
        _require_same_space(self.space, other.space, "inner product")
        return complex(np.vdot(self.vec, other.vec))

    def outer(self) -> Operator:
        """Projector |psi><psi|."""
        return Operator(np.outer(self.vec, self.vec.conj()), self.space)

    def to_density_matrix(self) -> "DensityMatrix":
        return DensityMatrix(np.outer(self.vec, self.vec.conj()), self.space)

    def __repr__(self) -> str:
        return f"Ket(dim={self.space.dim}, space={self.space.label()})"


class DensityMatrix:
    """Hermitian unit-trace operator representing a (possibly mixed) state."""

    __slots__ = ("mat", "space")

    def __init__(self, mat: np.ndarray, space: HilbertSpace, validate: bool = True):
        mat = np.asarray(mat, dtype=np.complex128)
        if mat.shape != (space.dim, space.dim):
            raise ValueError(f"density matrix shape {mat.shape} does not match dim {space.dim}")
        if validate:
            herm = float(np.max(np.abs(mat - mat.conj().T)))
            if herm > 1e-10:
                raise ValueError(f"density matrix deviates from Hermitian by {herm:.3g}")
            tr = complex(np.trace(mat))
            if abs(tr - 1.0) > TRACE_TOL:
                raise ValueError(f"density matrix trace {tr:.12g} deviates from 1 beyond {TRACE_TOL}")
        mat.setflags(write=False)
        self.mat = mat
        self.space = space

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.mat)[0])

    def check_positive(self, tol: float = POSITIVITY_TOL) -> float:
        """Returns the minimum eigenvalue, raising if it falls below tol."""
        lam = self.min_eigenvalue()
        if lam < tol:
            raise ValueError(f"density matrix has negative eigenvalue {lam:.3g}")
        return lam

    def __repr__(self) -> str:
        return f"DensityMatrix(dim={self.space.dim}, space={self.space.label()})"


State = Ket | DensityMatrix


# ---------------------------------------------------------------------------
# Bosonic operators and states
# ---------------------------------------------------------------------------

def _fock_factor(space: HilbertSpace) -> HilbertSpace:
    if space.kind != "fock":
        raise ValueError(f"expected a Fock space, got {space.label()}")
    return space


def identity(space: HilbertSpace) -> Operator:
    return Operator(np.eye(space.dim), space)


def annihilation(space: HilbertSpace) -> Operator:
    """Truncated annihilation operator a with a|n> = sqrt(n)|n-1>."""
    _fock_factor(space)
    n = np.arange(1, space.dim)
    mat = np.zeros((space.dim, space.dim), dtype=np.complex128)
    mat[n - 1, n] = np.sqrt(n)
    return Operator(mat, space)


def number(space: HilbertSpace) -> Operator:
    _fock_factor(space)
    return Operator(np.diag(np.arange(space.dim, dtype=np.float64)), space)


def quadrature_ops(space: HilbertSpace) -> tuple[Operator, Operator]:
    """(X, P) with X = (a + a†)/2 and P = (a - a†)/(2i)."""
    a = annihilation(space)
    ad = a.dag()
    x = 0.5 * (a + ad)
    p = (-0.5j) * (a - ad)
    return x, p


def fock_ket(space: HilbertSpace, n: int) -> Ket:
    _fock_factor(space)
    if not 0 <= n <= space.cutoff:
        raise ValueError(f"Fock index {n} outside 0..{space.cutoff}")
    vec = np.zeros(space.dim, dtype=np.complex128)
    vec[n] = 1.0
    return Ket(vec, space)


def vacuum(space: HilbertSpace) -> Ket:
    return fock_ket(space, 0)


def coherent_ket(space: HilbertSpace, alpha: complex) -> Ket:
    """Coherent state built from its normalized Fock series."""
    _fock_factor(space)
    if abs(alpha) ** 2 >= space.cutoff / 4:
        raise ValueError(
            f"|alpha|^2 = {abs(alpha)**2:.3g} too large for cutoff {space.cutoff} "
            f"(need |alpha|^2 < cutoff/4)")
    n = np.arange(space.dim)
    log_fact = np.concatenate(([0.0], np.cumsum(np.log(np.arange(1, space.dim)))))
    amps = np.exp(n * np.log(complex(alpha)) - 0.5 * log_fact) if alpha != 0 else \
        np.concatenate(([1.0], np.zeros(space.dim - 1))).astype(np.complex128)
    vec = amps * math.exp(-0.5 * abs(alpha) ** 2)
    return Ket(vec, space, normalize=True)


def displacement(space: HilbertSpace, alpha: complex) -> Operator:
    """Unitary displacement exp(alpha a† - alpha* a)."""
    _fock_factor(space)
    if abs(alpha) ** 2 >= space.cutoff / 4:
        raise ValueError(
            f"|alpha|^2 = {abs(alpha)**2:.3g} too large for cutoff {space.cutoff} "
            f"(need |alpha|^2 < cutoff/4)")
    a = annihilation(space)
    gen = complex(alpha) * a.dag() - np.conj(complex(alpha)) * a
    return gen.expm()


def squeeze(space: HilbertSpace, xi: complex) -> Operator:
    """Unitary squeeze exp((xi/2)(a^2 - a†^2)).

    For real xi = r > 0 this squeezes X: Var X of S(r)|0> is exp(-2r)/4.
    """
    _fock_factor(space)
    if abs(xi) >= math.log(space.cutoff) / 4:
        raise ValueError(
            f"|xi| = {abs(xi):.3g} too large for cutoff {space.cutoff} "
            f"(need |xi| < ln(cutoff)/4)")
    a = annihilation(space)
    a2 = a @ a
    gen = 0.5 * complex(xi) * a2 - 0.5 * np.conj(complex(xi)) * a2.dag()
    return gen.expm()


# ---------------------------------------------------------------------------
# Spin operators
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpinOps:
    """Collective spin operators on the symmetric subspace.

    For spin_dim = N + 1 spins-1/2 the total spin is j = N/2 and jz has
    eigenvalues -j..j with the ground state at index 0. The Pauli fields
    (sigma_*) are populated only for spin_dim = 2.
    """

    space: HilbertSpace
    jx: Operator
    jy: Operator
    jz: Operator
    jplus: Operator
    jminus: Operator
    sigma_x: Operator | None = None
    sigma_y: Operator | None = None
    sigma_z: Operator | None = None
    sigma_plus: Operator | None = None
    sigma_minus: Operator | None = None
    excited_projector: Operator | None = None


def spin_operators(spin_dim: int) -> SpinOps:
    """Spin operators for a spin_dim-level system (j = (spin_dim - 1)/2)."""
    if spin_dim < 2:
        raise ValueError(f"spin_dim must be >= 2, got {spin_dim}")
    space = spin_space(spin_dim)
    j = (spin_dim - 1) / 2.0
    m = -j + np.arange(spin_dim)
    jz = Operator(np.diag(m.astype(np.complex128)), space)
    # <j, m+1| J+ |j, m> = sqrt(j(j+1) - m(m+1))
    off = np.sqrt(j * (j + 1) - m[:-1] * (m[:-1] + 1))
    jp_mat = np.zeros((spin_dim, spin_dim), dtype=np.complex128)
    jp_mat[np.arange(1, spin_dim), np.arange(spin_dim - 1)] = off
    jplus = Operator(jp_mat, space)
    jminus = jplus.dag()
    jx = 0.5 * (jplus + jminus)
    jy = (-0.5j) * (jplus - jminus)
    extras = {}
    if spin_dim == 2:
        extras = dict(
            sigma_x=2.0 * jx,
            sigma_y=2.0 * jy,
            sigma_z=2.0 * jz,
            sigma_plus=jplus,
            sigma_minus=jminus,
            excited_projector=Operator(np.diag([0.0, 1.0]), space),
        )
    return SpinOps(space=space, jx=jx, jy=jy, jz=jz, jplus=jplus, jminus=jminus, **extras)


# ---------------------------------------------------------------------------
# Composite spaces
# ---------------------------------------------------------------------------

def tensor(a, b):
    """Kronecker product of two operators or two kets (left factor first)."""
    if isinstance(a, Operator) and isinstance(b, Operator):
        return Operator(np.kron(a.mat, b.mat), tensor_space(a.space, b.space))
    if isinstance(a, Ket) and isinstance(b, Ket):
        return Ket(np.kron(a.vec, b.vec), tensor_space(a.space, b.space), _checked=False)
    raise TypeError("tensor expects two Operators or two Kets")


def embed(op: Operator, space: HilbertSpace, slot: int) -> Operator:
    """Lift a factor operator into a two-factor composite space.

    Args
    ----
    op : operator on space.factors[slot]
    slot : 0 for the left (field) factor, 1 for the right (spin) factor
    """
    if space.kind != "tensor" or len(space.factors) != 2:
        raise ValueError("embed target must be a two-factor tensor space")
    if slot not in (0, 1):
        raise ValueError(f"slot must be 0 or 1, got {slot}")
    _require_same_space(op.space, space.factors[slot], "embed")
    left = op.mat if slot == 0 else np.eye(space.factors[0].dim)
    right = np.eye(space.factors[1].dim) if slot == 0 else op.mat
    return Operator(np.kron(left, right), space)


def partial_trace(rho: DensityMatrix, keep: int) -> DensityMatrix:
    """Trace out one factor of a two-factor state, keeping factor ``keep``."""
    space = rho.space
    if space.kind != "tensor" or len(space.factors) != 2:
        raise ValueError("partial_trace expects a two-factor tensor space")
    da, db = space.factors[0].dim, space.factors[1].dim
    blocks = rho.mat.reshape(da, db, da, db)
    if keep == 0:
        reduced = np.trace(blocks, axis1=1, axis2=3)
        return DensityMatrix(reduced, space.factors[0], validate=False)
    if keep == 1:
        reduced = np.trace(blocks, axis1=0, axis2=2)
        return DensityMatrix(reduced, space.factors[1], validate=False)
    raise ValueError(f"keep must be 0 or 1, got {keep}")


# ---------------------------------------------------------------------------
# Expectations, fidelities, truncation checks
# ---------------------------------------------------------------------------

def expectation(op: Operator, state: State) -> complex:
    if isinstance(state, Ket):
        _require_same_space(op.space, state.space, "expectation")
        return complex(np.vdot(state.vec, op.mat @ state.vec))
    if isinstance(state, DensityMatrix):
        _require_same_space(op.space, state.space, "expectation")
        return complex(np.einsum("ij,ji->", op.mat, state.mat))
    raise TypeError(f"expected Ket or DensityMatrix, got {type(state).__name__}")


def fidelity(a: State, b: State) -> float:
    """|<a|b>|^2 for kets, <psi|rho|psi> when one argument is mixed."""
    if isinstance(a, Ket) and isinstance(b, Ket):
        return abs(a.dagger_dot(b)) ** 2
    if isinstance(a, Ket) and isinstance(b, DensityMatrix):
        _require_same_space(a.space, b.space, "fidelity")
        return float(np.real(np.vdot(a.vec, b.mat @ a.vec)))
    if isinstance(a, DensityMatrix) and isinstance(b, Ket):
        return fidelity(b, a)
    raise TypeError("fidelity of two mixed states is not supported")


def fock_populations(state: State) -> np.ndarray:
    """Population per Fock level, tracing out the spin factor if present."""
    space = state.space
    if space.kind == "fock":
        if isinstance(state, Ket):
            return np.abs(state.vec) ** 2
        return np.real(np.diag(state.mat)).copy()
    if space.kind == "tensor" and space.factors[0].kind == "fock":
        da, db = space.factors[0].dim, space.factors[1].dim
        if isinstance(state, Ket):
            return np.sum(np.abs(state.vec.reshape(da, db)) ** 2, axis=1)
        diag = np.real(np.diag(state.mat)).reshape(da, db)
        return np.sum(diag, axis=1)
    raise ValueError(f"no Fock factor in {space.label()}")


def check_truncation(state: State, warn: float = TRUNCATION_WARN,
                     fail: float = TRUNCATION_FAIL) -> float:
    """Weight in the top 10% Fock levels; warns above ``warn``, raises above ``fail``."""
    pops = fock_populations(state)
    dim = pops.shape[0]
    top = max(1, int(math.ceil(0.1 * dim)))
    weight = float(np.sum(pops[dim - top:]))
    if weight > fail:
        raise TruncationError(
            f"top-{top} Fock levels hold {weight:.3g} of the population "
            f"(limit {fail:.1g}); raise the cutoff")
    if weight > warn:
        warnings.warn(
            f"top-{top} Fock levels hold {weight:.3g} of the population",
            RuntimeWarning, stacklevel=2)
    return weight
