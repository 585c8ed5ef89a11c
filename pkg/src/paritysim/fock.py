"""States, operators, and observables on a truncated photon-number space.

Conventions used throughout the package:

* Phase-space amplitudes are dimensionless, ``|alpha|^2`` equals the mean
  photon number.
* ``wigner_point`` returns the scaled value ``pi/2 * W(alpha)``, i.e. the
  expectation value of the displaced parity observable
  ``D(alpha) P D(alpha)^dag``.  The sign convention is fixed by the
  coherent-state identity ``pi/2 * W(alpha) = exp(-2|beta - alpha|^2)`` for
  an input coherent state ``|beta>``; this is asserted in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import OrderTooHigh, VacuumState, ZeroOddCat

# Default truncations: one generous space for forward simulation, one small
# space for state reconstruction.
DEFAULT_SIM_NMAX = 20
DEFAULT_RECON_NMAX = 5

_NORM_TOL = 1e-10
_HERM_TOL = 1e-10
_TRACE_TOL = 1e-10
_EIG_FLOOR = -1e-9


@dataclass(frozen=True)
class FockSpace:
    """Truncated number-state space with ``dim = n_max + 1`` levels.

    ``pad`` is the minimum number of extra working levels used internally
    when building displacement operators, so that truncation errors stay at
    the edge of the padded space instead of the physical one.
    """

    n_max: int = DEFAULT_SIM_NMAX
    pad: int = 10

    def __post_init__(self):
        if self.n_max < 1:
            raise ValueError("n_max must be >= 1")
        if self.pad < 0:
            raise ValueError("pad must be >= 0")

    @property
    def dim(self) -> int:
        return self.n_max + 1


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Ket:
    """Pure state as a complex amplitude vector, unit norm."""

    amplitudes: np.ndarray

    def __post_init__(self):
        amp = np.asarray(self.amplitudes, dtype=complex).copy()
        if amp.ndim != 1 or amp.size < 2:
            raise ValueError("ket must be a vector with at least 2 entries")
        norm = float(np.linalg.norm(amp))
        if abs(norm - 1.0) > _NORM_TOL:
            raise ValueError(f"ket norm {norm} deviates from 1 beyond {_NORM_TOL}")
        object.__setattr__(self, "amplitudes", _freeze(amp))

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def density(self) -> "DensityMatrix":
        return DensityMatrix(np.outer(self.amplitudes, self.amplitudes.conj()))


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Trace-one Hermitian positive-semidefinite matrix on the truncated space."""

    entries: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.entries, dtype=complex).copy()
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("density matrix must be square")
        herm = float(np.max(np.abs(m - m.conj().T)))
        if herm > _HERM_TOL:
            raise ValueError(f"not Hermitian: max asymmetry {herm}")
        tr = complex(np.trace(m))
        if abs(tr - 1.0) > _TRACE_TOL:
            raise ValueError(f"trace {tr} deviates from 1 beyond {_TRACE_TOL}")
        lo = float(np.min(np.linalg.eigvalsh(0.5 * (m + m.conj().T))))
        if lo < _EIG_FLOOR:
            raise ValueError(f"negative eigenvalue {lo} below floor {_EIG_FLOOR}")
        object.__setattr__(self, "entries", _freeze(m))

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def populations(self) -> np.ndarray:
        return self.entries.diagonal().real


def annihilation(space: FockSpace) -> np.ndarray:
    """Ladder operator with ``<n-1|a|n> = sqrt(n)`` on the truncated space."""
    d = space.dim
    return np.diag(np.sqrt(np.arange(1, d, dtype=float)), k=1).astype(complex)


def creation(space: FockSpace) -> np.ndarray:
    return annihilation(space).conj().T


def number_operator(space: FockSpace) -> np.ndarray:
    return np.diag(np.arange(space.dim, dtype=float)).astype(complex)


def parity_operator(space: FockSpace) -> np.ndarray:
    """Diagonal observable with entries ``(-1)^n``."""
    signs = 1.0 - 2.0 * (np.arange(space.dim) % 2)
    return np.diag(signs)


@lru_cache(maxsize=64)
def _quadrature_eigh(dim: int):
    # Hermitian generator i(a^dag - a); its eigen-decomposition lets every
    # displacement of magnitude r reuse a single factorization per dimension.
    a = np.diag(np.sqrt(np.arange(1, dim, dtype=float)), k=1)
    h = 1j * (a.conj().T - a)
    w, v = np.linalg.eigh(h)
    return w, v


def displacement_matrix(alpha: complex, dim: int) -> np.ndarray:
    """Exact unitary ``exp(alpha a^dag - conj(alpha) a)`` on a ``dim``-level space.

    Built from the cached eigen-decomposition of ``i(a^dag - a)`` combined
    with a number-operator phase rotation, so the result is unitary to
    machine precision on the working space.
    """
    alpha = complex(alpha)
    r = abs(alpha)
    if r == 0.0:
        return np.eye(dim, dtype=complex)
    theta = math.atan2(alpha.imag, alpha.real)
    w, v = _quadrature_eigh(dim)
    core = (v * np.exp(-1j * r * w)) @ v.conj().T
    phases = np.exp(1j * theta * np.arange(dim))
    return (phases[:, None] * core) * phases.conj()[None, :]


def _working_pad(alpha: complex, minimum: int = 10) -> int:
    return max(minimum, 4 * math.ceil(abs(alpha) ** 2))


def displacement(alpha: complex, space: FockSpace) -> np.ndarray:
    """Displacement operator truncated to the physical space.

    The unitary is constructed on a padded working space (at least
    ``space.pad`` extra levels, more for large ``|alpha|``) and then cut down
    to ``dim x dim``, which keeps the physically relevant block accurate.
    """
    pad = max(space.pad, _working_pad(alpha))
    full = displacement_matrix(alpha, space.dim + pad)
    return full[: space.dim, : space.dim]


def displace_state(rho: DensityMatrix, alpha: complex, space: FockSpace | None = None) -> DensityMatrix:
    """Apply ``D(alpha) rho D(alpha)^dag`` through the padded working space."""
    d = rho.dim
    space = space or FockSpace(n_max=d - 1)
    pad = max(space.pad, _working_pad(alpha))
    dim = d + pad
    big = np.zeros((dim, dim), dtype=complex)
    big[:d, :d] = rho.entries
    u = displacement_matrix(alpha, dim)
    out = u @ big @ u.conj().T
    block = out[:d, :d]
    # Renormalize away the (tiny) population that leaked past the cut.
    block = 0.5 * (block + block.conj().T)
    return DensityMatrix(block / np.trace(block).real)


def coherent_state(alpha: complex, space: FockSpace) -> Ket:
    """Truncated coherent state, renormalized inside the cut."""
    d = space.dim
    amps = np.empty(d, dtype=complex)
    amps[0] = math.exp(-0.5 * abs(alpha) ** 2)
    for n in range(d - 1):
        amps[n + 1] = amps[n] * alpha / math.sqrt(n + 1.0)
    return Ket(amps / np.linalg.norm(amps))


def fock_ket(n: int, space: FockSpace) -> Ket:
    if not 0 <= n <= space.n_max:
        raise ValueError(f"Fock level {n} outside space with n_max={space.n_max}")
    amps = np.zeros(space.dim, dtype=complex)
    amps[n] = 1.0
    return Ket(amps)


def photon_superposition(theta: float, space: FockSpace, phase: float = 0.0) -> Ket:
    """``cos(theta/2)|0> + e^{i phase} sin(theta/2)|1>``."""
    amps = np.zeros(space.dim, dtype=complex)
    amps[0] = math.cos(theta / 2.0)
    amps[1] = math.sin(theta / 2.0) * np.exp(1j * phase)
    return Ket(amps)


def cat_state(alpha: complex, parity_sign: int, space: FockSpace) -> Ket:
    """Normalized superposition ``(|alpha> + s |-alpha>)/N`` with ``s = +-1``.

    Equivalently the even (``+1``) or odd (``-1``) Fock-level content of the
    coherent state, renormalized; the two forms agree because
    ``|-alpha> = P |alpha>``.
    """
    if parity_sign not in (+1, -1):
        raise ValueError("parity_sign must be +1 or -1")
    if parity_sign == -1 and alpha == 0:
        raise ZeroOddCat("odd cat state is undefined at alpha = 0")
    amps = np.array(coherent_state(alpha, space).amplitudes, copy=True)
    keep = 0 if parity_sign == +1 else 1
    amps[np.arange(space.dim) % 2 != keep] = 0.0
    return Ket(amps / np.linalg.norm(amps))


def cat_normalization_sq(alpha: complex, parity_sign: int) -> float:
    """Closed-form ``N^2 = 2 (1 +- exp(-2|alpha|^2))``."""
    return 2.0 * (1.0 + parity_sign * math.exp(-2.0 * abs(alpha) ** 2))


def displaced_parity_matrix(alpha: complex, dim: int, min_pad: int = 10) -> np.ndarray:
    """Observable ``D(alpha) P D(alpha)^dag`` truncated to ``dim`` levels.

    Computed on a padded space sized from ``|alpha|`` so the returned block
    matches the untruncated operator for states supported well inside it.
    """
    pad = max(min_pad, _working_pad(alpha))
    big = dim + pad
    u = displacement_matrix(alpha, big)
    signs = 1.0 - 2.0 * (np.arange(big) % 2)
    m = (u * signs[None, :]) @ u.conj().T
    block = m[:dim, :dim]
    return 0.5 * (block + block.conj().T)


def parity_expectation(rho: DensityMatrix) -> float:
    signs = 1.0 - 2.0 * (np.arange(rho.dim) % 2)
    return float(np.real(np.sum(signs * rho.populations)))


def wigner_point(rho: DensityMatrix, alpha: complex) -> float:
    """Scaled Wigner value ``pi/2 * W(alpha) = Tr(P D(-alpha) rho D(-alpha)^dag)``.

    Displacing the state by ``-alpha`` equals measuring the displaced parity
    observable at ``alpha``; both are evaluated here as
    ``Tr(rho D(alpha) P D(alpha)^dag)``.
    """
    m = displaced_parity_matrix(alpha, rho.dim)
    return float(np.real(np.einsum("ij,ji->", rho.entries, m)))


def wigner_map(rho: DensityMatrix, alphas: np.ndarray) -> np.ndarray:
    """``wigner_point`` over an array of phase-space points."""
    flat = np.asarray(alphas, dtype=complex).ravel()
    out = np.array([wigner_point(rho, a) for a in flat])
    return out.reshape(np.shape(alphas))


def moment_matrix(n: int, m: int, dim: int) -> np.ndarray:
    """Operator ``a^dag^n a^m`` on a ``dim``-level space."""
    a = np.diag(np.sqrt(np.arange(1, dim, dtype=float)), k=1).astype(complex)
    return np.linalg.matrix_power(a.conj().T, n) @ np.linalg.matrix_power(a, m)


def moment(rho: DensityMatrix, n: int, m: int) -> complex:
    """Normally ordered expectation ``<a^dag^n a^m>``."""
    if n < 0 or m < 0:
        raise ValueError("moment orders must be non-negative")
    if n + m > rho.dim - 1:
        raise OrderTooHigh(f"order {n}+{m} exceeds n_max={rho.dim - 1}")
    return complex(np.einsum("ij,ji->", rho.entries, moment_matrix(n, m, rho.dim)))


def mean_photon_number(rho: DensityMatrix) -> float:
    return float(np.real(moment(rho, 1, 1)))


def g2(rho: DensityMatrix) -> float:
    """Normalized zero-delay second-order correlation ``<a^dag2 a2>/<a^dag a>^2``."""
    nbar = np.real(moment(rho, 1, 1))
    if nbar <= 1e-12:
        raise VacuumState("g2 undefined for (near-)vacuum: <n> <= 1e-12")
    return float(np.real(moment(rho, 2, 2)) / nbar**2)


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (m + m.conj().T))
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.conj().T


def fidelity(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    """Uhlmann fidelity ``Tr(sqrt(sqrt(rho) sigma sqrt(rho)))^2`` in [0, 1]."""
    if rho.dim != sigma.dim:
        raise ValueError("dimension mismatch")
    root = _psd_sqrt(rho.entries)
    inner = root @ sigma.entries @ root
    w = np.clip(np.linalg.eigvalsh(0.5 * (inner + inner.conj().T)), 0.0, None)
    val = float(np.sum(np.sqrt(w)) ** 2)
    return min(1.0, val)
