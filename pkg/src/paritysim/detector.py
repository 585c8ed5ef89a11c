"""Phenomenological model of the ancilla-based parity detector.

The detector is modeled at the measurement-operator level: a conditional
phase ``phi = pi (1 + delta)`` per photon defines the measurement pair, and
the imperfections (thermal initialization, Ramsey dephasing over the arming
window, readout assignment) act as independent classical bit-flips on the
reported outcome label.  Unclamped parity values are propagated everywhere;
clamping, if any, is a reporting concern.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace


import numpy as np

from .errors import DegenerateReferences
from .fock import DensityMatrix, FockSpace, parity_expectation
from .seeding import batch_rngs

DEFAULT_ETA = 0.78


@dataclass(frozen=True)
class DetectorParams:
    """Error budget of the parity detector.

    Times are in microseconds.  ``t1`` is carried as metadata only; the
    conditional phase per photon is ``pi * (1 + delta)``.
    """

    t_w: float = 1.0
    t2_star: float = 3.5
    t1: float = 4.5
    f_ro: float = 0.94
    p_e_th: float = 0.04
    delta: float = 0.0
    eta: float = DEFAULT_ETA

    def __post_init__(self):
        if self.t_w <= 0 or self.t2_star <= 0:
            raise ValueError("t_w and t2_star must be positive")
        if not 0.0 <= self.f_ro <= 1.0:
            raise ValueError("f_ro must lie in [0, 1]")
        if not 0.0 <= self.p_e_th <= 1.0:
            raise ValueError("p_e_th must lie in [0, 1]")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError("eta must lie in [0, 1]")

    @property
    def phi_per_photon(self) -> float:
        return math.pi * (1.0 + self.delta)

    @property
    def p_t2(self) -> float:
        """Ramsey mis-assignment probability ``0.5 (1 - exp(-t_w / t2_star))``."""
        return 0.5 * (1.0 - math.exp(-self.t_w / self.t2_star))

    @property
    def p_readout_flip(self) -> float:
        return 0.5 * (1.0 - self.f_ro)

    def warnings(self) -> list[str]:
        out = []
        if self.t_w >= self.t2_star:
            out.append(
                f"t_w={self.t_w} is not shorter than t2_star={self.t2_star}; "
                "the detector loses phase coherence within the arming window"
            )
        return out

    @classmethod
    def ideal(cls, eta: float = 1.0) -> "DetectorParams":
        return cls(t_w=1e-9, t2_star=1e9, t1=1e9, f_ro=1.0, p_e_th=0.0, delta=0.0, eta=eta)

    def with_eta(self, eta: float) -> "DetectorParams":
        return replace(self, eta=eta)


@dataclass(frozen=True)
class HeraldResult:
    """One branch of a heralded measurement: label, probability, post-state."""

    outcome: str  # "even" | "odd"
    probability: float
    post_state: DensityMatrix | None


def parity_kraus(params: DetectorParams, space: FockSpace) -> tuple[np.ndarray, np.ndarray]:
    """Measurement pair ``M_+- = (1 +- U_phi)/2`` with ``U_phi = exp(i phi n)``.

    For ``delta = 0`` these are the exact even/odd projectors; the pair is
    complete, ``M_e^dag M_e + M_o^dag M_o = 1``, for any ``delta``.
    """
    phases = np.exp(1j * params.phi_per_photon * np.arange(space.dim))
    u = np.diag(phases)
    eye = np.eye(space.dim, dtype=complex)
    return 0.5 * (eye + u), 0.5 * (eye - u)


def label_flip_probability(params: DetectorParams, include_readout: bool = True) -> float:
    """Total probability that the reported label disagrees with the branch.

    Thermal initialization, Ramsey dephasing, and (optionally) readout act
    as independent flips, composed through ``1 - 2p = prod_i (1 - 2 p_i)``.
    """
    keep = (1.0 - 2.0 * params.p_e_th) * (1.0 - 2.0 * params.p_t2)
    if include_readout:
        keep *= 1.0 - 2.0 * params.p_readout_flip
    return 0.5 * (1.0 - keep)


def _mix_pair(weights_states, flip):
    """Noisy-label mixture of two weighted branches. Returns pairs (w, rho)."""
    (w_e, rho_e), (w_o, rho_o) = weights_states
    out = []
    for keep_w, keep_rho, cross_w, cross_rho in (
        (w_e, rho_e, w_o, rho_o),
        (w_o, rho_o, w_e, rho_e),
    ):
        w = (1.0 - flip) * keep_w + flip * cross_w
        if w < 1e-14:
            out.append((w, None))
            continue
        m = np.zeros_like(keep_rho)
        if keep_rho is not None:
            m = m + (1.0 - flip) * keep_w * keep_rho
        if cross_rho is not None:
            m = m + flip * cross_w * cross_rho
        out.append((w, m / w))
    return out


def herald(
    rho_in: DensityMatrix, params: DetectorParams, space: FockSpace
) -> tuple[HeraldResult, HeraldResult]:
    """Single-shot parity herald of an input state.

    The ideal branches are ``M_+- rho M_+-^dag / p_+-``; the reported results
    mix the branches through the label-flip probability composed from the
    detector error budget.  Probabilities of the two results sum to one.
    """
    m_even, m_odd = parity_kraus(params, space)
    branches = []
    for m in (m_even, m_odd):
        unnorm = m @ rho_in.entries @ m.conj().T
        p = float(np.trace(unnorm).real)
        branches.append((p, unnorm / p if p > 1e-14 else None))
    flip = label_flip_probability(params)
    mixed = _mix_pair(branches, flip)
    results = []
    for outcome, (w, m) in zip(("even", "odd"), mixed):
        state = None
        if m is not None:
            m = 0.5 * (m + m.conj().T)
            state = DensityMatrix(m / np.trace(m).real)
        results.append(HeraldResult(outcome=outcome, probability=w, post_state=state))
    return results[0], results[1]


def readout_corrected(
    pair: tuple[HeraldResult, HeraldResult], f_ro: float
) -> tuple[HeraldResult, HeraldResult]:
    """Invert the 2x2 readout confusion on a pair of heralded results.

    Operates on the unnormalized conditioned states (probability-weighted),
    then renormalizes.  Only the readout flip ``(1 - f_ro)/2`` is removed;
    thermal and Ramsey label noise remain in the returned pair.
    """
    eps = 0.5 * (1.0 - f_ro)
    even, odd = pair
    acc_e = even.probability * even.post_state.entries if even.post_state else 0.0
    acc_o = odd.probability * odd.post_state.entries if odd.post_state else 0.0
    det = 1.0 - 2.0 * eps
    if abs(det) < 1e-12:
        raise DegenerateReferences("readout confusion matrix is singular at f_ro=0")
    true_e = ((1.0 - eps) * acc_e - eps * acc_o) / det
    true_o = ((1.0 - eps) * acc_o - eps * acc_e) / det
    out = []
    for outcome, acc in (("even", true_e), ("odd", true_o)):
        w = float(np.trace(acc).real) if np.ndim(acc) else 0.0
        state = None
        if w > 1e-14:
            m = 0.5 * (acc + acc.conj().T) / w
            state = DensityMatrix(m / np.trace(m).real)
        out.append(HeraldResult(outcome=outcome, probability=w, post_state=state))
    return out[0], out[1]


def single_shot_assignment_prob(params: DetectorParams) -> float:
    """Probability of a correct single-shot parity assignment.

    ``P_ro P_Ramsey + (1 - P_ro)(1 - P_Ramsey)`` with
    ``P_ro = (1 + f_ro)/2`` and ``P_Ramsey = 1 - p_t2``.
    """
    p_ro = 0.5 * (1.0 + params.f_ro)
    p_ramsey = 1.0 - params.p_t2
    return p_ro * p_ramsey + (1.0 - p_ro) * (1.0 - p_ramsey)


def population_to_parity(p_e: float, p_e_plus: float, p_e_minus: float) -> float:
    """Map a measured excited-state population onto a parity value.

    Linear map through the two reference populations; noise can push the
    result slightly outside (-1, 1) and it is returned unclamped.
    """
    if abs(p_e_plus - p_e_minus) < 1e-6:
        raise DegenerateReferences("reference populations are degenerate")
    mid = 0.5 * (p_e_plus + p_e_minus)
    half_span = 0.5 * (p_e_plus - p_e_minus)
    return (p_e - mid) / half_span


def parity_train_expected(n_pulses: int, eta: float) -> float:
    """Expected parity ``(1 - 2 eta)^N`` of a train of N single photons."""
    if n_pulses < 0:
        raise ValueError("n_pulses must be >= 0")
    if not 0.0 <= eta <= 1.0:
        raise ValueError("eta must lie in [0, 1]")
    return (1.0 - 2.0 * eta) ** n_pulses


def parity_train_binomial_sum(n_pulses: int, eta: float) -> float:
    """Same expectation evaluated as ``sum_k (-1)^k B(k; N, eta)``."""
    if n_pulses < 0:
        raise ValueError("n_pulses must be >= 0")
    total = 0.0
    for k in range(n_pulses + 1):
        total += (-1.0) ** k * math.comb(n_pulses, k) * eta**k * (1.0 - eta) ** (n_pulses - k)
    return total


def parity_train_sample(
    n_pulses: int,
    params: DetectorParams,
    shots: int,
    seed: int,
    batches: int = 16,
) -> tuple[float, float]:
    """Monte Carlo parity of a photon train through the noisy detector.

    Each shot draws per-photon arrivals ``Bernoulli(eta)``, then flips the
    outcome label with the thermal, Ramsey, and readout probabilities.
    Deterministic for a fixed ``(seed, batches)``; batches merge by
    summation.  Returns (mean parity, standard error of the mean).
    """
    if shots < 1:
        raise ValueError("shots must be >= 1")
    sizes = [shots // batches + (1 if b < shots % batches else 0) for b in range(batches)]
    total = 0.0
    total_sq = 0.0
    count = 0
    for rng, size in zip(batch_rngs(seed, batches), sizes):
        if size == 0:
            continue
        arrived = rng.binomial(n_pulses, params.eta, size=size) if n_pulses > 0 else np.zeros(size, dtype=int)
        value = 1.0 - 2.0 * (arrived % 2)
        for p_err in (params.p_e_th, params.p_t2, params.p_readout_flip):
            if p_err > 0.0:
                value *= 1.0 - 2.0 * (rng.random(size) < p_err)
        total += float(np.sum(value))
        total_sq += float(np.sum(value**2))
        count += size
    mean = total / count
    var = max(0.0, total_sq / count - mean**2)
    return mean, math.sqrt(var / count)


def visibility(rho_even: DensityMatrix, rho_odd: DensityMatrix) -> float:
    """Parity contrast ``Tr(P rho_even) - Tr(P rho_odd)`` in [-2, 2]."""
    return parity_expectation(rho_even) - parity_expectation(rho_odd)
