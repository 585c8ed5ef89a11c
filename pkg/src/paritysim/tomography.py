"""Forward synthesis of tomograms and heterodyne records, and their inverses.

The forward model for a measured Wigner value composes, in order: beam
splitter photon loss at efficiency ``eta``, the displaced-parity observable
evaluated at the mode-matched point ``f_mm * alpha``, and the pointwise
mode-mismatch attenuation.  The same operator tensor drives both synthesis
and the maximum-likelihood inversion, so noiseless round trips are exact up
to solver tolerance.

Both solvers share one constrained least-squares engine: the state is
parametrized as ``rho = G^dag G / Tr(G^dag G)`` over a complex
lower-triangular factor ``G`` (feasible by construction) and minimized by
gradient descent with backtracking line search and random restarts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import norm as _norm_dist

from .channels import apply_loss_heisenberg, mode_mismatch_factor
from .detector import DetectorParams, parity_kraus
from .errors import (
    InsufficientStatistics,
    NotConverged,
    SingularConfusion,
    VacuumState,
)
from .fock import (
    DEFAULT_RECON_NMAX,
    DEFAULT_SIM_NMAX,
    DensityMatrix,
    FockSpace,
    Ket,
    coherent_state,
    displaced_parity_matrix,
    fock_ket,
    moment_matrix,
    photon_superposition,
)
from .seeding import batch_rngs, batch_sizes, derived_rng

DEFAULT_GRID_POINTS = 41
DEFAULT_GRID_HALF_EXTENT = 3.0
DEFAULT_BATCHES = 20


# ---------------------------------------------------------------------------
# domain types


@dataclass(frozen=True, eq=False)
class Tomogram:
    """Grid of displacement points with (scaled) Wigner values.

    ``shots_per_point=None`` marks a noiseless tomogram of model
    expectations; otherwise each value is a mean of that many binary parity
    outcomes.  ``eta``/``f_mm`` record the forward-model settings the data
    was generated (or taken) under.
    """

    grid: np.ndarray
    values: np.ndarray
    shots_per_point: int | None
    eta: float
    f_mm: float

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=complex).ravel()
        values = np.asarray(self.values, dtype=float).ravel()
        if grid.size != values.size:
            raise ValueError("grid and values must have the same length")
        slack = 1e-9 if self.shots_per_point is None else 3.0 / math.sqrt(self.shots_per_point)
        if np.any(np.abs(values) > 1.0 + slack):
            raise ValueError("values exceed the physical range beyond the noise guard")
        for name, arr in (("grid", grid), ("values", values)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_points(self) -> int:
        return self.grid.size


@dataclass(frozen=True, eq=False)
class RecordSet:
    """Batch of heterodyne records: field quadratures plus readout quadrature."""

    i: np.ndarray
    q: np.ndarray
    qubit_q: np.ndarray
    shot: np.ndarray

    def __post_init__(self):
        for name in ("i", "q", "qubit_q", "shot"):
            arr = np.asarray(getattr(self, name))
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite entries in {name}")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def s(self) -> np.ndarray:
        return self.i + 1j * self.q

    def __len__(self) -> int:
        return self.i.size


@dataclass(frozen=True)
class NoiseModel:
    """Added heterodyne noise above the single ideal-detection quantum.

    Vacuum input yields ``<|S|^2> = 1 + n0``; the derived chain efficiency is
    ``eta_het = 1 / (1 + n0)``.
    """

    n0: float = 3.3

    def __post_init__(self):
        if self.n0 < 0:
            raise ValueError("n0 must be >= 0")

    @property
    def eta_het(self) -> float:
        return 1.0 / (1.0 + self.n0)


@dataclass(frozen=True)
class SourceScenario:
    """Preparation settings of the photon source.

    ``t_p`` (microseconds) and ``kappa_p`` (MHz) are carried as metadata.
    Two-photon contamination enters as a classical admixture of ``|2><2|``.
    """

    theta: float = math.pi / 2
    two_photon_contamination: float = 0.0
    t_p: float = 0.08
    kappa_p: float = 2.0

    def __post_init__(self):
        if not 0.0 <= self.two_photon_contamination <= 0.1:
            raise ValueError("two_photon_contamination must lie in [0, 0.1]")

    def state(self, space: FockSpace) -> DensityMatrix:
        pure = photon_superposition(self.theta, space).density()
        p2 = self.two_photon_contamination
        if p2 == 0.0:
            return pure
        two = fock_ket(2, space).density()
        return DensityMatrix((1.0 - p2) * pure.entries + p2 * two.entries)


@dataclass(frozen=True)
class MomentTable:
    """Complex expectations ``<a^dag^n a^m>`` with standard errors.

    Stores both index orders; ``value(m, n) = conj(value(n, m))`` throughout.
    ``order`` is the largest stored ``n + m``.
    """

    order: int
    values: dict
    std_errors: dict

    def value(self, n: int, m: int) -> complex:
        if (n, m) in self.values:
            return self.values[(n, m)]
        if (m, n) in self.values:
            return complex(np.conj(self.values[(m, n)]))
        raise KeyError((n, m))

    def std_error(self, n: int, m: int) -> float:
        if (n, m) in self.std_errors:
            return self.std_errors[(n, m)]
        return self.std_errors[(m, n)]

    def pairs(self) -> list:
        return sorted(self.values.keys(), key=lambda nm: (nm[0] + nm[1], nm))

    def rotated(self, chi: float) -> "MomentTable":
        """Global phase rotation ``a -> a e^{i chi}``; (n, m) picks up ``e^{i (m-n) chi}``."""
        vals = {nm: v * np.exp(1j * (nm[1] - nm[0]) * chi) for nm, v in self.values.items()}
        return MomentTable(order=self.order, values=vals, std_errors=dict(self.std_errors))


@dataclass(frozen=True)
class SolverSettings:
    """Shared controls for the constrained least-squares reconstructions."""

    restarts: int = 5
    max_iterations: int = 100_000
    rel_tol: float = 1e-10
    kkt_tol: float = 1e-6
    seed: int = 0


# ---------------------------------------------------------------------------
# forward model


def phase_space_grid(
    half_extent: float = DEFAULT_GRID_HALF_EXTENT, points: int = DEFAULT_GRID_POINTS
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Uniform square grid; returns (flat complex points, I axis, Q axis)."""
    axis = np.linspace(-half_extent, half_extent, points)
    ii, qq = np.meshgrid(axis, axis, indexing="xy")
    return (ii + 1j * qq).ravel(), axis, axis


_design_memo: dict = {}


def tomography_design(grid: np.ndarray, eta: float, f_mm: float, dim: int) -> np.ndarray:
    """Stack of observables ``A(alpha)`` with ``pi/2 W''(alpha) = Tr(rho A(alpha))``.

    ``A(alpha) = mm_factor(alpha) * Loss_eta^dag( M(f_mm alpha) )`` where ``M``
    is the displaced parity observable.  Memoized per (grid, eta, f_mm, dim).
    """
    grid = np.asarray(grid, dtype=complex).ravel()
    key = (grid.tobytes(), float(eta), float(f_mm), int(dim))
    hit = _design_memo.get(key)
    if hit is not None:
        return hit
    out = np.empty((grid.size, dim, dim), dtype=complex)
    for g, alpha in enumerate(grid):
        m = displaced_parity_matrix(f_mm * alpha, dim)
        out[g] = mode_mismatch_factor(f_mm, alpha) * apply_loss_heisenberg(m, eta)
    out.setflags(write=False)
    if len(_design_memo) > 8:
        _design_memo.pop(next(iter(_design_memo)))
    _design_memo[key] = out
    return out


def forward_wigner_values(rho: DensityMatrix, eta: float, f_mm: float, grid: np.ndarray) -> np.ndarray:
    """Noiseless model values ``pi/2 W''`` on the grid."""
    design = tomography_design(grid, eta, f_mm, rho.dim)
    return np.einsum("gij,ji->g", design, rho.entries).real


def synthesize_tomogram(
    rho_ideal: DensityMatrix,
    eta: float,
    f_mm: float,
    grid: np.ndarray | None = None,
    shots: int | None = None,
    seed: int = 0,
) -> Tomogram:
    """Simulate a displaced-parity tomogram of ``rho_ideal``.

    With ``shots=None`` the noiseless model expectation is returned at every
    grid point; otherwise each point averages ``shots`` binary parity
    outcomes drawn with the model mean (derived per-point seeds keep the
    result independent of evaluation order).
    """
    if grid is None:
        grid, _, _ = phase_space_grid()
    grid = np.asarray(grid, dtype=complex).ravel()
    values = forward_wigner_values(rho_ideal, eta, f_mm, grid)
    if shots is not None:
        if shots < 1:
            raise ValueError("shots must be >= 1 (or None for the noiseless map)")
        p_plus = np.clip(0.5 * (1.0 + values), 0.0, 1.0)
        sampled = np.empty_like(values)
        for g in range(grid.size):
            rng = derived_rng(seed, g)
            sampled[g] = 2.0 * rng.binomial(shots, p_plus[g]) / shots - 1.0
        values = sampled
    return Tomogram(grid=grid, values=values, shots_per_point=shots, eta=eta, f_mm=f_mm)


# ---------------------------------------------------------------------------
# constrained least squares on the set of density matrices


def _kkt_residual(s_mat, rho):
    c = float(np.real(np.trace(s_mat @ rho)))
    stationarity = float(np.linalg.norm(s_mat @ rho - c * rho))
    dual = float(max(0.0, c - np.linalg.eigvalsh(s_mat)[0]))
    return max(stationarity, dual)


def _solve_psd_least_squares(
    design: np.ndarray,
    targets: np.ndarray,
    weights: np.ndarray,
    settings: SolverSettings,
) -> tuple[np.ndarray, dict]:
    """Minimize ``mean_k w_k |Tr(rho A_k) - y_k|^2`` over unit-trace PSD ``rho``.

    Gradient descent on the triangular factor with an Armijo backtracking
    line search; the trial step is seeded by the Barzilai-Borwein curvature
    estimate, which the backtracking safeguards.  Returns ``(rho, info)``;
    raises NotConverged (carrying the best iterate) if the KKT residual
    stays above ``settings.kkt_tol``.
    """
    kcount, dim, _ = design.shape
    rows = design.transpose(0, 2, 1).reshape(kcount, dim * dim)  # model = rows @ vec(rho)
    rows_t = design.reshape(kcount, dim * dim)  # vec(T) = coeffs @ rows_t
    weights = np.asarray(weights, dtype=float)
    weights = weights / np.mean(weights)
    tril_mask = np.tril(np.ones((dim, dim), dtype=bool))
    eye = np.eye(dim)
    rng = derived_rng(settings.seed, 0)

    def objective(rho_vec):
        resid = rows @ rho_vec - targets
        return float(np.real(np.vdot(resid * weights, resid)) / kcount), resid

    def grad_operator(resid):
        t_mat = ((weights * np.conj(resid)) @ rows_t).reshape(dim, dim) / kcount
        return t_mat + t_mat.conj().T

    def run_start(g, budget):
        t = np.real(np.vdot(g, g))
        rho = (g.conj().T @ g) / t
        f, resid = objective(rho.reshape(-1))
        step = 1.0
        stall = 0
        iters = 0
        prev_g = prev_grad = None
        while iters < budget:
            s_mat = grad_operator(resid)
            c = np.real(np.trace(s_mat @ rho))
            grad = (g @ (s_mat - c * eye)) / t
            grad[~tril_mask] = 0.0
            gnorm_sq = float(np.real(np.vdot(grad, grad)))
            if gnorm_sq < 1e-30 or f < 1e-26:
                break
            # Once the relative decrease has gone quiet, stop only if the
            # KKT contract is already met; otherwise keep grinding, the
            # backtracked steps are still shrinking the residual.
            if stall >= 5 and _kkt_residual(s_mat, rho) <= 0.9 * settings.kkt_tol:
                break
            if prev_grad is not None:
                dg = g - prev_g
                dgrad = grad - prev_grad
                denom = float(np.real(np.vdot(dg, dgrad)))
                if denom > 1e-300:
                    step = max(1e-12, float(np.real(np.vdot(dg, dg))) / denom)
            prev_g, prev_grad = g.copy(), grad.copy()
            accepted = False
            s = step
            for _ in range(50):
                cand = g - s * grad
                t_c = np.real(np.vdot(cand, cand))
                rho_c = (cand.conj().T @ cand) / t_c
                f_c, resid_c = objective(rho_c.reshape(-1))
                if f_c <= f - 1e-4 * s * gnorm_sq:
                    accepted = True
                    break
                s *= 0.5
            iters += 1
            if not accepted:
                break
            rel_drop = (f - f_c) / max(f, 1e-300)
            g, t, rho, f, resid = cand, t_c, rho_c, f_c, resid_c
            stall = stall + 1 if rel_drop < settings.rel_tol else 0
        s_mat = grad_operator(resid)
        return rho, f, _kkt_residual(s_mat, rho), iters, g

    # The objective is convex in rho, so a start that meets the KKT
    # tolerance is a certified global optimum and no further restart can
    # improve it; the random restarts are fallback tries for starts that
    # stall at a rank-deficient stationary point of the factorization.
    best = None
    total_iters = 0
    for r in range(settings.restarts):
        if r == 0:
            g0 = np.eye(dim, dtype=complex) / math.sqrt(dim)
            budget = max(500, (6 * settings.max_iterations) // 10)
        else:
            g0 = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / (2.0 * dim)
            g0[~tril_mask] = 0.0
            g0 += np.eye(dim) * 0.5
            remaining = settings.max_iterations - total_iters
            budget = max(500, remaining // (settings.restarts - r))
        rho, f, kkt, used, _ = run_start(g0, budget)
        total_iters += used
        if best is None or f < best[1]:
            best = (rho, f, kkt)
        if kkt <= settings.kkt_tol:
            best = (rho, f, kkt) if f <= best[1] else best
            break
    rho, f, kkt = best
    info = {"objective": f, "kkt_residual": kkt, "iterations": total_iters}
    if kkt > settings.kkt_tol:
        raise NotConverged(
            f"KKT residual {kkt:.2e} above {settings.kkt_tol:.0e} after "
            f"{total_iters} iterations",
            best=DensityMatrix(rho),
            objective=f,
            kkt_residual=kkt,
        )
    return rho, info


def mle_reconstruct(
    tomogram: Tomogram,
    n_max: int = DEFAULT_RECON_NMAX,
    settings: SolverSettings | None = None,
) -> DensityMatrix:
    """Most-likely state for a tomogram: least-squares fit of the forward
    model over unit-trace positive-semidefinite matrices on ``n_max + 1``
    levels, using the tomogram's own ``eta``/``f_mm``."""
    settings = settings or SolverSettings()
    dim = n_max + 1
    if tomogram.n_points < dim * dim:
        raise ValueError(f"need at least {dim * dim} grid points, got {tomogram.n_points}")
    design = tomography_design(tomogram.grid, tomogram.eta, tomogram.f_mm, dim)
    targets = tomogram.values.astype(complex)
    weights = np.ones(tomogram.n_points)
    rho, _ = _solve_psd_least_squares(design, targets, weights, settings)
    return DensityMatrix(rho)


def mle_from_moments(
    table: MomentTable,
    n_max: int = DEFAULT_RECON_NMAX,
    settings: SolverSettings | None = None,
) -> DensityMatrix:
    """Most-likely state for a moment table, weighted by inverse variance.

    Entries with zero/absent standard error get unit weight (exact-moment
    mode); otherwise weights are ``1/sigma^2`` with sigma floored well below
    the smallest reported error.
    """
    settings = settings or SolverSettings()
    if table.order < 4:
        raise ValueError("moment table must reach at least order 4")
    dim = n_max + 1
    # (0,0) is fixed by the unit-trace parametrization, and pairs with an
    # index beyond n_max have an identically zero observable on the
    # reconstruction space; neither carries information about the fit.
    pairs = [nm for nm in table.pairs() if nm != (0, 0) and nm[0] <= n_max and nm[1] <= n_max]
    design = np.stack([moment_matrix(n, m, dim) for n, m in pairs])
    targets = np.array([table.value(n, m) for n, m in pairs], dtype=complex)
    sigmas = np.array([table.std_error(n, m) if (n, m) in table.std_errors else 0.0 for n, m in pairs])
    if np.all(sigmas == 0.0):
        weights = np.ones(len(pairs))
    else:
        floor = float(np.min(sigmas[sigmas > 0]))
        weights = 1.0 / np.clip(sigmas, floor, None) ** 2
    rho, _ = _solve_psd_least_squares(design, targets, weights, settings)
    return DensityMatrix(rho)


# ---------------------------------------------------------------------------
# preparation-angle sweep


@dataclass(frozen=True)
class ThetaSweepEntry:
    theta: float
    rho11: float
    re_rho01: float
    im_rho01: float
    fidelity: float
    ideal_rho11: float
    ideal_re_rho01: float


def _phase_correction_angle(coherences: Sequence[complex], thetas: Sequence[float]) -> float:
    """Rotation angle ``g`` (number-operator phase) minimizing the summed
    squared imaginary coherence ``Im(e^{-ig} rho01)^2``, signed so the real
    part aligns with the ideal curve."""
    z = sum(c * c for c in coherences)
    if abs(z) < 1e-30:
        return 0.0
    g = 0.5 * np.angle(z)
    score = sum(
        np.real(np.exp(-1j * g) * c) * math.sin(t / 2.0) * math.cos(t / 2.0)
        for c, t in zip(coherences, thetas)
    )
    if score < 0:
        g += math.pi
    return float(g)


def rotate_state(rho: DensityMatrix, g: float) -> DensityMatrix:
    """Apply the number-operator phase rotation ``e^{i g n}`` to a state."""
    phases = np.exp(1j * g * np.arange(rho.dim))
    return DensityMatrix((phases[:, None] * rho.entries) * phases.conj()[None, :])


def theta_sweep_entries(
    thetas: Sequence[float],
    scenario: SourceScenario,
    settings: SolverSettings | None = None,
    *,
    eta: float = 0.78,
    f_mm: float = 0.84,
    grid: np.ndarray | None = None,
    shots: int | None = None,
    seed: int = 0,
    sim_n_max: int = DEFAULT_SIM_NMAX,
    recon_n_max: int = DEFAULT_RECON_NMAX,
    threads: int = 1,
) -> tuple[list[ThetaSweepEntry], float]:
    """Reconstruct the source state across preparation angles.

    Synthesizes one tomogram per angle (derived seeds), reconstructs each,
    then applies one global phase correction chosen by minimizing the summed
    squared imaginary coherence.  Returns the per-angle entries and the
    correction angle.  ``threads`` caps concurrent reconstructions; results
    do not depend on it.
    """
    settings = settings or SolverSettings()
    space = FockSpace(n_max=sim_n_max)
    if grid is None:
        grid, _, _ = phase_space_grid()
    # Design tensors are memoized per grid; build them once before fanning out.
    tomography_design(grid, eta, f_mm, recon_n_max + 1)
    tomography_design(grid, eta, f_mm, space.dim)

    def one_angle(item):
        idx, theta = item
        rho_true = SourceScenario(
            theta=theta,
            two_photon_contamination=scenario.two_photon_contamination,
            t_p=scenario.t_p,
            kappa_p=scenario.kappa_p,
        ).state(space)
        tomo = synthesize_tomogram(
            rho_true, eta, f_mm, grid, shots=shots, seed=int(derived_rng(seed, idx).integers(2**63))
        )
        return mle_reconstruct(tomo, n_max=recon_n_max, settings=settings)

    items = list(enumerate(thetas))
    if threads > 1 and len(items) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            states = list(pool.map(one_angle, items))
    else:
        states = [one_angle(item) for item in items]
    g = _phase_correction_angle([s.entries[0, 1] for s in states], thetas)
    entries = []
    recon_space = FockSpace(n_max=recon_n_max)
    from .fock import fidelity as _fidelity  # local alias to keep module import light

    for theta, state in zip(thetas, states):
        rotated = rotate_state(state, g)
        ideal = photon_superposition(theta, recon_space).density()
        entries.append(
            ThetaSweepEntry(
                theta=float(theta),
                rho11=float(rotated.entries[1, 1].real),
                re_rho01=float(rotated.entries[0, 1].real),
                im_rho01=float(rotated.entries[0, 1].imag),
                fidelity=_fidelity(rotated, ideal),
                ideal_rho11=math.sin(theta / 2.0) ** 2,
                ideal_re_rho01=math.sin(theta / 2.0) * math.cos(theta / 2.0),
            )
        )
    return entries, g


# ---------------------------------------------------------------------------
# heterodyne records


def _q_function_sampler(coeffs: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
    """Exact rejection sampler for the Husimi distribution of a pure state.

    Proposal: pick a Fock level by its weight, draw ``|b|^2 ~ Gamma(n+1)``
    and a uniform phase; accept with the Cauchy-Schwarz-bounded ratio.
    """
    support = np.flatnonzero(np.abs(coeffs) ** 2 > 1e-14)
    c = np.zeros_like(coeffs)
    c[support] = coeffs[support]
    c = c / np.linalg.norm(c)
    weights = np.abs(c[support]) ** 2
    weights = weights / weights.sum()
    n_terms = support.size
    # Polynomial coefficients of p(z) = sum c_n z^n / sqrt(n!).
    poly = np.zeros(support.max() + 1, dtype=complex)
    for n in support:
        poly[n] = c[n] / math.sqrt(math.factorial(n))
    out = np.empty(count, dtype=complex)
    have = 0
    while have < count:
        m = int((count - have) * n_terms * 1.3) + 64
        levels = rng.choice(support, size=m, p=weights)
        radius_sq = rng.gamma(shape=levels + 1.0, scale=1.0)
        beta = np.sqrt(radius_sq) * np.exp(2j * math.pi * rng.random(m))
        num = np.abs(np.polynomial.polynomial.polyval(np.conj(beta), poly)) ** 2
        den = np.zeros(m)
        for n in support:
            den += (np.abs(c[n]) ** 2) * radius_sq**n / math.factorial(n)
        accept = rng.random(m) * n_terms * den < num
        picked = beta[accept]
        take = min(picked.size, count - have)
        out[have : have + take] = picked[:take]
        have += take
    return out


def _readout_separation(f_ro: float) -> float:
    """Gaussian mean giving misassignment probability ``(1 - f_ro)/2`` at
    threshold zero; a perfect readout gets a finite but negligible overlap."""
    p_correct = 0.5 * (1.0 + min(f_ro, 1.0 - 1e-15))
    return float(min(_norm_dist.ppf(p_correct), 8.0))


def simulate_heterodyne(
    rho: DensityMatrix,
    noise: NoiseModel,
    shots: int,
    seed: int,
    *,
    f_ro: float = 1.0,
    qubit_labels: np.ndarray | int = 1,
    batches: int = DEFAULT_BATCHES,
) -> RecordSet:
    """Draw heterodyne records of a state through the noisy detection chain.

    Samples an eigenstate of ``rho`` by its eigenvalue, a point from that
    pure state's Husimi distribution, then adds a circular Gaussian of
    variance ``n0`` (so vacuum gives ``<|S|^2> = 1 + n0``).  ``qubit_q`` is
    drawn from two Gaussians at ``+-mu`` (unit width) whose overlap realizes
    the requested readout fidelity; ``qubit_labels`` (+1 even / -1 odd) sets
    the sign per shot.
    """
    if shots < 1:
        raise ValueError("shots must be >= 1")
    w, v = np.linalg.eigh(rho.entries)
    keep = w > 1e-12
    w = np.clip(w[keep], 0.0, None)
    w = w / w.sum()
    kets = v[:, keep].T
    labels = np.broadcast_to(np.asarray(qubit_labels), (shots,))
    mu = _readout_separation(f_ro)
    s_all = np.empty(shots, dtype=complex)
    qq_all = np.empty(shots)
    offset = 0
    for rng, size in zip(batch_rngs(seed, batches), batch_sizes(shots, batches)):
        if size == 0:
            continue
        counts = rng.multinomial(size, w)
        chunks = [
            _q_function_sampler(kets[k], int(c), rng)
            for k, c in enumerate(counts)
            if c > 0
        ]
        s = np.concatenate(chunks) if chunks else np.empty(0, dtype=complex)
        s = s[rng.permutation(size)]
        if noise.n0 > 0:
            s = s + math.sqrt(noise.n0 / 2.0) * (rng.standard_normal(size) + 1j * rng.standard_normal(size))
        s_all[offset : offset + size] = s
        qq_all[offset : offset + size] = mu * labels[offset : offset + size] + rng.standard_normal(size)
        offset += size
    return RecordSet(i=s_all.real, q=s_all.imag, qubit_q=qq_all, shot=np.arange(shots))


def herald_branch_kets(
    alpha: complex, params: DetectorParams, space: FockSpace
) -> tuple[tuple[float, Ket], tuple[float, Ket]]:
    """Pure conditional states of a heralded coherent input, with their
    ideal branch probabilities (label noise not included)."""
    ket = coherent_state(alpha, space).amplitudes
    m_even, m_odd = parity_kraus(params, space)
    out = []
    for m in (m_even, m_odd):
        branch = m @ ket
        p = float(np.linalg.norm(branch) ** 2)
        out.append((p, Ket(branch / np.linalg.norm(branch))))
    return out[0], out[1]


def simulate_herald_records(
    alpha: complex,
    params: DetectorParams,
    noise: NoiseModel,
    shots: int,
    seed: int,
    *,
    space: FockSpace | None = None,
    batches: int = DEFAULT_BATCHES,
) -> RecordSet:
    """Correlated field/detector records of a heralded coherent input.

    Per shot: the true parity branch is drawn with its projective
    probability, the field record is sampled from that branch state, and the
    detector label passes through the thermal and Ramsey flips before
    setting the sign of the readout Gaussian (readout error itself is
    realized by the Gaussian overlap at the configured ``f_ro``).
    """
    space = space or FockSpace()
    (p_e, ket_e), (_, ket_o) = herald_branch_kets(alpha, params, space)
    mu = _readout_separation(params.f_ro)
    s_all = np.empty(shots, dtype=complex)
    qq_all = np.empty(shots)
    offset = 0
    for rng, size in zip(batch_rngs(seed, batches), batch_sizes(shots, batches)):
        if size == 0:
            continue
        truth_even = rng.random(size) < p_e
        s = np.empty(size, dtype=complex)
        n_even = int(np.sum(truth_even))
        if n_even:
            s[truth_even] = _q_function_sampler(ket_e.amplitudes, n_even, rng)
        if size - n_even:
            s[~truth_even] = _q_function_sampler(ket_o.amplitudes, size - n_even, rng)
        if noise.n0 > 0:
            s = s + math.sqrt(noise.n0 / 2.0) * (rng.standard_normal(size) + 1j * rng.standard_normal(size))
        label = np.where(truth_even, 1.0, -1.0)
        for p_err in (params.p_e_th, params.p_t2):
            if p_err > 0:
                label *= np.where(rng.random(size) < p_err, -1.0, 1.0)
        qq_all[offset : offset + size] = mu * label + rng.standard_normal(size)
        s_all[offset : offset + size] = s
        offset += size
    return RecordSet(i=s_all.real, q=s_all.imag, qubit_q=qq_all, shot=np.arange(shots))


# ---------------------------------------------------------------------------
# moment estimation and deconvolution


def moment_pairs(max_order: int) -> list:
    """All index pairs with ``n + m <= max_order`` in ascending total order."""
    pairs = [(n, m) for n in range(max_order + 1) for m in range(max_order + 1) if n + m <= max_order]
    return sorted(pairs, key=lambda nm: (nm[0] + nm[1], nm))


def raw_moment_sums(s: np.ndarray, max_order: int) -> dict:
    """Per-pair sums ``sum conj(S)^n S^m`` (not means) over a record array."""
    powers = [np.ones_like(s)]
    for _ in range(max_order):
        powers.append(powers[-1] * s)
    out = {}
    for n, m in moment_pairs(max_order):
        out[(n, m)] = complex(np.sum(np.conj(powers[n]) * powers[m]))
    return out


def _deconvolve(raw: dict, g_ref: dict, max_order: int) -> dict:
    """Invert the binomial noise convolution, lowest total order first."""
    signal = {}
    for n, m in moment_pairs(max_order):
        acc = raw[(n, m)]
        for i in range(n + 1):
            for j in range(m + 1):
                if (i, j) == (n, m):
                    continue
                acc -= (
                    math.comb(n, i)
                    * math.comb(m, j)
                    * signal[(i, j)]
                    * g_ref[(n - i, m - j)]
                )
        signal[(n, m)] = acc / g_ref[(0, 0)]
    return signal


def noise_reference_moments(records: RecordSet, max_order: int) -> dict:
    """Anti-normal noise-mode moments estimated from a vacuum reference."""
    sums = raw_moment_sums(records.s, max_order)
    return {nm: v / len(records) for nm, v in sums.items()}


def analytic_noise_moments(n0: float, max_order: int) -> dict:
    """Noise moments of the ideal chain: ``G(n, m) = delta_nm n! (1 + n0)^n``."""
    out = {}
    for n, m in moment_pairs(max_order):
        out[(n, m)] = complex(math.factorial(n) * (1.0 + n0) ** n) if n == m else 0j
    return out


def forward_raw_moments(signal: dict, g_ref: dict, max_order: int) -> dict:
    """Model raw moments of signal-plus-noise, the inverse of ``_deconvolve``."""
    out = {}
    for n, m in moment_pairs(max_order):
        acc = 0j
        for i in range(n + 1):
            for j in range(m + 1):
                acc += math.comb(n, i) * math.comb(m, j) * signal[(i, j)] * g_ref[(n - i, m - j)]
        out[(n, m)] = acc
    return out


def deconvolved_moments(raw: dict, g_ref: dict, max_order: int) -> dict:
    return _deconvolve(raw, g_ref, max_order)


def _batch_slices(total: int, batches: int) -> list:
    sizes = batch_sizes(total, batches)
    edges = np.cumsum([0] + sizes)
    return [slice(int(edges[b]), int(edges[b + 1])) for b in range(batches)]


def moments_from_records(
    records: RecordSet,
    vacuum_reference: RecordSet,
    max_order: int,
    batches: int = DEFAULT_BATCHES,
) -> MomentTable:
    """Estimate signal moments from records plus a vacuum noise reference.

    Raw moments of both record sets are deconvolved through the binomial
    noise model; standard errors come from batch means over ``batches``
    equal slices (both sets sliced in step).

    Raises:
        InsufficientStatistics: if every moment at the top order has a
            standard error above the largest estimated magnitude, i.e. the
            requested order carries no information at this shot count.
    """
    if max_order > 7:
        raise ValueError("max_order beyond 7 is not supported")
    if len(records) == 0 or len(vacuum_reference) == 0:
        raise ValueError("record sets must be non-empty")
    if batches < 20:
        raise ValueError("need at least 20 batches for the error estimate")
    g_full = noise_reference_moments(vacuum_reference, max_order)
    raw_full = {nm: v / len(records) for nm, v in raw_moment_sums(records.s, max_order).items()}
    central = _deconvolve(raw_full, g_full, max_order)

    per_batch = []
    rec_slices = _batch_slices(len(records), batches)
    ref_slices = _batch_slices(len(vacuum_reference), batches)
    s = records.s
    v = vacuum_reference.s
    for bs, vs in zip(rec_slices, ref_slices):
        if bs.stop - bs.start == 0 or vs.stop - vs.start == 0:
            continue
        raw_b = {nm: w / (bs.stop - bs.start) for nm, w in raw_moment_sums(s[bs], max_order).items()}
        g_b = {nm: w / (vs.stop - vs.start) for nm, w in raw_moment_sums(v[vs], max_order).items()}
        per_batch.append(_deconvolve(raw_b, g_b, max_order))
    std_errors = {}
    nb = len(per_batch)
    for nm in moment_pairs(max_order):
        vals = np.array([b[nm] for b in per_batch])
        spread = math.sqrt(
            (np.var(vals.real, ddof=1) + np.var(vals.imag, ddof=1)) / nb
        )
        std_errors[nm] = spread
    table = MomentTable(order=max_order, values=central, std_errors=std_errors)
    top = [nm for nm in moment_pairs(max_order) if nm[0] + nm[1] == max_order]
    # Reference scale from the well-determined low orders ((0,0) pins it at
    # one); if even the best top-order estimate is noisier than that, the
    # requested order carries no information at this shot count.
    reference = max(abs(v) for nm, v in central.items() if nm[0] + nm[1] <= 2)
    if top and min(std_errors[nm] for nm in top) > reference:
        raise InsufficientStatistics(
            f"every order-{max_order} moment has standard error above the "
            f"low-order magnitude scale {reference:.3g}"
        )
    return table


def conditioned_moments(
    records: RecordSet,
    vacuum_reference: RecordSet,
    max_order: int,
    qubit_threshold: float = 0.0,
    confusion: np.ndarray | None = None,
    batches: int = DEFAULT_BATCHES,
) -> tuple[MomentTable, MomentTable]:
    """Signal moments conditioned on the detector readout quadrature.

    Records are split at ``qubit_threshold``; the 2x2 readout ``confusion``
    matrix (columns index the true class) is inverted on the pair of
    class-weighted raw-moment accumulators before normalization and noise
    deconvolution.  A single global phase rotation, chosen to maximize the
    real part of the pooled second-order moment, is applied to both tables,
    after which ``Re<a^dag^n a^m> = Re<a^dag^m a^n>`` holds by construction.

    Returns ``(even_table, odd_table)`` for readout above/below threshold.
    """
    if confusion is None:
        confusion = np.eye(2)
    confusion = np.asarray(confusion, dtype=float)
    det = np.linalg.det(confusion)
    if abs(det) < 1e-9:
        raise SingularConfusion(f"confusion matrix determinant {det:.2e}")
    inv = np.linalg.inv(confusion)
    g_full = noise_reference_moments(vacuum_reference, max_order)
    n_total = len(records)
    even_mask = records.qubit_q > qubit_threshold

    def corrected_pair(s, mask, count, g_ref):
        acc_e = {nm: v / count for nm, v in raw_moment_sums(s[mask], max_order).items()}
        acc_o = {nm: v / count for nm, v in raw_moment_sums(s[~mask], max_order).items()}
        true_e, true_o = {}, {}
        for nm in moment_pairs(max_order):
            te = inv[0, 0] * acc_e[nm] + inv[0, 1] * acc_o[nm]
            to = inv[1, 0] * acc_e[nm] + inv[1, 1] * acc_o[nm]
            true_e[nm], true_o[nm] = te, to
        out = []
        for acc in (true_e, true_o):
            w = acc[(0, 0)].real
            if w <= 0:
                return None
            normalized = {nm: v / w for nm, v in acc.items()}
            out.append(_deconvolve(normalized, g_ref, max_order))
        return out

    central = corrected_pair(records.s, even_mask, n_total, g_full)
    if central is None:
        raise InsufficientStatistics("a corrected class has non-positive weight")
    # One rotation for both classes: the pooled field sets the frame.
    pooled = _deconvolve(
        {nm: v / n_total for nm, v in raw_moment_sums(records.s, max_order).items()},
        g_full,
        max_order,
    )
    chi = -0.5 * float(np.angle(pooled[(0, 2)])) if abs(pooled[(0, 2)]) > 1e-30 else 0.0

    rec_slices = _batch_slices(n_total, batches)
    ref_slices = _batch_slices(len(vacuum_reference), batches)
    per_batch = []
    for bs, vs in zip(rec_slices, ref_slices):
        count = bs.stop - bs.start
        if count == 0 or vs.stop - vs.start == 0:
            continue
        g_b = {
            nm: v / (vs.stop - vs.start)
            for nm, v in raw_moment_sums(vacuum_reference.s[vs], max_order).items()
        }
        pair = corrected_pair(records.s[bs], even_mask[bs], count, g_b)
        if pair is not None:
            per_batch.append(pair)
    tables = []
    for cls in (0, 1):
        std_errors = {}
        for nm in moment_pairs(max_order):
            vals = np.array([b[cls][nm] for b in per_batch])
            std_errors[nm] = math.sqrt(
                (np.var(vals.real, ddof=1) + np.var(vals.imag, ddof=1)) / len(per_batch)
            )
        tables.append(
            MomentTable(order=max_order, values=central[cls], std_errors=std_errors).rotated(chi)
        )
    return tables[0], tables[1]


def readout_confusion(f_ro: float) -> np.ndarray:
    """2x2 assignment matrix of the readout: ``[[1-e, e], [e, 1-e]]``."""
    eps = 0.5 * (1.0 - f_ro)
    return np.array([[1.0 - eps, eps], [eps, 1.0 - eps]])


def moment_table_from_state(rho: DensityMatrix, pairs: Iterable) -> MomentTable:
    """Exact moments of a state, zero standard errors."""
    from .fock import moment as _moment

    values = {}
    order = 0
    for n, m in pairs:
        values[(n, m)] = _moment(rho, n, m)
        order = max(order, n + m)
    return MomentTable(order=order, values=values, std_errors={nm: 0.0 for nm in values})


def g2_from_table(table: MomentTable) -> tuple[float, float]:
    """Correlation ``g2 = <a^dag2 a2>/<a^dag a>^2`` with a propagated error."""
    nbar = table.value(1, 1).real
    if nbar <= 1e-12:
        raise VacuumState("g2 undefined for (near-)vacuum moments")
    m22 = table.value(2, 2).real
    g = m22 / nbar**2
    s22 = table.std_error(2, 2)
    s11 = table.std_error(1, 1)
    err = abs(g) * math.sqrt(
        (s22 / m22) ** 2 + (2.0 * s11 / nbar) ** 2
    ) if m22 != 0 else float("inf")
    return g, err


def parity_from_moments(table: MomentTable, k_max: int | None = None) -> float:
    """Parity via the normally ordered expansion ``sum_k (-2)^k/k! <a^dag^k a^k>``.

    Exact for states supported on ``n <= k_max``.
    """
    if k_max is None:
        k_max = table.order // 2
    total = 0.0
    for k in range(k_max + 1):
        total += (-2.0) ** k / math.factorial(k) * table.value(k, k).real
    return total


def visibility_from_moments(even: MomentTable, odd: MomentTable, k_max: int | None = None) -> float:
    return parity_from_moments(even, k_max) - parity_from_moments(odd, k_max)
