"""Truncated-Fock-basis exact quantum oracle.

State construction (thermal, squeezed thermal, number superpositions), closed
form Kerr evolution, full quartic-Hamiltonian evolution, characteristic
function, position distributions and Wigner grids, all in the dimensionless
units of :mod:`squeezeslit.core` (q = a + a^dag, vacuum variance 1).

Every unitary built here reduces to exponentials of the quadrature
q_phi = cos(phi) q + sin(phi) p, so a single cached eigendecomposition of the
tridiagonal position operator supplies squeeze-free displacement kernels for
both the characteristic function and the displacement-parity Wigner values.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg

DEFAULT_DIM = 200
# Population allowed in the top 10% of Fock levels before truncation is
# declared inadequate.
TAIL_FRACTION = 0.10
TAIL_MASS_TOL = 1e-6

_TRACE_TOL = 1e-9
_HERM_TOL = 1e-12


class TailMassError(ValueError):
    """Truncation too small for the requested state."""

    def __init__(self, leakage: float, dim: int):
        self.leakage = leakage
        self.dim = dim
        super().__init__(
            f"tail mass {leakage:.3e} in top {TAIL_FRACTION:.0%} of {dim} Fock "
            f"levels exceeds {TAIL_MASS_TOL:.0e}")


class ConvergenceError(RuntimeError):
    """Split-step evolution failed its step-doubling check."""


class SupportError(ValueError):
    """Requested grid does not cover the state's phase-space support."""


@lru_cache(maxsize=8)
def lowering_operator(dim: int) -> np.ndarray:
    a = np.zeros((dim, dim))
    n = np.arange(1, dim)
    a[n - 1, n] = np.sqrt(n)
    a.setflags(write=False)
    return a


@lru_cache(maxsize=8)
def position_operator(dim: int) -> np.ndarray:
    a = lowering_operator(dim)
    q = a + a.T
    q.setflags(write=False)
    return q


@lru_cache(maxsize=8)
def momentum_operator(dim: int) -> np.ndarray:
    a = lowering_operator(dim)
    p = -1j * (a - a.T)
    p.setflags(write=False)
    return p


@lru_cache(maxsize=8)
def _position_eigensystem(dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues and orthogonal eigenvectors of the truncated q operator."""
    lam, vec = np.linalg.eigh(position_operator(dim))
    lam.setflags(write=False)
    vec.setflags(write=False)
    return lam, vec


@dataclass(frozen=True, eq=False)
class FockDensityMatrix:
    """Hermitian, unit-trace density matrix on a truncated number basis."""

    rho: np.ndarray

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=complex)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
            raise ValueError(f"density matrix must be square, got {rho.shape}")
        herm_dev = np.abs(rho - rho.conj().T).max()
        if herm_dev > _HERM_TOL * max(1.0, np.abs(rho).max()):
            raise ValueError(f"density matrix not Hermitian (deviation {herm_dev:.3e})")
        tr_dev = abs(np.trace(rho).real - 1.0)
        if tr_dev > _TRACE_TOL:
            raise ValueError(f"trace deviates from 1 by {tr_dev:.3e}")
        rho = 0.5 * (rho + rho.conj().T)
        rho.setflags(write=False)
        object.__setattr__(self, "rho", rho)

    @property
    def dim(self) -> int:
        return self.rho.shape[0]

    def populations(self) -> np.ndarray:
        return np.real(np.diag(self.rho))

    def tail_mass(self) -> float:
        """Population of the top TAIL_FRACTION of Fock levels."""
        cut = int(math.ceil((1.0 - TAIL_FRACTION) * self.dim))
        return float(self.populations()[cut:].sum())

    def expectation(self, op: np.ndarray) -> complex:
        return complex(np.trace(self.rho @ op))

    def position_variance(self) -> float:
        q = position_operator(self.dim)
        mean = self.expectation(q).real
        return self.expectation(q @ q).real - mean**2

    def validate(self, eig_tol: float = 1e-9) -> None:
        """Full physicality check: positivity and truncation adequacy."""
        eigs = np.linalg.eigvalsh(self.rho)
        if eigs[0] < -eig_tol:
            raise ValueError(f"negative eigenvalue {eigs[0]:.3e}")
        leak = self.tail_mass()
        if leak > TAIL_MASS_TOL:
            raise TailMassError(leak, self.dim)


def _check_tail(fdm: FockDensityMatrix) -> FockDensityMatrix:
    leak = fdm.tail_mass()
    if leak > TAIL_MASS_TOL:
        raise TailMassError(leak, fdm.dim)
    return fdm


def fock_vacuum(dim: int = DEFAULT_DIM) -> FockDensityMatrix:
    rho = np.zeros((dim, dim), dtype=complex)
    rho[0, 0] = 1.0
    return FockDensityMatrix(rho)


def fock_superposition(coeffs, dim: int | None = None) -> FockDensityMatrix:
    """Pure state sum_n c_n |n> (normalized), e.g. (1, 1) for (|0>+|1>)/sqrt(2)."""
    c = np.asarray(coeffs, dtype=complex)
    if dim is None:
        dim = max(2 * len(c), 16)
    if len(c) > dim:
        raise ValueError("more coefficients than basis states")
    norm = np.linalg.norm(c)
    if norm == 0:
        raise ValueError("null state vector")
    psi = np.zeros(dim, dtype=complex)
    psi[:len(c)] = c / norm
    return FockDensityMatrix(np.outer(psi, psi.conj()))


def fock_thermal(nbar: float, dim: int = DEFAULT_DIM) -> FockDensityMatrix:
    """Thermal state with Boltzmann weights nbar^n / (nbar+1)^(n+1)."""
    if nbar < 0:
        raise ValueError(f"nbar must be non-negative, got {nbar}")
    if nbar == 0:
        return fock_vacuum(dim)
    n = np.arange(dim)
    logw = n * math.log(nbar) - (n + 1) * math.log(nbar + 1.0)
    w = np.exp(logw)
    w /= w.sum()
    return FockDensityMatrix(np.diag(w).astype(complex))


@lru_cache(maxsize=32)
def squeeze_operator(s: float, theta: float, dim: int) -> np.ndarray:
    """Unitary S(zeta) = exp((conj(zeta) a^2 - zeta a^dag^2)/2), zeta = s e^{i theta}.

    Positive s compresses <q^2> by e^{-2s} at theta = 0, matching the
    symplectic convention in :func:`squeezeslit.core.apply_squeeze`.
    """
    a = lowering_operator(dim)
    zeta = s * np.exp(1j * theta)
    gen = 0.5 * (np.conj(zeta) * (a @ a) - zeta * (a.T @ a.T))
    u = scipy.linalg.expm(gen)
    u.setflags(write=False)
    return u


def apply_squeeze_fock(fdm: FockDensityMatrix, s: float,
                       theta: float = 0.0) -> FockDensityMatrix:
    """Unitary squeeze in the truncated basis; raises TailMassError on leak."""
    u = squeeze_operator(float(s), float(theta), fdm.dim)
    rho = u @ fdm.rho @ u.conj().T
    # expm of the truncated generator is exactly unitary, but renormalize the
    # last ulps so downstream trace checks never accumulate drift
    rho = rho / np.trace(rho).real
    return _check_tail(FockDensityMatrix(rho))


def fock_squeezed_thermal(nbar: float, s: float, theta: float = 0.0,
                          dim: int = DEFAULT_DIM,
                          auto_escalate: bool = True) -> FockDensityMatrix:
    """Squeezed thermal state S(zeta) rho_th S^dag(zeta).

    If the tail-mass check fails at ``dim`` the truncation is doubled once
    (200 -> 400 by default) before giving up.
    """
    try:
        return apply_squeeze_fock(fock_thermal(nbar, dim), s, theta)
    except TailMassError:
        if not auto_escalate:
            raise
        return apply_squeeze_fock(fock_thermal(nbar, 2 * dim), s, theta)


def kerr_energies(omega: float, kerr: float, dim: int) -> np.ndarray:
    n = np.arange(dim, dtype=float)
    return omega * n + kerr * n * n


def evolve_kerr_diagonal(fdm: FockDensityMatrix, omega: float, kerr: float,
                         t: float) -> FockDensityMatrix:
    """Closed-form evolution under H = omega n + K n^2 (no integrator error)."""
    e = kerr_energies(omega, kerr, fdm.dim)
    phase = np.exp(-1j * e * t)
    return FockDensityMatrix(fdm.rho * np.outer(phase, phase.conj()))


def rotate_fock(fdm: FockDensityMatrix, phi: float) -> FockDensityMatrix:
    """Harmonic phase-space rotation by phi (= omega * t), Kerr-free."""
    return evolve_kerr_diagonal(fdm, 1.0, 0.0, phi)


def quartic_hamiltonian(omega: float, kerr: float, dim: int) -> np.ndarray:
    """H = (omega/4)(p^2 + q^2) + (K/6) q^4 as truncated matrix products.

    The K n^2 Kerr model is the rotating-wave reduction of this Hamiltonian:
    <n|q^4|n> = 6n^2 + 6n + 3, so lambda = K / 6 omega maps between them.
    """
    q = position_operator(dim)
    p = momentum_operator(dim)
    q2 = q @ q
    return (omega / 4.0) * (p @ p + q2).real + (kerr / 6.0) * (q2 @ q2)


_QUARTIC_EIG_CACHE: dict[tuple, tuple[np.ndarray, np.ndarray]] = {}


def _quartic_eigensystem(omega: float, kerr: float, dim: int):
    key = (float(omega), float(kerr), int(dim))
    if key not in _QUARTIC_EIG_CACHE:
        if len(_QUARTIC_EIG_CACHE) > 16:
            _QUARTIC_EIG_CACHE.clear()
        _QUARTIC_EIG_CACHE[key] = np.linalg.eigh(quartic_hamiltonian(omega, kerr, dim))
    return _QUARTIC_EIG_CACHE[key]


def trace_distance(r1: FockDensityMatrix, r2: FockDensityMatrix) -> float:
    eigs = np.linalg.eigvalsh(r1.rho - r2.rho)
    return 0.5 * float(np.abs(eigs).sum())


def _strang_quartic(rho: np.ndarray, omega: float, kerr: float, t: float,
                    steps: int) -> np.ndarray:
    dim = rho.shape[0]
    lam, qvec = _position_eigensystem(dim)
    h0 = np.diag(quartic_hamiltonian(omega, 0.0, dim))
    dt = t / steps
    half = np.exp(-1j * h0 * (dt / 2.0))
    kick = qvec @ (np.exp(-1j * (kerr / 6.0) * lam**4 * dt)[:, None] * qvec.T)
    u_step = (half[:, None] * kick) * half[None, :]
    u = np.linalg.matrix_power(u_step, steps)
    return u @ rho @ u.conj().T


def evolve_quartic(fdm: FockDensityMatrix, omega: float, kerr: float, t: float,
                   steps: int | None = None) -> FockDensityMatrix:
    """Evolve under the full quartic Hamiltonian.

    With ``steps=None`` the dense Hamiltonian is diagonalized once (cached)
    and the propagator is exact.  With an explicit step count a Strang
    splitting between the harmonic diagonal and the q-basis quartic kick is
    used and validated by step doubling: if the ``steps`` and ``2*steps``
    results differ by more than 1e-6 in trace distance, ConvergenceError is
    raised.  The doubled-step result is returned.
    """
    if steps is None:
        eps, vec = _quartic_eigensystem(omega, kerr, fdm.dim)
        phase = np.exp(-1j * eps * t)
        u = (vec * phase[None, :]) @ vec.conj().T
        rho = u @ fdm.rho @ u.conj().T
        rho /= np.trace(rho).real
        return FockDensityMatrix(rho)
    if steps < 1:
        raise ValueError("steps must be >= 1")
    coarse = _strang_quartic(fdm.rho, omega, kerr, t, steps)
    fine = _strang_quartic(fdm.rho, omega, kerr, t, 2 * steps)
    coarse = FockDensityMatrix(coarse / np.trace(coarse).real)
    fine = FockDensityMatrix(fine / np.trace(fine).real)
    dist = trace_distance(coarse, fine)
    if dist > 1e-6:
        raise ConvergenceError(
            f"splitting not converged: trace distance {dist:.3e} between "
            f"{steps} and {2 * steps} steps")
    return fine


def characteristic_function(fdm: FockDensityMatrix, xi_q: float,
                            xi_p: float = 0.0) -> complex:
    """chi(xi) = Tr[rho exp(i(xi_q q + xi_p p))].

    The generator is |xi| times the rotated quadrature
    q_phi = e^{i phi n} q e^{-i phi n}, so the cached eigensystem of q supplies
    the exponential for every probe direction.
    """
    s = math.hypot(xi_q, xi_p)
    if s == 0.0:
        return 1.0 + 0.0j
    phi = math.atan2(xi_p, xi_q)
    lam, qvec = _position_eigensystem(fdm.dim)
    pv = np.exp(1j * phi * np.arange(fdm.dim))
    rho_phi = fdm.rho * np.outer(pv.conj(), pv)
    m = qvec.T @ rho_phi @ qvec
    return complex(np.diag(m) @ np.exp(1j * s * lam))


def characteristic_function_many(fdm: FockDensityMatrix,
                                 ks: np.ndarray) -> np.ndarray:
    """Vectorized chi over an (n, 2) array of probe vectors."""
    ks = np.asarray(ks, dtype=float).reshape(-1, 2)
    return np.array([characteristic_function(fdm, kx, kp) for kx, kp in ks])


def kerr_visibility_trace(fdm: FockDensityMatrix, omega: float, kerr: float,
                          times: np.ndarray, eta) -> tuple[np.ndarray, np.ndarray]:
    """(V, alpha) at probe 2*eta for many times under H = omega n + K n^2.

    Uses chi(t) = sum_mn rho_mn E_nm exp(-i (E_m - E_n) t), evaluated without
    rebuilding density matrices per sample.
    """
    from .core import _as_eta
    xi = 2.0 * _as_eta(eta)
    times = np.asarray(times, dtype=float)
    lam, qvec = _position_eigensystem(fdm.dim)
    e_op = (qvec * np.exp(1j * xi * lam)[None, :]) @ qvec.T
    coeff = (fdm.rho * e_op.T).ravel()
    energies = kerr_energies(omega, kerr, fdm.dim)
    delta = np.subtract.outer(energies, energies).ravel()
    keep = np.abs(coeff) > 1e-16
    coeff, delta = coeff[keep], delta[keep]
    chi = np.empty(times.shape, dtype=complex)
    for i, t in enumerate(times):
        chi[i] = coeff @ np.exp(-1j * delta * t)
    return np.abs(chi), np.angle(chi)


def hermite_functions(n_levels: int, q_axis: np.ndarray) -> np.ndarray:
    """Oscillator eigenfunctions psi_n(q) on the axis, vacuum variance 1.

    psi_0(q) = (2 pi)^(-1/4) exp(-q^2/4); stable normalized recurrence.
    """
    q_axis = np.asarray(q_axis, dtype=float)
    x = q_axis / math.sqrt(2.0)
    psi = np.empty((n_levels, len(q_axis)))
    h_prev = np.pi**-0.25 * np.exp(-0.5 * x * x)
    psi[0] = 2.0**-0.25 * h_prev
    if n_levels == 1:
        return psi
    h_cur = math.sqrt(2.0) * x * h_prev
    psi[1] = 2.0**-0.25 * h_cur
    for n in range(1, n_levels - 1):
        h_next = math.sqrt(2.0 / (n + 1)) * x * h_cur - math.sqrt(n / (n + 1)) * h_prev
        h_prev, h_cur = h_cur, h_next
        psi[n + 1] = 2.0**-0.25 * h_cur
    return psi


def position_distribution(fdm: FockDensityMatrix, q_axis: np.ndarray) -> np.ndarray:
    """P(q) = <q| rho |q> on the given axis."""
    psi = hermite_functions(fdm.dim, q_axis)
    g = fdm.rho @ psi
    return np.einsum("nq,nq->q", psi, g).real


def momentum_distribution(fdm: FockDensityMatrix, p_axis: np.ndarray) -> np.ndarray:
    """P(p), computed as the position distribution of the quarter-rotated state."""
    return position_distribution(rotate_fock(fdm, math.pi / 2.0), p_axis)


@dataclass(frozen=True, eq=False)
class WignerGrid:
    """W(q, p) sampled on a Cartesian grid; values[i, j] = W(q_axis[i], p_axis[j])."""

    q_axis: np.ndarray
    p_axis: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q_axis, dtype=float)
        p = np.asarray(self.p_axis, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if v.shape != (len(q), len(p)):
            raise ValueError(f"values shape {v.shape} does not match axes "
                             f"({len(q)}, {len(p)})")
        for arr in (q, p, v):
            arr.setflags(write=False)
        object.__setattr__(self, "q_axis", q)
        object.__setattr__(self, "p_axis", p)
        object.__setattr__(self, "values", v)

    def integral(self) -> float:
        return float(np.trapz(np.trapz(self.values, self.p_axis, axis=1), self.q_axis))

    def marginal_q(self) -> np.ndarray:
        return np.trapz(self.values, self.p_axis, axis=1)

    def to_csv(self, path) -> None:
        """Row-major (q, p, W) rows; axes recorded in the header comments."""
        with open(path, "w", newline="") as fh:
            fh.write("# q_axis: " + " ".join(f"{v:.10g}" for v in self.q_axis) + "\n")
            fh.write("# p_axis: " + " ".join(f"{v:.10g}" for v in self.p_axis) + "\n")
            fh.write("q,p,W\n")
            for i, qv in enumerate(self.q_axis):
                for j, pv in enumerate(self.p_axis):
                    fh.write(f"{qv:.10g},{pv:.10g},{self.values[i, j]:.12g}\n")

    def to_json_dict(self) -> dict:
        return {"q_axis": self.q_axis.tolist(), "p_axis": self.p_axis.tolist(),
                "values": self.values.tolist()}


def _wigner_point(rho: np.ndarray, lam: np.ndarray, qvec: np.ndarray,
                  parity: np.ndarray, q: float, p: float) -> float:
    # W(q,p) = (1/2pi) Tr[rho D(alpha) Pi D^dag(alpha)], alpha = (q + ip)/2;
    # D(alpha) = exp(i(xi_q q_op + xi_p p_op)) with (xi_q, xi_p) = (p/2, -q/2).
    s = 0.5 * math.hypot(q, p)
    if s == 0.0:
        vals = np.real(np.diag(rho))
        return float((parity * vals).sum() / (2.0 * math.pi))
    phi = math.atan2(-q, p)
    pv = np.exp(1j * phi * np.arange(rho.shape[0]))
    rho_phi = rho * np.outer(pv.conj(), pv)
    m = qvec.T @ rho_phi @ qvec
    eig_phase = np.exp(1j * s * lam)
    t = (eig_phase.conj()[:, None] * m) * eig_phase[None, :]
    g = qvec @ t
    diag = np.einsum("nk,nk->n", g, qvec)
    return float((parity * diag.real).sum() / (2.0 * math.pi))


def wigner_grid(fdm: FockDensityMatrix, q_axis: np.ndarray, p_axis: np.ndarray,
                workers: int = 1) -> WignerGrid:
    """Displacement-parity Wigner function on a Cartesian grid.

    The axes must carry essentially all marginal probability (tail < 1e-4
    per quadrature), otherwise SupportError is raised.
    """
    q_axis = np.asarray(q_axis, dtype=float)
    p_axis = np.asarray(p_axis, dtype=float)
    pq = position_distribution(fdm, q_axis)
    pp = momentum_distribution(fdm, p_axis)
    miss_q = 1.0 - np.trapz(pq, q_axis)
    miss_p = 1.0 - np.trapz(pp, p_axis)
    if miss_q > 1e-4 or miss_p > 1e-4:
        raise SupportError(
            f"grid misses probability mass (q: {miss_q:.2e}, p: {miss_p:.2e})")
    lam, qvec = _position_eigensystem(fdm.dim)
    parity = (-1.0) ** np.arange(fdm.dim)
    values = np.empty((len(q_axis), len(p_axis)))

    def fill_row(i: int) -> None:
        qv = q_axis[i]
        for j, pv in enumerate(p_axis):
            values[i, j] = _wigner_point(fdm.rho, lam, qvec, parity, qv, pv)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(fill_row, range(len(q_axis))))
    else:
        for i in range(len(q_axis)):
            fill_row(i)
    return WignerGrid(q_axis, p_axis, values)
