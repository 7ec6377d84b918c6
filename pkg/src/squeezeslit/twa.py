"""Truncated Wigner approximation engine.

Classical characteristics of the truncated Moyal equation for
H = (omega/4)(p^2 + q^2) + (K/6) q^4 with bracket {q, p} = 2:

    dq/dt = omega p,     dp/dt = -omega q - (4K/3) q^3.

The third-derivative quantum-correction term of the Moyal series is dropped,
exactly as in the model this engine implements; the Fock oracle in
:mod:`squeezeslit.exact_sim` quantifies the resulting error.  Ensembles are
sampled from the initial Gaussian Wigner distribution with a counter-based
(Philox) generator, so a seed fully determines every trajectory and results
are independent of how work is partitioned across threads.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit, prange, set_num_threads, get_num_threads
from scipy.special import ndtr, ndtri

from .core import GaussianState

# Default integrator resolution: fixed-step RK4 with this many steps per trap
# period, validated by step doubling where accuracy matters.
STEPS_PER_PERIOD = 200


@dataclass(frozen=True, eq=False)
class TrajectoryEnsemble:
    """Weighted classical phase-space samples (equal weights here)."""

    q: np.ndarray
    p: np.ndarray
    seed: int
    nbar_draws: np.ndarray | None = None

    def __post_init__(self):
        q = np.ascontiguousarray(self.q, dtype=np.float64)
        p = np.ascontiguousarray(self.p, dtype=np.float64)
        if q.shape != p.shape or q.ndim != 1 or len(q) < 1:
            raise ValueError("q and p must be equal-length 1-D arrays, n >= 1")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)
        if self.nbar_draws is not None:
            nd = np.ascontiguousarray(self.nbar_draws, dtype=np.float64)
            if nd.shape != q.shape:
                raise ValueError("nbar_draws must match the trajectory count")
            object.__setattr__(self, "nbar_draws", nd)

    @property
    def n(self) -> int:
        return len(self.q)

    def with_phase_space(self, q: np.ndarray, p: np.ndarray) -> "TrajectoryEnsemble":
        return TrajectoryEnsemble(q, p, self.seed, self.nbar_draws)

    def save(self, path) -> None:
        """Binary columnar snapshot (q block then p block, little-endian f64)
        plus a JSON sidecar with seed and provenance."""
        path = Path(path)
        with open(path, "wb") as fh:
            fh.write(self.q.astype("<f8").tobytes())
            fh.write(self.p.astype("<f8").tobytes())
            if self.nbar_draws is not None:
                fh.write(self.nbar_draws.astype("<f8").tobytes())
        sidecar = {
            "n_traj": self.n,
            "seed": int(self.seed),
            "dtype": "<f8",
            "layout": ["q", "p"] + (["nbar"] if self.nbar_draws is not None else []),
        }
        with open(path.with_suffix(path.suffix + ".json"), "w") as fh:
            json.dump(sidecar, fh, indent=1, sort_keys=True)

    @classmethod
    def load(cls, path) -> "TrajectoryEnsemble":
        path = Path(path)
        with open(path.with_suffix(path.suffix + ".json")) as fh:
            sidecar = json.load(fh)
        n = sidecar["n_traj"]
        raw = np.fromfile(path, dtype="<f8")
        cols = sidecar["layout"]
        if len(raw) != n * len(cols):
            raise ValueError("snapshot size does not match sidecar")
        blocks = {name: raw[i * n:(i + 1) * n] for i, name in enumerate(cols)}
        return cls(blocks["q"], blocks["p"], sidecar["seed"], blocks.get("nbar"))


def truncated_normal_ppf(u: np.ndarray, mean: float, sigma: float,
                         lower: float = 0.0) -> np.ndarray:
    """Inverse CDF of a normal truncated below at ``lower``.

    Distribution-identical to reject-and-redraw truncation but consumes
    exactly one uniform per draw, which keeps common-random-number streams
    aligned across likelihood evaluations.
    """
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if sigma == 0:
        return np.full_like(np.asarray(u, dtype=float), max(mean, lower))
    lo = ndtr((lower - mean) / sigma)
    return mean + sigma * ndtri(lo + np.asarray(u) * (1.0 - lo))


def sample_initial(state: GaussianState, n_traj: int, seed: int,
                   nbar_dist: tuple[float, float] | None = None,
                   nbar_draws: np.ndarray | None = None) -> TrajectoryEnsemble:
    """Draw trajectories from the Wigner distribution of a Gaussian state.

    ``nbar_dist = (mean, sigma)`` broadens each trajectory independently by a
    thermal factor sqrt(2 nbar_i + 1) with nbar_i from a normal truncated at
    zero; in that case ``state`` is interpreted as the nbar = 0 member of the
    family.  Explicit per-trajectory ``nbar_draws`` take precedence.
    """
    if n_traj < 1:
        raise ValueError(f"n_traj must be >= 1, got {n_traj}")
    gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))
    z = gen.standard_normal((2, n_traj))
    draws = None
    if nbar_draws is not None:
        draws = np.ascontiguousarray(nbar_draws, dtype=float)
        if draws.shape != (n_traj,):
            raise ValueError("nbar_draws length must equal n_traj")
    elif nbar_dist is not None:
        mean, sigma = nbar_dist
        draws = truncated_normal_ppf(gen.random(n_traj), mean, sigma)
    chol = np.linalg.cholesky(state.sigma)
    qp = chol @ z
    if draws is not None:
        qp = qp * np.sqrt(2.0 * draws + 1.0)[None, :]
    return TrajectoryEnsemble(qp[0] + state.d[0], qp[1] + state.d[1],
                              int(seed), draws)


@njit(parallel=True, cache=True)
def _rk4_quartic(q, p, omega, c, dt, n_steps):  # pragma: no cover - jitted
    for i in prange(q.shape[0]):
        qi = q[i]
        pi = p[i]
        for _ in range(n_steps):
            k1q = omega * pi
            k1p = -omega * qi - c * qi * qi * qi
            q2 = qi + 0.5 * dt * k1q
            p2 = pi + 0.5 * dt * k1p
            k2q = omega * p2
            k2p = -omega * q2 - c * q2 * q2 * q2
            q3 = qi + 0.5 * dt * k2q
            p3 = pi + 0.5 * dt * k2p
            k3q = omega * p3
            k3p = -omega * q3 - c * q3 * q3 * q3
            q4 = qi + dt * k3q
            p4 = pi + dt * k3p
            k4q = omega * p4
            k4p = -omega * q4 - c * q4 * q4 * q4
            qi += dt * (k1q + 2.0 * k2q + 2.0 * k3q + k4q) / 6.0
            pi += dt * (k1p + 2.0 * k2p + 2.0 * k3p + k4p) / 6.0
        q[i] = qi
        p[i] = pi


def set_workers(workers: int) -> None:
    """Cap the numba thread count; trajectory updates are element-independent,
    so results are bit-identical at any setting."""
    if workers >= 1:
        set_num_threads(min(int(workers), get_num_threads()))


def _advance(q: np.ndarray, p: np.ndarray, omega: float, kerr: float,
             duration: float, dt: float | None) -> tuple[np.ndarray, np.ndarray]:
    """Advance copies of (q, p) by ``duration``; closed form when K = 0."""
    if duration == 0.0:
        return q.copy(), p.copy()
    if kerr == 0.0:
        phi = omega * duration
        c, s = math.cos(phi), math.sin(phi)
        return c * q + s * p, -s * q + c * p
    if dt is None:
        dt = (2.0 * math.pi / omega) / STEPS_PER_PERIOD
    n_steps = max(1, int(math.ceil(duration / dt - 1e-12)))
    q, p = q.copy(), p.copy()
    _rk4_quartic(q, p, float(omega), 4.0 * kerr / 3.0, duration / n_steps, n_steps)
    return q, p


def evolve_segment(ens: TrajectoryEnsemble, omega: float, kerr: float,
                   duration: float, dt: float | None = None) -> TrajectoryEnsemble:
    """Evolve every trajectory under one trap segment.

    K = 0 uses the exact rotation; otherwise fixed-step RK4 with
    dt = period / STEPS_PER_PERIOD unless overridden.  ``kerr`` is the
    absolute coefficient K (not K/omega).
    """
    if omega <= 0:
        raise ValueError("omega must be positive")
    if duration < 0:
        raise ValueError("duration must be non-negative")
    q, p = _advance(ens.q, ens.p, omega, kerr, duration, dt)
    return ens.with_phase_space(q, p)


def evolve_snapshots(ens: TrajectoryEnsemble, omega: float, kerr: float,
                     times: np.ndarray, dt: float | None = None
                     ) -> list[TrajectoryEnsemble]:
    """States of the ensemble at each (sorted, non-negative) time."""
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) < 0) or (len(times) and times[0] < 0):
        raise ValueError("times must be sorted and non-negative")
    out = []
    q, p = ens.q.copy(), ens.p.copy()
    t_prev = 0.0
    for t in times:
        q, p = _advance(q, p, omega, kerr, t - t_prev, dt)
        t_prev = t
        out.append(ens.with_phase_space(q.copy(), p.copy()))
    return out


def step_convergence(ens: TrajectoryEnsemble, omega: float, kerr: float,
                     duration: float, dt: float, eta) -> float:
    """|Delta V| at segment end between steps dt and dt/2 (precondition check)."""
    v1, _, _ = ensemble_visibility(evolve_segment(ens, omega, kerr, duration, dt), eta)
    v2, _, _ = ensemble_visibility(
        evolve_segment(ens, omega, kerr, duration, 0.5 * dt), eta)
    return abs(v1 - v2)


def ensemble_visibility(ens: TrajectoryEnsemble, eta) -> tuple[float, float, float]:
    """Visibility |<e^{2 i eta q}>|, fringe phase, and its CLT standard error.

    The complex mean uses numpy's fixed-order pairwise summation, so the
    result does not depend on worker partitioning.
    """
    from .core import _as_eta
    xi = 2.0 * _as_eta(eta)
    zr = np.cos(xi * ens.q)
    zi = np.sin(xi * ens.q)
    mr = float(np.mean(zr))
    mi = float(np.mean(zi))
    v = math.hypot(mr, mi)
    alpha = math.atan2(mi, mr)
    # radial (delta-method) projection of the per-sample scatter
    if v == 0.0:
        proj = zr
    else:
        proj = (zr * mr + zi * mi) / v
    stderr = float(np.std(proj) / math.sqrt(ens.n))
    return v, alpha, stderr


def ensemble_covariance(ens: TrajectoryEnsemble) -> GaussianState:
    """Sample mean and covariance as a GaussianState moment summary."""
    if ens.n < 2:
        raise ValueError("need at least 2 trajectories for a covariance")
    d = np.array([ens.q.mean(), ens.p.mean()])
    sigma = np.cov(np.vstack([ens.q, ens.p]), ddof=1)
    return GaussianState(d, sigma)


def hamiltonian_values(ens: TrajectoryEnsemble, omega: float,
                       kerr: float) -> np.ndarray:
    """Per-trajectory H = (omega/4)(p^2+q^2) + (K/6) q^4 (conservation audits)."""
    return (omega / 4.0) * (ens.p**2 + ens.q**2) + (kerr / 6.0) * ens.q**4
