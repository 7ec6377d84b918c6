"""Dimensionless phase-space conventions, Gaussian-state algebra, and the
closed-form visibility formulas.

Conventions
-----------
Positions are measured in units of the trap ground-state length
x0 = sqrt(hbar / 2 m omega), so q = a + a^dag, p = -i(a - a^dag),
[q, p] = 2i, and the vacuum covariance matrix is the 2x2 identity.
The interferometer probes the characteristic function at (2*eta, 0);
for any Gaussian state the visibility is exp(-2 eta^2 sigma_11) and the
fringe phase is 2 eta <q>.

Physical unit handling (kHz, us, nm, mK) lives at API boundaries only.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

# [q, p] = 2i in these units; vacuum variance is 1 along both quadratures.
COMMUTATOR_SCALE = 2.0
VACUUM_VARIANCE = 1.0

HBAR = 1.054571817e-34  # J s
ATOMIC_MASS_KG = 1.66053906660e-27
RB87_MASS_KG = 86.909180527 * ATOMIC_MASS_KG

# Smallest covariance eigenvalue tolerated before a state is rejected.
_MIN_EIG_TOL = 1e-10
_SYM_TOL = 1e-9


class InvalidStateError(ValueError):
    """Raised when a covariance matrix fails symmetry/positivity checks."""


@dataclass(frozen=True)
class LambDicke:
    """Probe recoil in units of the reference-trap ground-state size."""

    eta: float

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError(f"Lamb-Dicke parameter must be positive, got {self.eta}")

    @classmethod
    def from_physical(cls, wavelength_m: float, omega: float,
                      mass_kg: float = RB87_MASS_KG) -> "LambDicke":
        """eta = k * sqrt(hbar / 2 m omega) for probe wavevector k = 2 pi / lambda."""
        if wavelength_m <= 0 or omega <= 0 or mass_kg <= 0:
            raise ValueError("wavelength, omega and mass must be positive")
        k = 2.0 * math.pi / wavelength_m
        return cls(k * math.sqrt(HBAR / (2.0 * mass_kg * omega)))

    @property
    def probe(self) -> float:
        """Characteristic-function probe point 2*eta along the q axis."""
        return 2.0 * self.eta


# 780 nm probe on Rb-87 in the 2pi x 37.8 kHz reference trap.
DEFAULT_ETA = LambDicke(0.316)


def _as_eta(eta) -> float:
    return float(eta.eta) if isinstance(eta, LambDicke) else float(eta)


@dataclass(frozen=True)
class TrapParams:
    """Trap frequency, dimensionless Kerr ratio K/omega, and thermal occupation."""

    omega: float
    kerr_ratio: float = 0.0
    nbar: float = 0.0

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError(f"omega must be positive, got {self.omega}")
        if self.nbar < 0:
            raise ValueError(f"nbar must be non-negative, got {self.nbar}")

    @property
    def kerr(self) -> float:
        """Absolute Kerr coefficient K = kerr_ratio * omega."""
        return self.kerr_ratio * self.omega


@dataclass(frozen=True, eq=False)
class GaussianState:
    """First moments d = (<q>, <p>) and symmetrized 2x2 covariance matrix."""

    d: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.d, dtype=float).reshape(2)
        sigma = np.asarray(self.sigma, dtype=float).reshape(2, 2)
        if abs(sigma[0, 1] - sigma[1, 0]) > _SYM_TOL * max(1.0, abs(sigma).max()):
            raise InvalidStateError(f"covariance not symmetric: {sigma}")
        sigma = 0.5 * (sigma + sigma.T)
        eigs = np.linalg.eigvalsh(sigma)
        if eigs[0] < -_MIN_EIG_TOL:
            raise InvalidStateError(
                f"covariance not positive definite (min eigenvalue {eigs[0]:.3e})")
        d.setflags(write=False)
        sigma.setflags(write=False)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "sigma", sigma)

    def transformed(self, m: np.ndarray) -> "GaussianState":
        """State after the linear phase-space map (q,p) -> m (q,p)."""
        m = np.asarray(m, dtype=float)
        return GaussianState(m @ self.d, m @ self.sigma @ m.T)

    def to_json(self) -> str:
        return json.dumps({"d": self.d.tolist(), "sigma": self.sigma.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "GaussianState":
        obj = json.loads(text)
        return cls(np.asarray(obj["d"]), np.asarray(obj["sigma"]))


def vacuum_state() -> GaussianState:
    """Motional ground state: d = 0, sigma = identity."""
    return GaussianState(np.zeros(2), np.eye(2))


def thermal_state(nbar: float) -> GaussianState:
    """Isotropic thermal state, variance broadened by (2 nbar + 1)."""
    if nbar < 0:
        raise ValueError(f"nbar must be non-negative, got {nbar}")
    return GaussianState(np.zeros(2), (2.0 * nbar + 1.0) * np.eye(2))


def rotation_matrix(phi: float) -> np.ndarray:
    """Harmonic-evolution map for phase phi = omega * t.

    q(t) = q cos(phi) + p sin(phi), p(t) = -q sin(phi) + p cos(phi); this
    sign choice makes the squeeze phase of a rotated squeezed vacuum evolve
    as theta0 - 2 phi.
    """
    c, s = math.cos(phi), math.sin(phi)
    return np.array([[c, s], [-s, c]])


def squeeze_matrix(s: float, theta: float = 0.0) -> np.ndarray:
    """Symplectic squeeze: principal axes at theta/2, variances scaled e^{-+2s}.

    Positive s compresses sigma_11 at theta = 0 (e^{-2s} along q).
    """
    half = np.array([[math.cos(theta / 2.0), -math.sin(theta / 2.0)],
                     [math.sin(theta / 2.0), math.cos(theta / 2.0)]])
    return half @ np.diag([math.exp(-s), math.exp(s)]) @ half.T


def apply_squeeze(state: GaussianState, s: float, theta: float = 0.0) -> GaussianState:
    """Squeeze with parameter zeta = s e^{i theta} (s real, sign picks the axis)."""
    return state.transformed(squeeze_matrix(s, theta))


def apply_rotation(state: GaussianState, phi: float) -> GaussianState:
    """Evolve for phase phi = omega * t in a harmonic trap."""
    return state.transformed(rotation_matrix(phi))


def squeezed_thermal_state(nbar: float, s: float, theta: float = 0.0) -> GaussianState:
    """Squeezing applied to a thermal state: sigma = (2 nbar + 1) * sigma_sq."""
    return apply_squeeze(thermal_state(nbar), s, theta)


def quench_rescale(state: GaussianState, omega_from: float,
                   omega_to: float) -> GaussianState:
    """Re-express the unchanged physical state in the new trap's natural units.

    q scales by sqrt(omega_to / omega_from), p by the inverse; a ground state
    quenched omega_from -> omega_to acquires
    sigma = diag(omega_to/omega_from, omega_from/omega_to).
    """
    if omega_from <= 0 or omega_to <= 0:
        raise ValueError("trap frequencies must be positive")
    r = math.sqrt(omega_to / omega_from)
    return state.transformed(np.diag([r, 1.0 / r]))


def gaussian_visibility(state: GaussianState, eta) -> tuple[float, float]:
    """Visibility and fringe phase of a Gaussian state at probe (2 eta, 0).

    V = exp(-2 eta^2 sigma_11), alpha = 2 eta <q>.  The visibility depends on
    the position variance only; displacement enters the phase alone.
    """
    e = _as_eta(eta)
    v = math.exp(-2.0 * e * e * state.sigma[0, 0])
    alpha = 2.0 * e * state.d[0]
    return v, alpha


def squeezed_thermal_visibility(v_sq: float, nbar: float) -> float:
    """Thermal power law V_st = V_sq^(2 nbar + 1).

    Finite temperature rescales log-visibility deterministically; the
    squeezed-vacuum value V_sq must lie in (0, 1] (V_sq = 0 maps to 0).
    """
    if nbar < 0:
        raise ValueError(f"nbar must be non-negative, got {nbar}")
    if v_sq > 1.0:
        raise ValueError(f"visibility cannot exceed 1, got {v_sq}")
    if v_sq < 0.0:
        raise ValueError(f"visibility cannot be negative, got {v_sq}")
    if v_sq == 0.0:
        return 0.0
    return v_sq ** (2.0 * nbar + 1.0)
