"""Quench-evolve-quench sequences on all three backends, plus derived
protocol metrics (effective squeezing, photon-scattering budget).

A sequence is an ordered list of trap segments; the boundary between
consecutive segments is an instantaneous quench, represented as the
symplectic rescale of :func:`squeezeslit.core.quench_rescale` (equivalently,
a squeeze by half the log frequency ratio on the Fock oracle).  The
interferometer probe is tied to the physical recoil 2k, so inside a segment
of frequency omega the dimensionless probe is 2 eta sqrt(omega_ref / omega),
with omega_ref the trap that defines the Lamb-Dicke parameter.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import core, exact_sim, twa
from .core import GaussianState
from .exact_sim import FockDensityMatrix
from .twa import TrajectoryEnsemble


class BackendError(TypeError):
    """Initial state type not usable for the requested run."""


@dataclass(frozen=True)
class QuenchSegment:
    """One constant-trap segment: frequency, Kerr ratio K/omega, duration."""

    omega: float
    kerr_ratio: float = 0.0
    duration: float = 0.0

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError(f"omega must be positive, got {self.omega}")
        if self.duration < 0:
            raise ValueError(f"duration must be non-negative, got {self.duration}")

    @property
    def kerr(self) -> float:
        return self.kerr_ratio * self.omega


@dataclass(frozen=True)
class ProtocolSequence:
    """Ordered segments with per-segment duration offsets (effective =
    nominal + offset, clamped nowhere: negative effective durations are
    rejected)."""

    segments: tuple[QuenchSegment, ...]
    offsets: tuple[float, ...] = ()

    def __post_init__(self):
        segments = tuple(self.segments)
        if not segments:
            raise ValueError("a protocol needs at least one segment")
        offsets = tuple(self.offsets) if self.offsets else (0.0,) * len(segments)
        if len(offsets) != len(segments):
            raise ValueError("offsets must match the segment count")
        object.__setattr__(self, "segments", segments)
        object.__setattr__(self, "offsets", offsets)
        for d in self.effective_durations():
            if d < -1e-15:
                raise ValueError(f"negative effective duration {d}")

    def effective_durations(self) -> tuple[float, ...]:
        return tuple(max(s.duration + off, 0.0)
                     for s, off in zip(self.segments, self.offsets))

    @property
    def total_duration(self) -> float:
        return float(sum(self.effective_durations()))

    def to_json(self) -> str:
        return json.dumps({
            "segments": [{"omega": s.omega, "kerr_ratio": s.kerr_ratio,
                          "duration": s.duration} for s in self.segments],
            "offsets": list(self.offsets),
        })

    @classmethod
    def from_json(cls, text: str) -> "ProtocolSequence":
        obj = json.loads(text)
        segs = tuple(QuenchSegment(**s) for s in obj["segments"])
        return cls(segs, tuple(obj.get("offsets") or ()))


def quarter_period(omega: float) -> float:
    """Quarter of the phase-space rotation period, pi / (2 omega)."""
    return math.pi / (2.0 * omega)


def qeq_sequence(omega1: float, omega2: float, dT: float, dt: float,
                 offsets: tuple[float, float] = (0.0, 0.0),
                 kerr_ratio: float = 0.0,
                 shallow_kerr: str = "ratio") -> ProtocolSequence:
    """Quench-evolve-quench: deep prep, shallow dT, deep dt.

    ``offsets = (t_off_dT, t_off_dt)`` are added to the nominal shallow and
    deep durations.  ``kerr_ratio`` is K/omega in the deep trap; the shallow
    trap either keeps the same ratio (``shallow_kerr="ratio"``, K2 = ratio *
    omega2) or the same absolute coefficient (``"absolute"``, K2 = K1).
    """
    if omega1 <= 0 or omega2 <= 0:
        raise ValueError("trap frequencies must be positive")
    if shallow_kerr == "ratio":
        ratio2 = kerr_ratio
    elif shallow_kerr == "absolute":
        ratio2 = kerr_ratio * omega1 / omega2
    else:
        raise ValueError(f"unknown shallow_kerr mode {shallow_kerr!r}")
    segments = (
        QuenchSegment(omega1, kerr_ratio, 0.0),
        QuenchSegment(omega2, ratio2, dT),
        QuenchSegment(omega1, kerr_ratio, dt),
    )
    return ProtocolSequence(segments, (0.0, offsets[0], offsets[1]))


@dataclass(frozen=True, eq=False)
class VisibilityTrace:
    """Time-tagged visibility samples with fringe phase and standard errors."""

    times: np.ndarray
    V: np.ndarray
    alpha: np.ndarray
    stderr: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.V, dtype=float)
        a = np.asarray(self.alpha, dtype=float)
        s = np.asarray(self.stderr, dtype=float)
        if not (t.shape == v.shape == a.shape == s.shape):
            raise ValueError("trace arrays must share one shape")
        if np.any(v < 0) or np.any(v > 1.0 + 3.0 * s + 1e-12):
            raise ValueError("visibility outside [0, 1 + 3 stderr]")
        for arr in (t, v, a, s):
            arr.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "V", v)
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "stderr", s)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("t_us,V,alpha_rad,stderr\n")
            for t, v, a, s in zip(self.times, self.V, self.alpha, self.stderr):
                fh.write(f"{t * 1e6:.10g},{v:.12g},{a:.12g},{s:.12g}\n")


def _segment_schedule(seq: ProtocolSequence):
    """(start_time, segment) pairs using effective durations."""
    starts = []
    t = 0.0
    for seg, dur in zip(seq.segments, seq.effective_durations()):
        starts.append((t, seg, dur))
        t += dur
    return starts, t


def _probe_eta(eta, omega_ref: float, omega_seg: float) -> float:
    return core._as_eta(eta) * math.sqrt(omega_ref / omega_seg)


def run_protocol(initial, seq: ProtocolSequence, sample_times, eta,
                 dt: float | None = None, omega_ref: float | None = None
                 ) -> VisibilityTrace:
    """Run a sequence, evaluating visibility at the requested absolute times.

    ``initial`` selects the backend: GaussianState (closed form, harmonic
    only), FockDensityMatrix (exact oracle), or TrajectoryEnsemble (TWA).
    The state is given in the units of the first segment's trap;
    ``omega_ref`` (default: first segment) is the trap defining eta.
    """
    times = np.asarray(sample_times, dtype=float)
    if times.ndim != 1 or len(times) == 0:
        raise ValueError("sample_times must be a non-empty 1-D array")
    if np.any(np.diff(times) < 0):
        raise ValueError("sample_times must be sorted")
    schedule, total = _segment_schedule(seq)
    if times[0] < 0 or times[-1] > total + 1e-12:
        raise ValueError(f"sample times outside the sequence span [0, {total:.3e}]")
    if omega_ref is None:
        omega_ref = seq.segments[0].omega

    if isinstance(initial, GaussianState):
        return _run_gaussian(initial, schedule, times, eta, omega_ref)
    if isinstance(initial, FockDensityMatrix):
        return _run_fock(initial, schedule, times, eta, omega_ref)
    if isinstance(initial, TrajectoryEnsemble):
        return _run_twa(initial, schedule, times, eta, omega_ref, dt)
    raise BackendError(f"unsupported initial state type {type(initial).__name__}")


def _segment_time_groups(schedule, times):
    """Map segment index -> sample times local to that segment.

    A time landing exactly on a quench boundary is assigned to the later
    segment; visibility is continuous across an instantaneous quench, so the
    choice is observable-neutral.
    """
    groups = {}
    for idx, (t0, seg, dur) in enumerate(schedule):
        hi = t0 + dur
        if idx == len(schedule) - 1:
            mask = (times >= t0 - 1e-15) & (times <= hi + 1e-12)
        else:
            mask = (times >= t0 - 1e-15) & (times < hi)
        if np.any(mask):
            groups[idx] = times[mask] - t0
    return groups


def _run_gaussian(state, schedule, times, eta, omega_ref):
    for _, seg, _ in schedule:
        if seg.kerr_ratio != 0.0:
            raise BackendError("Gaussian backend is exact only for K = 0 segments")
    groups = _segment_time_groups(schedule, times)
    v = np.empty(len(times))
    alpha = np.empty(len(times))
    pos = 0
    current = state
    prev_omega = None
    for idx, (t0, seg, dur) in enumerate(schedule):
        if prev_omega is not None and prev_omega != seg.omega:
            current = core.quench_rescale(current, prev_omega, seg.omega)
        prev_omega = seg.omega
        eta_seg = _probe_eta(eta, omega_ref, seg.omega)
        for tl in groups.get(idx, ()):
            v[pos], alpha[pos] = core.gaussian_visibility(
                core.apply_rotation(current, seg.omega * tl), eta_seg)
            pos += 1
        current = core.apply_rotation(current, seg.omega * dur)
    return VisibilityTrace(times, v, alpha, np.zeros_like(v))


def _run_fock(state, schedule, times, eta, omega_ref):
    groups = _segment_time_groups(schedule, times)
    v = np.empty(len(times))
    alpha = np.empty(len(times))
    pos = 0
    current = state
    prev_omega = None
    for idx, (t0, seg, dur) in enumerate(schedule):
        if prev_omega is not None and prev_omega != seg.omega:
            s_quench = 0.5 * math.log(prev_omega / seg.omega)
            current = exact_sim.apply_squeeze_fock(current, s_quench)
        prev_omega = seg.omega
        local = groups.get(idx)
        if local is not None:
            vv, aa = exact_sim.kerr_visibility_trace(
                current, seg.omega, seg.kerr, local,
                _probe_eta(eta, omega_ref, seg.omega))
            n = len(local)
            v[pos:pos + n], alpha[pos:pos + n] = vv, aa
            pos += n
        current = exact_sim.evolve_kerr_diagonal(current, seg.omega, seg.kerr, dur)
    return VisibilityTrace(times, v, alpha, np.zeros_like(v))


def _run_twa(ens, schedule, times, eta, omega_ref, dt):
    groups = _segment_time_groups(schedule, times)
    v = np.empty(len(times))
    alpha = np.empty(len(times))
    stderr = np.empty(len(times))
    pos = 0
    current = ens
    prev_omega = None
    for idx, (t0, seg, dur) in enumerate(schedule):
        if prev_omega is not None and prev_omega != seg.omega:
            r = math.sqrt(seg.omega / prev_omega)
            current = current.with_phase_space(current.q * r, current.p / r)
        prev_omega = seg.omega
        eta_seg = _probe_eta(eta, omega_ref, seg.omega)
        local = groups.get(idx)
        if local is not None:
            for snap in twa.evolve_snapshots(current, seg.omega, seg.kerr,
                                             local, dt):
                v[pos], alpha[pos], stderr[pos] = twa.ensemble_visibility(
                    snap, eta_seg)
                pos += 1
        current = twa.evolve_segment(current, seg.omega, seg.kerr, dur, dt)
    return VisibilityTrace(times, v, alpha, stderr)


def run_qeq_state(initial, seq: ProtocolSequence, dt: float | None = None):
    """State at the end of the sequence (same backend as ``initial``)."""
    schedule, _ = _segment_schedule(seq)
    current = initial
    prev_omega = None
    for t0, seg, dur in schedule:
        if prev_omega is not None and prev_omega != seg.omega:
            if isinstance(current, GaussianState):
                current = core.quench_rescale(current, prev_omega, seg.omega)
            elif isinstance(current, FockDensityMatrix):
                current = exact_sim.apply_squeeze_fock(
                    current, 0.5 * math.log(prev_omega / seg.omega))
            elif isinstance(current, TrajectoryEnsemble):
                r = math.sqrt(seg.omega / prev_omega)
                current = current.with_phase_space(current.q * r, current.p / r)
            else:
                raise BackendError(f"unsupported state {type(current).__name__}")
        prev_omega = seg.omega
        if isinstance(current, GaussianState):
            if seg.kerr_ratio != 0.0:
                raise BackendError("Gaussian backend is exact only for K = 0")
            current = core.apply_rotation(current, seg.omega * dur)
        elif isinstance(current, FockDensityMatrix):
            current = exact_sim.evolve_kerr_diagonal(current, seg.omega, seg.kerr, dur)
        else:
            current = twa.evolve_segment(current, seg.omega, seg.kerr, dur, dt)
    return current


def effective_squeezing(cov) -> tuple[float, float]:
    """(S_eff, dB) from the smallest covariance eigenvalue.

    S_eff = -ln(lambda_min)/2 and dB = -10 log10(lambda_min / vacuum), with
    vacuum variance 1 in these units.
    """
    sigma = cov.sigma if isinstance(cov, GaussianState) else np.asarray(cov, float)
    lam_min = float(np.linalg.eigvalsh(sigma)[0])
    if lam_min <= 0:
        raise ValueError(f"covariance not positive definite (min {lam_min:.3e})")
    return -0.5 * math.log(lam_min), -10.0 * math.log10(lam_min)


# Rubidium-87 D-line data for the trap-laser scattering budget.
_GAMMA_NATURAL = 2.0 * math.pi * 6.0e6  # rad/s
_LAMBDA_D1_NM = 795.0
_LAMBDA_D2_NM = 780.0
_C_M_PER_S = 299792458.0
_KB = 1.380649e-23
_HBAR = core.HBAR


def scattering_budget(trap_depth_mK: float, trap_wavelength_nm: float,
                      sequence_duration_s: float) -> tuple[float, float]:
    """Off-resonant photon-scattering rate and integrated probability.

    Two-line formula with D2 weighted twice:
    Gamma_sc = (Gamma / hbar) * (D1^-2 + 2 D2^-2) / (D1^-1 + 2 D2^-1) * U0,
    detunings measured from the 795/780 nm lines of Rb-87.
    """
    if trap_depth_mK <= 0 or trap_wavelength_nm <= 0 or sequence_duration_s < 0:
        raise ValueError("trap depth and wavelength must be positive, duration >= 0")
    omega_laser = 2.0 * math.pi * _C_M_PER_S / (trap_wavelength_nm * 1e-9)
    det = []
    for lam_nm in (_LAMBDA_D1_NM, _LAMBDA_D2_NM):
        line = 2.0 * math.pi * _C_M_PER_S / (lam_nm * 1e-9)
        d = omega_laser - line
        if d == 0.0:
            raise ValueError(f"trap wavelength resonant with the {lam_nm:.0f} nm line")
        det.append(d)
    d1, d2 = det
    weight = (d1**-2 + 2.0 * d2**-2) / abs(d1**-1 + 2.0 * d2**-1)
    u0 = _KB * trap_depth_mK * 1e-3
    rate = (_GAMMA_NATURAL / _HBAR) * weight * u0
    return rate, rate * sequence_duration_s
