"""Generalized Nyquist Criterion on the source/load split at the interface.

The minor loop gain is ``L = Z_source Y_load``. Its eigenvalues are traced
over the positive-frequency grid; negative frequencies follow from the
conjugate symmetry of a real time-domain system (``L(-jw) = conj L(jw)``),
and the contour is closed across the real axis at both grid ends.

Encirclements of -1 are counted through ``det(I + L) = prod(1 + lambda_k)``,
whose winding number about 0 equals the total winding of the eigenloci
about -1. The closed-loop system is stable iff the counter-clockwise count
equals the number of open-loop right-half-plane poles.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FrameError
from .freqresp import FrequencyGrid, FrequencyResponse2x2, Kind, eig2_stack, invert, matmul

LOOP_GAIN_CONVENTION = "L = Z_source * inv(Z_load)"


class Verdict(enum.Enum):
    STABLE = "stable"
    UNSTABLE = "unstable"
    INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class Eigenloci:
    grid: FrequencyGrid
    values: np.ndarray      # (n, 2), continuity-ordered


@dataclass
class StabilityReport:
    loci: Eigenloci
    encirclements: int
    verdict: Verdict
    min_distance: float
    freq_at_min: float
    rhp_poles_open_loop: int = 0
    locus_windings: tuple = ()
    max_phase_step: float = 0.0
    notes: list = field(default_factory=list)

    def to_text(self) -> str:
        lines = [
            f"convention: {LOOP_GAIN_CONVENTION}",
            f"verdict: {self.verdict.value}",
            f"encirclements_ccw: {self.encirclements}",
            f"rhp_poles_open_loop: {self.rhp_poles_open_loop}",
            f"min_distance_to_minus_one: {self.min_distance!r}",
            f"freq_at_min_hz: {self.freq_at_min!r}",
            f"max_phase_step_rad: {self.max_phase_step!r}",
            f"locus_windings: {','.join(f'{w:.6f}' for w in self.locus_windings)}",
            f"n_points: {len(self.loci.grid)}",
        ]
        lines += [f"note: {n}" for n in self.notes]
        return "\n".join(lines) + "\n"


def minor_loop_gain(z_source: FrequencyResponse2x2,
                    z_load: FrequencyResponse2x2) -> FrequencyResponse2x2:
    """``Z_source @ inv(Z_load)`` pointwise; both sides must be global-frame impedances."""
    for name, z in (("source", z_source), ("load", z_load)):
        if not z.frame.is_global:
            raise FrameError(f"{name} impedance is in frame {z.frame}; align it to the global "
                             f"frame first")
        if z.kind is not Kind.IMPEDANCE:
            raise FrameError(f"{name} must be an impedance, got {z.kind.value}")
    return matmul(z_source, invert(z_load))


def track_pairs(raw: np.ndarray) -> np.ndarray:
    """Reorder each row of ``raw`` (n, 2) so consecutive rows move the least."""
    out = np.array(raw, dtype=complex)
    for k in range(1, out.shape[0]):
        a, b = out[k - 1]
        keep = abs(out[k, 0] - a) + abs(out[k, 1] - b)
        swap = abs(out[k, 1] - a) + abs(out[k, 0] - b)
        if swap < keep:
            out[k] = out[k, ::-1]
    return out


def eigenloci(loop: FrequencyResponse2x2) -> Eigenloci:
    return Eigenloci(loop.grid, track_pairs(eig2_stack(loop.values)))


def _half_plane_arg(z: complex) -> float:
    """Angle to the nearest real half-axis, in (-pi/2, pi/2]."""
    if z.real == 0:
        return math.copysign(math.pi / 2, z.imag) if z.imag != 0 else 0.0
    return math.atan(z.imag / z.real)


def _winding(d: np.ndarray) -> float:
    """Winding (turns, ccw positive) of the conjugate-closed contour of ``d``."""
    ph = np.unwrap(np.angle(d))
    total = 2 * (ph[-1] - ph[0]) + 2 * _half_plane_arg(complex(d[0])) \
        - 2 * _half_plane_arg(complex(d[-1]))
    return total / (2 * math.pi)


def gnc_verdict(loci: Eigenloci, rhp_poles_open_loop: int = 0,
                max_step: float = math.pi / 2) -> StabilityReport:
    """Count encirclements of -1 and decide stability.

    Returns ``INCONCLUSIVE`` when some locus turns by more than ``max_step``
    around -1 between adjacent grid points, or when a contour end is too far
    off the real axis for the closing arc to be trusted.
    """
    lam = loci.values
    f = loci.grid.points
    shifted = 1.0 + lam
    notes = []
    if rhp_poles_open_loop == 0:
        notes.append("open-loop RHP pole count assumed 0 (source and load individually stable)")
    if np.any(shifted == 0):
        k = int(np.flatnonzero(np.any(shifted == 0, axis=1))[0])
        return StabilityReport(loci, 0, Verdict.INCONCLUSIVE, 0.0, float(f[k]),
                               rhp_poles_open_loop, (), math.inf,
                               notes + ["locus passes exactly through -1"])
    steps = np.abs(np.diff(np.unwrap(np.angle(shifted), axis=0), axis=0))
    max_phase_step = float(steps.max()) if steps.size else 0.0
    det = shifted[:, 0] * shifted[:, 1]
    windings = tuple(_winding(shifted[:, k]) for k in range(2))
    n_ccw = int(round(_winding(det)))

    dist = np.abs(shifted)
    k_min = np.unravel_index(int(np.argmin(dist)), dist.shape)
    min_distance = float(dist[k_min])
    freq_at_min = float(f[k_min[0]])

    verdict = Verdict.STABLE if n_ccw == rhp_poles_open_loop else Verdict.UNSTABLE
    if max_phase_step > max_step:
        verdict = Verdict.INCONCLUSIVE
        notes.append(f"grid too coarse: phase step {max_phase_step:.3f} rad > {max_step:.3f}")
    for end, d in (("low", det[0]), ("high", det[-1])):
        if abs(_half_plane_arg(complex(d))) > math.pi / 4:
            verdict = Verdict.INCONCLUSIVE
            notes.append(f"{end}-frequency end of det(I+L) is far from the real axis; "
                         f"extend the grid")
    return StabilityReport(loci, n_ccw, verdict, min_distance, freq_at_min,
                           rhp_poles_open_loop, windings, max_phase_step, notes)


def analyze_stability(z_source: FrequencyResponse2x2, z_load: FrequencyResponse2x2,
                      rhp_poles_open_loop: int = 0) -> StabilityReport:
    return gnc_verdict(eigenloci(minor_loop_gain(z_source, z_load)), rhp_poles_open_loop)


def nyquist_csv(report: StabilityReport) -> str:
    lines = ["freq_hz,re_l1,im_l1,re_l2,im_l2"]
    for f, (l1, l2) in zip(report.loci.grid.points, report.loci.values):
        lines.append(",".join(repr(float(v)) for v in (f, l1.real, l1.imag, l2.real, l2.imag)))
    return "\n".join(lines) + "\n"


def write_report(directory, report: StabilityReport, stem: str = "stability") -> tuple[Path, Path]:
    directory = Path(directory)
    csv_path = directory / f"{stem}_nyquist.csv"
    txt_path = directory / f"{stem}_report.txt"
    csv_path.write_text(nyquist_csv(report), encoding="utf-8")
    txt_path.write_text(report.to_text(), encoding="utf-8")
    return csv_path, txt_path
