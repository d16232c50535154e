"""Reference-frame rotation and the dq <-> modified-sequence transform.

A model whose d-axis sits on its own terminal voltage (local frame) is
moved to the network-wide frame by the similarity ``T Z T^-1`` where ``T``
rotates space vectors by the terminal angle theta:

    dq:  T = [[cos, -sin], [sin, cos]]
    pn:  T = diag(e^{j theta}, e^{-j theta}) = A_z T_dq A_z^-1

In the pn domain only the off-diagonal entries pick up a phase (+-2 theta).
Mirror-frequency-decoupled (dq-symmetric) models commute with every
rotation, so they can be relabelled without touching their values.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import FrameError, InputError
from .freqresp import GLOBAL, Domain, FrequencyResponse2x2, inv2

#: A_z = 1/2 [[1, j], [1, -j]] and its inverse.
A_Z = 0.5 * np.array([[1, 1j], [1, -1j]])
A_Z_INV = np.array([[1, 1], [-1j, 1j]])

MFD_TOL_ANALYTIC = 1e-6
MFD_TOL_MEASURED = 1e-2


@dataclass(frozen=True)
class ReferenceAngle:
    """Angle (rad) of a local frame relative to the global one, kept in (-pi, pi]."""

    theta: float

    def __post_init__(self):
        t = float(self.theta)
        if not math.isfinite(t):
            raise InputError(f"reference angle must be finite, got {t}")
        if not -math.pi < t <= math.pi:
            t = math.remainder(t, 2 * math.pi)
            if t <= -math.pi:
                t += 2 * math.pi
        object.__setattr__(self, "theta", t)

    @classmethod
    def from_degrees(cls, deg: float) -> "ReferenceAngle":
        return cls(math.radians(deg))

    @property
    def degrees(self) -> float:
        return math.degrees(self.theta)

    def __float__(self) -> float:
        return self.theta


def _theta(theta) -> float:
    return theta.theta if isinstance(theta, ReferenceAngle) else ReferenceAngle(theta).theta


def t_dq(theta) -> np.ndarray:
    th = _theta(theta)
    c, s = math.cos(th), math.sin(th)
    return np.array([[c, -s], [s, c]], dtype=complex)


def t_pn(theta) -> np.ndarray:
    th = _theta(theta)
    return np.array([[np.exp(1j * th), 0], [0, np.exp(-1j * th)]])


def _require_local(z: FrequencyResponse2x2, domain: Domain) -> None:
    if z.domain is not domain:
        raise FrameError(f"expected a {domain.value} model, got {z.domain.value}")
    if z.frame.is_global:
        raise FrameError("model is already in the global frame; refusing to rotate it twice")


def rotate_dq(z: FrequencyResponse2x2, theta) -> FrequencyResponse2x2:
    """``T_dq Z T_dq^-1`` pointwise; the result is tagged global."""
    _require_local(z, Domain.DQ)
    th = _theta(theta)
    if th == 0.0:
        return z.replace(frame=GLOBAL)
    c, s = math.cos(th), math.sin(th)
    a, b = z.values[:, 0, 0], z.values[:, 0, 1]
    cc, d = z.values[:, 1, 0], z.values[:, 1, 1]
    # T = [[c, -s], [s, c]], T^-1 = T^T
    out = np.empty_like(z.values)
    out[:, 0, 0] = c * c * a - c * s * (b + cc) + s * s * d
    out[:, 0, 1] = c * c * b + c * s * (a - d) - s * s * cc
    out[:, 1, 0] = c * c * cc + c * s * (a - d) - s * s * b
    out[:, 1, 1] = s * s * a + c * s * (b + cc) + c * c * d
    return z.replace(values=out, frame=GLOBAL)


def rotate_pn(z: FrequencyResponse2x2, theta) -> FrequencyResponse2x2:
    """Phase-shift the pn off-diagonals by ``+2 theta`` / ``-2 theta``.

    The diagonal entries are copied, so they are bit-identical afterwards.
    """
    _require_local(z, Domain.PN)
    th = _theta(theta)
    out = z.values.copy()
    if th != 0.0:
        out[:, 0, 1] = z.values[:, 0, 1] * np.exp(2j * th)
        out[:, 1, 0] = z.values[:, 1, 0] * np.exp(-2j * th)
    return z.replace(values=out, frame=GLOBAL)


def rotate(z: FrequencyResponse2x2, theta) -> FrequencyResponse2x2:
    if z.domain is Domain.DQ:
        return rotate_dq(z, theta)
    return rotate_pn(z, theta)


def dq_to_pn(z: FrequencyResponse2x2) -> FrequencyResponse2x2:
    if z.domain is not Domain.DQ:
        raise FrameError(f"dq_to_pn needs a dq model, got {z.domain.value}")
    return z.replace(values=A_Z @ z.values @ A_Z_INV, domain=Domain.PN)


def pn_to_dq(z: FrequencyResponse2x2) -> FrequencyResponse2x2:
    if z.domain is not Domain.PN:
        raise FrameError(f"pn_to_dq needs a pn model, got {z.domain.value}")
    return z.replace(values=A_Z_INV @ z.values @ A_Z, domain=Domain.DQ)


def to_domain(z: FrequencyResponse2x2, domain: Domain) -> FrequencyResponse2x2:
    if z.domain is domain:
        return z
    return dq_to_pn(z) if domain is Domain.PN else pn_to_dq(z)


def mfd_residual(z: FrequencyResponse2x2) -> np.ndarray:
    """Per-point asymmetry relative to the Frobenius norm (0 for an MFD model)."""
    v = z.values
    norm = np.sqrt(np.sum(np.abs(v) ** 2, axis=(1, 2)))
    if z.domain is Domain.DQ:
        r1 = np.abs(v[:, 0, 0] - v[:, 1, 1])
        r2 = np.abs(v[:, 0, 1] + v[:, 1, 0])
    else:
        r1 = np.abs(v[:, 0, 1])
        r2 = np.abs(v[:, 1, 0])
    worst = np.maximum(r1, r2)
    with np.errstate(invalid="ignore", divide="ignore"):
        rel = np.where(norm > 0, worst / np.where(norm > 0, norm, 1.0), 0.0)
    return rel


def is_mfd(z: FrequencyResponse2x2, tol: float = MFD_TOL_ANALYTIC) -> bool:
    """Mirror-frequency decoupling test.

    dq: ``Z_dd == Z_qq`` and ``Z_dq == -Z_qd``; pn: ``Z_pn == Z_np == 0``;
    each to within ``tol`` times the pointwise Frobenius norm.
    """
    if not tol > 0:
        raise InputError("tol must be > 0")
    return bool(np.all(mfd_residual(z) <= tol))


def align_to_global(z: FrequencyResponse2x2, theta,
                    tol: float = MFD_TOL_ANALYTIC) -> FrequencyResponse2x2:
    """Refer a local model to the global frame, skipping the rotation for MFD models."""
    if z.frame.is_global:
        raise FrameError("model is already in the global frame")
    if is_mfd(z, tol):
        return z.replace(frame=GLOBAL)
    return rotate(z, theta)


def rotation_matrix_stack(theta, n: int, domain: Domain) -> np.ndarray:
    t = t_dq(theta) if domain is Domain.DQ else t_pn(theta)
    return np.broadcast_to(t, (n, 2, 2))


def similarity(z: FrequencyResponse2x2, t: np.ndarray) -> FrequencyResponse2x2:
    """``T Z T^-1`` for an arbitrary invertible ``T`` (test and analysis helper)."""
    t = np.broadcast_to(np.asarray(t, dtype=complex), z.values.shape)
    return z.replace(values=t @ z.values @ inv2(np.array(t)))
