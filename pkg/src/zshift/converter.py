"""Small-signal dq impedance of a grid-following voltage-source converter.

The converter is an averaged VSC behind an inductor ``L_conv``, with

* a PI current controller ``H_c = k_p + k_i/s`` acting in the PLL frame,
  whose per-unit output is scaled to volts by ``v_pu_base`` (the phase-peak
  base voltage); the averaged bridge then applies ``m V_dc/2`` with
  ``m = u v_pu_base / (V_dc/2)``, so the net gain is ``v_pu_base``,
* ``w1 L_conv`` cross-coupling decoupling and terminal-voltage feed-forward,
* first-order measurement filters ``G_i = G_v = 1/(1 + tau s)`` on the
  PLL-frame current and voltage,
* an SRF-PLL ``dtheta/dt = H_PLL(s) v_fq`` with ``H_PLL = k_pp + k_ip/s``,
* an optional computation delay (second-order Pade).

Linearisation
-------------
All small-signal quantities are 2-vectors ``[d, q]`` in the converter's
local frame, whose d-axis lies on the steady-state terminal voltage
``V0``. ``J = [[0, -1], [1, 0]]`` is multiplication by ``j``. The PLL angle
deviation is ``dth = T_pll dv_q`` with

    T_pll = H_PLL G_v / (s + V0 H_PLL G_v)

and a PLL-frame signal is ``dx_c = dx + c_x dth`` where, for a steady value
``X0``, ``c_x = [X0_q, -X0_d]``. With the injected current ``i`` and the
steady converter voltage ``E0 = V0 + j w1 L I0``:

    M_c = G_del G_i (-K H_c I + w1 L J)               K = v_pu_base
    de_c = M_c di_c + G_del G_v dv_c                  controller output
    de   = de_c + [-E0_q, E0_d] dth                   back to local frame
    Z_L di = de - dv,   Z_L = s L I + w1 L J          plant

so ``(Z_L - M_c) di = B dv`` with

    B = M_c c_i P + G_del G_v (I + c_v P) + c_e P - I,   P = [0, T_pll].

The impedance in load convention (current into the terminal) is
``Z = -B^-1 (Z_L - M_c)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError, NumericalError
from .freqresp import Domain, Frame, FrequencyGrid, FrequencyResponse2x2, Kind, inv2
from .frames import ReferenceAngle

_J = np.array([[0.0, -1.0], [1.0, 0.0]])
_I = np.eye(2)


@dataclass(frozen=True)
class ConverterParams:
    """Controller and hardware constants; defaults are the case-study values."""

    k_p: float = 6.43e-4        # p.u./A
    k_i: float = 0.161          # p.u./(A s)
    k_p_pll: float = 0.00758    # rad/(V s)
    k_i_pll: float = 0.152      # rad/(V s^2)
    v_dc: float = 1127.0        # V
    l_conv: float = 6.93e-3     # H
    filter_tau: float = 5e-4    # s
    f_n: float = 50.0           # Hz
    delay_td: float = 0.0       # s
    v_pu_base: float = 6600.0 * math.sqrt(2.0 / 3.0)   # V per p.u. controller output

    def __post_init__(self):
        for name in ("k_p", "k_i", "k_p_pll", "k_i_pll", "filter_tau", "delay_td"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val >= 0):
                raise InputError(f"converter parameter {name} must be finite and >= 0, got {val}")
        for name in ("v_dc", "l_conv", "f_n", "v_pu_base"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val > 0):
                raise InputError(f"converter parameter {name} must be > 0, got {val}")

    @property
    def omega1(self) -> float:
        return 2 * math.pi * self.f_n

    @property
    def voltage_gain(self) -> float:
        """Volts of converter voltage per p.u. of controller output."""
        return self.v_pu_base

    def with_pll_bandwidth(self, factor: float) -> "ConverterParams":
        """PLL retuned ``factor`` times faster at unchanged damping (kp*a, ki*a^2)."""
        return _replace(self, k_p_pll=self.k_p_pll * factor,
                        k_i_pll=self.k_i_pll * factor * factor)

    def frozen_pll(self) -> "ConverterParams":
        return _replace(self, k_p_pll=0.0, k_i_pll=0.0)


def _replace(p: ConverterParams, **kw) -> ConverterParams:
    from dataclasses import replace
    return replace(p, **kw)


@dataclass(frozen=True)
class OperatingPoint:
    """Current set-points (local PLL frame, injected) and terminal voltage phasor.

    ``v_t`` is the phase-peak space vector in the global frame, so its
    argument is the terminal angle theta.
    """

    i_d: float
    i_q: float
    v_t: complex

    def __post_init__(self):
        if not np.isfinite(complex(self.v_t)) or abs(complex(self.v_t)) == 0:
            raise InputError("terminal voltage must be finite and non-zero")

    @property
    def theta(self) -> ReferenceAngle:
        return ReferenceAngle(float(np.angle(complex(self.v_t))))

    @property
    def v_mag(self) -> float:
        return abs(complex(self.v_t))

    @property
    def i_local(self) -> complex:
        return complex(self.i_d, self.i_q)


def steady_state(p: ConverterParams, op: OperatingPoint) -> dict:
    """Closed-form equilibrium of the converter's internal signals (local frame)."""
    v0 = op.v_mag
    e0 = v0 + 1j * p.omega1 * p.l_conv * op.i_local
    return {
        "v0": v0,
        "e0": e0,
        "modulation_index": abs(e0) / (0.5 * p.v_dc),
        # R_conv = 0 and exact decoupling: PI integrators rest at zero
        "pi_integrator": 0j,
        "pll_integrator": 0.0,
    }


def pade2(s: np.ndarray, td: float) -> np.ndarray:
    """Second-order Pade approximant of ``exp(-s td)``."""
    if td == 0:
        return np.ones_like(s)
    a, b = td / 2.0, td * td / 12.0
    return (1 - a * s + b * s * s) / (1 + a * s + b * s * s)


def pll_small_signal(p: ConverterParams, op: OperatingPoint, grid: FrequencyGrid) -> np.ndarray:
    """Closed-loop PLL angle response to terminal q-voltage, rad/V.

    ``T_pll(s) = H_PLL G_v / (s + V0 H_PLL G_v)``; tends to ``1/V0`` at DC.
    """
    s = grid.s
    h_pll = p.k_p_pll + p.k_i_pll / s
    g_v = 1.0 / (1.0 + p.filter_tau * s)
    hg = h_pll * g_v
    return hg / (s + op.v_mag * hg)


def linearize_converter(p: ConverterParams, op: OperatingPoint, grid: FrequencyGrid,
                        node: str = "conv") -> FrequencyResponse2x2:
    """Local-frame dq impedance of the converter at the given operating point."""
    s = grid.s
    n = len(grid)
    w1 = p.omega1
    L = p.l_conv
    v0 = op.v_mag
    i_d, i_q = float(op.i_d), float(op.i_q)
    e0 = steady_state(p, op)["e0"]

    h_c = p.k_p + p.k_i / s
    g_f = 1.0 / (1.0 + p.filter_tau * s)
    g_del = pade2(s, p.delay_td)
    t_pll = pll_small_signal(p, op, grid)

    eye = np.broadcast_to(_I, (n, 2, 2))
    jmat = np.broadcast_to(_J, (n, 2, 2))

    def scal(x):
        return x[:, None, None]

    m_c = scal(g_del * g_f) * (scal(-p.voltage_gain * h_c) * eye + w1 * L * jmat)
    z_l = scal(s * L) * eye + w1 * L * jmat

    # c P is a 2x2 whose only non-zero column is the q column: c * T_pll
    def outer_q(c):
        m = np.zeros((n, 2, 2), dtype=complex)
        m[:, 0, 1] = c[0] * t_pll
        m[:, 1, 1] = c[1] * t_pll
        return m

    ci_p = outer_q((i_q, -i_d))
    cv_p = outer_q((0.0, -v0))
    ce_p = outer_q((-e0.imag, e0.real))

    b = m_c @ ci_p + scal(g_del * g_f) * (eye + cv_p) + ce_p - eye
    a = z_l - m_c
    z = -inv2(b, grid.points) @ a
    if not np.all(np.isfinite(z)):
        k = int(np.flatnonzero(~np.isfinite(z).all(axis=(1, 2)))[0])
        raise NumericalError(f"converter model is not finite at f = {grid.points[k]:.6g} Hz")
    return FrequencyResponse2x2(grid, z, Domain.DQ, Frame(str(node)), Kind.IMPEDANCE)


def current_loop_bandwidth(p: ConverterParams) -> float:
    """Approximate closed current-loop natural frequency, rad/s."""
    kp = p.voltage_gain * p.k_p
    ki = p.voltage_gain * p.k_i
    # s^2 L + kp s + ki = 0
    return max(math.sqrt(ki / p.l_conv), kp / p.l_conv)
