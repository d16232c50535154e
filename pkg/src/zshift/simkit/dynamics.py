"""Continuous-time dq model of the whole network for the time-domain oracle.

Everything is written in one dq frame rotating at the nominal frequency,
with its angle origin at the reference node. Converters realise their own
control frames through their PLL angle states; nothing here uses the
frequency-domain rotation algebra.

Because every branch is an inductor and no node carries capacitance, only
the unit currents are independent. With ``i`` the vector of unit currents
(one per converter or passive stub, flowing from the source into the unit),
the loop equation of unit ``k`` is

    M di/dt = (e_s + v_inj) 1 - R i - j w1 M i - e

where ``M[k, m]`` (``R[k, m]``) sums the inductances (resistances) of the
branches shared by the source-to-unit paths of ``k`` and ``m``, plus the
unit's own element on the diagonal, and ``e`` holds the converter voltages.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import InputError, TopologyError
from ..network import FlowSolution, NetworkModel, build_tree
from . import _kernel_py as kp

CONV_STATES = 8
DELAY_STATES = 4


@dataclass
class SimModel:
    net: NetworkModel
    flow: FlowSolution
    glob: np.ndarray
    minv: np.ndarray
    rmat: np.ndarray
    units: np.ndarray
    x0: np.ndarray
    unit_names: tuple
    offsets: dict            # converter name -> state offset
    out0: np.ndarray         # steady interface outputs [v_d, v_q, i_d, i_q]

    @property
    def n_states(self) -> int:
        return self.x0.size

    @property
    def v_source_peak(self) -> float:
        return abs(self.flow.source_emf)

    def with_source(self, emf: complex) -> "SimModel":
        glob = self.glob.copy()
        glob[kp.G_ES_D], glob[kp.G_ES_Q] = emf.real, emf.imag
        return SimModel(self.net, self.flow, glob, self.minv, self.rmat, self.units, self.x0,
                        self.unit_names, self.offsets, self.out0)


def build_dynamics(net: NetworkModel, flow: FlowSolution) -> SimModel:
    """Assemble the state model and its equilibrium from a converged flow."""
    tree = build_tree(net)
    n = len(net.units)
    if n == 0:
        raise TopologyError("network has no units; nothing to simulate below the interface")
    th = net.thevenin
    w1 = net.omega1

    paths = []
    for u in net.units:
        if u.node not in tree.order:
            raise TopologyError(f"unit {u.name!r} sits on unreachable node {u.node!r}")
        paths.append([b.name for b in tree.path(u.node)])
    br = {b.name: b for b in net.branches}

    mmat = np.zeros((n, n))
    rmat = np.zeros((n, n))
    for k in range(n):
        for m in range(n):
            shared = 0
            for a, b in zip(paths[k], paths[m]):
                if a != b:
                    break
                shared += 1
            names = paths[k][:shared]
            mmat[k, m] = th.l_h + sum(br[x].l_h for x in names)
            rmat[k, m] = th.r_ohm + sum(br[x].r_ohm for x in names)
    for k, u in enumerate(net.units):
        if u.is_converter:
            mmat[k, k] += u.params.l_conv
        else:
            mmat[k, k] += u.l_h
            rmat[k, k] += u.r_ohm
    if np.linalg.cond(mmat) > 1e12:
        raise TopologyError("loop inductance matrix is singular; every current path needs "
                            "inductance")
    minv = np.linalg.inv(mmat)

    units = np.zeros((n, kp.N_COLS))
    offsets = {}
    off = 2 * n
    x0_parts = [np.zeros(2 * n)]
    for k, u in enumerate(net.units):
        i_k = flow.unit_currents[u.name]
        x0_parts[0][2 * k] = i_k.real
        x0_parts[0][2 * k + 1] = i_k.imag
        row = units[k]
        if not u.is_converter:
            row[kp.COL_R] = u.r_ohm
            row[kp.COL_L] = u.l_h
            continue
        p = u.params
        if p.filter_tau <= 0:
            raise InputError(f"converter {u.name!r}: the simulator needs filter_tau > 0")
        if abs(p.f_n - net.base.f_n) > 1e-12 * net.base.f_n:
            raise InputError(f"converter {u.name!r}: f_n differs from the network base")
        gain = p.voltage_gain
        row[kp.COL_IS_CONV] = 1.0
        row[kp.COL_L] = p.l_conv
        row[kp.COL_KKP] = gain * p.k_p
        row[kp.COL_KKI] = gain * p.k_i
        row[kp.COL_KP_PLL] = p.k_p_pll
        row[kp.COL_KI_PLL] = p.k_i_pll
        row[kp.COL_TAU] = p.filter_tau
        row[kp.COL_W1L] = w1 * p.l_conv
        row[kp.COL_IREF_D] = u.i_d
        row[kp.COL_IREF_Q] = u.i_q
        row[kp.COL_OFFSET] = off
        has_delay = p.delay_td > 0
        if has_delay:
            row[kp.COL_HAS_DELAY] = 1.0
            row[kp.COL_PADE_A] = p.delay_td / 2.0
            row[kp.COL_PADE_B] = p.delay_td ** 2 / 12.0
        v = flow.voltages[u.node]
        v0 = abs(v)
        xc = np.zeros(CONV_STATES + (DELAY_STATES if has_delay else 0))
        xc[3] = math.atan2(v.imag, v.real)
        xc[4] = v0
        xc[6] = u.i_d
        xc[7] = u.i_q
        if has_delay:
            # Pade states rest at the controller output: e_c = v0 + j w1 L I
            xc[8] = v0 - w1 * p.l_conv * u.i_q
            xc[10] = w1 * p.l_conv * u.i_d
        offsets[u.name] = off
        off += xc.size
        x0_parts.append(xc)

    glob = np.zeros(kp.N_GLOB)
    glob[kp.G_ES_D] = flow.source_emf.real
    glob[kp.G_ES_Q] = flow.source_emf.imag
    glob[kp.G_W1] = w1
    glob[kp.G_R_TH] = th.r_ohm
    glob[kp.G_L_TH] = th.l_h
    x0 = np.concatenate(x0_parts)

    out0 = np.zeros(4)
    dx = np.zeros(x0.size)
    kp.rhs(x0, 0.0, np.zeros(3), glob, minv, rmat, units, dx, out0)
    return SimModel(net, flow, glob, minv, rmat, units, x0, tuple(u.name for u in net.units),
                    offsets, out0)


def equilibrium_derivative(model: SimModel) -> np.ndarray:
    dx = np.zeros(model.n_states)
    kp.rhs(model.x0, 0.0, np.zeros(3), model.glob, model.minv, model.rmat, model.units, dx,
           np.zeros(4))
    return dx


def jacobian(model: SimModel, x: np.ndarray | None = None, rel_step: float = 1e-7) -> np.ndarray:
    """Central-difference Jacobian of the unperturbed dynamics."""
    x = model.x0 if x is None else x
    ns = x.size
    jac = np.zeros((ns, ns))
    fp = np.zeros(ns)
    fm = np.zeros(ns)
    o = np.zeros(4)
    zero = np.zeros(3)
    for i in range(ns):
        h = rel_step * max(1.0, abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        kp.rhs(xp, 0.0, zero, model.glob, model.minv, model.rmat, model.units, fp, o)
        kp.rhs(xm, 0.0, zero, model.glob, model.minv, model.rmat, model.units, fm, o)
        jac[:, i] = (fp - fm) / (2 * h)
    return jac


def _outputs(model: SimModel, x: np.ndarray, inj: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    dx = np.zeros(model.n_states)
    o = np.zeros(4)
    kp.rhs(x, 0.0, inj, model.glob, model.minv, model.rmat, model.units, dx, o)
    return dx, o


def linearized_impedance(model: SimModel, grid, rel_step: float = 1e-3):
    """Load and source impedances from the numerically linearized state model.

    Builds ``(A, B, C, D)`` around the equilibrium, with the two injection
    axes as inputs (evaluated at ``t = 0`` where the carrier is 1), and returns
    ``(Z_load, Z_source)`` as ``(n, 2, 2)`` arrays over ``grid``. The model is
    linear apart from the frame rotations, so a coarse step loses less to
    roundoff than it gains in truncation error (the delay states are stiff).
    """
    ns = model.n_states
    a = jacobian(model, rel_step=rel_step)
    b = np.zeros((ns, 2))
    d = np.zeros((4, 2))
    h = 1e-3 * model.v_source_peak
    for j in range(2):
        e = np.zeros(3)
        e[j] = h
        dp, op = _outputs(model, model.x0, e)
        e[j] = -h
        dm, om = _outputs(model, model.x0, e)
        b[:, j] = (dp - dm) / (2 * h)
        d[:, j] = (op - om) / (2 * h)
    c = np.zeros((4, ns))
    zero = np.zeros(3)
    for i in range(ns):
        hh = rel_step * max(1.0, abs(model.x0[i]))
        xp = model.x0.copy()
        xm = model.x0.copy()
        xp[i] += hh
        xm[i] -= hh
        c[:, i] = (_outputs(model, xp, zero)[1] - _outputs(model, xm, zero)[1]) / (2 * hh)
    z_load = np.empty((len(grid), 2, 2), dtype=complex)
    z_src = np.empty_like(z_load)
    eye = np.eye(ns)
    for k, s in enumerate(grid.s):
        g = c @ np.linalg.solve(s * eye - a, b) + d
        i_inv = np.linalg.inv(g[2:])
        z_load[k] = g[:2] @ i_inv
        z_src[k] = -(g[:2] - np.eye(2)) @ i_inv
    return z_load, z_src
