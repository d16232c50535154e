"""Radial network model: config parsing, fundamental flow and impedance aggregation.

The network is a tree of series R-L branches hanging off the Thevenin
interface node. Units (converters or passive R-L shunt stubs) attach to
nodes. Phasors are phase-peak space vectors (amplitude-invariant dq), so a
balanced voltage of ``V`` volts line-to-line RMS has magnitude
``V * sqrt(2/3)``.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from . import converter as conv
from .errors import ConfigError, ConvergenceError, InputError, NumericalError, TopologyError
from .freqresp import (Frame, FrequencyGrid, FrequencyResponse2x2, eval_rl_branch, parallel,
                       series)
from .frames import MFD_TOL_ANALYTIC, ReferenceAngle, align_to_global, to_domain

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

PHASE_PEAK = math.sqrt(2.0 / 3.0)


@dataclass(frozen=True)
class Base:
    s_base: float
    v_base: float
    f_n: float

    @property
    def z_base(self) -> float:
        return self.v_base ** 2 / self.s_base

    @property
    def omega1(self) -> float:
        return 2 * math.pi * self.f_n


@dataclass(frozen=True)
class Thevenin:
    node: str
    v_ll_rms: float
    r_ohm: float
    l_h: float

    @property
    def v_peak(self) -> float:
        return self.v_ll_rms * PHASE_PEAK


@dataclass(frozen=True)
class Branch:
    name: str
    from_node: str
    to_node: str
    r_ohm: float
    l_h: float


@dataclass(frozen=True)
class Unit:
    """A shunt attachment: a converter (``params`` set) or a passive R-L stub."""

    name: str
    node: str
    params: conv.ConverterParams | None = None
    i_d: float = 0.0
    i_q: float = 0.0
    r_ohm: float = 0.0
    l_h: float = 0.0

    @property
    def is_converter(self) -> bool:
        return self.params is not None


@dataclass(frozen=True)
class NetworkModel:
    base: Base
    thevenin: Thevenin
    branches: tuple[Branch, ...]
    units: tuple[Unit, ...]
    reference_node: str
    nodes: tuple[str, ...] = field(default=())

    def __post_init__(self):
        nodes = {self.thevenin.node}
        for b in self.branches:
            nodes.update((b.from_node, b.to_node))
        for u in self.units:
            nodes.add(u.node)
        order = [self.thevenin.node] + sorted(nodes - {self.thevenin.node})
        object.__setattr__(self, "nodes", tuple(order))
        if self.reference_node not in nodes:
            raise TopologyError(f"reference node {self.reference_node!r} does not exist")
        _check_connected(self)
        build_tree(self)

    @property
    def omega1(self) -> float:
        return self.base.omega1

    @property
    def interface(self) -> str:
        return self.thevenin.node

    @property
    def converters(self) -> tuple[Unit, ...]:
        return tuple(u for u in self.units if u.is_converter)

    def unit(self, name: str) -> Unit:
        for u in self.units:
            if u.name == name:
                return u
        raise KeyError(name)

    def with_reference(self, node: str) -> "NetworkModel":
        from dataclasses import replace
        return replace(self, reference_node=node)

    def map_units(self, fn) -> "NetworkModel":
        from dataclasses import replace
        return replace(self, units=tuple(fn(u) for u in self.units))


def _check_connected(net: NetworkModel) -> None:
    adj: dict[str, set[str]] = {n: set() for n in net.nodes}
    for b in net.branches:
        adj[b.from_node].add(b.to_node)
        adj[b.to_node].add(b.from_node)
    seen = {net.thevenin.node}
    stack = [net.thevenin.node]
    while stack:
        for m in adj[stack.pop()]:
            if m not in seen:
                seen.add(m)
                stack.append(m)
    missing = sorted(set(net.nodes) - seen)
    if missing:
        raise TopologyError(f"network is not connected; unreachable nodes: {missing}")


@dataclass(frozen=True)
class Tree:
    """The network oriented away from the interface node."""

    root: str
    parent: dict          # node -> (parent node, Branch) ; root absent
    children: dict        # node -> list of (child node, Branch)
    order: tuple          # nodes in breadth-first order from the root

    def path(self, node: str) -> list[Branch]:
        """Branches from the root down to ``node``."""
        out = []
        while node != self.root:
            node, br = self.parent[node]
            out.append(br)
        return out[::-1]


def build_tree(net: NetworkModel) -> Tree:
    root = net.interface
    adj: dict[str, list] = {n: [] for n in net.nodes}
    for b in net.branches:
        if b.from_node == b.to_node:
            raise TopologyError(f"branch {b.name!r} is a self-loop")
        adj[b.from_node].append((b.to_node, b))
        adj[b.to_node].append((b.from_node, b))
    parent: dict = {}
    children: dict = {n: [] for n in net.nodes}
    order = [root]
    seen = {root}
    used = set()
    k = 0
    while k < len(order):
        n = order[k]
        k += 1
        for m, b in adj[n]:
            if b.name in used:
                continue
            used.add(b.name)
            if m in seen:
                raise TopologyError(f"network is not radial: branch {b.name!r} closes a loop")
            seen.add(m)
            parent[m] = (n, b)
            children[n].append((m, b))
            order.append(m)
    return Tree(root, parent, children, tuple(order))


# -- config parsing --------------------------------------------------------------

_TOP_KEYS = {"reference_node", "base", "thevenin", "branch", "converter", "converter_defaults",
             "passive"}
_BASE_KEYS = {"s_base_va", "v_base_v", "z_base_ohm", "f_n_hz"}
_IMPEDANCE_KEYS = {"r_ohm", "l_h", "z_pu", "x_over_r"}
_THEVENIN_KEYS = {"node", "v_ll_rms"} | _IMPEDANCE_KEYS
_BRANCH_KEYS = {"name", "from", "to"} | _IMPEDANCE_KEYS
_PARAM_KEYS = {"kp": "k_p", "ki": "k_i", "kp_pll": "k_p_pll", "ki_pll": "k_i_pll",
               "vdc": "v_dc", "l_conv": "l_conv", "filter_tau": "filter_tau",
               "delay_td": "delay_td", "v_pu_base": "v_pu_base"}
_CONVERTER_KEYS = {"name", "node", "id_a", "iq_a"} | set(_PARAM_KEYS)
_PASSIVE_KEYS = {"name", "node"} | _IMPEDANCE_KEYS


def _check_keys(table: Mapping, allowed: set, where: str) -> None:
    if not isinstance(table, Mapping):
        raise ConfigError(f"{where}: expected a table")
    for key in table:
        if key not in allowed:
            raise ConfigError(f"{where}: unknown key {key!r}")


def _number(table: Mapping, key: str, where: str, default=None, positive=False) -> float:
    if key not in table:
        if default is None:
            raise ConfigError(f"{where}: missing required key {key!r}")
        return default
    val = table[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"{where}.{key}: expected a number, got {val!r}")
    val = float(val)
    if not math.isfinite(val) or val < 0 or (positive and val == 0):
        raise ConfigError(f"{where}.{key}: must be {'> 0' if positive else '>= 0'}, got {val}")
    return val


def _text(table: Mapping, key: str, where: str) -> str:
    if key not in table:
        raise ConfigError(f"{where}: missing required key {key!r}")
    val = table[key]
    if not isinstance(val, (str, int)) or isinstance(val, bool):
        raise ConfigError(f"{where}.{key}: expected a node id string, got {val!r}")
    return str(val)


def pu_to_rl(z_pu: float, x_over_r: float, z_base: float, omega1: float) -> tuple[float, float]:
    """Per-unit magnitude and X/R ratio to (R ohm, L henry)."""
    zmag = z_pu * z_base
    r = zmag / math.sqrt(1.0 + x_over_r ** 2)
    return r, r * x_over_r / omega1


def _impedance(table: Mapping, where: str, base: Base) -> tuple[float, float]:
    has_ohm = "r_ohm" in table or "l_h" in table
    has_pu = "z_pu" in table or "x_over_r" in table
    if has_ohm and has_pu:
        raise ConfigError(f"{where}: give either r_ohm/l_h or z_pu/x_over_r, not both")
    if has_pu:
        z_pu = _number(table, "z_pu", where, positive=True)
        xr = _number(table, "x_over_r", where)
        return pu_to_rl(z_pu, xr, base.z_base, base.omega1)
    if has_ohm:
        r = _number(table, "r_ohm", where, default=0.0)
        l_h = _number(table, "l_h", where, default=0.0)
        if r == 0 and l_h == 0:
            raise ConfigError(f"{where}: impedance is zero")
        return r, l_h
    raise ConfigError(f"{where}: missing impedance (r_ohm/l_h or z_pu/x_over_r)")


def _params(table: Mapping, defaults: dict, f_n: float, v_base_peak: float, where: str) -> conv.ConverterParams:
    kw = dict(defaults)
    kw.setdefault("v_pu_base", v_base_peak)
    for key, field_name in _PARAM_KEYS.items():
        if key in table:
            kw[field_name] = _number(table, key, where)
    kw["f_n"] = f_n
    try:
        return conv.ConverterParams(**kw)
    except InputError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def network_from_dict(doc: Mapping[str, Any]) -> NetworkModel:
    """Validate a parsed config document and build the model."""
    _check_keys(doc, _TOP_KEYS, "config")
    if "base" not in doc:
        raise ConfigError("config: missing [base] table")
    b = doc["base"]
    _check_keys(b, _BASE_KEYS, "base")
    s_base = _number(b, "s_base_va", "base", positive=True)
    v_base = _number(b, "v_base_v", "base", positive=True)
    f_n = _number(b, "f_n_hz", "base", positive=True)
    base = Base(s_base, v_base, f_n)
    if "z_base_ohm" in b:
        zb = _number(b, "z_base_ohm", "base", positive=True)
        # the case-study tables round Z_base to three digits
        if abs(zb - base.z_base) > 5e-3 * base.z_base:
            raise ConfigError(f"base.z_base_ohm = {zb} disagrees with v_base^2/s_base = "
                              f"{base.z_base:.6g}")

    if "thevenin" not in doc:
        raise ConfigError("config: missing [thevenin] table")
    th = doc["thevenin"]
    _check_keys(th, _THEVENIN_KEYS, "thevenin")
    r_th, l_th = _impedance(th, "thevenin", base)
    thevenin = Thevenin(_text(th, "node", "thevenin"),
                        _number(th, "v_ll_rms", "thevenin", positive=True), r_th, l_th)

    branches = []
    for k, br in enumerate(doc.get("branch", [])):
        where = f"branch[{k}]"
        _check_keys(br, _BRANCH_KEYS, where)
        r, l_h = _impedance(br, where, base)
        name = str(br.get("name", f"B{k + 1}"))
        branches.append(Branch(name, _text(br, "from", where), _text(br, "to", where), r, l_h))
    names = [b.name for b in branches]
    if len(set(names)) != len(names):
        raise ConfigError("branch names must be unique")

    defaults_tbl = doc.get("converter_defaults", {})
    _check_keys(defaults_tbl, set(_PARAM_KEYS), "converter_defaults")
    defaults = {}
    for key, field_name in _PARAM_KEYS.items():
        if key in defaults_tbl:
            defaults[field_name] = _number(defaults_tbl, key, "converter_defaults")

    units = []
    for k, c in enumerate(doc.get("converter", [])):
        where = f"converter[{k}]"
        _check_keys(c, _CONVERTER_KEYS, where)
        i_d = c.get("id_a", 0.0)
        i_q = c.get("iq_a", 0.0)
        for key, val in (("id_a", i_d), ("iq_a", i_q)):
            if isinstance(val, bool) or not isinstance(val, (int, float)) or not math.isfinite(val):
                raise ConfigError(f"{where}.{key}: expected a finite number, got {val!r}")
        units.append(Unit(str(c.get("name", f"C{k + 1}")), _text(c, "node", where),
                          _params(c, defaults, f_n, base.v_base * PHASE_PEAK, where), float(i_d), float(i_q)))
    for k, p in enumerate(doc.get("passive", [])):
        where = f"passive[{k}]"
        _check_keys(p, _PASSIVE_KEYS, where)
        r, l_h = _impedance(p, where, base)
        units.append(Unit(str(p.get("name", f"S{k + 1}")), _text(p, "node", where),
                          r_ohm=r, l_h=l_h))
    unames = [u.name for u in units]
    if len(set(unames)) != len(unames):
        raise ConfigError("converter/passive names must be unique")

    if "reference_node" not in doc:
        raise ConfigError("config: missing reference_node")
    ref = _text(doc, "reference_node", "config")
    try:
        return NetworkModel(base, thevenin, tuple(branches), tuple(units), ref)
    except TopologyError as exc:
        raise ConfigError(str(exc)) from None


def parse_network(text: str, source: str = "<config>") -> NetworkModel:
    """Parse a TOML network config."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    try:
        return network_from_dict(doc)
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_network(path) -> NetworkModel:
    from pathlib import Path
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return parse_network(text, str(path))


# -- fundamental flow ------------------------------------------------------------

@dataclass(frozen=True)
class FlowSolution:
    voltages: dict            # node -> complex phasor, global frame (reference angle 0)
    source_emf: complex       # Thevenin EMF in the same frame
    unit_currents: dict       # unit name -> current into the unit (load convention)
    iterations: int
    residual: float           # max nodal KCL mismatch, A

    def theta(self, node: str) -> ReferenceAngle:
        return ReferenceAngle(float(np.angle(self.voltages[node])))

    def operating_point(self, unit: Unit) -> conv.OperatingPoint:
        return conv.OperatingPoint(unit.i_d, unit.i_q, self.voltages[unit.node])


def _unit_current(u: Unit, v: complex, omega1: float) -> complex:
    """Current flowing into the unit (load convention)."""
    if u.is_converter:
        theta = np.angle(v) if v != 0 else 0.0
        return -complex(u.i_d, u.i_q) * np.exp(1j * theta)
    return v / complex(u.r_ohm, omega1 * u.l_h)


def fundamental_flow(net: NetworkModel, tol: float = 1e-10, max_iter: int = 100) -> FlowSolution:
    """Backward/forward sweep of the radial phasor network.

    Converters inject ``(I_d + j I_q) e^{j theta_i}``, i.e. their set-points
    are expressed along their own terminal voltage. Each iteration sums the
    unit currents up the tree, recomputes node voltages downwards from the
    source, and turns the source EMF so the reference node sits at angle 0.
    Iteration stops when angles move by less than ``tol`` rad and voltage
    magnitudes by less than ``tol`` relative.
    """
    if not tol > 0:
        raise InputError("tol must be > 0")
    tree = build_tree(net)
    w1 = net.omega1
    th = net.thevenin
    z_th = complex(th.r_ohm, w1 * th.l_h)
    units_at: dict[str, list[Unit]] = {n: [] for n in net.nodes}
    for u in net.units:
        units_at[u.node].append(u)
    z_br = {b.name: complex(b.r_ohm, w1 * b.l_h) for b in net.branches}

    emf = complex(th.v_peak)
    v = {n: emf for n in net.nodes}
    for it in range(1, max_iter + 1):
        i_unit = {u.name: _unit_current(u, v[u.node], w1) for u in net.units}
        i_down: dict[str, complex] = {}
        for n in reversed(tree.order):
            total = sum((i_unit[u.name] for u in units_at[n]), 0j)
            total += sum((i_down[m] for m, _ in tree.children[n]), 0j)
            i_down[n] = total
        new = {tree.root: emf - z_th * i_down[tree.root]}
        for n in tree.order[1:]:
            p, br = tree.parent[n]
            new[n] = new[p] - z_br[br.name] * i_down[n]
        vref = new[net.reference_node]
        if vref == 0:
            raise NumericalError("reference node voltage collapsed to zero")
        turn = vref / abs(vref)
        if turn != 1:
            emf = emf / turn
            new = {n: x / turn for n, x in new.items()}
        delta = max(
            max(abs(float(np.angle(new[n] / v[n]))) if v[n] != 0 else math.inf,
                abs(abs(new[n]) - abs(v[n])) / max(abs(new[n]), 1e-300))
            for n in net.nodes
        )
        v = new
        if delta < tol:
            i_unit = {u.name: _unit_current(u, v[u.node], w1) for u in net.units}
            sol = FlowSolution(v, emf, i_unit, it, 0.0)
            return FlowSolution(v, emf, i_unit, it, kcl_residual(net, sol))
    raise ConvergenceError(f"fundamental flow did not converge in {max_iter} iterations "
                           f"(last change {delta:.3e})")


def kcl_residual(net: NetworkModel, flow: FlowSolution) -> float:
    """Max nodal current mismatch from an independently assembled nodal model."""
    w1 = net.omega1
    res = {n: 0j for n in net.nodes}
    th = net.thevenin
    res[th.node] += (flow.source_emf - flow.voltages[th.node]) / complex(th.r_ohm, w1 * th.l_h)
    for b in net.branches:
        i = (flow.voltages[b.from_node] - flow.voltages[b.to_node]) / complex(b.r_ohm, w1 * b.l_h)
        res[b.from_node] -= i
        res[b.to_node] += i
    for u in net.units:
        res[u.node] -= _unit_current(u, flow.voltages[u.node], w1)
    return max(abs(x) for x in res.values())


# -- aggregation -----------------------------------------------------------------

def local_models(net: NetworkModel, flow: FlowSolution, grid: FrequencyGrid) -> dict:
    """Local-frame dq model of every unit at the flow operating point."""
    out = {}
    for u in net.units:
        if u.is_converter:
            out[u.name] = conv.linearize_converter(u.params, flow.operating_point(u), grid,
                                                   node=u.node)
        else:
            out[u.name] = eval_rl_branch(u.r_ohm, u.l_h, net.omega1, grid, Frame(u.node))
    return out


def _parallel_all(items: list) -> FrequencyResponse2x2 | None:
    acc = None
    for z in items:
        if z is None:
            continue
        acc = z if acc is None else parallel(acc, z)
    return acc


def aggregate(net: NetworkModel, flow: FlowSolution, models: Mapping[str, FrequencyResponse2x2],
              side: str = "load", tol_mfd: float = MFD_TOL_ANALYTIC, rotate: bool = True,
              order_seed: int | None = None) -> FrequencyResponse2x2:
    """Global-frame impedance seen at the interface node.

    ``side="load"`` folds the tree below the interface: each unit model is
    aligned with its node angle, added in series with the branch above it,
    and sibling subtrees are combined in parallel. ``side="source"`` is the
    Thevenin branch. ``rotate=False`` skips the alignment (negative control).
    ``order_seed`` shuffles the folding order.
    """
    if side not in ("load", "source"):
        raise InputError(f"side must be 'load' or 'source', got {side!r}")
    missing = [u.name for u in net.units if u.name not in models]
    if missing:
        raise InputError(f"no model for units {missing}")
    any_model = next(iter(models.values()))
    grid = any_model.grid
    w1 = net.omega1
    if side == "source":
        th = net.thevenin
        return to_domain(eval_rl_branch(th.r_ohm, th.l_h, w1, grid), any_model.domain)

    tree = build_tree(net)
    rng = random.Random(order_seed) if order_seed is not None else None
    aligned = {}
    for u in net.units:
        z = models[u.name]
        if not z.frame.is_global:
            z = align_to_global(z, flow.theta(u.node), tol_mfd) if rotate else z.replace(
                frame=Frame())
        aligned[u.name] = z
    units_at: dict[str, list[str]] = {n: [] for n in net.nodes}
    for u in net.units:
        units_at[u.node].append(u.name)

    def branch_z(br: Branch):
        return to_domain(eval_rl_branch(br.r_ohm, br.l_h, w1, grid), any_model.domain)

    def fold(node: str):
        items = [aligned[name] for name in units_at[node]]
        for child, br in tree.children[node]:
            below = fold(child)
            if below is not None:
                items.append(series(branch_z(br), below))
        if rng is not None:
            rng.shuffle(items)
        return _parallel_all(items)

    z = fold(tree.root)
    if z is None:
        raise TopologyError("nothing is connected on the load side of the interface")
    return z


def analyze(net: NetworkModel, grid: FrequencyGrid, flow: FlowSolution | None = None,
            rotate: bool = True, tol_mfd: float = MFD_TOL_ANALYTIC):
    """Flow, local models and both global-frame aggregates in one call."""
    flow = flow or fundamental_flow(net)
    models = local_models(net, flow, grid)
    z_load = aggregate(net, flow, models, "load", tol_mfd, rotate=rotate)
    z_source = aggregate(net, flow, models, "source", tol_mfd)
    return flow, models, z_source, z_load
