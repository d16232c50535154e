"""Bundled example networks."""
from __future__ import annotations

from importlib import resources

from .network import NetworkModel, parse_network

CASES = ("case_study", "passive", "no_load")


def case_text(name: str) -> str:
    if name not in CASES:
        raise KeyError(f"unknown case {name!r}; choose from {', '.join(CASES)}")
    return resources.files("zshift.data").joinpath(f"{name}.toml").read_text(encoding="utf-8")


def load_case(name: str = "case_study") -> NetworkModel:
    return parse_network(case_text(name), f"<{name}>")


def destabilized(net: NetworkModel, pll_factor: float) -> NetworkModel:
    """Every converter PLL retuned ``pll_factor`` times faster."""
    return net.map_units(lambda u: u if not u.is_converter else
                         _with_params(u, u.params.with_pll_bandwidth(pll_factor)))


def _with_params(unit, params):
    from dataclasses import replace
    return replace(unit, params=params)
