"""Time-domain dq simulator used as an independent measurement oracle."""
from .dynamics import (SimModel, build_dynamics, equilibrium_derivative, jacobian,
                       linearized_impedance)
from .kernel import BACKEND
from .sweep import (FreeResponse, MeasuredImpedance, SimConfig, free_response, measure_pn,
                    single_bin_dft, sweep_impedance)

__all__ = [
    "BACKEND", "FreeResponse", "MeasuredImpedance", "SimConfig", "SimModel", "build_dynamics",
    "equilibrium_derivative", "free_response", "jacobian", "linearized_impedance", "measure_pn", "single_bin_dft",
    "sweep_impedance",
]
