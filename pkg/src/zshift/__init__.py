"""Global-frame impedance aggregation and stability analysis for converter networks."""
__version__ = "0.1.0"
