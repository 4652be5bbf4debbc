"""Numerical laboratory for a rotating stratified channel with bottom slip.

Submodules import numpy and scipy; to let the CLI pin thread pools first,
this package root stays import-light and re-exports lazily.
"""

__version__ = "0.1.0"

_EXPORTS = {
    "Grid": "grid",
    "ScalarField": "grid",
    "build_grid": "grid",
    "SteadyState": "steady",
    "PhysicalParams": "steady",
    "LinearZ": "steady",
    "HarmonicMode": "steady",
    "ConstantDelta": "steady",
    "DeltaOfPsi": "steady",
    "StepConfig": "dynamics",
    "State": "dynamics",
    "run": "dynamics",
    "step": "dynamics",
    "make_initial_state": "dynamics",
    "recover_pressure": "dynamics",
    "assemble_forms": "stability",
    "alpha_of_s": "stability",
    "find_lambda0": "stability",
    "classify": "stability",
    "EnergyLedger": "diagnostics",
    "budget_residual": "diagnostics",
    "fit_gamma_beta": "diagnostics",
    "decay_report": "diagnostics",
    "balance_residual_proxy": "diagnostics",
    "load_config": "config",
    "build_problem": "config",
    "write_field": "snapshots",
    "read_field": "snapshots",
    "BsnqError": "errors",
}

__all__ = ["__version__"] + sorted(_EXPORTS)


def __getattr__(name):
    if name in _EXPORTS:
        import importlib

        mod = importlib.import_module("." + _EXPORTS[name], __name__)
        value = getattr(mod, name)
        globals()[name] = value
        return value
    raise AttributeError("module %r has no attribute %r" % (__name__, name))


def __dir__():
    return sorted(set(list(globals()) + __all__))
