"""Cross-entropy importance sampling for rare-event statistical model checking."""
from .ce import CEConfig, CEResult, ce_optimize, ce_update, apply_smoothing, find_initial, normalize
from .errors import (CesmcError, ConvergenceError, Deadlock, InitialSearchFailed,
                     InternalConsistencyError, ModelError, NoHitsError, ParseError,
                     StateSpaceTooLarge, UnsupportedProperty)
from .estimators import (EstimateResult, chernoff_sample_size, is_estimate, mc_estimate,
                         variance_reduction_report)
from .language import format_model, format_property, load_model, parse_model, parse_property
from .model import Command, Label, Model, VarDecl, mu
from .oracle import (ExplicitChain, build_state_space, exact_ce_iteration, exact_ce_reference,
                     exact_probability)
from .simulate import TraceBatch, TraceSummary, replay, simulate, simulate_batch

__version__ = "0.1.0"

__all__ = [
    "CEConfig", "CEResult", "ce_optimize", "ce_update", "apply_smoothing", "find_initial",
    "normalize", "CesmcError", "ConvergenceError", "Deadlock", "InitialSearchFailed",
    "InternalConsistencyError", "ModelError", "NoHitsError", "ParseError",
    "StateSpaceTooLarge", "UnsupportedProperty", "EstimateResult", "chernoff_sample_size",
    "is_estimate", "mc_estimate", "variance_reduction_report", "format_model",
    "format_property", "load_model", "parse_model", "parse_property", "Command", "Label",
    "Model", "VarDecl", "mu", "ExplicitChain", "build_state_space", "exact_ce_iteration",
    "exact_ce_reference", "exact_probability", "TraceBatch", "TraceSummary", "replay",
    "simulate", "simulate_batch", "model_path",
]


def model_path(name: str) -> str:
    """Path of a shipped model file, e.g. ``model_path("repair")``."""
    from importlib import resources
    return str(resources.files(__package__) / "models" / f"{name}.gcm")
