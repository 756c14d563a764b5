"""Estimation of incoherent qudit SPAM noise with gauge-ambiguity bounds."""

from .design import (
    DesignMatrix,
    PermutationCircuit,
    build_design,
    proposition_design,
    transposition,
)
from .estimator import SpamEstimate, estimate, estimate_from_distributions, qubit_subspace_summary
from .exceptions import SpamError
from .gauge import (
    SubsystemDepolarizing,
    apply_gauge_exact,
    gauge_generator_matrix,
    inverse_parameter,
    parameter_interval,
)
from .model import EpsilonVector, SpamModel, SystemShape, from_epsilon, random_model, to_epsilon
from .pauli import (
    PauliChannel,
    PauliLabel,
    corrected_eigenvalue,
    cz_action,
    fit_exponential,
    is_identifiable,
    simulate_cb,
)
from .simulator import CountsRecord, run_design, sample

__version__ = "0.1.0"

__all__ = [
    "CountsRecord", "DesignMatrix", "EpsilonVector", "PauliChannel", "PauliLabel",
    "PermutationCircuit", "SpamError", "SpamEstimate", "SpamModel", "SubsystemDepolarizing",
    "SystemShape", "apply_gauge_exact", "build_design", "corrected_eigenvalue", "cz_action",
    "estimate", "estimate_from_distributions", "fit_exponential", "from_epsilon",
    "gauge_generator_matrix", "inverse_parameter", "is_identifiable", "parameter_interval",
    "proposition_design", "qubit_subspace_summary", "random_model", "run_design", "sample",
    "simulate_cb", "to_epsilon", "transposition",
]
