"""Adaptive spectral cut-off estimation in inverse problems with a noisy operator."""
from .errors import ConfigError, DataError, IndexDomainError
from .weights import WeightSequence, check_admissible
from .model import (ClassParams, NoiseLevels, ObservationSet, ProblemInstance,
                    make_instance, simulate, truncation_length)
from .estimator import EstimatorOutput, estimate, risk_error_sq
from .oracle import oracle_k, oracle_report, upsilon, psi_diamond, theoretical_rate
from .adaptive import (AlphaSeq, adaptive_estimate, contrast_and_select, dimension_bounds,
                       event_flags, check_condition_L)
from .verify import (check_key_lemma, check_theorem22, mc_risk, rate_fit)

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DataError", "IndexDomainError",
    "WeightSequence", "check_admissible",
    "ClassParams", "NoiseLevels", "ObservationSet", "ProblemInstance",
    "make_instance", "simulate", "truncation_length",
    "EstimatorOutput", "estimate", "risk_error_sq",
    "oracle_k", "oracle_report", "upsilon", "psi_diamond", "theoretical_rate",
    "AlphaSeq", "adaptive_estimate", "contrast_and_select", "dimension_bounds",
    "event_flags", "check_condition_L",
    "check_key_lemma", "check_theorem22", "mc_risk", "rate_fit",
]
