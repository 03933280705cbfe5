"""Adversarial sparse-regression designs, separable M-estimators and local descent."""
from .penalties import (
    PenaltyDomainError,
    PenaltyKind,
    SeparablePenalty,
    check_family_F,
    penalty_from_config,
    penalty_prox,
    penalty_subderivative,
    penalty_value,
)

__version__ = "0.1.0"
