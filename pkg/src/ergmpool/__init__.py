"""Batch ERGM estimation and hierarchical Bayesian pooling for small directed networks."""

from .networks import (
    AttributeTable,
    DirectedNetwork,
    RatingEdgeList,
    derive_composite_skills,
    derive_perceived_skills,
    describe,
    load_batch,
    write_batch,
)
from .terms import ModelSpec, TermKind, TermSpec, change_stats, dyad_predictors, sufficient_stats
from .fit import EffectObservation, FitResult, brute_force_mle, filter_fits, fit_exact, fit_mple
from .simulate import SimConfig, generate_attributes, gof, sample_exact, sample_metropolis
from .pooling import PoolConfig, PosteriorSummary, fixed_effect_reference, pool
from .impute import impute_chained

__version__ = "0.1.0"

__all__ = [
    "AttributeTable",
    "DirectedNetwork",
    "EffectObservation",
    "FitResult",
    "ModelSpec",
    "PoolConfig",
    "PosteriorSummary",
    "RatingEdgeList",
    "SimConfig",
    "TermKind",
    "TermSpec",
    "brute_force_mle",
    "change_stats",
    "derive_composite_skills",
    "derive_perceived_skills",
    "describe",
    "dyad_predictors",
    "filter_fits",
    "fit_exact",
    "fit_mple",
    "fixed_effect_reference",
    "generate_attributes",
    "gof",
    "impute_chained",
    "load_batch",
    "pool",
    "sample_exact",
    "sample_metropolis",
    "sufficient_stats",
    "write_batch",
]
