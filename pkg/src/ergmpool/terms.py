"""ERGM statistics: term definitions, sufficient and change statistics.

All supported terms are dyad-independent, so the tie-level contribution of any
term depends only on the two endpoints (plus, for reciprocity, the opposite
tie of the same dyad). That makes three things exact and cheap downstream:
maximum likelihood, per-dyad sampling, and the dyad-level linear predictor.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import MissingCovariateError, UnsupportedTermError, ValidationError
from .networks import AttributeTable, DirectedNetwork


class TermKind(str, Enum):
    EDGES = "edges"
    MUTUAL = "mutual"
    NODEOCOV = "nodeocov"
    NODEICOV = "nodeicov"
    ABSDIFF = "absdiff"
    NODEMATCH = "nodematch"


_ATTR_KINDS = {TermKind.NODEOCOV, TermKind.NODEICOV, TermKind.ABSDIFF, TermKind.NODEMATCH}


@dataclass(frozen=True)
class TermSpec:
    kind: TermKind
    attr: str = ""

    def __post_init__(self):
        if self.kind in _ATTR_KINDS and not self.attr:
            raise ValidationError(f"term {self.kind.value} requires an attribute name")
        if self.kind not in _ATTR_KINDS and self.attr:
            raise ValidationError(f"term {self.kind.value} takes no attribute")

    @property
    def label(self) -> str:
        return f"{self.kind.value}.{self.attr}" if self.attr else self.kind.value


@dataclass(frozen=True)
class ModelSpec:
    """Ordered term list; the order fixes coefficient order everywhere downstream."""

    terms: tuple[TermSpec, ...]
    preset: str = "custom"

    def __post_init__(self):
        n_edges = sum(1 for t in self.terms if t.kind is TermKind.EDGES)
        if n_edges != 1:
            raise ValidationError("model must contain the edges term exactly once")

    def __len__(self) -> int:
        return len(self.terms)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(t.label for t in self.terms)

    @property
    def mutual_index(self):
        for idx, t in enumerate(self.terms):
            if t.kind is TermKind.MUTUAL:
                return idx
        return None


PRESETS = {
    "rq1": (
        TermSpec(TermKind.EDGES),
        TermSpec(TermKind.MUTUAL),
        TermSpec(TermKind.NODEOCOV, "skills"),
        TermSpec(TermKind.NODEICOV, "skills"),
        TermSpec(TermKind.NODEOCOV, "perceived_skills"),
        TermSpec(TermKind.NODEICOV, "perceived_skills"),
        TermSpec(TermKind.ABSDIFF, "skills"),
    ),
    "rq2": (
        TermSpec(TermKind.EDGES),
        TermSpec(TermKind.MUTUAL),
        TermSpec(TermKind.NODEOCOV, "skills"),
        TermSpec(TermKind.NODEICOV, "skills"),
        TermSpec(TermKind.NODEOCOV, "perceived_skills"),
        TermSpec(TermKind.NODEICOV, "perceived_skills"),
        TermSpec(TermKind.ABSDIFF, "skills"),
        TermSpec(TermKind.NODEOCOV, "female"),
    ),
    "h1": (
        TermSpec(TermKind.EDGES),
        TermSpec(TermKind.MUTUAL),
        TermSpec(TermKind.NODEICOV, "female"),
    ),
    "h2": (
        TermSpec(TermKind.EDGES),
        TermSpec(TermKind.MUTUAL),
        TermSpec(TermKind.NODEMATCH, "female"),
    ),
}


def model_preset(name: str) -> ModelSpec:
    if name not in PRESETS:
        raise ValidationError(f"unknown preset {name!r}; expected one of {sorted(PRESETS)}")
    return ModelSpec(terms=PRESETS[name], preset=name)


def model_from_config(cfg: dict) -> ModelSpec:
    """Build a ModelSpec from the run-config JSON form."""
    name = cfg.get("model", "custom")
    if name != "custom":
        return model_preset(name)
    terms = tuple(
        TermSpec(TermKind(t["kind"]), t.get("attr", "")) for t in cfg["terms"]
    )
    return ModelSpec(terms=terms, preset="custom")


def _attr_values(attrs: AttributeTable, name: str) -> np.ndarray:
    vals = attrs.column(name)
    if np.isnan(vals).any():
        raise MissingCovariateError(f"attribute {name!r} has missing values")
    return vals


def sufficient_stats(network: DirectedNetwork, attrs: AttributeTable,
                     model: ModelSpec) -> np.ndarray:
    """The statistic vector g(y) for the observed network, in term order."""
    out = np.zeros(len(model))
    tie_list = list(network.ties)
    src = np.array([i for i, _ in tie_list], dtype=int)
    dst = np.array([j for _, j in tie_list], dtype=int)
    for idx, term in enumerate(model.terms):
        if term.kind is TermKind.EDGES:
            out[idx] = len(tie_list)
        elif term.kind is TermKind.MUTUAL:
            out[idx] = sum(1 for i, j in tie_list if i < j and (j, i) in network.ties)
        else:
            x = _attr_values(attrs, term.attr)
            if term.kind is TermKind.NODEOCOV:
                out[idx] = x[src].sum() if len(tie_list) else 0.0
            elif term.kind is TermKind.NODEICOV:
                out[idx] = x[dst].sum() if len(tie_list) else 0.0
            elif term.kind is TermKind.ABSDIFF:
                out[idx] = np.abs(x[src] - x[dst]).sum() if len(tie_list) else 0.0
            elif term.kind is TermKind.NODEMATCH:
                out[idx] = (x[src] == x[dst]).sum() if len(tie_list) else 0.0
    return out


def change_stats(network: DirectedNetwork, attrs: AttributeTable, model: ModelSpec,
                 i: int, j: int) -> np.ndarray:
    """g(y + (i,j)) - g(y - (i,j)): the effect of switching on the tie i->j."""
    if i == j:
        raise ValidationError("change statistic undefined for a self-loop")
    out = np.zeros(len(model))
    for idx, term in enumerate(model.terms):
        if term.kind is TermKind.EDGES:
            out[idx] = 1.0
        elif term.kind is TermKind.MUTUAL:
            out[idx] = 1.0 if (j, i) in network.ties else 0.0
        else:
            x = _attr_values(attrs, term.attr)
            if term.kind is TermKind.NODEOCOV:
                out[idx] = x[i]
            elif term.kind is TermKind.NODEICOV:
                out[idx] = x[j]
            elif term.kind is TermKind.ABSDIFF:
                out[idx] = abs(x[i] - x[j])
            elif term.kind is TermKind.NODEMATCH:
                out[idx] = 1.0 if x[i] == x[j] else 0.0
    return out


def tie_covariates(attrs: AttributeTable, model: ModelSpec, i, j) -> np.ndarray:
    """Covariate contribution of the tie i->j to each term, with mutual zeroed.

    Accepts scalar or array i, j; returns shape (..., p). This is the single-tie
    row of the dyad factorization: the mutual term contributes only in the
    both-ties state and is handled separately.
    """
    i = np.asarray(i)
    j = np.asarray(j)
    out = np.zeros(i.shape + (len(model),))
    for idx, term in enumerate(model.terms):
        if term.kind is TermKind.EDGES:
            out[..., idx] = 1.0
        elif term.kind is TermKind.MUTUAL:
            out[..., idx] = 0.0
        else:
            x = _attr_values(attrs, term.attr)
            if term.kind is TermKind.NODEOCOV:
                out[..., idx] = x[i]
            elif term.kind is TermKind.NODEICOV:
                out[..., idx] = x[j]
            elif term.kind is TermKind.ABSDIFF:
                out[..., idx] = np.abs(x[i] - x[j])
            elif term.kind is TermKind.NODEMATCH:
                out[..., idx] = (x[i] == x[j]).astype(float)
    return out


def dyad_predictors(attrs: AttributeTable, model: ModelSpec, i: int, j: int,
                    theta: np.ndarray = None):
    """Linear-predictor parts for the dyad {i, j}.

    Returns (eta_ij_parts, eta_ji_parts, mutual_index) where the parts are the
    per-term covariate vectors of each directed tie (mutual component zero).
    With theta given, returns instead the scalar pair (eta_ij, eta_ji) and the
    mutual coefficient (0.0 when the model has no mutual term), so the dyad's
    four states have unnormalized log-weights
    {0, eta_ij, eta_ji, eta_ij + eta_ji + theta_mutual}.
    """
    if i == j:
        raise ValidationError("dyad predictors undefined for a self-loop")
    for term in model.terms:
        if term.kind not in TermKind.__members__.values():
            raise UnsupportedTermError(f"term {term.kind} is not dyad-decomposable")
    parts_ij = tie_covariates(attrs, model, i, j)
    parts_ji = tie_covariates(attrs, model, j, i)
    m = model.mutual_index
    if theta is None:
        return parts_ij, parts_ji, m
    theta = np.asarray(theta, dtype=float)
    theta_m = float(theta[m]) if m is not None else 0.0
    return float(parts_ij @ theta), float(parts_ji @ theta), theta_m


def dyad_design(network_n: int, attrs: AttributeTable, model: ModelSpec):
    """Stacked single-tie covariate rows for every unordered dyad i < j.

    Returns (pairs, A, B): pairs is the (D, 2) array of (i, j) with i < j,
    A[d] the covariate row of tie i->j, B[d] of tie j->i. The four dyad
    states then have statistic rows 0, A, B, A + B + e_mutual.
    """
    iu, ju = np.triu_indices(network_n, k=1)
    pairs = np.column_stack([iu, ju])
    a = tie_covariates(attrs, model, iu, ju)
    b = tie_covariates(attrs, model, ju, iu)
    return pairs, a, b
