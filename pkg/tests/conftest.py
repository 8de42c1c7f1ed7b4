import numpy as np
import pytest

from ergmpool.networks import N_SKILL_ITEMS, AttributeTable, DirectedNetwork
from ergmpool.terms import ModelSpec, TermKind, TermSpec


def make_network(ties, n, network_id="net", country="X"):
    return DirectedNetwork(
        network_id=network_id,
        node_ids=tuple(f"v{k}" for k in range(n)),
        ties=frozenset(ties),
        country=country,
    )


def random_network(rng, n, density=0.5, network_id="net", country="X"):
    ties = {(i, j) for i in range(n) for j in range(n)
            if i != j and rng.random() < density}
    return make_network(ties, n, network_id=network_id, country=country)


def grid_attrs(rng, n):
    """Attributes on a dyadic grid (multiples of 1/64) so that statistic sums
    are exact in double precision and toggle identities hold bit-for-bit."""
    skills = rng.integers(0, 65, n) / 64.0
    perceived = rng.integers(0, 65, n) / 64.0
    female = rng.integers(0, 2, n).astype(float)
    items = rng.integers(1, 6, (n, N_SKILL_ITEMS)).astype(float)
    return AttributeTable(female=female, skill_items=items,
                          skills=skills, perceived_skills=perceived)


ALL_TERMS = [
    TermSpec(TermKind.MUTUAL),
    TermSpec(TermKind.NODEOCOV, "skills"),
    TermSpec(TermKind.NODEICOV, "skills"),
    TermSpec(TermKind.NODEOCOV, "perceived_skills"),
    TermSpec(TermKind.NODEICOV, "perceived_skills"),
    TermSpec(TermKind.ABSDIFF, "skills"),
    TermSpec(TermKind.NODEMATCH, "female"),
]


def random_model(rng):
    picks = [t for t in ALL_TERMS if rng.random() < 0.5]
    return ModelSpec(terms=(TermSpec(TermKind.EDGES), *picks))


@pytest.fixture
def rng():
    return np.random.default_rng(20260826)
