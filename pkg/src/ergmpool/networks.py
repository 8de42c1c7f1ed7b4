"""Directed-network data model, CSV ingestion, derived skill variables, descriptives.

One DirectedNetwork is a single classroom wave: a fixed node set and a set of
ordered ties with no self-loops. Node attributes live in a parallel
AttributeTable; peer skill ratings in a RatingEdgeList and are collapsed to a
node covariate by averaging incoming scores.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DegenerateNetworkError, ParseError, ValidationError

N_SKILL_ITEMS = 21

EDGES_HEADER = ["network_id", "source", "target"]
RATINGS_HEADER = ["network_id", "rater", "target", "score"]
ATTR_FIXED_COLS = ["network_id", "node_id", "country", "wave", "female"]
ATTR_ITEM_COLS = [f"item_{i:02d}" for i in range(1, N_SKILL_ITEMS + 1)]
ATTRIBUTES_HEADER = ATTR_FIXED_COLS + ATTR_ITEM_COLS
DERIVED_COLS = ["skills", "perceived_skills"]


@dataclass(frozen=True)
class DirectedNetwork:
    """A directed graph on a fixed, labeled node set."""

    network_id: str
    node_ids: tuple[str, ...]
    ties: frozenset[tuple[int, int]]
    country: str = ""
    wave: str = ""

    def __post_init__(self):
        n = len(self.node_ids)
        if len(set(self.node_ids)) != n:
            raise ValidationError(f"{self.network_id}: duplicate node ids")
        for i, j in self.ties:
            if i == j:
                raise ValidationError(f"{self.network_id}: self-loop at node {self.node_ids[i]}")
            if not (0 <= i < n and 0 <= j < n):
                raise ValidationError(f"{self.network_id}: tie index ({i},{j}) out of range")

    @property
    def n(self) -> int:
        return len(self.node_ids)

    def has_tie(self, i: int, j: int) -> bool:
        return (i, j) in self.ties

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n, self.n), dtype=np.int8)
        for i, j in self.ties:
            a[i, j] = 1
        return a

    def transpose(self) -> "DirectedNetwork":
        return replace(self, ties=frozenset((j, i) for i, j in self.ties))


@dataclass
class AttributeTable:
    """Per-node covariates; NaN marks a missing value.

    female is 0/1/NaN; skill_items is an (n, 21) array of ordinal responses in
    {0..5}; skills and perceived_skills are derived [0,1] composites, filled by
    the derivation operations.
    """

    female: np.ndarray
    skill_items: np.ndarray
    skills: np.ndarray = field(default=None)
    perceived_skills: np.ndarray = field(default=None)

    def __post_init__(self):
        self.female = np.asarray(self.female, dtype=float)
        self.skill_items = np.asarray(self.skill_items, dtype=float)
        n = self.female.shape[0]
        if self.skill_items.shape != (n, N_SKILL_ITEMS):
            raise ValidationError(
                f"skill_items shape {self.skill_items.shape} != ({n}, {N_SKILL_ITEMS})"
            )
        for name in DERIVED_COLS:
            v = getattr(self, name)
            if v is None:
                v = np.full(n, np.nan)
            v = np.asarray(v, dtype=float)
            if v.shape != (n,):
                raise ValidationError(f"{name} has wrong length")
            ok = np.isnan(v) | ((v >= 0.0) & (v <= 1.0))
            if not ok.all():
                raise ValidationError(f"{name} values outside [0,1]")
            setattr(self, name, v)

    @property
    def n(self) -> int:
        return self.female.shape[0]

    def column(self, name: str) -> np.ndarray:
        """Resolve an attribute name used by a model term."""
        if name not in ("female", "skills", "perceived_skills"):
            raise KeyError(f"unknown attribute {name!r}")
        return getattr(self, name)

    def copy(self) -> "AttributeTable":
        return AttributeTable(
            female=self.female.copy(),
            skill_items=self.skill_items.copy(),
            skills=self.skills.copy(),
            perceived_skills=self.perceived_skills.copy(),
        )


@dataclass
class RatingEdgeList:
    """Peer ratings: (rater index, target index, score in 1..5)."""

    triples: list[tuple[int, int, int]]

    def __post_init__(self):
        seen = set()
        for rater, target, score in self.triples:
            if rater == target:
                raise ValidationError(f"self-rating at node index {rater}")
            if not 1 <= score <= 5:
                raise ValidationError(f"rating score {score} outside 1..5")
            if (rater, target) in seen:
                raise ValidationError(f"duplicate rating for pair ({rater},{target})")
            seen.add((rater, target))


def _read_rows(path, expected_header, alt_header=None):
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(path, 1, "empty file") from None
        header = [h.strip() for h in header]
        if alt_header is not None and header == alt_header:
            expected_header = alt_header
        elif header != expected_header:
            raise ParseError(path, 1, f"expected header {','.join(expected_header)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(c.strip() == "" for c in row):
                continue
            if len(row) != len(expected_header):
                raise ParseError(path, lineno, f"expected {len(expected_header)} fields, got {len(row)}")
            yield lineno, [c.strip() for c in row]


def _parse_cell(path, lineno, text, lo, hi, what, integer=True):
    """Numeric cell with range check; empty means missing.

    integer=False admits fractional values (imputed skill items re-read from
    a derived-attributes file).
    """
    if text == "":
        return np.nan
    try:
        v = int(text) if integer else float(text)
    except ValueError:
        kind = "an integer" if integer else "a number"
        raise ParseError(path, lineno, f"{what}: not {kind}: {text!r}") from None
    if not lo <= v <= hi:
        raise ParseError(path, lineno, f"{what}: {v} outside {lo}..{hi}")
    return float(v)


def load_batch(edges_file, attributes_file, ratings_file=None):
    """Load a batch of networks from the three CSV files.

    Returns a list of (DirectedNetwork, AttributeTable, RatingEdgeList) in
    order of first appearance of each network_id in the attributes file. The
    node set of each network is the set of node_ids in the attributes file;
    ties or ratings referencing unknown nodes are rejected.
    """
    node_order: dict[str, list[str]] = {}
    node_index: dict[str, dict[str, int]] = {}
    meta: dict[str, tuple[str, str]] = {}
    attr_rows: dict[str, list[tuple[float, list[float]]]] = {}
    derived_rows: dict[str, list[tuple[float, float]]] = {}

    def _parse_derived(lineno, text, what):
        if text == "":
            return np.nan
        try:
            v = float(text)
        except ValueError:
            raise ParseError(attributes_file, lineno,
                             f"{what}: not a number: {text!r}") from None
        if not 0.0 <= v <= 1.0:
            raise ParseError(attributes_file, lineno, f"{what}: {v} outside [0,1]")
        return v

    for lineno, row in _read_rows(attributes_file, ATTRIBUTES_HEADER,
                                  alt_header=ATTRIBUTES_HEADER + DERIVED_COLS):
        net_id, node_id, country, wave = row[0], row[1], row[2], row[3]
        if net_id not in node_order:
            node_order[net_id] = []
            node_index[net_id] = {}
            meta[net_id] = (country, wave)
            attr_rows[net_id] = []
        elif meta[net_id] != (country, wave):
            raise ParseError(attributes_file, lineno,
                             f"network {net_id}: inconsistent country/wave")
        if node_id in node_index[net_id]:
            raise ParseError(attributes_file, lineno,
                             f"network {net_id}: duplicate node_id {node_id}")
        node_index[net_id][node_id] = len(node_order[net_id])
        node_order[net_id].append(node_id)
        female = _parse_cell(attributes_file, lineno, row[4], 0, 1, "female")
        items = [_parse_cell(attributes_file, lineno, c, 0, 5, "skill item",
                             integer=False)
                 for c in row[5:5 + N_SKILL_ITEMS]]
        attr_rows[net_id].append((female, items))
        if len(row) > 5 + N_SKILL_ITEMS:
            derived_rows.setdefault(net_id, []).append((
                _parse_derived(lineno, row[5 + N_SKILL_ITEMS], "skills"),
                _parse_derived(lineno, row[6 + N_SKILL_ITEMS], "perceived_skills"),
            ))

    ties: dict[str, set[tuple[int, int]]] = {k: set() for k in node_order}
    for lineno, row in _read_rows(edges_file, EDGES_HEADER):
        net_id, src, dst = row
        if net_id not in node_index:
            raise ParseError(edges_file, lineno, f"unknown network_id {net_id}")
        idx = node_index[net_id]
        if src not in idx or dst not in idx:
            missing = src if src not in idx else dst
            raise ValidationError(
                f"{edges_file}:{lineno}: network {net_id}: node {missing!r} "
                "not in attributes file")
        i, j = idx[src], idx[dst]
        if i == j:
            raise ValidationError(f"{edges_file}:{lineno}: self-loop {src}->{dst} in {net_id}")
        if (i, j) in ties[net_id]:
            raise ValidationError(f"{edges_file}:{lineno}: duplicate tie {src}->{dst} in {net_id}")
        ties[net_id].add((i, j))

    ratings: dict[str, list[tuple[int, int, int]]] = {k: [] for k in node_order}
    if ratings_file is not None:
        for lineno, row in _read_rows(ratings_file, RATINGS_HEADER):
            net_id, rater, target, score_text = row
            if net_id not in node_index:
                raise ParseError(ratings_file, lineno, f"unknown network_id {net_id}")
            idx = node_index[net_id]
            if rater not in idx or target not in idx:
                missing = rater if rater not in idx else target
                raise ValidationError(
                    f"{ratings_file}:{lineno}: network {net_id}: node {missing!r} "
                    "not in attributes file")
            score = _parse_cell(ratings_file, lineno, score_text, 1, 5, "score")
            if np.isnan(score):
                raise ParseError(ratings_file, lineno, "score may not be empty")
            ratings[net_id].append((idx[rater], idx[target], int(score)))

    batch = []
    for net_id, ids in node_order.items():
        country, wave = meta[net_id]
        net = DirectedNetwork(
            network_id=net_id,
            node_ids=tuple(ids),
            ties=frozenset(ties[net_id]),
            country=country,
            wave=wave,
        )
        female = np.array([r[0] for r in attr_rows[net_id]])
        items = np.array([r[1] for r in attr_rows[net_id]])
        if net_id in derived_rows:
            dv = np.array(derived_rows[net_id])
            attrs = AttributeTable(female=female, skill_items=items,
                                   skills=dv[:, 0], perceived_skills=dv[:, 1])
        else:
            attrs = AttributeTable(female=female, skill_items=items)
        batch.append((net, attrs, RatingEdgeList(ratings[net_id])))
    return batch


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and np.isnan(v)):
        return ""
    if float(v) == int(v):
        return str(int(v))
    return format(float(v), ".10g")


def write_batch(batch, edges_file, attributes_file, ratings_file=None, derived=False):
    """Write a batch back to the CSV schemas; inverse of load_batch.

    With derived=True the attributes file carries the extra skills and
    perceived_skills columns.
    """
    with open(edges_file, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(EDGES_HEADER)
        for net, _, _ in batch:
            for i, j in sorted(net.ties):
                w.writerow([net.network_id, net.node_ids[i], net.node_ids[j]])

    header = ATTRIBUTES_HEADER + (DERIVED_COLS if derived else [])
    with open(attributes_file, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for net, attrs, _ in batch:
            for k, node_id in enumerate(net.node_ids):
                row = [net.network_id, node_id, net.country, net.wave,
                       _fmt(attrs.female[k])]
                row += [_fmt(v) for v in attrs.skill_items[k]]
                if derived:
                    row += [_fmt(attrs.skills[k]), _fmt(attrs.perceived_skills[k])]
                w.writerow(row)

    if ratings_file is not None:
        with open(ratings_file, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(RATINGS_HEADER)
            for net, _, ratings in batch:
                for rater, target, score in sorted(ratings.triples):
                    w.writerow([net.network_id, net.node_ids[rater],
                                net.node_ids[target], score])


def derive_perceived_skills(network: DirectedNetwork, ratings: RatingEdgeList) -> np.ndarray:
    """Mean of incoming 1..5 ratings per node, rescaled to [0,1] via (mean-1)/4.

    Nodes with no incoming ratings get NaN.
    """
    totals = np.zeros(network.n)
    counts = np.zeros(network.n)
    for _, target, score in ratings.triples:
        totals[target] += score
        counts[target] += 1
    out = np.full(network.n, np.nan)
    got = counts > 0
    out[got] = (totals[got] / counts[got] - 1.0) / 4.0
    return out


def derive_composite_skills(items, zero_as_missing: bool = False) -> float:
    """Composite digital-skill score in [0,1] from the 21 ordinal items.

    Responses of 0 ("don't understand") recode to 1, or to missing with
    zero_as_missing. The mean of non-missing recoded items is rescaled via
    (mean-1)/4. Returns NaN when more than half the items are missing.
    """
    items = np.asarray(items, dtype=float)
    if items.shape != (N_SKILL_ITEMS,):
        raise ValidationError(f"expected {N_SKILL_ITEMS} items, got {items.shape}")
    vals = items.copy()
    if zero_as_missing:
        vals[vals == 0] = np.nan
    else:
        vals[vals == 0] = 1.0
    obs = ~np.isnan(vals)
    if obs.sum() < N_SKILL_ITEMS / 2:
        return float("nan")
    return float((vals[obs].mean() - 1.0) / 4.0)


def derive_all(network: DirectedNetwork, attrs: AttributeTable, ratings: RatingEdgeList,
               zero_as_missing: bool = False) -> AttributeTable:
    """Fill the skills and perceived_skills columns of a copy of attrs."""
    out = attrs.copy()
    out.skills = np.array([
        derive_composite_skills(attrs.skill_items[k], zero_as_missing=zero_as_missing)
        for k in range(attrs.n)
    ])
    out.perceived_skills = derive_perceived_skills(network, ratings)
    return out


def describe(network: DirectedNetwork) -> dict:
    """Edge count, density, reciprocated dyad count, mean out-degree."""
    n = network.n
    if n < 2:
        raise DegenerateNetworkError(f"{network.network_id}: n={n} < 2")
    edge_count = len(network.ties)
    reciprocated = sum(1 for i, j in network.ties if i < j and (j, i) in network.ties)
    return {
        "edge_count": edge_count,
        "density": edge_count / (n * (n - 1)),
        "reciprocated_dyad_count": reciprocated,
        "mean_outdegree": edge_count / n,
    }
