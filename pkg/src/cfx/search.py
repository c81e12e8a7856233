"""Enumeration of counterfactual explanations.

Given a label-1 entity, the search walks candidate entities and keeps those
the admissibility filter lets through and the classifier maps to 0. Two
modes produce identical results:

* ``levelwise`` explores Hamming distance k = 1, 2, ... and is the default;
  when only minimum-distance answers are wanted it stops at the first level
  with hits, so it issues at most sum(level sizes up to d*) queries.
* ``exhaustive`` sweeps the whole product space once; it exists as the
  plain-stupid oracle the clever mode is checked against.

Candidate order is deterministic: index sets lexicographically, then value
combinations in domain order. Results come back sorted the same way.

A search may be truncated by ``max_cardinality`` or ``budget``; the result
then carries ``exhausted=False`` and its minimality flags describe only the
explored region. Results of an early-stopped minimum-distance walk are
authoritative despite the stop: every level below the hit level was explored
empty, so nothing smaller can exist.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import combinations, product
from typing import Iterator, Sequence

from . import constrain
from .errors import EngineError, InputError, NothingToExplainError
from .schema import Entity, Explanation, FeatureSchema, diff

LEVELWISE = "levelwise"
EXHAUSTIVE = "exhaustive"


class SearchTruncatedError(EngineError):
    """A minimality query ran against a truncated (non-authoritative) search."""


@dataclass(frozen=True)
class SearchConfig:
    max_cardinality: int | None = None
    budget: int | None = None
    mode: str = LEVELWISE
    jobs: int = 1

    def __post_init__(self) -> None:
        if self.mode not in (LEVELWISE, EXHAUSTIVE):
            raise InputError(f"unknown search mode {self.mode!r}")
        if self.max_cardinality is not None and self.max_cardinality < 1:
            raise InputError("max_cardinality must be >= 1")
        if self.budget is not None and self.budget < 1:
            raise InputError("budget must be >= 1")
        if self.jobs < 1:
            raise InputError("jobs must be >= 1")


@dataclass
class SearchStats:
    classifier_calls: int = 0
    levels_explored: int = 0


@dataclass
class SearchResult:
    """Counterfactual explanations for one entity, with minimality flags."""

    entity: Entity
    explanations: list[Explanation]
    s_flags: list[bool]
    c_flags: list[bool]
    stats: SearchStats
    exhausted: bool

    def __post_init__(self) -> None:
        # every cardinality-minimal explanation must be subset-minimal
        assert all(s or not c for s, c in zip(self.s_flags, self.c_flags))

    @property
    def counterfactuals(self) -> list[Entity]:
        return [x.counterfactual for x in self.explanations]

    @property
    def s_set(self) -> list[Explanation]:
        return [x for x, keep in zip(self.explanations, self.s_flags) if keep]

    @property
    def c_set(self) -> list[Explanation]:
        return [x for x, keep in zip(self.explanations, self.c_flags) if keep]

    @property
    def min_cardinality(self) -> int | None:
        if not self.explanations:
            return None
        return self.explanations[0].cardinality

    @property
    def no_counterfactual(self) -> bool:
        """Definitively nothing to reach: empty and nothing was truncated."""
        return not self.explanations and self.exhausted

    def to_json_dict(self, schema: FeatureSchema) -> dict:
        return {
            "entity": self.entity.id,
            "values": list(self.entity.values),
            "explanations": [
                {
                    "changed": {schema.feature(i).name: v for i, v in x.changed},
                    "counterfactual": list(x.counterfactual.values),
                    "cardinality": x.cardinality,
                    "s_minimal": s,
                    "c_minimal": c,
                }
                for x, s, c in zip(self.explanations, self.s_flags, self.c_flags)
            ],
            "min_cardinality": self.min_cardinality,
            "no_counterfactual": self.no_counterfactual,
            "stats": {
                "classifier_calls": self.stats.classifier_calls,
                "levels_explored": self.stats.levels_explored,
            },
            "exhausted": self.exhausted,
        }


def explanation_sort_key(schema: FeatureSchema):
    """Canonical order: cardinality, index set, then domain positions."""

    def key(x: Explanation):
        idxs = tuple(i for i, _ in x.changed)
        positions = tuple(
            schema.feature(i).rank(x.counterfactual.values[i]) for i in idxs
        )
        return (x.cardinality, idxs, positions)

    return key


class _Budget:
    def __init__(self, limit: int | None):
        self.limit = limit
        self.used = 0
        self.hit = False

    def take(self, want: int) -> int:
        """Grant up to ``want`` calls; mark truncation when short."""
        if self.limit is None:
            self.used += want
            return want
        left = self.limit - self.used
        if want > left:
            self.hit = True
        granted = max(0, min(want, left))
        self.used += granted
        return granted


def _level_candidates(
    schema: FeatureSchema, values: tuple[str, ...], k: int
) -> Iterator[tuple[str, ...]]:
    n = len(schema)
    for idxs in combinations(range(n), k):
        alternatives = [
            [v for v in schema.feature(i).domain if v != values[i]] for i in idxs
        ]
        for combo in product(*alternatives):
            cand = list(values)
            for i, v in zip(idxs, combo):
                cand[i] = v
            yield tuple(cand)


def _labels(classifier, cands: Sequence[tuple[str, ...]], jobs: int) -> list[int]:
    if jobs <= 1 or len(cands) <= 1:
        return [classifier.label(c) for c in cands]
    # completion order may vary; map() restores generation order
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(classifier.label, cands))


def enumerate_counterfactuals(
    schema: FeatureSchema,
    classifier,
    entity: Entity,
    constraints: constrain.ConstraintSet | None = None,
    config: SearchConfig | None = None,
    *,
    stop_at_first_hit: bool = False,
) -> SearchResult:
    """All admissible label-0 entities within the configured distance bound.

    ``stop_at_first_hit`` ends the walk after the first Hamming level that
    produced hits, which is everything a minimum-cardinality query needs.
    """
    cfg = config or SearchConfig()
    cs = constraints or constrain.empty(schema)
    schema.check_entity(entity)
    n = len(schema)
    bound = n if cfg.max_cardinality is None else min(cfg.max_cardinality, n)

    budget = _Budget(cfg.budget)
    stats = SearchStats()

    if budget.take(1) < 1:
        raise InputError("budget too small for the initial classification")
    stats.classifier_calls += 1
    if classifier.label(entity.values) != 1:
        raise NothingToExplainError(
            f"entity {entity.id!r} already has label 0; nothing to explain"
        )

    hits: list[tuple[str, ...]] = []
    stopped_early = False

    if cfg.mode == EXHAUSTIVE:
        stats.levels_explored = bound
        for cand in schema.iter_space():
            if cand == entity.values:
                continue
            distance = sum(1 for a, b in zip(cand, entity.values) if a != b)
            if distance > bound:
                continue
            if not cs.admissible(entity.values, cand):
                continue
            if budget.take(1) < 1:
                break
            stats.classifier_calls += 1
            if classifier.label(cand) == 0:
                hits.append(cand)
    else:
        for k in range(1, bound + 1):
            stats.levels_explored = k
            admissible = [
                cand
                for cand in _level_candidates(schema, entity.values, k)
                if cs.admissible(entity.values, cand)
            ]
            granted = budget.take(len(admissible))
            batch = admissible[:granted]
            stats.classifier_calls += len(batch)
            labels = _labels(classifier, batch, cfg.jobs)
            hits.extend(c for c, lab in zip(batch, labels) if lab == 0)
            if budget.hit:
                break
            if stop_at_first_hit and hits:
                stopped_early = True
                break

    if budget.hit:
        exhausted = False
    elif stopped_early:
        # Levels below the hit level were explored empty, so both minimality
        # notions are settled by what was found.
        exhausted = True
    else:
        exhausted = bound == n

    explanations = sorted(
        (diff(schema, entity, Entity(id=entity.id, values=cand)) for cand in hits),
        key=explanation_sort_key(schema),
    )
    index_sets = [x.changed_indices for x in explanations]
    s_flags = [not any(other < mine for other in index_sets) for mine in index_sets]
    dstar = explanations[0].cardinality if explanations else None
    c_flags = [x.cardinality == dstar for x in explanations]

    return SearchResult(
        entity=entity,
        explanations=explanations,
        s_flags=s_flags,
        c_flags=c_flags,
        stats=stats,
        exhausted=exhausted,
    )


def c_explanations(
    schema: FeatureSchema,
    classifier,
    entity: Entity,
    constraints: constrain.ConstraintSet | None = None,
    config: SearchConfig | None = None,
) -> list[Explanation]:
    """All counterfactual explanations at the minimum Hamming distance.

    An empty list is definitive: the (constrained) space holds no label-0
    entity. Raises :class:`SearchTruncatedError` if a budget or cardinality
    bound cut the walk short of an authoritative answer.
    """
    result = enumerate_counterfactuals(
        schema, classifier, entity, constraints, config, stop_at_first_hit=True
    )
    if not result.exhausted:
        raise SearchTruncatedError(
            "search truncated before minimality could be established; "
            "raise the budget/bound or use enumerate_counterfactuals"
        )
    return result.c_set


def s_explanations(
    schema: FeatureSchema,
    classifier,
    entity: Entity,
    constraints: constrain.ConstraintSet | None = None,
    config: SearchConfig | None = None,
) -> list[Explanation]:
    """Subset-minimal counterfactual explanations (needs a full enumeration)."""
    result = enumerate_counterfactuals(schema, classifier, entity, constraints, config)
    if not result.exhausted:
        raise SearchTruncatedError(
            "search truncated; subset-minimality against the full space "
            "cannot be certified"
        )
    return result.s_set
