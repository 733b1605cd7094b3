"""Substitution algorithm and recipe-level footprint accounting.

A substitute must come from the original's ontology tier and carry a
strictly lower water footprint. Tier means direct-parent siblings first;
when no sibling survives the footprint filter and a grandparent exists,
the search widens to grandparent descendants at the same depth (cousins).
Candidates are ranked by footprint, then nutrient closeness, then id.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Set, Tuple

from .align import LinkTable, normalize_name
from .graph import (
    Graph,
    IngredientProfile,
    NodeKind,
    NoParent,
)


class RecommendError(Exception):
    pass


class NoFootprint(RecommendError):
    def __init__(self, node: str):
        super().__init__(f"{node!r} has no water footprint, measured or imputed")
        self.node = node


class NotARecommendedCandidate(RecommendError):
    def __init__(self, original: str, candidate: str):
        super().__init__(f"{candidate!r} is not a recommended substitute for {original!r}")
        self.original = original
        self.candidate = candidate


@dataclass(frozen=True)
class NutrientDelta:
    name: str
    before: float
    after: float
    delta: float
    imputed: bool


@dataclass(frozen=True)
class Substitution:
    original: str
    candidate: str
    wf_original: float
    wf_candidate: float
    wf_delta: float  # always < 0
    wf_original_imputed: bool
    wf_candidate_imputed: bool
    nutrient_detail: Tuple[NutrientDelta, ...]
    rank: int

    @property
    def nutrient_deltas(self) -> Dict[str, float]:
        return {d.name: d.delta for d in self.nutrient_detail}

    def report(self) -> dict:
        """The delta-report wire shape shared with the HTTP service."""
        return {
            "original": self.original,
            "candidate": self.candidate,
            "wf_before": self.wf_original,
            "wf_after": self.wf_candidate,
            "wf_delta": self.wf_delta,
            "nutrients": [
                {
                    "name": d.name,
                    "before": d.before,
                    "after": d.after,
                    "delta": d.delta,
                    "imputed": d.imputed,
                }
                for d in self.nutrient_detail
            ],
        }


@dataclass
class RecipeAnalysis:
    ingredients: List[IngredientProfile]
    total_wf: float
    options: Dict[str, List[Substitution]]
    unresolved: List[str]
    graph: Graph = field(repr=False, default=None)
    links: Optional[LinkTable] = field(repr=False, default=None)

    def member_ids(self) -> List[str]:
        return [p.id for p in self.ingredients]


def _wf(graph: Graph, node_id: str):
    return graph.get_profile(node_id).wf


def candidate_substitutes(graph: Graph, node_id: str) -> Set[str]:
    """Same-tier ingredients with a strictly lower water footprint.

    Falls back to grandparent cousins (same depth) when no direct sibling
    passes the footprint filter.
    """
    wf = _wf(graph, node_id)
    if wf is None:
        raise NoFootprint(node_id)

    def passes(candidate: str) -> bool:
        if graph.kind(candidate) is not NodeKind.INGREDIENT:
            return False
        candidate_wf = graph.get_profile(candidate).wf
        return candidate_wf is not None and candidate_wf.value < wf.value

    try:
        tier = graph.siblings(node_id)
    except NoParent:
        return set()
    candidates = {c for c in tier if passes(c)}
    if candidates:
        return candidates

    parent = graph.parent_of(node_id)
    grandparent = graph.parent_of(parent) if parent is not None else None
    if grandparent is None:
        return set()
    cousins = graph.descendants_at_depth(grandparent, 2)
    return {c for c in cousins if c != node_id and passes(c)}


def _nutrient_detail(
    original: IngredientProfile, candidate: IngredientProfile
) -> Tuple[NutrientDelta, ...]:
    names = sorted(set(original.nutrients) | set(candidate.nutrients))
    detail = []
    for name in names:
        before = original.nutrients.get(name)
        after = candidate.nutrients.get(name)
        detail.append(
            NutrientDelta(
                name=name,
                before=before.value if before else 0.0,
                after=after.value if after else 0.0,
                delta=(after.value if after else 0.0) - (before.value if before else 0.0),
                imputed=bool(before and before.imputed or after and after.imputed),
            )
        )
    return tuple(detail)


def rank_candidates(graph: Graph, node_id: str, candidates: Set[str]) -> List[Substitution]:
    """Ascending water footprint; ties by L1 nutrient distance, then id."""
    original = graph.get_profile(node_id)
    if original.wf is None:
        raise NoFootprint(node_id)
    scored = []
    for candidate_id in candidates:
        candidate = graph.get_profile(candidate_id)
        detail = _nutrient_detail(original, candidate)
        l1 = sum(abs(d.delta) for d in detail)
        scored.append((candidate.wf.value, l1, candidate_id, candidate, detail))
    scored.sort(key=lambda item: (item[0], item[1], item[2]))
    ranked = []
    for rank, (wf_candidate, _, candidate_id, candidate, detail) in enumerate(scored, start=1):
        ranked.append(
            Substitution(
                original=node_id,
                candidate=candidate_id,
                wf_original=original.wf.value,
                wf_candidate=wf_candidate,
                wf_delta=wf_candidate - original.wf.value,
                wf_original_imputed=original.wf.imputed,
                wf_candidate_imputed=candidate.wf.imputed,
                nutrient_detail=detail,
                rank=rank,
            )
        )
    return ranked


def substitutes_for(graph: Graph, node_id: str) -> List[Substitution]:
    """Candidate search plus ranking in one call."""
    return rank_candidates(graph, node_id, candidate_substitutes(graph, node_id))


# --- name resolution -----------------------------------------------------


def resolve_name(graph: Graph, links: Optional[LinkTable], raw: str) -> Optional[str]:
    """Map a raw recipe ingredient name to a graph node id.

    Cascade: link-table exact entry, graph id, then normalized-name match
    against link-table entries and ingredient display names.
    """
    if links is not None:
        hit = links.resolve(raw)
        if hit is not None and graph.has_node(hit):
            return hit
    if graph.has_node(raw):
        return raw
    normalized = normalize_name(raw)
    if links is not None:
        for key in sorted(links.entries):
            if normalize_name(key) == normalized and graph.has_node(
                links.entries[key].canonical_id
            ):
                return links.entries[key].canonical_id
    for ingredient in graph.ingredient_ids():
        if normalize_name(graph.display_name(ingredient)) == normalized:
            return ingredient
    return None


def analyze_recipe(
    graph: Graph,
    names: Sequence[str],
    links: Optional[LinkTable] = None,
) -> RecipeAnalysis:
    """Resolve names, sum the recipe footprint, rank options per ingredient.

    Unresolvable names are reported, not fatal. Repeated mentions of one
    ingredient collapse to a single recipe member.
    """
    resolved: List[str] = []
    unresolved: List[str] = []
    for raw in names:
        node_id = resolve_name(graph, links, raw)
        if node_id is None:
            if raw not in unresolved:
                unresolved.append(raw)
        elif node_id not in resolved:
            resolved.append(node_id)

    profiles = [graph.get_profile(node_id) for node_id in resolved]
    total_wf = sum(p.wf.value for p in profiles if p.wf is not None)
    options: Dict[str, List[Substitution]] = {}
    for profile in profiles:
        try:
            options[profile.id] = substitutes_for(graph, profile.id)
        except NoFootprint:
            options[profile.id] = []
    return RecipeAnalysis(
        ingredients=profiles,
        total_wf=total_wf,
        options=options,
        unresolved=unresolved,
        graph=graph,
        links=links,
    )


def apply_substitution(
    analysis: RecipeAnalysis, original: str, candidate: str
) -> Tuple[RecipeAnalysis, Substitution]:
    """Swap a recipe member for a recommended candidate.

    Returns the re-analyzed recipe and the delta report for the swap. The
    new total is strictly smaller because only strictly-lower-footprint
    candidates are ever recommended.
    """
    ranked = analysis.options.get(original, [])
    report = next((s for s in ranked if s.candidate == candidate), None)
    if report is None:
        raise NotARecommendedCandidate(original, candidate)
    new_ids = [candidate if node_id == original else node_id for node_id in analysis.member_ids()]
    new_analysis = analyze_recipe(analysis.graph, new_ids, analysis.links)
    new_analysis.unresolved = list(analysis.unresolved)
    return new_analysis, report
