"""Immutable typed property graph with ontology-hierarchy traversal.

The graph is built once from a validated edge list and never mutated;
imputation produces a new graph version. Lookups by ``(node, relation)``
are indexed in both directions, so queries are O(1) amortized and safe to
run from any number of threads.
"""

from __future__ import annotations

import enum
import os
import re
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple, Union

from .triples import (
    KGTK_HEADER,
    KgtkEdgeRow,
    Literal,
    format_number,
    parse_kgtk_edges,
    write_kgtk_edges,
)


class GraphError(Exception):
    pass


class UnknownRelationLabel(GraphError):
    def __init__(self, label: str):
        super().__init__(f"unknown relation label {label!r}")
        self.label = label


class InvalidEdge(GraphError):
    pass


class CycleDetected(GraphError):
    def __init__(self, witness: List[str]):
        super().__init__("subclass_of cycle: " + " -> ".join(witness))
        self.witness = witness


class MultipleParents(GraphError):
    def __init__(self, node: str, parents: List[str]):
        super().__init__(f"{node!r} has multiple parents: {sorted(parents)}")
        self.node = node
        self.parents = parents


class NoParent(GraphError):
    def __init__(self, node: str):
        super().__init__(f"{node!r} has no parent class")
        self.node = node


class UnknownNode(GraphError):
    def __init__(self, node: str):
        super().__init__(f"unknown node {node!r}")
        self.node = node


class NotAnIngredient(GraphError):
    def __init__(self, node: str, kind: str):
        super().__init__(f"{node!r} is a {kind}, not an ingredient")
        self.node = node
        self.kind = kind


class RelationType(enum.Enum):
    """The fixed set of 13 relation types the graph accepts."""

    HAS_INGREDIENT = "has_ingredient"
    SUBCLASS_OF = "subclass_of"
    HAS_WATER_FOOTPRINT = "has_water_footprint"
    HAS_CALORIES = "has_calories"
    HAS_FAT = "has_fat"
    HAS_PROTEIN = "has_protein"
    HAS_CARBOHYDRATE = "has_carbohydrate"
    HAS_SUGAR = "has_sugar"
    HAS_SODIUM = "has_sodium"
    HAS_FIBER = "has_fiber"
    HAS_LABEL = "has_label"
    SAME_AS = "same_as"
    HAS_UNIT = "has_unit"

    @classmethod
    def from_label(cls, label: str) -> "RelationType":
        try:
            return cls(label)
        except ValueError:
            raise UnknownRelationLabel(label) from None


#: relations whose object is a numeric literal (value >= 0)
NUMERIC_RELATIONS: Tuple[RelationType, ...] = (
    RelationType.HAS_WATER_FOOTPRINT,
    RelationType.HAS_CALORIES,
    RelationType.HAS_FAT,
    RelationType.HAS_PROTEIN,
    RelationType.HAS_CARBOHYDRATE,
    RelationType.HAS_SUGAR,
    RelationType.HAS_SODIUM,
    RelationType.HAS_FIBER,
)

#: relations whose object is another node
NODE_RELATIONS = frozenset(
    {RelationType.HAS_INGREDIENT, RelationType.SUBCLASS_OF, RelationType.SAME_AS}
)

#: relations whose object is a string literal
STRING_RELATIONS = frozenset({RelationType.HAS_LABEL, RelationType.HAS_UNIT})

#: nutrient relations and their short names, in canonical order
NUTRIENT_RELATIONS: Tuple[RelationType, ...] = NUMERIC_RELATIONS[1:]

MEASURED = "measured"
IMPUTED = "imputed"


class NodeKind(enum.Enum):
    RECIPE = "recipe"
    INGREDIENT = "ingredient"
    ONTOLOGY_CLASS = "ontology_class"
    NUTRIENT = "nutrient"
    LITERAL = "literal"


@dataclass(frozen=True)
class Node:
    id: str
    kind: NodeKind


@dataclass(frozen=True)
class Edge:
    subject: str
    relation: RelationType
    object: Union[str, Literal]
    provenance: str = MEASURED

    def sort_key(self) -> tuple:
        if isinstance(self.object, Literal):
            obj_key = ("lit", self.object.lexical())
        else:
            obj_key = ("node", self.object)
        return (self.subject, self.relation.value, obj_key, self.provenance)


@dataclass(frozen=True)
class ValueWithProvenance:
    value: float
    provenance: str

    @property
    def imputed(self) -> bool:
        return self.provenance == IMPUTED


@dataclass
class IngredientProfile:
    id: str
    display_name: str
    wf: Optional[ValueWithProvenance]
    nutrients: Dict[str, ValueWithProvenance]
    parent_class: Optional[str]


@dataclass(frozen=True)
class GraphStats:
    node_count: int
    relation_type_count: int
    edge_count: int


def nutrient_name(relation: RelationType) -> str:
    return relation.value[len("has_") :]


def prettify_id(node_id: str) -> str:
    """Human-readable fallback name for a node id."""
    return re.sub(r"[_:]+", " ", node_id).strip()


def _validate(edge: Edge) -> None:
    if not edge.subject:
        raise InvalidEdge("empty subject")
    if edge.provenance not in (MEASURED, IMPUTED):
        raise InvalidEdge(f"bad provenance {edge.provenance!r}")
    obj = edge.object
    if edge.relation in NODE_RELATIONS:
        if not isinstance(obj, str) or not obj:
            raise InvalidEdge(f"{edge.relation.value} requires a node object: {edge}")
    elif edge.relation in STRING_RELATIONS:
        if not isinstance(obj, Literal) or obj.is_numeric:
            raise InvalidEdge(f"{edge.relation.value} requires a string literal: {edge}")
    else:  # numeric relation
        if not isinstance(obj, Literal) or not obj.is_numeric:
            raise InvalidEdge(f"{edge.relation.value} requires a numeric literal: {edge}")
        if obj.value < 0:
            raise InvalidEdge(f"{edge.relation.value} value must be >= 0: {edge}")


class Graph:
    """Built once via :func:`build_graph`; read-only afterwards."""

    def __init__(self, edges: Sequence[Edge]):
        self._edges: List[Edge] = sorted(edges, key=Edge.sort_key)
        self._out: Dict[Tuple[str, RelationType], List[Edge]] = {}
        self._in: Dict[Tuple[str, RelationType], List[Edge]] = {}
        self._kinds: Dict[str, NodeKind] = {}
        self._index()
        self._check_subclass_acyclic()

    # -- construction -----------------------------------------------------

    def _index(self) -> None:
        node_ids: Set[str] = set()
        recipes: Set[str] = set()
        classes: Set[str] = set()
        for edge in self._edges:
            _validate(edge)
            node_ids.add(edge.subject)
            self._out.setdefault((edge.subject, edge.relation), []).append(edge)
            if isinstance(edge.object, str):
                node_ids.add(edge.object)
                self._in.setdefault((edge.object, edge.relation), []).append(edge)
            if edge.relation is RelationType.HAS_INGREDIENT:
                recipes.add(edge.subject)
            elif edge.relation is RelationType.SUBCLASS_OF:
                classes.add(edge.object)
        # Kind inference: recipe beats class beats ingredient; anything not
        # otherwise classified (hierarchy leaves, value-only nodes) is an
        # ingredient.
        for node_id in node_ids:
            if node_id in recipes:
                self._kinds[node_id] = NodeKind.RECIPE
            elif node_id in classes:
                self._kinds[node_id] = NodeKind.ONTOLOGY_CLASS
            else:
                self._kinds[node_id] = NodeKind.INGREDIENT

    def _check_subclass_acyclic(self) -> None:
        state: Dict[str, int] = {}  # 1 = on stack, 2 = done
        for start in sorted(self._kinds):
            if state.get(start):
                continue
            stack = [(start, iter(self._subclass_targets(start)))]
            state[start] = 1
            path = [start]
            while stack:
                node, targets = stack[-1]
                advanced = False
                for target in targets:
                    if state.get(target) == 1:
                        witness = path[path.index(target) :] + [target]
                        raise CycleDetected(witness)
                    if state.get(target) != 2:
                        state[target] = 1
                        path.append(target)
                        stack.append((target, iter(self._subclass_targets(target))))
                        advanced = True
                        break
                if not advanced:
                    state[node] = 2
                    path.pop()
                    stack.pop()

    def _subclass_targets(self, node: str) -> List[str]:
        return [e.object for e in self._out.get((node, RelationType.SUBCLASS_OF), [])]

    # -- queries ----------------------------------------------------------

    @property
    def edges(self) -> List[Edge]:
        return list(self._edges)

    def node_ids(self) -> List[str]:
        return sorted(self._kinds)

    def has_node(self, node_id: str) -> bool:
        return node_id in self._kinds

    def kind(self, node_id: str) -> NodeKind:
        if node_id not in self._kinds:
            raise UnknownNode(node_id)
        return self._kinds[node_id]

    def nodes(self) -> List[Node]:
        return [Node(i, k) for i, k in sorted(self._kinds.items())]

    def ingredient_ids(self) -> List[str]:
        return [i for i in self.node_ids() if self._kinds[i] is NodeKind.INGREDIENT]

    def edges_from(self, node_id: str, relation: RelationType) -> List[Edge]:
        return list(self._out.get((node_id, relation), []))

    def edges_to(self, node_id: str, relation: RelationType) -> List[Edge]:
        return list(self._in.get((node_id, relation), []))

    def parent_of(self, node_id: str) -> Optional[str]:
        """The unique ``subclass_of`` target, or ``None`` for a root."""
        if node_id not in self._kinds:
            raise UnknownNode(node_id)
        targets = self._subclass_targets(node_id)
        if not targets:
            return None
        if len(set(targets)) > 1:
            raise MultipleParents(node_id, targets)
        return targets[0]

    def ancestors(self, node_id: str) -> List[str]:
        """Parent chain from direct parent up to the root."""
        chain = []
        current = self.parent_of(node_id)
        while current is not None:
            chain.append(current)
            current = self.parent_of(current)
        return chain

    def children(self, node_id: str) -> List[str]:
        return sorted(e.subject for e in self._in.get((node_id, RelationType.SUBCLASS_OF), []))

    def siblings(self, node_id: str) -> Set[str]:
        """Ingredient-kind nodes sharing the node's direct parent, minus itself."""
        parent = self.parent_of(node_id)
        if parent is None:
            raise NoParent(node_id)
        return {
            child
            for child in self.children(parent)
            if child != node_id and self._kinds[child] is NodeKind.INGREDIENT
        }

    def descendants_at_depth(self, node_id: str, depth: int) -> Set[str]:
        """Nodes exactly ``depth`` subclass levels below ``node_id``."""
        frontier = {node_id}
        for _ in range(depth):
            frontier = {c for parent in frontier for c in self.children(parent)}
        return frontier

    def _numeric_value(self, node_id: str, relation: RelationType) -> Optional[ValueWithProvenance]:
        edges = self._out.get((node_id, relation), [])
        if not edges:
            return None
        # Measured beats imputed; index order is canonical, so ties are stable.
        chosen = min(edges, key=lambda e: (e.provenance != MEASURED,))
        return ValueWithProvenance(chosen.object.value, chosen.provenance)

    def display_name(self, node_id: str) -> str:
        labels = self._out.get((node_id, RelationType.HAS_LABEL), [])
        if labels:
            return str(labels[0].object.value)
        return prettify_id(node_id)

    def get_profile(self, node_id: str) -> IngredientProfile:
        kind = self.kind(node_id)
        if kind is not NodeKind.INGREDIENT:
            raise NotAnIngredient(node_id, kind.value)
        nutrients = {}
        for relation in NUTRIENT_RELATIONS:
            value = self._numeric_value(node_id, relation)
            if value is not None:
                nutrients[nutrient_name(relation)] = value
        return IngredientProfile(
            id=node_id,
            display_name=self.display_name(node_id),
            wf=self._numeric_value(node_id, RelationType.HAS_WATER_FOOTPRINT),
            nutrients=nutrients,
            parent_class=self.parent_of(node_id),
        )

    def stats(self) -> GraphStats:
        relations = {e.relation for e in self._edges}
        return GraphStats(len(self._kinds), len(relations), len(self._edges))

    # -- persistence --------------------------------------------------------

    def to_kgtk_rows(self) -> List[KgtkEdgeRow]:
        """Canonical KGTK rows; edge ids encode provenance (``m``/``i`` prefix)."""
        rows = []
        for i, edge in enumerate(self._edges, start=1):
            prefix = "i" if edge.provenance == IMPUTED else "m"
            node2 = edge.object.lexical() if isinstance(edge.object, Literal) else edge.object
            rows.append(KgtkEdgeRow(f"{prefix}{i:06d}", edge.subject, edge.relation.value, node2))
        return rows

    def save(self, path: str) -> None:
        """Write the snapshot TSV plus a one-line ``.stats`` sidecar."""
        stats = self.stats()
        tmp = path + ".tmp"
        with open(tmp, "w", encoding="utf-8", newline="") as fh:
            fh.write(write_kgtk_edges(self.to_kgtk_rows()))
        os.replace(tmp, path)
        sidecar = path + ".stats"
        with open(sidecar + ".tmp", "w", encoding="utf-8") as fh:
            fh.write(
                f"nodes={stats.node_count}\trelations={stats.relation_type_count}"
                f"\tedges={stats.edge_count}\n"
            )
        os.replace(sidecar + ".tmp", sidecar)


def edge_from_kgtk_row(row: KgtkEdgeRow) -> Edge:
    """Type a raw KGTK row into a graph edge using the relation's object kind."""
    relation = RelationType.from_label(row.label)
    provenance = IMPUTED if row.id.startswith("i") else MEASURED
    obj: Union[str, Literal]
    if relation in NODE_RELATIONS:
        obj = row.node2
    elif relation in STRING_RELATIONS:
        obj = Literal(row.node2)
    else:
        try:
            obj = Literal(float(row.node2))
        except ValueError:
            raise InvalidEdge(
                f"{relation.value} requires a numeric value, got {row.node2!r}"
            ) from None
    return Edge(row.node1, relation, obj, provenance)


def build_graph(edges: Iterable[Edge]) -> Graph:
    """Validate and index an edge list into an immutable graph."""
    return Graph(list(edges))


def load_graph(path: str) -> Graph:
    """Load a snapshot written by :meth:`Graph.save`; verifies the sidecar."""
    with open(path, encoding="utf-8") as fh:
        rows = parse_kgtk_edges(fh.read())
    graph = build_graph(edge_from_kgtk_row(row) for row in rows)
    sidecar = path + ".stats"
    if os.path.exists(sidecar):
        with open(sidecar, encoding="utf-8") as fh:
            recorded = fh.read().strip()
        stats = graph.stats()
        expected = (
            f"nodes={stats.node_count}\trelations={stats.relation_type_count}"
            f"\tedges={stats.edge_count}"
        )
        if recorded != expected:
            raise GraphError(f"snapshot sidecar mismatch: {recorded!r} != {expected!r}")
    return graph
