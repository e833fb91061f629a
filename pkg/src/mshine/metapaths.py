"""Symmetric meta-paths: decomposition into length-3 context types and selection.

A meta-path here is always palindromic. Walking such a path back and forth
produces a periodic type sequence with period ``len(node_types) - 1``; the set
of consecutive (node, edge, node, edge, node) windows of that sequence is the
path's *triple set*. Two meta-paths with equal triple sets train identical
representations, so selection dedupes on triple sets and keeps only paths
whose triple set is minimal under strict inclusion. On the reference movie,
bibliography and review schemas this yields 15/6/6/10/10 initial paths.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

from .hin import Schema


class TripleType(NamedTuple):
    """Type of a three-element walk: (prev, edge_a, mid, edge_b, next)."""

    prev: str
    edge_a: str
    mid: str
    edge_b: str
    next: str

    @property
    def id(self) -> str:
        return "-".join(self)

    def reversed(self) -> "TripleType":
        return TripleType(self.next, self.edge_b, self.mid, self.edge_a, self.prev)


@dataclass(frozen=True)
class MetaPath:
    """A palindromic sequence of node types joined by schema edge types."""

    node_types: tuple[str, ...]
    edge_types: tuple[str, ...]

    def __post_init__(self):
        if len(self.edge_types) != len(self.node_types) - 1:
            raise ValueError("edge type count must be node type count - 1")
        if len(self.node_types) < 2:
            raise ValueError("a meta-path needs at least one edge")
        if self.node_types != tuple(reversed(self.node_types)) or \
                self.edge_types != tuple(reversed(self.edge_types)):
            raise ValueError(f"meta-path {self._interleave()} is not symmetric")

    def _interleave(self) -> str:
        parts = []
        for i, t in enumerate(self.node_types):
            parts.append(t)
            if i < len(self.edge_types):
                parts.append(self.edge_types[i])
        return "-".join(parts)

    @property
    def id(self) -> str:
        return self._interleave()

    def __len__(self) -> int:
        return len(self.node_types)

    def validate(self, schema: Schema) -> None:
        """Check every step is an edge type of ``schema`` with matching endpoints."""
        for i, e in enumerate(self.edge_types):
            a, b = self.node_types[i], self.node_types[i + 1]
            pair = schema.endpoint_pair(e)
            if tuple(sorted((a, b))) != pair:
                raise ValueError(
                    f"step {a}-{e}-{b} of {self.id} does not match edge type endpoints {pair}"
                )

    @classmethod
    def parse(cls, text: str, schema: Schema) -> "MetaPath":
        """Parse ``text`` as a meta-path over ``schema``.

        Accepts either the full interleaved form ``U-UM-M-UM-U`` (dash or
        whitespace separated) or node types only (``U M U``), in which case
        each consecutive pair must be joined by exactly one schema edge type.
        """
        tokens = [t for t in text.replace("-", " ").split() if t]
        if not tokens:
            raise ValueError("empty meta-path")
        if len(tokens) % 2 == 1 and all(t in schema.node_types for t in tokens[::2]) \
                and all(t in schema.edge_types for t in tokens[1::2]) and len(tokens) >= 3:
            mp = cls(tuple(tokens[::2]), tuple(tokens[1::2]))
        elif all(t in schema.node_types for t in tokens):
            edges = []
            for a, b in zip(tokens, tokens[1:]):
                want = tuple(sorted((a, b)))
                matches = [e for e, pair in schema.edge_types.items() if pair == want]
                if not matches:
                    raise ValueError(f"no edge type joins {a} and {b}")
                if len(matches) > 1:
                    raise ValueError(
                        f"ambiguous edge between {a} and {b} ({matches}); "
                        "spell the meta-path with edge type names"
                    )
                edges.append(matches[0])
            mp = cls(tuple(tokens), tuple(edges))
        else:
            raise ValueError(f"cannot parse meta-path {text!r} against the schema")
        mp.validate(schema)
        return mp


TripleSet = frozenset  # alias: a set of TripleType


def decompose(m: MetaPath) -> frozenset[TripleType]:
    """All triple types occurring in the unrolled periodic walk of ``m``.

    The palindrome repeated end-to-start is periodic with period
    ``len(m) - 1`` in both node and edge types, so the distinct windows are
    exactly those starting at offsets 0 .. period-1.
    """
    if len(m) < 3:
        raise ValueError("decompose requires a meta-path of at least 3 node types")
    period = len(m) - 1
    nodes = m.node_types
    edges = m.edge_types
    out = set()
    for p in range(period):
        out.add(TripleType(
            nodes[p % period], edges[p % period],
            nodes[(p + 1) % period], edges[(p + 1) % period],
            nodes[(p + 2) % period],
        ))
    return frozenset(out)


def _arms(schema: Schema, start: str, max_len: int):
    """All outward walks [(edge, node), ...] from ``start`` up to ``max_len`` steps."""
    results = []
    frontier = [((), start)]
    for _ in range(max_len):
        nxt = []
        for walk, cur in frontier:
            for e, t in schema.incident(cur):
                w2 = walk + ((e, t),)
                nxt.append((w2, t))
                results.append(w2)
        frontier = nxt
    return results


def enumerate_symmetric(schema: Schema, max_half_len: int) -> list[MetaPath]:
    """All palindromic meta-paths with half-length up to ``max_half_len``.

    Half-length counts the edges from the first node type to the center.
    Odd node counts have a center node type; even node counts have a center
    edge, which must be a self-pair edge type. The shortest generated paths
    have 3 node types.
    """
    if max_half_len < 1:
        raise ValueError("max_half_len must be >= 1")
    found = {}
    for center in sorted(schema.node_types):
        for arm in _arms(schema, center, max_half_len):
            nodes = (center,) + tuple(t for _, t in arm)
            edges = tuple(e for e, _ in arm)
            full_nodes = tuple(reversed(nodes[1:])) + nodes
            full_edges = tuple(reversed(edges)) + edges
            mp = MetaPath(full_nodes, full_edges)
            found[mp.id] = mp
    for e, (a, b) in sorted(schema.edge_types.items()):
        if a != b:
            continue
        for arm in _arms(schema, a, max_half_len - 1):
            nodes = (a,) + tuple(t for _, t in arm)
            edges = tuple(e2 for e2, _ in arm)
            full_nodes = tuple(reversed(nodes[1:])) + (a, a) + nodes[1:]
            full_edges = tuple(reversed(edges)) + (e,) + edges
            mp = MetaPath(full_nodes, full_edges)
            found[mp.id] = mp
    return sorted(found.values(), key=lambda m: (len(m), m.id))


def default_half_len(schema: Schema) -> int:
    """Enumeration bound: one appearance per edge type on a half plus a closing step."""
    return len(schema.edge_types) + 1


def select_initial(schema: Schema, max_half_len: int | None = None) -> list[MetaPath]:
    """Select the initial meta-path set for a schema.

    1. enumerate palindromes (symmetry is inherent in the generator);
    2. dedupe by triple-set equality, keeping the shortest path (ties broken
       by lexicographically smaller id);
    3. drop every path whose triple set strictly contains another kept
       path's triple set (redundant composites).

    Output is sorted by canonical id and deterministic for a given schema.
    """
    if not schema.edge_types:
        return []
    if max_half_len is None:
        max_half_len = default_half_len(schema)
    by_set: dict[frozenset, MetaPath] = {}
    for mp in enumerate_symmetric(schema, max_half_len):
        c = decompose(mp)
        cur = by_set.get(c)
        if cur is None or (len(mp), mp.id) < (len(cur), cur.id):
            by_set[c] = mp
    kept = [
        mp for c, mp in by_set.items()
        if not any(other < c for other in by_set if other is not c)
    ]
    return sorted(kept, key=lambda m: m.id)


@dataclass
class TripleIndex:
    """Dense ids for the triple types of a meta-path collection.

    Triple ids are assigned by traversing paths in list order and each path's
    triple set in ascending id-string order, first occurrence wins; the
    assignment is therefore a pure function of the path list. ``path_triples``
    gives, per path, the sorted cycling order used by the batch stream.
    """

    paths: list[MetaPath]
    triples: list[TripleType]
    triple_ids: dict[TripleType, int]
    path_triples: list[list[int]]
    triple_paths: dict[TripleType, list[int]]

    @property
    def n_paths(self) -> int:
        return len(self.paths)

    @property
    def n_triples(self) -> int:
        return len(self.triples)

    def path_id(self, key) -> int:
        """Resolve a path given as index, id string, or MetaPath."""
        if isinstance(key, MetaPath):
            key = key.id
        if isinstance(key, str):
            for i, p in enumerate(self.paths):
                if p.id == key:
                    return i
            raise KeyError(f"unknown meta-path {key!r}")
        i = int(key)
        if not 0 <= i < len(self.paths):
            raise KeyError(f"meta-path index {i} out of range")
        return i


def triple_types_of(paths: list[MetaPath]) -> TripleIndex:
    """Index every triple type of ``paths`` and map it back to its paths."""
    triples: list[TripleType] = []
    triple_ids: dict[TripleType, int] = {}
    path_triples: list[list[int]] = []
    triple_paths: dict[TripleType, list[int]] = {}
    for pid, mp in enumerate(paths):
        members = sorted(decompose(mp), key=lambda t: t.id)
        ids = []
        for t in members:
            if t not in triple_ids:
                triple_ids[t] = len(triples)
                triples.append(t)
            ids.append(triple_ids[t])
            triple_paths.setdefault(t, []).append(pid)
        path_triples.append(sorted(ids, key=lambda i: triples[i].id))
    return TripleIndex(list(paths), triples, triple_ids, path_triples, triple_paths)
