"""Typed undirected multigraph with a per-(node, neighbor-type) adjacency index.

Input files are tab-separated UTF-8 text:

* node file: ``<label>\\t<node_type_name>`` per line
* edge file: ``<src_label>\\t<dst_label>\\t<edge_type_name>`` per line

Lines starting with ``#`` and blank lines are ignored in both files. Node ids
are re-indexed densely in node-file order; original labels are kept for all
exports. Type names are restricted to ``[A-Za-z0-9_]+`` so that meta-path
identifiers (dash-joined type names) stay unambiguous.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

_TYPE_NAME_RE = re.compile(r"^[A-Za-z0-9_]+$")


class GraphFormatError(ValueError):
    """Raised for malformed or inconsistent graph input data."""


def _fail(path, lineno, msg):
    raise GraphFormatError(f"{path}:{lineno}: {msg}")


@dataclass(frozen=True)
class Schema:
    """Type-level template of a graph: node types plus typed edge endpoints.

    ``edge_types`` maps each edge-type name to its unordered endpoint pair
    (stored sorted). Self-pairs such as ``("P", "P")`` are allowed.
    """

    node_types: frozenset[str]
    edge_types: dict[str, tuple[str, str]]

    def __post_init__(self):
        for name, pair in self.edge_types.items():
            a, b = pair
            if (a, b) != tuple(sorted(pair)):
                object.__setattr__(
                    self, "edge_types", {k: tuple(sorted(v)) for k, v in self.edge_types.items()}
                )
                break
        for name, (a, b) in self.edge_types.items():
            if a not in self.node_types or b not in self.node_types:
                raise GraphFormatError(
                    f"edge type {name!r} references unknown node type ({a!r}, {b!r})"
                )

    def incident(self, node_type: str) -> list[tuple[str, str]]:
        """Sorted (edge_type, other_endpoint_type) pairs touching ``node_type``."""
        out = []
        for e, (a, b) in self.edge_types.items():
            if a == node_type:
                out.append((e, b))
            if b == node_type and a != b:
                out.append((e, a))
        return sorted(out)

    def endpoint_pair(self, edge_type: str) -> tuple[str, str]:
        try:
            return self.edge_types[edge_type]
        except KeyError:
            raise KeyError(f"unknown edge type {edge_type!r}") from None


class TypedGraph:
    """Immutable undirected typed multigraph over dense integer node ids.

    The adjacency index is partitioned by neighbor node type: for node ``v``
    and node-type id ``t``, ``_adj[v][t]`` is a sorted list of
    ``(neighbor, edge_type_id)`` pairs. At most one edge per
    ``(u, v, edge_type)`` triple exists; parallel edges with distinct edge
    types are permitted.
    """

    def __init__(self, labels, node_type_ids, node_type_names, edge_type_names,
                 edge_type_pairs, edges):
        self.labels: list[str] = labels
        self.label_to_id: dict[str, int] = {lb: i for i, lb in enumerate(labels)}
        self.node_type_ids: np.ndarray = np.asarray(node_type_ids, dtype=np.int64)
        self.node_type_names: list[str] = node_type_names
        self.type_name_to_id: dict[str, int] = {n: i for i, n in enumerate(node_type_names)}
        self.edge_type_names: list[str] = edge_type_names
        self.edge_name_to_id: dict[str, int] = {n: i for i, n in enumerate(edge_type_names)}
        # endpoint pairs as sorted node-type-id tuples, one per edge type
        self.edge_type_pairs: list[tuple[int, int]] = edge_type_pairs
        # canonical edge set: (min(u,v), max(u,v), edge_type_id)
        self.edges: set[tuple[int, int, int]] = edges

        n = len(labels)
        self._adj: list[dict[int, list[tuple[int, int]]]] = [dict() for _ in range(n)]
        for u, v, e in sorted(edges):
            self._add_half(u, v, e)
            if u != v:
                self._add_half(v, u, e)
        for per_node in self._adj:
            for lst in per_node.values():
                lst.sort()
        self.nodes_by_type: dict[int, np.ndarray] = {
            t: np.flatnonzero(self.node_type_ids == t) for t in range(len(node_type_names))
        }
        self.degrees: np.ndarray = np.zeros(n, dtype=np.int64)
        for v in range(n):
            self.degrees[v] = sum(len(lst) for lst in self._adj[v].values())

    def _add_half(self, u, v, e):
        t = int(self.node_type_ids[v])
        self._adj[u].setdefault(t, []).append((v, e))

    # -- basic accessors -------------------------------------------------

    @property
    def n_nodes(self) -> int:
        return len(self.labels)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def type_of(self, v: int) -> int:
        return int(self.node_type_ids[v])

    def type_name_of(self, v: int) -> str:
        return self.node_type_names[self.type_of(v)]

    def has_edge(self, u: int, v: int, edge_type_id: int) -> bool:
        a, b = (u, v) if u <= v else (v, u)
        return (a, b, edge_type_id) in self.edges

    def neighbors_by_type(self, v: int, node_type) -> list[tuple[int, int]]:
        """Neighbors of ``v`` with the given node type, as (node, edge_type_id).

        ``node_type`` may be a type name or a type id. Returns an empty list
        when ``v`` has no such neighbors; raises KeyError for an unknown type.
        """
        if not 0 <= v < self.n_nodes:
            raise KeyError(f"unknown node id {v}")
        t = self._resolve_type(node_type)
        return self._adj[v].get(t, [])

    def _resolve_type(self, node_type) -> int:
        if isinstance(node_type, str):
            if node_type not in self.type_name_to_id:
                raise KeyError(f"unknown node type {node_type!r}")
            return self.type_name_to_id[node_type]
        t = int(node_type)
        if not 0 <= t < len(self.node_type_names):
            raise KeyError(f"unknown node type id {t}")
        return t


def load_graph(node_file, edge_file) -> TypedGraph:
    """Load and validate a typed graph from node and edge files.

    Duplicate (u, v, edge_type) lines are dropped silently, first occurrence
    wins. Any structural inconsistency raises GraphFormatError with the
    offending file and line number.
    """
    labels: list[str] = []
    label_to_id: dict[str, int] = {}
    node_type_names: list[str] = []
    type_name_to_id: dict[str, int] = {}
    node_type_ids: list[int] = []

    with open(node_file, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                _fail(node_file, lineno, f"expected 2 tab-separated fields, got {len(parts)}")
            label, tname = parts[0].strip(), parts[1].strip()
            if not label:
                _fail(node_file, lineno, "empty node label")
            if not _TYPE_NAME_RE.match(tname):
                _fail(node_file, lineno,
                      f"invalid node type name {tname!r} (must match [A-Za-z0-9_]+)")
            if label in label_to_id:
                _fail(node_file, lineno, f"duplicate node label {label!r}")
            if tname not in type_name_to_id:
                type_name_to_id[tname] = len(node_type_names)
                node_type_names.append(tname)
            label_to_id[label] = len(labels)
            labels.append(label)
            node_type_ids.append(type_name_to_id[tname])

    if not labels:
        raise GraphFormatError(f"{node_file}: no nodes")

    edge_type_names: list[str] = []
    edge_name_to_id: dict[str, int] = {}
    edge_type_pairs: list[tuple[int, int]] = []
    edges: set[tuple[int, int, int]] = set()

    with open(edge_file, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                _fail(edge_file, lineno, f"expected 3 tab-separated fields, got {len(parts)}")
            src, dst, ename = (p.strip() for p in parts)
            if not _TYPE_NAME_RE.match(ename):
                _fail(edge_file, lineno,
                      f"invalid edge type name {ename!r} (must match [A-Za-z0-9_]+)")
            if src not in label_to_id:
                _fail(edge_file, lineno, f"edge references unknown node {src!r}")
            if dst not in label_to_id:
                _fail(edge_file, lineno, f"edge references unknown node {dst!r}")
            u, v = label_to_id[src], label_to_id[dst]
            pair = tuple(sorted((node_type_ids[u], node_type_ids[v])))
            if ename not in edge_name_to_id:
                edge_name_to_id[ename] = len(edge_type_names)
                edge_type_names.append(ename)
                edge_type_pairs.append(pair)
            else:
                expected = edge_type_pairs[edge_name_to_id[ename]]
                if pair != expected:
                    exp = tuple(node_type_names[t] for t in expected)
                    got = tuple(node_type_names[t] for t in pair)
                    _fail(edge_file, lineno,
                          f"edge type {ename!r} connects {got}, previously seen with {exp}")
            e = edge_name_to_id[ename]
            a, b = (u, v) if u <= v else (v, u)
            edges.add((a, b, e))

    return TypedGraph(labels, node_type_ids, node_type_names, edge_type_names,
                      edge_type_pairs, edges)


def schema_of(g: TypedGraph) -> Schema:
    """Derive the schema containing exactly the types present in ``g``."""
    pairs = {}
    for name, (a, b) in zip(g.edge_type_names, g.edge_type_pairs):
        pairs[name] = tuple(sorted((g.node_type_names[a], g.node_type_names[b])))
    return Schema(node_types=frozenset(g.node_type_names), edge_types=pairs)


def neighbors_by_type(g: TypedGraph, v: int, node_type) -> list[tuple[int, int]]:
    """Module-level alias of TypedGraph.neighbors_by_type."""
    return g.neighbors_by_type(v, node_type)


def read_edge_list(path, g: TypedGraph) -> list[tuple[int, int, str]]:
    """Parse an edge file against an existing graph's labels and edge types.

    Used for held-out edge lists: every referenced node and edge type must
    already exist in ``g``. Returns (u, v, edge_type_name) triples.
    """
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                _fail(path, lineno, f"expected 3 tab-separated fields, got {len(parts)}")
            src, dst, ename = (p.strip() for p in parts)
            if src not in g.label_to_id:
                _fail(path, lineno, f"edge references unknown node {src!r}")
            if dst not in g.label_to_id:
                _fail(path, lineno, f"edge references unknown node {dst!r}")
            if ename not in g.edge_name_to_id:
                _fail(path, lineno, f"unknown edge type {ename!r}")
            out.append((g.label_to_id[src], g.label_to_id[dst], ename))
    return out


def read_labels(path, g: TypedGraph) -> dict[int, frozenset[str]]:
    """Parse a labels file: ``<label>\\t<class>[,<class>...]`` per line."""
    out: dict[int, frozenset[str]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                _fail(path, lineno, f"expected 2 tab-separated fields, got {len(parts)}")
            label, classes = parts[0].strip(), parts[1].strip()
            if label not in g.label_to_id:
                _fail(path, lineno, f"unknown node {label!r}")
            names = frozenset(c.strip() for c in classes.split(",") if c.strip())
            if not names:
                _fail(path, lineno, "empty class list")
            out[g.label_to_id[label]] = names
    return out


def export_graph(g: TypedGraph, node_file, edge_file) -> None:
    """Write a graph back to node/edge files (round-trips under load_graph)."""
    with open(node_file, "w", encoding="utf-8") as fh:
        for v in range(g.n_nodes):
            fh.write(f"{g.labels[v]}\t{g.type_name_of(v)}\n")
    with open(edge_file, "w", encoding="utf-8") as fh:
        for u, v, e in sorted(g.edges):
            fh.write(f"{g.labels[u]}\t{g.labels[v]}\t{g.edge_type_names[e]}\n")
