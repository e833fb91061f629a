import numpy as np
import pytest

from mshine import Schema, load_graph

# Reference schemas used throughout the suite (movie, bibliography and
# review domains). Keys are edge type names, values the endpoint type pair.
SCHEMAS = {
    "douban": {"UU": ("U", "U"), "UG": ("G", "U"), "UM": ("M", "U"),
               "MA": ("A", "M"), "MD": ("D", "M")},
    "dblp": {"PA": ("A", "P"), "PV": ("P", "V"), "PT": ("P", "T")},
    "cora": {"PP": ("P", "P"), "PT": ("P", "T"), "PA": ("A", "P")},
    "imdb": {"MU": ("M", "U"), "MA": ("A", "M"), "MD": ("D", "M"),
             "MG": ("G", "M")},
    "yelp": {"CaB": ("B", "Ca"), "CiB": ("B", "Ci"), "BU": ("B", "U"),
             "UU": ("U", "U")},
}
EXPECTED_COUNTS = {"douban": 15, "dblp": 6, "cora": 6, "imdb": 10, "yelp": 10}


def schema_for(name: str) -> Schema:
    edge_types = SCHEMAS[name]
    node_types = frozenset(t for pair in edge_types.values() for t in pair)
    return Schema(node_types, dict(edge_types))


def write_graph(tmp_path, nodes, edges, prefix=""):
    """Write node/edge TSV files; nodes = [(label, type)], edges = [(u, v, etype)]."""
    node_file = tmp_path / f"{prefix}nodes.tsv"
    edge_file = tmp_path / f"{prefix}edges.tsv"
    node_file.write_text("".join(f"{lb}\t{t}\n" for lb, t in nodes), encoding="utf-8")
    edge_file.write_text("".join(f"{u}\t{v}\t{e}\n" for u, v, e in edges),
                         encoding="utf-8")
    return node_file, edge_file


def make_graph(tmp_path, nodes, edges, prefix=""):
    return load_graph(*write_graph(tmp_path, nodes, edges, prefix=prefix))


def movie_nodes_edges():
    """Small movie-style instance: users review movies, movies have actors,
    directors and genres. M1 has actors A1 and A2."""
    nodes = [("U1", "U"), ("U2", "U"), ("U3", "U"),
             ("M1", "M"), ("M2", "M"), ("M3", "M"),
             ("A1", "A"), ("A2", "A"), ("A3", "A"),
             ("D1", "D"), ("D2", "D"),
             ("G1", "G"), ("G2", "G")]
    edges = [("U1", "M1", "MU"), ("U1", "M2", "MU"), ("U2", "M2", "MU"),
             ("U2", "M3", "MU"), ("U3", "M1", "MU"), ("U3", "M3", "MU"),
             ("M1", "A1", "MA"), ("M1", "A2", "MA"), ("M2", "A2", "MA"),
             ("M3", "A3", "MA"), ("M2", "A3", "MA"),
             ("M1", "D1", "MD"), ("M2", "D1", "MD"), ("M3", "D2", "MD"),
             ("M1", "G1", "MG"), ("M2", "G2", "MG"), ("M3", "G1", "MG")]
    return nodes, edges


@pytest.fixture
def movie_graph(tmp_path):
    return make_graph(tmp_path, *movie_nodes_edges())


def random_nodes_edges(rng, n_types=3, n_nodes=20, n_edge_types=3, n_edges=30):
    """Random typed graph instance for property tests."""
    type_names = [f"T{i}" for i in range(n_types)]
    nodes = [(f"n{i}", type_names[int(rng.integers(n_types))]) for i in range(n_nodes)]
    node_type = dict(nodes)
    pair_of = {}
    for e in range(n_edge_types):
        a, b = rng.integers(n_types, size=2)
        pair_of[f"E{e}"] = tuple(sorted((type_names[int(a)], type_names[int(b)])))
    edges = []
    by_type = {}
    for lb, t in nodes:
        by_type.setdefault(t, []).append(lb)
    for _ in range(n_edges):
        ename = f"E{int(rng.integers(n_edge_types))}"
        a, b = pair_of[ename]
        if a not in by_type or b not in by_type:
            continue
        u = by_type[a][int(rng.integers(len(by_type[a])))]
        v = by_type[b][int(rng.integers(len(by_type[b])))]
        if node_type[u] != a or node_type[v] != b:
            continue
        edges.append((u, v, ename))
    return nodes, edges


def community_hin(width: int = 6, stride: int = 4):
    """Synthetic 60-node two-community bipartite instance.

    Two disconnected communities, each with 10 users and 20 movies arranged
    on a ring. Users come in twin pairs sharing a contiguous window of
    ``width`` movies; windows of consecutive pairs advance by ``stride`` so
    neighboring pairs overlap. A held-out review is therefore strongly
    implied by the twin's reviews. Returns (nodes, edges, labels) with the
    community id as every node's label.
    """
    nodes, edges, labels = [], [], {}
    for c in range(2):
        movies = [f"c{c}m{k}" for k in range(20)]
        users = [f"c{c}u{j}" for j in range(10)]
        for m in movies:
            nodes.append((m, "M"))
            labels[m] = f"comm{c}"
        for u in users:
            nodes.append((u, "U"))
            labels[u] = f"comm{c}"
        for j, u in enumerate(users):
            start = (j // 2) * stride
            for t in range(width):
                edges.append((u, movies[(start + t) % 20], "UM"))
    return nodes, edges, labels


def hold_out_edges(edges, edge_type, fraction, rng):
    """Split edges into (training, held_out) by removing ``fraction`` of the
    given type; at most one edge per source node is removed so every query
    keeps most of its context."""
    by_src = {}
    for i, (u, _, e) in enumerate(edges):
        if e == edge_type:
            by_src.setdefault(u, []).append(i)
    sources = sorted(by_src)
    of_type = sum(len(v) for v in by_src.values())
    n_hold = max(1, round(fraction * of_type))
    chosen = [sources[i] for i in rng.choice(len(sources),
                                             size=min(n_hold, len(sources)),
                                             replace=False)]
    held_idx = {by_src[u][int(rng.integers(len(by_src[u])))] for u in chosen}
    train = [e for i, e in enumerate(edges) if i not in held_idx]
    held = [e for i, e in enumerate(edges) if i in held_idx]
    return train, held


def toy_training_graph(tmp_path):
    """8-node heterogeneous fixture with enough structure to learn from."""
    nodes = [("u0", "U"), ("u1", "U"), ("u2", "U"), ("u3", "U"),
             ("m0", "M"), ("m1", "M"), ("m2", "M"), ("m3", "M")]
    edges = [("u0", "m0", "UM"), ("u0", "m1", "UM"), ("u1", "m0", "UM"),
             ("u1", "m1", "UM"), ("u2", "m2", "UM"), ("u2", "m3", "UM"),
             ("u3", "m2", "UM"), ("u3", "m3", "UM"), ("u0", "m2", "UM")]
    return make_graph(tmp_path, nodes, edges, prefix="toy_")


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
