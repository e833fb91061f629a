import numpy as np
import pytest

from mshine import GraphFormatError, export_graph, load_graph, schema_of

from conftest import make_graph, random_nodes_edges, write_graph


class TestLoadGraph:
    def test_minimal_graph(self, tmp_path):
        g = make_graph(tmp_path, [("u1", "U"), ("m1", "M")], [("u1", "m1", "UM")])
        assert g.n_nodes == 2
        assert g.n_edges == 1
        s = schema_of(g)
        assert s.node_types == frozenset({"U", "M"})
        assert s.edge_types == {"UM": ("M", "U")}

    def test_ids_follow_file_order_and_labels_kept(self, tmp_path):
        g = make_graph(tmp_path, [("b", "T"), ("a", "T"), ("c", "T")], [])
        assert g.labels == ["b", "a", "c"]
        assert g.label_to_id["a"] == 1

    def test_unknown_node_reports_line_number(self, tmp_path):
        nf, ef = write_graph(tmp_path, [("u1", "U"), ("m1", "M")],
                             [("u1", "m1", "UM"), ("u1", "ghost", "UM")])
        with pytest.raises(GraphFormatError, match=r":2: .*ghost"):
            load_graph(nf, ef)

    def test_malformed_line_reports_line_number(self, tmp_path):
        nf = tmp_path / "n.tsv"
        nf.write_text("u1\tU\nbroken-line\n")
        ef = tmp_path / "e.tsv"
        ef.write_text("")
        with pytest.raises(GraphFormatError, match=r":2: expected 2"):
            load_graph(nf, ef)

    def test_inconsistent_edge_type_endpoints(self, tmp_path):
        nf, ef = write_graph(tmp_path,
                             [("u1", "U"), ("m1", "M"), ("a1", "A")],
                             [("u1", "m1", "X"), ("u1", "a1", "X")])
        with pytest.raises(GraphFormatError, match=r":2: edge type 'X'"):
            load_graph(nf, ef)

    def test_duplicate_edges_deduplicated_silently(self, tmp_path):
        g = make_graph(tmp_path, [("u1", "U"), ("m1", "M")],
                       [("u1", "m1", "UM"), ("m1", "u1", "UM"), ("u1", "m1", "UM")])
        assert g.n_edges == 1

    def test_parallel_edges_with_distinct_types_kept(self, tmp_path):
        g = make_graph(tmp_path, [("u1", "U"), ("u2", "U")],
                       [("u1", "u2", "FRIEND"), ("u1", "u2", "FOLLOWS")])
        assert g.n_edges == 2

    def test_comments_and_blank_lines_ignored(self, tmp_path):
        nf = tmp_path / "n.tsv"
        nf.write_text("# header\nu1\tU\n\nm1\tM\n")
        ef = tmp_path / "e.tsv"
        ef.write_text("# edges\nu1\tm1\tUM\n")
        g = load_graph(nf, ef)
        assert g.n_nodes == 2 and g.n_edges == 1

    def test_bad_type_name_rejected(self, tmp_path):
        nf, ef = write_graph(tmp_path, [("u1", "U-X")], [])
        with pytest.raises(GraphFormatError, match="invalid node type"):
            load_graph(nf, ef)

    def test_duplicate_node_label_rejected(self, tmp_path):
        nf, ef = write_graph(tmp_path, [("u1", "U"), ("u1", "U")], [])
        with pytest.raises(GraphFormatError, match="duplicate node label"):
            load_graph(nf, ef)


class TestNeighborsByType:
    def test_middle_of_path_grouped_by_type(self, tmp_path):
        # brute-force adjacency oracle on a 3-node path a - b - c
        g = make_graph(tmp_path, [("a", "A"), ("b", "B"), ("c", "C")],
                       [("a", "b", "AB"), ("b", "c", "BC")])
        b = g.label_to_id["b"]
        got_a = [n for n, _ in g.neighbors_by_type(b, "A")]
        got_c = [n for n, _ in g.neighbors_by_type(b, "C")]
        assert got_a == [g.label_to_id["a"]]
        assert got_c == [g.label_to_id["c"]]

    def test_movie_actor_neighbors(self, movie_graph):
        g = movie_graph
        m1 = g.label_to_id["M1"]
        actors = {n for n, _ in g.neighbors_by_type(m1, "A")}
        assert {g.label_to_id["A1"], g.label_to_id["A2"]} <= actors

    def test_isolated_node_empty(self, tmp_path):
        g = make_graph(tmp_path, [("x", "A"), ("y", "A")], [])
        assert g.neighbors_by_type(0, "A") == []

    def test_unknown_type_raises(self, movie_graph):
        with pytest.raises(KeyError):
            movie_graph.neighbors_by_type(0, "NOPE")
        with pytest.raises(KeyError):
            movie_graph.neighbors_by_type(0, 99)


class TestSchemaOf:
    def test_movie_schema(self, movie_graph):
        s = schema_of(movie_graph)
        assert s.node_types == frozenset({"U", "M", "A", "G", "D"})
        assert set(s.edge_types) == {"MU", "MA", "MD", "MG"}
        assert s.edge_types["MA"] == ("A", "M")

    def test_single_node_graph(self, tmp_path):
        g = make_graph(tmp_path, [("x", "A")], [])
        s = schema_of(g)
        assert s.node_types == frozenset({"A"})
        assert s.edge_types == {}

    def test_self_pair_edge_type(self, tmp_path):
        g = make_graph(tmp_path,
                       [("p1", "P"), ("p2", "P"), ("t1", "T"), ("a1", "A")],
                       [("p1", "p2", "PP"), ("p1", "t1", "PT"), ("p2", "a1", "PA")])
        s = schema_of(g)
        assert s.edge_types["PP"] == ("P", "P")
        assert set(s.edge_types) == {"PP", "PT", "PA"}


class TestInvariants:
    def test_degree_equals_sum_over_types(self, tmp_path, rng):
        for trial in range(10):
            nodes, edges = random_nodes_edges(rng)
            g = make_graph(tmp_path, nodes, edges, prefix=f"deg{trial}_")
            for v in range(g.n_nodes):
                total = sum(len(g.neighbors_by_type(v, t))
                            for t in g.node_type_names)
                assert total == g.degrees[v]

    def test_adjacency_symmetry_random_graphs(self, tmp_path, rng):
        for trial in range(10):
            nodes, edges = random_nodes_edges(rng)
            g = make_graph(tmp_path, nodes, edges, prefix=f"sym{trial}_")
            for v in range(g.n_nodes):
                for t in g.node_type_names:
                    for nbr, e in g.neighbors_by_type(v, t):
                        back = g.neighbors_by_type(nbr, g.type_name_of(v))
                        assert (v, e) in back

    def test_adjacency_partitioned_by_type(self, tmp_path, rng):
        nodes, edges = random_nodes_edges(rng)
        g = make_graph(tmp_path, nodes, edges)
        for v in range(g.n_nodes):
            for t in g.node_type_names:
                for nbr, _ in g.neighbors_by_type(v, t):
                    assert g.type_name_of(nbr) == t

    def test_round_trip(self, tmp_path, rng):
        nodes, edges = random_nodes_edges(rng, n_nodes=30, n_edges=60)
        g = make_graph(tmp_path, nodes, edges)
        export_graph(g, tmp_path / "out_nodes.tsv", tmp_path / "out_edges.tsv")
        g2 = load_graph(tmp_path / "out_nodes.tsv", tmp_path / "out_edges.tsv")
        orig = {(g.labels[u], g.labels[v], g.edge_type_names[e]) for u, v, e in g.edges}
        back = {(g2.labels[u], g2.labels[v], g2.edge_type_names[e]) for u, v, e in g2.edges}
        assert orig == back
        assert g.labels == g2.labels

    def test_nodes_by_type_partition(self, movie_graph):
        g = movie_graph
        seen = np.concatenate([g.nodes_by_type[t] for t in range(len(g.node_type_names))])
        assert sorted(seen.tolist()) == list(range(g.n_nodes))
