import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ddunwrap.decomposition import (
    Decomposition,
    UnsupportedDecompositionError,
    build_decomposition,
    check_coverage_condition,
    check_cycle_coverage,
    dump_decomposition,
    k5_decomposition,
    make_decomposition,
    parse_dump,
    single_decomposition,
    trace_faces,
)
from ddunwrap.graph import build_cycle_basis, build_grid_graph, complete_graph


def gf2_rank_dense(rows):
    """Plain Gaussian elimination over GF(2) on a 0/1 matrix."""
    m = np.array(rows, dtype=np.uint8) % 2
    rank = 0
    for c in range(m.shape[1] if m.size else 0):
        piv = np.flatnonzero(m[rank:, c]) if rank < m.shape[0] else []
        if len(piv) == 0:
            continue
        p = rank + piv[0]
        m[[rank, p]] = m[[p, rank]]
        below = np.flatnonzero(m[:, c])
        for r in below:
            if r != rank:
                m[r] ^= m[rank]
        rank += 1
        if rank == m.shape[0]:
            break
    return rank


def cycle_incidence(d):
    """Every subgraph's fundamental cycles as 0/1 rows over the parent's edges."""
    rows = []
    for s in d.subgraphs:
        b = build_cycle_basis(s.graph)
        for ce in b.cycle_edges:
            v = np.zeros(d.graph.n_edges, dtype=np.uint8)
            v[s.edge_ids[ce]] = 1
            rows.append(v)
    return rows


def permuted(d, perm):
    parts = [(d.subgraphs[k].label, d.subgraphs[k].edge_ids, d.subgraphs[k].coords) for k in perm]
    return make_decomposition(d.graph, parts)


class TestTemplates:
    def test_k5_fixture(self):
        d = k5_decomposition()
        assert d.n_subgraphs == 3
        assert d.covers()
        star = {d.graph.edge_index(0, v) for v in range(1, 5)}
        for s in d.subgraphs:
            assert star <= set(s.edge_ids.tolist())
            assert len(s.edge_ids) == 6
            assert s.faces.euler_ok(5)
        # each non-star edge sits in exactly one subgraph, star edges in all three
        mult = d.multiplicity()
        for e in range(10):
            assert mult[e] == (3 if e in star else 1)

    def test_three_by_three_level_one(self):
        g = build_grid_graph(3, 3, 1)
        d = build_decomposition(g)
        assert d.n_subgraphs == 3
        union = set()
        for s in d.subgraphs:
            union |= {tuple(e) for e in g.edges[s.edge_ids]}
        assert union == {tuple(e) for e in g.edges}

    @pytest.mark.parametrize("rows,cols", [(2, 2), (3, 5), (6, 4), (7, 7)])
    @pytest.mark.parametrize("r", [1, 2])
    def test_euler_per_subgraph(self, rows, cols, r):
        g = build_grid_graph(rows, cols, r)
        d = build_decomposition(g)
        assert d.n_subgraphs == (3 if r == 1 else 5)
        for s in d.subgraphs:
            assert s.graph.is_connected()
            assert g.n_vertices - len(s.edge_ids) + s.faces.n_faces == 2
            # every half-edge lies on exactly one face
            hs = [(e, sg) for walk in s.faces.boundaries for e, sg in walk]
            assert len(hs) == len(set(hs)) == 2 * len(s.edge_ids)

    def test_first_subgraph_is_base_grid(self):
        g = build_grid_graph(4, 4, 2)
        d = build_decomposition(g)
        kinds = {g.kinds[e] for e in d.subgraphs[0].edge_ids}
        assert kinds == {"h", "v"}
        assert len(d.subgraphs[0].edge_ids) == 2 * 4 * 3

    @pytest.mark.parametrize("r", [0, 3, None])
    def test_unsupported_level(self, r):
        g = build_grid_graph(3, 3, 0)
        with pytest.raises(UnsupportedDecompositionError):
            build_decomposition(g, r) if r is not None else build_decomposition(g)

    def test_missing_edge_is_rejected(self):
        g = build_grid_graph(2, 2, 1)
        grid = [g.edge_index(0, 1), g.edge_index(0, 2), g.edge_index(1, 3), g.edge_index(2, 3)]
        with pytest.raises(UnsupportedDecompositionError):
            make_decomposition(g, [("grid", grid, g.coords)])

    def test_disconnected_part_is_rejected(self):
        g = build_grid_graph(2, 2, 0)
        with pytest.raises(UnsupportedDecompositionError):
            make_decomposition(g, [("a", [0, 1], g.coords), ("b", [2, 3], g.coords)])

    def test_crossing_drawing_is_rejected(self):
        g = build_grid_graph(2, 2, 1)  # K4 drawn on the unit square has crossing diagonals
        with pytest.raises((UnsupportedDecompositionError, ValueError)):
            single_decomposition(g)


class TestFaces:
    def test_triangle(self):
        f = trace_faces(3, np.array([[0, 1], [1, 2], [0, 2]]), np.array([[0, 0], [1, 0], [0, 1.0]]))
        assert f.n_faces == 2
        assert f.euler_ok(3)
        inner = 1 - f.outer
        assert f.left[0] == inner and f.right[0] == f.outer

    def test_tree_has_one_face(self):
        f = trace_faces(4, np.array([[0, 1], [1, 2], [1, 3]]), np.array([[0, 0], [1, 0], [2, 0], [1, 1.0]]))
        assert f.n_faces == 1 and np.all(f.left == f.right)


class TestCoverage:
    def test_k5(self):
        d = k5_decomposition()
        assert check_coverage_condition(d, build_cycle_basis(d.graph))

    def test_four_cycle_split_into_paths(self):
        g = build_grid_graph(2, 2, 0)
        assert not check_cycle_coverage(g, [[0, 1], [2, 3]])
        assert gf2_rank_dense(np.zeros((0, 4))) == 0 < g.cyclomatic_number

    def test_grid_template_against_dense_elimination(self):
        g = build_grid_graph(3, 3, 1)
        d = build_decomposition(g)
        assert check_coverage_condition(d)
        assert gf2_rank_dense(cycle_incidence(d)) == g.n_edges - g.n_vertices + 1

    def test_spanning_tree_plus_acyclic_part_is_deficient(self):
        g = build_grid_graph(2, 2, 1)
        square = [g.edge_index(0, 1), g.edge_index(0, 2), g.edge_index(1, 3), g.edge_index(2, 3)]
        path = [g.edge_index(0, 3), g.edge_index(0, 1), g.edge_index(1, 2)]
        line = np.array([[1.0, 0], [2, 0], [3, 0], [0, 0]])
        d = make_decomposition(g, [("square", square, g.coords), ("path", path, line)])
        assert d.covers()
        assert not check_coverage_condition(d)
        assert gf2_rank_dense(cycle_incidence(d)) == 1 < 3

    @pytest.mark.parametrize("rows,cols", [(2, 3), (4, 4), (5, 3)])
    def test_planar_single_subgraph(self, rows, cols):
        d = single_decomposition(build_grid_graph(rows, cols, 0))
        assert d.n_subgraphs == 1 and check_coverage_condition(d)

    @given(st.integers(2, 6), st.integers(2, 6), st.sampled_from([1, 2]), st.randoms(use_true_random=False))
    def test_relabel_invariance(self, rows, cols, r, rnd):
        d = build_decomposition(build_grid_graph(rows, cols, r))
        perm = list(range(d.n_subgraphs))
        rnd.shuffle(perm)
        assert check_coverage_condition(permuted(d, perm)) == check_coverage_condition(d)

    @given(st.integers(2, 6), st.integers(2, 6), st.sampled_from([1, 2]))
    def test_templates_cover_exactly(self, rows, cols, r):
        g = build_grid_graph(rows, cols, r)
        d = build_decomposition(g)
        assert isinstance(d, Decomposition)
        assert d.membership.any(axis=1).all()
        edge_union = np.unique(np.concatenate([s.edge_ids for s in d.subgraphs]))
        assert np.array_equal(edge_union, np.arange(g.n_edges))
        assert check_coverage_condition(d)


class TestDump:
    def test_round_trip(self):
        g = build_grid_graph(3, 4, 2)
        d = build_decomposition(g)
        text = dump_decomposition(d)
        assert text.splitlines()[0] == "3 4 2"
        rows, cols, r, edges, members = parse_dump(text)
        assert (rows, cols, r) == (3, 4, 2)
        assert np.array_equal(edges, g.edges)
        assert members == [d.edge_membership(e) for e in range(g.n_edges)]

    def test_k5_dump_lists_star_in_every_subgraph(self):
        d = k5_decomposition()
        lines = dump_decomposition(d).splitlines()[1:]
        assert lines[0] == "0 1 0 1 2"
        assert complete_graph(5).n_edges == len(lines)
