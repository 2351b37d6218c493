import itertools
import math

import numpy as np
import pytest

from zerotemp import cavity_general as cg
from zerotemp.cavity_general import ModelParams
from zerotemp.sbm_graph import (
    SbmGraph,
    generate,
    group_sizes,
    initial_messages,
    potts_energy,
    read_graph,
    run_max_product,
    score,
    write_graph,
)


def brute_permuted_agreement(planted, labels, q):
    return max(np.mean(np.asarray(perm)[labels] == planted) for perm in itertools.permutations(range(q)))


@pytest.fixture(scope="module")
def q2_graph():
    return generate(ModelParams(2, 10.0, 6.0), 100_000, seed=4)


class TestGenerate:
    def test_structure(self):
        g = generate(ModelParams(3, 8.0, 4.0), 3001, seed=1)
        e = g.edges
        assert np.all(e[:, 0] < e[:, 1])
        assert np.unique(e, axis=0).shape[0] == e.shape[0]
        np.testing.assert_array_equal(np.bincount(g.planted), group_sizes(3001, 3))
        np.testing.assert_array_equal(group_sizes(3001, 3), [1001, 1000, 1000])

    def test_degrees(self, q2_graph):
        g = q2_graph
        n = g.n
        mean = 2 * g.n_edges / n
        assert abs(mean - 10.0) < 5 * math.sqrt(10.0 / n)
        same = g.planted[g.edges[:, 0]] == g.planted[g.edges[:, 1]]
        intra = 2 * np.count_nonzero(same) / n
        assert abs(intra - 8.0) < 5 * math.sqrt(8.0 / n)

    def test_no_inter_edges_without_noise(self):
        g = generate(ModelParams(4, 6.0, 6.0), 4000, seed=2)
        assert np.all(g.planted[g.edges[:, 0]] == g.planted[g.edges[:, 1]])

    def test_erdos_renyi_ratio(self):
        q, n, c = 2, 20_000, 6.0
        g = generate(ModelParams(q, c, 0.0), n, seed=3)
        same = np.count_nonzero(g.planted[g.edges[:, 0]] == g.planted[g.edges[:, 1]])
        pairs_in = 2 * (n // 2) * (n // 2 - 1) / 2
        frac = pairs_in / (n * (n - 1) / 2)
        m = g.n_edges
        assert abs(same - frac * m) < 5 * math.sqrt(m * frac * (1 - frac))

    def test_revealed_count(self):
        g = generate(ModelParams(3, 5.0, 2.0, rho=0.013), 1000, seed=0)
        assert g.revealed.sum() == 13

    def test_dense_rejected(self):
        with pytest.raises(ValueError):
            generate(ModelParams(2, 30.0, 30.0), 20)
        with pytest.raises(ValueError):
            generate(ModelParams(4, 3.0), 3)

    def test_reproducible(self):
        a = generate(ModelParams(3, 5.0, 2.0), 500, seed=9)
        b = generate(ModelParams(3, 5.0, 2.0), 500, seed=9)
        np.testing.assert_array_equal(a.edges, b.edges)

    def test_csr_reverse(self):
        g = generate(ModelParams(3, 5.0, 2.0), 500, seed=9)
        indptr, dst, src, rev = g.csr()
        idx = np.arange(src.size)
        np.testing.assert_array_equal(rev[rev], idx)
        np.testing.assert_array_equal(src[rev], dst)
        np.testing.assert_array_equal(np.diff(indptr), g.degrees())


class TestMaxProduct:
    def test_isolated_nodes_uniform(self):
        q, n = 4, 4000
        g = SbmGraph(n=n, edges=np.empty((0, 2), dtype=np.int64),
                     planted=np.repeat(np.arange(q), n // q), revealed=np.zeros(n, bool),
                     params=ModelParams(q, 1.0))
        labels = run_max_product(g, seed=1, max_sweeps=2).labels
        counts = np.bincount(labels, minlength=q)
        expected = n / q
        assert np.all(np.abs(counts - expected) < 5 * math.sqrt(expected))

    def test_pure_blocks_are_fixed(self):
        # leaves have an empty cavity field, so use a graph with minimum degree above one
        g = generate(ModelParams(2, 40.0, 40.0), 400, seed=1)
        assert g.degrees().min() > 1
        res = run_max_product(g, init="planted", planted_fraction=1.0)
        assert res.changes[0] == 0
        assert score(g, res.labels).permuted_agreement == 1.0

    def test_revealed_nodes_clamped(self):
        g = generate(ModelParams(3, 6.0, 2.0, rho=0.1), 3000, seed=2)
        res = run_max_product(g, seed=3, max_sweeps=5)
        np.testing.assert_array_equal(res.labels[g.revealed], g.planted[g.revealed])
        _, _, src, _ = g.csr()
        out = g.revealed[src]
        np.testing.assert_array_equal(res.messages[out], g.planted[src[out]])

    def test_reproducible(self):
        g = generate(ModelParams(3, 6.0, 4.0), 2000, seed=2)
        a = run_max_product(g, seed=3, max_sweeps=5)
        b = run_max_product(g, seed=3, max_sweeps=5)
        np.testing.assert_array_equal(a.messages, b.messages)
        assert a.changes == b.changes

    def test_initial_messages_planted_fraction(self):
        g = generate(ModelParams(4, 10.0, 5.0), 5000, seed=0)
        _, _, src, _ = g.csr()
        msg = initial_messages(g, "planted", 0.5, seed=0)
        frac = np.mean(msg == g.planted[src])
        assert frac == pytest.approx(0.5 + 0.5 / 4, abs=0.01)
        with pytest.raises(ValueError):
            initial_messages(g, "bogus")

    def test_planted_start_reaches_accurate_branch(self, q2_graph):
        res = run_max_product(q2_graph, init="planted", planted_fraction=0.5, seed=0, max_sweeps=10)
        eta2 = cg.solve_fixed_points(q2_graph.params)[-1].value
        assert score(q2_graph, res.labels).permuted_agreement == pytest.approx(eta2, abs=0.01)

    def test_random_start_collapses_to_one_label(self):
        # symmetric state is unstable to a global label drift on a fixed graph
        g = generate(ModelParams(2, 10.0, 6.0), 20_000, seed=1)
        res = run_max_product(g, init="random", seed=0, max_sweeps=200)
        assert np.bincount(res.labels, minlength=2).max() > 0.95 * g.n


class TestScore:
    def test_hungarian_matches_brute_force(self):
        rng = np.random.default_rng(0)
        q, n = 4, 300
        planted = rng.integers(0, q, n)
        labels = np.where(rng.random(n) < 0.6, (planted + 2) % q, rng.integers(0, q, n))
        g = SbmGraph(n=n, edges=np.empty((0, 2), dtype=np.int64), planted=planted,
                     revealed=np.zeros(n, bool), params=ModelParams(q, 1.0))
        rep = score(g, labels)
        assert rep.permuted_agreement == pytest.approx(brute_permuted_agreement(planted, labels, q))
        assert rep.permuted_agreement >= rep.raw_agreement
        assert rep.normalized_overlap == pytest.approx((rep.permuted_agreement - 0.25) / 0.75)
        assert np.mean(np.asarray(rep.permutation)[labels] == planted) == pytest.approx(
            rep.permuted_agreement)

    def test_energy(self):
        edges = np.array([[0, 1], [1, 2], [2, 3]])
        g = SbmGraph(n=4, edges=edges, planted=np.zeros(4, np.int64), revealed=np.zeros(4, bool),
                     params=ModelParams(2, 1.0))
        assert potts_energy(g, np.array([0, 0, 1, 1])) == -4

    def test_shape_check(self):
        g = generate(ModelParams(2, 3.0, 1.0), 100)
        with pytest.raises(ValueError):
            score(g, np.zeros(99, dtype=int))


class TestTextFormat:
    def test_round_trip(self, tmp_path):
        g = generate(ModelParams(3, 5.0, 2.0, rho=0.05), 600, seed=7)
        path = tmp_path / "g.txt"
        write_graph(g, path)
        h = read_graph(path)
        np.testing.assert_array_equal(g.edges, h.edges)
        np.testing.assert_array_equal(g.planted, h.planted)
        np.testing.assert_array_equal(g.revealed, h.revealed)
        assert (h.params.q, h.params.c, h.params.delta, h.params.rho, h.seed) == (3, 5.0, 2.0, 0.05, 7)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("10 2\n")
        with pytest.raises(ValueError):
            read_graph(path)
