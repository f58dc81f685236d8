import itertools
import json

import numpy as np
import pytest

from selclust.errors import InvalidInput
from selclust.path import SegmentedClustering, clustering_at, compute_path, lambda_max
from selclust.polyhedron import (build_constraints, check_membership, slack,
                                 verify_equivalence)


def _toy_clustering(toy):
    return SegmentedClustering([0, 2, 6, 8], compute_path(toy).sigma)


def test_toy_blocks(toy):
    pc = build_constraints(_toy_clustering(toy))
    assert (pc.M1.shape[0], pc.M2.shape[0], pc.M3.shape[0]) == (7, 2, 5)
    assert pc.m2.tolist() == [-6.0, -6.0]
    assert pc.m3.tolist() == [1.0, 3.0, 2.0, 1.0, 1.0]
    assert pc.M.shape == (14, 8) and pc.n_rows == 14
    assert not pc.m1.any()
    assert pc.strict_mask.tolist() == [False] * 7 + [True] * 2 + [False] * 5


def test_smallest_case():
    pc = build_constraints(SegmentedClustering([0, 1, 2], [0, 1]))
    assert pc.M1.toarray().tolist() == [[-1.0, 1.0]]
    assert pc.M2.toarray().tolist() == [[-1.0, 1.0]]
    assert pc.m2.tolist() == [-2.0]
    assert pc.M3.shape == (0, 2)


def test_single_cluster_of_three():
    pc = build_constraints(SegmentedClustering([0, 3], [0, 1, 2]))
    assert pc.M2.shape == (0, 3)
    np.testing.assert_allclose(pc.M3.toarray(), [[1 - 1 / 3, -1 / 3, -1 / 3],
                                                 [0.5 - 1 / 3, 0.5 - 1 / 3, -1 / 3]])
    assert pc.m3.tolist() == [2.0, 1.0]


def test_row_structure(rng):
    for _ in range(30):
        n = int(rng.integers(1, 15))
        cuts = np.flatnonzero(rng.random(n - 1) < 0.4) + 1 if n > 1 else []
        c = SegmentedClustering(np.r_[0, cuts, n], rng.permutation(n))
        pc = build_constraints(c)
        M = pc.M.toarray()
        assert M.shape == (2 * (n - 1), n)
        np.testing.assert_allclose(M.sum(axis=1), 0.0, atol=1e-14)
        assert np.all((pc.M1 != 0).sum(axis=1) == 2)
        sizes = c.sizes
        for k in range(c.K - 1):
            row = pc.M2.toarray()[k]
            a, b, e = c.t[k], c.t[k + 1], c.t[k + 2]
            np.testing.assert_allclose(row[a:b], -1 / sizes[k])
            np.testing.assert_allclose(row[b:e], 1 / sizes[k + 1])
        v = rng.normal(size=n)
        np.testing.assert_allclose(pc.apply(v), M @ v, atol=1e-12)
        np.testing.assert_allclose(pc.row_norms(), np.linalg.norm(M, axis=1), atol=1e-12)


def test_membership_examples(toy):
    c = clustering_at(compute_path(toy), 0.5)
    assert check_membership(build_constraints(c), c.sigma, toy, 0.5).member
    # swap sorted positions 0 and 1 (11 and 10): order condition fails
    s = c.sigma.copy()
    s[[0, 1]] = s[[1, 0]]
    rep = check_membership(build_constraints(c), s, toy, 0.5)
    assert not rep.member and rep.failed_block == "M1"
    rep = check_membership(build_constraints(_toy_clustering(toy)), c.sigma, toy, 0.7)
    assert not rep.member and rep.failed_block == "M2"


def test_dimension_mismatch(toy):
    pc = build_constraints(_toy_clustering(toy))
    with pytest.raises(InvalidInput):
        slack(pc, np.arange(7), toy[:7], 0.5)


def test_verify_equivalence_examples(toy, rng):
    assert verify_equivalence(toy, 0.5)
    assert verify_equivalence(np.full(5, 2.0), 0.3)
    for _ in range(100):
        x = rng.normal(size=10)
        assert verify_equivalence(x, 0.3 * lambda_max(x), rng=rng)


def test_completeness_by_enumeration(rng):
    """On a box sample, the path's (t, sigma) is the only member among all candidates."""
    n = 4
    candidates = []
    for perm in itertools.permutations(range(n)):
        for mask in range(1 << (n - 1)):
            t = [0] + [i + 1 for i in range(n - 1) if mask >> i & 1] + [n]
            c = SegmentedClustering(t, perm)
            candidates.append((c, build_constraints(c)))
    for _ in range(60):
        x = rng.uniform(-2, 2, size=n)
        lam = float(rng.uniform(0.05, 1.1) * lambda_max(x))
        members = [c for c, pc in candidates if check_membership(pc, c.sigma, x, lam).member]
        assert members == [clustering_at(compute_path(x), lam)]


def test_to_json(toy):
    d = json.loads(build_constraints(_toy_clustering(toy)).to_json())
    assert len(d["M1"]) == 7 and len(d["M2"]) == 2 and len(d["M3"]) == 5
    assert d["strict"].count(True) == 2
    assert d["M1"][0] == [[0, -1.0], [1, 1.0]]
