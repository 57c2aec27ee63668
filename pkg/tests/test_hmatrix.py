import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from efiepc.hmatrix import (AcaStagnation, LowRankBlock, aca, admissible, build_block_structure,
                            build_hmatrix, build_tree, coverage_bitmap, hmatvec, recompress)
from efiepc.mesh import mesh_plate


def test_tree_invariants(plate280):
    tree = plate280.tree
    mesh = tree.mesh
    assert sorted(tree.permutation.tolist()) == list(range(mesh.num_triangles))
    for node in tree.nodes:
        if node.is_leaf:
            assert node.num_edges <= tree.leaf_size
            continue
        a, b = node.children
        assert (a.tri_start, b.tri_stop) == (node.tri_start, node.tri_stop)
        assert a.tri_stop == b.tri_start
        assert (a.edge_start, b.edge_stop) == (node.edge_start, node.edge_stop)
        assert a.edge_stop == b.edge_start
        assert np.all(node.box_min <= a.box_min) and np.all(node.box_max >= b.box_max)
    # every basis is owned by the leaf holding its lower-numbered triangle
    for leaf in tree.leaves:
        owners = mesh.edge_triangles[leaf.edge_start:leaf.edge_stop].min(axis=1)
        assert np.all((owners >= leaf.tri_start) & (owners < leaf.tri_stop))


def test_tree_depth_limit(physics):
    tree = build_tree(mesh_plate(1.0, 1.0, 0.1), depth=5)
    assert len(tree.leaves) == 32
    assert tree.num_levels == 6


def test_leaf_size_validation():
    with pytest.raises(ValueError):
        build_tree(mesh_plate(0.5, 0.5, 0.1), leaf_size=0)


def test_admissibility_is_symmetric(plate280):
    nodes = plate280.tree.nodes
    for t in nodes[::3]:
        assert not admissible(t, t)
        for s in nodes[::5]:
            assert admissible(t, s) == admissible(s, t)


def test_partition_covers_each_entry_once(plate280):
    n = plate280.num_unknowns
    blocks = build_block_structure(plate280.tree.root)
    cover = coverage_bitmap(blocks, n)
    assert cover.min() == 1 and cover.max() == 1
    assert any(b.kind == "farLowRank" for b in blocks)


def test_aca_exact_on_low_rank(rng):
    A = (rng.standard_normal((40, 3)) @ rng.standard_normal((3, 30))).astype(complex)
    lr = aca(lambda i: A[i], lambda j: A[:, j], A.shape, tol=1e-10)
    assert lr.rank <= 4
    assert np.linalg.norm(lr.to_dense() - A) <= 1e-8 * np.linalg.norm(A)


def test_aca_full_rank_is_exact(rng):
    A = rng.standard_normal((6, 6)) + 0j
    lr = aca(lambda i: A[i], lambda j: A[:, j], A.shape, tol=1e-14)
    assert np.allclose(lr.to_dense(), A)


def test_aca_stagnation():
    A = np.eye(20, dtype=complex)
    with pytest.raises(AcaStagnation):
        aca(lambda i: A[i], lambda j: A[:, j], A.shape, tol=1e-6, max_rank=3)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 8), st.floats(1e-6, 1e-1), st.integers(0, 2**31))
def test_recompress_never_grows_and_meets_tol(rank, tol, seed):
    r = np.random.default_rng(seed)
    U = r.standard_normal((20, rank)) * np.logspace(0, -6, rank)
    V = r.standard_normal((rank, 15))
    block = LowRankBlock(U.astype(complex), V.astype(complex))
    out = recompress(block, tol)
    assert out.rank <= block.rank
    A = block.to_dense()
    assert np.linalg.norm(out.to_dense() - A) <= tol * np.linalg.norm(A) * (1 + 1e-9) + 1e-14


def test_hmatvec_accuracy(plate280, plate280_dense, rng):
    H = plate280.hmatrix
    for _ in range(10):
        x = rng.standard_normal(H.n) + 1j * rng.standard_normal(H.n)
        y = plate280_dense @ x
        assert np.linalg.norm(hmatvec(H, x) - y) <= 1e-2 * np.linalg.norm(y)
    assert H.memory_ratio() < 1.0


def test_hmatrix_is_symmetric(plate280):
    Z = plate280.hmatrix.to_dense()
    assert np.abs(Z - Z.T).max() <= 1e-12 * np.abs(Z).max()


def test_hmatvec_dimension_check(plate280):
    with pytest.raises(ValueError):
        plate280.hmatrix.matvec(np.ones(3))


def test_kernel_must_match_tree(plate280, physics):
    from efiepc.kernel import EfieKernel
    other = EfieKernel(mesh_plate(1.0, 1.0, 0.1), physics)
    with pytest.raises(ValueError):
        build_hmatrix(other, plate280.tree)


def test_report(plate280):
    rep = json.loads(plate280.hmatrix.report_json())
    assert rep["N"] == plate280.num_unknowns
    total = sum(v["nearDense"] + v["farLowRank"] for v in rep["blocks_per_level"].values())
    assert total == rep["dense_blocks"] + rep["lowrank_blocks"]
    assert 0 < rep["memory_ratio"] < 1


def test_hmatvec_linearity(plate280, rng):
    H = plate280.hmatrix
    x = rng.standard_normal(H.n) + 1j * rng.standard_normal(H.n)
    y = rng.standard_normal(H.n) + 1j * rng.standard_normal(H.n)
    a, b = 0.3 - 2j, 1.7 + 0.1j
    lhs = H.matvec(a * x + b * y)
    rhs = a * H.matvec(x) + b * H.matvec(y)
    assert np.linalg.norm(lhs - rhs) <= 1e-12 * np.linalg.norm(rhs)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 4.0), st.floats(1.0, 3.0))
def test_admissibility_monotone_in_eta(eta, factor):
    nodes = build_tree(mesh_plate(1.0, 1.0, 0.1)).nodes
    for t in nodes[::4]:
        for s in nodes[::7]:
            if admissible(t, s, eta):
                assert admissible(t, s, eta * factor)


def test_zero_eta_gives_no_far_blocks(plate280):
    blocks = build_block_structure(plate280.tree.root, eta=0.0)
    assert all(b.kind == "nearDense" for b in blocks)


def test_single_leaf_tree_matches_dense(physics):
    from efiepc.kernel import EfieKernel
    tree = build_tree(mesh_plate(0.2, 0.2, 0.1))
    assert tree.root.is_leaf
    kernel = EfieKernel(tree.mesh, physics)
    H = build_hmatrix(kernel, tree)
    assert np.allclose(H.to_dense(), kernel.dense(), rtol=0, atol=0)


def test_storage_per_unknown_grows_slowly(physics):
    from efiepc.kernel import EfieKernel
    # four times the unknowns; smaller plates are still nearly dense
    ratios = []
    for side in (1.5, 3.0):
        tree = build_tree(mesh_plate(side, side, 0.1))
        H = build_hmatrix(EfieKernel(tree.mesh, physics), tree)
        ratios.append(H.stored_entries() / H.n)
    assert ratios[1] < 2.5 * ratios[0]
