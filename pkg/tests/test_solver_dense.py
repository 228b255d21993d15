import numpy as np
import pytest

from vief import Grid, KernelSpec, PLAIN, SolverOptions, assemble_dense, \
    build_tree, make_field
from vief.solver_dense import (apply_inverse_dense_block, compress_outer,
                               hss_matvec, invert_dense_block)


def laplace_nti():
    return KernelSpec("laplace2d", b_field=make_field("gaussian_bump"),
                      c_field=make_field("gaussian_bump"))


def setup(n_side, spec=None, eps=1e-10, leaf=49):
    spec = spec or laplace_nti()
    grid = Grid(n_side)
    tree = build_tree(grid, leaf)
    opts = SolverOptions(eps=eps, leaf_size=leaf)
    H = compress_outer(spec, grid, tree, eps, opts)
    return spec, grid, tree, H


def dense_matrix(spec, grid):
    return assemble_dense(spec, grid, PLAIN, np.arange(grid.n), np.arange(grid.n))


def test_densify_small():
    spec, grid, tree, H = setup(14)  # N=196, depth 2
    A = dense_matrix(spec, grid)
    err = np.linalg.norm(H.densify() - A) / np.linalg.norm(A)
    assert err <= 1e-9


def test_densify_784():
    spec, grid, tree, H = setup(28)
    A = dense_matrix(spec, grid)
    err = np.linalg.norm(H.densify() - A) / np.linalg.norm(A)
    assert err <= 1e-9


def test_symmetric_shares_interp():
    spec, grid, tree, H = setup(28)
    for i in H.Lfac:
        assert H.Rfac[i] is H.Lfac[i]
    np.testing.assert_array_equal(H.row_skel[1], H.col_skel[1])


def test_matvec_against_dense():
    spec, grid, tree, H = setup(28)
    A = dense_matrix(spec, grid)
    rng = np.random.default_rng(0)
    x = rng.standard_normal(grid.n)
    y = hss_matvec(H, x)
    assert np.linalg.norm(y - A @ x) / np.linalg.norm(A @ x) <= 1e-9
    assert np.all(hss_matvec(H, np.zeros(grid.n)) == 0)
    z = rng.standard_normal(grid.n)
    lhs = hss_matvec(H, 2.0 * x - 3.0 * z)
    rhs = 2.0 * hss_matvec(H, x) - 3.0 * hss_matvec(H, z)
    assert np.linalg.norm(lhs - rhs) <= 1e-12 * np.linalg.norm(rhs)


def test_skeleton_sizes_bounded():
    spec, grid, tree, H = setup(28)
    for box in tree.nodes:
        if box.idx == 0:
            continue
        assert H.row_skel[box.idx].size <= H.work_rows(box).size


def test_single_leaf_tree_inverse():
    spec = laplace_nti()
    grid = Grid(7)
    tree = build_tree(grid, 49)
    opts = SolverOptions()
    H = compress_outer(spec, grid, tree, 1e-10, opts)
    inv = invert_dense_block(H)
    A = dense_matrix(spec, grid)
    f = np.random.default_rng(1).standard_normal(grid.n)
    x = apply_inverse_dense_block(inv, f)
    assert np.linalg.norm(A @ x - f) / np.linalg.norm(f) <= 1e-12


def test_inverse_residual_784():
    spec, grid, tree, H = setup(28)
    inv = invert_dense_block(H)
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(10):
        v = rng.standard_normal(grid.n)
        sigma = inv.apply(v)
        resid = np.linalg.norm(v - H.matvec(sigma)) / np.linalg.norm(v)
        worst = max(worst, resid)
    assert worst <= 1e-9


def test_inverse_against_dense_lu():
    spec, grid, tree, H = setup(28)
    inv = invert_dense_block(H)
    A = dense_matrix(spec, grid)
    rng = np.random.default_rng(3)
    v = rng.standard_normal(grid.n)
    x = inv.apply(v)
    xd = np.linalg.solve(A, v)
    assert np.linalg.norm(x - xd) / np.linalg.norm(xd) <= 1e-8


def test_apply_deterministic_bitwise():
    spec, grid, tree, H = setup(28)
    inv = invert_dense_block(H)
    v = np.random.default_rng(4).standard_normal(grid.n)
    np.testing.assert_array_equal(inv.apply(v), inv.apply(v))


def test_nonsymmetric_kernel_roundtrip():
    spec = KernelSpec("laplace2d", b_field=make_field("gaussian_bump"),
                      c_field=make_field("one"))
    assert not spec.symmetric
    grid = Grid(14)
    tree = build_tree(grid, 49)
    opts = SolverOptions()
    H = compress_outer(spec, grid, tree, 1e-10, opts)
    A = dense_matrix(spec, grid)
    assert np.linalg.norm(H.densify() - A) / np.linalg.norm(A) <= 1e-9
    inv = invert_dense_block(H)
    v = np.random.default_rng(5).standard_normal(grid.n)
    x = inv.apply(v)
    assert np.linalg.norm(A @ x - v) / np.linalg.norm(v) <= 1e-8


def test_helmholtz_small_inverse():
    k = 2 * np.pi * 2
    spec = KernelSpec("helmholtz2d", k=k)
    grid = Grid(18)
    tree = build_tree(grid, 81)
    opts = SolverOptions()
    H = compress_outer(spec, grid, tree, 1e-10, opts)
    A = dense_matrix(spec, grid)
    assert np.linalg.norm(H.densify() - A) / np.linalg.norm(A) <= 1e-8
    inv = invert_dense_block(H)
    rng = np.random.default_rng(6)
    v = rng.standard_normal(grid.n) + 1j * rng.standard_normal(grid.n)
    x = inv.apply(v)
    assert np.linalg.norm(A @ x - v) / np.linalg.norm(v) <= 1e-8


@pytest.mark.slow
def test_inverse_residual_3136():
    spec, grid, tree, H = setup(56)
    inv = invert_dense_block(H)
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(10):
        v = rng.standard_normal(grid.n)
        sigma = inv.apply(v)
        worst = max(worst, np.linalg.norm(v - H.matvec(sigma)) / np.linalg.norm(v))
    assert worst <= 1e-9


@pytest.mark.slow
def test_skeleton_scaling_slope():
    spec, grid, tree, H = setup(112, eps=1e-10)  # N=12544, depth 8
    sizes = {}
    for box in tree.nodes:
        if box.idx == 0 or box.is_leaf:
            continue
        sizes.setdefault(box.level, []).append(H.row_skel[box.idx].size)
    levels = sorted(sizes)[:5]   # coarsest non-root levels
    npts = [grid.n / 2 ** lv for lv in levels]
    kmax = [max(sizes[lv]) for lv in levels]
    slope = np.polyfit(np.log(npts), np.log(kmax), 1)[0]
    assert 0.4 <= slope <= 0.6, (dict(zip(levels, kmax)), slope)
