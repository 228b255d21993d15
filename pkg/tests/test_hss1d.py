import numpy as np
import pytest

from vief.dense_core import LowRankFactor
from vief.errors import ConfigError
from vief.hss1d import (from_blob, hss1d_add_lowrank, hss1d_compress,
                        hss1d_invert, hss1d_lstsq, hss1d_matvec, hss1d_merge,
                        hss1d_recompress, hss1d_split, hss1d_sum, lr_to_hss1d,
                        to_blob, zero_hss)


def ring_points(n, radius=1.0, jitter=0.0, seed=0):
    t = np.linspace(0, 2 * np.pi, n, endpoint=False)
    if jitter:
        t = t + jitter * np.random.default_rng(seed).uniform(-1, 1, n) / n
    return np.column_stack([radius * np.cos(t), radius * np.sin(t)])


def log_kernel_oracle(pts, diag=1.0, scale=1.0):
    def block(I, J):
        d = pts[I][:, None, :] - pts[J][None, :, :]
        r = np.hypot(d[..., 0], d[..., 1])
        out = np.where(r > 0, scale * np.log(np.where(r > 0, r, 1.0)) / (2 * np.pi), diag)
        return out
    return block


def inv_r_oracle(pts, diag=2.0):
    def block(I, J):
        d = pts[I][:, None, :] - pts[J][None, :, :]
        r = np.hypot(d[..., 0], d[..., 1])
        return np.where(r > 0, 1.0 / (4 * np.pi * np.where(r > 0, r, 1.0)), diag)
    return block


def dense_of(block, n):
    return block(np.arange(n), np.arange(n))


def rel_err(A, B):
    return np.linalg.norm(A - B) / max(np.linalg.norm(B), 1e-300)


def test_compress_diagonal_operator_exact():
    n = 100
    d = np.diag(1.0 + np.arange(n))
    H = hss1d_compress(d, n, 1e-12, leaf_size=16)
    assert H.max_rank() == 0
    np.testing.assert_array_equal(H.densify(), d)


def test_compress_laplace_ring_accuracy_and_ranks():
    n = 64
    pts = ring_points(n)
    blk = log_kernel_oracle(pts)
    H = hss1d_compress(blk, n, 1e-10, leaf_size=16)
    assert rel_err(H.densify(), dense_of(blk, n)) <= 1e-9
    assert H.max_rank() <= 4 + 3 * np.log2(n)


def test_compress_rank_log_growth():
    maxranks = []
    for n in (64, 128, 256, 512):
        pts = ring_points(n)
        H = hss1d_compress(log_kernel_oracle(pts), n, 1e-10, leaf_size=32)
        maxranks.append(H.max_rank())
    ns = np.array([64, 128, 256, 512])
    # bounded by a + b log2(n): ratio to log should not blow up
    assert maxranks[-1] <= maxranks[0] + 4 * (np.log2(ns[-1]) - np.log2(ns[0])) + 6


def test_matvec_zero_identity_linearity():
    n = 80
    H = hss1d_compress(np.eye(n), n, 1e-12, leaf_size=16)
    x = np.random.default_rng(0).standard_normal(n)
    np.testing.assert_allclose(hss1d_matvec(H, x), x, atol=1e-13)
    assert np.all(hss1d_matvec(H, np.zeros(n)) == 0)
    pts = ring_points(256)
    blk = log_kernel_oracle(pts)
    H = hss1d_compress(blk, 256, 1e-10, leaf_size=32)
    A = dense_of(blk, 256)
    rng = np.random.default_rng(1)
    x = rng.standard_normal(256)
    y = rng.standard_normal(256)
    assert rel_err(H.matvec(x), A @ x) <= 1e-9
    lhs = H.matvec(2.5 * x - 1.5 * y)
    rhs = 2.5 * H.matvec(x) - 1.5 * H.matvec(y)
    assert np.linalg.norm(lhs - rhs) <= 1e-12 * np.linalg.norm(rhs)


def test_matvec_transpose_and_batch():
    n = 200
    pts = ring_points(n, jitter=0.3)
    blk = log_kernel_oracle(pts)
    H = hss1d_compress(blk, n, 1e-10, leaf_size=24)
    A = dense_of(blk, n)
    X = np.random.default_rng(2).standard_normal((n, 5))
    assert rel_err(H.matvec(X), A @ X) <= 1e-9
    assert rel_err(H.matvec(X, trans=True), A.T @ X) <= 1e-9


def test_invert_identity_and_scaled():
    n = 90
    H = hss1d_compress(np.eye(n), n, 1e-12, leaf_size=16)
    inv = hss1d_invert(H)
    x = np.random.default_rng(3).standard_normal(n)
    np.testing.assert_allclose(inv.apply(x), x, atol=1e-12)
    H2 = hss1d_compress(2 * np.eye(n), n, 1e-12, leaf_size=16)
    np.testing.assert_allclose(hss1d_invert(H2).apply(x), x / 2, atol=1e-12)


def test_invert_second_kind_residual():
    n = 256
    pts = ring_points(n)
    blk = log_kernel_oracle(pts, diag=1.0, scale=2 * np.pi / n)
    H = hss1d_compress(blk, n, 1e-10, leaf_size=32)
    inv = hss1d_invert(H)
    A = dense_of(blk, n)
    rng = np.random.default_rng(4)
    v = rng.standard_normal(n)
    x = inv.apply(v)
    assert np.linalg.norm(A @ x - v) / np.linalg.norm(v) <= 1e-9
    # transpose solve
    xt = inv.apply(v, trans=True)
    assert np.linalg.norm(A.T @ xt - v) / np.linalg.norm(v) <= 1e-9


def test_invert_residual_scales_with_condition():
    n = 128
    pts = ring_points(n, jitter=0.4, seed=9)
    blk = log_kernel_oracle(pts, diag=0.8)
    A = dense_of(blk, n)
    H = hss1d_compress(blk, n, 1e-10, leaf_size=16)
    inv = hss1d_invert(H)
    v = np.random.default_rng(5).standard_normal(n)
    x = inv.apply(v)
    kappa = np.linalg.cond(A)
    assert np.linalg.norm(A @ x - v) / np.linalg.norm(v) <= 100 * 1e-10 * kappa


def test_sum_with_zero_and_cancellation():
    n = 120
    pts = ring_points(n)
    blk = log_kernel_oracle(pts)
    H = hss1d_compress(blk, n, 1e-10, leaf_size=16)
    Z = zero_hss(n, np.float64, leaf_size=16)
    S = hss1d_sum(H, Z, 1e-10)
    assert rel_err(S.densify(), H.densify()) <= 1e-12
    neg = hss1d_compress(lambda I, J: -blk(I, J), n, 1e-10, leaf_size=16)
    C = hss1d_sum(H, neg, 1e-10)
    nrm = np.linalg.norm(H.densify())
    assert np.linalg.norm(C.densify()) <= 1e-9 * nrm
    assert C.max_rank() <= 2


def test_sum_two_kernels_matches_dense():
    n = 150
    pts = ring_points(n, jitter=0.2, seed=7)
    b1 = log_kernel_oracle(pts, diag=1.2)
    b2 = inv_r_oracle(pts, diag=0.3)
    H1 = hss1d_compress(b1, n, 1e-10, leaf_size=24)
    H2 = hss1d_compress(b2, n, 1e-10, leaf_size=24)
    S = hss1d_sum(H1, H2, 1e-10)
    ref = dense_of(b1, n) + dense_of(b2, n)
    assert rel_err(S.densify(), ref) <= 1e-9


def test_split_prefix_cases():
    n = 128
    pts = ring_points(n)
    blk = log_kernel_oracle(pts)
    H = hss1d_compress(blk, n, 1e-10, leaf_size=16)
    A = dense_of(blk, n)
    h1, h2 = hss1d_split(H, 0)
    assert h1.n == 0 and h2.n == n
    assert rel_err(h2.densify(), A) <= 1e-9
    h1, h2 = hss1d_split(H, 60)
    assert rel_err(h1.densify(), A[:60, :60]) <= 1e-9
    assert rel_err(h2.densify(), A[60:, 60:]) <= 1e-9
    I = hss1d_compress(np.eye(n), n, 1e-12, leaf_size=16)
    i1, i2 = hss1d_split(I, 50)
    np.testing.assert_allclose(i1.densify(), np.eye(50), atol=1e-13)
    np.testing.assert_allclose(i2.densify(), np.eye(78), atol=1e-13)
    with pytest.raises(ConfigError):
        hss1d_split(H, n + 1)


def test_extract_general_subset():
    n = 140
    pts = ring_points(n, jitter=0.25, seed=11)
    blk = log_kernel_oracle(pts)
    H = hss1d_compress(blk, n, 1e-10, leaf_size=16)
    A = dense_of(blk, n)
    rng = np.random.default_rng(6)
    S = np.sort(rng.choice(n, size=47, replace=False))
    sub = H.extract(S)
    assert rel_err(sub.densify(), A[np.ix_(S, S)]) <= 1e-9
    # extracted forms still support matvec and recompression
    x = rng.standard_normal(47)
    assert rel_err(sub.matvec(x), A[np.ix_(S, S)] @ x) <= 1e-9
    rec = hss1d_recompress(sub, 1e-10)
    assert rel_err(rec.densify(), A[np.ix_(S, S)]) <= 1e-9


def test_merge_block_diagonal():
    n1, n2 = 70, 90
    p1 = ring_points(n1, radius=1.0)
    p2 = ring_points(n2, radius=2.0)
    H1 = hss1d_compress(log_kernel_oracle(p1), n1, 1e-10, leaf_size=16)
    H2 = hss1d_compress(log_kernel_oracle(p2), n2, 1e-10, leaf_size=16)
    M = hss1d_merge(H1, H2)
    D = M.densify()
    assert np.all(D[:n1, n1:] == 0)
    assert np.all(D[n1:, :n1] == 0)
    assert rel_err(D[:n1, :n1], H1.densify()) <= 1e-11
    assert rel_err(D[n1:, n1:], H2.densify()) <= 1e-11
    E = zero_hss(0, np.float64)
    Me = hss1d_merge(H1, E)
    assert rel_err(Me.densify(), H1.densify()) <= 1e-11


def test_merge_then_cross_sum_matches_dense():
    # block diagonal plus compressed cross interactions == full 2x2 assembly
    n1, n2 = 64, 64
    pts = np.vstack([ring_points(n1, radius=1.0),
                     ring_points(n2, radius=1.35)])
    n = n1 + n2
    blk = log_kernel_oracle(pts, diag=1.5)
    diag_part = hss1d_merge(
        hss1d_compress(lambda I, J: blk(I, J), n1, 1e-10, leaf_size=16),
        hss1d_compress(lambda I, J: blk(I + n1, J + n1), n2, 1e-10, leaf_size=16))

    def cross(I, J):
        full = blk(I, J)
        same = ((I[:, None] < n1) & (J[None, :] < n1)) | \
               ((I[:, None] >= n1) & (J[None, :] >= n1))
        return np.where(same, 0.0, full)

    cross_h = hss1d_compress(cross, n, 1e-10, leaf_size=16)
    total = hss1d_sum(diag_part, cross_h, 1e-10)
    assert rel_err(total.densify(), dense_of(blk, n)) <= 1e-9


def test_recompress_rank_compactness():
    n = 160
    pts = ring_points(n, jitter=0.15, seed=13)
    blk = log_kernel_oracle(pts)
    H = hss1d_compress(blk, n, 1e-8, leaf_size=16)
    fresh_ranks = dict(((v.lo, v.hi), v.rank) for v in H.nodes() if v is not H.root)
    # inflate ranks through a sum with itself scaled by -0.5
    half = hss1d_compress(lambda I, J: -0.5 * blk(I, J), n, 1e-8, leaf_size=16)
    S = hss1d_sum(H, half, 1e-8)
    assert rel_err(S.densify(), 0.5 * dense_of(blk, n)) <= 1e-7
    for v in S.nodes():
        if v is S.root:
            continue
        assert v.rank <= fresh_ranks[(v.lo, v.hi)] + 5
    R = hss1d_recompress(S, 1e-8)
    assert rel_err(R.densify(), S.densify()) <= 1e-7


def test_lr_to_hss1d():
    rng = np.random.default_rng(14)
    z = lr_to_hss1d(LowRankFactor.zeros(50, 50), 1e-10, leaf_size=16)
    assert np.all(z.densify() == 0)
    u = rng.standard_normal((60, 1))
    v = rng.standard_normal((60, 1))
    H1 = lr_to_hss1d(LowRankFactor(u, v), 1e-12, leaf_size=16)
    assert H1.max_rank() <= 1
    assert rel_err(H1.densify(), u @ v.T) <= 1e-11
    U = rng.standard_normal((200, 6))
    V = rng.standard_normal((200, 6))
    H6 = lr_to_hss1d(LowRankFactor(U, V), 1e-12, leaf_size=32)
    assert rel_err(H6.densify(), U @ V.T) <= 1e-11
    assert H6.max_rank() <= 6


def test_add_lowrank():
    n = 130
    pts = ring_points(n)
    blk = log_kernel_oracle(pts, diag=2.0)
    H = hss1d_compress(blk, n, 1e-10, leaf_size=16)
    rng = np.random.default_rng(15)
    lr = LowRankFactor(rng.standard_normal((n, 3)), rng.standard_normal((n, 3)))
    S = hss1d_add_lowrank(H, lr, 1e-10)
    assert rel_err(S.densify(), dense_of(blk, n) + lr.dense()) <= 1e-9


def test_lstsq_against_dense_qr():
    rng = np.random.default_rng(16)
    pts_r = ring_points(60, radius=1.4)
    pts_c = ring_points(40, radius=1.0)
    d = pts_r[:, None, :] - pts_c[None, :, :]
    A = np.log(np.hypot(d[..., 0], d[..., 1])) / (2 * np.pi)
    B = rng.standard_normal((60, 2))
    X, flag = hss1d_lstsq(A, B)
    ref, *_ = np.linalg.lstsq(A, B, rcond=None)
    assert not flag
    assert np.linalg.norm(X - ref) <= 1e-9 * np.linalg.norm(ref)
    Q = np.linalg.qr(rng.standard_normal((50, 20)))[0]
    Xq, _ = hss1d_lstsq(Q, B[:50])
    np.testing.assert_allclose(Xq, Q.T @ B[:50], atol=1e-12)


def test_roundtrip_battery_random_instances():
    rng = np.random.default_rng(17)
    for trial in range(20):
        n = int(rng.integers(48, 512))
        kind = trial % 3
        pts = ring_points(n, jitter=0.3, seed=trial)
        if kind == 0:
            blk = log_kernel_oracle(pts, diag=float(rng.uniform(0.5, 3)))
        elif kind == 1:
            blk = inv_r_oracle(pts, diag=float(rng.uniform(0.5, 3)))
        else:
            sc = float(rng.uniform(0.2, 2))
            blk = log_kernel_oracle(pts, diag=1.0, scale=sc)
        H = hss1d_compress(blk, n, 1e-9, leaf_size=32)
        ref = dense_of(blk, n)
        assert rel_err(H.densify(), ref) <= 1e-8, (trial, n)


def test_serialization_roundtrip():
    n = 96
    pts = ring_points(n)
    blk = log_kernel_oracle(pts)
    H = hss1d_compress(blk, n, 1e-10, leaf_size=16)
    H2 = from_blob(to_blob(H))
    np.testing.assert_array_equal(H2.densify(), H.densify())
    assert H2.leaf_size == H.leaf_size and H2.n == H.n


def test_telescoping_identity():
    # densify assembled from per-level pieces equals the direct densify
    n = 128
    pts = ring_points(n)
    blk = log_kernel_oracle(pts)
    H = hss1d_compress(blk, n, 1e-10, leaf_size=16)

    def densify_node(v):
        if v.is_leaf:
            return v.D.copy()
        d1 = densify_node(v.c1)
        d2 = densify_node(v.c2)
        out = np.zeros((v.size, v.size))
        out[:d1.shape[0], :d1.shape[0]] = d1
        out[d1.shape[0]:, d1.shape[0]:] = d2
        lam1 = H.lam(v.c1)
        lam2 = H.lam(v.c2)
        th1 = H.theta(v.c1)
        th2 = H.theta(v.c2)
        out[:d1.shape[0], d1.shape[0]:] = lam1 @ v.B12 @ th2
        out[d1.shape[0]:, :d1.shape[0]] = lam2 @ v.B21 @ th1
        return out

    np.testing.assert_allclose(densify_node(H.root), H.densify(), atol=1e-12)
