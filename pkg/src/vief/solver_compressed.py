"""Compressed-block solver: per-box inverse factors stored as 1D compressed
forms (interpolation operators in low-rank form, F^-1 as four compressed
blocks, the reduced operator E as a 1D HSS matrix), with one shared factor
record per level for translation-invariant kernels.

Per non-leaf box the working set [skeleton; residual] merges the children's
skeletons; F adds the children's reduced operators E to the cross-sibling
kernel entries.  The skeleton/residual diagonal blocks of F are rebuilt in
1D-HSS form from extracted child-E blocks plus one compressed cross-kernel
pass; the off-diagonal blocks are randomized-ID low-rank factors of the
exact restricted operator; the Schur complement on the skeleton set is the
skeleton block plus a low-rank update, and E follows by a Woodbury update of
the Schur factor, keeping every object in compressed form.
"""

import warnings

import numpy as np
import scipy.linalg as sla

from .config import SolverOptions
from .dense_core import (LowRankFactor, interp_decomp, lowrank_sum_recompress,
                         lu_factor_checked, rand_id, subseed)
from .errors import ConfigError
from .hss1d import (BlockDiagOp, EntryOracle, HssOp, InverseOp, LowRankOp,
                    PermutedOp, RestrictedOp, SumOp, compress_from_entries,
                    compress_from_operator, hss1d_invert, hss1d_lstsq)
from .kernels import PLAIN, get_assembler
from .solver_dense import compress_outer, invert_dense_block
from .tree import annotate_skeletons, build_tree, proxy_points


def ti_sharing_key(box, spec):
    """All boxes of one level share a factor record for TI kernels."""
    if not spec.translation_invariant:
        raise ConfigError("factor sharing requires a translation-invariant kernel")
    return box.level


class _CrossOracle:
    """Masked system-matrix oracle on an ordered index list: entries between
    points of different children, zero inside a child (those interactions
    already live in the child's reduced operator)."""

    def __init__(self, asm, idx, member1):
        self.asm = asm
        self.idx = np.asarray(idx, dtype=np.int64)
        self.member1 = np.asarray(member1, dtype=bool)
        self.n = self.idx.size
        self.dtype = asm.dtype

    def block(self, I, J):
        I = np.asarray(I, dtype=np.int64)
        J = np.asarray(J, dtype=np.int64)
        out = self.asm.block(self.idx[I], self.idx[J])
        cross = self.member1[I][:, None] ^ self.member1[J][None, :]
        out[~cross] = 0.0
        return out


class _PairOracle:
    """Raw-kernel oracle K(z_i, x_j) between a proxy ring and grid points."""

    def __init__(self, asm, row_coords, col_idx):
        self.asm = asm
        self.row_coords = row_coords
        self.col_coords = asm.grid.int_coords(col_idx)
        self.n = row_coords.shape[0]
        self.ncols = len(col_idx)
        self.dtype = asm.dtype

    def block(self, I, J):
        return self.asm.raw_kernel_block(self.row_coords[np.asarray(I)],
                                         self.col_coords[np.asarray(J)])


class BoxFactors:
    """Inverse factors of one box (or one level in TI mode)."""

    __slots__ = ("kind", "k", "r", "k1", "T_up", "T_dn", "E", "F_lu",
                 "Finv_rs", "F_sr", "F_rs_off", "Sinv", "perm", "iperm")

    def __init__(self, kind):
        self.kind = kind
        self.T_up = None
        self.T_dn = None
        self.E = None
        self.F_lu = None
        self.Finv_rs = None
        self.F_sr = None
        self.F_rs_off = None
        self.Sinv = None
        self.perm = None   # [children-skeleton concat] -> [sk, rs]
        self.iperm = None

    def nbytes(self):
        total = 0
        for name in ("T_up", "T_dn", "E", "Finv_rs", "F_sr", "F_rs_off", "Sinv"):
            a = getattr(self, name)
            if a is None:
                continue
            if hasattr(a, "nbytes"):
                total += a.nbytes if isinstance(a, np.ndarray) else a.nbytes()
        if self.F_lu is not None:
            total += self.F_lu[0].nbytes
        return total

    # -- F^-1 action -----------------------------------------------------------

    def apply_finv(self, u):
        """sigma = F^-1 u on the box ordering [sk, rs]."""
        if self.F_lu is not None:
            return sla.lu_solve(self.F_lu, u, check_finite=False)
        k = self.k
        u_sk, u_rs = u[:k], u[k:]
        t = u_sk - self.F_sr.apply(self.Finv_rs.apply(u_rs))
        s_sk = self.Sinv.apply(t)
        s_rs = self.Finv_rs.apply(u_rs - self.F_rs_off.apply(s_sk))
        return np.vstack([s_sk, s_rs])

    def apply_R(self, phi):
        """[I T_up] phi."""
        k = self.k
        if isinstance(self.T_up, np.ndarray):
            return phi[:k] + self.T_up @ phi[k:]
        return phi[:k] + self.T_up.apply(phi[k:])

    def apply_L(self, w):
        """[I; T_dn^T] w."""
        if isinstance(self.T_dn, np.ndarray):
            low = self.T_dn.T @ w
        else:
            low = self.T_dn.apply_t(w)
        return np.vstack([w, low])

    def apply_E(self, x):
        if isinstance(self.E, np.ndarray):
            return self.E @ x
        return self.E.matvec(x)


class CompressedInverse:
    """Per-box (or per-level, TI) compressed inverse factors."""

    def __init__(self, spec, grid, tree, eps, opts, quad, ti_mode):
        self.spec = spec
        self.grid = grid
        self.tree = tree
        self.eps = eps
        self.opts = opts
        self.quad = quad
        self.ti_mode = ti_mode
        self.factors = {}        # box idx (NTI) or level (TI) -> BoxFactors
        self.root_lu = None
        self.root_inv = None     # Hss1dInverse when the top block is large
        self.dense_delegate = None

    def factor_of(self, box):
        return self.factors[box.level if self.ti_mode else box.idx]

    def record_count(self):
        top = 1 if (self.root_lu is not None or self.root_inv is not None) else 0
        return len(self.factors) + top

    def nbytes(self):
        if self.dense_delegate is not None:
            return self.dense_delegate.nbytes()
        total = sum(f.nbytes() for f in self.factors.values())
        if self.root_lu is not None:
            total += self.root_lu[0].nbytes
        if self.root_inv is not None:
            total += self.root_inv.nbytes()
        return total

    # -- Algorithm: inverse apply ----------------------------------------------

    def apply(self, f):
        if self.dense_delegate is not None:
            return self.dense_delegate.apply(f)
        f = np.asarray(f, dtype=np.result_type(self.spec.dtype, f.dtype))
        single = f.ndim == 1
        if single:
            f = f[:, None]
        out = np.zeros_like(f)
        tree = self.tree
        ups, uin = {}, {}
        for box in tree.boxes_fine_to_coarse():
            if box.is_leaf:
                u = f[np.concatenate([box.sk_idx, box.rs_idx])]
            else:
                u = np.vstack([ups[c] for c in box.children])
                u = u[self.factor_of(box).perm] if box.idx else u
            uin[box.idx] = u
            if box.idx == 0:
                continue
            fac = self.factor_of(box)
            phi = fac.apply_finv(u)
            ups[box.idx] = fac.apply_E(fac.apply_R(phi))
        phidn = {0: None}
        for box in tree.boxes_coarse_to_fine():
            u = uin[box.idx]
            if box.idx == 0:
                res = (sla.lu_solve(self.root_lu, u, check_finite=False)
                       if self.root_lu is not None else self.root_inv.apply(u))
            else:
                fac = self.factor_of(box)
                nu = u - fac.apply_L(ups[box.idx])
                if phidn[box.idx] is not None:
                    nu += fac.apply_L(fac.apply_E(phidn[box.idx]))
                res = fac.apply_finv(nu)
            if box.is_leaf:
                out[np.concatenate([box.sk_idx, box.rs_idx])] = res
            else:
                if box.idx:
                    res = res[self.factor_of(box).iperm]
                c1, c2 = box.children
                k1 = self.factor_of(tree.nodes[c1]).k
                phidn[c1] = res[:k1]
                phidn[c2] = res[k1:]
        return out[:, 0] if single else out


def _interp_lowrank(asm, box, sk_idx, rs_idx, eps, opts, seed_key):
    """Low-rank interpolation factors mapping residual to skeleton points.

    Solves K(Z, X_sk) T = K(Z, X_rs) against the full proxy band in the
    least-squares sense (the square-truncated proxy system is numerically
    rank-deficient and loses several digits; a config flag restores it).
    The randomized ID reduces the right-hand block to its eps-rank before
    the solve, so only O(rank) columns are ever solved.  Field scalings make
    T consistent with the full system matrix.
    """
    k, r = sk_idx.size, rs_idx.size
    dtype = asm.dtype
    if r == 0 or k == 0:
        zero = LowRankFactor.zeros(k, r, dtype)
        return zero, zero, 0
    layers = opts.resolved_layers(asm.spec)
    budget = k if opts.square_proxy else None
    zp = proxy_points(box, layers, budget=budget)
    krp = _PairOracle(asm, zp, rs_idx).block(np.arange(zp.shape[0]), np.arange(r))
    kzs = _PairOracle(asm, zp, sk_idx).block(np.arange(zp.shape[0]), np.arange(k))

    def solve_scaled(weights):
        # the interpolation entering the system matrix carries the
        # multiplicative field weights; solving the pre-scaled system keeps
        # it stable when the weights span many orders of magnitude
        kzs_w = kzs * weights[sk_idx][None, :]
        krp_w = krp * weights[rs_idx][None, :]
        if r <= 2 * opts.inner_leaf_size:
            fid = interp_decomp(krp_w, eps)
        else:
            fid = rand_id(lambda x: krp_w @ x, lambda y: krp_w.T @ y,
                          zp.shape[0], r, eps,
                          seed=subseed_int(opts.seed, seed_key, 1))
        if fid.rank == 0:
            return LowRankFactor.zeros(k, r, dtype), 0
        if opts.square_proxy:
            ksp = compress_from_entries(EntryOracle(kzs_w, k, dtype), eps,
                                        opts.inner_leaf_size)
            U = hss1d_invert(ksp).apply(krp_w[:, fid.skeleton])
        else:
            U, _ = hss1d_lstsq(kzs_w, krp_w[:, fid.skeleton])
        return LowRankFactor(U, fid.right_matrix(dtype).T), fid.rank

    t_up, q_up = solve_scaled(asm.c_vals)
    if asm.spec.symmetric:
        t_dn, q_dn = t_up, q_up
    else:
        t_dn, q_dn = solve_scaled(asm.b_vals)
    return t_up, t_dn, max(q_up, q_dn)


def subseed_int(seed, *keys):
    return int(subseed(seed, *keys).integers(0, 2**62))


def _lowrank_of_restricted(rop, eps, seed, cap=None):
    fid = rand_id(rop.matvec, rop.rmatvec, rop.shape[0], rop.shape[1], eps,
                  seed=seed, max_rank=cap)
    q = fid.rank
    if q == 0:
        return LowRankFactor.zeros(rop.shape[0], rop.shape[1], rop.dtype), 0
    U = rop.matvec(np.eye(rop.shape[1], dtype=rop.dtype)[:, fid.skeleton])
    V = fid.right_matrix(rop.dtype).T
    return LowRankFactor(U, V), q


def _extract_perm(parent_positions, k1):
    """(sorted child subsets, permutation block-diag->parent order)."""
    m1 = parent_positions < k1
    s1 = np.sort(parent_positions[m1])
    s2 = np.sort(parent_positions[~m1] - k1)
    pi = np.empty(parent_positions.size, dtype=np.int64)
    pi[m1] = np.searchsorted(s1, parent_positions[m1])
    pi[~m1] = s1.size + np.searchsorted(s2, parent_positions[~m1] - k1)
    return s1, s2, pi


def _as_hss(E, eps, leaf_size):
    if isinstance(E, np.ndarray):
        return compress_from_entries(EntryOracle(E, E.shape[0], E.dtype), eps,
                                     leaf_size)
    return E


def _dense_E(E):
    if isinstance(E, np.ndarray):
        return E
    return E.densify()


def build_finv(fac, box, e1, e2, k1_concat, asm, eps, opts, seed_key):
    """Fill the four compressed blocks of F^-1 for a non-leaf box.

    e1/e2 are the children's reduced operators (1D HSS) on the children's
    skeleton orderings; k1_concat is the first child's skeleton size.
    """
    k, r = fac.k, fac.r
    leaf1d = opts.inner_leaf_size
    full_order = fac.perm              # [sk, rs] -> concat position
    member1_full = full_order < k1_concat
    idx_full = np.concatenate([box.sk_idx, box.rs_idx])
    cross_full = compress_from_entries(
        _CrossOracle(asm, idx_full, member1_full), eps, leaf1d)
    bd_full = BlockDiagOp([HssOp(e1), HssOp(e2)])
    f_full = SumOp([PermutedOp(bd_full, full_order), HssOp(cross_full)])

    # residual diagonal block: extracted child-E parts plus extracted cross
    s1_rs, s2_rs, pi_rs = _extract_perm(full_order[k:], k1_concat)
    bd_rs = BlockDiagOp([HssOp(e1.extract(s1_rs)), HssOp(e2.extract(s2_rs))])
    k_rs = cross_full.extract(np.arange(k, k + r))
    f_rs = compress_from_operator(
        SumOp([PermutedOp(bd_rs, pi_rs), HssOp(k_rs)]), eps, leaf1d)
    fac.Finv_rs = hss1d_invert(f_rs)

    # off-diagonal blocks as low-rank factors of the exact restricted operator
    cap = rank_cap(opts, box.npoints)
    rop = RestrictedOp(f_full, np.arange(k), np.arange(k, k + r))
    fac.F_sr, q_sr = _lowrank_of_restricted(
        rop, eps, subseed_int(opts.seed, seed_key, 2), cap)
    if asm.spec.symmetric:
        fac.F_rs_off = fac.F_sr.transpose()
        q_rs = q_sr
    else:
        rop2 = RestrictedOp(f_full, np.arange(k, k + r), np.arange(k))
        fac.F_rs_off, q_rs = _lowrank_of_restricted(
            rop2, eps, subseed_int(opts.seed, seed_key, 3), cap)

    # Schur complement on the skeleton set: skeleton block of F plus the
    # low-rank elimination term, compressed in a single fused pass
    s1_sk, s2_sk, pi_sk = _extract_perm(full_order[:k], k1_concat)
    bd_sk = BlockDiagOp([HssOp(e1.extract(s1_sk)), HssOp(e2.extract(s2_sk))])
    k_sk = cross_full.extract(np.arange(k))
    parts = [PermutedOp(bd_sk, pi_sk), HssOp(k_sk)]
    if fac.F_sr.rank and fac.F_rs_off.rank:
        core = fac.F_sr.V.T @ fac.Finv_rs.apply(fac.F_rs_off.U)
        pert = lowrank_sum_recompress(
            [LowRankFactor(-fac.F_sr.U @ core, fac.F_rs_off.V)], eps)
        if pert.rank:
            parts.append(LowRankOp(pert, k, np.result_type(asm.dtype, pert.U.dtype)))
    schur = compress_from_operator(SumOp(parts), eps, leaf1d)
    fac.Sinv = hss1d_invert(schur)
    return schur, max(q_sr, q_rs)


def build_e(fac, schur, eps, opts):
    """Reduced operator E for the box from its F^-1 blocks.

    E^-1 = S^-1 + (low-rank in the interpolation factors); the three update
    terms are assembled from the Schur-block identities and recompressed
    into a single factor.  Folding them in through a Woodbury core turns out
    to be badly conditioned when the kernel carries strong field weights, so
    the sum is inverted instead: densely below `e_dense_cut`, otherwise by
    compressing E^-1 to a 1D-HSS form, inverting it, and compressing the
    solve action back to a matrix.
    """
    k = fac.k
    if fac.T_up.rank == 0 or fac.r == 0:
        fac.E = schur
        return
    uu, vu = fac.T_up.U, fac.T_up.V
    ud, vd = fac.T_dn.U, fac.T_dn.V
    us, vs = fac.F_sr.U, fac.F_sr.V
    ur, vr = fac.F_rs_off.U, fac.F_rs_off.V
    finv = fac.Finv_rs
    sinv = fac.Sinv

    finv_ur = finv.apply(ur) if ur.shape[1] else ur
    finv_vd = finv.apply(vd)
    c1 = vu.T @ finv_ur                       # (qu x qr)
    terms = []
    # T_up phi_rs<-sk : -Uu (Vu^T Finv Ur) (Vr^T S^-1)
    if c1.size:
        v1 = sinv.apply(vr, trans=True)
        terms.append(LowRankFactor(-(uu @ c1), v1))
    # phi_sk<-rs (T_dn)^T : -(S^-1 Us) (Vs^T Finv Vd) Ud^T
    if us.shape[1]:
        c2 = vs.T @ finv_vd
        terms.append(LowRankFactor(-(sinv.apply(us) @ c2), ud))
    # T_up phi_rs (T_dn)^T, phi_rs = Finv + Finv Ur Vr^T S^-1 Us Vs^T Finv
    c3 = vu.T @ finv_vd
    terms.append(LowRankFactor(uu @ c3, ud))
    if us.shape[1] and ur.shape[1]:
        m1 = vr.T @ sinv.apply(us)            # (qr x qs)
        m2 = vs.T @ finv_vd                   # (qs x qd)
        terms.append(LowRankFactor(uu @ (c1 @ (m1 @ m2)), ud))
    upd = lowrank_sum_recompress(terms, eps)
    if upd.rank == 0:
        fac.E = schur
        return
    if k <= opts.e_dense_cut:
        einv = sinv.apply(np.eye(k, dtype=upd.U.dtype)) + upd.dense()
        lu = lu_factor_checked(einv, where="dense E inverse")
        fac.E = sla.lu_solve(lu, np.eye(k, dtype=einv.dtype),
                             check_finite=False)
        return
    einv_op = SumOp([InverseOp(sinv, anchor_source=HssOp(schur)),
                     LowRankOp(upd, k, upd.U.dtype)])
    einv_hss = compress_from_operator(einv_op, eps, opts.inner_leaf_size)
    esolve = hss1d_invert(einv_hss)
    fac.E = compress_from_operator(
        InverseOp(esolve, anchor_source=HssOp(schur)), eps,
        opts.inner_leaf_size)


def rank_cap(opts, npoints):
    return int(opts.rank_cap_factor * (8 + 3 * np.log2(max(npoints, 2))))


def apply_finv(fac, u):
    return fac.apply_finv(u)


def _leaf_factors(box, asm, eps, opts, seed_key):
    fac = BoxFactors("leaf")
    k, r = box.sk_idx.size, box.rs_idx.size
    fac.k, fac.r = k, r
    fac.k1 = None
    order = np.concatenate([box.sk_idx, box.rs_idx])
    F = asm.block(order, order)
    fac.F_lu = lu_factor_checked(F, where=f"leaf {box.idx}")
    t_up, t_dn, _ = _interp_lowrank(asm, box, box.sk_idx, box.rs_idx, eps,
                                    opts, seed_key)
    fac.T_up = t_up.dense() if t_up.rank else np.zeros((k, r), asm.dtype)
    fac.T_dn = t_dn.dense() if t_dn.rank else np.zeros((k, r), asm.dtype)
    _dense_E_from_lu(fac, asm.dtype)
    return fac


def _dense_E_from_lu(fac, dtype):
    """E = ([I T_up] F^-1 [I; T_dn^T])^-1, dense small-block path."""
    k, r = fac.k, fac.r
    L = np.vstack([np.eye(k, dtype=dtype), fac.T_dn.T])
    W = sla.lu_solve(fac.F_lu, L, check_finite=False)
    G = W[:k] + fac.T_up @ W[k:]
    glu = lu_factor_checked(G, where="dense E block")
    fac.E = sla.lu_solve(glu, np.eye(k, dtype=dtype), check_finite=False)


def _dense_factors(box, e1, e2, k1, asm, eps, opts, seed_key):
    """Per-box factors with dense blocks (small skeletons below k_cut)."""
    fac = BoxFactors("dense")
    k, r = box.sk_idx.size, box.rs_idx.size
    fac.k, fac.r = k, r
    fac.perm = box.work_perm
    fac.iperm = np.empty_like(fac.perm)
    fac.iperm[fac.perm] = np.arange(fac.perm.size)
    order = np.concatenate([box.sk_idx, box.rs_idx])
    member1 = fac.perm < k1
    F = asm.block(order, order)
    cross = member1[:, None] ^ member1[None, :]
    F[~cross] = 0.0
    ebd = np.zeros((k + r, k + r), dtype=asm.dtype)
    e1d, e2d = _dense_E(e1), _dense_E(e2)
    concat = np.zeros_like(ebd)
    concat[:k1, :k1] = e1d
    concat[k1:, k1:] = e2d
    ebd = concat[np.ix_(fac.perm, fac.perm)]
    F += ebd
    fac.F_lu = lu_factor_checked(F, where=f"box {box.idx}")
    t_up, t_dn, _ = _interp_lowrank(asm, box, box.sk_idx, box.rs_idx, eps,
                                    opts, seed_key)
    fac.T_up = t_up.dense() if t_up.rank else np.zeros((k, r), asm.dtype)
    fac.T_dn = t_dn.dense() if t_dn.rank else np.zeros((k, r), asm.dtype)
    _dense_E_from_lu(fac, asm.dtype)
    return fac


def _compressed_factors(box, e1, e2, k1, asm, eps, opts, seed_key):
    fac = BoxFactors("compressed")
    k, r = box.sk_idx.size, box.rs_idx.size
    fac.k, fac.r = k, r
    fac.perm = box.work_perm
    fac.iperm = np.empty_like(fac.perm)
    fac.iperm[fac.perm] = np.arange(fac.perm.size)
    leaf1d = opts.inner_leaf_size
    e1h = _as_hss(e1, eps, leaf1d)
    e2h = _as_hss(e2, eps, leaf1d)
    t_up, t_dn, q_t = _interp_lowrank(asm, box, box.sk_idx, box.rs_idx, eps,
                                      opts, seed_key)
    fac.T_up, fac.T_dn = t_up, t_dn
    schur, q_f = build_finv(fac, box, e1h, e2h, k1, asm, eps, opts, seed_key)
    cap = rank_cap(opts, box.npoints)
    if max(q_t, q_f) > cap:
        warnings.warn(
            f"low-rank blocks of box {box.idx} exceeded the rank cap "
            f"({max(q_t, q_f)} > {cap}); falling back to dense factors")
        return _dense_factors(box, e1, e2, k1, asm, eps, opts, seed_key)
    build_e(fac, schur, eps, opts)
    return fac


def compress_inverse(spec, grid, tree=None, eps=1e-10, opts=None, quad=PLAIN,
                     ti_mode=False, support_mask=None):
    """Fine-to-coarse build of the compressed inverse.

    Boxes with skeletons at or below opts.k_cut keep dense factors; larger
    boxes store the compressed forms.  TI mode computes one factor record
    per level from the first box of the level and shares it.  k_cut=None
    (infinity) delegates to the dense-block solver outright, which is the
    same arithmetic the per-box dense path runs.
    """
    opts = opts or SolverOptions(eps=eps)
    if ti_mode and not spec.translation_invariant:
        raise ConfigError("ti_mode requires a translation-invariant kernel")
    if tree is None:
        tree = build_tree(grid, opts.leaf_size)
    asm = get_assembler(spec, grid, quad)
    inv = CompressedInverse(spec, grid, tree, eps, opts, quad, ti_mode)
    if opts.k_cut is None or opts.k_cut == np.inf:
        H = compress_outer(spec, grid, tree, eps, opts, quad)
        inv.dense_delegate = invert_dense_block(H)
        inv.dense_matvec_source = H
        return inv
    if tree.nodes[0].sk_idx is None:
        kw = {}
        if opts.keep_interface_interior(spec):
            kw = dict(k_wave=spec.k,
                      points_per_wavelength=opts.points_per_wavelength)
        annotate_skeletons(tree, opts.resolved_layers(spec),
                           support_mask=support_mask, **kw)

    def factors_for(box):
        if box.is_leaf:
            return _leaf_factors(box, asm, eps, opts, box.level)
        c1, c2 = (tree.nodes[c] for c in box.children)
        e1 = inv.factor_of(c1).E
        e2 = inv.factor_of(c2).E
        k1 = c1.sk_idx.size
        if box.sk_idx.size <= opts.k_cut:
            return _dense_factors(box, e1, e2, k1, asm, eps, opts, box.level)
        return _compressed_factors(box, e1, e2, k1, asm, eps, opts, box.level)

    for level in range(tree.depth, 0, -1):
        boxes = [tree.nodes[i] for i in tree.levels[level]]
        if ti_mode:
            inv.factors[level] = factors_for(boxes[0])
        else:
            for box in boxes:
                inv.factors[box.idx] = factors_for(box)

    # top level: F_root = diag(E_c1, E_c2) + cross block, factored directly
    root = tree.nodes[0]
    c1, c2 = (tree.nodes[c] for c in root.children) if not root.is_leaf else (None, None)
    if root.is_leaf:
        order = np.concatenate([root.sk_idx, root.rs_idx])
        inv.root_lu = lu_factor_checked(asm.block(order, order), where="root")
        return inv
    e1, e2 = inv.factor_of(c1).E, inv.factor_of(c2).E
    k1 = c1.sk_idx.size
    idx_full = np.concatenate([c1.sk_idx, c2.sk_idx])
    member1 = np.arange(idx_full.size) < k1
    m = idx_full.size
    if m <= 4 * opts.k_cut:
        F = asm.block(idx_full, idx_full)
        cross = member1[:, None] ^ member1[None, :]
        F[~cross] = 0.0
        F[:k1, :k1] += _dense_E(e1)
        F[k1:, k1:] += _dense_E(e2)
        inv.root_lu = lu_factor_checked(F, where="root")
    else:
        cross = compress_from_entries(_CrossOracle(asm, idx_full, member1),
                                      eps, opts.inner_leaf_size)
        e1h = _as_hss(e1, eps, opts.inner_leaf_size)
        e2h = _as_hss(e2, eps, opts.inner_leaf_size)
        fop = SumOp([BlockDiagOp([HssOp(e1h), HssOp(e2h)]), HssOp(cross)])
        froot = compress_from_operator(fop, eps, opts.inner_leaf_size,
                                       align=(k1,))
        inv.root_inv = hss1d_invert(froot)
    return inv


def apply_inverse_compressed(inv, f):
    return inv.apply(f)
