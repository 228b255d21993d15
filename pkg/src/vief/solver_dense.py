"""Dense-block outer solver: proxy-accelerated skeleton compression of the
system matrix, telescoping inversion with dense per-box factors, and the
matvec / inverse-apply passes.

Per-box skeletons are chosen by interpolative decomposition of the
proxy-reduced block row (targets in the box against proxy-ring sources plus
true near-field points inside the band), so off-diagonal blocks factor
through skeleton submatrices of A.  Inversion follows the fine-to-coarse
recursion F = D + diag(E_children), E = (R F^-1 L)^-1, with the top-level F
factored directly.
"""

import os
import tempfile

import numpy as np
import scipy.linalg as sla

from .dense_core import interp_decomp, lu_factor_checked
from .kernels import PLAIN, get_assembler
from .tree import proxy_points


def _near_field_indices(box, grid, pad):
    """Grid indices inside the pad-ring dilation of the box, box excluded."""
    n = grid.n_side
    x0, x1 = max(box.x0 - pad, 0), min(box.x1 + pad, n)
    y0, y1 = max(box.y0 - pad, 0), min(box.y1 + pad, n)
    ix = np.arange(x0, x1)
    iy = np.arange(y0, y1)
    xx, yy = np.meshgrid(ix, iy, indexing="xy")
    inside = ((xx >= box.x0) & (xx < box.x1) & (yy >= box.y0) & (yy < box.y1))
    sel = ~inside
    return (yy[sel] * n + xx[sel]).astype(np.int64)


class _Spill:
    """Optional memmap backing for blocks above a size threshold."""

    def __init__(self, threshold_mb=None):
        self.threshold = None if threshold_mb is None else threshold_mb * (1 << 20)
        self._dir = None
        self._count = 0

    def hold(self, arr):
        if self.threshold is None or arr.nbytes < self.threshold:
            return arr
        if self._dir is None:
            self._dir = tempfile.TemporaryDirectory(prefix="vief_blocks_")
        path = os.path.join(self._dir.name, f"b{self._count}.npy")
        self._count += 1
        mm = np.lib.format.open_memmap(path, mode="w+", dtype=arr.dtype,
                                       shape=arr.shape)
        mm[:] = arr
        return mm


class FactoredInterp:
    """Interpolation operator pair stored as (perm, T).

    R = [I T] Pi (k x m downsampling), L = Pi^T [I; T^T] (m x k upsampling).
    """

    def __init__(self, id_factor, dtype, spill=None):
        self.perm = id_factor.perm
        T = np.ascontiguousarray(id_factor.T.astype(dtype, copy=False))
        self.T = spill.hold(T) if spill is not None else T
        self.k = id_factor.rank
        self.m = id_factor.ncols

    def apply_R(self, x):
        # [I T] Pi @ x
        return x[self.perm[:self.k]] + self.T @ x[self.perm[self.k:]]

    def apply_L(self, w):
        out = np.empty((self.m,) + w.shape[1:],
                       dtype=np.result_type(self.T.dtype, w.dtype))
        out[self.perm[:self.k]] = w
        out[self.perm[self.k:]] = self.T.T @ w
        return out

    def dense_L(self, dtype):
        out = np.zeros((self.m, self.k), dtype=dtype)
        out[self.perm[:self.k]] = np.eye(self.k, dtype=dtype)
        out[self.perm[self.k:]] = self.T.T
        return out

    def dense_R(self, dtype):
        out = np.zeros((self.k, self.m), dtype=dtype)
        out[:, self.perm[:self.k]] = np.eye(self.k, dtype=dtype)
        out[:, self.perm[self.k:]] = self.T
        return out

    def nbytes(self):
        return self.T.nbytes


class Hss2dMatrix:
    """Outer skeleton compression of the system matrix on a box tree."""

    def __init__(self, spec, grid, tree, eps, opts, quad=PLAIN):
        self.spec = spec
        self.grid = grid
        self.tree = tree
        self.eps = eps
        self.opts = opts
        self.quad = quad
        self.asm = get_assembler(spec, grid, quad)
        self.D = {}          # leaf diagonal blocks
        self.B = {}          # (B12, B21) sibling blocks per non-leaf
        self.Lfac = {}       # row interpolation per non-root box
        self.Rfac = {}       # column interpolation (shared object if symmetric)
        self.row_skel = {}
        self.col_skel = {}

    @property
    def n(self):
        return self.grid.n

    def work_rows(self, box):
        if box.is_leaf:
            return self.tree.owned_indices(box)
        c1, c2 = (self.tree.nodes[c] for c in box.children)
        return np.concatenate([self.row_skel[c1.idx], self.row_skel[c2.idx]])

    def work_cols(self, box):
        if box.is_leaf:
            return self.tree.owned_indices(box)
        c1, c2 = (self.tree.nodes[c] for c in box.children)
        return np.concatenate([self.col_skel[c1.idx], self.col_skel[c2.idx]])

    def nbytes(self):
        total = sum(d.nbytes for d in self.D.values())
        total += sum(b1.nbytes + b2.nbytes for b1, b2 in self.B.values())
        total += sum(f.nbytes() for f in self.Lfac.values())
        for i, f in self.Rfac.items():
            if f is not self.Lfac.get(i):
                total += f.nbytes()
        return total

    # -- matvec --------------------------------------------------------------

    def matvec(self, x):
        x = np.asarray(x, dtype=np.result_type(self.spec.dtype, x.dtype))
        single = x.ndim == 1
        if single:
            x = x[:, None]
        out = np.zeros_like(x)
        phi = {}
        tree = self.tree
        for box in tree.boxes_fine_to_coarse():
            if box.idx == 0:
                continue
            w = (x[tree.owned_indices(box)] if box.is_leaf
                 else np.vstack([phi[c] for c in box.children]))
            phi[box.idx] = self.Rfac[box.idx].apply_R(w)
        wdn = {}
        for box in tree.boxes_coarse_to_fine():
            if box.is_leaf:
                continue
            c1, c2 = box.children
            b12, b21 = self.B[box.idx]
            w1 = b12 @ phi[c2]
            w2 = b21 @ phi[c1]
            if box.idx in wdn:
                t = self.Lfac[box.idx].apply_L(wdn[box.idx])
                k1 = self.Rfac[c1].k
                w1 = w1 + t[:k1]
                w2 = w2 + t[k1:]
            wdn[c1] = w1
            wdn[c2] = w2
        for leaf in self.tree.leaves():
            idx = self.tree.owned_indices(leaf)
            res = self.D[leaf.idx] @ x[idx]
            if leaf.idx in wdn:
                res += self.Lfac[leaf.idx].apply_L(wdn[leaf.idx])
            out[idx] = res
        return out[:, 0] if single else out

    # -- dense reconstruction (testing) ---------------------------------------

    def densify(self):
        order = np.concatenate([self.tree.owned_indices(b)
                                for b in self.tree.leaves()])
        n = order.size
        pos = np.empty(self.n, dtype=np.int64)
        pos[order] = np.arange(n)
        out = np.zeros((n, n), dtype=self.spec.dtype)

        def lam(box):
            if box.is_leaf:
                return self.Lfac[box.idx].dense_L(self.spec.dtype)
            c1, c2 = box.children
            l = self.Lfac[box.idx].dense_L(self.spec.dtype)
            k1 = self.Rfac[c1].k
            return np.vstack([lam(self.tree.nodes[c1]) @ l[:k1],
                              lam(self.tree.nodes[c2]) @ l[k1:]])

        def theta(box):
            if box.is_leaf:
                return self.Rfac[box.idx].dense_R(self.spec.dtype)
            c1, c2 = box.children
            r = self.Rfac[box.idx].dense_R(self.spec.dtype)
            k1 = self.Rfac[c1].k
            return np.hstack([r[:, :k1] @ theta(self.tree.nodes[c1]),
                              r[:, k1:] @ theta(self.tree.nodes[c2])])

        def owned_pos(box):
            if box.is_leaf:
                return pos[self.tree.owned_indices(box)]
            return np.concatenate([owned_pos(self.tree.nodes[c])
                                   for c in box.children])

        def fill(box):
            if box.is_leaf:
                p = pos[self.tree.owned_indices(box)]
                out[np.ix_(p, p)] = self.D[box.idx]
                return
            c1, c2 = (self.tree.nodes[c] for c in box.children)
            fill(c1)
            fill(c2)
            b12, b21 = self.B[box.idx]
            p1, p2 = owned_pos(c1), owned_pos(c2)
            out[np.ix_(p1, p2)] = lam(c1) @ b12 @ theta(c2)
            out[np.ix_(p2, p1)] = lam(c2) @ b21 @ theta(c1)

        fill(self.tree.root)
        # out is in tree (leaf-concatenated) order; map to global index order
        res = np.zeros((n, n), dtype=self.spec.dtype)
        res[np.ix_(order, order)] = out
        return res


def compress_outer(spec, grid, tree, eps, opts, quad=PLAIN, spill=None):
    """Skeletonize all boxes fine-to-coarse via proxy-reduced block IDs."""
    H = Hss2dMatrix(spec, grid, tree, eps, opts, quad)
    asm = H.asm
    pad = opts.resolved_proxy_layers(spec)
    spill = spill or _Spill(None)
    symmetric = spec.symmetric
    for box in tree.boxes_fine_to_coarse():
        rows = H.work_rows(box)
        if box.is_leaf:
            H.D[box.idx] = asm.block(rows, rows)
        else:
            c1, c2 = box.children
            H.B[box.idx] = (
                spill.hold(asm.block(H.row_skel[c1], H.col_skel[c2])),
                spill.hold(asm.block(H.row_skel[c2], H.col_skel[c1])))
        if box.idx == 0:
            continue
        cols = rows if symmetric else H.work_cols(box)
        zp = proxy_points(box, pad)
        near = _near_field_indices(box, grid, pad)
        row_block = np.hstack([asm.proxy_cols(rows, zp),
                               asm.block(rows, near)])
        frow = interp_decomp(row_block.T.copy(), eps)
        if symmetric:
            fcol = frow
        else:
            col_block = np.vstack([asm.proxy_rows(zp, cols),
                                   asm.block(near, cols)])
            fcol = interp_decomp(col_block, eps, min_rank=frow.rank)
            if fcol.rank > frow.rank:
                frow = interp_decomp(row_block.T.copy(), eps,
                                     min_rank=fcol.rank)
        H.Lfac[box.idx] = FactoredInterp(frow, spec.dtype, spill)
        H.Rfac[box.idx] = (H.Lfac[box.idx] if symmetric
                           else FactoredInterp(fcol, spec.dtype, spill))
        H.row_skel[box.idx] = rows[frow.skeleton]
        H.col_skel[box.idx] = cols[fcol.skeleton]
    return H


class DenseBlockInverse:
    """Per-box dense factors of the telescoping inverse."""

    def __init__(self, H):
        self.H = H
        self.tree = H.tree
        self.F_lu = {}
        self.E = {}

    def nbytes(self):
        total = sum(lu[0].nbytes for lu in self.F_lu.values())
        total += sum(e.nbytes for e in self.E.values())
        total += sum(f.nbytes() for f in self.H.Lfac.values())
        for i, f in self.H.Rfac.items():
            if f is not self.H.Lfac.get(i):
                total += f.nbytes()
        return total

    def apply(self, f):
        H = self.H
        tree = self.tree
        f = np.asarray(f, dtype=np.result_type(H.spec.dtype, f.dtype))
        single = f.ndim == 1
        if single:
            f = f[:, None]
        out = np.zeros_like(f)
        ups = {}
        uin = {}
        for box in tree.boxes_fine_to_coarse():
            u = (f[tree.owned_indices(box)] if box.is_leaf
                 else np.vstack([ups[c] for c in box.children]))
            uin[box.idx] = u
            if box.idx == 0:
                continue
            phi = sla.lu_solve(self.F_lu[box.idx], u, check_finite=False)
            ups[box.idx] = self.E[box.idx] @ H.Rfac[box.idx].apply_R(phi)
        phidn = {0: None}
        for box in tree.boxes_coarse_to_fine():
            u = uin[box.idx]
            if box.idx == 0:
                res = sla.lu_solve(self.F_lu[0], u, check_finite=False)
            else:
                nu = u - H.Lfac[box.idx].apply_L(ups[box.idx])
                pd = phidn[box.idx]
                if pd is not None:
                    nu += H.Lfac[box.idx].apply_L(self.E[box.idx] @ pd)
                res = sla.lu_solve(self.F_lu[box.idx], nu, check_finite=False)
            if box.is_leaf:
                out[tree.owned_indices(box)] = res
            else:
                c1, c2 = box.children
                k1 = self.E[c1].shape[0]
                phidn[c1] = res[:k1]
                phidn[c2] = res[k1:]
        return out[:, 0] if single else out


def invert_dense_block(H, spill=None, free_source=False):
    """Fine-to-coarse telescoping inversion with dense per-box factors."""
    inv = DenseBlockInverse(H)
    spill = spill or _Spill(None)
    tree = H.tree
    dtype = H.spec.dtype
    for box in tree.boxes_fine_to_coarse():
        if box.is_leaf:
            F = np.array(H.D[box.idx], dtype=dtype, copy=True)
            if free_source:
                H.D.pop(box.idx)
        else:
            c1, c2 = box.children
            b12, b21 = H.B[box.idx]
            e1, e2 = inv.E[c1], inv.E[c2]
            k1, k2 = e1.shape[0], e2.shape[0]
            F = np.empty((k1 + k2, k1 + k2), dtype=dtype)
            F[:k1, :k1] = e1
            F[:k1, k1:] = b12
            F[k1:, :k1] = b21
            F[k1:, k1:] = e2
            if free_source:
                H.B.pop(box.idx)
        lu, piv = lu_factor_checked(F, where=f"box {box.idx} level {box.level}")
        inv.F_lu[box.idx] = (spill.hold(lu), piv)
        del F, lu
        if box.idx == 0:
            continue
        Lf = H.Lfac[box.idx]
        W = sla.lu_solve(inv.F_lu[box.idx], Lf.dense_L(dtype),
                         check_finite=False)
        G = H.Rfac[box.idx].apply_R(W)
        glu = lu_factor_checked(G, where=f"E of box {box.idx}")
        inv.E[box.idx] = spill.hold(
            sla.lu_solve(glu, np.eye(G.shape[0], dtype=dtype),
                         check_finite=False))
    return inv


def apply_inverse_dense_block(inv, f):
    return inv.apply(f)


def hss_matvec(H, x):
    return H.matvec(x)
