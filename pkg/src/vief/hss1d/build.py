"""Constructors for Hss1dMatrix: entry-driven compression and
operator-driven (re)compression from row/column generators.

Every constructor produces the canonical balanced interval tree, so any two
matrices built over the same ordering can be combined structurally.
"""

import numpy as np

from ..dense_core import fast_rng, interp_decomp
from ..errors import NumericalError
from .core import Hss1dMatrix, Node, build_interval_tree


class EntryOracle:
    """Adapter exposing block(I, J) over an entry callable or dense matrix."""

    def __init__(self, source, n, dtype=np.float64):
        self.n = n
        if callable(source):
            self._fn = source
            self.dtype = dtype
        else:
            mat = np.asarray(source)
            assert mat.shape == (n, n)
            self._fn = lambda I, J: mat[np.ix_(I, J)]
            self.dtype = mat.dtype

    def block(self, I, J):
        return np.asarray(self._fn(np.asarray(I), np.asarray(J)))


def _paired_ids(brow, bcol, eps):
    """Row ID of `brow` and column ID of `bcol`, padded to equal rank."""
    frow = interp_decomp(brow.T.copy(), eps)
    fcol = interp_decomp(bcol, eps, min_rank=frow.rank)
    if fcol.rank > frow.rank:
        frow = interp_decomp(brow.T.copy(), eps, min_rank=fcol.rank)
    return frow, fcol


def _sorted_basis(work, fid, basis, side):
    """Sort skeleton positions ascending, permuting the basis to match."""
    skel = work[fid.skeleton]
    order = np.argsort(skel, kind="stable")
    if side == "row":
        return skel[order], basis[:, order]
    return skel[order], basis[order, :]


def compress_from_entries(oracle, eps, leaf_size):
    """Bottom-up HSS compression of an n x n entry oracle.

    Block rows/columns are compressed against the full complement; with the
    lattice kernel table this is a lookup-bound O(n^2) pass, cheap at the
    sizes per-box operators reach.  Row and column skeleton ranks are padded
    to match so the downstream inversion sees square blocks.
    """
    n = oracle.n
    dtype = oracle.dtype
    root = build_interval_tree(n, leaf_size)
    H = Hss1dMatrix(root, n, dtype, leaf_size)

    def visit(v):
        if v.is_leaf:
            work = work_c = np.arange(v.lo, v.hi)
            v.D = oracle.block(work, work)
        else:
            visit(v.c1)
            visit(v.c2)
            work = np.concatenate([v.c1.row_skel, v.c2.row_skel])
            work_c = np.concatenate([v.c1.col_skel, v.c2.col_skel])
            v.B12 = oracle.block(v.c1.row_skel, v.c2.col_skel)
            v.B21 = oracle.block(v.c2.row_skel, v.c1.col_skel)
        if v is root:
            return
        comp = np.concatenate([np.arange(0, v.lo), np.arange(v.hi, n)])
        frow, fcol = _paired_ids(oracle.block(work, comp),
                                 oracle.block(comp, work_c), eps)
        v.row_skel, v.L = _sorted_basis(work, frow, frow.interp_rows(dtype), "row")
        v.col_skel, v.R = _sorted_basis(work_c, fcol, fcol.right_matrix(dtype), "col")

    visit(root)
    return H


def _complement(lo, hi, n):
    return np.concatenate([np.arange(0, lo), np.arange(hi, n)])


def _anchors_cached(op, lo, hi):
    cache = getattr(op, "_anchor_cache", None)
    if cache is None:
        cache = op._anchor_cache = {}
    key = (lo, hi)
    if key not in cache:
        cache[key] = op.anchor_columns(np.arange(lo, hi))
    return cache[key]


def _probe_positions(op, lo, hi, extra, key):
    """Sorted complement positions to probe: the expression's structural
    anchor columns plus index-near padding and a few random draws
    (deterministic in (lo, hi, key))."""
    n = op.n
    near = np.concatenate([np.arange(max(0, lo - 8), lo),
                           np.arange(hi, min(n, hi + 8))])
    rng = fast_rng(0xC0FFEE, lo, hi, n, key)
    comp = _complement(lo, hi, n)
    rand = (comp[rng.choice(comp.size, size=min(extra, comp.size), replace=False)]
            if comp.size else comp)
    anchors = _anchors_cached(op, lo, hi)
    return np.unique(np.concatenate([near, anchors, rand])).astype(np.int64)


def compress_from_operator(op, eps, leaf_size, align=()):
    """Fresh canonical HSS form of a structured operator expression.

    Node IDs run on true operator values sampled at the expression's anchor
    columns (skeleton positions of the operand structures, which capture the
    off-diagonal row/column spaces to the operands' accuracy), then verified
    against an independent random probe set.  Thresholds are absolute
    against the scale of the expression's inputs, so cancellations collapse
    to low rank.  Cost is O(n r^2 log n) plus sub-block evaluations.
    """
    n = op.n
    dtype = op.dtype
    root = build_interval_tree(n, leaf_size, align=align)
    H = Hss1dMatrix(root, n, dtype, leaf_size)
    scale = op.scale_hint()
    if scale == 0.0:
        from .ops import zero_hss
        return zero_hss(n, dtype, leaf_size)
    # per-block relative thresholds (operators from weighted kernels span
    # many orders of magnitude across blocks and the inversion needs each
    # block at its own relative accuracy); the absolute floor only collapses
    # exact cancellations to rank zero
    floor = eps * scale * 1e-4

    def node_ids(v, work, work_c):
        if work.size == 0 and work_c.size == 0:
            empty = interp_decomp(np.zeros((0, 0), dtype), eps)
            return empty, empty
        extra = 8
        for attempt in range(4):
            probes = _probe_positions(op, v.lo, v.hi, extra, attempt)
            # independent verification columns evaluated in the same pass
            rng = fast_rng(0xBEEF, v.lo, v.hi, n, attempt)
            comp = _complement(v.lo, v.hi, n)
            check = np.sort(comp[rng.choice(comp.size, size=min(12, comp.size),
                                            replace=False)]) if comp.size else comp
            cols = np.unique(np.concatenate([probes, check]))
            ball = op.sub_block(work, cols)
            brow = ball[:, np.searchsorted(cols, probes)]
            pr = ball[:, np.searchsorted(cols, check)]
            bcol = op.sub_block(probes, work_c)
            frow = interp_decomp(brow.T.copy(), eps, eps_abs=floor)
            fcol = interp_decomp(bcol, eps, eps_abs=floor, min_rank=frow.rank)
            if fcol.rank > frow.rank:
                frow = interp_decomp(brow.T.copy(), eps, eps_abs=floor,
                                     min_rank=fcol.rank)
            block_scale = max(np.abs(brow).max() if brow.size else 0.0,
                              floor / max(eps, 1e-300))
            resid = pr - frow.interp_rows(dtype) @ pr[frow.skeleton]
            if resid.size == 0 or np.abs(resid).max() <= 100 * eps * block_scale \
                    or probes.size >= comp.size:
                return frow, fcol
            extra = max(2 * extra, 4 * probes.size)
        raise NumericalError(
            f"probe compression failed to verify on [{v.lo},{v.hi})")

    def visit(v):
        if v.is_leaf:
            work = work_c = np.arange(v.lo, v.hi)
            v.D = op.sub_block(work, work)
        else:
            visit(v.c1)
            visit(v.c2)
            work = np.concatenate([v.c1.row_skel, v.c2.row_skel])
            work_c = np.concatenate([v.c1.col_skel, v.c2.col_skel])
            v.B12 = op.sub_block(v.c1.row_skel, v.c2.col_skel)
            v.B21 = op.sub_block(v.c2.row_skel, v.c1.col_skel)
        if v is root:
            return
        frow, fcol = node_ids(v, work, work_c)
        # skeleton positions stay sorted: sub_block requires ascending sets
        v.row_skel, v.L = _sorted_basis(work, frow, frow.interp_rows(dtype), "row")
        v.col_skel, v.R = _sorted_basis(work_c, fcol, fcol.right_matrix(dtype), "col")

    visit(root)
    return H


# ---------------------------------------------------------------------------
# operator expressions (inputs to compress_from_operator)

class HssOp:
    def __init__(self, H):
        self.H = H
        self.n = H.n
        self.dtype = H.dtype

    def anchor_columns(self, S):
        return self.H.anchor_columns(S)

    def scale_hint(self):
        return self.H.norm_est()

    def sub_block(self, I, J):
        return self.H.sub_block(I, J)

    def matvec(self, x, trans=False):
        return self.H.matvec(x, trans)


class LowRankOp:
    def __init__(self, lr, n, dtype):
        self.lr = lr
        self.n = n
        self.dtype = dtype

    def anchor_columns(self, S):
        # largest-norm rows of the factors outside the set keep the sampled
        # factor blocks full rank
        comp = np.setdiff1d(np.arange(self.n), S, assume_unique=True)
        if comp.size == 0 or self.lr.rank == 0:
            return np.zeros(0, dtype=np.int64)
        take = min(comp.size, self.lr.rank + 8)
        out = []
        for fac in (self.lr.U, self.lr.V):
            norms = np.abs(fac[comp]).sum(axis=1)
            out.append(comp[np.argsort(-norms, kind="stable")[:take]])
        return np.unique(np.concatenate(out))

    def scale_hint(self):
        import scipy.linalg as sla
        if self.lr.rank == 0:
            return 0.0
        return float(sla.norm(self.lr.U, 2) * sla.norm(self.lr.V, 2))

    def sub_block(self, I, J):
        return (self.lr.U[I] @ self.lr.V[J].T).astype(self.dtype, copy=False)

    def matvec(self, x, trans=False):
        return self.lr.apply_t(x) if trans else self.lr.apply(x)


class SumOp:
    def __init__(self, parts):
        self.parts = parts
        self.n = parts[0].n
        assert all(p.n == self.n for p in parts)
        self.dtype = np.result_type(*(p.dtype for p in parts))

    def anchor_columns(self, S):
        return np.unique(np.concatenate(
            [p.anchor_columns(S) for p in self.parts]))

    def scale_hint(self):
        return max(p.scale_hint() for p in self.parts)

    def sub_block(self, I, J):
        out = np.zeros((len(I), len(J)), dtype=self.dtype)
        for p in self.parts:
            out += p.sub_block(I, J)
        return out

    def matvec(self, x, trans=False):
        out = None
        for p in self.parts:
            y = p.matvec(x, trans)
            out = y if out is None else out + y
        return out


class BlockDiagOp:
    def __init__(self, parts):
        self.parts = parts
        self.offsets = np.cumsum([0] + [p.n for p in parts])
        self.n = int(self.offsets[-1])
        self.dtype = np.result_type(*(p.dtype for p in parts))

    def _pieces(self, lo, hi):
        for p, off in zip(self.parts, self.offsets):
            plo, phi = max(lo, int(off)), min(hi, int(off) + p.n)
            if plo < phi:
                yield p, int(off), plo, phi

    def anchor_columns(self, S):
        # only columns in parts holding some of S can couple to these rows
        S = np.asarray(S, dtype=np.int64)
        out = []
        for p, off in zip(self.parts, self.offsets):
            off = int(off)
            local = S[(S >= off) & (S < off + p.n)] - off
            if local.size:
                out.append(p.anchor_columns(local) + off)
        return (np.unique(np.concatenate(out)) if out
                else np.zeros(0, np.int64))

    def scale_hint(self):
        return max(p.scale_hint() for p in self.parts)

    def sub_block(self, I, J):
        I = np.asarray(I)
        J = np.asarray(J)
        out = np.zeros((I.size, J.size), dtype=self.dtype)
        for p, off in zip(self.parts, self.offsets):
            mi = (I >= off) & (I < off + p.n)
            mj = (J >= off) & (J < off + p.n)
            if mi.any() and mj.any():
                out[np.ix_(mi, mj)] = p.sub_block(I[mi] - off, J[mj] - off)
        return out

    def matvec(self, x, trans=False):
        out = np.zeros((self.n,) + x.shape[1:],
                       dtype=np.result_type(self.dtype, x.dtype))
        for p, off in zip(self.parts, self.offsets):
            out[off:off + p.n] = p.matvec(x[off:off + p.n], trans)
        return out


class InverseOp:
    """Action of an Hss1dInverse as a value-probe expression.

    Sub-blocks come from batched solves against identity columns.  The
    inverse shares the forward factorization's per-node rank profile, so the
    forward matrix's skeleton positions (plus strides and the adaptive
    escalation in the compressor) serve as probe anchors.
    """

    def __init__(self, inv, anchor_source=None):
        self.inv = inv
        self.n = inv.n
        self.dtype = inv.dtype
        self.anchor_source = anchor_source

    def matvec(self, x, trans=False):
        return self.inv.apply(x, trans=trans)

    def sub_block(self, I, J):
        I = np.asarray(I, dtype=np.int64)
        J = np.asarray(J, dtype=np.int64)
        if I.size == 0 or J.size == 0:
            return np.zeros((I.size, J.size), dtype=self.dtype)
        rhs = np.zeros((self.n, J.size), dtype=self.dtype)
        rhs[J, np.arange(J.size)] = 1.0
        return self.inv.apply(rhs)[I]

    def anchor_columns(self, S):
        if self.anchor_source is not None:
            return self.anchor_source.anchor_columns(S)
        comp = np.setdiff1d(np.arange(self.n), S, assume_unique=True)
        if comp.size == 0:
            return comp
        take = min(comp.size, max(24, comp.size // 4))
        sel = np.linspace(0, comp.size - 1, take).astype(np.int64)
        return np.unique(comp[sel])

    def scale_hint(self):
        if getattr(self, "_norm_est", None) is None:
            rng = np.random.default_rng(777)
            x = rng.standard_normal((self.n, 1))
            est = 0.0
            for _ in range(3):
                y = self.inv.apply(x)
                x = self.inv.apply(y, trans=True)
                ny = np.linalg.norm(y)
                nx = np.linalg.norm(x)
                est = nx / ny if ny > 0 else 0.0
                if nx == 0:
                    break
                x = x / nx
            self._norm_est = float(est)
        return self._norm_est


class PermutedOp:
    """P A P^T for a permutation: entry (i, j) is A[perm[i], perm[j]].

    Lets operators built on one 1D ordering participate in expressions on a
    reordered version of the same point set; the value-probe compression
    doesn't care that the inner structure lives in permuted coordinates.
    """

    def __init__(self, op, perm):
        self.op = op
        self.perm = np.asarray(perm, dtype=np.int64)
        self.iperm = np.empty_like(self.perm)
        self.iperm[self.perm] = np.arange(self.perm.size)
        self.n = op.n
        self.dtype = op.dtype

    def anchor_columns(self, S):
        inner = self.op.anchor_columns(np.sort(self.perm[S]))
        return np.unique(self.iperm[inner])

    def scale_hint(self):
        return self.op.scale_hint()

    def sub_block(self, I, J):
        pi = self.perm[np.asarray(I)]
        pj = self.perm[np.asarray(J)]
        si, sj = np.argsort(pi, kind="stable"), np.argsort(pj, kind="stable")
        vals = self.op.sub_block(pi[si], pj[sj])
        out = np.empty_like(vals)
        out[np.ix_(si, sj)] = vals
        return out

    def matvec(self, x, trans=False):
        xin = np.zeros_like(x)
        xin[self.perm] = x
        return self.op.matvec(xin, trans)[self.perm]


class RestrictedOp:
    """Sub-block rows x cols of a square operator, as a matvec pair."""

    def __init__(self, op, rows, cols):
        self.op = op
        self.rows = np.asarray(rows, dtype=np.int64)
        self.cols = np.asarray(cols, dtype=np.int64)
        self.shape = (self.rows.size, self.cols.size)
        self.dtype = op.dtype

    def matvec(self, x):
        full = np.zeros((self.op.n,) + x.shape[1:],
                        dtype=np.result_type(self.dtype, x.dtype))
        full[self.cols] = x
        return self.op.matvec(full)[self.rows]

    def rmatvec(self, y):
        full = np.zeros((self.op.n,) + y.shape[1:],
                        dtype=np.result_type(self.dtype, y.dtype))
        full[self.rows] = y
        return self.op.matvec(full, trans=True)[self.cols]
