"""Public arithmetic on Hss1dMatrix objects.

Sums, merges and recompressions all rebuild a fresh canonical form through
`compress_from_operator`, which keeps ranks near-optimal after every
combination (every sum is recompressed, never returned in stacked form).
"""

import io
import json

import numpy as np
import scipy.linalg as sla

from ..errors import ConfigError, NumericalError
from .build import (BlockDiagOp, EntryOracle, HssOp, LowRankOp, SumOp,
                    compress_from_entries, compress_from_operator)
from .core import Hss1dMatrix, Node


def hss1d_compress(entry_oracle, n, eps, leaf_size=32, dtype=np.float64):
    """HSS form of an n x n operator given by an entry oracle.

    `entry_oracle` is either a callable block(I, J) -> dense, a dense matrix,
    or an object already exposing .block/.n/.dtype.
    """
    if hasattr(entry_oracle, "block") and hasattr(entry_oracle, "n"):
        oracle = entry_oracle
    else:
        oracle = EntryOracle(entry_oracle, n, dtype)
    return compress_from_entries(oracle, eps, leaf_size)


def hss1d_matvec(H, x, trans=False):
    return H.matvec(x, trans=trans)


def hss1d_sum(Ha, Hb, eps):
    """HSS form of Ha + Hb (recompressed)."""
    if Ha.n != Hb.n:
        raise ConfigError("hss1d_sum operands live on different orderings")
    if Hb.norm_est() == 0.0:
        return Ha
    if Ha.norm_est() == 0.0:
        return Hb
    return compress_from_operator(SumOp([HssOp(Ha), HssOp(Hb)]), eps,
                                  max(Ha.leaf_size, Hb.leaf_size))


def hss1d_add_lowrank(H, lr, eps):
    """HSS form of H + U V^T (recompressed)."""
    if lr.rank == 0:
        return hss1d_recompress(H, eps)
    return compress_from_operator(
        SumOp([HssOp(H), LowRankOp(lr, H.n, np.result_type(H.dtype, lr.U.dtype))]),
        eps, H.leaf_size)


def hss1d_merge(H1, H2, eps=None, leaf_size=None):
    """Block-diagonal HSS of two operators on disjoint orderings.

    Cross blocks are exactly zero in the result.  Recompression happens via
    the canonical rebuild; pass eps to tighten (defaults to exact-structure
    tolerance 1e-14 relative, which just reorganizes the tree).
    """
    eps = 1e-14 if eps is None else eps
    leaf_size = leaf_size or max(H1.leaf_size, H2.leaf_size)
    # aligning the tree with the part boundary keeps cross blocks exactly 0
    return compress_from_operator(BlockDiagOp([HssOp(H1), HssOp(H2)]), eps,
                                  leaf_size, align=(H1.n,))


def hss1d_split(H, n1, eps=None):
    """Diagonal blocks (H[:n1,:n1], H[n1:,n1:]) in HSS form.

    The split point is an index into H's ordering; callers arrange orderings
    so the two sub-operators are contiguous.  Use Hss1dMatrix.extract for
    general position subsets.
    """
    if not 0 <= n1 <= H.n:
        raise ConfigError("split point outside the ordering")
    h1 = H.extract(np.arange(0, n1))
    h2 = H.extract(np.arange(n1, H.n))
    if eps is not None:
        h1 = hss1d_recompress(h1, eps)
        h2 = hss1d_recompress(h2, eps)
    return h1, h2


def hss1d_recompress(H, eps):
    """Fresh canonical compression of H (near-optimal node ranks)."""
    return compress_from_operator(HssOp(H), eps, H.leaf_size)


def lr_to_hss1d(lr, eps, leaf_size=32):
    """HSS form of a (square) low-rank operator U V^T; node ranks <= rank."""
    m, n = lr.shape
    if m != n:
        raise ConfigError("lr_to_hss1d expects a square operator")
    if lr.rank == 0:
        return zero_hss(n, lr.U.dtype, leaf_size)
    return compress_from_operator(LowRankOp(lr, n, lr.U.dtype), eps, leaf_size)


def zero_hss(n, dtype, leaf_size=32):
    from .build import build_interval_tree

    root = build_interval_tree(n, leaf_size)
    H = Hss1dMatrix(root, n, dtype, leaf_size)
    for v in H.nodes():
        if v.is_leaf:
            v.D = np.zeros((v.size, v.size), dtype=dtype)
        else:
            v.B12 = np.zeros((0, 0), dtype=dtype)
            v.B21 = np.zeros((0, 0), dtype=dtype)
        if v is not H.root:
            v.L = np.zeros((v.size if v.is_leaf else v.c1.rank + v.c2.rank, 0),
                           dtype=dtype)
            v.R = np.zeros((0, v.L.shape[0]), dtype=dtype)
            v.row_skel = np.zeros(0, dtype=np.int64)
            v.col_skel = np.zeros(0, dtype=np.int64)
    return H


class HssPlusLowRank:
    """HSS matrix plus an exact low-rank update, kept unfused.

    Behaves like an Hss1dMatrix for everything the solver needs (matvec,
    diagonal extraction, sub-blocks, probe anchors, densify) without paying
    a recompression pass; extraction restricts both parts independently.
    """

    def __init__(self, H, lr):
        self.H = H
        self.lr = lr
        self.n = H.n
        self.dtype = np.result_type(H.dtype, lr.U.dtype if lr.rank else H.dtype)
        self.leaf_size = H.leaf_size

    def matvec(self, x, trans=False):
        y = self.H.matvec(x, trans)
        if self.lr.rank:
            y = y + (self.lr.apply_t(x) if trans else self.lr.apply(x))
        return y

    def sub_block(self, I, J):
        out = self.H.sub_block(I, J)
        if self.lr.rank:
            out = out + self.lr.U[I] @ self.lr.V[J].T
        return out

    def anchor_columns(self, S):
        cols = self.H.anchor_columns(S)
        if not self.lr.rank:
            return cols
        comp = np.setdiff1d(np.arange(self.n), S, assume_unique=True)
        if comp.size == 0:
            return cols
        take = min(comp.size, self.lr.rank + 8)
        extra = []
        for fac in (self.lr.U, self.lr.V):
            norms = np.abs(fac[comp]).sum(axis=1)
            extra.append(comp[np.argsort(-norms, kind="stable")[:take]])
        return np.unique(np.concatenate([cols] + extra))

    def extract(self, positions):
        sub_lr = (LowRankFactorView(self.lr, positions) if self.lr.rank
                  else self.lr)
        return HssPlusLowRank(self.H.extract(positions), sub_lr)

    def norm_est(self, iters=3):
        if getattr(self, "_norm_est", None) is None:
            extra = 0.0
            if self.lr.rank:
                extra = float(sla.norm(self.lr.U, 2) * sla.norm(self.lr.V, 2))
            self._norm_est = self.H.norm_est(iters) + extra
        return self._norm_est

    def densify(self):
        out = self.H.densify()
        if self.lr.rank:
            out = out + self.lr.dense()
        return out

    def offdiag_rank_bound(self, lo, hi):
        return self.H.offdiag_rank_bound(lo, hi) + self.lr.rank

    def nbytes(self):
        return self.H.nbytes() + (self.lr.nbytes() if self.lr.rank else 0)


def LowRankFactorView(lr, positions):
    from ..dense_core import LowRankFactor
    return LowRankFactor(lr.U[positions], lr.V[positions])


def hss1d_lstsq(A, B, rcond=1e-12):
    """Least-squares solve min ||A X - B|| for a tall operator.

    Accepts a dense matrix or an object with .shape and .densify()/.block.
    Rank-deficient systems are solved in the minimum-norm sense and flagged.
    Returns (X, rank_deficient_flag).
    """
    if hasattr(A, "densify"):
        A = A.densify()
    elif hasattr(A, "block"):
        A = A.block(np.arange(A.n), np.arange(A.n))
    A = np.asarray(A)
    if A.shape[0] < A.shape[1]:
        raise NumericalError("hss1d_lstsq expects rows >= cols")
    X, _, rank, sv = sla.lstsq(A, B, cond=rcond, check_finite=False)
    flag = rank < A.shape[1]
    return X, flag


# ---------------------------------------------------------------------------
# debug serialization: self-describing binary blob

def to_blob(H):
    """Serialize to bytes: a json structure header plus an npz of blocks."""
    meta = {"n": H.n, "leaf_size": H.leaf_size, "dtype": np.dtype(H.dtype).str,
            "nodes": []}
    arrays = {}

    def walk(v, path):
        rec = {"path": path, "lo": v.lo, "hi": v.hi, "leaf": v.is_leaf}
        for name in ("D", "L", "R", "B12", "B21"):
            a = getattr(v, name)
            if a is not None:
                key = f"{path or 'r'}_{name}"
                arrays[key] = a
                rec[name] = key
        for name in ("row_skel", "col_skel"):
            a = getattr(v, name)
            if a is not None:
                key = f"{path or 'r'}_{name}"
                arrays[key] = a
                rec[name] = key
        meta["nodes"].append(rec)
        if not v.is_leaf:
            walk(v.c1, path + "0")
            walk(v.c2, path + "1")

    walk(H.root, "")
    buf = io.BytesIO()
    arrays["__meta__"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
    np.savez(buf, **arrays)
    return buf.getvalue()


def from_blob(blob):
    data = np.load(io.BytesIO(blob))
    meta = json.loads(bytes(data["__meta__"]).decode())
    by_path = {rec["path"]: rec for rec in meta["nodes"]}

    def build(path):
        rec = by_path[path]
        v = Node(rec["lo"], rec["hi"])
        for name in ("D", "L", "R", "B12", "B21", "row_skel", "col_skel"):
            if name in rec:
                setattr(v, name, data[rec[name]])
        if not rec["leaf"]:
            v.c1 = build(path + "0")
            v.c2 = build(path + "1")
        return v

    return Hss1dMatrix(build(""), meta["n"], np.dtype(meta["dtype"]),
                       meta["leaf_size"])
