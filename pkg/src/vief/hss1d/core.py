"""Dense-block HSS container for operators on 1D-ordered point sets.

The matrix is stored as a telescoping factorization over a binary tree of
index intervals: dense diagonal blocks D at the leaves, interpolation blocks
L (upsampling) / R (downsampling) at every non-root node, and sibling
interaction blocks at every non-leaf.  Row and column skeleton ranks are kept
equal per node so downstream inversion works with square blocks.
"""

import numpy as np


class Node:
    __slots__ = ("lo", "hi", "c1", "c2", "D", "L", "R", "B12", "B21",
                 "row_skel", "col_skel", "_lam", "_theta")

    def __init__(self, lo, hi):
        self.lo = lo
        self.hi = hi
        self.c1 = None
        self.c2 = None
        self.D = None          # leaf diagonal block
        self.L = None          # (work x k) upsampling
        self.R = None          # (k x work) downsampling
        self.B12 = None        # sibling blocks of the children
        self.B21 = None
        self.row_skel = None   # global positions of skeleton rows (bookkeeping)
        self.col_skel = None
        self._lam = None       # cached accumulated row basis (points x k)
        self._theta = None     # cached accumulated col basis (k x points)

    @property
    def is_leaf(self):
        return self.c1 is None

    @property
    def size(self):
        return self.hi - self.lo

    @property
    def rank(self):
        if self.L is not None:
            return self.L.shape[1]
        return 0


def build_interval_tree(n, leaf_size, align=()):
    """Canonical balanced tree: halve (ceil) until intervals fit leaf_size.

    `align` forces cuts at the given positions (used by block-diagonal
    merges so cross blocks stay exactly zero); a node containing an
    alignment point splits at the one nearest its midpoint.
    """
    root = Node(0, n)
    stack = [root]
    while stack:
        v = stack.pop()
        inner = [a for a in align if v.lo < a < v.hi]
        if v.size > leaf_size or inner:
            mid = v.lo + (v.size + 1) // 2
            if inner:
                mid = min(inner, key=lambda a: abs(a - mid))
            v.c1 = Node(v.lo, mid)
            v.c2 = Node(mid, v.hi)
            stack += [v.c1, v.c2]
    return root


class Hss1dMatrix:
    def __init__(self, root, n, dtype, leaf_size):
        self.root = root
        self.n = n
        self.dtype = dtype
        self.leaf_size = leaf_size

    @property
    def shape(self):
        return (self.n, self.n)

    def nodes(self):
        out = []
        stack = [self.root]
        while stack:
            v = stack.pop()
            out.append(v)
            if not v.is_leaf:
                stack += [v.c2, v.c1]
        return out

    def leaves(self):
        return [v for v in self.nodes() if v.is_leaf]

    def max_rank(self):
        return max((v.rank for v in self.nodes() if v is not self.root),
                   default=0)

    def node_ranks(self):
        return sorted((v.size, v.rank) for v in self.nodes() if v is not self.root)

    def nbytes(self):
        total = 0
        for v in self.nodes():
            for a in (v.D, v.L, v.R, v.B12, v.B21):
                if a is not None:
                    total += a.nbytes
        return total

    # -- matvec ------------------------------------------------------------

    def matvec(self, x, trans=False):
        """A @ x (or A^T @ x); x may be (n,) or (n, b)."""
        x = np.asarray(x)
        single = x.ndim == 1
        if single:
            x = x[:, None]
        out = np.empty((self.n, x.shape[1]),
                       dtype=np.result_type(self.dtype, x.dtype))
        phi = {}
        self._up(self.root, x, phi, trans)
        self._down(self.root, x, None, phi, out, trans)
        return out[:, 0] if single else out

    def _R(self, v, trans):
        return v.L.T if trans else v.R

    def _L(self, v, trans):
        return v.R.T if trans else v.L

    def _B(self, v, trans):
        return (v.B21.T, v.B12.T) if trans else (v.B12, v.B21)

    def _D(self, v, trans):
        return v.D.T if trans else v.D

    def _up(self, v, x, phi, trans):
        if v.is_leaf:
            w = x[v.lo:v.hi]
        else:
            self._up(v.c1, x, phi, trans)
            self._up(v.c2, x, phi, trans)
            w = np.vstack([phi[v.c1], phi[v.c2]])
        if v is not self.root:
            phi[v] = self._R(v, trans) @ w
        else:
            phi[v] = w

    def _down(self, v, x, w_in, phi, out, trans):
        if v.is_leaf:
            res = self._D(v, trans) @ x[v.lo:v.hi]
            if w_in is not None:
                res = res + self._L(v, trans) @ w_in
            out[v.lo:v.hi] = res
            return
        b12, b21 = self._B(v, trans)
        w1 = b12 @ phi[v.c2]
        w2 = b21 @ phi[v.c1]
        if w_in is not None:
            t = self._L(v, trans) @ w_in
            k1 = v.c1.rank
            w1 = w1 + t[:k1]
            w2 = w2 + t[k1:]
        self._down(v.c1, x, w1, phi, out, trans)
        self._down(v.c2, x, w2, phi, out, trans)

    # -- accumulated bases ---------------------------------------------------

    def lam(self, v):
        """Accumulated row basis: block row (v, exterior) = lam(v) @ (...)."""
        if v._lam is None:
            if v.is_leaf:
                v._lam = v.L
            else:
                k1 = v.c1.rank
                v._lam = np.vstack([self.lam(v.c1) @ v.L[:k1],
                                    self.lam(v.c2) @ v.L[k1:]])
        return v._lam

    def theta(self, v):
        """Accumulated column basis: block col (exterior, v) = (...) @ theta(v)."""
        if v._theta is None:
            if v.is_leaf:
                v._theta = v.R
            else:
                k1 = v.c1.rank
                v._theta = np.hstack([v.R[:, :k1] @ self.theta(v.c1),
                                      v.R[:, k1:] @ self.theta(v.c2)])
        return v._theta

    def lam_rows(self, v, rows):
        """lam(v) restricted to absolute row positions (sorted)."""
        if v.is_leaf:
            return v.L[rows - v.lo]
        k1 = v.c1.rank
        cut = np.searchsorted(rows, v.c1.hi)
        parts = []
        if cut:
            parts.append(self.lam_rows(v.c1, rows[:cut]) @ v.L[:k1])
        if cut < rows.size:
            parts.append(self.lam_rows(v.c2, rows[cut:]) @ v.L[k1:])
        return np.vstack(parts) if parts else np.zeros((0, v.rank), self.dtype)

    def theta_cols(self, v, cols):
        if v.is_leaf:
            return v.R[:, cols - v.lo]
        k1 = v.c1.rank
        cut = np.searchsorted(cols, v.c1.hi)
        parts = []
        if cut:
            parts.append(v.R[:, :k1] @ self.theta_cols(v.c1, cols[:cut]))
        if cut < cols.size:
            parts.append(v.R[:, k1:] @ self.theta_cols(v.c2, cols[cut:]))
        return np.hstack(parts) if parts else np.zeros((v.rank, 0), self.dtype)

    # -- dense views ---------------------------------------------------------

    def sub_block(self, I, J):
        """Dense A[I, J] for sorted position arrays."""
        I = np.asarray(I, dtype=np.int64)
        J = np.asarray(J, dtype=np.int64)
        assert np.all(np.diff(I) > 0) if I.size > 1 else True
        assert np.all(np.diff(J) > 0) if J.size > 1 else True
        return self._sub(self.root, I, J)

    def _sub(self, v, I, J):
        out = np.zeros((I.size, J.size), dtype=self.dtype)
        if I.size == 0 or J.size == 0:
            return out
        if v.is_leaf:
            return v.D[np.ix_(I - v.lo, J - v.lo)]
        ci = np.searchsorted(I, v.c1.hi)
        cj = np.searchsorted(J, v.c1.hi)
        if ci and cj:
            out[:ci, :cj] = self._sub(v.c1, I[:ci], J[:cj])
        if ci < I.size and cj < J.size:
            out[ci:, cj:] = self._sub(v.c2, I[ci:], J[cj:])
        if ci and cj < J.size:
            out[:ci, cj:] = (self.lam_rows(v.c1, I[:ci]) @ v.B12
                             @ self.theta_cols(v.c2, J[cj:]))
        if ci < I.size and cj:
            out[ci:, :cj] = (self.lam_rows(v.c2, I[ci:]) @ v.B21
                             @ self.theta_cols(v.c1, J[:cj]))
        return out

    def densify(self):
        return self.sub_block(np.arange(self.n), np.arange(self.n))

    # -- rank bounds, probe anchors, norm estimate -----------------------------

    def anchor_columns(self, S):
        """Exterior positions that capture the row/column space of the
        off-diagonal block of the sorted position set S: surviving skeleton
        positions of the maximal nodes disjoint from S (interpolative columns
        reproduce exactly), topped up with a stride sample per node to cover
        extracted forms whose skeleton cells were dropped."""
        S = np.asarray(S, dtype=np.int64)
        out = []

        def walk(v):
            lo_i, hi_i = np.searchsorted(S, [v.lo, v.hi])
            inside = hi_i - lo_i
            if inside == v.size:
                return
            if inside == 0:
                for skel in (v.col_skel, v.row_skel):
                    if skel is not None and skel.size:
                        out.append(skel)
                k = max(v.rank, 1)
                if v.size:
                    out.append(np.unique(np.linspace(
                        v.lo, v.hi - 1, min(v.size, k + 8)).astype(np.int64)))
                return
            if v.is_leaf:
                cells = np.setdiff1d(np.arange(v.lo, v.hi), S[lo_i:hi_i],
                                     assume_unique=True)
                if cells.size:
                    out.append(cells)
                return
            walk(v.c1)
            walk(v.c2)

        walk(self.root)
        if not out:
            return np.zeros(0, dtype=np.int64)
        cols = np.unique(np.concatenate(out))
        keep = np.ones(cols.size, dtype=bool)
        idx = np.searchsorted(S, cols)
        idx_c = np.minimum(idx, S.size - 1) if S.size else idx
        if S.size:
            keep = S[idx_c] != cols
        return cols[keep]

    def offdiag_rank_bound(self, lo, hi):
        """Certified bound on rank of A[[lo,hi), exterior]: sum of skeleton
        ranks over a maximal-node cover, plus partial-leaf widths."""
        total = 0
        stack = [self.root]
        while stack:
            v = stack.pop()
            if v.hi <= lo or v.lo >= hi:
                continue
            if lo <= v.lo and v.hi <= hi and v is not self.root:
                total += v.rank
                continue
            if v.is_leaf:
                total += min(v.size, hi, v.hi) - max(v.lo, lo)
                continue
            stack += [v.c1, v.c2]
        return total

    def norm_est(self, iters=3):
        """Cached two-norm estimate by power iteration on A^T A."""
        if getattr(self, "_norm_est", None) is None:
            if self.n == 0:
                self._norm_est = 0.0
            else:
                rng = np.random.default_rng(12345)
                x = rng.standard_normal((self.n, 1))
                est = 0.0
                for _ in range(iters):
                    y = self.matvec(x)
                    x = self.matvec(y, trans=True)
                    nx = np.linalg.norm(x, axis=0)
                    ny = np.linalg.norm(y, axis=0)
                    with np.errstate(invalid="ignore", divide="ignore"):
                        est = float(np.max(np.where(ny > 0, nx / ny, 0.0)))
                    mx = np.linalg.norm(x)
                    if mx == 0:
                        est = 0.0
                        break
                    x = x / mx
                self._norm_est = est
        return self._norm_est

    # -- diagonal-block extraction --------------------------------------------

    def extract(self, positions):
        """HSS form of the diagonal block A[S, S] for sorted positions S.

        Keeps the tree shape and all interpolation/interaction blocks;
        restricts leaf diagonal blocks and leaf interpolation rows/columns.
        Skeleton slots become abstract basis columns (they need not lie in S).
        """
        positions = np.asarray(positions, dtype=np.int64)
        assert positions.size == 0 or np.all(np.diff(positions) > 0)
        new_root, _ = self._extract(self.root, positions, 0)
        sub = Hss1dMatrix(new_root, positions.size, self.dtype, self.leaf_size)
        # a diagonal block's norm is bounded by the source's; reusing the
        # cached estimate keeps truncation thresholds tied to the parent scale
        if getattr(self, "_norm_est", None) is not None:
            sub._norm_est = self._norm_est
        return sub

    @staticmethod
    def _remap(skel, positions):
        """Skeleton positions surviving into the kept set, renumbered."""
        if skel is None or skel.size == 0 or positions.size == 0:
            return np.zeros(0, dtype=np.int64) if skel is not None else skel
        idx = np.searchsorted(positions, skel)
        idx_c = np.minimum(idx, positions.size - 1)
        alive = positions[idx_c] == skel
        return np.unique(idx_c[alive])

    def _extract(self, v, positions, new_lo):
        sel = positions[(positions >= v.lo) & (positions < v.hi)]
        node = Node(new_lo, new_lo + sel.size)
        if v.is_leaf:
            local = sel - v.lo
            node.D = v.D[np.ix_(local, local)]
            if v.L is not None:
                node.L = v.L[local]
                node.R = v.R[:, local]
        else:
            node.c1, n1 = self._extract(v.c1, positions, new_lo)
            node.c2, n2 = self._extract(v.c2, positions, new_lo + n1)
            node.B12 = v.B12
            node.B21 = v.B21
            if v.L is not None:
                node.L = v.L
                node.R = v.R
        if v.L is not None:
            node.row_skel = self._remap(v.row_skel, positions)
            node.col_skel = self._remap(v.col_skel, positions)
        return node, node.size
