"""Telescoping inversion of an Hss1dMatrix and the resulting solve operator.

Per node, fine to coarse: F = D at leaves, F = [[E_c1, B12], [B21, E_c2]]
above, E = (R F^-1 L)^-1 everywhere except the root, whose F is factored
directly.  The apply runs the upward/downward recursion with these dense
per-node blocks (all of size O(rank)).
"""

import numpy as np
import scipy.linalg as sla

from ..dense_core import lu_factor_checked
from ..errors import SingularFactorError
from .core import Hss1dMatrix, Node


class _InvNode:
    __slots__ = ("src", "F_lu", "E", "c1", "c2")

    def __init__(self, src):
        self.src = src
        self.F_lu = None
        self.E = None
        self.c1 = None
        self.c2 = None


class Hss1dInverse:
    """Solve operator produced by hss1d_invert."""

    def __init__(self, root, n, dtype):
        self.root = root
        self.n = n
        self.dtype = dtype

    @property
    def shape(self):
        return (self.n, self.n)

    def nbytes(self):
        total = 0
        stack = [self.root]
        while stack:
            v = stack.pop()
            if v.F_lu is not None:
                total += v.F_lu[0].nbytes
            if v.E is not None:
                total += v.E.nbytes
            if v.c1 is not None:
                stack += [v.c1, v.c2]
        return total

    def apply(self, f, trans=False):
        """x with A x = f (or A^T x = f); f may be (n,) or (n, b)."""
        f = np.asarray(f)
        single = f.ndim == 1
        if single:
            f = f[:, None]
        out = np.empty((self.n, f.shape[1]),
                       dtype=np.result_type(self.dtype, f.dtype))
        ups = {}
        self._up(self.root, f, ups, trans)
        self._down(self.root, f, None, ups, out, trans)
        return out[:, 0] if single else out

    # accessors swap roles for the transposed solve
    def _solveF(self, v, rhs, trans):
        if rhs.shape[0] == 0:
            return rhs
        return sla.lu_solve(v.F_lu, rhs, trans=1 if trans else 0,
                            check_finite=False)

    def _E(self, v, trans):
        return v.E.T if trans else v.E

    def _R(self, v, trans):
        s = v.src
        return s.L.T if trans else s.R

    def _L(self, v, trans):
        s = v.src
        return s.R.T if trans else s.L

    def _up(self, v, f, ups, trans):
        s = v.src
        if v.c1 is None:
            u = f[s.lo:s.hi]
        else:
            self._up(v.c1, f, ups, trans)
            self._up(v.c2, f, ups, trans)
            u = np.vstack([ups[v.c1], ups[v.c2]])
        if v is self.root:
            ups[v] = u
            return
        phi = self._solveF(v, u, trans)
        ups[v] = self._E(v, trans) @ (self._R(v, trans) @ phi)
        ups[v, "u"] = u

    def _down(self, v, f, phi_dn, ups, out, trans):
        if v is self.root:
            res = self._solveF(v, ups[v], trans)
        else:
            u = ups[v, "u"]
            nu = u - self._L(v, trans) @ ups[v]
            if phi_dn is not None:
                nu = nu + self._L(v, trans) @ (self._E(v, trans) @ phi_dn)
            res = self._solveF(v, nu, trans)
        if v.c1 is None:
            out[v.src.lo:v.src.hi] = res
            return
        k1 = v.c1.E.shape[0]
        self._down(v.c1, f, res[:k1], ups, out, trans)
        self._down(v.c2, f, res[k1:], ups, out, trans)


def hss1d_invert(H: Hss1dMatrix):
    """Compressed inverse of H; raises SingularFactorError with the node path
    when a per-node factor is singular at working precision."""

    def visit(v: Node, path):
        iv = _InvNode(v)
        if v.is_leaf:
            F = v.D
        else:
            iv.c1 = visit(v.c1, path + "0")
            iv.c2 = visit(v.c2, path + "1")
            k1, k2 = iv.c1.E.shape[0], iv.c2.E.shape[0]
            F = np.zeros((k1 + k2, k1 + k2), dtype=H.dtype)
            F[:k1, :k1] = iv.c1.E
            F[:k1, k1:] = v.B12
            F[k1:, :k1] = v.B21
            F[k1:, k1:] = iv.c2.E
        if F.shape[0]:
            iv.F_lu = lu_factor_checked(F, where=f"1d node {path or 'root'}")
        if v is not H.root:
            if v.rank == 0:
                iv.E = np.zeros((0, 0), dtype=H.dtype)
            else:
                W = sla.lu_solve(iv.F_lu, v.L, check_finite=False)
                G = v.R @ W
                lu = lu_factor_checked(G, where=f"1d node {path} (E)")
                iv.E = sla.lu_solve(lu, np.eye(G.shape[0], dtype=H.dtype),
                                    check_finite=False)
        return iv

    root = visit(H.root, "")
    return Hss1dInverse(root, H.n, H.dtype)
