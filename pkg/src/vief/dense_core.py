"""Dense linear-algebra core: pivoted interpolative decomposition,
randomized ID from matvec oracles, low-rank factor arithmetic, solves."""

import numpy as np
import scipy.linalg as sla

from .errors import NumericalError, SingularFactorError


def subseed(seed, *keys):
    """Derive an independent child generator from a base seed and int keys."""
    ss = np.random.SeedSequence(entropy=int(seed) & (2**63 - 1),
                                spawn_key=tuple(int(k) & 0xFFFFFFFF for k in keys))
    return np.random.default_rng(ss)


def fast_rng(*keys):
    """Cheap deterministic generator from integer keys (splitmix-style mix);
    used on hot paths where SeedSequence construction would dominate."""
    state = 0x9E3779B97F4A7C15
    for k in keys:
        state = (state ^ (int(k) + 0x9E3779B97F4A7C15)) * 0xBF58476D1CE4E5B9
        state &= 0xFFFFFFFFFFFFFFFF
        state ^= state >> 31
    return np.random.Generator(np.random.PCG64(state))


# ---------------------------------------------------------------------------
# interpolative decomposition

class IdFactor:
    """Column ID  A ~= A[:, skeleton] @ [I T] Pi.

    `perm` orders the columns skeleton-first; T is k x (n-k) and acts on the
    non-skeleton columns only, so skeleton columns reproduce exactly.
    """

    def __init__(self, skeleton, T, perm, achieved_error=0.0):
        self.skeleton = np.asarray(skeleton, dtype=np.int64)
        self.T = T
        self.perm = np.asarray(perm, dtype=np.int64)
        self.achieved_error = float(achieved_error)

    @property
    def rank(self):
        return self.skeleton.size

    @property
    def ncols(self):
        return self.perm.size

    def right_matrix(self, dtype=None):
        """Dense R = [I T] Pi with A ~= A[:, skeleton] @ R (k x n)."""
        k, n = self.rank, self.ncols
        dtype = dtype or (self.T.dtype if self.T.size else np.float64)
        r = np.zeros((k, n), dtype=dtype)
        r[np.arange(k), self.perm[:k]] = 1.0
        if n > k:
            r[:, self.perm[k:]] = self.T
        return r

    def interp_rows(self, dtype=None):
        """Dense L = Pi^T [I; T^T] with row-ID semantics (n x k)."""
        return self.right_matrix(dtype).T


def interp_decomp(A, eps, min_rank=0, max_rank=None, eps_abs=None):
    """Column ID by rank-revealing QR with column pivoting.

    Rank is the smallest k with |R[k,k]| <= eps * |R[0,0]| (relative mode);
    with `eps_abs` the cutoff is max(eps * |R[0,0]|, eps_abs), which lets
    sums of operators truncate against the scale of their inputs.
    `min_rank` supports skeleton padding when row/column ranks must match.
    """
    A = np.ascontiguousarray(A)
    m, n = A.shape
    if n == 0 or m == 0:
        return IdFactor(np.zeros(0, np.int64), np.zeros((0, n), A.dtype),
                        np.arange(n), 0.0)
    q, r, piv = sla.qr(A, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    top = diag[0] if diag.size else 0.0
    cut = max(eps * top, eps_abs or 0.0)
    if top == 0.0 or top <= cut:
        k = 0
    else:
        small = np.nonzero(diag <= cut)[0]
        k = int(small[0]) if small.size else diag.size
    k = max(k, min(min_rank, min(m, n)))
    if max_rank is not None:
        k = min(k, max_rank)
    if k == 0:
        return IdFactor(np.zeros(0, np.int64), np.zeros((0, n), A.dtype), piv,
                        float(top))
    if k == n:
        T = np.zeros((k, 0), dtype=A.dtype)
    else:
        T = sla.solve_triangular(r[:k, :k], r[:k, k:])
    err = float(diag[k]) if k < diag.size else 0.0
    return IdFactor(piv[:k], T, piv, err)


def row_id(A, eps, min_rank=0, max_rank=None):
    """Row ID of A (column ID of A^T): A ~= L @ A[skeleton, :]."""
    return interp_decomp(A.T, eps, min_rank=min_rank, max_rank=max_rank)


def rand_id(row_oracle, col_oracle, m, n, eps, seed=0, q0=24, power_iters=1,
            max_rank=None, dense_fallback=None):
    """Column ID of an m x n operator from matvec oracles.

    row_oracle(X): A @ X for (n, b) blocks; col_oracle(Y): A^T @ Y for (m, b).
    Sketches S = Omega A with a Gaussian Omega (q rows), runs `power_iters`
    re-orthogonalized passes of A^T A to sharpen the spectrum, then reads the
    ID off a pivoted QR of the sketch.  Rank estimate adapts by doubling the
    sketch until the pivot tail clears eps; exceeding min(m, n) falls back to
    a dense ID of the materialized operator.
    """
    rng = subseed(seed, m, n)
    cap = min(m, n) if max_rank is None else min(max_rank, min(m, n))
    if m == 0 or n == 0:
        return IdFactor(np.zeros(0, np.int64), np.zeros((0, n)), np.arange(n), 0.0)
    q = min(max(q0, 8), m)
    oversample = 10
    while True:
        omega = rng.standard_normal((m, q))
        s = col_oracle(omega).T              # q x n, equals Omega^T A
        for _ in range(power_iters):
            z, _ = np.linalg.qr(s.T)         # n x q, orthonormal columns
            y = row_oracle(z.conj())         # m x q
            z2, _ = np.linalg.qr(y)
            s = col_oracle(z2.conj()).T      # z2^H A
        piv_probe = interp_decomp(s, eps)
        rank = piv_probe.rank
        if rank <= q - oversample or q >= min(m, n):
            break
        q = min(2 * q, m)
    if rank > cap or (rank >= min(m, n) and q >= min(m, n)):
        if dense_fallback is not None:
            return interp_decomp(dense_fallback(), eps, max_rank=cap)
        return interp_decomp(row_oracle(np.eye(n, dtype=s.dtype)), eps, max_rank=cap)
    return piv_probe


# ---------------------------------------------------------------------------
# low-rank factors

class LowRankFactor:
    """U @ V.T with U (m x q), V (n x q); plain transpose, also for complex."""

    def __init__(self, U, V):
        assert U.shape[1] == V.shape[1]
        self.U = U
        self.V = V

    @property
    def rank(self):
        return self.U.shape[1]

    @property
    def shape(self):
        return (self.U.shape[0], self.V.shape[0])

    def apply(self, x):
        return self.U @ (self.V.T @ x)

    def apply_t(self, y):
        return self.V @ (self.U.T @ y)

    def dense(self):
        return self.U @ self.V.T

    def transpose(self):
        return LowRankFactor(self.V, self.U)

    def nbytes(self):
        return self.U.nbytes + self.V.nbytes

    @staticmethod
    def zeros(m, n, dtype=np.float64):
        return LowRankFactor(np.zeros((m, 0), dtype), np.zeros((n, 0), dtype))

    @staticmethod
    def from_dense(A, eps):
        u, sv, vt = np.linalg.svd(A, full_matrices=False)
        if sv.size == 0 or sv[0] == 0.0:
            return LowRankFactor.zeros(*A.shape, dtype=A.dtype)
        q = int(np.sum(sv > eps * sv[0]))
        return LowRankFactor(u[:, :q] * sv[:q], vt[:q].T)


def lowrank_sum_recompress(terms, eps):
    """Single recompressed factor for sum of U_i V_i^T terms (shared shape).

    Orthogonalizes the stacked factors and truncates the small core at
    relative eps, so the output rank is the eps-rank of the sum.
    """
    terms = [t for t in terms if t.rank > 0]
    if not terms:
        raise ValueError("lowrank_sum_recompress needs at least one term")
    m, n = terms[0].shape
    for t in terms:
        assert t.shape == (m, n)
    U = np.hstack([t.U for t in terms])
    V = np.hstack([t.V for t in terms])
    qu, ru = np.linalg.qr(U)
    qv, rv = np.linalg.qr(V)
    core = ru @ rv.T
    uu, sv, vt = np.linalg.svd(core)
    # threshold against the input scale, not the core's own top singular
    # value, so exact cancellations collapse to rank 0
    scale = sla.norm(ru, 2) * sla.norm(rv, 2)
    if sv.size == 0 or scale == 0.0:
        return LowRankFactor.zeros(m, n, dtype=U.dtype)
    q = int(np.sum(sv > eps * scale))
    return LowRankFactor(qu @ (uu[:, :q] * sv[:q]), qv @ vt[:q].T)


# ---------------------------------------------------------------------------
# dense solves

def lu_factor_checked(A, where="dense block"):
    """LU with partial pivoting; raises on singular-to-working-precision."""
    lu, piv = sla.lu_factor(A, check_finite=False)
    d = np.abs(np.diag(lu))
    if d.size:
        dmax = d.max()
        if dmax == 0.0 or d.min() <= 1e-300 or d.min() / dmax < np.finfo(float).eps ** 2:
            raise SingularFactorError(where, float(d.min()))
    return lu, piv


def dense_solve(A, B):
    """X = A^-1 B via pivoted LU; singularity surfaces with pivot magnitude."""
    A = np.asarray(A)
    B = np.asarray(B)
    if A.shape[0] != A.shape[1]:
        raise NumericalError("dense_solve requires a square matrix")
    lu, piv = lu_factor_checked(A)
    return sla.lu_solve((lu, piv), B, check_finite=False)
