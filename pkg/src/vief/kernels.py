"""Kernels, scalar fields, grids and Nystrom system-matrix assembly.

Matrix entries have the form

    A[i, j] = a(x_i) delta_ij + h^2 b(x_i) K(|x_i - x_j|) c(x_j)

on a cell-centered regular lattice over [-1, 1]^2, optionally with a
diagonal correction that upgrades the punctured trapezoidal rule to O(h^4)
for log-singular kernels (see quadrature notes in `_quad_constants`).

All grid and proxy points live on the integer lattice, so kernel values are
cached per integer squared offset; assembling a block is then a table lookup
plus row/column field scalings.  This matters for the Hankel kernel, whose
direct evaluation is ~50x slower than the lookup.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import hankel1, j0, k0, y0

from . import _quad_constants as qc
from .errors import ConfigError, ResourceError

EULER_GAMMA = 0.5772156649015329

FAMILIES = ("laplace2d", "helmholtz2d", "yukawa2d", "laplace3d_sl")


# ---------------------------------------------------------------------------
# scalar fields a(x), b(x), c(x)

@dataclass(frozen=True)
class Field:
    """Named scalar function on [-1,1]^2 with parameters (hashable)."""

    name: str
    params: tuple = ()

    def __call__(self, xy):
        xy = np.asarray(xy, dtype=float)
        x, y = xy[..., 0], xy[..., 1]
        p = dict(self.params)
        if self.name == "one":
            return np.ones_like(x)
        if self.name == "gaussian_bump":
            return 1.0 + 0.5 * np.exp(-((x - 0.3) ** 2) - (y - 0.6) ** 2)
        if self.name in ("tanh_box", "tanh_box_sqrt"):
            d = p["d"]
            edge = p["eps_edge"]
            scale = p.get("scale", 1.0)
            v = (0.25 * scale
                 * (1.0 + np.tanh(d * (1.0 - edge - np.abs(x))))
                 * (1.0 + np.tanh(d * (1.0 - edge - np.abs(y)))))
            return np.sqrt(v) if self.name == "tanh_box_sqrt" else v
        raise ConfigError(f"unknown field preset {self.name!r}")


def make_field(name, **params):
    if name not in ("one", "gaussian_bump", "tanh_box", "tanh_box_sqrt"):
        raise ConfigError(f"unknown field preset {name!r}")
    return Field(name, tuple(sorted(params.items())))


ONE = make_field("one")


# ---------------------------------------------------------------------------
# kernel specification

@dataclass(frozen=True)
class KernelSpec:
    family: str
    k: float = 0.0
    a_field: Field = ONE
    b_field: Field = ONE
    c_field: Field = ONE

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown kernel family {self.family!r}")
        if self.family in ("helmholtz2d", "yukawa2d"):
            if not self.k > 0:
                raise ConfigError(f"{self.family} requires wavenumber k > 0")
        elif self.k:
            raise ConfigError(f"{self.family} takes no wavenumber")

    @property
    def is_complex(self):
        return self.family == "helmholtz2d"

    @property
    def dtype(self):
        return np.complex128 if self.is_complex else np.float64

    @property
    def symmetric(self):
        return self.b_field == self.c_field

    @property
    def translation_invariant(self):
        return self.b_field == ONE and self.c_field == ONE and self.a_field == ONE


def kernel_eval(spec, r):
    """Free-space kernel K(r); r > 0 (diagonal is quadrature's business)."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("kernel_eval requires r > 0")
    if spec.family == "laplace2d":
        return np.log(r) / (2.0 * np.pi)
    if spec.family == "helmholtz2d":
        return -0.25j * hankel1(0, spec.k * r)
    if spec.family == "yukawa2d":
        return k0(spec.k * r) / (2.0 * np.pi)
    return 1.0 / (4.0 * np.pi * r)  # laplace3d_sl


def _log_split_at_zero(spec):
    """(P(0), Ksm(0)) for K(r) = P(r) log r + Ksm(r), log-singular families.

    helmholtz2d: -(i/4) H1_0(kr) = (1/2pi) J0(kr) log r
                  + [(1/2pi)(log(k/2)+gamma) J0(kr) + (1/4) RY(kr) - (i/4) J0(kr)]
    yukawa2d:    (1/2pi) K0(kr) = -(1/2pi) I0(kr) log r
                  + (1/2pi)[-(log(k/2)+gamma) I0(kr) + RK(kr)]
    with RY(0) = RK(0) = 0.
    """
    if spec.family == "laplace2d":
        return 1.0 / (2.0 * np.pi), 0.0
    if spec.family == "helmholtz2d":
        lg = np.log(spec.k / 2.0) + EULER_GAMMA
        return 1.0 / (2.0 * np.pi), lg / (2.0 * np.pi) - 0.25j
    if spec.family == "yukawa2d":
        lg = np.log(spec.k / 2.0) + EULER_GAMMA
        return -1.0 / (2.0 * np.pi), -lg / (2.0 * np.pi)
    raise ConfigError(f"{spec.family} has no log-type singularity split")


# ---------------------------------------------------------------------------
# grid

@dataclass(frozen=True)
class Grid:
    """Cell-centered n x n lattice on [-1,1]^2; linear index = iy*n_side + ix."""

    n_side: int

    @property
    def h(self):
        return 2.0 / self.n_side

    @property
    def n(self):
        return self.n_side * self.n_side

    def int_coords(self, idx=None):
        """Integer lattice coords (m,2) for linear indices (all if None)."""
        if idx is None:
            idx = np.arange(self.n)
        idx = np.asarray(idx)
        return np.column_stack([idx % self.n_side, idx // self.n_side]).astype(np.int64)

    def points(self, idx=None):
        c = self.int_coords(idx)
        return -1.0 + (c + 0.5) * self.h

    def xy_of_int(self, coords):
        return -1.0 + (np.asarray(coords, dtype=float) + 0.5) * self.h


# ---------------------------------------------------------------------------
# quadrature correction

@dataclass(frozen=True)
class QuadratureCorrection:
    """Diagonal correction for the singular self term.

    order "none": punctured trapezoid (kernel self term dropped, a(x_i) kept).
    order "h4":   adds h^2 b_i c_i corr0(h) on the diagonal, where corr0
                  cancels the leading lattice error of the punctured rule.
                  The stencil is the single offset (0,0); `stencil_radius`
                  documents the support for consumers that mask near fields.
    """

    order: str = "none"

    def __post_init__(self):
        if self.order not in ("none", "h4"):
            raise ConfigError(f"unknown quadrature order {self.order!r}")

    @property
    def stencil_radius(self):
        return 0

    def diagonal_term(self, spec, h):
        """corr0 such that A_ii = a_i + h^2 b_i c_i corr0 (0 when order=none)."""
        if self.order == "none":
            return 0.0
        if spec.family == "laplace3d_sl":
            return qc.INV_R_H1_CONST / (4.0 * np.pi * h)
        p0, ksm0 = _log_split_at_zero(spec)
        return p0 * (qc.LOG_H2_LOGH * np.log(h) + qc.LOG_H2_CONST) + ksm0


PLAIN = QuadratureCorrection("none")
H4 = QuadratureCorrection("h4")


# ---------------------------------------------------------------------------
# assembly

DENSE_ENTRY_CAP = 1 << 26  # entries per assemble_dense call


class Assembler:
    """Entry oracle for one (spec, grid, quad) triple.

    Kernel values are tabulated per integer squared offset q = dx^2 + dy^2,
    so blocks between any lattice-aligned point sets (grid points or proxy
    rings outside the domain) are lookups.  Field values are precomputed on
    the grid.
    """

    def __init__(self, spec, grid, quad=PLAIN):
        self.spec = spec
        self.grid = grid
        self.quad = quad
        self.h = grid.h
        self.dtype = spec.dtype
        xy = grid.points()
        self.a_vals = np.ascontiguousarray(spec.a_field(xy))
        self.b_vals = np.ascontiguousarray(spec.b_field(xy))
        self.c_vals = np.ascontiguousarray(spec.c_field(xy))
        self.diag_corr = quad.diagonal_term(spec, grid.h)
        self._coords = grid.int_coords()
        self._table = np.zeros(0, dtype=self.dtype)

    def _ensure_table(self, qmax):
        if qmax < self._table.size:
            return
        size = max(2 * self._table.size, qmax + 1, 4096)
        q = np.arange(1, size)
        vals = np.empty(size, dtype=self.dtype)
        vals[0] = 0.0
        vals[1:] = kernel_eval(self.spec, self.h * np.sqrt(q))
        self._table = vals

    def kernel_lookup(self, p_coords, q_coords):
        """Raw K(|p - q|) for integer-lattice coord arrays; p, q disjoint."""
        d = p_coords[:, None, :] - q_coords[None, :, :]
        q2 = (d[..., 0] ** 2 + d[..., 1] ** 2).astype(np.int64)
        if np.any(q2 == 0):
            raise ValueError("coincident points in kernel_lookup")
        self._ensure_table(int(q2.max()))
        return self._table[q2]

    def block(self, I, J):
        """System-matrix block A[I, J], quadrature correction included."""
        I = np.asarray(I, dtype=np.int64)
        J = np.asarray(J, dtype=np.int64)
        ci, cj = self._coords[I], self._coords[J]
        d = ci[:, None, :] - cj[None, :, :]
        q2 = d[..., 0] ** 2 + d[..., 1] ** 2
        self._ensure_table(int(q2.max()) if q2.size else 0)
        out = self._table[q2] * (self.h * self.h)
        # outer product keeps b_i*c_j bit-identical to b_j*c_i when b == c
        out *= np.multiply.outer(self.b_vals[I], self.c_vals[J])
        same = I[:, None] == J[None, :]
        if np.any(same):
            ii, jj = np.nonzero(same)
            gi = I[ii]
            out[ii, jj] = self.a_vals[gi] + self.h * self.h * self.b_vals[gi] \
                * self.c_vals[gi] * self.diag_corr
        return out

    def cross_block(self, I, J):
        """Like block() but guaranteed off-diagonal (I, J disjoint)."""
        I = np.asarray(I, dtype=np.int64)
        J = np.asarray(J, dtype=np.int64)
        vals = self.kernel_lookup(self._coords[I], self._coords[J]) * (self.h * self.h)
        vals *= np.multiply.outer(self.b_vals[I], self.c_vals[J])
        return vals

    def proxy_rows(self, z_coords, J):
        """h^2 K(z, x_j) c_j rows for proxy points z (c == 1 on proxies)."""
        vals = self.kernel_lookup(z_coords, self._coords[np.asarray(J, dtype=np.int64)])
        vals *= self.c_vals[np.asarray(J)][None, :]
        vals *= self.h * self.h
        return vals

    def proxy_cols(self, I, z_coords):
        """h^2 b_i K(x_i, z) columns for proxy points z."""
        I = np.asarray(I, dtype=np.int64)
        vals = self.kernel_lookup(self._coords[I], z_coords)
        vals *= self.b_vals[I][:, None]
        vals *= self.h * self.h
        return vals

    def raw_kernel_block(self, p_coords, q_coords):
        """Plain K between lattice coord sets (no fields, no h^2)."""
        return self.kernel_lookup(p_coords, q_coords)


@lru_cache(maxsize=8)
def _cached_assembler(spec, n_side, quad):
    return Assembler(spec, Grid(n_side), quad)


def get_assembler(spec, grid, quad=PLAIN):
    return _cached_assembler(spec, grid.n_side, quad)


def assemble_entry(spec, grid, quad, i, j):
    """Single entry A[i, j]."""
    n = grid.n
    if not (0 <= i < n and 0 <= j < n):
        raise IndexError("entry index out of range")
    asm = get_assembler(spec, grid, quad)
    return asm.block(np.array([i]), np.array([j]))[0, 0]

def assemble_dense(spec, grid, quad, I, J):
    """Dense block A[I, J]; refuses blocks above DENSE_ENTRY_CAP entries."""
    I = np.asarray(I, dtype=np.int64)
    J = np.asarray(J, dtype=np.int64)
    if I.size * J.size > DENSE_ENTRY_CAP:
        raise ResourceError(
            f"dense block {I.size} x {J.size} exceeds cap of {DENSE_ENTRY_CAP} entries")
    if I.size and ((I.min() < 0) or (I.max() >= grid.n)):
        raise IndexError("row index out of range")
    if J.size and ((J.min() < 0) or (J.max() >= grid.n)):
        raise IndexError("column index out of range")
    asm = get_assembler(spec, grid, quad)
    if I.size == 0 or J.size == 0:
        return np.zeros((I.size, J.size), dtype=spec.dtype)
    return asm.block(I, J)
