"""Volume scattering application layer: second-kind system setup from a
wave-speed deviation field, direct and preconditioned-iterative solves, and
the grid-refinement convergence study.

The scatterer is the product-tanh deviation profile b(x) >= 0; the system
unknown is the symmetrized density tau with b entering as sqrt(b) row and
column weights, and the outgoing field is reconstructed by quadrature
against the free-space kernel.
"""

from dataclasses import dataclass

import numpy as np

from .config import SolverOptions
from .errors import ConfigError, IterationError
from .kernels import H4, Grid, KernelSpec, kernel_eval, make_field
from .solver_compressed import compress_inverse
from .solver_dense import compress_outer, invert_dense_block


@dataclass(frozen=True)
class ScatteringProblem:
    kappa: float                 # wavelengths across the domain; k = 2 pi kappa
    n_side: int
    d: float = 15.0              # edge steepness of the deviation profile
    eps_edge: float = 0.3        # transition distance from the domain boundary
    source: tuple = (2.0, 2.0)   # point-source location outside the domain
    quad: object = H4

    def __post_init__(self):
        if max(abs(self.source[0]), abs(self.source[1])) <= 1.0:
            raise ConfigError("source must lie outside the domain")
        if self.kappa <= 0:
            raise ConfigError("kappa must be positive")

    @property
    def k(self):
        return 2.0 * np.pi * self.kappa

    @property
    def grid(self):
        return Grid(self.n_side)

    def b_values(self, xy):
        return make_field("tanh_box", d=self.d, eps_edge=self.eps_edge,
                          scale=self.k ** 2)(xy)

    def sqrt_b_field(self):
        return make_field("tanh_box_sqrt", d=self.d, eps_edge=self.eps_edge,
                          scale=self.k ** 2)

    def free_kernel(self):
        return KernelSpec("helmholtz2d", k=self.k)

    def incoming(self, xy):
        r = np.hypot(xy[..., 0] - self.source[0], xy[..., 1] - self.source[1])
        return kernel_eval(self.free_kernel(), r)


def setup_ls(problem):
    """(KernelSpec, rhs): symmetrized second-kind system and its data."""
    grid = problem.grid
    xy = grid.points()
    b = problem.b_values(xy)
    if np.any(b < 0):
        raise ConfigError("deviation field must be nonnegative")
    w = problem.sqrt_b_field()
    spec = KernelSpec("helmholtz2d", k=problem.k, b_field=w, c_field=w)
    rhs = -np.sqrt(b) * problem.incoming(xy)
    return spec, rhs


def outgoing_field(problem, tau, targets):
    """u_out at target points by direct quadrature of the density."""
    grid = problem.grid
    xy = grid.points()
    w = np.sqrt(problem.b_values(xy)) * tau * grid.h ** 2
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    out = np.empty(targets.shape[0], dtype=np.complex128)
    for i, t in enumerate(targets):
        r = np.hypot(xy[:, 0] - t[0], xy[:, 1] - t[1])
        out[i] = np.sum(kernel_eval(problem.free_kernel(), r) * w)
    return out


def _support_mask(spec, grid):
    vals = np.abs(spec.b_field(grid.points()))
    return vals > 0.0 if np.any(vals == 0.0) else None


def solve_direct(problem, eps=1e-10, refine=True, mode="compressed", opts=None,
                 n_probe_rhs=3, rng=None):
    """Direct solve of the scattering system.

    Returns (tau, info) where info carries the compressed operator, the
    inverse, the approximate-residual measure E of the solve, and a callable
    u_out(targets).  With `refine`, one round of residual correction is
    applied (an extra inverse and matrix apply).
    """
    spec, rhs = setup_ls(problem)
    grid = problem.grid
    opts = opts or SolverOptions(eps=eps)
    info = {}
    if np.linalg.norm(rhs) == 0.0:
        tau = np.zeros(grid.n, dtype=np.complex128)
        info.update(residual=0.0, u_out=lambda t: np.zeros(len(np.atleast_2d(t)),
                                                           dtype=np.complex128))
        return tau, info
    H = compress_outer(spec, grid, _tree_for(grid, opts, spec), eps, opts,
                       quad=problem.quad)
    mask = _support_mask(spec, grid)
    if mode == "dense":
        inv = invert_dense_block(H)
    else:
        inv = compress_inverse(spec, grid, tree=_tree_for(grid, opts, spec),
                               eps=eps, opts=opts, quad=problem.quad,
                               support_mask=mask)
    tau = inv.apply(rhs)
    if refine:
        tau = tau + inv.apply(rhs - H.matvec(tau))
    resid = np.linalg.norm(rhs - H.matvec(tau)) / np.linalg.norm(rhs)
    info.update(matrix=H, inverse=inv, residual=float(resid),
                u_out=lambda targets: outgoing_field(problem, tau, targets))
    if n_probe_rhs:
        info["approx_residual"] = approx_residual(H, inv, grid,
                                                  n_rhs=n_probe_rhs, rng=rng)
    return tau, info


def _tree_cache():
    cache = {}

    def get(grid, opts, spec):
        from .tree import annotate_skeletons, build_tree
        key = (grid.n_side, opts.leaf_size, opts.resolved_layers(spec),
               opts.keep_interface_interior(spec))
        if key not in cache:
            tree = build_tree(grid, opts.leaf_size)
            kw = {}
            if opts.keep_interface_interior(spec):
                kw = dict(k_wave=spec.k,
                          points_per_wavelength=opts.points_per_wavelength)
            annotate_skeletons(tree, opts.resolved_layers(spec), **kw)
            cache[key] = tree
        return cache[key]

    return get


_tree_for = _tree_cache()


def approx_residual(H, inv, grid, n_rhs=3, rng=None):
    """max over random v of ||v - (compressed A)(compressed A^-1) v|| / ||v||."""
    rng = rng or np.random.default_rng(0)
    worst = 0.0
    for _ in range(n_rhs):
        v = rng.standard_normal(grid.n)
        x = inv.apply(v)
        worst = max(worst, float(np.linalg.norm(v - H.matvec(x))
                                 / np.linalg.norm(v)))
    return worst


def bicgstab(apply_a, b, tol, max_iter=200, x0=None):
    """Plain BiCGstab with one restart on rho-breakdown.

    Returns (x, iterations, history); raises IterationError on breakdown
    after restart or when max_iter is exhausted.
    """
    n = b.shape[0]
    nb = np.linalg.norm(b)
    history = []

    def run(x):
        r = b - apply_a(x) if np.any(x) else b.copy()
        rhat = r.copy()
        rho = alpha = omega = 1.0
        v = p = np.zeros_like(b)
        for it in range(1, max_iter + 1):
            rho_new = np.vdot(rhat, r)
            if abs(rho_new) < 1e-300 * nb * nb or (omega == 0.0 and it > 1):
                return x, it - 1, False
            beta = (rho_new / rho) * (alpha / omega) if it > 1 else 0.0
            p = r + beta * (p - omega * v) if it > 1 else r.copy()
            v = apply_a(p)
            alpha = rho_new / np.vdot(rhat, v)
            s = r - alpha * v
            if np.linalg.norm(s) / nb <= tol:
                x = x + alpha * p
                history.append(np.linalg.norm(b - apply_a(x)) / nb)
                return x, it, True
            t = apply_a(s)
            omega = np.vdot(t, s) / np.vdot(t, t)
            x = x + alpha * p + omega * s
            r = s - omega * t
            rho = rho_new
            history.append(np.linalg.norm(r) / nb)
            if history[-1] <= tol:
                return x, it, True
        return x, max_iter, False

    x0 = np.zeros_like(b) if x0 is None else x0
    x, iters, ok = run(x0)
    if not ok and iters < max_iter:
        # rho breakdown: restart once from the current iterate
        x, extra, ok = run(x)
        iters += extra
    if not ok:
        raise IterationError(
            f"BiCGstab did not converge in {iters} iterations "
            f"(residual {history[-1] if history else 1.0:.2e})", history)
    return x, iters, history


def build_ti_preconditioner(problem, eps=1e-10, opts=None):
    """Compressed inverse of the constant-coefficient operator at the same
    wavenumber and quadrature, shared per level (right preconditioner)."""
    spec = KernelSpec("helmholtz2d", k=problem.k)
    opts = opts or SolverOptions(eps=eps)
    return compress_inverse(spec, problem.grid, tree=_tree_for(problem.grid, opts, spec),
                            eps=eps, opts=opts, quad=problem.quad, ti_mode=True)


def solve_iterative(problem, eps=1e-10, precond=None, eps_iter=None, opts=None,
                    max_iter=200):
    """Right-preconditioned BiCGstab solve of the scattering system.

    Returns (tau, iterations, info).  The preconditioner is the compressed
    inverse of the constant-coefficient operator (built here when absent).
    """
    spec, rhs = setup_ls(problem)
    grid = problem.grid
    opts = opts or SolverOptions(eps=eps)
    eps_iter = eps_iter if eps_iter is not None else 10.0 * eps
    H = compress_outer(spec, grid, _tree_for(grid, opts, spec), eps, opts,
                       quad=problem.quad)
    M = precond or build_ti_preconditioner(problem, eps=eps, opts=opts)
    if np.linalg.norm(rhs) == 0.0:
        return np.zeros(grid.n, np.complex128), 0, {"matrix": H, "precond": M}
    y, iters, history = bicgstab(lambda z: H.matvec(M.apply(z)), rhs,
                                 tol=eps_iter, max_iter=max_iter)
    tau = M.apply(y)
    resid = np.linalg.norm(rhs - H.matvec(tau)) / np.linalg.norm(rhs)
    return tau, iters, {"matrix": H, "precond": M, "residual": float(resid),
                        "history": history}


def convergence_study(kappa, n_sides, eps=1e-12, quad=H4, opts=None,
                      study_inverse=False):
    """Empirical refinement order of the quadrature through the compressed
    operator apply (and optionally the inverse apply).

    Applies the operator to one fixed smooth density on a ladder of grids
    and Richardson-estimates the order of a smooth functional of the result
    (a bump-weighted mean of the integral part), which isolates the
    singular-quadrature error.
    """
    vals = []
    vals_inv = []
    problems = [ScatteringProblem(kappa=kappa, n_side=ns, quad=quad)
                for ns in n_sides]

    def density(xy):
        return np.exp(-((xy[..., 0] - 0.1) ** 2 + (xy[..., 1] + 0.15) ** 2)
                      / 0.12)

    def weight(xy):
        return np.exp(-(xy[..., 0] ** 2 + xy[..., 1] ** 2) / 0.3)

    for prob in problems:
        spec, rhs = setup_ls(prob)
        grid = prob.grid
        o = opts or SolverOptions(eps=eps)
        H = compress_outer(spec, grid, _tree_for(grid, o, spec), eps, o,
                           quad=prob.quad)
        xy = grid.points()
        tau = density(xy)
        integral_part = H.matvec(tau.astype(np.complex128)) - tau
        vals.append(complex(grid.h ** 2 * np.sum(weight(xy) * integral_part)))
        if study_inverse:
            inv = compress_inverse(spec, grid, tree=_tree_for(grid, o, spec),
                                   eps=eps, opts=o, quad=prob.quad)
            sol = inv.apply(rhs)
            vals_inv.append(complex(grid.h ** 2 * np.sum(weight(xy) * sol)))

    def orders(seq):
        out = []
        for i in range(len(seq) - 2):
            d1 = abs(seq[i] - seq[i + 1])
            d2 = abs(seq[i + 1] - seq[i + 2])
            if d2 == 0:
                break
            out.append(np.log2(d1 / d2) / np.log2(n_sides[i + 1] / n_sides[i]))
        return out

    result = {"values": vals, "orders": orders(vals)}
    if study_inverse:
        result["values_inverse"] = vals_inv
        result["orders_inverse"] = orders(vals_inv)
    return result
