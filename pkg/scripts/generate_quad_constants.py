#!/usr/bin/env python3
"""Regenerate src/vief/_quad_constants.py.

The punctured trapezoidal rule on a square lattice,

    T'[f] = h^2 * sum_{j != 0} f(j h) S(|j h|),

has a local error expansion against I[f] = int f(y) S(|y|) dy whose leading
terms are set by universal lattice constants.  For the log singularity
S(r) = log r the expansion is

    I - T' = h^2 f(0) (log h + D0) + h^4 (lap f)(0) (C2 log h + D2)/2 + ...

and for S(r) = 1/r it is

    I - T' = h P0 f(0) + O(h^3).

This script measures the constants by evaluating both sides on Gaussian test
functions (analytic, so the smooth part of the trapezoidal error is far below
the fitted terms) and fitting the expansion over a ladder of h values.  Two
Gaussian widths are fitted independently and must agree; the run aborts
otherwise.  The derivation uses no external data.

Adding back the h^2 f(0)(log h + D0) term as a diagonal correction makes the
rule O(h^4) for log-type kernels (the h^4 log h coefficient C2 fits to zero,
which the script verifies).
"""

import pathlib

import numpy as np
from scipy.integrate import quad

HS = 1.0 / np.array([24, 32, 40, 48, 64, 80, 96, 128, 160, 192, 256])


def lattice_error(singularity, width, hs, moment):
    """I[f] - T'[f] for f = (moment weight) * Gaussian(width), per h."""
    if moment == 0:
        radial = lambda r: 2 * np.pi * r * np.exp(-r * r / (2 * width * width))
    else:  # weight y1^2; angular average of y1^2 is r^2/2
        radial = lambda r: np.pi * r ** 3 * np.exp(-r * r / (2 * width * width))
    if singularity == "log":
        integrand = lambda r: radial(r) * np.log(r)
    else:
        integrand = lambda r: radial(r) / r
    exact, _ = quad(integrand, 0, np.inf, limit=800, epsabs=1e-16, epsrel=1e-15)

    out = []
    extent = 10.0 * width
    for h in hs:
        n = int(np.ceil(extent / h))
        j = np.arange(-n, n + 1)
        x, y = np.meshgrid(j * h, j * h, indexing="ij")
        r2 = x * x + y * y
        mask = r2 > 0
        rr2 = np.where(mask, r2, 1.0)
        if singularity == "log":
            s = 0.5 * np.log(rr2)
        else:
            s = 1.0 / np.sqrt(rr2)
        f = np.exp(-r2 / (2 * width * width))
        w = np.ones_like(r2) if moment == 0 else x * x
        out.append(exact - h * h * np.sum(np.where(mask, f * s * w, 0.0)))
    return np.array(out)


def fit_terms(err, hs, lead_power, with_log=True, nterms=4):
    cols = []
    for q in range(nterms):
        p = lead_power + 2 * q
        if with_log:
            cols.append(hs ** p * np.log(hs))
        cols.append(hs ** p)
    a = np.column_stack(cols)
    scale = np.linalg.norm(a, axis=0)
    coef, *_ = np.linalg.lstsq(a / scale, err, rcond=None)
    coef = coef / scale
    resid = np.max(np.abs(err - a @ coef) / np.abs(err))
    return coef, resid


def derive():
    results = {}
    for width in (0.12, 0.16):
        e0 = lattice_error("log", width, HS, moment=0)
        c, resid = fit_terms(e0, HS, 2)
        assert resid < 1e-7, f"log deg-0 fit residual {resid:.2e}"
        e2 = lattice_error("log", width, HS, moment=2)
        c2, resid2 = fit_terms(e2, HS, 4)
        assert resid2 < 1e-4, f"log deg-2 fit residual {resid2:.2e}"
        # 1/r singularity: expansion in odd powers of h, no log terms
        e1 = lattice_error("inv_r", width, HS, moment=0)
        c1, resid1 = fit_terms(e1, HS, 1, with_log=False)
        assert resid1 < 1e-6, f"1/r deg-0 fit residual {resid1:.2e}"
        results[width] = (c, c2, c1)

    (ca, c2a, c1a), (cb, c2b, c1b) = results.values()
    assert abs(ca[0] - cb[0]) < 1e-5 and abs(ca[1] - cb[1]) < 1e-5, "widths disagree (log)"
    assert abs(c1a[0] - c1b[0]) < 1e-5, "widths disagree (1/r)"
    assert abs(ca[0] - 1.0) < 1e-4, f"log-h coefficient should be 1, got {ca[0]}"
    assert abs(c2a[0]) < 1e-3, f"h^4 log h coefficient should vanish, got {c2a[0]}"
    return {
        "LOG_H2_LOGH": 1.0,  # fitted to 1 within 1e-5; exact by scaling argument
        "LOG_H2_CONST": 0.5 * (ca[1] + cb[1]),
        "LOG_H4_CONST": 0.5 * (c2a[1] + c2b[1]),
        "INV_R_H1_CONST": 0.5 * (c1a[0] + c1b[0]),
    }


TEMPLATE = '''"""Lattice constants for singular-quadrature diagonal corrections.

Generated by scripts/generate_quad_constants.py; do not edit by hand.
See that script for the derivation and the self-checks it enforces.
"""

# log-singularity: I - T' = h^2 f(0) (LOG_H2_LOGH * log h + LOG_H2_CONST) + O(h^4)
LOG_H2_LOGH = {LOG_H2_LOGH!r}
LOG_H2_CONST = {LOG_H2_CONST!r}

# residual h^4 coefficient after the diagonal correction (times lap f(0)/2);
# informational only, documents that the corrected rule is O(h^4) clean
LOG_H4_CONST = {LOG_H4_CONST!r}

# 1/r singularity: I - T' = INV_R_H1_CONST * h * f(0) + O(h^3)
INV_R_H1_CONST = {INV_R_H1_CONST!r}
'''


def main():
    vals = {k: float(v) for k, v in derive().items()}
    target = pathlib.Path(__file__).resolve().parents[1] / "src" / "vief" / "_quad_constants.py"
    target.write_text(TEMPLATE.format(**vals))
    for k, v in vals.items():
        print(f"{k} = {v!r}")
    print(f"wrote {target}")


if __name__ == "__main__":
    main()
