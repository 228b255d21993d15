"""Lattice constants for singular-quadrature diagonal corrections.

Generated by scripts/generate_quad_constants.py; do not edit by hand.
See that script for the derivation and the self-checks it enforces.
"""

# log-singularity: I - T' = h^2 f(0) (LOG_H2_LOGH * log h + LOG_H2_CONST) + O(h^4)
LOG_H2_LOGH = 1.0
LOG_H2_CONST = -1.3105329258137919

# residual h^4 coefficient after the diagonal correction (times lap f(0)/2);
# informational only, documents that the corrected rule is O(h^4) clean
LOG_H4_CONST = -0.04859353175982949

# 1/r singularity: I - T' = INV_R_H1_CONST * h * f(0) + O(h^3)
INV_R_H1_CONST = 3.9002649200601773
