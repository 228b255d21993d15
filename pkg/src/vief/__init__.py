"""Fast direct solver for discretized 2D volume integral equations."""

from .config import SolverOptions
from .errors import (ConfigError, IterationError, NumericalError,
                     ResourceError, SingularFactorError, ViefError)
from .kernels import (H4, PLAIN, Field, Grid, KernelSpec, QuadratureCorrection,
                      assemble_dense, assemble_entry, get_assembler,
                      kernel_eval, make_field)
from .tree import BoxTree, build_tree, annotate_skeletons

__all__ = [
    "SolverOptions", "ConfigError", "IterationError", "NumericalError",
    "ResourceError", "SingularFactorError", "ViefError",
    "H4", "PLAIN", "Field", "Grid", "KernelSpec", "QuadratureCorrection",
    "assemble_dense", "assemble_entry", "get_assembler", "kernel_eval",
    "make_field", "BoxTree", "build_tree", "annotate_skeletons",
]
