from .build import (BlockDiagOp, EntryOracle, HssOp, InverseOp, LowRankOp, PermutedOp,
                    RestrictedOp, SumOp, compress_from_entries,
                    compress_from_operator)
from .core import Hss1dMatrix
from .invert import Hss1dInverse, hss1d_invert
from .ops import (HssPlusLowRank, from_blob, hss1d_add_lowrank,
                  hss1d_compress, hss1d_lstsq,
                  hss1d_matvec, hss1d_merge, hss1d_recompress, hss1d_split,
                  hss1d_sum, lr_to_hss1d, to_blob, zero_hss)

__all__ = [
    "BlockDiagOp", "EntryOracle", "HssOp", "InverseOp", "LowRankOp", "PermutedOp",
    "RestrictedOp", "SumOp", "compress_from_entries", "compress_from_operator",
    "Hss1dMatrix",
    "Hss1dInverse", "hss1d_invert", "HssPlusLowRank", "from_blob", "hss1d_add_lowrank",
    "hss1d_compress", "hss1d_lstsq", "hss1d_matvec", "hss1d_merge",
    "hss1d_recompress", "hss1d_split", "hss1d_sum", "lr_to_hss1d", "to_blob",
    "zero_hss",
]
