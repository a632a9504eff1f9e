"""Dense tensor storage and the t-product algebra."""

from dtr_recovery.algebra.tensors import (
    ComplexTensor,
    DenseTensor,
    Matrix,
    as_dense,
    from_flat,
    linear_offset,
    to_flat,
)
from dtr_recovery.algebra.tproduct import (
    SliceSvd,
    dft_matrix,
    dft_mode3,
    facewise_product,
    frobenius_norm,
    hadamard,
    idft_mode3,
    mode3_fold,
    mode3_product,
    mode3_unfold,
    slice_svd,
    t_product,
    tube_identity,
    tubal_rank,
)

__all__ = [
    "ComplexTensor",
    "DenseTensor",
    "Matrix",
    "SliceSvd",
    "as_dense",
    "dft_matrix",
    "dft_mode3",
    "facewise_product",
    "frobenius_norm",
    "from_flat",
    "hadamard",
    "idft_mode3",
    "linear_offset",
    "mode3_fold",
    "mode3_product",
    "mode3_unfold",
    "slice_svd",
    "t_product",
    "to_flat",
    "tube_identity",
    "tubal_rank",
]
