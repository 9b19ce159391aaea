from operators.degradation import (
    Downsample, ForwardOperator, GaussianBlur, KSpaceMask, MatrixOperator, Measurement,
    add_noise, adjoint, apply, baseline_reconstruction, make_mask, make_operator,
    null_space_component, null_space_witness,
)
from operators.fourier import dft2, idft2

__all__ = [
    "Downsample", "ForwardOperator", "GaussianBlur", "KSpaceMask", "MatrixOperator", "Measurement",
    "add_noise", "adjoint", "apply", "baseline_reconstruction", "make_mask", "make_operator",
    "null_space_component", "null_space_witness", "dft2", "idft2",
]
