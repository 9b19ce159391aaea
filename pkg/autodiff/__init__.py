from autodiff.tensor import Tape, Tensor, gradient
from autodiff.gradcheck import finite_difference_check

__all__ = ["Tape", "Tensor", "gradient", "finite_difference_check"]
