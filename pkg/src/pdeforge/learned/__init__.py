"""Learned Poisson solvers built on torch autodiff."""
from .kernels import (fft_conv, fft_multiply, haar_dwt, haar_idwt, leaky_relu, mse, periodic_conv,
                      periodic_conv_transpose, periodic_laplacian, relative_l2, strided_conv,
                      strided_conv_transpose)
from .learned_mg import VARIANTS, CorrectionNet, LearnedMG, learned_vcycle
from .poisson_nn import FourierSeriesNet, PoissonNN, SirenNet, poisson_nn_forward
from .training import LossCurves, Schedule, TrainingError, train

__all__ = [
    "fft_conv", "fft_multiply", "haar_dwt", "haar_idwt", "leaky_relu", "mse", "periodic_conv",
    "periodic_conv_transpose", "periodic_laplacian", "relative_l2", "strided_conv", "strided_conv_transpose",
    "VARIANTS", "CorrectionNet", "LearnedMG", "learned_vcycle",
    "FourierSeriesNet", "PoissonNN", "SirenNet", "poisson_nn_forward",
    "LossCurves", "Schedule", "TrainingError", "train",
]
