from plnmt.numcore.gradcheck import GradCheckReport, check_gradients, relative_error
from plnmt.numcore.params import ParamStore
from plnmt.numcore.tape import Tape, Tensor, log_softmax, sample_gumbel, softmax

__all__ = [
    "GradCheckReport", "ParamStore", "Tape", "Tensor", "check_gradients",
    "log_softmax", "relative_error", "sample_gumbel", "softmax",
]
