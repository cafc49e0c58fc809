"""Small random-instance gradient checks for both models (64-bit)."""
from __future__ import annotations

import numpy as np

from plnmt import codemodel, nmt
from plnmt.numcore import Tape, check_gradients
from plnmt.numcore.gradcheck import GradCheckReport


def _randomize(params, rng, scale=0.5):
    # uniform(-0.08, 0.08) weights give gradients too small to compare against differences
    for name, value in params.items():
        params.set(name, rng.normal(0.0, scale, value.shape))
    return params


def code_model_gradcheck(tolerance: float = 1e-4, seed: int = 0, eps: float = 1e-3) -> GradCheckReport:
    """One loss batch through tag encoder, Gumbel-Softmax, conditioning and tag decoder.

    Uses the soft relaxation with fixed noise: the straight-through forward
    value is piecewise constant, so finite differences cannot see it.
    """
    config = codemodel.CodeConfig(n=2, k=3, hidden=4, embed=3, hard=False, seed=seed)
    params = _randomize(codemodel.init_params(config, 7, np.float64), np.random.default_rng(seed))
    src = codemodel.pad_batch([[3, 4, 5], [4, 6], [5]], 0)
    tags = codemodel.pad_batch([[2, 3, 6], [4, 2], [5, 3, 4, 6]], codemodel.TAG_EOS)

    def closure(p):
        tape = Tape(p, rng=np.random.default_rng(seed + 1))
        return tape, codemodel.batch_loss(tape, src, tags, config)

    return check_gradients(closure, params, tolerance=tolerance, eps=eps)


def nmt_gradcheck(tolerance: float = 1e-4, seed: int = 0, eps: float = 1e-3) -> GradCheckReport:
    """One teacher-forced batch: bidirectional encoder, attention, residual decoder, dropout."""
    config = nmt.NmtConfig(hidden=4, embed=3, dropout=0.2, seed=seed)
    params = _randomize(nmt.init_params(config, 7, 9, dtype=np.float64), np.random.default_rng(seed))
    src = nmt.pad_ids([[3, 4, 5], [4, 6]])
    tgt = nmt.pad_ids([[3, 4], [5, 6, 7]])

    def closure(p):
        tape = Tape(p, train=True, rng=np.random.default_rng(seed + 1))
        return tape, nmt.teacher_forced_loss(tape, src, tgt, config, eos_id=2)

    return check_gradients(closure, params, tolerance=tolerance, eps=eps)
