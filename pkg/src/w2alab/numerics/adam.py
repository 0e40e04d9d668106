"""Bias-corrected Adam over named parameter records."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractError
from . import kernels
from .tensor import ParameterRecord


@dataclass
class AdamState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    first_moment: dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def init(cls, params: ParameterRecord, lr: float, beta1: float = 0.9,
             beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        state = cls(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
        for name, t in params.items():
            state.first_moment[name] = np.zeros(t.size)
            state.second_moment[name] = np.zeros(t.size)
        return state


def adam_step(params: ParameterRecord, grads: ParameterRecord, state: AdamState) -> None:
    """One in-place update, applied in lexicographic parameter-name order."""
    if params.frozen:
        raise ContractError("cannot update frozen parameters")
    t = state.step + 1
    for name, tensor in params.items():
        if name not in grads:
            raise ContractError(f"missing gradient for parameter {name!r}")
        g = grads[name]
        if g.shape != tensor.shape:
            raise ContractError(f"gradient shape {g.shape} != parameter shape "
                                f"{tensor.shape} for {name!r}")
        if name not in state.first_moment:
            raise ContractError(f"optimizer state missing entry {name!r}")
        kernels.adam_update(tensor.data, g.data, state.first_moment[name],
                            state.second_moment[name], state.lr, state.beta1,
                            state.beta2, state.eps, t)
    state.step = t
