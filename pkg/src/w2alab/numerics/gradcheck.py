"""Central finite-difference checking of analytic gradients."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .graph import Graph, Node, backward
from .rng import Rng
from .tensor import ParameterRecord


def finite_difference_check(
    build_loss: Callable[[Graph, dict[str, Node]], Node],
    params: ParameterRecord,
    h: float = 1e-5,
    max_coords_per_tensor: int = 25,
    rng: Rng | None = None,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``build_loss`` must deterministically rebuild the same scalar loss from a
    fresh graph with the given bound parameter nodes. For tensors larger than
    ``max_coords_per_tensor`` a random coordinate subset is probed. The
    relative error uses a small floor so near-zero gradient pairs are compared
    at finite-difference noise level rather than blowing up.
    """
    rng = rng or Rng(0, ("gradcheck",))

    def bind_and_build():
        g = Graph()
        nodes = {name: g.param(name, t) for name, t in params.items()}
        return g, build_loss(g, nodes)

    g, loss = bind_and_build()
    analytic = backward(g, loss)

    def loss_value() -> float:
        _, node = bind_and_build()
        return float(node.value.reshape(-1)[0])

    worst = 0.0
    for name, tensor in params.items():
        flat = tensor.data
        n = flat.size
        if n <= max_coords_per_tensor:
            coords = np.arange(n)
        else:
            coords = np.sort(rng.choice(n, size=max_coords_per_tensor, replace=False))
        ana_flat = analytic[name].data
        for idx in coords:
            idx = int(idx)
            orig = flat[idx]
            flat[idx] = orig + h
            f_plus = loss_value()
            flat[idx] = orig - h
            f_minus = loss_value()
            flat[idx] = orig
            numeric = (f_plus - f_minus) / (2.0 * h)
            ana = ana_flat[idx]
            err = abs(numeric - ana) / max(abs(numeric), abs(ana), 1e-5)
            if err > worst:
                worst = err
    return worst
