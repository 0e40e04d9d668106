"""Small network-building helpers shared by the adapters and policies."""

from __future__ import annotations

import math

import numpy as np

from .numerics import ParameterRecord, Rng, Tensor
from .numerics import ops


_BIAS_SCALE = 0.05


def init_linear(params: ParameterRecord, rng: Rng, name: str, fan_in: int,
                fan_out: int, zero: bool = False) -> None:
    """Weight ~ N(0, 1/fan_in), small random bias (keeps all-zero inputs off
    the exact-zero latent where cosines are undefined); ``zero`` zeroes both."""
    if zero:
        params.add(f"{name}.w", Tensor(np.zeros((fan_in, fan_out))))
        params.add(f"{name}.b", Tensor(np.zeros(fan_out)))
        return
    w = rng.normal((fan_in, fan_out), scale=1.0 / math.sqrt(fan_in))
    params.add(f"{name}.w", Tensor(w))
    params.add(f"{name}.b", Tensor(rng.normal((fan_out,), scale=_BIAS_SCALE)))


def init_conv(params: ParameterRecord, rng: Rng, name: str, cout: int,
              cin: int, k: int) -> None:
    fan_in = cin * k * k
    w = rng.normal((cout, cin, k, k), scale=1.0 / math.sqrt(fan_in))
    params.add(f"{name}.w", Tensor(w))
    params.add(f"{name}.b", Tensor(rng.normal((cout,), scale=_BIAS_SCALE)))


def linear(nodes: dict, name: str, x):
    """x [N, fan_in] -> [N, fan_out]."""
    return ops.add_rowvec(ops.matmul(x, nodes[f"{name}.w"]), nodes[f"{name}.b"])


def linear_tokens(nodes: dict, name: str, x):
    """x [B, S, fan_in] -> [B, S, fan_out] through a shared linear map."""
    b, s, d = x.shape
    flat = ops.reshape(x, (b * s, d))
    out = linear(nodes, name, flat)
    return ops.reshape(out, (b, s, out.shape[-1]))


def mlp(nodes: dict, prefix: str, x, layer_names: tuple[str, ...], activation):
    """Chain of linears with ``activation`` between them (none after the last)."""
    h = x
    for i, lname in enumerate(layer_names):
        h = linear(nodes, f"{prefix}.{lname}", h)
        if i + 1 < len(layer_names):
            h = activation(h)
    return h


def attention_block(nodes: dict, prefix: str, x, heads: int):
    """Pre-LN self-attention block with a GELU FFN; x [B, S, D]."""
    b, s, d = x.shape
    hd = d // heads
    h = ops.layernorm(x)
    q = linear_tokens(nodes, f"{prefix}.q", h)
    k = linear_tokens(nodes, f"{prefix}.k", h)
    v = linear_tokens(nodes, f"{prefix}.v", h)

    def split_heads(t):
        t = ops.reshape(t, (b, s, heads, hd))
        t = ops.transpose(t, (0, 2, 1, 3))
        return ops.reshape(t, (b * heads, s, hd))

    qh, kh, vh = split_heads(q), split_heads(k), split_heads(v)
    scores = ops.scale(ops.bmm(qh, ops.transpose(kh, (0, 2, 1))), 1.0 / math.sqrt(hd))
    attn = ops.softmax_rows(scores)
    ctx = ops.bmm(attn, vh)
    ctx = ops.reshape(ctx, (b, heads, s, hd))
    ctx = ops.transpose(ctx, (0, 2, 1, 3))
    ctx = ops.reshape(ctx, (b, s, d))
    x = ops.add(x, linear_tokens(nodes, f"{prefix}.o", ctx))

    h2 = ops.layernorm(x)
    ffn = linear_tokens(nodes, f"{prefix}.ffn2",
                        ops.gelu(linear_tokens(nodes, f"{prefix}.ffn1", h2)))
    return ops.add(x, ffn)


def init_attention_block(params: ParameterRecord, rng: Rng, prefix: str,
                         d: int, ffn_hidden: int) -> None:
    for lname in ("q", "k", "v", "o"):
        init_linear(params, rng, f"{prefix}.{lname}", d, d)
    init_linear(params, rng, f"{prefix}.ffn1", d, ffn_hidden)
    init_linear(params, rng, f"{prefix}.ffn2", ffn_hidden, d)
