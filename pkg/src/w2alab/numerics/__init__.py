"""Dense-tensor arithmetic with reverse-mode autodiff, Adam, and checkpoints."""

from . import graph as ops
from .adam import AdamState, adam_step
from .checkpoint import (MAGIC, deserialize_record, load_record, record_digest,
                         save_record, serialize_record)
from .gradcheck import finite_difference_check
from .graph import Graph, Node, backward, elementwise
from .kernels import backend as kernel_backend
from .rng import Rng
from .tensor import ParameterRecord, Tensor, merge_records

__all__ = [
    "AdamState", "Graph", "MAGIC", "Node", "ParameterRecord", "Rng", "Tensor",
    "adam_step", "backward", "deserialize_record", "elementwise",
    "finite_difference_check", "kernel_backend", "load_record",
    "merge_records", "ops", "record_digest", "save_record", "serialize_record",
]
