"""Super-efficient super resolution with collapsible linear blocks."""
import logging

from .collapse import collapse_linear_block, collapse_network, residual_identity_weight
from .cost import count_macs, count_params, plan_tiles
from .graph import (NetworkSpec, build_inference_graph, build_training_graph, forward)

__all__ = [
    "NetworkSpec", "build_training_graph", "build_inference_graph", "forward",
    "collapse_linear_block", "residual_identity_weight", "collapse_network",
    "count_params", "count_macs", "plan_tiles",
]

logging.getLogger(__name__).addHandler(logging.NullHandler())
