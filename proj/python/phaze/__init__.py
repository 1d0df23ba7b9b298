"""Accelerator architecture search and training placement."""

import json

from ._phaze import (
    Error,
    InfeasibleError,
    ParseError,
    Workload,
    allreduce_ticks,
    derived_l2,
    enumerate_configs,
    generate_transformer,
    graph_lp,
    load_workload,
    parse_workload,
    transfer_ticks,
)
from . import _phaze

__all__ = [
    "Error",
    "InfeasibleError",
    "ParseError",
    "Workload",
    "allreduce_ticks",
    "derived_l2",
    "enumerate_configs",
    "generate_transformer",
    "graph_lp",
    "load_workload",
    "parse_workload",
    "place",
    "schedule_graph",
    "search",
    "transfer_ticks",
]


def schedule_graph(kinds, edges, latencies, num_tc, num_vc, lazy=True):
    """Optimal schedule of an operator graph as a dict.

    ``kinds`` holds "tensor", "vector" or "fused" per operator and
    ``latencies`` a (single_core, intra_op) pair per operator.
    """
    return json.loads(_phaze.schedule_graph(kinds, edges, latencies, num_tc, num_vc, lazy))


def place(workload, config="", recompute="auto", gpipe=False):
    """Best placement of ``workload`` on the configured accelerator."""
    return json.loads(_phaze.place(workload, config, recompute, gpipe))


def search(workloads, config="", hysteresis=0, exhaustive=False, workers=1):
    """Run the architecture search and return the report as a dict."""
    return json.loads(_phaze.search(list(workloads), config, hysteresis, exhaustive, workers))
