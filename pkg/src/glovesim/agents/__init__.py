"""Decision backends that read the experience bank."""

from .baselines import DecayView, FrozenView, NoMemoryAgent, decay_weight
from .planner import (
    BankView,
    PathValueAnnotation,
    PlannerAgent,
    ValueTable,
    annotate,
    lowest_index_policy,
    planner_decide,
)
from .remote import RemoteAgent, RemoteError, parse_action, remote_decide, render_prompt

__all__ = [
    "BankView",
    "DecayView",
    "FrozenView",
    "NoMemoryAgent",
    "PathValueAnnotation",
    "PlannerAgent",
    "RemoteAgent",
    "RemoteError",
    "ValueTable",
    "annotate",
    "decay_weight",
    "lowest_index_policy",
    "parse_action",
    "planner_decide",
    "remote_decide",
    "render_prompt",
]
