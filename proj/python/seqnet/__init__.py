"""Sequential place descriptors and hierarchical sequence matching."""

from ._core import (
    Model,
    SeqNetError,
    Traverse,
    evaluate,
    extract,
    hvpr_match,
    init_model,
    load_model,
    retrieve_topk,
    seqmatch_full,
)
from . import _core

__all__ = [
    "Model",
    "SeqNetError",
    "Traverse",
    "evaluate",
    "extract",
    "hvpr_match",
    "init_model",
    "load_model",
    "retrieve_topk",
    "seqmatch_full",
    "synth_pair",
    "train",
]


def _key_values(options):
    lines = []
    for key, value in options.items():
        if isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{key}={value}")
    return "\n".join(lines) + "\n"


def synth_pair(**spec):
    """Reference and query traverses of a synthetic route. Keys match the synth config file."""
    return _core._synth_pair(_key_values(spec))


def train(reference, query, **config):
    """Train one model; returns (model, per-epoch log). Keys match the [train] config section."""
    return _core._train(reference, query, "[train]\n" + _key_values(config))
