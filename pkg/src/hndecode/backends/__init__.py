"""Model backends: the abstract contract, the toy table model, the API client."""

from .api import ApiBackend
from .base import Backend, DecodeParams, GenerationResult, detokenize
from .toy import (
    EOT,
    EnumeratedRollout,
    ToyBackend,
    ToyModelSpec,
    enumerate_all_rollouts,
    load_toy_spec,
    parse_toy_spec,
    path_probability,
)

__all__ = [
    "ApiBackend",
    "Backend",
    "DecodeParams",
    "GenerationResult",
    "detokenize",
    "EOT",
    "EnumeratedRollout",
    "ToyBackend",
    "ToyModelSpec",
    "enumerate_all_rollouts",
    "load_toy_spec",
    "parse_toy_spec",
    "path_probability",
]
