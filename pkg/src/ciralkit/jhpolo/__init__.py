"""Mining document pairs and turning them into LLM-written training examples."""

from .generate import (
    ExtractiveMockClient,
    GeneratedExample,
    GenerationResult,
    HttpChatClient,
    MockChatClient,
    TransportError,
    generate_examples,
)
from .lcs import lcs_len
from .mining import MinedPair, MiningParams, filter_candidate, mine_pairs
from .prompt import PROMPT_TEMPLATE, ResponseParseError, build_prompt, parse_response
from .qc import QcParams, StubScorer, apply_qc, qc_banned, qc_margin

__all__ = [
    "ExtractiveMockClient",
    "GeneratedExample",
    "GenerationResult",
    "HttpChatClient",
    "MinedPair",
    "MiningParams",
    "MockChatClient",
    "PROMPT_TEMPLATE",
    "QcParams",
    "ResponseParseError",
    "StubScorer",
    "TransportError",
    "apply_qc",
    "build_prompt",
    "filter_candidate",
    "generate_examples",
    "lcs_len",
    "mine_pairs",
    "parse_response",
    "qc_banned",
    "qc_margin",
]
