"""Semantic side of the codec: tokenizer, index coding, captions, prompts."""

from .captioner import (
    FULL_CAPTION_PROMPT,
    RESIDUAL_PROMPT,
    HttpCaptioner,
    MockCaptioner,
    fill_residual_prompt,
    srr_residual,
)
from .indexcode import (
    baseline_compress,
    baseline_decompress,
    decode_indices,
    encode_indices,
    fixed_bits_per_token,
    text_payload_bits,
)
from .pfo import (
    PfoConfig,
    PfoResult,
    aux_loss,
    composite_loss,
    pfo_optimize,
    project_embeddings,
)
from .tokenizer import BYTE_TOKENS, TokenSequence, Vocabulary, detokenize, tokenize

__all__ = [
    "BYTE_TOKENS",
    "FULL_CAPTION_PROMPT",
    "RESIDUAL_PROMPT",
    "HttpCaptioner",
    "MockCaptioner",
    "PfoConfig",
    "PfoResult",
    "TokenSequence",
    "Vocabulary",
    "aux_loss",
    "baseline_compress",
    "baseline_decompress",
    "composite_loss",
    "decode_indices",
    "detokenize",
    "encode_indices",
    "fill_residual_prompt",
    "fixed_bits_per_token",
    "pfo_optimize",
    "project_embeddings",
    "srr_residual",
    "text_payload_bits",
    "tokenize",
]
