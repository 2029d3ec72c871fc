from .base import (
    BINARY_TOKENS,
    MASK_TOKEN,
    CountingProvider,
    LogitsResponse,
    MaskPredictor,
    MaskQuery,
    PromptContext,
    Strategy,
    load_template,
    payload_key,
    render_prompt,
    replay_key,
    request_payload,
)
from .remote import RemoteProvider
from .replay import RecordingProvider, ReplayProvider
from .synthetic import OracleConfig, SyntheticOracle

__all__ = [
    "BINARY_TOKENS",
    "MASK_TOKEN",
    "CountingProvider",
    "LogitsResponse",
    "MaskPredictor",
    "MaskQuery",
    "OracleConfig",
    "PromptContext",
    "RecordingProvider",
    "RemoteProvider",
    "ReplayProvider",
    "Strategy",
    "SyntheticOracle",
    "load_template",
    "payload_key",
    "render_prompt",
    "replay_key",
    "request_payload",
]
