"""Client for chat-completions multimodal endpoints."""

from .client import BackendInference, ChatClient, ConfigurationError, EndpointConfig, TransportError
from .mock import MockChatServer, MockReply
from .prompt import CLOSING, PREAMBLE, build_prompt, expand_frames, prompt_bytes

__all__ = [
    "BackendInference",
    "CLOSING",
    "ChatClient",
    "ConfigurationError",
    "EndpointConfig",
    "MockChatServer",
    "MockReply",
    "PREAMBLE",
    "TransportError",
    "build_prompt",
    "expand_frames",
    "prompt_bytes",
]
