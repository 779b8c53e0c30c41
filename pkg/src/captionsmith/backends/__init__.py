"""Backend interfaces, scripted fixtures, HTTP clients, and cassettes."""

from .base import (
    BackendId,
    BackendRole,
    BoundingBox,
    ChatBackend,
    ChatMessage,
    DepthBackend,
    DetectBackend,
    EmbedBackend,
    digest_chat,
    digest_depth,
    digest_detect,
    digest_embed,
)
from .cassette import (
    Cassette,
    CassetteChat,
    CassetteDepth,
    CassetteDetect,
    CassetteEmbed,
    CassetteMode,
)
from .http import HttpChat, HttpDepth, HttpDetect, HttpEmbed, RequestsTransport, Transport
from .scripted import (
    DigestChat,
    FixtureDepth,
    FixtureDetector,
    HashEmbedder,
    ScriptedChat,
    UnavailableDepth,
    UnavailableDetector,
    load_chat_script,
    load_depth_map,
    load_detections,
)

__all__ = [
    "BackendId",
    "BackendRole",
    "BoundingBox",
    "Cassette",
    "CassetteChat",
    "CassetteDepth",
    "CassetteDetect",
    "CassetteEmbed",
    "CassetteMode",
    "ChatBackend",
    "ChatMessage",
    "DepthBackend",
    "DetectBackend",
    "DigestChat",
    "EmbedBackend",
    "FixtureDepth",
    "FixtureDetector",
    "HashEmbedder",
    "HttpChat",
    "HttpDepth",
    "HttpDetect",
    "HttpEmbed",
    "RequestsTransport",
    "ScriptedChat",
    "Transport",
    "UnavailableDepth",
    "UnavailableDetector",
    "digest_chat",
    "digest_depth",
    "digest_detect",
    "digest_embed",
    "load_chat_script",
    "load_depth_map",
    "load_detections",
]
