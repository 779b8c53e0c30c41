from __future__ import annotations

import socket
import struct
import zlib
from pathlib import Path

import pytest

from captionsmith.model import ImageRef

REPO_ROOT = Path(__file__).resolve().parents[1]
FIXTURES = REPO_ROOT / "fixtures"


def make_png(width: int = 4, height: int = 4, rgb: tuple[int, int, int] = (200, 30, 30)) -> bytes:
    """A tiny valid RGB PNG, byte-deterministic for a given size and color."""

    def chunk(tag: bytes, data: bytes) -> bytes:
        return (
            struct.pack(">I", len(data))
            + tag
            + data
            + struct.pack(">I", zlib.crc32(tag + data) & 0xFFFFFFFF)
        )

    header = struct.pack(">IIBBBBB", width, height, 8, 2, 0, 0, 0)
    row = b"\x00" + bytes(rgb) * width
    raw = row * height
    return (
        b"\x89PNG\r\n\x1a\n"
        + chunk(b"IHDR", header)
        + chunk(b"IDAT", zlib.compress(raw, 9))
        + chunk(b"IEND", b"")
    )


@pytest.fixture
def png_bytes() -> bytes:
    return make_png()


@pytest.fixture
def image(png_bytes) -> ImageRef:
    return ImageRef.from_bytes(png_bytes)


class NetworkGuard:
    """Counts (and blocks) any attempt to open a network connection."""

    def __init__(self):
        self.attempts = 0

    def install(self, monkeypatch) -> "NetworkGuard":
        guard = self

        def blocked(*args, **kwargs):
            guard.attempts += 1
            raise AssertionError("network access attempted during an offline test")

        monkeypatch.setattr(socket.socket, "connect", blocked)
        monkeypatch.setattr(socket, "create_connection", blocked)
        return self


@pytest.fixture
def network_guard(monkeypatch) -> NetworkGuard:
    return NetworkGuard().install(monkeypatch)
