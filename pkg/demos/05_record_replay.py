#!/usr/bin/env python3
"""Cassettes: record a backend conversation once, replay it forever.

Every backend call is digested from its full request (message list and image
bytes included). Replay serves the recorded responses only when the digests
match in order, so a replayed pipeline is bit-deterministic and needs no
network at all.
"""

import tempfile
from pathlib import Path

from captionsmith.backends import Cassette, CassetteChat, CassetteMode, ScriptedChat
from captionsmith.backends.base import BackendRole, ChatMessage, digest_chat
from captionsmith.errors import CassetteMismatch

prompt = (ChatMessage("user", "Name the pictured car."),)
other = (ChatMessage("user", "Name the pictured boat."),)

cassette = Cassette(BackendRole.CHAT, CassetteMode.RECORD)
recorder = CassetteChat(cassette, ScriptedChat(["A Tesla Cybercab."]))
print("recorded answer:", recorder.chat(prompt))

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "chat.jsonl"
    cassette.save(path)
    print("cassette file:")
    print(path.read_text().strip())

    replay = CassetteChat(Cassette.load(path))
    print()
    print("replayed answer:", replay.chat(prompt))

    replay = CassetteChat(Cassette.load(path))
    try:
        replay.chat(other)
    except CassetteMismatch as exc:
        print()
        print("a different request is refused:")
        print(" ", exc)

print()
print("request digests are content-addressed:")
print("  same prompt:", digest_chat(prompt) == digest_chat((ChatMessage("user", "Name the pictured car."),)))
print("  other prompt:", digest_chat(prompt) == digest_chat(other))
