"""HTTP clients for remote model endpoints.

The chat and embedding clients speak the widely-copied OpenAI wire shape
(``/chat/completions`` and ``/embeddings``); detection and depth use a small
JSON POST shape documented in the README. All clients go through a Transport
so tests can stub, count, or forbid network use.
"""

from __future__ import annotations

import base64
import os
from typing import Optional, Protocol, Sequence

import numpy as np
import requests

from ..errors import BackendError, DimensionDrift
from ..model import ImageRef, Provenance
from ..retrieval import Vector
from .base import (
    BackendId,
    BackendRole,
    BoundingBox,
    ChatMessage,
    require_nonempty_messages,
    require_nonempty_text,
)

DEFAULT_TIMEOUT = 30.0
_RETRIABLE_STATUS = {429, 500, 502, 503, 504}


class Transport(Protocol):
    def post(self, url: str, headers: dict, payload: dict, timeout: float) -> dict: ...


class RequestsTransport:
    def post(self, url: str, headers: dict, payload: dict, timeout: float) -> dict:
        try:
            response = requests.post(url, headers=headers, json=payload, timeout=timeout)
        except requests.RequestException as exc:
            raise BackendError(f"transport failure for {url}: {exc}", retriable=True) from exc
        if response.status_code != 200:
            raise BackendError(
                f"{url} returned HTTP {response.status_code}: {response.text[:200]}",
                retriable=response.status_code in _RETRIABLE_STATUS,
            )
        try:
            return response.json()
        except ValueError as exc:
            raise BackendError(f"{url} returned non-JSON body") from exc


def default_transport() -> Transport:
    return RequestsTransport()


def _auth_headers(api_key_env: Optional[str]) -> dict:
    headers = {"Content-Type": "application/json"}
    if api_key_env:
        key = os.environ.get(api_key_env)
        if not key:
            raise BackendError(f"environment variable {api_key_env} is not set")
        headers["Authorization"] = f"Bearer {key}"
    return headers


def _image_part(image: ImageRef) -> dict:
    encoded = base64.b64encode(image.payload()).decode("ascii")
    return {
        "type": "image_url",
        "image_url": {"url": f"data:image/{image.media_kind.value};base64,{encoded}"},
    }


class HttpChat:
    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key_env: Optional[str] = None,
        transport: Optional[Transport] = None,
        max_images_per_call: int = 4,
        timeout: float = DEFAULT_TIMEOUT,
    ):
        self.backend_id = BackendId(BackendRole.CHAT, "http", model)
        self.provenance = Provenance.MODEL
        self._endpoint = endpoint.rstrip("/")
        self._model = model
        self._api_key_env = api_key_env
        self._transport = transport or default_transport()
        self._max_images = max_images_per_call
        self._timeout = timeout

    def chat(self, messages: Sequence[ChatMessage]) -> str:
        require_nonempty_messages(messages)
        n_images = sum(1 for m in messages if m.image is not None)
        if n_images > self._max_images:
            raise ValueError(f"{n_images} images exceeds the per-call limit {self._max_images}")
        wire_messages = []
        for m in messages:
            if m.image is None:
                wire_messages.append({"role": m.role, "content": m.text})
            else:
                wire_messages.append(
                    {
                        "role": m.role,
                        "content": [{"type": "text", "text": m.text}, _image_part(m.image)],
                    }
                )
        body = self._transport.post(
            f"{self._endpoint}/chat/completions",
            _auth_headers(self._api_key_env),
            {"model": self._model, "messages": wire_messages},
            self._timeout,
        )
        try:
            content = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"malformed chat completion response: {exc}") from exc
        if not isinstance(content, str):
            raise BackendError("chat completion content is not text")
        return content


class HttpEmbed:
    def __init__(
        self,
        endpoint: str,
        model: str,
        dim: int,
        api_key_env: Optional[str] = None,
        transport: Optional[Transport] = None,
        timeout: float = DEFAULT_TIMEOUT,
    ):
        self.backend_id = BackendId(BackendRole.EMBED, "http", model)
        self.dim = dim
        self._endpoint = endpoint.rstrip("/")
        self._model = model
        self._api_key_env = api_key_env
        self._transport = transport or default_transport()
        self._timeout = timeout

    def embed(self, text: str) -> Vector:
        require_nonempty_text(text, "embedding input")
        body = self._transport.post(
            f"{self._endpoint}/embeddings",
            _auth_headers(self._api_key_env),
            {"model": self._model, "input": text},
            self._timeout,
        )
        try:
            components = body["data"][0]["embedding"]
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"malformed embedding response: {exc}") from exc
        if len(components) != self.dim:
            raise DimensionDrift(f"endpoint returned dim {len(components)}, advertised {self.dim}")
        return Vector(tuple(float(c) for c in components))


class HttpDetect:
    """POSTs {image_b64, media_kind, label}; expects {detections: [...]}."""

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key_env: Optional[str] = None,
        transport: Optional[Transport] = None,
        timeout: float = DEFAULT_TIMEOUT,
    ):
        self.backend_id = BackendId(BackendRole.DETECT, "http", model)
        self._endpoint = endpoint
        self._api_key_env = api_key_env
        self._transport = transport or default_transport()
        self._timeout = timeout

    def detect(self, image: ImageRef, label: str) -> tuple[BoundingBox, ...]:
        require_nonempty_text(label, "detection label")
        body = self._transport.post(
            self._endpoint,
            _auth_headers(self._api_key_env),
            {
                "image_b64": base64.b64encode(image.payload()).decode("ascii"),
                "media_kind": image.media_kind.value,
                "label": label,
            },
            self._timeout,
        )
        try:
            return tuple(
                BoundingBox(
                    x_min=r["box"][0],
                    y_min=r["box"][1],
                    x_max=r["box"][2],
                    y_max=r["box"][3],
                    label=r["label"],
                    score=r["score"],
                )
                for r in body["detections"]
            )
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise BackendError(f"malformed detection response: {exc}") from exc


class HttpDepth:
    """POSTs {image_b64, media_kind}; expects {width, height, values}."""

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key_env: Optional[str] = None,
        transport: Optional[Transport] = None,
        timeout: float = DEFAULT_TIMEOUT,
    ):
        self.backend_id = BackendId(BackendRole.DEPTH, "http", model)
        self._endpoint = endpoint
        self._api_key_env = api_key_env
        self._transport = transport or default_transport()
        self._timeout = timeout

    def estimate_depth(self, image: ImageRef) -> np.ndarray:
        body = self._transport.post(
            self._endpoint,
            _auth_headers(self._api_key_env),
            {
                "image_b64": base64.b64encode(image.payload()).decode("ascii"),
                "media_kind": image.media_kind.value,
            },
            self._timeout,
        )
        try:
            values = np.array(body["values"], dtype=np.float64)
            declared = (body["height"], body["width"])
        except (KeyError, TypeError, ValueError) as exc:
            raise BackendError(f"malformed depth response: {exc}") from exc
        if values.ndim != 2 or values.shape != declared:
            raise BackendError(f"depth map shape {values.shape} disagrees with declared {declared}")
        return values
