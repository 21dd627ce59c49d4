"""Wire protocol between the runtime server and a renderer.

Messages are JSON objects carrying a schema version, session id, and a
per-session strictly increasing sequence number. Over a WebSocket each
frame is one message; over a raw byte stream the codec length-delimits
them as b"<decimal length>\\n<json bytes>".
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Mapping

from .errors import XpressError
from .validator import RendererCommandBatch, batch_from_obj

WIRE_VERSION = 1

KINDS = frozenset(
    {"apply_batch", "mouth_speaking", "play_audio", "reset", "heartbeat", "client_event"}
)


class WireFormatError(XpressError):
    pass


@dataclass(frozen=True)
class WireMessage:
    session: str
    seq: int
    kind: str
    body: Mapping[str, Any] = field(default_factory=dict)
    v: int = WIRE_VERSION

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise WireFormatError(f"unknown message kind {self.kind!r}")
        object.__setattr__(self, "body", dict(self.body))

    def to_obj(self) -> dict[str, Any]:
        return {"v": self.v, "session": self.session, "seq": self.seq, "kind": self.kind, **self.body}

    def to_json(self) -> str:
        return json.dumps(self.to_obj())

    @classmethod
    def from_obj(cls, obj: Mapping[str, Any]) -> "WireMessage":
        try:
            v = obj["v"]
            session = obj["session"]
            seq = obj["seq"]
            kind = obj["kind"]
        except KeyError as exc:
            raise WireFormatError(f"message missing field {exc.args[0]!r}") from None
        if v != WIRE_VERSION:
            raise WireFormatError(f"unsupported wire version {v!r}")
        body = {k: val for k, val in obj.items() if k not in ("v", "session", "seq", "kind")}
        return cls(session=session, seq=seq, kind=kind, body=body, v=v)

    @classmethod
    def from_json(cls, text: str) -> "WireMessage":
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise WireFormatError(f"invalid JSON frame: {exc.msg}") from exc
        if not isinstance(obj, dict):
            raise WireFormatError("frame must be a JSON object")
        return cls.from_obj(obj)

    def batch(self) -> RendererCommandBatch:
        if self.kind != "apply_batch":
            raise WireFormatError(f"{self.kind} message carries no batch")
        return batch_from_obj(self.body["batch"])


def encode_frame(message: WireMessage) -> bytes:
    payload = message.to_json().encode("utf-8")
    return f"{len(payload)}\n".encode("ascii") + payload


class FrameDecoder:
    """Incremental decoder for length-delimited frames on a byte stream."""

    def __init__(self) -> None:
        self._buffer = b""

    def feed(self, data: bytes) -> list[WireMessage]:
        self._buffer += data
        messages = []
        while True:
            newline = self._buffer.find(b"\n")
            if newline < 0:
                break
            header = self._buffer[:newline]
            try:
                length = int(header)
            except ValueError:
                raise WireFormatError(f"bad frame header {header!r}") from None
            if len(self._buffer) < newline + 1 + length:
                break
            payload = self._buffer[newline + 1 : newline + 1 + length]
            self._buffer = self._buffer[newline + 1 + length :]
            messages.append(WireMessage.from_json(payload.decode("utf-8")))
        return messages
