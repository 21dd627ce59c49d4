"""Minimal audio clip handling: WAV/MP3 payloads with base64 transport."""

from __future__ import annotations

import base64
import io
import wave
from dataclasses import dataclass

SUPPORTED_FORMATS = ("wav", "mp3")


@dataclass(frozen=True)
class AudioClip:
    data: bytes
    format: str = "wav"

    def __post_init__(self) -> None:
        if self.format not in SUPPORTED_FORMATS:
            raise ValueError(f"unsupported audio format {self.format!r}")

    @property
    def duration_s(self) -> float | None:
        """Clip length in seconds; None when the container is not parseable."""
        if self.format != "wav":
            return None
        try:
            with wave.open(io.BytesIO(self.data)) as wav:
                rate = wav.getframerate()
                return wav.getnframes() / rate if rate else None
        except (wave.Error, EOFError):
            return None

    def to_obj(self) -> dict:
        return {"format": self.format, "data_b64": base64.b64encode(self.data).decode("ascii")}

    @classmethod
    def from_obj(cls, obj: dict) -> "AudioClip":
        return cls(data=base64.b64decode(obj["data_b64"]), format=obj["format"])


def silent_wav(duration_s: float, sample_rate: int = 8000) -> AudioClip:
    """A silent mono 16-bit WAV of the requested duration."""
    frames = max(int(round(duration_s * sample_rate)), 0)
    buffer = io.BytesIO()
    with wave.open(buffer, "wb") as wav:
        wav.setnchannels(1)
        wav.setsampwidth(2)
        wav.setframerate(sample_rate)
        wav.writeframes(b"\x00\x00" * frames)
    return AudioClip(data=buffer.getvalue(), format="wav")
