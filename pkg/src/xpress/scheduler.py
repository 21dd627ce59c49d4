"""Clock-driven playback of story trajectories.

The scheduler runs on an injected clock: the real monotonic clock in
production, a simulated clock in tests (where emits land exactly on
schedule). Batches due in the same 10 ms tick are emitted in trajectory
order, and a shadow face state mirrors what the renderer will show.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Protocol

from .errors import XpressError
from .face import FaceState, apply_program, neutral_face
from .synthesis import StoryTrajectory
from .validator import RendererCommandBatch, compile_program
from .wire import WireMessage

TICK_S = 0.01


class Clock(Protocol):
    def now(self) -> float: ...

    def sleep(self, dt: float) -> None: ...


class RealClock:
    def now(self) -> float:
        return time.monotonic()

    def sleep(self, dt: float) -> None:
        if dt > 0:
            time.sleep(dt)


class SimulatedClock:
    """Deterministic clock: sleeping advances time exactly, instantly."""

    def __init__(self, start: float = 0.0):
        self._now = start

    def now(self) -> float:
        return self._now

    def sleep(self, dt: float) -> None:
        if dt > 0:
            self._now += dt

    def advance_to(self, t: float) -> None:
        if t < self._now:
            raise ValueError("simulated clock cannot rewind")
        self._now = t


class SinkClosedError(XpressError):
    pass


class MessageSink(Protocol):
    def send(self, message: WireMessage) -> None: ...


class SequencedSender:
    """Stamps session id and a strictly increasing sequence number."""

    def __init__(self, session_id: str, send: Callable[[WireMessage], None]):
        self.session_id = session_id
        self._send = send
        self._seq = 0

    @property
    def seq(self) -> int:
        return self._seq

    def emit(self, kind: str, body: dict | None = None) -> WireMessage:
        self._seq += 1
        message = WireMessage(
            session=self.session_id, seq=self._seq, kind=kind, body=body or {}
        )
        self._send(message)
        return message


@dataclass(frozen=True)
class EmitRecord:
    index: int
    scheduled_s: float
    actual_s: float
    batch_id: int


@dataclass
class PlaybackReport:
    emits: list[EmitRecord] = field(default_factory=list)
    aborted: bool = False
    final_state: FaceState = field(default_factory=neutral_face)

    @property
    def max_error_s(self) -> float:
        return max((abs(e.actual_s - e.scheduled_s) for e in self.emits), default=0.0)


def compile_trajectory(
    trajectory: StoryTrajectory, *, first_batch_id: int = 1
) -> list[tuple[float, RendererCommandBatch, FaceState]]:
    """Pre-compile every expression against the evolving shadow state.

    Returns (start_time, batch, state-after-batch) triples; compiling up
    front keeps the emit loop free of validation work.
    """
    compiled = []
    state = neutral_face()
    for i, entry in enumerate(trajectory.expressions):
        batch = compile_program(entry.program, first_batch_id + i, state)
        state = apply_program(state, entry.program)
        compiled.append((entry.start_time_s, batch, state))
    return compiled


def play_story(
    trajectory: StoryTrajectory,
    clock: Clock,
    sink: Callable[[WireMessage], None],
    *,
    session_id: str = "story",
    tick_s: float = TICK_S,
    audio_body: dict | None = None,
) -> PlaybackReport:
    """Play a trajectory: audio starts, batches land on their timestamps.

    The report records scheduled vs actual emit offsets for every batch.
    If the sink closes mid-play the playback aborts and a best-effort
    reset is sent.
    """
    compiled = compile_trajectory(trajectory)
    sender = SequencedSender(session_id, sink)
    report = PlaybackReport()

    def guarded(kind: str, body: dict | None = None) -> None:
        sender.emit(kind, body)

    try:
        guarded("play_audio", audio_body if audio_body is not None else {"audio": trajectory.audio.to_obj()})
        guarded("mouth_speaking", {"on": True})
        start = clock.now()
        state = neutral_face()
        for i, (scheduled, batch, state_after) in enumerate(compiled):
            while True:
                remaining = scheduled - (clock.now() - start)
                if remaining <= 0:
                    break
                clock.sleep(min(tick_s, remaining))
            guarded("apply_batch", {"batch": batch.to_obj()})
            actual = clock.now() - start
            report.emits.append(
                EmitRecord(index=i, scheduled_s=scheduled, actual_s=actual, batch_id=batch.batch_id)
            )
            state = state_after
        duration = trajectory.audio.duration_s
        if duration is not None:
            while True:
                remaining = duration - (clock.now() - start)
                if remaining <= 0:
                    break
                clock.sleep(min(tick_s, remaining))
        guarded("mouth_speaking", {"on": False})
        report.final_state = state
        return report
    except SinkClosedError:
        report.aborted = True
        try:
            sender.emit("reset")
        except SinkClosedError:
            pass
        return report
