"""Conversational session: the listening/responding state machine.

The engine is a discrete-event machine over explicit timestamps, so the
same code runs under a simulated clock (tests, offline traces) and the
live server (which feeds real arrival times and pumps deadlines).

Flow per turn: the robot asks a question (responding), listens while the
user's words stream in as 5-word chunks that may trigger bank reactions,
and on end of speech produces a reply whose expression shows for the
first 3 seconds of robot speech before the face returns to neutral.

Every expression change is gated by hold_policy except the choreographed
return to neutral during a response, which the protocol fixes at
min(3 s, speech length) after the response expression appears.
"""

from __future__ import annotations

import heapq
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable

from .audio import AudioClip
from .context import (
    Emotion,
    ExpressionClock,
    Intensity,
    ReactionDecision,
    decide_reaction,
    respond,
)
from .face import FaceProgram, FaceState, Track, apply_program, neutral_face
from .gateway import LmProvider, TemplateLibrary
from .scheduler import SequencedSender
from .synthesis import ExpressionBank, neutral_reset_program
from .temporal import (
    ConversationChunk,
    FullUtterance,
    SpeechChunker,
    TimedWord,
    fake_speech_services,
)
from .validator import compile_program
from .wire import WireMessage

logger = logging.getLogger(__name__)

RESPONSE_EXPRESSION_S = 3.0


def reset_overlay_program(entry: FaceProgram) -> FaceProgram:
    """A bank entry made playable from any face state.

    Every DoF the entry does not touch is explicitly returned to neutral,
    so the displayed face is exactly the bank's face regardless of what a
    previous reaction left behind; the combined program validates from any
    legal state because its post-state is fully determined.
    """
    durations = [t.duration_ms for t in entry.tracks] or [1000]
    overlay_duration = max(durations)
    assigned = set(entry.assignments())
    tracks: list[Track] = []
    for track in neutral_reset_program(duration_ms=overlay_duration).tracks:
        keep = {p: v for p, v in track.properties.items() if (track.target, p) not in assigned}
        if keep:
            tracks.append(
                Track(
                    target=track.target,
                    properties=keep,
                    duration_ms=track.duration_ms,
                    easing=track.easing,
                )
            )
    return FaceProgram(tuple(tracks) + entry.tracks)


@dataclass(frozen=True)
class SpeechWords:
    """User speech arriving at time t (already split into words)."""

    t: float
    words: tuple[str, ...]


@dataclass(frozen=True)
class EndOfSpeech:
    t: float


@dataclass(frozen=True)
class Advance:
    """Nothing happened; time passed. Flushes due internal deadlines."""

    t: float


SessionEvent = SpeechWords | EndOfSpeech | Advance


@dataclass(frozen=True)
class ExpressionChange:
    t: float
    emotion: Emotion
    intensity: Intensity
    origin: str  # "reaction" | "response" | "neutral_reset"

    @property
    def dyad(self) -> tuple[Emotion, Intensity]:
        return (self.emotion, self.intensity)


@dataclass
class ConversationReport:
    timeline: list[ExpressionChange] = field(default_factory=list)
    messages: list[WireMessage] = field(default_factory=list)
    transcript: list[tuple[str, str]] = field(default_factory=list)
    ended: bool = False

    def expression_sequence(self) -> list[str]:
        """Realized emotions starting from the initial neutral, deduplicated."""
        sequence = [Emotion.NEUTRAL.value]
        for change in self.timeline:
            if change.emotion.value != sequence[-1]:
                sequence.append(change.emotion.value)
        return sequence


class ConversationEngine:
    """One conversational session; owns its clock, shadow state, and queue."""

    def __init__(
        self,
        bank: ExpressionBank,
        lm: LmProvider,
        sink: Callable[[WireMessage], None] | None = None,
        *,
        session_id: str = "conversation",
        templates: TemplateLibrary | None = None,
        questions: list[str] | None = None,
        speech: Callable[[str], tuple[AudioClip, list[TimedWord]]] | None = None,
        words_per_minute: float = 150.0,
        min_hold_s: float = 3.0,
        response_expression_s: float = RESPONSE_EXPRESSION_S,
        retries: int = 3,
    ):
        self.bank = bank
        self.lm = lm
        self.templates = templates or TemplateLibrary()
        self.questions = (
            list(questions) if questions is not None else self.templates.question_script()
        )
        self._speech = speech
        self.words_per_minute = words_per_minute
        self.min_hold_s = min_hold_s
        self.response_expression_s = response_expression_s
        self.retries = retries

        self.messages: list[WireMessage] = []
        self.timeline: list[ExpressionChange] = []
        self.history: list[tuple[str, str]] = []
        self.phase = "idle"
        self.done = False
        self.question_index = 0
        self.clock = ExpressionClock.session_start()
        self.shadow: FaceState = neutral_face()
        self._batch_id = 0
        self._deadlines: list[tuple[float, int, str]] = []
        self._deadline_counter = 0
        self._utterance_chunks: list[ConversationChunk] = []
        self._chunker = SpeechChunker(
            expression_state=lambda: (self.clock.label, self.clock.since_change_s)
        )

        def forward(message: WireMessage) -> None:
            self.messages.append(message)
            if sink is not None:
                sink(message)

        self._sender = SequencedSender(session_id, forward)

    # -- speech synthesis for the robot's own lines --------------------------

    def _synthesize_robot_line(self, text: str) -> tuple[dict, float]:
        """Audio message body plus its duration for one robot utterance."""
        speech = self._speech or (lambda t: fake_speech_services(t, self.words_per_minute))
        audio, _words = speech(text)
        duration = audio.duration_s
        if duration is None:
            duration = max(len(text.split()), 1) * 60.0 / self.words_per_minute
        return {"audio": audio.to_obj()}, float(duration)

    # -- deadline queue -------------------------------------------------------

    def _schedule(self, t: float, action: str) -> None:
        self._deadline_counter += 1
        heapq.heappush(self._deadlines, (t, self._deadline_counter, action))

    def next_deadline(self) -> float | None:
        return self._deadlines[0][0] if self._deadlines else None

    def _flush_deadlines(self, up_to: float) -> None:
        while self._deadlines and self._deadlines[0][0] <= up_to:
            t, _count, action = heapq.heappop(self._deadlines)
            self.clock.advance_to(max(t, self.clock.now))
            if action == "neutral_reset":
                self._do_neutral_reset(t)
            elif action.startswith("speech_end"):
                self._do_speech_end(t, end=action.endswith(":end"))

    # -- expression application ----------------------------------------------

    def _apply_expression(self, t: float, decision: ReactionDecision, origin: str) -> bool:
        if not self.clock.apply(decision):
            return False
        entry = self.bank.lookup(decision.emotion, decision.intensity)
        program = reset_overlay_program(entry)
        self._batch_id += 1
        batch = compile_program(program, self._batch_id, self.shadow)
        self.shadow = apply_program(self.shadow, program)
        self._sender.emit("apply_batch", {"batch": batch.to_obj()})
        self.timeline.append(
            ExpressionChange(t=t, emotion=decision.emotion, intensity=decision.intensity, origin=origin)
        )
        return True

    def _do_neutral_reset(self, t: float) -> None:
        if self.clock.current != (Emotion.NEUTRAL, Intensity.LOW):
            self._apply_expression(
                t, ReactionDecision.change(Emotion.NEUTRAL), origin="neutral_reset"
            )

    def _do_speech_end(self, t: float, *, end: bool) -> None:
        self._sender.emit("mouth_speaking", {"on": False})
        if end:
            self._sender.emit("reset")
            self.shadow = neutral_face()
            self.clock.apply(ReactionDecision.change(Emotion.NEUTRAL))
            self.phase = "idle"
            self.done = True
        else:
            self.phase = "listening"
            self._utterance_chunks = []

    # -- responding choreography ----------------------------------------------

    def _respond_now(self, t: float) -> None:
        self.phase = "responding"
        output = respond(
            self.history,
            self.question_index,
            self.clock,
            self.lm,
            templates=self.templates,
            questions=self.questions,
            retries=self.retries,
            min_hold_s=self.min_hold_s,
        )
        self.history.append(("robot", output.response_text))
        audio_body, duration = self._synthesize_robot_line(output.response_text)

        self._sender.emit("play_audio", audio_body)
        self._sender.emit("mouth_speaking", {"on": True})

        desired = ReactionDecision.change(output.emotion, output.intensity)
        self._apply_expression(t, desired, origin="response")
        if self.clock.current != (Emotion.NEUTRAL, Intensity.LOW):
            reset_delay = min(self.response_expression_s, duration)
            reset_at = t + reset_delay
            # never let rounding make the reset measure earlier than its window
            while reset_at - t < reset_delay:
                reset_at = math.nextafter(reset_at, math.inf)
            self._schedule(reset_at, "neutral_reset")

        kind = "speech_end:end" if output.end_of_conversation else "speech_end:listen"
        self._schedule(t + duration, kind)

    # -- public API -------------------------------------------------------------

    def start(self, t: float = 0.0) -> None:
        """Open the session: the robot asks the first scripted question."""
        self.clock.advance_to(t)
        self._respond_now(t)

    def handle(self, event: SessionEvent) -> None:
        """Feed one timed event; internal deadlines due before it fire first."""
        if self.done:
            return
        self._flush_deadlines(event.t)
        if self.done:
            return
        self.clock.advance_to(max(event.t, self.clock.now))
        if isinstance(event, Advance):
            return
        if isinstance(event, SpeechWords):
            if self.phase != "listening":
                logger.debug("ignoring speech while %s", self.phase)
                return
            for word in event.words:
                for chunk in self._chunker.feed(word):
                    self._react_to_chunk(event.t, chunk)
            return
        if isinstance(event, EndOfSpeech):
            if self.phase != "listening":
                return
            full_text = None
            for item in self._chunker.end_of_speech():
                if isinstance(item, ConversationChunk):
                    self._react_to_chunk(event.t, item)
                elif isinstance(item, FullUtterance):
                    full_text = item.text
            if full_text:
                self.history.append(("user", full_text))
            self._advance_question_after_answer()
            self._respond_now(event.t)
            return
        raise TypeError(f"unknown session event {event!r}")

    def _advance_question_after_answer(self) -> None:
        # approximate script position by answers given; the LM's own
        # end_of_conversation flag stays the primary stop signal, this index
        # is the hint it receives plus the forced-goodbye backstop
        if self.history and self.history[-1][0] == "user":
            answered = sum(1 for speaker, _ in self.history if speaker == "user")
            self.question_index = min(answered - 1, len(self.questions) - 1)

    def _react_to_chunk(self, t: float, chunk: ConversationChunk) -> None:
        decision = decide_reaction(
            chunk,
            self.clock,
            self.lm,
            previous_chunks=self._utterance_chunks,
            templates=self.templates,
            retries=self.retries,
            min_hold_s=self.min_hold_s,
        )
        self._apply_expression(t, decision, origin="reaction")
        self._utterance_chunks.append(chunk)

    def pump(self, t: float) -> None:
        """Advance to time t with no external event (flushes deadlines)."""
        self.handle(Advance(t=t))

    def abort(self, t: float) -> None:
        """Transcription failure path: graceful goodbye with a neutral face."""
        if self.done:
            return
        logger.warning("aborting session at %.2fs", t)
        self.clock.advance_to(max(t, self.clock.now))
        self._do_neutral_reset(self.clock.now)
        goodbye = "I am sorry, I am having trouble hearing you. Let us talk again soon. Goodbye!"
        self.history.append(("robot", goodbye))
        audio_body, duration = self._synthesize_robot_line(goodbye)
        self._sender.emit("play_audio", audio_body)
        self._sender.emit("mouth_speaking", {"on": True})
        self._schedule(self.clock.now + duration, "speech_end:end")
        self._flush_deadlines(self.clock.now + duration)

    def report(self) -> ConversationReport:
        return ConversationReport(
            timeline=list(self.timeline),
            messages=list(self.messages),
            transcript=list(self.history),
            ended=self.done,
        )


def run_conversation(
    engine: ConversationEngine,
    events: Iterable[SessionEvent],
    *,
    start_t: float = 0.0,
) -> ConversationReport:
    """Drive a session from a timed event trace to completion.

    Events must be ordered by time. After the trace is exhausted the
    engine's remaining deadlines are flushed so the final goodbye (or the
    return to listening) still happens. A failing event source triggers
    the graceful-goodbye path rather than a crash.
    """
    engine.start(start_t)
    last_t = start_t
    try:
        for event in events:
            engine.handle(event)
            last_t = max(last_t, event.t)
    except Exception as exc:  # noqa: BLE001 - source failure is a session event
        logger.warning("transcription source failed: %s", exc)
        engine.abort(last_t)
    while not engine.done and engine.next_deadline() is not None:
        engine.pump(engine.next_deadline())
    return engine.report()
