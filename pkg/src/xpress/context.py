"""Context conditioning: face descriptions, reaction and response policies.

Storytelling gets sequentially conditioned free-text face descriptions;
conversation gets the Reactor (per-chunk emotion-intensity choice, or no
change) and the Responder (verbal reply plus its expression), both gated
by the hold rule: a displayed expression persists at least 3 seconds.

The hold rule is enforced in code, not merely requested of the LM. The
prompts still tell the LM the current expression and its age so its
choices stay coherent, but the guarantee comes from hold_policy.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any, Sequence

from .errors import XpressError
from .gateway import (
    LmFailure,
    LmProvider,
    TemplateLibrary,
    complete_structured,
    truncate_history,
)
from .temporal import ConversationChunk, Palette, StorySegment

logger = logging.getLogger(__name__)

MIN_HOLD_S = 3.0


class Emotion(str, Enum):
    HAPPY = "happy"
    SAD = "sad"
    SURPRISE = "surprise"
    STRESS = "stress"
    CALM = "calm"
    CONFUSION = "confusion"
    TIRED = "tired"
    INTEREST = "interest"
    CONCERN = "concern"
    FEAR = "fear"
    DISGUST = "disgust"
    ANGRY = "angry"
    NEUTRAL = "neutral"


class Intensity(str, Enum):
    LOW = "low"
    HIGH = "high"


NON_NEUTRAL_EMOTIONS = tuple(e for e in Emotion if e is not Emotion.NEUTRAL)

_NO_CHANGE_TOKENS = {"no-change", "no_change", "nochange", "no change"}


class BadTimestampError(XpressError):
    pass


def dyad_label(emotion: Emotion, intensity: Intensity) -> str:
    """Bank-facing label. Neutral is single-intensity so it stays bare."""
    if emotion is Emotion.NEUTRAL:
        return "neutral"
    return f"{emotion.value}-{intensity.value}"


@dataclass(frozen=True)
class ReactionDecision:
    """Either a switch to (emotion, intensity) or an explicit no-change."""

    emotion: Emotion | None = None
    intensity: Intensity | None = None

    def __post_init__(self) -> None:
        if self.emotion is Emotion.NEUTRAL:
            object.__setattr__(self, "intensity", Intensity.LOW)
        if self.emotion is not None and self.intensity is None:
            raise ValueError("a change needs an intensity")
        if self.emotion is None and self.intensity is not None:
            raise ValueError("no-change carries no intensity")

    @classmethod
    def no_change(cls) -> "ReactionDecision":
        return cls()

    @classmethod
    def change(cls, emotion: Emotion, intensity: Intensity = Intensity.LOW) -> "ReactionDecision":
        return cls(emotion=emotion, intensity=intensity)

    @property
    def is_change(self) -> bool:
        return self.emotion is not None


def parse_emotion_token(token: str) -> Emotion | None:
    """Map an LM emotion token to the closed set; None means no-change.

    Accepts both the "no-change" list item and a literal "neutral" (which
    selects the neutral expression). Raises ValueError outside the set.
    """
    cleaned = token.strip().lower()
    if cleaned in _NO_CHANGE_TOKENS:
        return None
    return Emotion(cleaned)


def parse_reaction_payload(payload: dict[str, Any]) -> ReactionDecision:
    emotion = parse_emotion_token(str(payload["emotion"]))
    if emotion is None:
        return ReactionDecision.no_change()
    if emotion is Emotion.NEUTRAL:
        return ReactionDecision.change(Emotion.NEUTRAL)
    intensity = Intensity(str(payload.get("intensity", "")).strip().lower())
    return ReactionDecision.change(emotion, intensity)


class ExpressionClock:
    """Session-local record of the displayed expression and its age.

    Time is tracked as an absolute session timestamp with the last change
    recorded at its timestamp, so `since_change_s` is a plain difference
    and the hold gate can never disagree with an external gap measurement
    over a rounding artifact. `has_changed` distinguishes the session's
    initial expression, which the hold rule exempts.
    """

    def __init__(
        self,
        emotion: Emotion = Emotion.NEUTRAL,
        intensity: Intensity = Intensity.LOW,
        since_change_s: float = 0.0,
        *,
        has_changed: bool = True,
    ):
        self.emotion = emotion
        self.intensity = intensity
        self._now = float(since_change_s)
        self._changed_at = 0.0
        self.has_changed = has_changed

    @classmethod
    def session_start(cls) -> "ExpressionClock":
        return cls(Emotion.NEUTRAL, Intensity.LOW, 0.0, has_changed=False)

    @property
    def current(self) -> tuple[Emotion, Intensity]:
        return (self.emotion, self.intensity)

    @property
    def label(self) -> str:
        return dyad_label(self.emotion, self.intensity)

    @property
    def now(self) -> float:
        return self._now

    @property
    def since_change_s(self) -> float:
        return self._now - self._changed_at

    def advance(self, dt: float) -> None:
        if dt < 0:
            raise ValueError(f"clock cannot run backwards (dt={dt})")
        self._now += dt

    def advance_to(self, t: float) -> None:
        if t < self._now:
            raise ValueError(f"clock cannot run backwards (to {t} from {self._now})")
        self._now = t

    def apply(self, decision: ReactionDecision) -> bool:
        """Apply a (post-hold) decision; True when the expression changed."""
        if not decision.is_change:
            return False
        dyad = (decision.emotion, decision.intensity)
        if dyad == self.current:
            return False
        self.emotion, self.intensity = dyad
        self._changed_at = self._now
        self.has_changed = True
        return True


def hold_policy(
    clock: ExpressionClock,
    proposed: ReactionDecision,
    min_hold_s: float = MIN_HOLD_S,
) -> ReactionDecision:
    """Gate a proposed change so every expression lasts at least `min_hold_s`.

    Pure function: no-change passes through, a proposal equal to the
    current expression collapses to no-change, and a differing proposal is
    suppressed while the current expression is younger than the minimum.
    The session's initial expression is exempt (nothing was ever changed).
    """
    if not proposed.is_change:
        return ReactionDecision.no_change()
    if (proposed.emotion, proposed.intensity) == clock.current:
        return ReactionDecision.no_change()
    if clock.has_changed and clock.since_change_s < min_hold_s:
        return ReactionDecision.no_change()
    return proposed


@dataclass(frozen=True)
class FaceDescription:
    """Free-text per-element face description.

    `start_time_s` is set for storytelling segments (and must fall inside
    the segment); bank entries have no timeline so it stays None.
    """

    eyes: str
    upper_eyelids: str
    lower_eyelids: str
    mouth: str
    misc: str = ""
    start_time_s: float | None = None

    def to_payload_obj(self) -> dict[str, Any]:
        obj: dict[str, Any] = {
            "eyes": self.eyes,
            "upperEyelids": self.upper_eyelids,
            "lowerEyelids": self.lower_eyelids,
            "mouth": self.mouth,
            "misc": self.misc,
        }
        if self.start_time_s is not None:
            obj = {"start_time": self.start_time_s, **obj}
        return obj

    def as_prompt_text(self) -> str:
        return (
            f"eyes: {self.eyes}; upper eyelids: {self.upper_eyelids}; "
            f"lower eyelids: {self.lower_eyelids}; mouth: {self.mouth}; "
            f"misc: {self.misc}"
        )


def _parse_start_time(raw: Any) -> float:
    if isinstance(raw, bool):
        raise BadTimestampError(f"start_time {raw!r} is not a number")
    if isinstance(raw, (int, float)):
        return float(raw)
    try:
        return float(str(raw).strip())
    except ValueError:
        raise BadTimestampError(f"start_time {raw!r} is not a number") from None


def _render_description_history(
    history: Sequence[tuple[StorySegment, FaceDescription]],
) -> str:
    if not history:
        return "(none yet - this is the first section)"
    lines = []
    for segment, description in history:
        lines.append(f"INPUT: {segment.text}")
        lines.append(f"OUTPUT: {json.dumps(description.to_payload_obj())}")
    return "\n".join(lines)


def describe_expression(
    segment: StorySegment,
    history: Sequence[tuple[StorySegment, FaceDescription]],
    palette: Palette,
    lm: LmProvider,
    *,
    templates: TemplateLibrary | None = None,
    retries: int = 3,
    history_limit: int | None = None,
) -> FaceDescription:
    """Design the face for one story segment, conditioned on the prior ones.

    By default the prompt carries every earlier (segment, description) pair
    in order; deployments with tight context windows may set history_limit
    to keep the first pair plus the most recent N. A start_time outside the
    segment is clamped with a warning rather than rejected, keeping
    generation resilient.
    """
    templates = templates or TemplateLibrary()
    template = templates.get("face_description")
    prompt_history = (
        truncate_history(list(history), keep_first=1, keep_last=history_limit)
        if history_limit is not None
        else list(history)
    )
    bindings = {
        "palette": str(palette),
        "history": _render_description_history(prompt_history),
        "segment": " ".join(f"{w.word} <{w.end_time_s:.2f}>" for w in segment.words),
    }

    last_error: BadTimestampError | None = None
    for _attempt in range(max(retries, 1)):
        payload = complete_structured(template, bindings, lm)
        try:
            start_time = _parse_start_time(payload["start_time"])
        except BadTimestampError as exc:
            last_error = exc
            continue
        clamped = min(max(start_time, segment.start_s), segment.end_s)
        if clamped != start_time:
            logger.warning(
                "start_time %.2f outside segment %d [%.2f, %.2f]; clamped to %.2f",
                start_time,
                segment.index,
                segment.start_s,
                segment.end_s,
                clamped,
            )
        return FaceDescription(
            eyes=str(payload["eyes"]),
            upper_eyelids=str(payload["upperEyelids"]),
            lower_eyelids=str(payload["lowerEyelids"]),
            mouth=str(payload["mouth"]),
            misc=str(payload.get("misc", "")),
            start_time_s=clamped,
        )
    assert last_error is not None
    raise last_error


def decide_reaction(
    chunk: ConversationChunk,
    clock: ExpressionClock,
    lm: LmProvider,
    *,
    previous_chunks: Sequence[ConversationChunk] | str = (),
    templates: TemplateLibrary | None = None,
    retries: int = 3,
    min_hold_s: float = MIN_HOLD_S,
) -> ReactionDecision:
    """Reactor: pick an emotion-intensity reaction to a chunk, or no change.

    Fail-quiet: any provider failure or persistently unusable output
    collapses to no-change so the face simply holds. Whatever the LM says,
    the result passes through hold_policy before being returned.
    """
    templates = templates or TemplateLibrary()
    template = templates.get("reactor")
    if isinstance(previous_chunks, str):
        previous_text = previous_chunks
    else:
        previous_text = " ".join(c.text for c in previous_chunks)
    bindings = {
        "previous_chunks": previous_text,
        "current_chunk": chunk.text,
        "current_expression": clock.emotion.value,
        "seconds_since_change": f"{clock.since_change_s:g}",
    }

    proposed = ReactionDecision.no_change()
    for _attempt in range(max(retries, 1)):
        try:
            payload = complete_structured(template, bindings, lm, retries=1)
        except LmFailure as exc:
            logger.warning("reactor failed, holding expression: %s", exc)
            return ReactionDecision.no_change()
        try:
            proposed = parse_reaction_payload(payload)
            break
        except ValueError as exc:
            logger.warning("reactor emitted an invalid decision (%s); retrying", exc)
    return hold_policy(clock, proposed, min_hold_s)


@dataclass(frozen=True)
class ResponderOutput:
    response_text: str
    emotion: Emotion
    intensity: Intensity
    end_of_conversation: bool

    def __post_init__(self) -> None:
        if not self.response_text and not self.end_of_conversation:
            raise ValueError("an ongoing conversation needs a non-empty reply")


FALLBACK_REPLY = "Thank you for sharing that with me."


def _parse_bool(raw: Any) -> bool:
    if isinstance(raw, bool):
        return raw
    return str(raw).strip().lower() == "true"


def _render_conversation(history: Sequence[tuple[str, str]]) -> str:
    if not history:
        return "(no turns yet)"
    return "\n".join(f"{speaker.capitalize()}: {text}" for speaker, text in history)


def respond(
    history: Sequence[tuple[str, str]],
    question_index: int,
    clock: ExpressionClock,
    lm: LmProvider,
    *,
    templates: TemplateLibrary | None = None,
    questions: Sequence[str] | None = None,
    retries: int = 3,
    min_hold_s: float = MIN_HOLD_S,
) -> ResponderOutput:
    """Responder: verbal reply plus the expression accompanying it.

    `question_index` is the 0-based script question currently in play.
    With an empty history the scripted first question is returned verbatim
    without consulting the LM. After the final question's wrap-up the
    output is forced to end the conversation. Provider failure falls back
    to a canned neutral reply.
    """
    templates = templates or TemplateLibrary()
    questions = list(questions) if questions is not None else templates.question_script()
    if not 0 <= question_index < len(questions):
        raise ValueError(
            f"question_index {question_index} outside the {len(questions)}-question script"
        )
    if not history:
        return ResponderOutput(
            response_text=questions[0],
            emotion=clock.emotion,
            intensity=clock.intensity,
            end_of_conversation=False,
        )

    template = templates.get("responder")
    numbered = " ".join(f"{i + 1}. {q}" for i, q in enumerate(questions))
    bindings = {
        "questions": numbered,
        "history": _render_conversation(history),
        "question_number": question_index + 1,
        "question_count": len(questions),
        "current_expression": clock.emotion.value,
        "seconds_since_change": f"{clock.since_change_s:g}",
    }

    is_last = question_index >= len(questions) - 1
    for _attempt in range(max(retries, 1)):
        try:
            payload = complete_structured(template, bindings, lm, retries=1)
        except LmFailure as exc:
            logger.warning("responder failed, using canned reply: %s", exc)
            break
        try:
            emotion = parse_emotion_token(str(payload["emotion"]))
            if emotion is None:
                decision = ReactionDecision.no_change()
            else:
                intensity = (
                    Intensity.LOW
                    if emotion is Emotion.NEUTRAL
                    else Intensity(str(payload["intensity"]).strip().lower())
                )
                decision = ReactionDecision.change(emotion, intensity)
            response_text = str(payload["response"]).strip()
            end = _parse_bool(payload["end_of_conversation"]) or is_last
            if not response_text and not end:
                raise ValueError("empty response")
        except (ValueError, KeyError) as exc:
            logger.warning("responder emitted an invalid payload (%s); retrying", exc)
            continue
        held = hold_policy(clock, decision, min_hold_s)
        if held.is_change:
            emotion_out, intensity_out = held.emotion, held.intensity
        else:
            emotion_out, intensity_out = clock.current
        return ResponderOutput(
            response_text=response_text,
            emotion=emotion_out,
            intensity=intensity_out,
            end_of_conversation=end,
        )
    return ResponderOutput(
        response_text=FALLBACK_REPLY,
        emotion=Emotion.NEUTRAL,
        intensity=Intensity.LOW,
        end_of_conversation=is_last,
    )
