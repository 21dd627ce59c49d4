"""Expression synthesis: descriptions in, validated face programs out.

Every program leaving this module has passed the validator. The LM is
re-prompted with the validator's diagnostics when it misses, and a
neutral-reset program stands in once the retry budget is spent, so the
pipeline is total: storytelling synthesis, bank pre-generation, and
trajectory assembly can never emit an unexecutable program.
"""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

from .audio import AudioClip
from .context import (
    Emotion,
    FaceDescription,
    Intensity,
    NON_NEUTRAL_EMOTIONS,
)
from .errors import XpressError
from .face import (
    FaceElement,
    FaceProgram,
    FaceState,
    Track,
    apply_program,
    neutral_face,
    program_to_json,
    program_to_obj,
)
from .gateway import LmFailure, LmProvider, TemplateLibrary, complete_structured
from .validator import NotValidatedError, normalize, parse_program, validate

logger = logging.getLogger(__name__)


class LengthMismatchError(XpressError):
    pass


class UnorderedError(XpressError):
    pass


class AudioTooShortError(XpressError):
    pass


class BankIncompleteError(XpressError):
    pass


def neutral_reset_program(duration_ms: int = 1000) -> FaceProgram:
    """A program returning every element to the neutral face."""
    neutral = neutral_face()
    tracks = [
        Track(
            target=FaceElement.FACE_BACKGROUND,
            properties={"background_color": neutral.background_color},
            duration_ms=duration_ms,
        )
    ]
    for lid in (
        FaceElement.UPPER_LEFT_EYELID,
        FaceElement.UPPER_RIGHT_EYELID,
        FaceElement.LOWER_LEFT_EYELID,
        FaceElement.LOWER_RIGHT_EYELID,
    ):
        tracks.append(
            Track(
                target=lid,
                properties={
                    "color": neutral.background_color,
                    "translate_y": 0.0,
                    "rotate": 0.0,
                },
                duration_ms=duration_ms,
            )
        )
    for eye_element, eye in (
        (FaceElement.LEFT_EYE, neutral.left_eye),
        (FaceElement.RIGHT_EYE, neutral.right_eye),
    ):
        tracks.append(
            Track(
                target=eye_element,
                properties={
                    "color": eye.color,
                    "translate_x": 0.0,
                    "translate_y": 0.0,
                    "scale_x": 1.0,
                    "scale_y": 1.0,
                    "border_radius": eye.border_radius,
                },
                duration_ms=duration_ms,
            )
        )
    mouth = neutral.mouth
    tracks.append(
        Track(
            target=FaceElement.MOUTH,
            properties={
                "color": mouth.color,
                "translate_x": 0.0,
                "translate_y": 0.0,
                "rotate": 0.0,
                "width": mouth.width,
                "height": mouth.height,
                "border_radius": mouth.border_radius,
            },
            duration_ms=duration_ms,
        )
    )
    return FaceProgram(tuple(tracks))


def synthesize_program(
    description: FaceDescription,
    previous: FaceProgram | None,
    lm: LmProvider,
    *,
    current: FaceState | None = None,
    templates: TemplateLibrary | None = None,
    retries: int = 3,
) -> FaceProgram:
    """Turn a face description into a validated program.

    Attempts are checked with parse -> normalize -> validate; a failing
    attempt is re-prompted with the diagnostics appended. When every
    attempt fails (or the provider does), the neutral-reset program is
    returned so the caller always gets something executable.
    """
    templates = templates or TemplateLibrary()
    template = templates.get("program_synthesis")
    current = current or neutral_face()
    previous_text = (
        program_to_json(previous)
        if previous is not None
        else "none - this is the first expression and the face is in its neutral state"
    )

    diagnostics = ""
    for attempt in range(max(retries, 1)):
        bindings = {
            "description": description.as_prompt_text(),
            "previous_program": previous_text,
            "diagnostics": diagnostics,
        }
        try:
            payload = complete_structured(template, bindings, lm, retries=1)
        except LmFailure as exc:
            logger.warning("synthesis attempt %d: provider failed: %s", attempt + 1, exc)
            break
        try:
            program = normalize(parse_program(payload), current)
        except XpressError as exc:
            diagnostics = (
                "Your previous output was rejected by the program parser: "
                f"{exc}. Produce a corrected program."
            )
            logger.info("synthesis attempt %d rejected at parse: %s", attempt + 1, exc)
            continue
        report = validate(program, current)
        if report.ok:
            return program
        issues = "; ".join(d.message for d in report.errors)
        diagnostics = (
            "Your previous output violated these rules: "
            f"{issues}. Produce a corrected program."
        )
        logger.info("synthesis attempt %d rejected by validator: %s", attempt + 1, issues)

    logger.warning("synthesis fell back to the neutral reset program")
    return neutral_reset_program()


@dataclass(frozen=True)
class ExpressionBank:
    """Pre-generated (emotion, intensity) -> program map plus the fixed neutral.

    Exactly 24 generated entries (12 non-neutral emotions x 2 intensities)
    and one neutral reset; every program validates against the neutral
    face, which is the context a bank entry is played from after a reset.
    """

    bank_id: str
    entries: Mapping[tuple[Emotion, Intensity], FaceProgram]
    neutral: FaceProgram = field(default_factory=neutral_reset_program)

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", dict(self.entries))
        expected = {(e, i) for e in NON_NEUTRAL_EMOTIONS for i in Intensity}
        if set(self.entries) != expected:
            missing = sorted(f"{e.value}/{i.value}" for e, i in expected - set(self.entries))
            extra = sorted(f"{e}/{i}" for e, i in set(self.entries) - expected)
            raise BankIncompleteError(f"missing={missing} extra={extra}")
        context = neutral_face()
        for (emotion, intensity), program in self.entries.items():
            report = validate(program, context)
            if not report.ok:
                raise NotValidatedError(report)
        if not validate(self.neutral, context).ok:
            raise NotValidatedError(validate(self.neutral, context))

    def lookup(self, emotion: Emotion, intensity: Intensity) -> FaceProgram:
        if emotion is Emotion.NEUTRAL:
            return self.neutral
        return self.entries[(emotion, intensity)]

    def to_obj(self) -> dict[str, Any]:
        return {
            "bank_id": self.bank_id,
            "entries": {
                f"{emotion.value}/{intensity.value}": program_to_obj(program)
                for (emotion, intensity), program in sorted(
                    self.entries.items(), key=lambda kv: (kv[0][0].value, kv[0][1].value)
                )
            },
            "neutral": program_to_obj(self.neutral),
        }

    @classmethod
    def from_obj(cls, obj: Mapping[str, Any]) -> "ExpressionBank":
        entries: dict[tuple[Emotion, Intensity], FaceProgram] = {}
        for key, program_obj in obj["entries"].items():
            emotion_name, _, intensity_name = key.partition("/")
            entries[(Emotion(emotion_name), Intensity(intensity_name))] = parse_program(
                program_obj
            )
        return cls(
            bank_id=obj["bank_id"],
            entries=entries,
            neutral=parse_program(obj["neutral"]),
        )


_FALLBACK_DESCRIPTION_HINTS = {
    "high_intensity": "a vivid, exaggerated",
    "low_intensity": "a subtle, gentle",
}


def _fallback_bank_description(emotion: Emotion, variant: str) -> FaceDescription:
    tone = _FALLBACK_DESCRIPTION_HINTS[variant]
    return FaceDescription(
        eyes=f"shape the eyes for {tone} {emotion.value} look",
        upper_eyelids="position to support the emotion",
        lower_eyelids="position to support the emotion",
        mouth=f"shape the mouth for {tone} {emotion.value} look",
        misc="keep the overall face coherent",
    )


def _description_from_payload(payload: Mapping[str, Any]) -> FaceDescription:
    return FaceDescription(
        eyes=str(payload["eyes"]),
        upper_eyelids=str(payload["upperEyelids"]),
        lower_eyelids=str(payload["lowerEyelids"]),
        mouth=str(payload["mouth"]),
        misc=str(payload.get("misc", "")),
    )


def build_expression_bank(
    lm: LmProvider,
    seed_note: str = "",
    *,
    templates: TemplateLibrary | None = None,
    retries: int = 3,
    max_workers: int = 4,
) -> ExpressionBank:
    """Pre-generate the full expression bank.

    Each of the 12 non-neutral emotions is described at high and low
    intensity and synthesized into validated programs; emotions are
    independent so they may run concurrently. The neutral entry is the
    built-in reset. Totality of synthesize_program makes an incomplete
    bank unreachable.
    """
    templates = templates or TemplateLibrary()
    template = templates.get("bank_expression")
    note = f"Additional note: {seed_note}" if seed_note else ""

    def build_one(emotion: Emotion) -> list[tuple[tuple[Emotion, Intensity], FaceProgram]]:
        try:
            payload = complete_structured(
                template, {"emotion": emotion.value, "seed_note": note}, lm, retries=retries
            )
            descriptions = {
                "high_intensity": _description_from_payload(payload["high_intensity"]),
                "low_intensity": _description_from_payload(payload["low_intensity"]),
            }
        except (LmFailure, KeyError, TypeError) as exc:
            logger.warning("bank descriptions for %s failed (%s); using fallback", emotion.value, exc)
            descriptions = {
                variant: _fallback_bank_description(emotion, variant)
                for variant in ("high_intensity", "low_intensity")
            }
        built = []
        for variant, intensity in (("high_intensity", Intensity.HIGH), ("low_intensity", Intensity.LOW)):
            program = synthesize_program(
                descriptions[variant], None, lm, templates=templates, retries=retries
            )
            built.append(((emotion, intensity), program))
        return built

    entries: dict[tuple[Emotion, Intensity], FaceProgram] = {}
    if max_workers <= 1:
        results = [build_one(e) for e in NON_NEUTRAL_EMOTIONS]
    else:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(build_one, NON_NEUTRAL_EMOTIONS))
    for pairs in results:
        entries.update(pairs)

    assert len(entries) == 24, "bank totality broken despite synthesis fallback"
    digest_source = json.dumps(
        {f"{e.value}/{i.value}": program_to_obj(p) for (e, i), p in sorted(
            entries.items(), key=lambda kv: (kv[0][0].value, kv[0][1].value)
        )},
        sort_keys=True,
    )
    bank_id = "bank-" + hashlib.sha256((seed_note + digest_source).encode()).hexdigest()[:12]
    return ExpressionBank(bank_id=bank_id, entries=entries)


@dataclass(frozen=True)
class TimedProgram:
    start_time_s: float
    program: FaceProgram


@dataclass(frozen=True)
class StoryTrajectory:
    """A story's deliverable: audio plus its timed, validated expressions."""

    story_title: str
    audio: AudioClip
    expressions: tuple[TimedProgram, ...] = ()

    def to_obj(self) -> dict[str, Any]:
        return {
            "story_title": self.story_title,
            "audio": self.audio.to_obj(),
            "expressions": [
                {"start_time_s": e.start_time_s, "program": program_to_obj(e.program)}
                for e in self.expressions
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_obj(), indent=2)

    @classmethod
    def from_obj(cls, obj: Mapping[str, Any]) -> "StoryTrajectory":
        expressions = tuple(
            TimedProgram(
                start_time_s=float(e["start_time_s"]), program=parse_program(e["program"])
            )
            for e in obj["expressions"]
        )
        trajectory = cls(
            story_title=obj["story_title"],
            audio=AudioClip.from_obj(obj["audio"]),
            expressions=expressions,
        )
        trajectory.check()
        return trajectory

    @classmethod
    def from_json(cls, text: str) -> "StoryTrajectory":
        return cls.from_obj(json.loads(text))

    def check(self) -> None:
        """Re-establish the trajectory invariants (used when loading files)."""
        previous = -1.0
        state = neutral_face()
        for entry in self.expressions:
            if entry.start_time_s < 0:
                raise UnorderedError(f"negative start time {entry.start_time_s}")
            if entry.start_time_s <= previous:
                raise UnorderedError(
                    f"start times not strictly increasing at {entry.start_time_s}"
                )
            previous = entry.start_time_s
            report = validate(entry.program, state)
            if not report.ok:
                raise NotValidatedError(report)
            state = apply_program(state, entry.program)
        duration = self.audio.duration_s
        if self.expressions and duration is not None and duration < previous:
            raise AudioTooShortError(
                f"audio lasts {duration:.2f}s but the last expression starts at {previous:.2f}s"
            )


def assemble_trajectory(
    descriptions: Sequence[FaceDescription],
    programs: Sequence[FaceProgram],
    audio: AudioClip,
    *,
    story_title: str = "",
) -> StoryTrajectory:
    """Pair description start times with programs into a playable trajectory.

    Start times must arrive non-decreasing; exact ties are nudged forward
    by 10 ms (with a warning) to keep the schedule strictly monotonic. An
    empty pair of lists is a legal silent trajectory.
    """
    if len(descriptions) != len(programs):
        raise LengthMismatchError(
            f"{len(descriptions)} descriptions vs {len(programs)} programs"
        )
    entries: list[TimedProgram] = []
    previous_input = None
    previous_final = None
    for description, program in zip(descriptions, programs):
        start = description.start_time_s
        if start is None or start < 0:
            raise UnorderedError(f"description has no usable start time: {start!r}")
        if previous_input is not None and start < previous_input:
            raise UnorderedError(
                f"descriptions not ordered by start time at {start:.2f}s"
            )
        previous_input = start
        final = start
        if previous_final is not None and final <= previous_final:
            final = round(previous_final + 0.01, 6)
            logger.warning(
                "start time %.2fs collides with the previous expression; nudged to %.3fs",
                start,
                final,
            )
        previous_final = final
        entries.append(TimedProgram(start_time_s=final, program=program))
    trajectory = StoryTrajectory(
        story_title=story_title, audio=audio, expressions=tuple(entries)
    )
    trajectory.check()
    return trajectory


_BANNED_STORY_CHARS = str.maketrans({"\n": " ", "\r": " ", '"': "", "'": "", "\\": ""})


def generate_story(
    genre: str,
    lm: LmProvider,
    *,
    templates: TemplateLibrary | None = None,
    retries: int = 3,
) -> dict[str, str]:
    """Generate an oral story for a genre; returns story_title and story_content.

    The template bans characters that would break spoken delivery or JSON
    transport; anything that slips through is stripped with a warning.
    """
    if not genre or not genre.strip():
        raise ValueError("genre must be non-empty")
    templates = templates or TemplateLibrary()
    payload = complete_structured(
        templates.get("story_generation"), {"genre": genre.strip()}, lm, retries=retries
    )
    title = str(payload["storyTitle"])
    content = str(payload["storyContent"])
    sanitized = content.translate(_BANNED_STORY_CHARS)
    if sanitized != content:
        logger.warning("story content contained banned characters; sanitized")
    sanitized_title = title.translate(_BANNED_STORY_CHARS)
    return {"story_title": sanitized_title.strip(), "story_content": " ".join(sanitized.split())}
