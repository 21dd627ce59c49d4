"""End-to-end storytelling generation: genre -> validated trajectory.

Wires the three phases together: story text, speech timing, segmentation
(with the uniform fallback when the LM cannot produce a legal split),
sequentially conditioned descriptions, program synthesis, and assembly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

from .audio import AudioClip
from .context import FaceDescription, describe_expression
from .face import FaceState, apply_program, neutral_face
from .gateway import LmProvider, TemplateLibrary
from .synthesis import StoryTrajectory, assemble_trajectory, generate_story, synthesize_program
from .temporal import (
    Palette,
    SegmentInvariantError,
    StorySegment,
    TimedWord,
    align_transcript,
    fake_speech_services,
    segment_story,
    uniform_segmentation,
)

logger = logging.getLogger(__name__)

SpeechService = Callable[[str], tuple[AudioClip, list[TimedWord]]]

# used when segmentation falls back and no LM palette exists
FALLBACK_PALETTE = Palette(
    colors=("#4682B4", "#FFD700", "#8B0000", "#228B22"),
    explanation="steel blue for calm, gold for warmth, dark red for tension, "
    "forest green for growth",
)


@dataclass
class StorytellingPipeline:
    lm: LmProvider
    templates: TemplateLibrary = field(default_factory=TemplateLibrary)
    speech: SpeechService | None = None
    words_per_minute: float = 150.0
    retries: int = 3
    fallback_segment_s: float = 10.0

    def _speech(self, text: str) -> tuple[AudioClip, list[TimedWord]]:
        if self.speech is not None:
            return self.speech(text)
        return fake_speech_services(text, self.words_per_minute)

    def trajectory_from_story(self, story_title: str, story_content: str) -> StoryTrajectory:
        audio, words = self._speech(story_content)
        transcript = align_transcript(words)

        try:
            segments, palette = segment_story(
                transcript, self.lm, templates=self.templates, retries=self.retries
            )
        except SegmentInvariantError as exc:
            logger.warning(
                "segmentation failed (%s); falling back to uniform %.0fs segments",
                exc,
                self.fallback_segment_s,
            )
            segments = uniform_segmentation(transcript, target_s=self.fallback_segment_s)
            palette = FALLBACK_PALETTE

        descriptions: list[FaceDescription] = []
        programs = []
        history: list[tuple[StorySegment, FaceDescription]] = []
        state: FaceState = neutral_face()
        previous = None
        for segment in segments:
            description = describe_expression(
                segment, history, palette, self.lm, templates=self.templates, retries=self.retries
            )
            program = synthesize_program(
                description,
                previous,
                self.lm,
                current=state,
                templates=self.templates,
                retries=self.retries,
            )
            state = apply_program(state, program)
            history.append((segment, description))
            descriptions.append(description)
            programs.append(program)
            previous = program

        return assemble_trajectory(descriptions, programs, audio, story_title=story_title)

    def trajectory_from_genre(self, genre: str) -> StoryTrajectory:
        story = generate_story(genre, self.lm, templates=self.templates, retries=self.retries)
        return self.trajectory_from_story(story["story_title"], story["story_content"])
