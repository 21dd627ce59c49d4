"""Temporal encoding of interaction content.

Storytelling: timestamped word transcripts, LM-driven segmentation into
expression-worthy chunks (each at least 5 seconds), and the story's color
palette. Conversation: rolling 5-word chunks stamped with the current
expression and its age.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from typing import Any, Callable, Iterable, Iterator, Sequence

from .audio import AudioClip, silent_wav
from .errors import XpressError
from .face import parse_color
from .gateway import LmProvider, TemplateLibrary, complete_structured

logger = logging.getLogger(__name__)

MIN_SEGMENT_S = 5.0
CHUNK_WORDS = 5


class EmptyTranscriptError(XpressError):
    pass


class EmptyTextError(XpressError):
    pass


class BadRateError(XpressError):
    pass


class NonMonotonicTimestampError(XpressError):
    def __init__(self, index: int):
        self.index = index
        super().__init__(f"word {index} ends before its predecessor")


class SegmentInvariantError(XpressError):
    """Segmentation output violates a mechanical invariant.

    `code` is one of: min_duration, coverage, palette, empty.
    """

    def __init__(self, code: str, detail: str = ""):
        self.code = code
        super().__init__(f"{code}: {detail}" if detail else code)


@dataclass(frozen=True)
class TimedWord:
    word: str
    end_time_s: float

    def __post_init__(self) -> None:
        if self.end_time_s < 0:
            raise ValueError(f"negative timestamp for {self.word!r}")


@dataclass(frozen=True)
class TimedTranscript:
    words: tuple[TimedWord, ...]

    @property
    def duration_s(self) -> float:
        return self.words[-1].end_time_s if self.words else 0.0

    @property
    def text(self) -> str:
        return " ".join(w.word for w in self.words)


@dataclass(frozen=True)
class StorySegment:
    index: int
    words: tuple[TimedWord, ...]
    start_s: float
    end_s: float

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s

    @property
    def text(self) -> str:
        return " ".join(w.word for w in self.words)


@dataclass(frozen=True)
class Palette:
    colors: tuple[str, ...]
    explanation: str = ""

    def __post_init__(self) -> None:
        if not self.colors:
            raise ValueError("palette needs at least one color")
        object.__setattr__(self, "colors", tuple(parse_color(c) for c in self.colors))

    def __str__(self) -> str:
        return ", ".join(self.colors)


@dataclass(frozen=True)
class ConversationChunk:
    words: tuple[str, ...]
    is_final: bool
    current_expression: str = "neutral"
    seconds_since_change: float = 0.0

    @property
    def text(self) -> str:
        return " ".join(self.words)


@dataclass(frozen=True)
class FullUtterance:
    """End-of-speech replacement: the full transcription of the turn."""

    text: str


def align_transcript(words: Sequence[TimedWord | tuple[str, float]]) -> TimedTranscript:
    """Validate and normalize a word-level timestamped transcript."""
    if not words:
        raise EmptyTranscriptError("transcript has no words")
    normalized = tuple(w if isinstance(w, TimedWord) else TimedWord(*w) for w in words)
    for i in range(1, len(normalized)):
        if normalized[i].end_time_s < normalized[i - 1].end_time_s:
            raise NonMonotonicTimestampError(i)
    return TimedTranscript(normalized)


def format_transcript(transcript: TimedTranscript) -> str:
    """Prompt form: each word followed by its end timestamp in angle brackets."""
    return " ".join(f"{w.word} <{w.end_time_s:.2f}>" for w in transcript.words)


def transcript_to_obj(transcript: TimedTranscript) -> list[dict[str, Any]]:
    return [{"word": w.word, "end_time_s": w.end_time_s} for w in transcript.words]


def transcript_from_obj(obj: Iterable[dict[str, Any]]) -> TimedTranscript:
    return align_transcript([TimedWord(item["word"], item["end_time_s"]) for item in obj])


_HEX_RE = re.compile(r"#[0-9a-fA-F]{6}")
_TIMESTAMP_TOKEN_RE = re.compile(r"^<[^>]*>$")


def _chunk_tokens(chunk_text: str) -> list[str]:
    """Chunk string minus any inline timestamp tokens, whitespace-normalized."""
    return [t for t in chunk_text.split() if t and not _TIMESTAMP_TOKEN_RE.match(t)]


def _map_chunks_to_segments(
    transcript: TimedTranscript, chunks: list[str], min_segment_s: float
) -> list[StorySegment]:
    """Anchor chunk strings back onto word indices.

    Longest-prefix token matching from a moving cursor: each chunk consumes
    the run of transcript words matching its leading tokens; the chunks must
    jointly cover the transcript in order. Comparison is case-insensitive
    after whitespace normalization.
    """
    words = transcript.words
    cursor = 0
    segments: list[StorySegment] = []
    for chunk_index, chunk_text in enumerate(chunks):
        tokens = _chunk_tokens(chunk_text)
        if not tokens:
            raise SegmentInvariantError("empty", f"chunk {chunk_index} has no words")
        if cursor >= len(words):
            raise SegmentInvariantError(
                "coverage", f"chunk {chunk_index} extends past the transcript"
            )
        if tokens[0].casefold() != words[cursor].word.casefold():
            raise SegmentInvariantError(
                "coverage",
                f"chunk {chunk_index} starts with {tokens[0]!r} but word {cursor} "
                f"is {words[cursor].word!r}",
            )
        matched = 0
        while (
            matched < len(tokens)
            and cursor + matched < len(words)
            and tokens[matched].casefold() == words[cursor + matched].word.casefold()
        ):
            matched += 1
        end_index = cursor + matched
        segment_words = words[cursor:end_index]
        start_s = segments[-1].end_s if segments else 0.0
        segments.append(
            StorySegment(
                index=chunk_index,
                words=segment_words,
                start_s=start_s,
                end_s=segment_words[-1].end_time_s,
            )
        )
        cursor = end_index
    if cursor != len(words):
        raise SegmentInvariantError(
            "coverage", f"chunks cover {cursor} of {len(words)} words"
        )
    validate_segments(segments, transcript, min_segment_s=min_segment_s)
    return segments


def validate_segments(
    segments: Sequence[StorySegment],
    transcript: TimedTranscript,
    *,
    min_segment_s: float = MIN_SEGMENT_S,
) -> None:
    """Enforce the mechanical segmentation invariants.

    Segments must each span at least `min_segment_s`, be contiguous and
    ordered, and jointly cover the transcript's words exactly.
    """
    if not segments:
        raise SegmentInvariantError("empty", "no segments")
    flattened: list[TimedWord] = []
    previous_end = 0.0
    for segment in segments:
        if segment.duration_s < min_segment_s:
            raise SegmentInvariantError(
                "min_duration",
                f"segment {segment.index} lasts {segment.duration_s:.2f}s "
                f"(minimum {min_segment_s}s)",
            )
        if segment.start_s != previous_end:
            raise SegmentInvariantError(
                "coverage", f"segment {segment.index} starts at {segment.start_s}, "
                f"expected {previous_end}"
            )
        previous_end = segment.end_s
        flattened.extend(segment.words)
    if tuple(flattened) != transcript.words:
        raise SegmentInvariantError("coverage", "segments do not cover the transcript")


def parse_palette(set_text: str, explanation: str) -> Palette:
    colors = _HEX_RE.findall(set_text)
    if not colors:
        raise SegmentInvariantError("palette", f"no colors found in {set_text!r}")
    return Palette(colors=tuple(colors), explanation=explanation)


def segment_story(
    transcript: TimedTranscript,
    lm: LmProvider,
    *,
    templates: TemplateLibrary | None = None,
    retries: int = 3,
    min_segment_s: float = MIN_SEGMENT_S,
) -> tuple[list[StorySegment], Palette]:
    """Ask the LM to split the story where the face should change, plus a palette.

    The LM output is re-anchored to word indices and checked against the
    mechanical invariants; invalid outputs are retried up to `retries`
    times before the last violation is raised.
    """
    templates = templates or TemplateLibrary()
    template = templates.get("story_segmentation")
    bindings = {"transcript": format_transcript(transcript)}

    last_error: SegmentInvariantError | None = None
    for attempt in range(max(retries, 1)):
        payload = complete_structured(template, bindings, lm)
        try:
            palette = parse_palette(payload["set"], payload["explanation"])
            segments = _map_chunks_to_segments(
                transcript, list(payload["chunks"]), min_segment_s
            )
            return segments, palette
        except SegmentInvariantError as exc:
            last_error = exc
            logger.warning("segmentation attempt %d invalid: %s", attempt + 1, exc)
    assert last_error is not None
    raise last_error


def uniform_segmentation(
    transcript: TimedTranscript, *, target_s: float = 10.0, min_segment_s: float = MIN_SEGMENT_S
) -> list[StorySegment]:
    """LM-free fallback: cut the transcript at roughly `target_s` boundaries.

    A short tail is merged into the previous segment so the minimum-length
    invariant still holds.
    """
    words = transcript.words
    if not words:
        raise EmptyTranscriptError("transcript has no words")
    if transcript.duration_s < min_segment_s:
        raise SegmentInvariantError(
            "min_duration", f"story lasts only {transcript.duration_s:.2f}s"
        )
    groups: list[list[TimedWord]] = [[]]
    boundary = target_s
    for word in words:
        groups[-1].append(word)
        if word.end_time_s >= boundary:
            groups.append([])
            boundary = word.end_time_s + target_s
    if not groups[-1]:
        groups.pop()
    # merge a too-short final group into its predecessor
    if len(groups) > 1:
        last_start = groups[-2][-1].end_time_s
        if groups[-1][-1].end_time_s - last_start < min_segment_s:
            groups[-2].extend(groups.pop())
    segments = []
    start = 0.0
    for i, group in enumerate(groups):
        segments.append(
            StorySegment(index=i, words=tuple(group), start_s=start, end_s=group[-1].end_time_s)
        )
        start = group[-1].end_time_s
    validate_segments(segments, transcript, min_segment_s=min_segment_s)
    return segments


ExpressionStateFn = Callable[[], tuple[str, float]]


class SpeechChunker:
    """Stateful single-consumer chunker for one conversation session.

    Emits a chunk the instant the fifth word arrives; flushes the residual
    (1-4 words) as a final chunk on end of speech, followed by the
    full-utterance replacement. An empty residual is suppressed.
    """

    def __init__(
        self,
        chunk_words: int = CHUNK_WORDS,
        expression_state: ExpressionStateFn | None = None,
    ):
        self._chunk_words = chunk_words
        self._expression_state = expression_state or (lambda: ("neutral", 0.0))
        self._buffer: list[str] = []
        self._all_words: list[str] = []

    def _stamp(self, words: list[str], is_final: bool) -> ConversationChunk:
        expression, age = self._expression_state()
        return ConversationChunk(
            words=tuple(words),
            is_final=is_final,
            current_expression=expression,
            seconds_since_change=age,
        )

    def feed(self, word: str) -> list[ConversationChunk]:
        self._buffer.append(word)
        self._all_words.append(word)
        if len(self._buffer) >= self._chunk_words:
            chunk = self._stamp(self._buffer, is_final=False)
            self._buffer = []
            return [chunk]
        return []

    def feed_many(self, words: Iterable[str]) -> list[ConversationChunk]:
        emitted: list[ConversationChunk] = []
        for word in words:
            emitted.extend(self.feed(word))
        return emitted

    def end_of_speech(self) -> list[ConversationChunk | FullUtterance]:
        events: list[ConversationChunk | FullUtterance] = []
        if self._buffer:
            events.append(self._stamp(self._buffer, is_final=True))
        if self._all_words:
            events.append(FullUtterance(" ".join(self._all_words)))
        self._buffer = []
        self._all_words = []
        return events


def chunk_user_speech(
    word_stream: Iterable[str],
    *,
    expression_state: ExpressionStateFn | None = None,
) -> Iterator[ConversationChunk | FullUtterance]:
    """Stream adapter over SpeechChunker: the stream's end is end-of-speech."""
    chunker = SpeechChunker(expression_state=expression_state)
    for word in word_stream:
        yield from chunker.feed(word)
    yield from chunker.end_of_speech()


def fake_speech_services(
    text: str, words_per_minute: float = 150.0, *, sample_rate: int = 8000
) -> tuple[AudioClip, list[TimedWord]]:
    """Deterministic stand-in for TTS + word-level STT.

    Words land at a uniform cadence; the audio is silence of exactly the
    right duration. Real vendor adapters must satisfy the same contract:
    playable audio plus word-level end timestamps.
    """
    if words_per_minute <= 0:
        raise BadRateError(f"words_per_minute must be positive, got {words_per_minute}")
    words = text.split()
    if not words:
        raise EmptyTextError("cannot synthesize empty text")
    seconds_per_word = 60.0 / words_per_minute
    timed = [
        TimedWord(word=w, end_time_s=round((i + 1) * seconds_per_word, 3))
        for i, w in enumerate(words)
    ]
    return silent_wav(timed[-1].end_time_s, sample_rate=sample_rate), timed
