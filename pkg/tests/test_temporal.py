"""Temporal encoding: transcripts, segmentation, chunking, fake speech services."""

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xpress.gateway import ScriptedStub
from xpress.temporal import (
    BadRateError,
    ConversationChunk,
    EmptyTextError,
    EmptyTranscriptError,
    FullUtterance,
    NonMonotonicTimestampError,
    Palette,
    SegmentInvariantError,
    SpeechChunker,
    TimedWord,
    align_transcript,
    chunk_user_speech,
    fake_speech_services,
    format_transcript,
    parse_palette,
    segment_story,
    transcript_from_obj,
    transcript_to_obj,
    uniform_segmentation,
    validate_segments,
)

WORDS_500 = [f"word{i}" for i in range(500)]


def transcript_of(words, wpm=150.0):
    _audio, timed = fake_speech_services(" ".join(words), wpm)
    return align_transcript(timed)


def segmentation_response(transcript, words_per_chunk, palette="#1E3A5F, #FFD700"):
    words = transcript.words
    chunks = []
    for start in range(0, len(words), words_per_chunk):
        group = words[start : start + words_per_chunk]
        chunks.append(" ".join(f"{w.word} <{w.end_time_s:.2f}>" for w in group))
    return json.dumps({"set": palette, "explanation": "calm blues and warm gold", "chunks": chunks})


class TestAlignTranscript:
    def test_three_words(self):
        transcript = align_transcript([("In", 0.00), ("a", 0.31), ("small", 0.46)])
        assert len(transcript.words) == 3
        assert transcript.duration_s == 0.46

    def test_empty_rejected(self):
        with pytest.raises(EmptyTranscriptError):
            align_transcript([])

    def test_non_monotonic_carries_index(self):
        with pytest.raises(NonMonotonicTimestampError) as exc:
            align_transcript([("a", 1.0), ("b", 0.5)])
        assert exc.value.index == 1

    def test_negative_timestamp_rejected(self):
        with pytest.raises(ValueError):
            TimedWord("x", -0.1)

    def test_interchange_round_trip(self):
        transcript = transcript_of(["tiny", "story", "words"])
        assert transcript_from_obj(transcript_to_obj(transcript)) == transcript

    def test_prompt_format(self):
        transcript = align_transcript([("In", 0.0), ("a", 0.31)])
        assert format_transcript(transcript) == "In <0.00> a <0.31>"


class TestSegmentStory:
    def test_500_word_transcript_covered(self):
        transcript = transcript_of(WORDS_500)  # 0.4s per word, 200s total
        stub = ScriptedStub.sequence([segmentation_response(transcript, 25)])
        segments, palette = segment_story(transcript, stub)
        # brute-force coverage oracle: flattened segment words == transcript
        flattened = [w for s in segments for w in s.words]
        assert flattened == list(transcript.words)
        assert all(s.duration_s >= 5.0 for s in segments)
        assert len(segments) == 20
        assert palette.colors == ("#1E3A5F", "#FFD700")

    def test_short_chunk_rejected_with_min_duration(self):
        transcript = transcript_of(WORDS_500)
        stub = ScriptedStub()
        # 10 words x 0.4s = 4.0s first chunk, repeated for every retry
        stub.add("", segmentation_response(transcript, 10), times=None)
        with pytest.raises(SegmentInvariantError) as exc:
            segment_story(transcript, stub)
        assert exc.value.code == "min_duration"

    def test_single_color_palette(self):
        palette = parse_palette("#1E3A5F", "a single deep blue")
        assert palette.colors == ("#1E3A5F",)

    def test_retry_then_success(self):
        transcript = transcript_of(WORDS_500)
        stub = ScriptedStub.sequence(
            [segmentation_response(transcript, 10), segmentation_response(transcript, 25)]
        )
        segments, _palette = segment_story(transcript, stub)
        assert len(segments) == 20

    def test_non_covering_chunks_rejected(self):
        transcript = transcript_of(WORDS_500)
        response = json.loads(segmentation_response(transcript, 25))
        response["chunks"] = response["chunks"][:-1]  # drop the tail
        stub = ScriptedStub()
        stub.add("", json.dumps(response), times=None)
        with pytest.raises(SegmentInvariantError) as exc:
            segment_story(transcript, stub)
        assert exc.value.code == "coverage"

    def test_chunk_not_anchored_rejected(self):
        transcript = transcript_of(WORDS_500)
        response = json.loads(segmentation_response(transcript, 25))
        response["chunks"][0] = "completely different words here"
        stub = ScriptedStub()
        stub.add("", json.dumps(response), times=None)
        with pytest.raises(SegmentInvariantError) as exc:
            segment_story(transcript, stub)
        assert exc.value.code == "coverage"

    def test_palette_without_colors_rejected(self):
        transcript = transcript_of(WORDS_500)
        response = json.loads(segmentation_response(transcript, 25))
        response["set"] = "no hex colors at all"
        stub = ScriptedStub()
        stub.add("", json.dumps(response), times=None)
        with pytest.raises(SegmentInvariantError) as exc:
            segment_story(transcript, stub)
        assert exc.value.code == "palette"

    def test_prompt_carries_timestamped_transcript(self):
        transcript = transcript_of(["alpha", "beta"] * 10)
        stub = ScriptedStub.sequence([segmentation_response(transcript, 20)])
        segment_story(transcript, stub)
        assert "alpha <0.40>" in stub.calls[0]


class TestUniformFallback:
    def test_uniform_ten_second_segments(self):
        transcript = transcript_of(WORDS_500)
        segments = uniform_segmentation(transcript)
        validate_segments(segments, transcript)
        assert all(s.duration_s >= 5.0 for s in segments)
        # 200s at ~10s per segment
        assert 18 <= len(segments) <= 21

    def test_short_tail_merged(self):
        transcript = transcript_of([f"w{i}" for i in range(27)])  # 10.8s total
        segments = uniform_segmentation(transcript)
        validate_segments(segments, transcript)
        assert segments[-1].duration_s >= 5.0


class TestChunker:
    def test_twelve_words_split_5_5_2(self):
        events = list(chunk_user_speech([f"w{i}" for i in range(12)]))
        chunks = [e for e in events if isinstance(e, ConversationChunk)]
        assert [len(c.words) for c in chunks] == [5, 5, 2]
        assert [c.is_final for c in chunks] == [False, False, True]
        assert isinstance(events[-1], FullUtterance)
        assert events[-1].text == " ".join(f"w{i}" for i in range(12))

    def test_exactly_five_words_suppresses_empty_residual(self):
        events = list(chunk_user_speech(["a", "b", "c", "d", "e"]))
        chunks = [e for e in events if isinstance(e, ConversationChunk)]
        assert [len(c.words) for c in chunks] == [5]
        assert not chunks[0].is_final
        assert isinstance(events[-1], FullUtterance)

    def test_zero_words_emits_nothing(self):
        assert list(chunk_user_speech([])) == []

    def test_chunk_emitted_immediately_on_fifth_word(self):
        chunker = SpeechChunker()
        for i in range(4):
            assert chunker.feed(f"w{i}") == []
        emitted = chunker.feed("w4")
        assert len(emitted) == 1
        assert emitted[0].words == ("w0", "w1", "w2", "w3", "w4")

    def test_expression_stamp_applied(self):
        chunker = SpeechChunker(expression_state=lambda: ("tired-low", 4.2))
        chunk = chunker.feed_many(["a", "b", "c", "d", "e"])[0]
        assert chunk.current_expression == "tired-low"
        assert chunk.seconds_since_change == 4.2

    @settings(max_examples=80, deadline=None)
    @given(words=st.lists(st.text(alphabet="abc", min_size=1, max_size=4), max_size=40))
    def test_concatenation_reproduces_input(self, words):
        events = list(chunk_user_speech(words))
        chunks = [e for e in events if isinstance(e, ConversationChunk)]
        assert [w for c in chunks for w in c.words] == words
        for chunk in chunks[:-1] if chunks and chunks[-1].is_final else chunks:
            assert len(chunk.words) == 5


class TestFakeSpeechServices:
    def test_two_words_at_120wpm(self):
        _audio, words = fake_speech_services("hello world", 120)
        assert [(w.word, w.end_time_s) for w in words] == [("hello", 0.5), ("world", 1.0)]

    def test_empty_text_rejected(self):
        with pytest.raises(EmptyTextError):
            fake_speech_services("", 120)

    def test_bad_rate_rejected(self):
        with pytest.raises(BadRateError):
            fake_speech_services("hi", 0)

    def test_500_words_at_150wpm_lasts_200s(self):
        audio, words = fake_speech_services(" ".join(WORDS_500), 150)
        assert words[-1].end_time_s == 200.0
        assert audio.duration_s == pytest.approx(200.0, abs=0.001)

    def test_audio_placeholder_duration_matches(self):
        audio, words = fake_speech_services("one two three", 60)
        assert audio.format == "wav"
        assert audio.duration_s == pytest.approx(words[-1].end_time_s, abs=0.001)

    def test_timestamps_non_negative_and_monotone(self):
        _audio, words = fake_speech_services(" ".join(WORDS_500), 150)
        assert all(w.end_time_s >= 0 for w in words)
        assert all(b.end_time_s >= a.end_time_s for a, b in zip(words, words[1:]))


def test_palette_rejects_bad_hex():
    with pytest.raises(ValueError):
        Palette(colors=("#12345",))
