"""Conversation session: replay, choreography, hold rule end to end."""

import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from genutil import quick_bank
from xpress.context import Emotion, Intensity
from xpress.face import apply_program, neutral_face
from xpress.gateway import CompletionParams, ScriptedStub
from xpress.session import (
    ConversationEngine,
    EndOfSpeech,
    SpeechWords,
    reset_overlay_program,
    run_conversation,
)
from xpress.validator import batch_to_program, validate

BANK = quick_bank()

USER_WORDS = (
    "now physically I am feeling okay just a little tired I need to go workout "
    "tomorrow and I think that will help but mentally I am just feeling a lot "
    "drained like this too much going on in my head yeah"
).split()


def reaction(emotion, intensity="low"):
    return json.dumps({"emotion": emotion, "intensity": intensity})


def replay_stub():
    """Reactor/responder script reproducing the example check-in reactions."""
    stub = ScriptedStub()
    by_chunk = [
        ("now physically I am feeling", "neutral"),
        ("okay just a little tired", "tired"),
        ("I need to go workout", "no-change"),
        ("tomorrow and I think that", "calm"),
        ("will help but mentally I", "no-change"),
        ("am just feeling a lot", "no-change"),
        ("drained like this too much", "sad"),
        ("going on in my head", "sad"),
        ("yeah", "sad"),
    ]
    for text, emotion in by_chunk:
        # key on the rendered current-chunk form so earlier chunk text inside
        # previous_chunks can never hijack a later call
        stub.add(f"current_chunk: {{{text}}}", reaction(emotion), times=None)
    stub.add(
        "You are currently on question",
        json.dumps(
            {
                "emotion": "sad",
                "intensity": "low",
                "response": "That sounds draining. Be kind to yourself today. Goodbye!",
                "end_of_conversation": "true",
            }
        ),
        times=None,
    )
    return stub


def word_events(words, start, step):
    return [SpeechWords(t=round(start + step * (i + 1), 4), words=(w,)) for i, w in enumerate(words)]


class TestReplay:
    def test_example_conversation_sequence_and_holds(self):
        stub = replay_stub()
        engine = ConversationEngine(BANK, stub, session_id="replay")
        events = word_events(USER_WORDS, start=4.0, step=0.7)
        end_t = events[-1].t + 0.5
        report = run_conversation(engine, events + [EndOfSpeech(t=end_t)])

        reactions = [c for c in report.timeline if c.origin == "reaction"]
        assert [c.emotion.value for c in reactions] == ["tired", "calm", "sad"]
        assert report.expression_sequence()[:4] == ["neutral", "tired", "calm", "sad"]

        gated = [c for c in report.timeline if c.origin != "neutral_reset"]
        gaps = [b.t - a.t for a, b in zip(gated, gated[1:])]
        assert all(gap >= 3.0 for gap in gaps)
        assert report.ended

    def test_robot_question_comes_first(self):
        stub = replay_stub()
        engine = ConversationEngine(BANK, stub, session_id="replay")
        engine.start(0.0)
        assert engine.history[0] == (
            "robot",
            "How are you feeling today? Physically and mentally.",
        )
        kinds = [m.kind for m in engine.messages]
        assert kinds[:2] == ["play_audio", "mouth_speaking"]

    def test_full_transcript_replaces_partials(self):
        stub = replay_stub()
        engine = ConversationEngine(BANK, stub, session_id="replay")
        events = word_events(USER_WORDS, start=4.0, step=0.7)
        report = run_conversation(engine, events + [EndOfSpeech(t=events[-1].t + 0.5)])
        user_turns = [text for speaker, text in report.transcript if speaker == "user"]
        assert user_turns == [" ".join(USER_WORDS)]


class TestResponseChoreography:
    def _engine_with_reply(self, reply_words, end="false", emotion="happy", intensity="high"):
        stub = ScriptedStub()
        stub.add("current_chunk", reaction("no-change"), times=None)
        stub.add(
            "You are currently on question",
            json.dumps(
                {
                    "emotion": emotion,
                    "intensity": intensity,
                    "response": " ".join(["word"] * reply_words),
                    "end_of_conversation": end,
                }
            ),
            times=None,
        )
        return ConversationEngine(BANK, stub, session_id="choreo")

    def test_short_speech_resets_at_speech_end(self):
        # 5 words at 150 wpm = 2.0 s of speech: expression shows 2 s, not 3
        engine = self._engine_with_reply(reply_words=5)
        engine.start(0.0)
        first_question_end = engine.next_deadline()
        engine.pump(first_question_end)
        assert engine.phase == "listening"
        t = first_question_end + 5.0
        engine.handle(SpeechWords(t=t, words=("hello", "there", "friend", "of", "mine")))
        engine.handle(EndOfSpeech(t=t + 0.2))
        respond_t = t + 0.2
        changes = {c.origin: c for c in engine.timeline}
        assert changes["response"].t == respond_t
        assert changes["response"].emotion is Emotion.HAPPY
        # drain deadlines: neutral reset must land at speech end (2.0 s)
        while engine.next_deadline() is not None and not engine.done:
            engine.pump(engine.next_deadline())
        resets = [c for c in engine.timeline if c.origin == "neutral_reset"]
        assert len(resets) == 1
        assert resets[0].t == pytest.approx(respond_t + 2.0)

    def test_long_speech_resets_at_three_seconds(self):
        # 20 words at 150 wpm = 8 s of speech: reset at exactly 3 s
        engine = self._engine_with_reply(reply_words=20)
        engine.start(0.0)
        engine.pump(engine.next_deadline())
        t = engine.clock.now + 5.0
        engine.handle(SpeechWords(t=t, words=("a", "b", "c", "d", "e")))
        engine.handle(EndOfSpeech(t=t + 0.2))
        respond_t = t + 0.2
        while engine.next_deadline() is not None and not engine.done:
            engine.pump(engine.next_deadline())
        resets = [c for c in engine.timeline if c.origin == "neutral_reset"]
        assert resets[0].t == pytest.approx(respond_t + 3.0)

    def test_end_of_conversation_sends_reset_and_closes(self):
        engine = self._engine_with_reply(reply_words=5, end="true")
        engine.start(0.0)
        engine.pump(engine.next_deadline())
        t = engine.clock.now + 4.0
        engine.handle(SpeechWords(t=t, words=("short", "answer", "to", "your", "question")))
        engine.handle(EndOfSpeech(t=t + 0.2))
        while engine.next_deadline() is not None and not engine.done:
            engine.pump(engine.next_deadline())
        assert engine.done
        assert engine.messages[-1].kind == "reset"
        assert engine.shadow == neutral_face()

    def test_abort_says_goodbye_with_neutral_face(self):
        stub = ScriptedStub()
        stub.add("current_chunk", reaction("happy", "high"), times=None)
        engine = ConversationEngine(BANK, stub, session_id="abort")

        def failing_events():
            yield SpeechWords(t=10.0, words=("one", "two", "three", "four", "five"))
            raise ConnectionError("microphone stream died")

        engine_report = run_conversation(engine, failing_events())
        assert engine_report.ended
        assert engine.clock.current == (Emotion.NEUTRAL, Intensity.LOW)
        assert any("Goodbye" in text for speaker, text in engine_report.transcript if speaker == "robot")


class TestShadowState:
    def test_shadow_equals_cumulative_apply(self):
        stub = replay_stub()
        engine = ConversationEngine(BANK, stub, session_id="shadow")
        events = word_events(USER_WORDS, start=4.0, step=0.7)
        run_conversation(engine, events + [EndOfSpeech(t=events[-1].t + 0.5)])
        replay = neutral_face()
        for message in engine.messages:
            if message.kind == "apply_batch":
                replay = apply_program(replay, batch_to_program(message.batch()))
            elif message.kind == "reset":
                replay = neutral_face()
        assert replay == engine.shadow

    def test_sequence_numbers_strictly_increase(self):
        stub = replay_stub()
        engine = ConversationEngine(BANK, stub, session_id="seq")
        events = word_events(USER_WORDS, start=4.0, step=0.7)
        run_conversation(engine, events + [EndOfSpeech(t=events[-1].t + 0.5)])
        seqs = [m.seq for m in engine.messages]
        assert seqs == list(range(1, len(seqs) + 1))


class TestResetOverlay:
    def test_overlay_valid_from_any_reachable_state(self):
        rng = random.Random(3)
        state = neutral_face()
        for i in range(30):
            emotion = rng.choice([e for e in Emotion if e is not Emotion.NEUTRAL])
            intensity = rng.choice(list(Intensity))
            program = reset_overlay_program(BANK.lookup(emotion, intensity))
            assert validate(program, state).ok
            state = apply_program(state, program)

    def test_overlay_lands_exactly_on_bank_face(self):
        entry = BANK.lookup(Emotion.SAD, Intensity.HIGH)
        target = apply_program(neutral_face(), entry)
        rng = random.Random(4)
        from genutil import random_face_state

        for _ in range(10):
            start = random_face_state(rng)
            assert apply_program(start, reset_overlay_program(entry)) == target


class RandomReactor:
    """Deterministic pseudo-random reactor/responder for trace property tests."""

    identity = "stub:random-reactor"

    def __init__(self, seed: int):
        self.rng = random.Random(seed)

    def complete(self, prompt: str, params: CompletionParams) -> str:
        if "You are currently on question" in prompt:
            return json.dumps(
                {
                    "emotion": self.rng.choice(["calm", "happy", "interest", "no-change"]),
                    "intensity": self.rng.choice(["low", "high"]),
                    "response": " ".join(["w"] * self.rng.randint(3, 12)),
                    "end_of_conversation": "false",
                }
            )
        emotion = self.rng.choice(
            [e.value for e in Emotion] + ["no-change", "no-change", "bogus"]
        )
        return json.dumps({"emotion": emotion, "intensity": self.rng.choice(["low", "high"])})


class TestHoldEndToEnd:
    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1))
    def test_randomized_trace_never_violates_hold(self, seed):
        rng = random.Random(seed ^ 0xA5A5)
        engine = ConversationEngine(BANK, RandomReactor(seed), session_id="prop")
        engine.start(0.0)
        t = 0.0
        for _ in range(rng.randint(10, 60)):
            t += rng.choice([0.3, 0.7, 1.1, 2.3])
            if rng.random() < 0.12:
                engine.handle(EndOfSpeech(t=t))
            else:
                words = tuple(f"w{rng.randint(0, 9)}" for _ in range(rng.randint(1, 6)))
                engine.handle(SpeechWords(t=t, words=words))
            if engine.done:
                break
        while engine.next_deadline() is not None and not engine.done:
            engine.pump(engine.next_deadline())

        gated = [c for c in engine.timeline if c.origin != "neutral_reset"]
        for a, b in zip(gated, gated[1:]):
            assert b.t - a.t >= 3.0, f"{a} -> {b}"
        # choreographed resets still respect the response-display rule
        for change in engine.timeline:
            assert change.origin in ("reaction", "response", "neutral_reset")
