"""Face model: defaults, program application, fingerprints, range closure."""

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from genutil import distinct_fixture_programs, random_face_state, random_valid_program
from xpress import validator
from xpress.errors import InvariantError
from xpress.face import (
    BorderRadius,
    EyelidState,
    FaceElement,
    FaceProgram,
    FaceState,
    MouthState,
    Track,
    apply_program,
    check_state_values,
    dof_names,
    face_fingerprint,
    neutral_face,
    state_from_json,
    state_to_json,
    state_to_obj,
)

SMILE = FaceProgram(
    (Track(target=FaceElement.MOUTH, properties={"border_radius": BorderRadius.parse("0% 0% 50% 50%")}),)
)


class TestNeutralFace:
    def test_default_colors(self):
        state = neutral_face()
        assert state.left_eye.color == "#000000"
        assert state.right_eye.color == "#000000"
        assert state.background_color == "#F5F5F5"
        assert state.mouth.color == "#FFC0CB"

    def test_identity_defaults(self):
        state = neutral_face()
        for eye in (state.left_eye, state.right_eye):
            assert eye.translate_x == 0 and eye.translate_y == 0
            assert eye.scale_x == 1.0 and eye.scale_y == 1.0
            assert str(eye.border_radius) == "50%"
        for lid in (
            state.upper_left_eyelid,
            state.upper_right_eyelid,
            state.lower_left_eyelid,
            state.lower_right_eyelid,
        ):
            assert lid.translate_y == 0 and lid.rotate == 0
            assert lid.color == state.background_color
        assert state.mouth.translate_x == 0 and state.mouth.rotate == 0
        assert (state.mouth.width, state.mouth.height) == (10.0, 4.0)

    def test_deterministic(self):
        assert neutral_face() == neutral_face()

    def test_satisfies_invariants(self):
        assert check_state_values(state_to_obj(neutral_face())) == []


class TestApplyProgram:
    def test_smile_changes_only_mouth_radius(self):
        out = apply_program(neutral_face(), SMILE)
        assert str(out.mouth.border_radius) == "0% 0% 50% 50%"
        assert out.left_eye == neutral_face().left_eye
        assert out.background_color == neutral_face().background_color

    def test_empty_program_is_identity(self):
        state = random_face_state(random.Random(7))
        assert apply_program(state, FaceProgram()) == state

    def test_background_change_recouples_eyelids(self):
        program = FaceProgram(
            (Track(target=FaceElement.FACE_BACKGROUND, properties={"background_color": "#8C8C8C"}),)
        )
        out = apply_program(neutral_face(), program)
        assert out.background_color == "#8C8C8C"
        for lid in (
            out.upper_left_eyelid,
            out.upper_right_eyelid,
            out.lower_left_eyelid,
            out.lower_right_eyelid,
        ):
            assert lid.color == "#8C8C8C"

    def test_invariant_violation_raises(self):
        # mouth matching the background is illegal however it is reached
        program = FaceProgram(
            (Track(target=FaceElement.MOUTH, properties={"color": "#F5F5F5"}),)
        )
        with pytest.raises(InvariantError):
            apply_program(neutral_face(), program)

    def test_deterministic(self):
        rng = random.Random(21)
        state = random_face_state(rng)
        program = random_valid_program(rng, state)
        assert apply_program(state, program) == apply_program(state, program)


class TestFingerprint:
    def test_deterministic(self):
        assert face_fingerprint(neutral_face()) == face_fingerprint(neutral_face())

    def test_smile_differs_from_neutral(self):
        smiled = apply_program(neutral_face(), SMILE)
        assert face_fingerprint(smiled) != face_fingerprint(neutral_face())

    def test_golden_fixture_set_counts_ten(self):
        programs = distinct_fixture_programs(10)
        prints = {face_fingerprint(apply_program(neutral_face(), p)) for p in programs}
        assert len(prints) == 10

    def test_color_case_is_normalized_away(self):
        a = FaceState(mouth=MouthState(color="#ffc0cb"))
        b = FaceState(mouth=MouthState(color="#FFC0CB"))
        assert face_fingerprint(a) == face_fingerprint(b)

    def test_sub_centesimal_jitter_is_normalized_away(self):
        a = FaceState(mouth=MouthState(translate_x=1.004))
        b = FaceState(mouth=MouthState(translate_x=1.0))
        assert face_fingerprint(a) == face_fingerprint(b)


class TestInvariants:
    def test_dof_count_is_28(self):
        assert len(dof_names()) == 28

    def test_eyelid_color_must_match_background(self):
        with pytest.raises(InvariantError):
            FaceState(upper_left_eyelid=EyelidState(color="#123456"))

    def test_eye_color_must_differ_from_background(self):
        from xpress.face import EyeState

        with pytest.raises(InvariantError):
            FaceState(
                background_color="#000000",
                upper_left_eyelid=EyelidState(color="#000000"),
                upper_right_eyelid=EyelidState(color="#000000"),
                lower_left_eyelid=EyelidState(color="#000000"),
                lower_right_eyelid=EyelidState(color="#000000"),
                left_eye=EyeState(color="#000000"),
                right_eye=EyeState(color="#000000"),
            )

    def test_out_of_range_state_rejected(self):
        with pytest.raises(InvariantError):
            FaceState(mouth=MouthState(width=13.0))

    @settings(max_examples=60, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_range_closure_under_validated_programs(self, seed):
        rng = random.Random(seed)
        state = random_face_state(rng)
        program = random_valid_program(rng, state)
        assert validator.validate(program, state).ok
        out = apply_program(state, program)  # construction re-checks every range
        assert check_state_values(state_to_obj(out)) == []

    @settings(max_examples=60, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_eyelids_track_background_after_any_apply(self, seed):
        rng = random.Random(seed)
        state = random_face_state(rng)
        out = apply_program(state, random_valid_program(rng, state))
        for lid in (
            out.upper_left_eyelid,
            out.upper_right_eyelid,
            out.lower_left_eyelid,
            out.lower_right_eyelid,
        ):
            assert lid.color == out.background_color


class TestSerialization:
    def test_neutral_round_trip(self):
        state = neutral_face()
        assert state_from_json(state_to_json(state)) == state

    @settings(max_examples=60, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_random_state_round_trip(self, seed):
        state = random_face_state(random.Random(seed))
        assert state_from_json(state_to_json(state)) == state

    def test_unknown_field_rejected(self):
        obj = state_to_obj(neutral_face())
        obj["nose"] = {}
        from xpress.face import state_from_obj

        with pytest.raises(ValueError):
            state_from_obj(obj)
