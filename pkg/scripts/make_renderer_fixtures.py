"""Regenerate the renderer test fixtures from the core face model.

The renderer's end-state tests compare its visual values against the
server-side shadow state; these files pin that contract.

Usage: python3 scripts/make_renderer_fixtures.py
"""

import json
from pathlib import Path

from xpress.face import (
    BorderRadius,
    FaceElement,
    FaceProgram,
    Track,
    apply_program,
    neutral_face,
    state_to_obj,
)
from xpress.validator import compile_program, normalize

OUT = Path(__file__).resolve().parent.parent / "frontend" / "test" / "fixtures"

SMILE = FaceProgram(
    (
        Track(
            target=FaceElement.MOUTH,
            properties={
                "border_radius": BorderRadius.parse("0% 0% 50% 50%"),
                "width": 11.0,
                "translate_y": 5.0,
            },
            duration_ms=600,
        ),
        Track(
            target=FaceElement.LEFT_EYE,
            properties={"scale_y": 1.2, "translate_y": -10.0},
            duration_ms=600,
        ),
        Track(
            target=FaceElement.RIGHT_EYE,
            properties={"scale_y": 1.2, "translate_y": -10.0},
            duration_ms=600,
        ),
    )
)

RECOLOR = FaceProgram(
    (
        Track(
            target=FaceElement.FACE_BACKGROUND,
            properties={"background_color": "#E6E6FA"},
            duration_ms=800,
        ),
        Track(target=FaceElement.LEFT_EYE, properties={"color": "#1E3A5F"}, duration_ms=800),
        Track(target=FaceElement.RIGHT_EYE, properties={"color": "#1E3A5F"}, duration_ms=800),
        Track(
            target=FaceElement.UPPER_LEFT_EYELID,
            properties={"translate_y": 20.0, "rotate": 10.0},
            duration_ms=800,
        ),
        Track(
            target=FaceElement.UPPER_RIGHT_EYELID,
            properties={"translate_y": 20.0, "rotate": -10.0},
            duration_ms=800,
        ),
    )
)


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    state = neutral_face()
    fixtures = {}
    for name, program in (("smile", SMILE), ("recolor", RECOLOR)):
        normalized = normalize(program, state)
        batch = compile_program(normalized, batch_id=len(fixtures) + 1, current=state)
        end_state = apply_program(state, normalized)
        fixtures[name] = {"batch": batch.to_obj(), "end_state": state_to_obj(end_state)}
        state = end_state  # recolor plays after the smile, like a real session
    fixtures["neutral_state"] = state_to_obj(neutral_face())
    for name, payload in fixtures.items():
        path = OUT / f"{name}.json"
        path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
