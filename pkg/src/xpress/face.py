"""Face model: the 28 degrees of freedom, their ranges, and pure state evolution.

The animated face has exactly 8 elements. Their controllable parameters:

    background          1  color
    eyes (x2)          12  color, translate_x/y, scale_x/y, border_radius
    eyelids (x4)        8  translate_y, rotate
    mouth               7  color, translate_x/y, rotate, width, height,
                           border_radius

Eyelid color exists as state but is not a degree of freedom: it is slaved
to the background color at all times so eyelids stay invisible until moved.

All types here are immutable values; every operation is a pure function.
Numeric values are quantized to 2 decimal places at construction so that
fingerprinting and serialization round-trips are stable.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field, fields
from enum import Enum
from typing import Any, Iterator, Mapping

from .errors import InvariantError


class FaceElement(str, Enum):
    FACE_BACKGROUND = "face_background"
    LEFT_EYE = "left_eye"
    RIGHT_EYE = "right_eye"
    UPPER_LEFT_EYELID = "upper_left_eyelid"
    UPPER_RIGHT_EYELID = "upper_right_eyelid"
    LOWER_LEFT_EYELID = "lower_left_eyelid"
    LOWER_RIGHT_EYELID = "lower_right_eyelid"
    MOUTH = "mouth"


EYES = (FaceElement.LEFT_EYE, FaceElement.RIGHT_EYE)
UPPER_EYELIDS = (FaceElement.UPPER_LEFT_EYELID, FaceElement.UPPER_RIGHT_EYELID)
LOWER_EYELIDS = (FaceElement.LOWER_LEFT_EYELID, FaceElement.LOWER_RIGHT_EYELID)
EYELIDS = UPPER_EYELIDS + LOWER_EYELIDS


class Easing(str, Enum):
    EASE_IN_OUT_QUAD = "ease_in_out_quad"
    LINEAR = "linear"
    EASE_IN_QUAD = "ease_in_quad"
    EASE_OUT_QUAD = "ease_out_quad"


DEFAULT_EASING = Easing.EASE_IN_OUT_QUAD

_COLOR_RE = re.compile(r"^#[0-9a-fA-F]{6}$")


def parse_color(value: str) -> str:
    """Validate a "#RRGGBB" color and normalize it to uppercase."""
    if not isinstance(value, str) or not _COLOR_RE.match(value):
        raise ValueError(f"not a #RRGGBB color: {value!r}")
    return value.upper()


def quantize(value: float) -> float:
    """Round a DoF value to the 2-decimal grid used throughout."""
    return round(float(value), 2)


def _fmt_pct(value: float) -> str:
    v = quantize(value)
    text = f"{v:.2f}".rstrip("0").rstrip(".")
    return f"{text}%"


_PCT_RE = re.compile(r"^(-?\d+(?:\.\d+)?)%$")


@dataclass(frozen=True)
class BorderRadius:
    """Corner radii in percent. One value means all four corners equal."""

    corners: tuple[float, float, float, float]

    def __post_init__(self) -> None:
        if len(self.corners) != 4:
            raise ValueError("border radius needs exactly 4 corners")
        object.__setattr__(self, "corners", tuple(quantize(c) for c in self.corners))

    @classmethod
    def uniform(cls, value: float) -> "BorderRadius":
        return cls((value, value, value, value))

    @classmethod
    def parse(cls, text: str) -> "BorderRadius":
        """Parse "50%" or "50% 50% 0% 0%"."""
        if not isinstance(text, str):
            raise ValueError(f"border radius must be a string: {text!r}")
        parts = text.split()
        if len(parts) not in (1, 4):
            raise ValueError(f"border radius needs 1 or 4 values: {text!r}")
        values = []
        for part in parts:
            m = _PCT_RE.match(part)
            if not m:
                raise ValueError(f"bad percentage {part!r} in border radius")
            values.append(float(m.group(1)))
        if len(values) == 1:
            return cls.uniform(values[0])
        return cls(tuple(values))  # type: ignore[arg-type]

    def __str__(self) -> str:
        if len(set(self.corners)) == 1:
            return _fmt_pct(self.corners[0])
        return " ".join(_fmt_pct(c) for c in self.corners)


# Per-element DoF ranges. Bounds are inclusive unless noted.
EYE_RANGES: dict[str, tuple[float, float]] = {
    "translate_x": (-50.0, 50.0),
    "translate_y": (-75.0, 50.0),
    "scale_x": (0.25, 2.0),
    "scale_y": (0.25, 2.0),
}
UPPER_EYELID_RANGES: dict[str, tuple[float, float]] = {
    "translate_y": (0.0, 50.0),
    "rotate": (-30.0, 30.0),
}
LOWER_EYELID_RANGES: dict[str, tuple[float, float]] = {
    "translate_y": (-50.0, 0.0),
    "rotate": (-30.0, 30.0),
}
MOUTH_RANGES: dict[str, tuple[float, float]] = {
    "translate_x": (-50.0, 50.0),
    "translate_y": (-25.0, 25.0),
    "rotate": (-15.0, 15.0),
    # width/height are (0, 12]: zero is excluded, checked separately
    "width": (0.0, 12.0),
    "height": (0.0, 12.0),
}
BORDER_RADIUS_RANGE = (0.0, 100.0)

# Property names each element accepts in a program track.
ELEMENT_PROPERTIES: dict[FaceElement, frozenset[str]] = {
    FaceElement.FACE_BACKGROUND: frozenset({"background_color"}),
    FaceElement.LEFT_EYE: frozenset(
        {"color", "translate_x", "translate_y", "scale_x", "scale_y", "border_radius"}
    ),
    FaceElement.RIGHT_EYE: frozenset(
        {"color", "translate_x", "translate_y", "scale_x", "scale_y", "border_radius"}
    ),
    FaceElement.UPPER_LEFT_EYELID: frozenset({"color", "translate_y", "rotate"}),
    FaceElement.UPPER_RIGHT_EYELID: frozenset({"color", "translate_y", "rotate"}),
    FaceElement.LOWER_LEFT_EYELID: frozenset({"color", "translate_y", "rotate"}),
    FaceElement.LOWER_RIGHT_EYELID: frozenset({"color", "translate_y", "rotate"}),
    FaceElement.MOUTH: frozenset(
        {"color", "translate_x", "translate_y", "rotate", "width", "height", "border_radius"}
    ),
}

COLOR_PROPERTIES = frozenset({"color", "background_color"})


def range_for(target: FaceElement, prop: str) -> tuple[float, float] | None:
    """Numeric range for a (target, property) pair; None for non-numeric DoF."""
    if target in EYES:
        return EYE_RANGES.get(prop)
    if target in UPPER_EYELIDS:
        return UPPER_EYELID_RANGES.get(prop)
    if target in LOWER_EYELIDS:
        return LOWER_EYELID_RANGES.get(prop)
    if target is FaceElement.MOUTH:
        return MOUTH_RANGES.get(prop)
    return None


@dataclass(frozen=True)
class EyeState:
    color: str = "#000000"
    translate_x: float = 0.0
    translate_y: float = 0.0
    scale_x: float = 1.0
    scale_y: float = 1.0
    border_radius: BorderRadius = field(default_factory=lambda: BorderRadius.uniform(50.0))

    def __post_init__(self) -> None:
        object.__setattr__(self, "color", parse_color(self.color))
        if isinstance(self.border_radius, str):
            object.__setattr__(self, "border_radius", BorderRadius.parse(self.border_radius))
        for name in ("translate_x", "translate_y", "scale_x", "scale_y"):
            object.__setattr__(self, name, quantize(getattr(self, name)))


@dataclass(frozen=True)
class EyelidState:
    color: str = "#F5F5F5"
    translate_y: float = 0.0
    rotate: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "color", parse_color(self.color))
        object.__setattr__(self, "translate_y", quantize(self.translate_y))
        object.__setattr__(self, "rotate", quantize(self.rotate))


@dataclass(frozen=True)
class MouthState:
    color: str = "#FFC0CB"
    translate_x: float = 0.0
    translate_y: float = 0.0
    rotate: float = 0.0
    width: float = 10.0
    height: float = 4.0
    border_radius: BorderRadius = field(default_factory=lambda: BorderRadius.uniform(30.0))

    def __post_init__(self) -> None:
        object.__setattr__(self, "color", parse_color(self.color))
        if isinstance(self.border_radius, str):
            object.__setattr__(self, "border_radius", BorderRadius.parse(self.border_radius))
        for name in ("translate_x", "translate_y", "rotate", "width", "height"):
            object.__setattr__(self, name, quantize(getattr(self, name)))


@dataclass(frozen=True)
class FaceState:
    """Complete snapshot of the face. Construction enforces all invariants."""

    background_color: str = "#F5F5F5"
    left_eye: EyeState = field(default_factory=EyeState)
    right_eye: EyeState = field(default_factory=EyeState)
    upper_left_eyelid: EyelidState = field(default_factory=EyelidState)
    upper_right_eyelid: EyelidState = field(default_factory=EyelidState)
    lower_left_eyelid: EyelidState = field(default_factory=EyelidState)
    lower_right_eyelid: EyelidState = field(default_factory=EyelidState)
    mouth: MouthState = field(default_factory=MouthState)

    def __post_init__(self) -> None:
        object.__setattr__(self, "background_color", parse_color(self.background_color))
        violations = check_state_values(state_to_obj(self))
        if violations:
            raise InvariantError(violations)

    def eyelid(self, element: FaceElement) -> EyelidState:
        if element not in EYELIDS:
            raise ValueError(f"{element.value} is not an eyelid")
        return getattr(self, element.value)

    def eye(self, element: FaceElement) -> EyeState:
        if element not in EYES:
            raise ValueError(f"{element.value} is not an eye")
        return getattr(self, element.value)


def _in_range(value: float, lo: float, hi: float) -> bool:
    return lo <= value <= hi


def check_state_values(obj: Mapping[str, Any]) -> list[str]:
    """Invariant check over a plain state object (same shape as the JSON form).

    Returns human-readable violations; empty list means the state is legal.
    Works on raw dicts so the validator can inspect hypothetical post-states
    that may be illegal without constructing a FaceState.
    """
    problems: list[str] = []
    background = obj["background_color"]

    for name in ("left_eye", "right_eye"):
        eye = obj[name]
        if eye["color"] == background:
            problems.append(f"{name}.color matches background color")
        for prop, (lo, hi) in EYE_RANGES.items():
            if not _in_range(eye[prop], lo, hi):
                problems.append(f"{name}.{prop}={eye[prop]} outside [{lo}, {hi}]")
        problems.extend(_check_border_radius(name, eye["border_radius"]))

    for name in ("upper_left_eyelid", "upper_right_eyelid"):
        problems.extend(_check_eyelid(obj[name], name, UPPER_EYELID_RANGES, background))
    for name in ("lower_left_eyelid", "lower_right_eyelid"):
        problems.extend(_check_eyelid(obj[name], name, LOWER_EYELID_RANGES, background))

    mouth = obj["mouth"]
    if mouth["color"] == background:
        problems.append("mouth.color matches background color")
    for prop, (lo, hi) in MOUTH_RANGES.items():
        if not _in_range(mouth[prop], lo, hi):
            problems.append(f"mouth.{prop}={mouth[prop]} outside [{lo}, {hi}]")
    for prop in ("width", "height"):
        if mouth[prop] <= 0:
            problems.append(f"mouth.{prop}={mouth[prop]} must be positive")
    problems.extend(_check_border_radius("mouth", mouth["border_radius"]))
    return problems


def _check_eyelid(
    lid: Mapping[str, Any], name: str, ranges: dict[str, tuple[float, float]], background: str
) -> list[str]:
    problems = []
    if lid["color"] != background:
        problems.append(f"{name}.color does not match background color")
    for prop, (lo, hi) in ranges.items():
        if not _in_range(lid[prop], lo, hi):
            problems.append(f"{name}.{prop}={lid[prop]} outside [{lo}, {hi}]")
    return problems


def _check_border_radius(owner: str, text: str) -> list[str]:
    try:
        radius = BorderRadius.parse(text)
    except ValueError as exc:
        return [f"{owner}.border_radius: {exc}"]
    lo, hi = BORDER_RADIUS_RANGE
    return [
        f"{owner}.border_radius corner {c} outside [{lo}, {hi}]"
        for c in radius.corners
        if not _in_range(c, lo, hi)
    ]


@dataclass(frozen=True)
class Track:
    """One element's synchronized property changes within a program."""

    target: FaceElement
    properties: Mapping[str, Any]
    duration_ms: int = 1000
    easing: Easing = DEFAULT_EASING
    offset_ms: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "properties", dict(self.properties))


@dataclass(frozen=True)
class FaceProgram:
    """A declarative, synchronized animation program.

    There is deliberately no looping construct in this schema, and offsets
    are expected to be zero (checked by the validator, not here).
    """

    tracks: tuple[Track, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "tracks", tuple(self.tracks))

    def items(self) -> Iterator[tuple[FaceElement, str, Any, Track]]:
        for track in self.tracks:
            for prop, value in track.properties.items():
                yield track.target, prop, value, track

    def assignments(self) -> dict[tuple[FaceElement, str], Any]:
        return {(target, prop): value for target, prop, value, _ in self.items()}

    @property
    def is_empty(self) -> bool:
        return not any(track.properties for track in self.tracks)


def neutral_face() -> FaceState:
    """The default face: black round eyes, whitesmoke background, pink mouth."""
    return FaceState()


def apply_program(state: FaceState, program: FaceProgram) -> FaceState:
    """End state of running a program from `state`.

    Every (target, property) in the program is set to its target value,
    untouched DoF carry over, and eyelid colors not explicitly set are
    re-coupled to the background whenever the background changes. Raises
    InvariantError when the result would be illegal; unreachable for
    programs the validator accepted.
    """
    obj = state_to_obj(state)
    explicit_lid_colors = set()
    for target, prop, value, _track in program.items():
        if target is FaceElement.FACE_BACKGROUND:
            obj["background_color"] = parse_color(value)
        elif prop == "border_radius":
            radius = value if isinstance(value, BorderRadius) else BorderRadius.parse(value)
            obj[target.value][prop] = str(radius)
        elif prop == "color":
            obj[target.value][prop] = parse_color(value)
            if target in EYELIDS:
                explicit_lid_colors.add(target)
        else:
            obj[target.value][prop] = quantize(value)

    background = obj["background_color"]
    for lid in EYELIDS:
        if lid not in explicit_lid_colors:
            obj[lid.value]["color"] = background

    return state_from_obj(obj)


def face_fingerprint(state: FaceState) -> str:
    """Deterministic hash identifying a face up to color case and 2-decimal DoF."""
    canonical = json.dumps(state_to_obj(state), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def dof_names() -> list[str]:
    """Enumerate the face's degrees of freedom as dotted names."""
    names = ["background_color"]
    for eye in EYES:
        for prop in ("color", "translate_x", "translate_y", "scale_x", "scale_y", "border_radius"):
            names.append(f"{eye.value}.{prop}")
    for lid in EYELIDS:
        for prop in ("translate_y", "rotate"):
            names.append(f"{lid.value}.{prop}")
    for prop in ("color", "translate_x", "translate_y", "rotate", "width", "height", "border_radius"):
        names.append(f"mouth.{prop}")
    return names


# --- canonical JSON forms ---------------------------------------------------


def state_to_obj(state: FaceState) -> dict[str, Any]:
    obj: dict[str, Any] = {"background_color": state.background_color}
    for name in ("left_eye", "right_eye"):
        eye: EyeState = getattr(state, name)
        obj[name] = {
            "color": eye.color,
            "translate_x": eye.translate_x,
            "translate_y": eye.translate_y,
            "scale_x": eye.scale_x,
            "scale_y": eye.scale_y,
            "border_radius": str(eye.border_radius),
        }
    for name in (
        "upper_left_eyelid",
        "upper_right_eyelid",
        "lower_left_eyelid",
        "lower_right_eyelid",
    ):
        lid: EyelidState = getattr(state, name)
        obj[name] = {"color": lid.color, "translate_y": lid.translate_y, "rotate": lid.rotate}
    obj["mouth"] = {
        "color": state.mouth.color,
        "translate_x": state.mouth.translate_x,
        "translate_y": state.mouth.translate_y,
        "rotate": state.mouth.rotate,
        "width": state.mouth.width,
        "height": state.mouth.height,
        "border_radius": str(state.mouth.border_radius),
    }
    return obj


_EYE_FIELDS = {"color", "translate_x", "translate_y", "scale_x", "scale_y", "border_radius"}
_EYELID_FIELDS = {"color", "translate_y", "rotate"}
_MOUTH_FIELDS = {"color", "translate_x", "translate_y", "rotate", "width", "height", "border_radius"}


def state_from_obj(obj: Mapping[str, Any]) -> FaceState:
    """Build a FaceState from its JSON form. Raises InvariantError / ValueError."""
    expected = {f.name for f in fields(FaceState)}
    unknown = set(obj) - expected
    if unknown:
        raise ValueError(f"unknown face state fields: {sorted(unknown)}")
    missing = expected - set(obj)
    if missing:
        raise ValueError(f"missing face state fields: {sorted(missing)}")

    def sub(name: str, allowed: set[str]) -> dict[str, Any]:
        part = dict(obj[name])
        bad = set(part) - allowed
        if bad:
            raise ValueError(f"unknown fields in {name}: {sorted(bad)}")
        if "border_radius" in part:
            part["border_radius"] = BorderRadius.parse(part["border_radius"])
        return part

    return FaceState(
        background_color=obj["background_color"],
        left_eye=EyeState(**sub("left_eye", _EYE_FIELDS)),
        right_eye=EyeState(**sub("right_eye", _EYE_FIELDS)),
        upper_left_eyelid=EyelidState(**sub("upper_left_eyelid", _EYELID_FIELDS)),
        upper_right_eyelid=EyelidState(**sub("upper_right_eyelid", _EYELID_FIELDS)),
        lower_left_eyelid=EyelidState(**sub("lower_left_eyelid", _EYELID_FIELDS)),
        lower_right_eyelid=EyelidState(**sub("lower_right_eyelid", _EYELID_FIELDS)),
        mouth=MouthState(**sub("mouth", _MOUTH_FIELDS)),
    )


def state_to_json(state: FaceState) -> str:
    return json.dumps(state_to_obj(state), indent=2)


def state_from_json(text: str) -> FaceState:
    return state_from_obj(json.loads(text))


def _value_to_obj(value: Any) -> Any:
    if isinstance(value, BorderRadius):
        return str(value)
    return value


def program_to_obj(program: FaceProgram) -> dict[str, Any]:
    return {
        "tracks": [
            {
                "target": track.target.value,
                "properties": {k: _value_to_obj(v) for k, v in track.properties.items()},
                "duration_ms": track.duration_ms,
                "easing": track.easing.value,
                "offset_ms": track.offset_ms,
            }
            for track in program.tracks
        ]
    }


def program_to_json(program: FaceProgram) -> str:
    return json.dumps(program_to_obj(program), indent=2)
