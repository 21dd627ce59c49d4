"""Parsing, validation, normalization, and compilation of face programs.

This is the gate that makes "every emitted program runs" a checkable
guarantee: nothing reaches the renderer without passing through it.

Layering:

    parse_program   grammar and typing (unknown fields/targets/properties,
                    duplicate assignments, value syntax) -> FaceProgram
    normalize       inserts the eyelid color tracks implied by a background
                    change; idempotent, touches nothing else
    validate        semantic rules against the current face state; returns
                    a report instead of raising
    compile_program validated program -> ordered renderer command batch

Rule ids in diagnostics:

    R1      color coupling: eyelids must match the (post-state) background,
            eye and mouth colors must never match it
    R2      eyelid direction: upper eyelids only move down [0, 50], lower
            only up [-50, 0]
    R5      synchrony: every track starts at offset 0
    range   any other DoF outside its legal range
    style   non-blocking style warnings (e.g. duration > 5000 ms)

There is no looping rule to check at validation time: the schema has no
loop field, so a looping payload already fails at parse.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Mapping

from . import face
from .errors import XpressError
from .face import (
    BORDER_RADIUS_RANGE,
    COLOR_PROPERTIES,
    ELEMENT_PROPERTIES,
    EYELIDS,
    BorderRadius,
    Easing,
    FaceElement,
    FaceProgram,
    FaceState,
    Track,
    parse_color,
    quantize,
    range_for,
)

STYLE_MAX_DURATION_MS = 5000


class ProgramParseError(XpressError):
    """Payload is not a grammatical face program."""

    def __init__(self, message: str, *, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)


class UnknownTargetError(ProgramParseError):
    pass


class UnknownPropertyError(ProgramParseError):
    pass


class NotValidatedError(XpressError):
    """compile_program was handed a program that does not validate."""

    def __init__(self, report: "ValidationReport"):
        self.report = report
        errors = "; ".join(d.message for d in report.diagnostics if d.severity == "error")
        super().__init__(f"program failed validation: {errors}")


@dataclass(frozen=True)
class Diagnostic:
    rule_id: str
    target: str
    property: str
    message: str
    severity: str  # "error" | "warning"


@dataclass(frozen=True)
class ValidationReport:
    diagnostics: tuple[Diagnostic, ...] = ()

    @property
    def ok(self) -> bool:
        return not any(d.severity == "error" for d in self.diagnostics)

    @property
    def errors(self) -> tuple[Diagnostic, ...]:
        return tuple(d for d in self.diagnostics if d.severity == "error")

    def to_obj(self) -> dict[str, Any]:
        return {
            "ok": self.ok,
            "diagnostics": [
                {
                    "rule_id": d.rule_id,
                    "target": d.target,
                    "property": d.property,
                    "message": d.message,
                    "severity": d.severity,
                }
                for d in self.diagnostics
            ],
        }


@dataclass(frozen=True)
class RendererCommand:
    target: FaceElement
    property: str
    value: Any
    duration_ms: int
    easing: Easing


@dataclass(frozen=True)
class RendererCommandBatch:
    batch_id: int
    commands: tuple[RendererCommand, ...] = ()

    def to_obj(self) -> dict[str, Any]:
        return {
            "batch_id": self.batch_id,
            "commands": [
                {
                    "target": c.target.value,
                    "property": c.property,
                    "value": c.value,
                    "duration_ms": c.duration_ms,
                    "easing": c.easing.value,
                }
                for c in self.commands
            ],
        }


_TRACK_FIELDS = {"target", "properties", "duration_ms", "easing", "offset_ms"}


def parse_program(payload: str | Mapping[str, Any]) -> FaceProgram:
    """Parse a JSON payload into a FaceProgram, rejecting anything off-schema.

    Unknown fields are errors by design: a `loop` flag, a misspelled
    property, or a duplicated (target, property) assignment all point at
    generation bugs that silent tolerance would hide.
    """
    if isinstance(payload, str):
        try:
            obj = json.loads(payload)
        except json.JSONDecodeError as exc:
            raise ProgramParseError(
                f"invalid JSON: {exc.msg}", line=exc.lineno, column=exc.colno
            ) from exc
    else:
        obj = payload

    if not isinstance(obj, Mapping):
        raise ProgramParseError(f"program must be an object, got {type(obj).__name__}")
    unknown = set(obj) - {"tracks"}
    if unknown:
        raise ProgramParseError(f"unknown program fields: {sorted(unknown)}")
    if "tracks" not in obj:
        raise ProgramParseError("program is missing 'tracks'")
    raw_tracks = obj["tracks"]
    if not isinstance(raw_tracks, list):
        raise ProgramParseError("'tracks' must be a list")

    tracks: list[Track] = []
    seen: set[tuple[FaceElement, str]] = set()
    for i, raw in enumerate(raw_tracks):
        tracks.append(_parse_track(raw, i, seen))
    return FaceProgram(tuple(tracks))


def _parse_track(raw: Any, index: int, seen: set[tuple[FaceElement, str]]) -> Track:
    where = f"tracks[{index}]"
    if not isinstance(raw, Mapping):
        raise ProgramParseError(f"{where} must be an object")
    unknown = set(raw) - _TRACK_FIELDS
    if unknown:
        raise ProgramParseError(f"{where} has unknown fields: {sorted(unknown)}")
    if "target" not in raw or "properties" not in raw:
        raise ProgramParseError(f"{where} needs 'target' and 'properties'")

    try:
        target = FaceElement(raw["target"])
    except ValueError:
        raise UnknownTargetError(f"{where}: unknown target {raw['target']!r}") from None

    raw_props = raw["properties"]
    if not isinstance(raw_props, Mapping):
        raise ProgramParseError(f"{where}.properties must be an object")
    allowed = ELEMENT_PROPERTIES[target]
    properties: dict[str, Any] = {}
    for name, value in raw_props.items():
        if name not in allowed:
            raise UnknownPropertyError(
                f"{where}: {target.value} has no property {name!r}"
            )
        key = (target, name)
        if key in seen:
            raise ProgramParseError(
                f"{where}: duplicate assignment to {target.value}.{name}"
            )
        seen.add(key)
        properties[name] = _parse_value(target, name, value, where)

    duration_ms = raw.get("duration_ms", 1000)
    if isinstance(duration_ms, bool) or not isinstance(duration_ms, int) or duration_ms <= 0:
        raise ProgramParseError(f"{where}.duration_ms must be a positive integer")
    offset_ms = raw.get("offset_ms", 0)
    if isinstance(offset_ms, bool) or not isinstance(offset_ms, int):
        raise ProgramParseError(f"{where}.offset_ms must be an integer")
    easing_name = raw.get("easing", face.DEFAULT_EASING.value)
    try:
        easing = Easing(easing_name)
    except ValueError:
        valid = ", ".join(e.value for e in Easing)
        raise ProgramParseError(
            f"{where}: unknown easing {easing_name!r} (expected one of: {valid})"
        ) from None

    return Track(
        target=target,
        properties=properties,
        duration_ms=duration_ms,
        easing=easing,
        offset_ms=offset_ms,
    )


def _parse_value(target: FaceElement, name: str, value: Any, where: str) -> Any:
    if name in COLOR_PROPERTIES:
        try:
            return parse_color(value)
        except ValueError as exc:
            raise ProgramParseError(f"{where}: {target.value}.{name}: {exc}") from None
    if name == "border_radius":
        try:
            return BorderRadius.parse(value)
        except ValueError as exc:
            raise ProgramParseError(f"{where}: {target.value}.{name}: {exc}") from None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ProgramParseError(
            f"{where}: {target.value}.{name} must be a number, got {value!r}"
        )
    return quantize(value)


def validate(program: FaceProgram, current: FaceState) -> ValidationReport:
    """Check a parsed program against every rule, in the context of `current`.

    Color rules are evaluated against the post-state the program would
    produce: carried-over colors matter, which is why validation is
    stateful. No exception is raised; all findings land in the report.
    """
    diags: list[Diagnostic] = []

    for track in program.tracks:
        if track.offset_ms != 0:
            diags.append(
                Diagnostic(
                    rule_id="R5",
                    target=track.target.value,
                    property="",
                    message=f"track for {track.target.value} starts at offset "
                    f"{track.offset_ms} ms; all animations must start together",
                    severity="error",
                )
            )
        if track.duration_ms > STYLE_MAX_DURATION_MS:
            diags.append(
                Diagnostic(
                    rule_id="style",
                    target=track.target.value,
                    property="",
                    message=f"duration {track.duration_ms} ms is unusually long",
                    severity="warning",
                )
            )

    for target, prop, value, _track in program.items():
        diags.extend(_check_value(target, prop, value))

    diags.extend(_check_post_state_colors(program, current))
    return ValidationReport(tuple(diags))


def _check_value(target: FaceElement, prop: str, value: Any) -> list[Diagnostic]:
    diags: list[Diagnostic] = []
    if prop == "border_radius":
        if isinstance(value, str):
            value = BorderRadius.parse(value)
        lo, hi = BORDER_RADIUS_RANGE
        for corner in value.corners:
            if not lo <= corner <= hi:
                diags.append(
                    Diagnostic(
                        rule_id="range",
                        target=target.value,
                        property=prop,
                        message=f"{target.value}.border_radius corner {corner} "
                        f"outside [{lo}, {hi}]",
                        severity="error",
                    )
                )
        return diags
    if prop in COLOR_PROPERTIES:
        return diags

    bounds = range_for(target, prop)
    if bounds is None:
        return diags
    lo, hi = bounds
    in_range = lo <= value <= hi
    if target is FaceElement.MOUTH and prop in ("width", "height") and value <= 0:
        in_range = False
    if not in_range:
        rule = "R2" if target in EYELIDS and prop == "translate_y" else "range"
        hi_txt = f"({lo}, {hi}]" if prop in ("width", "height") else f"[{lo}, {hi}]"
        diags.append(
            Diagnostic(
                rule_id=rule,
                target=target.value,
                property=prop,
                message=f"{target.value}.{prop}={value} outside {hi_txt}",
                severity="error",
            )
        )
    return diags


def _check_post_state_colors(program: FaceProgram, current: FaceState) -> list[Diagnostic]:
    assignments = program.assignments()
    background = assignments.get((FaceElement.FACE_BACKGROUND, "background_color"))
    if background is None:
        background = current.background_color

    diags: list[Diagnostic] = []
    for lid in EYELIDS:
        color = assignments.get((lid, "color"), current.eyelid(lid).color)
        if color != background:
            diags.append(
                Diagnostic(
                    rule_id="R1",
                    target=lid.value,
                    property="color",
                    message=f"{lid.value} color {color} must match the face color "
                    f"{background}",
                    severity="error",
                )
            )
    for eye in face.EYES:
        color = assignments.get((eye, "color"), current.eye(eye).color)
        if color == background:
            diags.append(
                Diagnostic(
                    rule_id="R1",
                    target=eye.value,
                    property="color",
                    message=f"{eye.value} color must never match the face color",
                    severity="error",
                )
            )
    mouth_color = assignments.get((FaceElement.MOUTH, "color"), current.mouth.color)
    if mouth_color == background:
        diags.append(
            Diagnostic(
                rule_id="R1",
                target=FaceElement.MOUTH.value,
                property="color",
                message="mouth color must never match the face color",
                severity="error",
            )
        )
    return diags


def normalize(program: FaceProgram, current: FaceState) -> FaceProgram:
    """Insert the four eyelid color tracks a background change implies.

    Only fires when the program sets the background and leaves an eyelid
    color unspecified; existing tracks are never modified, so the result
    is idempotent under normalize. Colors of elements the program does not
    touch are deliberately left alone: forced resets would break smooth
    transitions between consecutive programs.
    """
    bg_track = next(
        (
            t
            for t in program.tracks
            if t.target is FaceElement.FACE_BACKGROUND and "background_color" in t.properties
        ),
        None,
    )
    if bg_track is None:
        return program
    background = bg_track.properties["background_color"]
    assigned = program.assignments()
    extra = [
        Track(
            target=lid,
            properties={"color": background},
            duration_ms=bg_track.duration_ms,
            easing=bg_track.easing,
            offset_ms=bg_track.offset_ms,
        )
        for lid in EYELIDS
        if (lid, "color") not in assigned
    ]
    if not extra:
        return program
    return FaceProgram(program.tracks + tuple(extra))


def compile_program(
    program: FaceProgram, batch_id: int, current: FaceState
) -> RendererCommandBatch:
    """Lower a validated program to one renderer command per (target, property).

    Command order is deterministic: elements in face order, then property
    names alphabetically. Raises NotValidatedError if the program does not
    validate against `current`.
    """
    report = validate(program, current)
    if not report.ok:
        raise NotValidatedError(report)

    by_target: dict[FaceElement, list[RendererCommand]] = {}
    for track in program.tracks:
        for prop in sorted(track.properties):
            value = track.properties[prop]
            if isinstance(value, BorderRadius):
                value = str(value)
            by_target.setdefault(track.target, []).append(
                RendererCommand(
                    target=track.target,
                    property=prop,
                    value=value,
                    duration_ms=track.duration_ms,
                    easing=track.easing,
                )
            )
    commands: list[RendererCommand] = []
    for element in FaceElement:
        commands.extend(sorted(by_target.get(element, []), key=lambda c: c.property))
    return RendererCommandBatch(batch_id=batch_id, commands=tuple(commands))


def batch_from_obj(obj: Mapping[str, Any]) -> RendererCommandBatch:
    commands = tuple(
        RendererCommand(
            target=FaceElement(c["target"]),
            property=c["property"],
            value=c["value"],
            duration_ms=c["duration_ms"],
            easing=Easing(c["easing"]),
        )
        for c in obj["commands"]
    )
    return RendererCommandBatch(batch_id=obj["batch_id"], commands=commands)


def batch_to_program(batch: RendererCommandBatch) -> FaceProgram:
    """Reconstruct the per-(target, property) program a batch encodes.

    Used for shadow-state bookkeeping: applying the reconstructed program
    reproduces exactly what the renderer will display once the batch
    finishes animating.
    """
    grouped: dict[tuple[FaceElement, int, Easing], dict[str, Any]] = {}
    for c in batch.commands:
        value = c.value
        if c.property == "border_radius":
            value = BorderRadius.parse(value)
        grouped.setdefault((c.target, c.duration_ms, c.easing), {})[c.property] = value
    tracks = tuple(
        Track(target=target, properties=props, duration_ms=duration, easing=easing)
        for (target, duration, easing), props in grouped.items()
    )
    return FaceProgram(tracks)
