"""Command-line interface: validation, generation, playback, serving."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import __version__
from .errors import XpressError
from .face import neutral_face, state_from_json
from .gateway import LmProvider, ScriptedStub, TemplateLibrary, http_chat_provider
from .pipeline import StorytellingPipeline
from .scheduler import RealClock, SimulatedClock, play_story
from .server import ServerConfig, serve
from .session import ConversationEngine, EndOfSpeech, SpeechWords, run_conversation
from .synthesis import ExpressionBank, StoryTrajectory, build_expression_bank, generate_story
from .validator import ProgramParseError, parse_program, validate


def _provider_options(fn):
    fn = click.option(
        "--provider",
        type=click.Choice(["http", "stub"]),
        default="stub",
        show_default=True,
        help="Language-model provider backing the generation.",
    )(fn)
    fn = click.option("--endpoint", help="Chat-completions URL for --provider http.")(fn)
    fn = click.option("--model", help="Model name for --provider http.")(fn)
    fn = click.option(
        "--stub-script",
        type=click.Path(exists=True, path_type=Path),
        help="Scripted responses file for --provider stub.",
    )(fn)
    return fn


def _build_provider(provider: str, endpoint: str | None, model: str | None, stub_script: Path | None) -> LmProvider:
    if provider == "http":
        if not endpoint or not model:
            raise click.UsageError("--provider http needs --endpoint and --model")
        return http_chat_provider(endpoint, model)
    if stub_script is not None:
        script = json.loads(stub_script.read_text(encoding="utf-8"))
        return ScriptedStub.from_script(script)
    return ScriptedStub()


def _templates(template_dir: Path | None) -> TemplateLibrary:
    return TemplateLibrary(template_dir)


@click.group()
@click.version_option(__version__)
def main() -> None:
    """Generate, validate, and play robot facial-expression trajectories."""


@main.command("validate")
@click.argument("file", type=click.Path(exists=True, path_type=Path))
@click.option("--state", "state_file", type=click.Path(exists=True, path_type=Path),
              help="Face state JSON to validate against (default: the neutral face).")
@click.option("--report", "report_format", type=click.Choice(["text", "json"]), default="text",
              show_default=True)
def validate_cmd(file: Path, state_file: Path | None, report_format: str) -> None:
    """Validate a face program file; exit 0 when it is clean."""
    current = state_from_json(state_file.read_text()) if state_file else neutral_face()
    try:
        program = parse_program(file.read_text(encoding="utf-8"))
    except ProgramParseError as exc:
        report_obj = {
            "ok": False,
            "diagnostics": [
                {
                    "rule_id": "parse",
                    "target": "",
                    "property": "",
                    "message": str(exc),
                    "severity": "error",
                }
            ],
        }
        _print_report(report_obj, report_format)
        sys.exit(1)
    report = validate(program, current)
    _print_report(report.to_obj(), report_format)
    sys.exit(0 if report.ok else 1)


def _print_report(report_obj: dict, report_format: str) -> None:
    if report_format == "json":
        click.echo(json.dumps(report_obj, indent=2))
        return
    status = "ok" if report_obj["ok"] else "INVALID"
    click.echo(f"program: {status}")
    for diag in report_obj["diagnostics"]:
        click.echo(f"  [{diag['severity']}] {diag['rule_id']}: {diag['message']}")


@main.command("story")
@click.option("--genre", required=True)
@click.option("--out", type=click.Path(path_type=Path), required=True)
@click.option("--template-dir", type=click.Path(exists=True, path_type=Path))
@_provider_options
def story_cmd(genre: str, out: Path, template_dir: Path | None, provider: str,
              endpoint: str | None, model: str | None, stub_script: Path | None) -> None:
    """Generate a ~500-word oral story for GENRE."""
    lm = _build_provider(provider, endpoint, model, stub_script)
    story = generate_story(genre, lm, templates=_templates(template_dir))
    out.write_text(json.dumps(story, indent=2), encoding="utf-8")
    click.echo(f"wrote {out} ({len(story['story_content'].split())} words)")


@main.command("bank")
@click.option("--out", type=click.Path(path_type=Path), required=True)
@click.option("--seed-note", default="", help="Flavor note included in the generation prompts.")
@click.option("--template-dir", type=click.Path(exists=True, path_type=Path))
@click.option("--workers", default=4, show_default=True)
@_provider_options
def bank_cmd(out: Path, seed_note: str, template_dir: Path | None, workers: int, provider: str,
             endpoint: str | None, model: str | None, stub_script: Path | None) -> None:
    """Pre-generate a full expression bank (24 programs + neutral)."""
    lm = _build_provider(provider, endpoint, model, stub_script)
    bank = build_expression_bank(
        lm, seed_note, templates=_templates(template_dir), max_workers=workers
    )
    out.write_text(json.dumps(bank.to_obj(), indent=2), encoding="utf-8")
    click.echo(f"wrote {out} ({bank.bank_id}: {len(bank.entries)} programs + neutral)")


@main.command("trajectory")
@click.option("--story", "story_file", type=click.Path(exists=True, path_type=Path), required=True,
              help="Story JSON produced by `xpress story`.")
@click.option("--out", type=click.Path(path_type=Path), required=True)
@click.option("--template-dir", type=click.Path(exists=True, path_type=Path))
@click.option("--wpm", default=150.0, show_default=True, help="Narration speed for the fake TTS.")
@_provider_options
def trajectory_cmd(story_file: Path, out: Path, template_dir: Path | None, wpm: float,
                   provider: str, endpoint: str | None, model: str | None,
                   stub_script: Path | None) -> None:
    """Run the full storytelling pipeline: story file -> .xpress.json trajectory."""
    story = json.loads(story_file.read_text(encoding="utf-8"))
    lm = _build_provider(provider, endpoint, model, stub_script)
    pipeline = StorytellingPipeline(
        lm=lm, templates=_templates(template_dir), words_per_minute=wpm
    )
    trajectory = pipeline.trajectory_from_story(story["story_title"], story["story_content"])
    out.write_text(trajectory.to_json(), encoding="utf-8")
    click.echo(
        f"wrote {out} ({trajectory.story_title!r}: {len(trajectory.expressions)} expressions)"
    )


@main.command("play")
@click.option("--trajectory", "trajectory_file", type=click.Path(exists=True, path_type=Path),
              required=True)
@click.option("--simulated", is_flag=True, help="Run on a simulated clock (instant).")
def play_cmd(trajectory_file: Path, simulated: bool) -> None:
    """Headless playback: prints the emit log instead of driving a renderer."""
    trajectory = StoryTrajectory.from_json(trajectory_file.read_text(encoding="utf-8"))
    clock = SimulatedClock() if simulated else RealClock()

    def sink(message) -> None:
        if message.kind == "apply_batch":
            commands = len(message.body["batch"]["commands"])
            click.echo(f"[{message.seq:03d}] apply_batch #{message.body['batch']['batch_id']} "
                       f"({commands} commands)")
        else:
            click.echo(f"[{message.seq:03d}] {message.kind}")

    report = play_story(trajectory, clock, sink)
    for emit in report.emits:
        click.echo(
            f"expression {emit.index}: scheduled {emit.scheduled_s:.3f}s "
            f"actual {emit.actual_s:.3f}s (error {abs(emit.actual_s - emit.scheduled_s) * 1000:.1f} ms)"
        )
    click.echo(f"max timing error: {report.max_error_s * 1000:.1f} ms")


@main.command("converse")
@click.option("--trace", "trace_file", type=click.Path(exists=True, path_type=Path), required=True,
              help="Timed event trace with optional scripted LM responses.")
@click.option("--bank", "bank_file", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--template-dir", type=click.Path(exists=True, path_type=Path))
@_provider_options
def converse_cmd(trace_file: Path, bank_file: Path, template_dir: Path | None, provider: str,
                 endpoint: str | None, model: str | None, stub_script: Path | None) -> None:
    """Offline conversation simulation: prints the expression timeline."""
    trace = json.loads(trace_file.read_text(encoding="utf-8"))
    bank = ExpressionBank.from_obj(json.loads(bank_file.read_text(encoding="utf-8")))
    if stub_script is None and provider == "stub" and trace.get("lm_script"):
        lm: LmProvider = ScriptedStub.from_script(trace["lm_script"])
    else:
        lm = _build_provider(provider, endpoint, model, stub_script)

    events = []
    for item in trace["events"]:
        if item["type"] == "words":
            events.append(SpeechWords(t=float(item["t"]), words=tuple(item["words"])))
        elif item["type"] == "end_of_speech":
            events.append(EndOfSpeech(t=float(item["t"])))
        else:
            raise click.UsageError(f"unknown trace event type {item['type']!r}")

    engine = ConversationEngine(bank, lm, templates=_templates(template_dir))
    report = run_conversation(engine, events)
    click.echo("expression timeline:")
    click.echo("  0.00s neutral (initial)")
    for change in report.timeline:
        click.echo(
            f"  {change.t:.2f}s {change.emotion.value}-{change.intensity.value} ({change.origin})"
        )
    click.echo(f"sequence: {' -> '.join(report.expression_sequence())}")
    click.echo(f"ended: {report.ended}")


@main.command("serve")
@click.option("--config", "config_file", type=click.Path(exists=True, path_type=Path),
              required=True)
def serve_cmd(config_file: Path) -> None:
    """Run the HTTP + websocket service."""
    config = ServerConfig.from_file(config_file)
    serve(config)


if __name__ == "__main__":
    main()
