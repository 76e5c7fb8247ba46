"""Command-line front end: train, sample, inpaint, long, eval, serve.

Exit codes: 1 usage, 2 bad config, 3 runtime failure.
"""
from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click

from .chords import parse_chord_seq
from .conditioning import condition_tokens, fit_encoders
from .masks import MaskSpec, make_mask
from .midi import parse_midi
from .pianoroll import (STEPS_PER_BAR, PianoRoll, midi_to_roll, notes_to_roll,
                        quantize_song, roll_to_json, roll_to_midi)
from .samplers import GuidanceConfig, SampleRequest, generate_long, inpaint, sample_roll
from .trainer import TrainConfig, load_checkpoint, prepare_dataset, save_checkpoint, train


class ConfigError(Exception):
    pass


def _read_json(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def _load_ckpt(path: str):
    ckpt = load_checkpoint(path)
    return ckpt, ckpt.build_denoiser()


def _guidance(ckpt, scale: float, chords: str | None, texture_midi: str | None):
    cond = None
    mode = ckpt.condition_mode
    if chords is not None:
        if mode not in ("chord", "chord_raw36"):
            raise ConfigError(f"checkpoint mode is {mode!r}; --chords not accepted")
        cond = condition_tokens(mode, ckpt.encoders, chords=parse_chord_seq(chords))
    elif texture_midi is not None:
        if mode not in ("texture", "texture_raw"):
            raise ConfigError(f"checkpoint mode is {mode!r}; --texture-midi not accepted")
        roll = midi_to_roll(Path(texture_midi).read_bytes())[0][0]
        cond = condition_tokens(mode, ckpt.encoders, roll=roll)
    elif mode != "none":
        raise ConfigError(f"checkpoint mode {mode!r} requires a condition")
    return GuidanceConfig(scale=scale, cond=cond)


@click.group()
def cli():
    """Piano-roll diffusion: training, generation, inpainting, evaluation."""


@cli.command("train")
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True))
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--golden-seed", type=int, default=None, help="store a golden sample hash")
def train_cmd(data_dir, config_path, out_path, golden_seed):
    """Train a denoiser on a MIDI corpus."""
    config = TrainConfig.from_json(_read_json(config_path))
    split = prepare_dataset(data_dir, config)
    encoders = None
    if config.condition_mode in ("chord", "texture"):
        click.echo("fitting condition encoders...")
        encoders = fit_encoders([seg.roll for seg in split.train])
    click.echo(f"training on {len(split.train)} segments "
               f"({len(split.val)} validation), mode={config.condition_mode}")
    ckpt = train(split, config, encoders)
    save_checkpoint(ckpt, out_path, golden_seed=golden_seed)
    final = ckpt.curve["train"][-1][1] if ckpt.curve.get("train") else float("nan")
    click.echo(f"saved {out_path} (final train loss {final:.4f})")


@cli.command("sample")
@click.option("--ckpt", required=True, type=click.Path(exists=True))
@click.option("--n", "count", default=1, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--scale", default=1.0, show_default=True, help="guidance scale")
@click.option("--chords", default=None, help='e.g. "C:maj*16,G:maj*16"')
@click.option("--texture-midi", default=None, type=click.Path(exists=True))
def sample_cmd(ckpt, count, seed, out_dir, scale, chords, texture_midi):
    """Sample piano rolls; writes NNN.mid and NNN.json per sample."""
    checkpoint, model = _load_ckpt(ckpt)
    guidance = _guidance(checkpoint, scale, chords, texture_midi)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    total_dropped = 0
    for i in range(count):
        roll = sample_roll(model, checkpoint.schedule,
                           SampleRequest(seed=seed + i, guidance=guidance,
                                         clip_range=(0.0, 1.0)))
        midi_bytes, dropped = roll_to_midi(roll)
        total_dropped += dropped
        (out / f"{i:03d}.mid").write_bytes(midi_bytes)
        (out / f"{i:03d}.json").write_text(json.dumps(roll_to_json(roll)))
    click.echo(f"wrote {count} samples to {out} "
               f"(dropped sustain runs: {total_dropped})")


@cli.command("inpaint")
@click.option("--ckpt", required=True, type=click.Path(exists=True))
@click.option("--midi", "midi_path", required=True, type=click.Path(exists=True))
@click.option("--mask", "mask_json", required=True, help="MaskSpec JSON")
@click.option("--seed", default=0, show_default=True)
@click.option("--scale", default=1.0, show_default=True)
@click.option("--chords", default=None)
@click.option("--out", "out_path", required=True, type=click.Path())
def inpaint_cmd(ckpt, midi_path, mask_json, seed, scale, chords, out_path):
    """Regenerate the masked region of a MIDI segment."""
    checkpoint, model = _load_ckpt(ckpt)
    guidance = _guidance(checkpoint, scale, chords, None)
    try:
        spec = MaskSpec.from_json(json.loads(mask_json))
    except (json.JSONDecodeError, ValueError, KeyError) as exc:
        raise ConfigError(f"bad mask spec: {exc}") from exc
    source = midi_to_roll(Path(midi_path).read_bytes())[0][0]
    mask = make_mask(spec, num_steps=source.num_steps, source=source)
    req = SampleRequest(shape=tuple(source.data.shape), seed=seed, guidance=guidance,
                        clip_range=(0.0, 1.0))
    result = inpaint(model, checkpoint.schedule, source, mask, req)
    midi_bytes, dropped = roll_to_midi(result)
    Path(out_path).write_bytes(midi_bytes)
    click.echo(f"wrote {out_path} (dropped sustain runs: {dropped})")


@cli.command("long")
@click.option("--ckpt", required=True, type=click.Path(exists=True))
@click.option("--midi", "midi_path", required=True, type=click.Path(exists=True))
@click.option("--iterations", default=5, show_default=True)
@click.option("--overlap-bars", default=4, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
def long_cmd(ckpt, midi_path, iterations, overlap_bars, seed, out_path):
    """Iteratively extend a short prompt into a long piece."""
    checkpoint, model = _load_ckpt(ckpt)
    notes, _ = quantize_song(parse_midi(Path(midi_path).read_bytes()))
    prompt = notes_to_roll(notes, num_steps=overlap_bars * STEPS_PER_BAR)
    result = generate_long(model, checkpoint.schedule, prompt,
                           iterations=iterations, seed=seed,
                           overlap_bars=overlap_bars, clip_range=(0.0, 1.0))
    midi_bytes, dropped = roll_to_midi(result)
    Path(out_path).write_bytes(midi_bytes)
    bars = result.data.shape[1] // STEPS_PER_BAR
    click.echo(f"wrote {out_path}: {bars} bars (dropped sustain runs: {dropped})")


@cli.command("eval")
@click.option("--gen", "gen_dir", required=True, type=click.Path(exists=True))
@click.option("--ref", "ref_dir", required=True, type=click.Path(exists=True))
@click.option("--mode", default="uncond", show_default=True)
@click.option("--json-out", default=None, type=click.Path())
def eval_cmd(gen_dir, ref_dir, mode, json_out):
    """Score generated rolls against reference segments."""
    from .metrics import evaluate
    report = evaluate(gen_dir, ref_dir, mode)
    click.echo(report.to_table())
    if json_out:
        Path(json_out).write_text(json.dumps(report.to_json(), indent=2))


@cli.command("serve")
@click.option("--port", default=None, type=int)
@click.option("--data", "data_dir", default=None, type=click.Path())
@click.option("--workers", default=None, type=int)
@click.option("--config", "config_path", default=None, type=click.Path(exists=True))
def serve_cmd(port, data_dir, workers, config_path):
    """Start the HTTP gateway."""
    import uvicorn

    from .service import create_app
    settings = _read_json(config_path) if config_path else {}
    # precedence: config file > env > defaults; flags override everything
    port = port or settings.get("port") or int(os.environ.get("ROLLFORGE_PORT", 8080))
    data_dir = data_dir or settings.get("data_dir") or os.environ.get("ROLLFORGE_DATA_DIR")
    workers = workers or settings.get("workers")
    app = create_app(data_dir=data_dir, workers=workers)
    uvicorn.run(app, host="127.0.0.1", port=port)


def main():
    try:
        cli.main(standalone_mode=False)
    except click.UsageError as exc:
        exc.show()
        sys.exit(1)
    except click.Abort:
        sys.exit(1)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(2)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
        sys.exit(3)


if __name__ == "__main__":
    main()
