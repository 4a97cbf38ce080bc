"""Command-line interface.

Subcommands: synth, train, eval, score, inspect. Exit codes: 0 success,
2 usage/config, 3 IO, 4 numeric divergence, 5 file format or version.
Outputs are written to a temp file and renamed, so failures leave no
partial files behind.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .errors import (ConfigError, DivergenceError, FormatError, ManifestError,
                     SamplingError, ShapeError, SpecMismatchError, WindowError)
from .metrics import estimate_offset, metric_report, offset_scan, OffsetScan
from .registry import builtin_specs, get_spec
from .runconfig import build_train_config, canonical_dump, load_run_config
from .synth import synth_corpus
from .trackio import (MANIFEST_NAME, Track, load_manifest, read_tensor,
                      save_corpus, split_corpus)
from .train import (History, TrainConfig, model_from_checkpoint, save_history,
                    train)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_DIVERGED = 4
EXIT_FORMAT = 5


def _spec_names():
    return [s.name for s in builtin_specs()]


def build_parser():
    parser = argparse.ArgumentParser(
        prog="avsync",
        description="Audio-visual sync scoring: synthetic corpora, training, "
                    "evaluation, offset estimation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--speakers", type=int, default=4, help="number of speakers")
    p.add_argument("--tracks", type=int, default=4, help="tracks per speaker")
    p.add_argument("--frames", type=int, default=500, help="frames per track (25 fps)")
    p.add_argument("--visual", default="rgb", choices=[s for s in _spec_names() if get_spec(s).is_visual])
    p.add_argument("--audio", default="mel", choices=[s for s in _spec_names() if not get_spec(s).is_visual])
    p.add_argument("--noise", type=float, default=0.1, help="feature noise level")
    p.add_argument("--seed", type=int, default=0, help="generator seed")
    p.add_argument("--out", required=True, help="output corpus directory")

    p = sub.add_parser("train", help="train a sync model",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--corpus", required=True, help="training corpus directory or manifest")
    p.add_argument("--val-corpus", default=None,
                   help="validation corpus (default: hold out one track per speaker)")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--history", default=None, help="history JSON path (default <out>.history.json)")
    p.add_argument("--config", default=None, help="JSON run config file (flags win)")
    p.add_argument("--resume", default=None, help="checkpoint to resume from")
    p.add_argument("--epochs", type=int, default=None, help="training epochs")
    p.add_argument("--steps", type=int, default=None, help="steps per epoch")
    p.add_argument("--batch", type=int, default=None, help="batch size")
    p.add_argument("--lr", type=float, default=None, help="learning rate")
    p.add_argument("--l2-lambda", type=float, default=None, help="L2 penalty coefficient")
    p.add_argument("--margin-same", type=float, default=None, help="margin for same-speaker negatives")
    p.add_argument("--margin-cross", type=float, default=None, help="margin for cross-speaker negatives")
    p.add_argument("--cross-fraction", type=float, default=None, help="cross-speaker fraction of negatives")
    p.add_argument("--pos-fraction", type=float, default=None, help="positive fraction of a batch")
    p.add_argument("--embed-dim", type=int, default=None, help="embedding dimension")
    p.add_argument("--eval-pairs", type=int, default=None, help="pairs per validation eval")
    p.add_argument("--stop-at-accuracy", type=float, default=None, help="early-stop accuracy")
    p.add_argument("--seed", type=int, default=None, help="root training seed")

    p = sub.add_parser("eval", help="evaluate a checkpoint on a corpus",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--pairs", type=int, default=400, help="accuracy pairs")
    p.add_argument("--clips", type=int, default=25, help="offset-scan clips")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="also write the report to this path")

    p = sub.add_parser("score", help="score two track files window by window",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--visual-track", required=True, help="visual track file")
    p.add_argument("--audio-track", required=True, help="audio track file")
    p.add_argument("--window-step", type=int, default=1, help="frames between windows")
    p.add_argument("--out", default=None, help="also write the listing to this path")

    p = sub.add_parser("inspect", help="describe a manifest, track, or checkpoint",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("path", help="file or corpus directory to describe")
    return parser


# ---------------------------------------------------------------------------

def cmd_synth(args):
    if args.speakers < 2:
        raise ConfigError(f"need >= 2 speakers, got {args.speakers}")
    corpus = synth_corpus(args.speakers, args.tracks, args.frames,
                          visual_spec=args.visual, audio_spec=args.audio,
                          noise_level=args.noise, seed=args.seed)
    manifest = save_corpus(corpus, args.out)
    print(f"wrote {len(corpus.tracks)} tracks to {manifest}")
    return EXIT_OK


def _train_flag_overrides(args):
    return {
        "trainer": {
            "epochs": args.epochs, "steps_per_epoch": args.steps,
            "batch_size": args.batch, "lr": args.lr,
            "l2_lambda": args.l2_lambda, "eval_pairs": args.eval_pairs,
            "stop_at_accuracy": args.stop_at_accuracy, "seed": args.seed,
        },
        "sampler": {
            "margin_same": args.margin_same, "margin_cross": args.margin_cross,
            "cross_fraction": args.cross_fraction,
            "pos_fraction": args.pos_fraction,
        },
        "encoder": {
            "embed_dim": args.embed_dim,
        },
    }


def cmd_train(args):
    corpus = load_manifest(args.corpus)
    if args.val_corpus:
        val = load_manifest(args.val_corpus)
    else:
        # hold out one track per speaker when the corpus allows it
        try:
            corpus, val = split_corpus(corpus, 1)
        except ShapeError:
            val = None

    resume_ckpt = None
    if args.resume:
        resume_ckpt = load_checkpoint(args.resume)
        if resume_ckpt.config is None:
            raise ConfigError(f"{args.resume}: no config sidecar; cannot resume")
        config = TrainConfig.from_dict(resume_ckpt.config)
    else:
        file_doc = load_run_config(args.config) if args.config else None
        overrides = _train_flag_overrides(args)
        overrides["encoder"]["visual_spec"] = corpus.visual_spec.name
        overrides["encoder"]["audio_spec"] = corpus.audio_spec.name
        config = build_train_config(file_doc, overrides)

    if (corpus.visual_spec.name != config.encoder.visual_spec
            or corpus.audio_spec.name != config.encoder.audio_spec):
        raise SpecMismatchError(
            f"corpus specs ({corpus.visual_spec.name}, {corpus.audio_spec.name}) "
            f"do not match config ({config.encoder.visual_spec}, "
            f"{config.encoder.audio_spec})")

    sys.stdout.write(canonical_dump(config))
    ckpt, history, model = train(config, corpus, val, resume=resume_ckpt,
                                 log=lambda msg: print(msg, file=sys.stderr))
    save_checkpoint(args.out, ckpt)
    save_history(args.history or args.out + ".history.json", history)
    final = history.evals[-1]["accuracy"] if history.evals else float("nan")
    print(f"final val_accuracy {final:.4f} after {ckpt.epoch} epochs "
          f"({ckpt.adam_step} steps)")
    return EXIT_OK


def cmd_eval(args):
    if args.pairs < 1:
        raise ConfigError(f"--pairs must be >= 1, got {args.pairs}")
    if args.clips < 1:
        raise ConfigError(f"--clips must be >= 1, got {args.clips}")
    ckpt = load_checkpoint(args.checkpoint)
    model, config = model_from_checkpoint(ckpt)
    corpus = load_manifest(args.corpus)
    if (corpus.visual_spec.name != config.encoder.visual_spec
            or corpus.audio_spec.name != config.encoder.audio_spec):
        raise SpecMismatchError("corpus specs do not match the checkpoint config")
    report = metric_report(model, corpus, args.pairs, config.sampler,
                           seed=args.seed, n_clips=args.clips,
                           threshold=config.encoder.threshold)
    text = report.to_text()
    sys.stdout.write(text)
    if args.out:
        _write_text(args.out, text)
    return EXIT_OK


def cmd_score(args):
    ckpt = load_checkpoint(args.checkpoint)
    model, config = model_from_checkpoint(ckpt)
    vspec = get_spec(config.encoder.visual_spec)
    aspec = get_spec(config.encoder.audio_spec)
    visual = read_tensor(args.visual_track)
    audio = read_tensor(args.audio_track)
    if visual.shape[1:] != vspec.frame_dims:
        raise SpecMismatchError(f"visual track dims {visual.shape} do not match "
                                f"spec {vspec.name} {vspec.frame_dims}")
    if audio.shape[1:] != aspec.frame_dims:
        raise SpecMismatchError(f"audio track dims {audio.shape} do not match "
                                f"spec {aspec.name} {aspec.frame_dims}")
    frames = aspec.frames_for_rows(audio.shape[0])
    if frames is None or frames != visual.shape[0]:
        raise SpecMismatchError(
            f"audio rows {audio.shape[0]} and visual frames {visual.shape[0]} "
            "do not describe the same duration")
    track = Track(track_id="score", speaker_id="score", visual=visual,
                  audio=audio, visual_spec=vspec, audio_spec=aspec,
                  length_frames=frames)
    track.validate()
    if args.window_step < 1:
        raise ConfigError("--window-step must be >= 1")

    max_start = track.max_start_frame()
    if max_start < 0:
        raise ConfigError("tracks are shorter than one 0.2 s window")
    starts = list(range(0, max_start + 1, args.window_step))
    lines = []
    for i in range(0, len(starts), 64):
        chunk = starts[i:i + 64]
        audio_clips = [track.audio_clip(f) for f in chunk]
        visual_clips = [track.visual_clip(f) for f in chunk]
        probs = model.score_pairs(audio_clips, visual_clips)
        lines.extend(f"{f} {p:.6f}" for f, p in zip(chunk, probs))

    offsets = list(range(-15, 16))
    lo, hi = -offsets[0], max_start - offsets[-1]
    if hi >= lo:
        centers = sorted(set(np.linspace(lo, hi, num=min(40, hi - lo + 1),
                                         dtype=int).tolist()))
        dist = np.zeros(len(offsets))
        for c in centers:
            scan = offset_scan(model, track, int(c), offsets)
            dist += np.asarray(scan.distances)
        dist /= len(centers)
        agg = OffsetScan(track_id=track.track_id, center_frame=-1,
                         offsets=offsets, distances=[float(d) for d in dist])
        lines.append(f"estimated_offset {estimate_offset(agg)}")
    else:
        lines.append("estimated_offset unavailable (tracks too short for the scan)")
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.out:
        _write_text(args.out, text)
    return EXIT_OK


def cmd_inspect(args):
    import json as _json
    import os
    path = args.path
    if os.path.isdir(path):
        path = os.path.join(path, MANIFEST_NAME)
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such file: {path}")
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == b"USYN":
        arr = read_tensor(path)
        print(f"track tensor {path}")
        print(f"dims {list(arr.shape)}")
        print(f"dtype float32 range [{arr.min():.4f}, {arr.max():.4f}]")
    elif head == b"UCKP":
        ckpt = load_checkpoint(path)
        print(f"checkpoint {path}")
        print(f"version {ckpt.version}")
        print(f"config_hash {ckpt.config_digest.hex()}")
        print(f"epoch {ckpt.epoch}")
        print(f"optimizer_step {ckpt.adam_step}")
        print(f"model_arrays {len(ckpt.model_arrays)}")
        print(f"adam_arrays {len(ckpt.adam_arrays)}")
        if ckpt.config:
            enc = ckpt.config["encoder"]
            print(f"specs {enc['visual_spec']}+{enc['audio_spec']} "
                  f"embed_dim {enc['embed_dim']}")
    else:
        try:
            with open(path, "rb") as fh:
                doc = _json.loads(fh.read().decode())
        except _json.JSONDecodeError:
            from .errors import BadMagicError
            raise BadMagicError(f"{path}: not a track, checkpoint, or manifest") from None
        print(f"manifest {path}")
        print(f"specs {doc['visual_spec']}+{doc['audio_spec']}")
        speakers = sorted({t['speaker_id'] for t in doc['tracks']})
        print(f"tracks {len(doc['tracks'])} speakers {len(speakers)}")
        for t in doc["tracks"]:
            print(f"  {t['track_id']} speaker {t['speaker_id']} "
                  f"frames {t['length_frames']}")
    return EXIT_OK


def _write_text(path, text):
    import os
    tmp = os.fspath(path) + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


_COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "score": cmd_score,
    "inspect": cmd_inspect,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    from .errors import MissingTrackFileError
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, SamplingError, WindowError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (MissingTrackFileError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except (FormatError, SpecMismatchError, ManifestError, ShapeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FORMAT
    except DivergenceError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
