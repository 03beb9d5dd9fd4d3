"""``fpextract`` command-line interface.

Two subcommands::

    fpextract extract --model identity-mel-debug --hop 0.5 --window 1.0 \
        --out embeddings/ audio/*.wav
    fpextract train --embeddings embeddings/ --freeze --lr 3e-5 --tau 0.05 \
        --steps 50 --out head.afpw

``extract`` embeds WAV files into .afpe artifacts; ``train`` fits the
projection head on positive pairs and writes an .afpw weights file.  Pairs
come from row-matched clean/degraded embedding directories when --degraded is
given, otherwise from embedding-space Gaussian jitter.  Exit codes: 0 success,
1 configuration error, 2 data error, 3 internal error; failures emit one
machine-readable JSON object on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .backbones import BACKBONE_NAMES
from .errors import CheckpointError, DecodeError, ExtractorError, FormatError, ParameterError
from .extract import ExtractorConfig, extract
from .formats import read_embeddings_file
from .train import (
    DEFAULT_BATCH,
    DEFAULT_TAU,
    TrainConfig,
    make_jitter_sampler,
    make_matched_sampler,
    train_projection,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3


class _Parser(argparse.ArgumentParser):
    """Raises instead of exiting so errors reach the JSON reporter."""

    def error(self, message: str) -> None:
        raise ParameterError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="fpextract",
        description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_extract = sub.add_parser("extract", help="embed audio files into .afpe artifacts")
    p_extract.add_argument("audio", nargs="+", help="WAV files or directories of WAVs")
    p_extract.add_argument("--model", default="identity-mel-debug", choices=BACKBONE_NAMES)
    p_extract.add_argument("--checkpoint", help="pretrained weights for muq/mert/beats")
    p_extract.add_argument("--hop", type=float, default=0.5, help="frame hop in seconds")
    p_extract.add_argument("--window", type=float, default=1.0, help="frame window in seconds")
    p_extract.add_argument("--out", required=True, help="output directory for .afpe files")
    p_extract.add_argument("--workers", type=int, default=1, help="parallel file workers")

    p_train = sub.add_parser("train", help="train the projection head, write .afpw")
    p_train.add_argument("--embeddings", required=True, help="directory of clean .afpe files")
    p_train.add_argument("--degraded",
                         help="directory of degraded .afpe files matched by track_id")
    p_train.add_argument("--model", default="identity-mel-debug", choices=BACKBONE_NAMES,
                         help="backbone the embeddings came from (sets the default lr)")
    p_train.add_argument("--out", required=True, help="output .afpw path")
    p_train.add_argument("--lr", type=float, help="learning rate (default per model)")
    p_train.add_argument("--tau", type=float, default=DEFAULT_TAU, help="NT-Xent temperature")
    p_train.add_argument("--batch", type=int, default=DEFAULT_BATCH, help="pairs per step")
    p_train.add_argument("--steps", type=int, default=50, help="optimization steps")
    p_train.add_argument("--freeze", action=argparse.BooleanOptionalAction, default=True,
                         help="train the head only, leaving backbone weights fixed")
    p_train.add_argument("--d-hidden", type=int, default=4096, help="head hidden width")
    p_train.add_argument("--d-out", type=int, default=256, help="fingerprint dimension")
    p_train.add_argument("--jitter-sigma", type=float, default=0.1,
                         help="embedding-jitter scale when no --degraded dir is given")
    p_train.add_argument("--seed", type=int, default=0, help="initialization/sampling seed")
    return parser


def _gather_audio(entries: list[str]) -> list[Path]:
    paths: list[Path] = []
    for entry in entries:
        p = Path(entry)
        if p.is_dir():
            found = sorted(p.glob("*.wav"))
            if not found:
                raise DecodeError(f"{p}: directory contains no .wav files")
            paths.extend(found)
        else:
            paths.append(p)
    return paths


def cmd_extract(args: argparse.Namespace) -> dict:
    config = ExtractorConfig(
        model=args.model,
        checkpoint=args.checkpoint,
        hop_seconds=args.hop,
        window_seconds=args.window,
        out_dir=args.out,
        workers=args.workers,
    )
    written = extract(config, _gather_audio(args.audio))
    return {"out_dir": args.out, "n_files": len(written), "model": args.model}


def _load_frames(directory: str) -> dict[str, np.ndarray]:
    paths = sorted(Path(directory).glob("*.afpe"))
    if not paths:
        raise FormatError(f"{directory}: no .afpe files found")
    return {f.track_id: f.data for f in map(read_embeddings_file, paths)}


def cmd_train(args: argparse.Namespace) -> dict:
    config = TrainConfig(
        model=args.model,
        lr=args.lr,
        tau=args.tau,
        batch_size=args.batch,
        freeze=args.freeze,
        d_hidden=args.d_hidden,
        d_out=args.d_out,
        seed=args.seed,
        augmentation=(
            {"kind": "matched", "dir": args.degraded} if args.degraded
            else {"kind": "jitter", "sigma": args.jitter_sigma}
        ),
    )
    clean_by_track = _load_frames(args.embeddings)
    if args.degraded:
        degraded_by_track = _load_frames(args.degraded)
        shared = sorted(clean_by_track.keys() & degraded_by_track.keys())
        if not shared:
            raise FormatError(
                f"{args.degraded}: no track_ids in common with {args.embeddings}"
            )
        clean_rows, degraded_rows = [], []
        for track in shared:
            a, b = clean_by_track[track], degraded_by_track[track]
            n = min(len(a), len(b))
            clean_rows.append(a[:n])
            degraded_rows.append(b[:n])
        sampler = make_matched_sampler(
            np.concatenate(clean_rows), np.concatenate(degraded_rows),
            config.batch_size, seed=config.seed,
        )
    else:
        frames = np.concatenate(list(clean_by_track.values()))
        sampler = make_jitter_sampler(frames, config.batch_size,
                                      sigma=args.jitter_sigma, seed=config.seed)
    result = train_projection(config, sampler, steps=args.steps)
    result.save(args.out)
    return {
        "weights": args.out,
        "steps": args.steps,
        "first_loss": round(result.losses[0], 6),
        "last_loss": round(result.losses[-1], 6),
        "frozen": config.freeze,
    }


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:  # --help / --version paths
            return EXIT_OK if exc.code == 0 else EXIT_CONFIG
        if args.command == "extract":
            summary = cmd_extract(args)
        else:
            summary = cmd_train(args)
    except (ParameterError, CheckpointError) as exc:
        print(json.dumps({"error": {"message": str(exc), "type": "config"}}),
              file=sys.stderr)
        return EXIT_CONFIG
    except (DecodeError, FormatError) as exc:
        print(json.dumps({"error": {"message": str(exc), "type": "data"}}),
              file=sys.stderr)
        return EXIT_DATA
    except ExtractorError as exc:
        print(json.dumps({"error": {"message": str(exc), "type": "internal"}}),
              file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001 - last-resort mapping to exit code 3
        message = f"{type(exc).__name__}: {exc}"
        print(json.dumps({"error": {"message": message, "type": "internal"}}),
              file=sys.stderr)
        return EXIT_INTERNAL
    summary.update({"command": args.command, "status": "ok"})
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
