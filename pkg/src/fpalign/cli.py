"""``fpalign`` command-line interface.

Subcommands wire the library into reproducible file-based workflows::

    fpalign augment     --config run.json   # distorted queries + truth files
    fpalign build-index --config run.json   # reference index (.afpi / .afph)
    fpalign identify    --config run.json   # top-1 hit-rate report JSON
    fpalign align       --config run.json   # segment predictions CSV
    fpalign evaluate    --config run.json   # segment metric report JSON
    fpalign peaks       --config run.json   # landmark DB build / query

Configuration is a JSON file merged over built-in defaults; ``--set a.b=v``
and dedicated flags override it (flags win).  ``FPALIGN_THREADS`` caps worker
threads unless --threads is given.  Every command is deterministic given its
config and seed: rerunning overwrites outputs byte-identically.  Exit codes:
0 success, 1 configuration error, 2 data error, 3 internal error; failures
emit a machine-readable JSON object on stderr.
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import os
import sys
from pathlib import Path

from .alignment import AlignParams, align, write_predictions_csv
from .augment import load_conditions, make_query_set, read_wav
from .embedding import fingerprint_frames, read_embeddings, read_projection_weights
from .errors import ConfigError, DataError, FpalignError, ParameterError, ParseError
from .index import IvfParams, build_exact, build_ivf, load_index, save_index
from .metrics import evaluate_run
from .peaks import PeakParams, fingerprint_signal, match_peaks, read_peak_db, write_peak_db
from .retrieval import (
    RetrievalConfig,
    load_peak_references,
    run_track_eval,
)

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

_PATH_KEYS = (
    "references", "queries", "manifest", "weights", "index", "peak_db",
    "out_dir", "predictions", "ground_truth", "report", "conditions",
    "query", "noise_dir", "rir_dir",
)

DEFAULT_CONFIG: dict = {
    "seed": 0,
    "threads": 1,
    "strict": False,
    "mode": "peaks",  # "peaks" or "embedding"
    "paths": {key: None for key in _PATH_KEYS},
    "align": {
        "k": 5,
        "sim_threshold": 0.7,
        "huber_delta": None,
        "inlier_tolerance": 1.0,
        "n_seeds": 16,
        "min_inliers": 3,
        "a_bounds": [0.6, 1.7],
        "segment_length": 1.0,
    },
    "ivf": {"enabled": False, "n_lists": 64, "n_probe": 8, "kmeans_iters": 20, "seed": 0},
    "retrieval": {"k": 5, "aggregation": "similarity_sum"},
    "augment": {
        "n_per_condition": 5,
        "segment_seconds": 10.0,
        "mode": "track",
        "crossfade_seconds": 0.5,
        "max_snippets": 3,
    },
    "peaks": {
        "n_fft": 1024,
        "hop": 512,
        "neighborhood_frames": 7,
        "neighborhood_bins": 15,
        "threshold_quantile": 0.7,
        "max_peaks_per_frame": 5,
        "fan_out": 5,
        "min_dt": 1,
        "max_dt": 63,
    },
    "evaluate": {"iou_thr": 0.3},
}


def _check_value(key: str, default, value):
    """Validate an override against the default's type (None defaults accept any)."""
    if default is None or value is None:
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"config key {key!r} expects a boolean, got {value!r}")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if not isinstance(value, int) or isinstance(value, bool):
            raise ConfigError(f"config key {key!r} expects an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ConfigError(f"config key {key!r} expects a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"config key {key!r} expects a string, got {value!r}")
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"config key {key!r} expects a list, got {value!r}")
        return value
    return value


def _merge(base: dict, override: dict, prefix: str = "") -> dict:
    out = dict(base)
    for key, value in override.items():
        if key not in base:
            raise ConfigError(f"unknown config key {prefix + key!r}")
        if isinstance(base[key], dict) and isinstance(value, dict):
            out[key] = _merge(base[key], value, prefix + key + ".")
        else:
            out[key] = _check_value(prefix + key, base[key], value)
    return out


def _apply_set(cfg: dict, assignment: str) -> None:
    if "=" not in assignment:
        raise ConfigError(f"--set expects key.path=value, got {assignment!r}")
    dotted, raw = assignment.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node = cfg
    defaults_node = DEFAULT_CONFIG
    parts = dotted.split(".")
    for part in parts[:-1]:
        if not isinstance(node, dict) or part not in node:
            raise ConfigError(f"unknown config key {dotted!r}")
        node = node[part]
        if isinstance(defaults_node, dict):
            defaults_node = defaults_node.get(part)
    if not isinstance(node, dict) or parts[-1] not in node:
        raise ConfigError(f"unknown config key {dotted!r}")
    default = defaults_node.get(parts[-1]) if isinstance(defaults_node, dict) else None
    node[parts[-1]] = _check_value(dotted, default, value)


def load_config(args: argparse.Namespace) -> dict:
    """Defaults <- config file <- --set assignments <- dedicated flags."""
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if args.config:
        try:
            with open(args.config) as fh:
                file_cfg = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {args.config} is not valid JSON: {exc}") from exc
        if not isinstance(file_cfg, dict):
            raise ConfigError(f"config {args.config} must be a JSON object")
        cfg = _merge(cfg, file_cfg)
    for assignment in args.set or []:
        _apply_set(cfg, assignment)

    env_threads = os.environ.get("FPALIGN_THREADS")
    if env_threads is not None and args.threads is None:
        try:
            cfg["threads"] = int(env_threads)
        except ValueError:
            raise ConfigError(f"FPALIGN_THREADS must be an integer, got {env_threads!r}") from None

    flag_paths = {
        "references": args.refs, "queries": args.queries, "manifest": args.manifest,
        "weights": args.weights, "index": args.index, "peak_db": args.peak_db,
        "out_dir": args.out, "predictions": args.predictions,
        "ground_truth": args.ground_truth, "report": args.report,
        "conditions": args.conditions, "query": args.query,
        "noise_dir": args.noise_dir, "rir_dir": args.rir_dir,
    }
    for key, value in flag_paths.items():
        if value is not None:
            cfg["paths"][key] = value
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.threads is not None:
        cfg["threads"] = args.threads
    if args.mode is not None:
        cfg["mode"] = args.mode
    if args.strict:
        cfg["strict"] = True
    if args.lenient:
        cfg["strict"] = False

    if not isinstance(cfg["threads"], int) or cfg["threads"] < 1:
        raise ConfigError(f"threads must be a positive integer, got {cfg['threads']!r}")
    if cfg["mode"] not in ("peaks", "embedding"):
        raise ConfigError(f"mode must be 'peaks' or 'embedding', got {cfg['mode']!r}")
    return cfg


def _require_path(cfg: dict, key: str, flag: str) -> str:
    value = cfg["paths"].get(key)
    if not value:
        raise ConfigError(f"missing required path paths.{key} (pass {flag} or set it in the config)")
    return value


def _align_params(cfg: dict) -> AlignParams:
    raw = dict(cfg["align"])
    raw["a_bounds"] = tuple(raw["a_bounds"])
    return AlignParams(**raw)


def _peak_params(cfg: dict) -> PeakParams:
    return PeakParams(**cfg["peaks"])


def _write_json(obj: dict, path: str | os.PathLike) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def _load_reference_fingerprints(cfg: dict) -> list:
    refs_dir = _require_path(cfg, "references", "--refs")
    weights = read_projection_weights(_require_path(cfg, "weights", "--weights"))
    paths = sorted(Path(refs_dir).glob("*.afpe"))
    if not paths:
        raise DataError(f"{refs_dir}: no .afpe reference files found")
    fps = []
    for p in paths:
        fps.extend(fingerprint_frames(read_embeddings(p), weights))
    return fps


def cmd_augment(cfg: dict) -> dict:
    refs = _require_path(cfg, "references", "--refs")
    out_dir = _require_path(cfg, "out_dir", "--out")
    conditions = load_conditions(_require_path(cfg, "conditions", "--conditions"))
    aug = cfg["augment"]
    summary = make_query_set(
        refs,
        out_dir,
        conditions,
        n_per_condition=aug["n_per_condition"],
        segment_seconds=aug["segment_seconds"],
        seed=cfg["seed"],
        mode=aug["mode"],
        crossfade_seconds=aug["crossfade_seconds"],
        max_snippets=aug["max_snippets"],
        noise_dir=cfg["paths"].get("noise_dir"),
        rir_dir=cfg["paths"].get("rir_dir"),
    )
    return {"n_queries": len(summary["queries"]), **{k: v for k, v in summary.items() if k != "queries"}}


def cmd_build_index(cfg: dict) -> dict:
    if cfg["mode"] == "peaks":
        refs = _require_path(cfg, "references", "--refs")
        out = _require_path(cfg, "peak_db", "--peak-db")
        db = load_peak_references(refs, _peak_params(cfg))
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        write_peak_db(db, out)
        return {"peak_db": out, "n_landmarks": len(db), "n_tracks": len(db.track_ids)}
    fps = _load_reference_fingerprints(cfg)
    out = _require_path(cfg, "index", "--index")
    ivf = cfg["ivf"]
    if ivf["enabled"]:
        index = build_ivf(
            fps,
            IvfParams(
                n_lists=ivf["n_lists"],
                n_probe=ivf["n_probe"],
                kmeans_iters=ivf["kmeans_iters"],
                seed=ivf["seed"],
            ),
        )
    else:
        index = build_exact(fps)
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    save_index(index, out)
    return {"index": out, "n_vectors": len(fps), "kind": "ivf" if ivf["enabled"] else "exact"}


def cmd_identify(cfg: dict) -> dict:
    refs = _require_path(cfg, "references", "--refs")
    manifest = _require_path(cfg, "manifest", "--manifest")
    report_path = _require_path(cfg, "report", "--report")
    rcfg = RetrievalConfig(
        mode=cfg["mode"],
        k=cfg["retrieval"]["k"],
        aggregation=cfg["retrieval"]["aggregation"],
        strict=cfg["strict"],
        threads=cfg["threads"],
        weights_path=cfg["paths"].get("weights"),
        peak_params=_peak_params(cfg),
    )
    report = run_track_eval(refs, manifest, rcfg).to_report()
    _write_json(report, report_path)
    return {"report": report_path, "overall": report["overall"]}


def cmd_align(cfg: dict) -> dict:
    if cfg["mode"] != "embedding":
        raise ConfigError("align requires --mode embedding (frame vectors + index)")
    queries_dir = _require_path(cfg, "queries", "--queries")
    weights = read_projection_weights(_require_path(cfg, "weights", "--weights"))
    index = load_index(_require_path(cfg, "index", "--index"))
    out = _require_path(cfg, "predictions", "--predictions")
    paths = sorted(Path(queries_dir).glob("*.afpe"))
    if not paths:
        raise DataError(f"{queries_dir}: no .afpe query files found")
    queries = [read_embeddings(p) for p in paths]
    segments = align(
        queries,
        weights,
        index,
        _align_params(cfg),
        rng_seed=cfg["seed"],
        threads=cfg["threads"],
        strict=cfg["strict"],
    )
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    write_predictions_csv(segments, out)
    return {"predictions": out, "n_segments": len(segments)}


def cmd_evaluate(cfg: dict) -> dict:
    preds = _require_path(cfg, "predictions", "--predictions")
    gt = _require_path(cfg, "ground_truth", "--ground-truth")
    report_path = _require_path(cfg, "report", "--report")
    report = evaluate_run(preds, gt, iou_thr=cfg["evaluate"]["iou_thr"])
    _write_json(report, report_path)
    return {
        "report": report_path,
        "track_f1": report["track_f1"],
        "bbox_f1": report["bbox_f1"],
        "length_f1": report["length_f1"],
    }


def cmd_peaks(cfg: dict) -> dict:
    """Build a landmark DB from references, or match one query against a DB."""
    params = _peak_params(cfg)
    query = cfg["paths"].get("query")
    if query:
        db = read_peak_db(_require_path(cfg, "peak_db", "--peak-db"))
        buf = read_wav(query)
        matches = match_peaks(fingerprint_signal(buf.samples, db.params), db)
        report = {
            "schema_version": SCHEMA_VERSION,
            "query": str(query),
            "matches": [
                {
                    "track_id": m.track_id,
                    "votes": m.votes,
                    "offset_frames": m.offset_frames,
                    "offset_seconds": round(m.offset_seconds, 3),
                }
                for m in matches[:10]
            ],
        }
        report_path = cfg["paths"].get("report")
        if report_path:
            _write_json(report, report_path)
            return {"report": report_path, "n_matches": len(matches)}
        return report
    refs = _require_path(cfg, "references", "--refs")
    out = _require_path(cfg, "peak_db", "--peak-db")
    db = load_peak_references(refs, params)
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    write_peak_db(db, out)
    return {"peak_db": out, "n_landmarks": len(db), "n_tracks": len(db.track_ids)}


_COMMANDS = {
    "augment": cmd_augment,
    "build-index": cmd_build_index,
    "identify": cmd_identify,
    "align": cmd_align,
    "evaluate": cmd_evaluate,
    "peaks": cmd_peaks,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # noqa: D102
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fpalign", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in _COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__, description=fn.__doc__)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--set", action="append", metavar="KEY.PATH=VALUE",
                       help="override one config value (JSON-parsed); repeatable")
        p.add_argument("--seed", type=int, help="run seed")
        p.add_argument("--threads", type=int, help="worker thread cap")
        p.add_argument("--mode", choices=["peaks", "embedding"], help="data path mode")
        p.add_argument("--strict", action="store_true", help="fail on any bad input file")
        p.add_argument("--lenient", action="store_true", help="skip bad input files (default)")
        p.add_argument("--refs", help="reference directory")
        p.add_argument("--queries", help="query directory")
        p.add_argument("--manifest", help="query manifest CSV")
        p.add_argument("--weights", help="projection weights .afpw")
        p.add_argument("--index", help="vector index .afpi")
        p.add_argument("--peak-db", dest="peak_db", help="landmark database .afph")
        p.add_argument("--out", help="output directory")
        p.add_argument("--predictions", help="predictions CSV path")
        p.add_argument("--ground-truth", dest="ground_truth", help="ground-truth CSV path")
        p.add_argument("--report", help="report JSON path")
        p.add_argument("--conditions", help="augmentation conditions JSON")
        p.add_argument("--query", help="single query WAV (peaks command)")
        p.add_argument("--noise-dir", dest="noise_dir", help="noise WAV directory")
        p.add_argument("--rir-dir", dest="rir_dir", help="room impulse response WAV directory")
    return parser


def _emit_error(kind: str, exc: BaseException) -> None:
    payload = {"error": {"type": kind, "message": str(exc)}}
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        parser = build_parser()
        args = parser.parse_args(argv)
        cfg = load_config(args)
        summary = _COMMANDS[args.command](cfg)
        out = {"command": args.command, "schema_version": SCHEMA_VERSION, "status": "ok"}
        out.update(summary)
        print(json.dumps(out, sort_keys=True))
        return 0
    except (ConfigError, ParameterError) as exc:
        _emit_error("config", exc)
        return 1
    except (DataError, ParseError) as exc:
        _emit_error("data", exc)
        return 2
    except FpalignError as exc:
        _emit_error("internal", exc)
        return 3
    except Exception as exc:  # noqa: BLE001 - last-resort mapping to exit code 3
        logger.exception("internal error")
        _emit_error("internal", exc)
        return 3


if __name__ == "__main__":
    sys.exit(main())
