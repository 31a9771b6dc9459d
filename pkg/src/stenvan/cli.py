"""Command-line entry point: ``stenvan {flops,forward,eval,bench}``.

Exit codes: 0 success, 2 usage/config/shape error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import statistics
import sys
import time
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .backbone import VARIANTS, BackboneConfig, build_model, forward_video
from .errors import ConfigError, ContractError, DimensionError, NumericError
from .evaluation import EmbeddingSet, evaluate_sets
from .flops import flops_model
from .fpl import fpl_forward
from .tensor import load_nvt1

log = logging.getLogger("stenvan")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3

_BACKBONE_KEYS = {f.name for f in fields(BackboneConfig)}


@dataclass(frozen=True)
class RunConfig:
    """Backbone fields plus run settings, read from a flat JSON object.

    Keys beyond :class:`BackboneConfig`'s: ``seed`` (weight init, default 0),
    ``num_tracks`` (synthetic clips, default 1), ``input`` / ``output`` /
    ``labels`` paths (default unset; command-line flags take precedence).
    """

    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    seed: int = 0
    num_tracks: int = 1
    input: str | None = None
    output: str | None = None
    labels: str | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        run_keys = {f.name for f in fields(cls)} - {"backbone"}
        unknown = set(d) - run_keys - _BACKBONE_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        bb = BackboneConfig.from_dict({k: v for k, v in d.items() if k in _BACKBONE_KEYS})
        run = {k: v for k, v in d.items() if k in run_keys}
        cfg = cls(backbone=bb, **run)
        if not isinstance(cfg.seed, int) or not isinstance(cfg.num_tracks, int) or cfg.num_tracks < 1:
            raise ConfigError(f"seed must be an int and num_tracks a positive int, got {cfg.seed!r}, {cfg.num_tracks!r}")
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            text = Path(path).read_text()
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e.strerror}") from e
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON ({e})") from e


def synthetic_clips(cfg: BackboneConfig, num_tracks: int, seed: int) -> np.ndarray:
    """Seeded standard-normal frames, shape ``(num_tracks, T, 3, H, W)``."""
    rng = np.random.default_rng(seed)
    return rng.standard_normal((num_tracks, cfg.frames, 3, *cfg.input_hw))


def _read_labels(path, n: int) -> tuple[list[int], list[int]]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if len(rows) != n:
        raise ContractError(f"{path}: {len(rows)} label rows for {n} tracks")
    return [int(r["id"]) for r in rows], [int(r["camera"]) for r in rows]


def cmd_flops(args) -> int:
    cfg = RunConfig.load(args.config).backbone
    report = flops_model(cfg)
    print(report.to_json() if args.format == "json" else report.to_table())
    return EXIT_OK


def cmd_forward(args) -> int:
    run = RunConfig.load(args.config)
    cfg = run.backbone
    src = args.input or run.input
    if args.synthetic is not None:
        clips = synthetic_clips(cfg, run.num_tracks, args.synthetic)
    elif src:
        try:
            clips = load_nvt1(src)
        except OSError as e:
            raise ConfigError(f"cannot read input {src}: {e.strerror}") from e
        if clips.ndim == 4:
            clips = clips[None]
    else:
        raise ConfigError("forward needs --input or --synthetic")
    out = args.out or run.output
    if not out:
        raise ConfigError("forward needs --out")

    model = build_model(cfg, seed=run.seed)
    vecs = []
    for clip in clips:
        feats = forward_video(model, clip)
        vecs.append(fpl_forward(feats, kind=cfg.fpl_kind).post_bn)
    n = len(vecs)
    labels = args.labels or run.labels
    ids, cams = _read_labels(labels, n) if labels else (list(range(n)), [0] * n)
    EmbeddingSet(np.stack(vecs), ids, cams).save(out)
    log.info("wrote %d embeddings of dim %d to %s", n, vecs[0].shape[0], out)
    return EXIT_OK


def cmd_eval(args) -> int:
    try:
        q = EmbeddingSet.load(args.query)
        g = EmbeddingSet.load(args.gallery)
    except (OSError, KeyError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read embedding set: {e}") from e
    res = evaluate_sets(q, g, cam_filter=not args.no_cam_filter)
    print(f"R1={res.rank1:.4f}, mAP={res.mAP:.4f}")
    if res.skipped_queries:
        print(f"skipped {len(res.skipped_queries)} queries without a valid match", file=sys.stderr)
    return EXIT_OK


def cmd_bench(args) -> int:
    if args.repeat < 1:
        raise ConfigError(f"--repeat must be >= 1, got {args.repeat}")
    run = RunConfig.load(args.config)
    variants = args.variants or list(VARIANTS)
    clip = synthetic_clips(run.backbone, 1, run.seed)[0]
    rows = []
    for v in variants:
        cfg = replace(run.backbone, variant=v)
        model = build_model(cfg, seed=run.seed)
        times = []
        for _ in range(args.repeat):
            t0 = time.perf_counter()
            forward_video(model, clip)
            times.append(time.perf_counter() - t0)
        med = statistics.median(times)
        executed = flops_model(cfg, executed_width=True).total
        rows.append((v, med, flops_model(cfg).total, executed / med, len(times)))

    print(f"{'variant':<14} {'runs':>4} {'median s':>10} {'GFLOP@1.0':>10} {'GFLOP/s':>9}")
    for v, med, full, thr, n in rows:
        print(f"{v:<14} {n:>4} {med:>10.4f} {full / 1e9:>10.1f} {thr / 1e9:>9.2f}")
    ranked = sorted(rows, key=lambda r: r[1])
    print("ordering (fastest first): " + " < ".join(r[0] for r in ranked))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="stenvan", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("flops", help="analytic FLOP report for the configured variant")
    p.add_argument("config")
    p.add_argument("--format", choices=("table", "json"), default="table")
    p.set_defaults(func=cmd_flops)

    p = sub.add_parser("forward", help="embed clips and write an EmbeddingSet directory")
    p.add_argument("config")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--input", help="NVT1 tensor (T,3,H,W) or (N,T,3,H,W)")
    src.add_argument("--synthetic", type=int, metavar="SEED", help="use seeded Gaussian frames")
    p.add_argument("--out", help="output EmbeddingSet directory")
    p.add_argument("--labels", help="CSV with id,camera columns, one row per clip")
    p.set_defaults(func=cmd_forward)

    p = sub.add_parser("eval", help="rank-1 and mAP between two EmbeddingSet directories")
    p.add_argument("--query", required=True)
    p.add_argument("--gallery", required=True)
    p.add_argument("--no-cam-filter", action="store_true", help="keep same-id same-camera gallery entries")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="time one forward per variant")
    p.add_argument("config")
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--variants", nargs="+", choices=VARIANTS)
    p.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except NumericError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, DimensionError, ContractError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
