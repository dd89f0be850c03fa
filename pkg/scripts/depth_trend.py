"""Decode error versus quantizer depth on a synthetic corpus.

Trains one stack on stacked-mel features from sine+noise clips, then
reports the feature-level MAE of truncated prefixes of the trained
stack. Expected picture: error drops layer over layer with
diminishing returns.
"""

import argparse
import json

import numpy as np

from rvqtok.mel import FeatureSequence
from rvqtok.rvq import (
    RvqStack,
    TrainingSchedule,
    decode_frames,
    encode_frames,
    init_rvq_stack,
    train_rvq,
)
from rvqtok.synth import make_feature_corpus


def depth_sweep(seed, n_clips, clip_seconds, layer_sizes, epochs, depths):
    corpus = make_feature_corpus(n_clips=n_clips, clip_seconds=clip_seconds, seed=seed)
    x = np.concatenate([s.vectors for s in corpus], axis=0)
    full = FeatureSequence(vectors=x, frame_rate=12.5, stack_factor=8)
    # ema_decay=0 plus an always-open gate makes each epoch a full-batch
    # mean update, so a handful of epochs is enough to settle
    schedule = TrainingSchedule(replace_start=1.0, replace_end=1.0, total_steps=1)
    stack = init_rvq_stack(layer_sizes, x, ema_decay=0.0, seed=seed)
    trained, _ = train_rvq(
        stack,
        [full],
        schedule,
        epochs=epochs,
        mode="paper_literal",
        dead_threshold=3,
        restart=True,
        seed=seed,
    )
    rows = []
    for depth in depths:
        sub = RvqStack(trained.layers[:depth])
        recon = decode_frames(sub, encode_frames(sub, x))
        rows.append({"depth": depth, "mae": float(np.mean(np.abs(x - recon)))})
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--clips", type=int, default=20)
    ap.add_argument("--clip-seconds", type=float, default=8.0)
    ap.add_argument("--layer-size", type=int, default=64)
    ap.add_argument("--n-layers", type=int, default=8)
    ap.add_argument("--epochs", type=int, default=12)
    ap.add_argument("--depths", type=int, nargs="+", default=[1, 2, 4, 6, 8])
    ap.add_argument("--out", default=None, help="optional JSON output path")
    args = ap.parse_args()

    depths = [d for d in args.depths if 1 <= d <= args.n_layers]
    rows = depth_sweep(
        args.seed,
        args.clips,
        args.clip_seconds,
        [args.layer_size] * args.n_layers,
        args.epochs,
        depths,
    )

    print(f"{'depth':>5}  {'mae':>8}  {'vs prev':>8}")
    prev = None
    for row in rows:
        rel = "" if prev is None else f"{100.0 * (prev - row['mae']) / prev:+6.1f}%"
        print(f"{row['depth']:>5}  {row['mae']:8.4f}  {rel:>8}")
        prev = row["mae"]
    if args.out:
        with open(args.out, "w") as fh:
            json.dump({"seed": args.seed, "rows": rows}, fh, indent=2)
        print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
