"""Dead-entry restart ablation on an adversarially collapsed codebook.

Every codeword starts at the same point of one cluster. The question:
how much of the codebook comes back to life within a fixed number of
steps, with restart on versus off.
"""

import argparse

import numpy as np

from rvqtok.mel import FeatureSequence
from rvqtok.metrics import codebook_utilization
from rvqtok.rvq import Codebook, RvqStack, TrainingSchedule, encode_frames, train_rvq
from rvqtok.synth import make_cluster_vectors


def run_arm(points, labels, restart, steps, batch, dead_threshold, seed, alpha):
    k = int(labels.max()) + 1
    bad = np.tile(points[labels == 0][0], (k, 1))
    rng = np.random.default_rng(1000 + seed)
    corpus = [
        FeatureSequence(
            vectors=points[rng.integers(0, len(points), size=batch)],
            frame_rate=12.5,
            stack_factor=1,
        )
        for _ in range(steps)
    ]
    stack = RvqStack([Codebook(vectors=bad.copy(), ema_decay=alpha)])
    schedule = TrainingSchedule(replace_start=1.0, replace_end=1.0, total_steps=1)
    trained, report = train_rvq(
        stack,
        corpus,
        schedule,
        epochs=1,
        mode="standard_ema",
        dead_threshold=dead_threshold,
        restart=restart,
        seed=seed,
    )
    util = codebook_utilization(encode_frames(trained, points), 0, k)
    return util, report.steps[-1].feature_mae


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--clusters", type=int, default=16)
    ap.add_argument("--dim", type=int, default=12)
    ap.add_argument("--points", type=int, default=800)
    ap.add_argument("--steps", type=int, default=50)
    ap.add_argument("--batch", type=int, default=128)
    ap.add_argument("--dead-threshold", type=int, default=5)
    ap.add_argument("--ema-decay", type=float, default=0.95)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    args = ap.parse_args()

    points, labels, _ = make_cluster_vectors(
        args.points, args.dim, args.clusters, spread=0.05, seed=0
    )
    header = (
        f"{'seed':>4}  {'restart util':>12}  {'restart mae':>11}  "
        f"{'frozen util':>11}  {'frozen mae':>10}"
    )
    print(header)
    for seed in args.seeds:
        u1, m1 = run_arm(
            points, labels, True, args.steps, args.batch,
            args.dead_threshold, seed, args.ema_decay,
        )
        u0, m0 = run_arm(
            points, labels, False, args.steps, args.batch,
            args.dead_threshold, seed, args.ema_decay,
        )
        print(f"{seed:>4}  {u1:12.3f}  {m1:11.4f}  {u0:11.3f}  {m0:10.4f}")


if __name__ == "__main__":
    main()
