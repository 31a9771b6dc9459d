"""Time forward passes of every variant on a synthetic clip at reduced width."""

import argparse
import statistics
import time
from dataclasses import replace

from stenvan.backbone import VARIANTS, BackboneConfig, build_model, forward_video
from stenvan.cli import synthetic_clips


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--width-multiplier", type=float, default=0.125)
    ap.add_argument("--frames", type=int, default=8)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    base = BackboneConfig(frames=args.frames, width_multiplier=args.width_multiplier)
    clip = synthetic_clips(base, 1, args.seed)[0]
    print(f"{'variant':<14} {'median s':>9} {'min s':>9}")
    for v in VARIANTS:
        model = build_model(replace(base, variant=v), seed=args.seed)
        times = []
        for _ in range(args.repeat):
            t0 = time.perf_counter()
            forward_video(model, clip)
            times.append(time.perf_counter() - t0)
        print(f"{v:<14} {statistics.median(times):>9.4f} {min(times):>9.4f}")


if __name__ == "__main__":
    main()
