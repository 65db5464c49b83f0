"""Run the desk-scale experiment end to end and print the headline numbers.

    python3 scripts/desk_experiment.py /tmp/desk
"""

import argparse
import time

import numpy as np

from vfr import desk


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("root", help="working directory for data and checkpoints")
    ap.add_argument("--quiet", action="store_true")
    args = ap.parse_args()
    t0 = time.perf_counter()
    res = desk.run(args.root, log=None if args.quiet else print)
    seg, cls = res.seg.test, res.cls.test
    print(f"segmentation  dice {seg.dice_mean:.3f}  iou>50 {seg.iou_rate_50:.2f}  iou>75 {seg.iou_rate_75:.2f}  "
          f"{len(res.seg.epochs)} epochs  {res.seg_seconds / 60:.1f} min")
    print(f"classifier    top1 {cls.top1:.2f}  top3 {cls.top3:.2f}  top5 {cls.top5:.2f}  "
          f"{len(res.cls.epochs)} epochs  {res.cls_seconds / 60:.1f} min")
    print(f"end-to-end    top1 {res.e2e.e2e_top1:.2f}  top3 {res.e2e.e2e_top3:.2f}  top5 {res.e2e.e2e_top5:.2f}")
    print(f"test-time aug top1 median {np.median(res.tta_top1):.3f} over {len(res.tta_top1)} seeds, "
          f"plain {res.plain_top1:.3f}")
    print(f"checkpoints   {res.seg_ckpt}  {res.cls_ckpt}")
    print(f"total {(time.perf_counter() - t0) / 60:.1f} min")


if __name__ == "__main__":
    main()
