"""Parameter and MAC budget of the paper-scale and desk-scale models."""

from vfr.arch import count_flops, count_parameters
from vfr.models import DESK, PAPER, classifier_spec, unet_spec

ANCHORS = {"classifier": 827_000, "total": 8_593_949}


def row(name, spec):
    pc = count_parameters(spec)
    macs = count_flops(spec).macs
    print(f"{name:<22} {pc.trainable:>11,} {pc.non_trainable:>9,} {macs / 1e9:>9.3f}")
    return pc.trainable


def main():
    print(f"{'model':<22} {'trainable':>11} {'non-train':>9} {'GMACs':>9}")
    for prof in (PAPER, DESK):
        seg = row(f"unet-{prof.name}", unet_spec(prof))
        cls = row(f"classifier-{prof.name}", classifier_spec(prof, 60 if prof is PAPER else 5))
        if prof is PAPER:
            for key, got in (("classifier", cls), ("total", seg + cls)):
                ref = ANCHORS[key]
                print(f"  {key}: {got:,} vs {ref:,} ({100 * (got - ref) / ref:+.2f}%)")


if __name__ == "__main__":
    main()
