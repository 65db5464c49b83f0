"""Write a self-contained asset bundle (fonts, corpus, backgrounds).

    python3 scripts/make_demo_assets.py out/assets --script latin --desk
"""

import argparse

from vfr.datagen.demo import DESK_LINE_WORDS, write_assets


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("dest")
    ap.add_argument("--script", choices=("latin", "persian"), default="latin")
    ap.add_argument("--per-type", type=int, default=8, help="backgrounds per background type")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--desk", action="store_true", help="short corpus lines for 64 px canvases")
    args = ap.parse_args()
    kw = {"line_words": DESK_LINE_WORDS} if args.desk else {}
    paths = write_assets(args.dest, args.script, per_type=args.per_type, seed=args.seed, **kw)
    for k, v in paths.items():
        print(f"{k} = {v}")


if __name__ == "__main__":
    main()
