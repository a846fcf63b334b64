"""Run every pipeline stage (data, discriminator, rewards, FRE, SMODICE baseline, skills, eval, export) for one config.

    python3 scripts/run_pipeline.py configs/grid8-smoke.json out/smoke --seed 0
"""

import argparse
from pathlib import Path

from dualforce.experiment import run_pipeline


def main():
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("config")
    parser.add_argument("out_dir")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    seconds = run_pipeline(Path(args.config), Path(args.out_dir), args.seed)
    for stage, s in seconds.items():
        print(f"{stage:<24} {s:7.1f}s")


if __name__ == "__main__":
    main()
