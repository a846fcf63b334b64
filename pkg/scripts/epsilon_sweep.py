"""Seeds x epsilon sweep on a gridworld config; prints per-run diagnostics and writes summary.json.

    python3 scripts/epsilon_sweep.py configs/grid8-corridors.json out/sweep --seeds 0 1 2 3 4 --epsilons 0.1 1 4
"""

import argparse
import json
from pathlib import Path

import numpy as np

from dualforce.experiment import epsilon_sweep
from dualforce.mdp import read_json


def main():
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("config")
    parser.add_argument("root")
    parser.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    parser.add_argument("--epsilons", type=float, nargs="+", default=[0.1, 1.0, 4.0])
    parser.add_argument("--default-epsilon", type=float, default=1.0)
    args = parser.parse_args()

    res = epsilon_sweep(Path(args.config), Path(args.root), args.seeds, args.epsilons, args.default_epsilon)
    table = res.distance_table()
    summary = {"seeds": res.seeds, "epsilons": res.epsilons, "mean_pairwise_sf_distance": table.tolist(), "runs": []}
    print("seed  " + "  ".join(f"eps={e:<6g}" for e in res.epsilons))
    for s, row in zip(res.seeds, table):
        print(f"{s:<5} " + "  ".join(f"{d:<10.3f}" for d in row))
    print("mean  " + "  ".join(f"{d:<10.3f}" for d in table.mean(axis=0)))

    for s in res.seeds:
        doc = read_json(res.runs[s, args.default_epsilon] / "evaluation.json")
        keys = {(a["skill"], a["iteration"]) for a in doc["accepted"]}
        acc = [e for e in doc["entries"] if (e["skill"], e["iteration"]) in keys]
        phis = [e["phi"] for e in acc]
        over = int(sum(p > args.default_epsilon + 0.1 for p in phis))
        print(f"seed {s}: expert return {doc['expert_return']:.3f}, accepted {len(acc)}/{len(doc['entries'])}, "
              f"max accepted phi {max(phis, default=float('nan')):.3f}, above eps+0.1: {over}")
        summary["runs"].append({"seed": s, "expert_return": doc["expert_return"], "accepted": len(acc),
                                "entries": len(doc["entries"]), "phi_over": over,
                                "max_phi": float(np.max(phis)) if phis else None})
    (Path(args.root) / "summary.json").write_text(json.dumps(summary, indent=2))


if __name__ == "__main__":
    main()
