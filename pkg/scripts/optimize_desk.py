"""GP-UCB maximization of L/D with each parameterization over several seeds.

    python scripts/optimize_desk.py --run runs/desk [--seeds 5 --n-seq 40]
"""
import argparse
from pathlib import Path

import numpy as np

from ffdgan import io as fio
from ffdgan.bayes_opt import OptBudget, best_so_far, optimize_shape
from ffdgan.geometry import mean_shape
from ffdgan.neural.train import load_checkpoint
from ffdgan.parameterizations import BsplineParam, FFDParam, GanParam


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--run", type=Path, required=True)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--n-init", type=int, default=10)
    ap.add_argument("--n-seq", type=int, default=40)
    args = ap.parse_args()

    base = mean_shape(fio.load_dataset(args.run / "dataset").train)
    G, _, _ = load_checkpoint(args.run / "gen_dz5")
    budget = OptBudget(args.n_init, args.n_seq)
    total = args.n_init + args.n_seq
    rows = []
    for p in (GanParam(G), FFDParam(base, (3, 3, 1)), BsplineParam(base, 4, 18)):
        bests = []
        for seed in range(args.seeds):
            hist = optimize_shape(p, budget, seed)
            bests.append(best_so_far(hist, total))
            rows += [{"param": p.name, "seed": seed, "iteration": r["iteration"], "LD": r["LD"],
                      "best_so_far": r["best_so_far"]} for r in hist]
        print(f"{p.name:>10} dim={p.space.dim:3d} median best L/D @ {total}: {np.median(bests):.2f}")
    fio.write_csv(args.run / "optimization.csv", rows)


if __name__ == "__main__":
    main()
