"""Fit held-out wings with FFD-GAN (d_z=15) and a 24-variable FFD.

    python scripts/coverage_desk.py --run runs/desk [--targets 100]
"""
import argparse
from pathlib import Path

import numpy as np

from ffdgan import io as fio
from ffdgan.geometry import mean_shape
from ffdgan.harness import coverage_test
from ffdgan.neural.train import load_checkpoint
from ffdgan.parameterizations import FFDParam, GanParam


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--run", type=Path, required=True)
    ap.add_argument("--targets", type=int, default=100)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    ds = fio.load_dataset(args.run / "dataset")
    pick = np.random.default_rng(args.seed).choice(len(ds.test_idx), args.targets, replace=False)
    targets = ds.test[pick]
    G, _, _ = load_checkpoint(args.run / "gen_dz15")
    rows = []
    for p in (GanParam(G), FFDParam(mean_shape(ds.train), (1, 2, 1))):
        r = coverage_test(p, targets)
        rows += r
        print(f"{p.name:>10} dim={p.space.dim:3d} mean Hausdorff={np.mean([x['hausdorff'] for x in r]):.4f}")
    fio.write_csv(args.run / "coverage.csv", rows)


if __name__ == "__main__":
    main()
