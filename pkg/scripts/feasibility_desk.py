"""Feasibility ratio of FFD-GAN, FFD and B-spline design spaces.

    python scripts/feasibility_desk.py --run runs/desk [--samples 1000]
"""
import argparse
from pathlib import Path

from ffdgan import io as fio
from ffdgan.geometry import mean_shape
from ffdgan.harness import feasibility_ratio
from ffdgan.neural.train import load_checkpoint
from ffdgan.parameterizations import BsplineParam, FFDParam, GanParam


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--run", type=Path, required=True)
    ap.add_argument("--samples", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    base = mean_shape(fio.load_dataset(args.run / "dataset").train)
    G, _, _ = load_checkpoint(args.run / "gen_dz15")
    params = [GanParam(G), FFDParam(base, (2, 3, 1)), BsplineParam(base, 4, 14)]
    rows = []
    for p in params:
        rep = feasibility_ratio(p, args.samples, args.seed)
        geo_ok = sum(r["geometric_ok"] for r in rep.rows) / rep.n_samples
        rows.append({"param": p.name, "dims": p.space.dim, "ratio": rep.ratio, "half_width": rep.half_width,
                     "geometric_ok": geo_ok})
        print(f"{p.name:>10} dim={p.space.dim:3d} feasible={rep.ratio:.3f}+-{rep.half_width:.3f} "
              f"geometric={geo_ok:.3f}")
    fio.write_csv(args.run / "feasibility_summary.csv", rows)


if __name__ == "__main__":
    main()
