"""Generate the 2,000-wing dataset and train the d_z=15 and d_z=5 generators.

    python scripts/train_desk.py --out runs/desk [--iters 2000]
"""
import argparse
import logging
import time
from pathlib import Path

from ffdgan import io as fio
from ffdgan.grammar import GrammarConfig, generate_dataset
from ffdgan.neural.train import TrainConfig, save_checkpoint, train


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", type=Path, required=True)
    ap.add_argument("--count", type=int, default=2000)
    ap.add_argument("--iters", type=int, default=2000)
    ap.add_argument("--data-seed", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    t0 = time.perf_counter()
    ds = generate_dataset(GrammarConfig(), args.count, args.data_seed)
    fio.save_dataset(ds, args.out / "dataset")
    print(f"dataset: {args.count} wings in {time.perf_counter() - t0:.0f}s")
    for d_z in (15, 5):
        t0 = time.perf_counter()
        cfg = TrainConfig(latent_dim=d_z, iterations=args.iters, seed=args.seed)
        res = train(ds.train, cfg)
        save_checkpoint(args.out / f"gen_dz{d_z}", res.generator, cfg, cfg.iterations)
        fio.write_csv(args.out / f"losses_dz{d_z}.csv", res.history)
        print(f"d_z={d_z}: {args.iters} iterations in {time.perf_counter() - t0:.0f}s")


if __name__ == "__main__":
    main()
