"""Command-line entry point: ``ffdgan <command> [--seed S] [--config PATH] [--out DIR] ...``.

Outputs are written to a scratch directory next to ``--out`` and moved into
place only when the command succeeds, so failures leave no partial artifacts.
"""
from __future__ import annotations

import argparse
import json
import logging
import shutil
import sys
import tempfile
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import aero, harness
from . import io as fio
from .bayes_opt import OptBudget, optimize_shape
from .geometry import mean_shape
from .grammar import GrammarConfig, generate_dataset
from .neural.train import TrainConfig, load_checkpoint, save_checkpoint, train
from .parameterizations import BsplineParam, FFDParam, GanParam

log = logging.getLogger("ffdgan")

PARAM_DEFAULTS = {"ffd_degrees": [2, 3, 1], "ffd_bound": 0.1, "bspline_rows": 4, "bspline_cols": 14,
                  "sweep_bound": 5.0, "z_bound": 0.1}


def _dataclass_kwargs(cls, section: dict) -> dict:
    names = {f.name for f in fields(cls)}
    unknown = set(section) - names
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return dict(section)


def _param_settings(cfg: dict) -> dict:
    unknown = set(cfg["params"]) - set(PARAM_DEFAULTS)
    if unknown:
        raise ValueError(f"unknown params keys: {sorted(unknown)}")
    return {**PARAM_DEFAULTS, **cfg["params"]}


def build_param(kind: str, args, cfg: dict):
    ps = _param_settings(cfg)
    if kind == "ffdgan":
        if not args.checkpoint:
            raise ValueError("--param ffdgan needs --checkpoint")
        G, _, _ = load_checkpoint(args.checkpoint)
        return GanParam(G, str(args.checkpoint))
    if not args.data:
        raise ValueError(f"--param {kind} needs --data (the base shape is the training-set mean)")
    base = mean_shape(fio.load_dataset(args.data).train)
    if kind == "ffd":
        return FFDParam(base, ps["ffd_degrees"], ps["ffd_bound"])
    if kind == "bspline":
        return BsplineParam(base, ps["bspline_rows"], ps["bspline_cols"], ps["sweep_bound"], ps["z_bound"])
    raise ValueError(f"unknown parameterization {kind!r}")


# --- commands ------------------------------------------------------------------


def cmd_gen_dataset(args, cfg, out: Path) -> dict:
    gcfg = GrammarConfig(**_dataclass_kwargs(GrammarConfig, cfg["grammar"]))
    ds = generate_dataset(gcfg, args.count, args.seed)
    fio.save_dataset(ds, out / "dataset")
    return {"count": len(ds.grids), "train": len(ds.train_idx), "test": len(ds.test_idx)}


def cmd_train(args, cfg, out: Path) -> dict:
    tc = dict(_dataclass_kwargs(TrainConfig, cfg["train"]))
    tc["seed"] = args.seed
    if args.iters is not None:
        tc["iterations"] = args.iters
    if args.latent_dim is not None:
        tc["latent_dim"] = args.latent_dim
    tcfg = TrainConfig(**tc)
    ds = fio.load_dataset(args.data)
    res = train(ds.train, tcfg, checkpoint_path=out / "generator")
    save_checkpoint(out / "generator", res.generator, tcfg, tcfg.iterations, res.discriminator)
    fio.write_csv(out / "losses.csv", res.history,
                  ["iteration", "wasserstein", "r1", "r2", "grad_norm", "loss_d", "loss_g"])
    return {"iterations": tcfg.iterations, "final_wasserstein": res.history[-1]["wasserstein"]}


def cmd_sample(args, cfg, out: Path) -> dict:
    G, _, _ = load_checkpoint(args.checkpoint)
    rng = np.random.default_rng([args.seed, 13])
    Z = rng.uniform(-1.0, 1.0, (args.n, G.latent_dim))
    grids = G.forward(Z)[1]
    rows = []
    for i, g in enumerate(grids):
        fio.export_obj(g, out / f"sample_{i:04d}.obj", f"sample_{i}")
        ev = harness.evaluate_sample(g)
        rows.append({"sample_id": i, **{f"z{k}": float(v) for k, v in enumerate(Z[i])}, **ev})
    fio.write_csv(out / "samples.csv", rows)
    return {"n": args.n, "geometric_ok": int(sum(r["geometric_ok"] for r in rows))}


def cmd_traverse(args, cfg, out: Path) -> dict:
    G, _, _ = load_checkpoint(args.checkpoint)
    rng = np.random.default_rng([args.seed, 17])
    others = np.zeros(G.latent_dim) if args.zero_rest else rng.uniform(-1.0, 1.0, G.latent_dim)
    grids = harness.latent_traverse(G, args.dim, args.steps, others)
    for i, g in enumerate(grids):
        fio.export_obj(g, out / f"traverse_d{args.dim:02d}_{i:03d}.obj", f"step_{i}")
    values = np.linspace(-1.0, 1.0, args.steps)
    fio.write_csv(out / "traverse.csv", [{"step": i, "dim": args.dim, "value": float(v)} for i, v in enumerate(values)])
    return {"steps": args.steps}


def cmd_fit(args, cfg, out: Path) -> dict:
    param = build_param(args.param, args, cfg)
    ds = fio.load_dataset(args.data)
    rng = np.random.default_rng([args.seed, 19])
    pick = np.sort(rng.choice(len(ds.test_idx), size=min(args.targets, len(ds.test_idx)), replace=False))
    rows = harness.coverage_test(param, ds.test[pick], seed=args.seed)
    for r, k in zip(rows, pick):
        r["target_id"] = int(ds.test_idx[k])
    fio.write_csv(out / "coverage.csv", rows, ["target_id", "param_name", "dims", "mse", "hausdorff"])
    return {"mean_hausdorff": float(np.mean([r["hausdorff"] for r in rows]))}


def cmd_feasibility(args, cfg, out: Path) -> dict:
    param = build_param(args.param, args, cfg)
    rep = harness.feasibility_ratio(param, args.samples, args.seed, args.alpha)
    fio.write_csv(out / "feasibility.csv", rep.rows, ["sample_id", "geometric_ok", "CL", "LD", "feasible"])
    summary = {"param": args.param, "dims": param.space.dim, "samples": rep.n_samples, "ratio": rep.ratio,
               "half_width_95": rep.half_width}
    (out / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True))
    return summary


def cmd_optimize(args, cfg, out: Path) -> dict:
    param = build_param(args.param, args, cfg)
    bo = {**cfg["bayes_opt"]}
    if args.n_init is not None:
        bo["n_init"] = args.n_init
    if args.n_seq is not None:
        bo["n_seq"] = args.n_seq
    budget = OptBudget(**bo)
    ck = out / "bo_checkpoint.json"
    if args.resume:
        shutil.copyfile(args.resume, ck)
    rows = optimize_shape(param, budget, args.seed, checkpoint=ck)
    dim = param.space.dim
    flat = [{"iteration": r["iteration"], "phase": r["phase"], **{f"x{k}": r["x"][k] for k in range(dim)},
             "alpha_deg": r["alpha_deg"], "CL": r["CL"], "CD": r["CD"], "LD": r["LD"],
             "best_so_far": r["best_so_far"]} for r in rows]
    fio.write_csv(out / "history.csv", flat)
    return {"best_LD": rows[-1]["best_so_far"], "evaluations": len(rows)}


def cmd_eval(args, cfg, out: Path) -> dict:
    grid = fio.import_obj(args.wing)
    if grid.ndim != 3:
        raise ValueError(f"{args.wing}: OBJ lacks the grid-shape header")
    res = aero.lifting_line_solve(grid, aero.FlowCondition(alpha=args.alpha))
    doc = {"alpha_deg": args.alpha, "CL": res.CL, "CDi": res.CDi, "CD0": res.CD0, "CD": res.CD, "LD": res.LD,
           "AR": res.AR, "feasible": aero.feasibility(grid, 2.0)}
    (out / "aero.json").write_text(json.dumps(doc, indent=1, sort_keys=True))
    return doc


COMMANDS = {"gen-dataset": cmd_gen_dataset, "train": cmd_train, "sample": cmd_sample, "traverse": cmd_traverse,
            "fit": cmd_fit, "feasibility": cmd_feasibility, "optimize": cmd_optimize, "eval": cmd_eval}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ffdgan", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, help_):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--seed", type=int, default=0)
        s.add_argument("--config", type=Path, default=None)
        s.add_argument("--out", type=Path, required=True)
        return s

    s = add("gen-dataset", "sample wings from the grammar")
    s.add_argument("--count", type=int, default=2000)
    s = add("train", "train FFD-GAN on a dataset")
    s.add_argument("--data", type=Path, required=True)
    s.add_argument("--iters", type=int, default=None)
    s.add_argument("--latent-dim", type=int, default=None)
    s = add("sample", "export random generator samples as OBJ")
    s.add_argument("--checkpoint", type=Path, required=True)
    s.add_argument("--n", type=int, default=16)
    s = add("traverse", "sweep one latent dimension and export OBJ meshes")
    s.add_argument("--checkpoint", type=Path, required=True)
    s.add_argument("--dim", type=int, default=0)
    s.add_argument("--steps", type=int, default=9)
    s.add_argument("--zero-rest", action="store_true", help="hold the other latent entries at 0")
    for name, help_ in (("fit", "coverage (fitting) test on test-set targets"),
                        ("feasibility", "Monte-Carlo feasibility ratio"),
                        ("optimize", "LHS + GP-UCB lift-to-drag optimization")):
        s = add(name, help_)
        s.add_argument("--param", choices=["ffd", "bspline", "ffdgan"], required=True)
        s.add_argument("--data", type=Path, default=None)
        s.add_argument("--checkpoint", type=Path, default=None)
        if name == "fit":
            s.add_argument("--targets", type=int, default=100)
        elif name == "feasibility":
            s.add_argument("--samples", type=int, default=1000)
            s.add_argument("--alpha", type=float, default=2.0)
        else:
            s.add_argument("--n-init", type=int, default=None)
            s.add_argument("--n-seq", type=int, default=None)
            s.add_argument("--resume", type=Path, default=None)
    s = add("eval", "lifting-line evaluation of one wing OBJ")
    s.add_argument("--wing", type=Path, required=True)
    s.add_argument("--alpha", type=float, default=2.0)
    return p


def _publish(tmp: Path, out: Path):
    out.mkdir(parents=True, exist_ok=True)
    for f in sorted(tmp.iterdir()):
        dest = out / f.name
        if dest.is_dir():
            shutil.rmtree(dest)
        shutil.move(str(f), dest)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    out = args.out
    tmp = None
    try:
        cfg = fio.load_config(args.config) if args.config else {s: {} for s in fio.CONFIG_SECTIONS}
        out.parent.mkdir(parents=True, exist_ok=True)
        tmp = Path(tempfile.mkdtemp(prefix=f".{out.name}.partial-", dir=out.parent))
        result = COMMANDS[args.command](args, cfg, tmp)
        options = {k: str(v) if isinstance(v, Path) else v for k, v in sorted(vars(args).items())}
        fio.write_manifest(tmp, ["ffdgan", *argv], cfg, args.seed, {"options": options})
        _publish(tmp, out)
    except Exception as exc:  # noqa: BLE001  report any failure as a nonzero exit
        print(f"ffdgan {args.command}: error: {exc}", file=sys.stderr)
        if args.verbose:
            log.exception("command failed")
        return 1
    finally:
        if tmp is not None and tmp.exists():
            shutil.rmtree(tmp, ignore_errors=True)
    print(json.dumps(result, sort_keys=True, default=float))
    return 0


if __name__ == "__main__":
    sys.exit(main())
