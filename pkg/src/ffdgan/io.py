"""Dataset files, OBJ meshes, CSV tables, run manifests and configuration documents."""
from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from . import __version__
from .geometry import check_grid
from .grammar import Dataset, GrammarConfig

# --- dataset -----------------------------------------------------------------
# <stem>.json: {"format": "ffdgan-dataset", "version": 1, "count", "M", "N", "seed",
#   "config", "config_hash", "train_idx", "test_idx", "dtype": "<f4"}
# <stem>.bin:  count * M * N * 3 little-endian float32, wing-major then row-major.


def _stem_paths(path):
    p = Path(path)
    stem = p.with_suffix("") if p.suffix in (".json", ".bin") else p
    return stem.with_suffix(".json"), stem.with_suffix(".bin")


def save_dataset(ds: Dataset, path) -> tuple[Path, Path]:
    head, body = _stem_paths(path)
    head.parent.mkdir(parents=True, exist_ok=True)
    count, M, N, _ = ds.grids.shape
    body.write_bytes(np.ascontiguousarray(ds.grids, dtype="<f4").tobytes())
    header = {"format": "ffdgan-dataset", "version": 1, "count": int(count), "M": int(M), "N": int(N),
              "seed": int(ds.seed), "config": ds.config.to_dict(), "config_hash": ds.config.digest(),
              "train_idx": [int(i) for i in ds.train_idx], "test_idx": [int(i) for i in ds.test_idx],
              "dtype": "<f4"}
    head.write_text(json.dumps(header, indent=1, sort_keys=True))
    return head, body


def load_dataset(path) -> Dataset:
    head, body = _stem_paths(path)
    h = json.loads(head.read_text())
    if h.get("format") != "ffdgan-dataset":
        raise ValueError(f"{head}: not an ffdgan dataset")
    shape = (h["count"], h["M"], h["N"], 3)
    raw = body.read_bytes()
    if len(raw) != 4 * int(np.prod(shape)):
        raise ValueError(f"{body}: expected {4 * int(np.prod(shape))} bytes, found {len(raw)}")
    grids = np.frombuffer(raw, dtype="<f4").reshape(shape).astype(float)
    cfg = GrammarConfig(**h["config"])
    return Dataset(grids, np.array(h["train_idx"], dtype=int), np.array(h["test_idx"], dtype=int), h["seed"], cfg)


# --- OBJ ---------------------------------------------------------------------


def export_obj(grid, path, name: str = "wing") -> Path:
    """Write an M x N grid as vertices (row-major) and quads between adjacent sections.

    Each section is a closed loop, so the surface is closed chordwise except for
    the TE seam between the first and last points; root and tip are left open.
    """
    g = check_grid(grid)
    M, N, _ = g.shape
    if M < 2 or N < 2:
        raise ValueError("OBJ export needs at least 2 sections and 2 points per section")
    lines = [f"# ffdgan wing grid {M} {N}", f"o {name}"]
    lines += [f"v {x:.9g} {y:.9g} {z:.9g}" for x, y, z in g.reshape(-1, 3)]
    for i in range(M - 1):
        for j in range(N - 1):
            a = i * N + j + 1
            b = (i + 1) * N + j + 1
            lines.append(f"f {a} {a + 1} {b + 1} {b}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")
    return path


def import_obj(path) -> np.ndarray:
    """Read vertices back; returns an (M, N, 3) grid when the header gives the shape."""
    verts, shape = [], None
    for line in Path(path).read_text().splitlines():
        if line.startswith("# ffdgan wing grid"):
            shape = tuple(int(v) for v in line.split()[-2:])
        elif line.startswith("v "):
            verts.append([float(v) for v in line.split()[1:4]])
    v = np.array(verts, dtype=float).reshape(-1, 3)
    return v.reshape(*shape, 3) if shape else v


# --- CSV, manifests, config -------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "nan" if np.isnan(v) else repr(v)
    return str(v)


def write_csv(path, rows: list[dict], columns: list[str] | None = None) -> Path:
    """CSV with '.' decimals and shortest round-trip float text regardless of locale."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    columns = columns or (list(rows[0].keys()) if rows else [])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])
    return path


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, default=str).encode()).hexdigest()[:16]


def write_manifest(out_dir, argv: list[str], config: dict, seed: int, extra: dict | None = None) -> Path:
    """Everything needed to rerun the command: argv, resolved config, its hash, seed, code version."""
    doc = {"command": list(argv), "config": config, "config_hash": config_hash(config), "seed": int(seed),
           "code_version": __version__}
    if extra:
        doc.update(extra)
    path = Path(out_dir) / "manifest.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=1, sort_keys=True, default=str))
    return path


CONFIG_SECTIONS = ("grammar", "train", "params", "harness", "bayes_opt")


def load_config(path) -> dict:
    """YAML or JSON document with per-module sections; missing sections are empty."""
    text = Path(path).read_text()
    if Path(path).suffix in (".yaml", ".yml"):
        import yaml

        try:
            doc = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ValueError(f"malformed config {path}: {exc}") from exc
    else:
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValueError(f"malformed config {path}: {exc}") from exc
    doc = doc or {}
    if not isinstance(doc, dict):
        raise ValueError(f"config {path} must be a mapping of sections")
    unknown = set(doc) - set(CONFIG_SECTIONS)
    if unknown:
        raise ValueError(f"unknown config sections: {sorted(unknown)}")
    for k, v in doc.items():
        if not isinstance(v, dict):
            raise ValueError(f"config section {k!r} must be a mapping")
    return {s: dict(doc.get(s, {})) for s in CONFIG_SECTIONS}
