"""WGAN-GP training of FFD-GAN, Adam, and checkpoint I/O."""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .. import geometry as geo
from ..errors import NumericError
from .models import (DiscriminatorNet, FFDLayer, GeneratorNet, flatten_grids, gradient_penalty,
                     offset_penalty)
from .tape import Node, grad, no_grad

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    latent_dim: int = 15
    iterations: int = 10_000
    batch_size: int = 64
    n_critic: int = 5
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.9
    gamma1: float = 10.0
    gamma2: float = 1.0
    lattice: tuple[int, int, int] = (3, 7, 1)
    g_widths: tuple[int, ...] = (256, 256)
    d_widths: tuple[int, ...] = (512, 256)
    slope: float = 0.2
    d_stride: int = 8
    dtype: str = "float32"
    seed: int = 0
    checkpoint_every: int = 0

    def __post_init__(self):
        self.lattice = tuple(int(v) for v in self.lattice)
        self.g_widths = tuple(int(v) for v in self.g_widths)
        self.d_widths = tuple(int(v) for v in self.d_widths)
        for name in ("latent_dim", "iterations", "batch_size", "n_critic", "d_stride"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if min(self.lr, self.gamma1) <= 0 or self.gamma2 < 0:
            raise ValueError("learning rate and penalty weights must be positive")

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}


def adam_step(params, grads, state, lr=2e-4, beta1=0.5, beta2=0.9, eps=1e-8):
    """One bias-corrected Adam update. Returns (new_params, new_state)."""
    if len(params) != len(grads):
        raise ValueError("params and grads differ in length")
    if state is None or not state:
        state = {"t": 0, "m": [np.zeros_like(p) for p in params], "v": [np.zeros_like(p) for p in params]}
    t = state["t"] + 1
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state["m"], state["v"]):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        g = g.astype(p.dtype, copy=False)
        m = m * beta1
        m += (1 - beta1) * g
        v = v * beta2
        v += (1 - beta2) * (g * g)
        denom = np.sqrt(v)
        denom *= 1.0 / np.sqrt(c2)
        denom += eps
        step = m / denom
        step *= lr / c1
        new_p.append(p - step)
        new_m.append(m)
        new_v.append(v)
    return new_p, {"t": t, "m": new_m, "v": new_v}


class _Adam:
    def __init__(self, nodes, cfg: TrainConfig):
        self.nodes, self.cfg, self.state = nodes, cfg, None

    def step(self, grads):
        params, self.state = adam_step([n.value for n in self.nodes], [g.value for g in grads], self.state,
                                       self.cfg.lr, self.cfg.beta1, self.cfg.beta2)
        for n, p in zip(self.nodes, params):
            n.value = p


@dataclass
class TrainResult:
    generator: GeneratorNet
    discriminator: DiscriminatorNet
    history: list[dict] = field(default_factory=list)


def build_models(base_grid, cfg: TrainConfig) -> tuple[GeneratorNet, DiscriminatorNet]:
    ffd = FFDLayer.from_base_shape(base_grid, cfg.lattice)
    G = GeneratorNet(cfg.latent_dim, ffd, cfg.g_widths, cfg.slope, cfg.seed, cfg.dtype, cfg.d_stride)
    M, N = ffd.grid_shape
    n_in = 3 * M * len(range(0, N, cfg.d_stride))
    D = DiscriminatorNet(n_in, cfg.d_widths, cfg.slope, cfg.seed, cfg.dtype)
    return G, D


def critic_step(G, D, real, z, eps, gamma1):
    with no_grad():
        fake = G(Node(z))[1].value
    d_real = D(Node(real)).mean()
    d_fake = D(Node(fake)).mean()
    e = eps.reshape(-1, 1).astype(real.dtype)
    x_hat = Node(e * real + (1 - e) * fake, requires_grad=True)
    r1, norms = gradient_penalty(D, x_hat)
    loss = d_fake - d_real + gamma1 * r1
    return loss, float(d_real.value - d_fake.value), float(r1.value), float(norms.mean())


def generator_step(G, D, z, gamma2):
    offsets, fake = G(Node(z))
    r2 = offset_penalty(offsets, G.ffd.n_control)
    loss = -D(fake).mean() + gamma2 * r2
    return loss, float(r2.value)


def train(train_grids, cfg: TrainConfig, checkpoint_path=None, callback=None) -> TrainResult:
    """Alternate ``n_critic`` critic updates with one generator update.

    ``train_grids`` are aligned (count, M, N, 3) wings; the base shape is their
    mean. History rows hold the Wasserstein estimate, R1, R2 and both losses.
    """
    train_grids = np.asarray(train_grids, dtype=float)
    base = geo.mean_shape(train_grids)
    G, D = build_models(base, cfg)
    real_all = flatten_grids(train_grids, cfg.d_stride, cfg.dtype)
    rng = np.random.default_rng([cfg.seed, 3])
    opt_d, opt_g = _Adam(D.params, cfg), _Adam(G.params, cfg)
    result = TrainResult(G, D)
    B, dz, dt = cfg.batch_size, cfg.latent_dim, np.dtype(cfg.dtype)

    for it in range(1, cfg.iterations + 1):
        try:
            for _ in range(cfg.n_critic):
                real = real_all[rng.integers(0, len(real_all), B)]
                z = rng.uniform(-1.0, 1.0, (B, dz)).astype(dt)
                eps = rng.uniform(0.0, 1.0, B)
                loss_d, wdist, r1, gnorm = critic_step(G, D, real, z, eps, cfg.gamma1)
                if not np.isfinite(loss_d.value):
                    raise NumericError("critic loss is not finite")
                opt_d.step(grad(loss_d, D.params))
            z = rng.uniform(-1.0, 1.0, (B, dz)).astype(dt)
            loss_g, r2 = generator_step(G, D, z, cfg.gamma2)
            if not np.isfinite(loss_g.value):
                raise NumericError("generator loss is not finite")
            opt_g.step(grad(loss_g, G.params))
        except NumericError as exc:
            _abort(result, checkpoint_path, it, cfg, str(exc))
        row = {"iteration": it, "wasserstein": wdist, "r1": r1, "r2": r2, "grad_norm": gnorm,
               "loss_d": float(loss_d.value), "loss_g": float(loss_g.value)}
        result.history.append(row)
        if callback is not None:
            callback(row)
        if it % 100 == 0:
            log.info("iter %d  W=%.4f  R1=%.4f  R2=%.5f", it, wdist, r1, r2)
        if checkpoint_path and cfg.checkpoint_every and it % cfg.checkpoint_every == 0:
            save_checkpoint(checkpoint_path, G, cfg, it, D)
    G.trained = True
    return result


def _abort(result, path, it, cfg, reason):
    if path:
        save_checkpoint(path, result.generator, cfg, it - 1, result.discriminator)
    raise NumericError(f"training diverged at iteration {it}: {reason}")


# --- checkpoints -------------------------------------------------------------
# <stem>.json: {"format": "ffdgan-checkpoint", "version": 1, "iteration", "config",
#   "grid_shape", "blocks": [{"name", "dtype", "shape", "offset", "nbytes"}]}
# <stem>.bin:  blocks concatenated in header order, little-endian, row-major.
#   Weights are "<f4"; the base grid and bounding box are "<f8" so the FFD
#   basis is rebuilt bit-exactly.

def _paths(path):
    p = Path(path)
    stem = p.with_suffix("") if p.suffix in (".json", ".bin") else p
    return stem.with_suffix(".json"), stem.with_suffix(".bin")


def save_checkpoint(path, G: GeneratorNet, cfg: TrainConfig, iteration: int, D: DiscriminatorNet | None = None):
    head_path, bin_path = _paths(path)
    head_path.parent.mkdir(parents=True, exist_ok=True)
    blocks = [("ffd.base_grid", "<f8", G.ffd.base_points_source),
              ("ffd.box", "<f8", np.stack([G.ffd.lattice.box.lo, G.ffd.lattice.box.hi]))]
    for i, p in enumerate(G.params):
        blocks.append((f"generator.{i}", "<f4", p.value))
    if D is not None:
        for i, p in enumerate(D.params):
            blocks.append((f"discriminator.{i}", "<f4", p.value))
    meta, offset = [], 0
    with open(bin_path, "wb") as fh:
        for name, dtype, arr in blocks:
            raw = np.ascontiguousarray(arr, dtype=dtype).tobytes()
            fh.write(raw)
            meta.append({"name": name, "dtype": dtype, "shape": list(np.shape(arr)), "offset": offset,
                         "nbytes": len(raw)})
            offset += len(raw)
    header = {"format": "ffdgan-checkpoint", "version": 1, "iteration": int(iteration),
              "config": cfg.to_dict(), "grid_shape": list(G.ffd.grid_shape), "blocks": meta}
    head_path.write_text(json.dumps(header, indent=1, sort_keys=True))
    return head_path, bin_path


def load_checkpoint(path) -> tuple[GeneratorNet, TrainConfig, dict]:
    head_path, bin_path = _paths(path)
    header = json.loads(head_path.read_text())
    if header.get("format") != "ffdgan-checkpoint":
        raise ValueError(f"{head_path}: not an ffdgan checkpoint")
    cfg = TrainConfig(**header["config"])
    raw = bin_path.read_bytes()
    arrays = {}
    for b in header["blocks"]:
        arrays[b["name"]] = np.frombuffer(raw, dtype=b["dtype"], count=int(np.prod(b["shape"])),
                                          offset=b["offset"]).reshape(b["shape"])
    box = geo.BoundingBox(*arrays["ffd.box"])
    base = arrays["ffd.base_grid"].astype(float)
    ffd = FFDLayer.with_box(base, box, cfg.lattice)
    G = GeneratorNet(cfg.latent_dim, ffd, cfg.g_widths, cfg.slope, cfg.seed, cfg.dtype, cfg.d_stride)
    for i, p in enumerate(G.params):
        p.value = arrays[f"generator.{i}"].astype(cfg.dtype).copy()
    G.trained = True
    return G, cfg, header
