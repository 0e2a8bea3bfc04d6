"""Probabilistic wing grammar and dataset synthesis.

Each wing is a chain of 4-8 spanwise sections. Every attribute of section i is
drawn uniformly between bounds that depend on section i-1, so chord tapers
monotonically, twist drifts by bounded steps, the leading edge sweeps back and
rises gently. The UIUC airfoil catalogue is replaced by the NACA 4-digit family.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .geometry import leading_edge_index, self_intersection_check


@dataclass(frozen=True)
class AirfoilSection:
    """Closed, unit-chord airfoil; ``points`` is (N, 2) in (x, z), TE->upper->LE->lower->TE."""

    points: np.ndarray
    name: str = ""

    @property
    def n_points(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class WingSection:
    span_fraction: float
    chord: float
    twist: float  # degrees, nose-up positive
    le_x: float
    le_z: float
    airfoil: AirfoilSection


@dataclass(frozen=True)
class WingSpec:
    sections: tuple[WingSection, ...]

    def __post_init__(self):
        secs = self.sections
        if not 4 <= len(secs) <= 8:
            raise ValueError(f"wing needs 4 to 8 sections, got {len(secs)}")
        s = np.array([sec.span_fraction for sec in secs])
        if s[0] != 0.0 or s[-1] != 1.0 or np.any(np.diff(s) <= 0):
            raise ValueError("span fractions must increase strictly from 0 to 1")
        c = np.array([sec.chord for sec in secs])
        if np.any(c <= 0) or np.any(np.diff(c) > 0):
            raise ValueError("chords must be positive and non-increasing root to tip")


@dataclass
class GrammarConfig:
    """Bounds of the wing grammar. Lengths are in half-span units, angles in degrees.

    ``chord_step`` is the largest fractional chord reduction from one section to
    the next; ``sweep_slope`` bounds the LE x-offset increment per unit span;
    ``dihedral_step`` bounds the LE z-offset increment per section.
    """

    min_sections: int = 4
    max_sections: int = 8
    root_chord: tuple[float, float] = (0.15, 0.45)
    min_taper: float = 0.2
    chord_step: float = 0.4
    twist_step: tuple[float, float] = (-5.0, 5.0)
    twist_total: tuple[float, float] = (-10.0, 10.0)
    sweep_slope: tuple[float, float] = (0.0, 0.5)
    dihedral_step: tuple[float, float] = (0.0, 0.03)
    camber: tuple[float, float] = (0.0, 0.06)
    camber_pos: tuple[float, float] = (0.3, 0.6)
    thickness: tuple[float, float] = (0.08, 0.16)
    uniform_span: bool = False
    M: int = 21
    N: int = 199

    def __post_init__(self):
        for name in ("root_chord", "twist_step", "twist_total", "sweep_slope",
                     "dihedral_step", "camber", "camber_pos", "thickness"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name}: lower bound {lo} exceeds upper bound {hi}")
            setattr(self, name, (float(lo), float(hi)))
        if not 1 <= self.min_sections <= self.max_sections:
            raise ValueError("invalid section count range")

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def naca4_airfoil(m: float, p: float, t: float, n_points: int = 199) -> AirfoilSection:
    """NACA 4-digit section with closed trailing edge on cosine-spaced stations.

    ``m`` is max camber, ``p`` its chordwise position, ``t`` max thickness, all
    as chord fractions. The result is re-normalised so the minimum-x point (in
    the chord frame) sits at the origin and the trailing edge at (1, 0).
    """
    if not 0.0 <= m <= 0.09:
        raise ValueError(f"camber {m} outside [0, 0.09]")
    if m > 0 and not 0.2 <= p <= 0.7:
        raise ValueError(f"camber position {p} outside [0.2, 0.7]")
    if not 0.06 <= t <= 0.18:
        raise ValueError(f"thickness {t} outside [0.06, 0.18]")
    if n_points < 65 or n_points % 2 == 0:
        raise ValueError("point count must be odd and >= 65")

    k = (n_points + 1) // 2
    x = 0.5 * (1.0 - np.cos(np.linspace(0.0, np.pi, k)))
    yt = 5.0 * t * (0.2969 * np.sqrt(x) - 0.1260 * x - 0.3516 * x**2 + 0.2843 * x**3 - 0.1036 * x**4)
    yt[-1] = 0.0
    yc = np.zeros_like(x)
    dyc = np.zeros_like(x)
    if m > 0:
        fore = x < p
        yc[fore] = m / p**2 * (2 * p * x[fore] - x[fore] ** 2)
        dyc[fore] = 2 * m / p**2 * (p - x[fore])
        aft = ~fore
        yc[aft] = m / (1 - p) ** 2 * ((1 - 2 * p) + 2 * p * x[aft] - x[aft] ** 2)
        dyc[aft] = 2 * m / (1 - p) ** 2 * (p - x[aft])
        yc[-1] = 0.0
    th = np.arctan(dyc)
    upper = np.stack([x - yt * np.sin(th), yc + yt * np.cos(th)], axis=1)
    lower = np.stack([x + yt * np.sin(th), yc - yt * np.cos(th)], axis=1)
    pts = np.concatenate([upper[::-1], lower[1:]], axis=0)
    pts[-1] = pts[0]
    name = f"NACA {m:.3f}/{p:.2f}/{t:.3f}"
    return AirfoilSection(normalize_airfoil(pts), name)


def normalize_airfoil(pts: np.ndarray) -> np.ndarray:
    """Move the leading edge to the origin and the trailing edge to (1, 0)."""
    pts = np.asarray(pts, dtype=float)
    le = pts[leading_edge_index(np.insert(pts, 1, 0.0, axis=1))]
    rel = pts - le
    te = rel[0]
    chord = np.hypot(*te)
    c, s = te / chord
    out = np.empty_like(rel)
    out[:, 0] = (rel[:, 0] * c + rel[:, 1] * s) / chord
    out[:, 1] = (-rel[:, 0] * s + rel[:, 1] * c) / chord
    out[-1] = out[0]
    return out


def load_airfoil(path, n_points: int = 199) -> AirfoilSection:
    """Read a Selig-format coordinate file and resample it onto cosine stations.

    The first non-numeric line is taken as the name. Coordinates must run from
    the trailing edge over the upper surface to the leading edge and back.
    """
    name, rows = "", []
    for line in Path(path).read_text().splitlines():
        parts = line.split()
        if len(parts) < 2:
            continue
        try:
            rows.append((float(parts[0]), float(parts[1])))
        except ValueError:
            name = name or line.strip()
    pts = np.array(rows)
    if len(pts) < 5:
        raise ValueError(f"{path}: too few coordinates")
    i_le = int(np.argmin(pts[:, 0]))
    upper = pts[: i_le + 1][::-1]
    lower = pts[i_le:]
    k = (n_points + 1) // 2
    x0, x1 = pts[i_le, 0], max(upper[-1, 0], lower[-1, 0])
    xs = x0 + (x1 - x0) * 0.5 * (1.0 - np.cos(np.linspace(0.0, np.pi, k)))
    zu = np.interp(xs, upper[:, 0], upper[:, 1])
    zl = np.interp(xs, lower[:, 0], lower[:, 1])
    zte = 0.5 * (zu[-1] + zl[-1])
    zu[-1] = zl[-1] = zte
    up = np.stack([xs, zu], axis=1)
    lo = np.stack([xs, zl], axis=1)
    out = np.concatenate([up[::-1], lo[1:]], axis=0)
    out[-1] = out[0]
    return AirfoilSection(normalize_airfoil(out), name or Path(path).stem)


def _sample_airfoil(cfg: GrammarConfig, rng: np.random.Generator) -> AirfoilSection:
    m = rng.uniform(*cfg.camber)
    p = rng.uniform(*cfg.camber_pos)
    t = rng.uniform(*cfg.thickness)
    return naca4_airfoil(m, p, t, cfg.N)


def _span_fractions(n: int, cfg: GrammarConfig, rng: np.random.Generator) -> np.ndarray:
    even = np.linspace(0.0, 1.0, n)
    if cfg.uniform_span:
        return even
    inner = np.sort(rng.uniform(0.0, 1.0, n - 2))
    s = even.copy()
    # half-and-half blend keeps every gap >= 0.5 / (n - 1)
    s[1:-1] = 0.5 * even[1:-1] + 0.5 * inner
    return s


def sample_wing(cfg: GrammarConfig, rng: np.random.Generator) -> WingSpec:
    n = int(rng.integers(cfg.min_sections, cfg.max_sections + 1))
    span = _span_fractions(n, cfg, rng)
    root = rng.uniform(*cfg.root_chord)
    sections = [WingSection(0.0, root, 0.0, 0.0, 0.0, _sample_airfoil(cfg, rng))]
    for i in range(1, n):
        prev = sections[-1]
        ds = span[i] - span[i - 1]
        c_lo = max(cfg.min_taper * root, (1.0 - cfg.chord_step) * prev.chord)
        chord = rng.uniform(c_lo, prev.chord)
        t_lo = max(cfg.twist_total[0], prev.twist + cfg.twist_step[0])
        t_hi = min(cfg.twist_total[1], prev.twist + cfg.twist_step[1])
        twist = rng.uniform(t_lo, t_hi)
        le_x = prev.le_x + ds * rng.uniform(*cfg.sweep_slope)
        le_z = prev.le_z + rng.uniform(*cfg.dihedral_step)
        sections.append(WingSection(float(span[i]), chord, twist, le_x, le_z, _sample_airfoil(cfg, rng)))
    return WingSpec(tuple(sections))


def realize_surface(spec: WingSpec, M: int = 21, N: int = 199) -> np.ndarray:
    """Loft ``spec`` onto M uniformly spaced span stations by linear interpolation."""
    secs = spec.sections
    if M < len(secs):
        raise ValueError(f"M={M} is smaller than the section count {len(secs)}")
    if any(s.airfoil.n_points != N for s in secs):
        raise ValueError(f"airfoil point counts do not match N={N}")
    s = np.array([sec.span_fraction for sec in secs])
    attrs = np.array([[sec.chord, sec.twist, sec.le_x, sec.le_z] for sec in secs])
    foils = np.stack([sec.airfoil.points for sec in secs])

    y = np.linspace(0.0, 1.0, M)
    idx = np.clip(np.searchsorted(s, y, side="right") - 1, 0, len(s) - 2)
    w = (y - s[idx]) / (s[idx + 1] - s[idx])
    a = (1 - w)[:, None] * attrs[idx] + w[:, None] * attrs[idx + 1]
    f = (1 - w)[:, None, None] * foils[idx] + w[:, None, None] * foils[idx + 1]
    # endpoints reproduce the section data bit-for-bit
    at_sec = np.isclose(w, 0.0, rtol=0, atol=1e-15)
    a[at_sec] = attrs[idx[at_sec]]
    f[at_sec] = foils[idx[at_sec]]
    at_next = np.isclose(w, 1.0, rtol=0, atol=1e-15)
    a[at_next] = attrs[idx[at_next] + 1]
    f[at_next] = foils[idx[at_next] + 1]

    chord, twist, le_x, le_z = a.T
    t = np.radians(twist)[:, None]
    c, sn = np.cos(t), np.sin(t)
    xr = f[..., 0] * c + f[..., 1] * sn
    zr = -f[..., 0] * sn + f[..., 1] * c
    grid = np.empty((M, N, 3))
    grid[..., 0] = le_x[:, None] + chord[:, None] * xr
    grid[..., 1] = y[:, None]
    grid[..., 2] = le_z[:, None] + chord[:, None] * zr
    return grid


@dataclass
class Dataset:
    grids: np.ndarray  # (count, M, N, 3)
    train_idx: np.ndarray
    test_idx: np.ndarray
    seed: int
    config: GrammarConfig = field(default_factory=GrammarConfig)

    @property
    def train(self) -> np.ndarray:
        return self.grids[self.train_idx]

    @property
    def test(self) -> np.ndarray:
        return self.grids[self.test_idx]


def wing_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, index])


def generate_wing(cfg: GrammarConfig, seed: int, index: int, max_tries: int = 100) -> np.ndarray:
    """Draw wing ``index`` of the stream ``seed``, resampling until it is non-self-intersecting."""
    rng = wing_rng(seed, index)
    for _ in range(max_tries):
        grid = realize_surface(sample_wing(cfg, rng), cfg.M, cfg.N)
        if not self_intersection_check(grid):
            return grid
    raise RuntimeError(f"no feasible wing after {max_tries} draws (seed={seed}, index={index})")


def split_indices(count: int, seed: int, train_fraction: float = 0.8) -> tuple[np.ndarray, np.ndarray]:
    order = np.random.default_rng([seed, count, 2**31 - 1]).permutation(count)
    n_train = int(round(train_fraction * count))
    return np.sort(order[:n_train]), np.sort(order[n_train:])


def generate_dataset(cfg: GrammarConfig, count: int, seed: int) -> Dataset:
    if count < 10:
        raise ValueError("dataset needs at least 10 wings")
    grids = np.stack([generate_wing(cfg, seed, i) for i in range(count)])
    train, test = split_indices(count, seed)
    return Dataset(grids, train, test, seed, cfg)
