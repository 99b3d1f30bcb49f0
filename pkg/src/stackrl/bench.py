"""
Grid benchmark: one episode per (start, agent) over a square of starting
positions, accumulated-cost ratios against MPC, and CSV/JSON/SVG emission.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np
from contourpy import contour_generator
from scipy.interpolate import RegularGridInterpolator

from stackrl.actor import KINDS, MPC, RLQ, RLQV
from stackrl.agents import AgentConfig, run_episode
from stackrl.envs import make_env
from stackrl.errors import ContractViolation

CSV_COLUMNS = (
    "x0",
    "y0",
    "alpha0",
    "J_mpc",
    "J_rlq",
    "J_rlqv",
    "ratio_rlq_pct",
    "ratio_rlqv_pct",
    "term_mpc",
    "term_rlq",
    "term_rlqv",
)
RATIO_FIELDS = ("ratio_rlq_pct", "ratio_rlqv_pct")
UNDEFINED = "undefined"
OUTWARD = "outward"


@dataclass
class BenchConfig:
    """Everything one grid run depends on; every field has a default.

    ``agent`` holds :class:`AgentConfig` fields shared by all agents and
    ``per_agent`` holds overrides keyed by agent kind. ``alpha0`` is either
    ``"outward"`` (``atan2(y0, x0)``) or a fixed angle in radians. With
    ``carry_critics`` each learning agent keeps its critic weights from one
    start to the next (in grid order) instead of starting fresh.
    """

    env: str = "robot3w"
    side: float = 4.0
    ticks: int = 5
    agents: tuple = (MPC, RLQ, RLQV)
    agent: dict = field(default_factory=lambda: {"horizon": 12, "delta": 0.1})
    per_agent: dict = field(default_factory=dict)
    seed: int = 0
    alpha0: object = OUTWARD
    workers: int = 1
    carry_critics: bool = False

    def __post_init__(self):
        self.agents = tuple(self.agents)
        if self.side <= 0:
            raise ContractViolation("polygon side must be positive")
        if self.ticks < 2:
            raise ContractViolation("grid needs at least 2 ticks per side")
        unknown = [a for a in self.agents if a not in KINDS]
        if unknown or not self.agents:
            raise ContractViolation(f"unknown agents {unknown}")
        if len(set(self.agents)) != len(self.agents):
            raise ContractViolation("agents must be distinct")
        if self.alpha0 != OUTWARD and not isinstance(self.alpha0, (int, float)):
            raise ContractViolation("alpha0 must be 'outward' or a number")
        if self.workers < 1:
            raise ContractViolation("workers must be >= 1")
        for kind in self.agents:
            self.agent_config(kind)

    def agent_config(self, kind) -> AgentConfig:
        params = {**self.agent, **self.per_agent.get(kind, {}), "kind": kind, "seed": self.seed}
        names = {f.name for f in fields(AgentConfig)}
        extra = set(params) - names
        if extra:
            raise ContractViolation(f"unknown agent fields {sorted(extra)}")
        return AgentConfig(**params)

    def starts(self):
        """Grid starts sorted by ``(x0, y0)``, with the target itself excluded."""
        ticks = np.linspace(-0.5 * self.side, 0.5 * self.side, self.ticks)
        out = []
        for x in ticks:
            for y in ticks:
                if x == 0.0 and y == 0.0:
                    continue
                a = math.atan2(y, x) if self.alpha0 == OUTWARD else float(self.alpha0)
                out.append((float(x), float(y), a))
        return out

    def to_dict(self):
        out = asdict(self)
        out["agents"] = list(self.agents)
        return out

    @classmethod
    def from_dict(cls, payload):
        names = {f.name for f in fields(cls)}
        extra = set(payload) - names
        if extra:
            raise ContractViolation(f"unknown config fields {sorted(extra)}")
        return cls(**payload)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


@dataclass
class BenchRecord:
    x0: float
    y0: float
    alpha0: float
    J: dict
    term: dict

    def ratio(self, kind):
        if kind not in self.J or MPC not in self.J:
            return None
        return cost_ratio(self.J[kind], self.J[MPC])

    def row(self):
        def num(value):
            return UNDEFINED if value is None else repr(float(value))

        return {
            "x0": repr(self.x0),
            "y0": repr(self.y0),
            "alpha0": repr(self.alpha0),
            "J_mpc": num(self.J.get(MPC)),
            "J_rlq": num(self.J.get(RLQ)),
            "J_rlqv": num(self.J.get(RLQV)),
            "ratio_rlq_pct": num(self.ratio(RLQ)),
            "ratio_rlqv_pct": num(self.ratio(RLQV)),
            "term_mpc": self.term.get(MPC, ""),
            "term_rlq": self.term.get(RLQ, ""),
            "term_rlqv": self.term.get(RLQV, ""),
        }

    def to_dict(self):
        out = asdict(self)
        out["ratios"] = {k: self.ratio(k) for k in self.J if k != MPC}
        return out


def cost_ratio(J_agent, J_mpc):
    """``100 * J_agent / J_mpc`` in percent, ``None`` when ``J_mpc == 0``."""
    if J_agent < 0 or J_mpc < 0:
        raise ContractViolation("accumulated costs must be non-negative")
    if J_mpc == 0:
        return None
    return 100.0 * J_agent / J_mpc


def _episode(job):
    cfg, start, kind = job
    env = make_env(cfg.env)
    trace = run_episode(env, cfg.agent_config(kind), np.array(start))
    return start, kind, trace.J, trace.reason


def _carried_episodes(job):
    cfg, kind = job
    env = make_env(cfg.env)
    agent_cfg = cfg.agent_config(kind)
    critics, out = None, []
    for start in cfg.starts():
        trace = run_episode(env, agent_cfg, np.array(start), critics=critics)
        critics = trace.critics
        out.append((start, kind, trace.J, trace.reason))
    return out


def run_grid(cfg: BenchConfig):
    """One episode per (start, agent); records sorted by ``(x0, y0)``."""
    if cfg.carry_critics:
        # Starts depend on each other, so only agents run in parallel.
        jobs, worker = [(cfg, kind) for kind in cfg.agents], _carried_episodes
    else:
        jobs, worker = [(cfg, start, kind) for start in cfg.starts() for kind in cfg.agents], _episode
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(worker, jobs))
    else:
        results = [worker(job) for job in jobs]
    if cfg.carry_critics:
        results = [item for chunk in results for item in chunk]
    by_start = {}
    for start, kind, J, reason in results:
        rec = by_start.setdefault(start, BenchRecord(*start, J={}, term={}))
        rec.J[kind] = J
        rec.term[kind] = reason
    return [by_start[s] for s in sorted(by_start, key=lambda s: (s[0], s[1]))]


def export_csv(records, path):
    if not records:
        raise ContractViolation("no records to export")
    with open(path, "w", newline="") as fh:
        out = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
        out.writeheader()
        for rec in records:
            out.writerow(rec.row())


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def export_json(records, path):
    Path(path).write_text(json.dumps([r.to_dict() for r in records], indent=2) + "\n")


def median_ratio(records, kind=RLQV):
    vals = [r.ratio(kind) for r in records]
    vals = [v for v in vals if v is not None]
    return float(np.median(vals)) if vals else None


# --------------------------------------------------------------------------
# SVG contour
# --------------------------------------------------------------------------

# Five-stop sequential ramp (dark blue to yellow).
_RAMP = np.array(
    [[68, 1, 84], [59, 82, 139], [33, 145, 140], [94, 201, 98], [253, 231, 37]], dtype=float
)


def _color(t):
    t = float(np.clip(t, 0.0, 1.0)) * (len(_RAMP) - 1)
    i = min(int(t), len(_RAMP) - 2)
    c = _RAMP[i] + (t - i) * (_RAMP[i + 1] - _RAMP[i])
    return "#{:02x}{:02x}{:02x}".format(*np.round(c).astype(int))


def _field_value(record, field_name):
    prefix, _, kind = field_name.partition("_")
    if field_name in RATIO_FIELDS:
        return record.ratio(kind.split("_")[0])
    if prefix == "J" and kind in KINDS:
        return record.J.get(kind)
    raise ContractViolation(f"unknown field {field_name!r}")


def _field_grid(records, field_name):
    xs = sorted({r.x0 for r in records})
    ys = sorted({r.y0 for r in records})
    Z = np.full((len(xs), len(ys)), np.nan)
    for r in records:
        val = _field_value(r, field_name)
        if val is not None:
            Z[xs.index(r.x0), ys.index(r.y0)] = val
    if not np.isfinite(Z).any():
        raise ContractViolation(f"field {field_name!r} has no defined values")
    # Missing nodes (the excluded target, undefined ratios) take the mean of
    # their finite 4-neighbours so interpolation covers the whole square.
    missing = np.argwhere(np.isnan(Z))
    filled = Z.copy()
    for i, j in missing:
        nb = [Z[a, b] for a, b in ((i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1))
              if 0 <= a < Z.shape[0] and 0 <= b < Z.shape[1] and np.isfinite(Z[a, b])]
        filled[i, j] = np.mean(nb) if nb else np.nanmean(Z)
    return np.array(xs), np.array(ys), filled


def contour_levels(Z, count=6):
    lo, hi = float(np.min(Z)), float(np.max(Z))
    if not np.isfinite(lo) or hi - lo <= 1e-12 * max(1.0, abs(hi)):
        return []
    return list(np.linspace(lo, hi, count + 2)[1:-1])


def export_contour(records, field_name, path, size=400, resolution=40):
    """Bilinear heat map of ``field_name`` over the grid with contour lines.

    A constant field renders as a single colour with no lines.
    """
    if not records:
        raise ContractViolation("no records to plot")
    xs, ys, Z = _field_grid(records, field_name)
    if len(xs) < 2 or len(ys) < 2:
        raise ContractViolation("contour needs at least a 2x2 grid")
    interp = RegularGridInterpolator((xs, ys), Z, method="linear")
    gx = np.linspace(xs[0], xs[-1], resolution + 1)
    gy = np.linspace(ys[0], ys[-1], resolution + 1)
    GX, GY = np.meshgrid(gx, gy, indexing="ij")
    fine = interp(np.stack([GX, GY], axis=-1))
    lo, hi = float(Z.min()), float(Z.max())
    span = hi - lo if hi > lo else 1.0

    def px(x):
        return (x - xs[0]) / (xs[-1] - xs[0]) * size

    def py(y):
        return size - (y - ys[0]) / (ys[-1] - ys[0]) * size

    cell = size / resolution
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size + 30}" '
        f'viewBox="0 0 {size} {size + 30}">',
        f"<title>{field_name}</title>",
    ]
    for i in range(resolution):
        for j in range(resolution):
            centre = fine[i : i + 2, j : j + 2].mean()
            parts.append(
                f'<rect x="{i * cell:.2f}" y="{size - (j + 1) * cell:.2f}" width="{cell + 0.05:.2f}" '
                f'height="{cell + 0.05:.2f}" fill="{_color((centre - lo) / span)}"/>'
            )
    gen = contour_generator(x=gx, y=gy, z=fine.T)
    for level in contour_levels(Z):
        for line in gen.lines(level):
            pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in line)
            parts.append(f'<polyline class="contour" points="{pts}" fill="none" stroke="black" stroke-width="1"/>')
    parts.append(
        f'<text x="4" y="{size + 20}" font-size="12">{field_name}: {lo:.4g} to {hi:.4g}</text>'
    )
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")


def run_and_export(cfg: BenchConfig, out_dir):
    """Run the grid and write config, CSV, JSON and one SVG per ratio field."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg.save(out / "config.json")
    records = run_grid(cfg)
    export_csv(records, out / "results.csv")
    export_json(records, out / "records.json")
    for name in RATIO_FIELDS:
        kind = name.split("_")[1]
        if kind in cfg.agents and MPC in cfg.agents:
            export_contour(records, name, out / f"{name}.svg")
    return records
