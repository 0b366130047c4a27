"""Run a grid of strategies over seeds and aggregate learning curves."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

from ..errors import ConfigError
from .config import ExperimentConfig
from .runner import read_metrics, run_experiment

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")


def aulc(steps: np.ndarray, returns: np.ndarray) -> float:
    """Trapezoidal area under an eval-return curve."""
    if len(steps) < 2:
        return 0.0
    return float(np.trapezoid(returns, steps))


@dataclass
class Curve:
    label: str
    steps: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    per_seed: dict[int, np.ndarray]

    def aulc(self, seed: int) -> float:
        return aulc(self.steps, self.per_seed[seed])


def check_grid(configs: Sequence[ExperimentConfig]) -> None:
    if len(configs) < 1:
        raise ConfigError("grid", "empty grid")
    ref = configs[0]
    labels = set()
    for cfg in configs:
        if cfg.name in labels:
            raise ConfigError("grid", f"duplicate label {cfg.name!r}")
        labels.add(cfg.name)
        if cfg.env != ref.env:
            raise ConfigError(f"grid[{cfg.name}].experiment.env", f"{cfg.env} != {ref.env}")
        if cfg.total_steps != ref.total_steps:
            raise ConfigError(f"grid[{cfg.name}].experiment.total_steps",
                              f"step budget {cfg.total_steps} != {ref.total_steps}")
        if cfg.eval_interval != ref.eval_interval:
            raise ConfigError(f"grid[{cfg.name}].experiment.eval_interval",
                              f"{cfg.eval_interval} != {ref.eval_interval}")


def _job(args):
    cfg, seed, out = args
    return str(run_experiment(cfg, seed, out_dir=out))


def run_grid(configs: Sequence[ExperimentConfig], out_dir, jobs: int = 1) -> dict[str, dict[int, Path]]:
    """Run every (config, seed); experiments share nothing but the output dir."""
    check_grid(configs)
    tasks = [(cfg, seed, out_dir) for cfg in configs for seed in cfg.seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            paths = list(pool.map(_job, tasks))
    else:
        paths = [_job(t) for t in tasks]
    out: dict[str, dict[int, Path]] = {}
    for (cfg, seed, _), p in zip(tasks, paths):
        out.setdefault(cfg.name, {})[seed] = Path(p)
    return out


def load_curves(paths: dict[str, dict[int, Path]]) -> list[Curve]:
    curves = []
    for label, by_seed in paths.items():
        per_seed = {}
        steps = None
        for seed in sorted(by_seed):
            m = read_metrics(by_seed[seed])
            if steps is None:
                steps = m["env_step"]
            elif not np.array_equal(steps, m["env_step"]):
                raise ConfigError(f"grid[{label}]", "eval points differ between seeds")
            per_seed[seed] = m["eval_return"]
        stack = np.vstack(list(per_seed.values())) if per_seed else np.zeros((0, 0))
        curves.append(Curve(label, steps, stack.mean(axis=0), stack.std(axis=0), per_seed))
    return curves


def bands_overlap(a: Curve, b: Curve) -> float:
    """Fraction of eval points where the mean +- std bands intersect."""
    lo = np.maximum(a.mean - a.std, b.mean - b.std)
    hi = np.minimum(a.mean + a.std, b.mean + b.std)
    return float(np.mean(lo <= hi))


def _f(x: float) -> str:
    return "nan" if math.isnan(x) else repr(float(x))


def write_aggregate(curves: Sequence[Curve], out_dir) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    agg = out / "aggregate.csv"
    with open(agg, "w") as fh:
        fh.write("label,env_step,mean_return,std_return,n_seeds\n")
        for c in curves:
            for s, m, sd in zip(c.steps, c.mean, c.std):
                fh.write(f"{c.label},{int(s)},{_f(m)},{_f(sd)},{len(c.per_seed)}\n")
    summ = out / "aulc.csv"
    with open(summ, "w") as fh:
        fh.write("label,seed,aulc,final_return\n")
        for c in curves:
            for seed, ret in c.per_seed.items():
                fh.write(f"{c.label},{seed},{_f(c.aulc(seed))},{_f(ret[-1])}\n")
    return agg, summ


def render_svg(curves: Sequence[Curve], title: str = "", width: int = 720, height: int = 440) -> str:
    """Line chart of mean eval return with a shaded +-std band per curve."""
    ml, mr, mt, mb = 70, 150, 40, 50
    pw, ph = width - ml - mr, height - mt - mb
    xs = np.concatenate([c.steps for c in curves]) if curves else np.array([0.0, 1.0])
    lows = np.concatenate([c.mean - c.std for c in curves]) if curves else np.array([0.0])
    highs = np.concatenate([c.mean + c.std for c in curves]) if curves else np.array([1.0])
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(lows.min()), float(highs.max())
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y0, y1 = y0 - 1.0, y1 + 1.0

    def px(x):
        return ml + (x - x0) / (x1 - x0) * pw

    def py(y):
        return mt + (y1 - y) / (y1 - y0) * ph

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{ml + pw / 2:.1f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<line x1="{ml}" y1="{mt + ph}" x2="{ml + pw}" y2="{mt + ph}" stroke="black"/>',
        f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{mt + ph}" stroke="black"/>',
    ]
    for i in range(5):
        xv = x0 + (x1 - x0) * i / 4
        yv = y0 + (y1 - y0) * i / 4
        parts.append(f'<text x="{px(xv):.1f}" y="{mt + ph + 16}" text-anchor="middle">{xv:.6g}</text>')
        parts.append(f'<text x="{ml - 6}" y="{py(yv) + 4:.1f}" text-anchor="end">{yv:.4g}</text>')
        parts.append(f'<line x1="{ml}" y1="{py(yv):.1f}" x2="{ml + pw}" y2="{py(yv):.1f}" '
                     'stroke="#dddddd" stroke-width="0.5"/>')
    parts.append(f'<text x="{ml + pw / 2:.1f}" y="{height - 10}" text-anchor="middle">environment steps</text>')
    parts.append(f'<text x="16" y="{mt + ph / 2:.1f}" text-anchor="middle" '
                 f'transform="rotate(-90 16 {mt + ph / 2:.1f})">mean evaluation return</text>')
    for k, c in enumerate(curves):
        color = PALETTE[k % len(PALETTE)]
        upper = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(c.steps, c.mean + c.std))
        lower = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(c.steps[::-1], (c.mean - c.std)[::-1]))
        parts.append(f'<polygon points="{upper} {lower}" fill="{color}" fill-opacity="0.2" stroke="none"/>')
        line = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(c.steps, c.mean))
        parts.append(f'<polyline points="{line}" fill="none" stroke="{color}" stroke-width="2"/>')
        ly = mt + 14 + 18 * k
        parts.append(f'<line x1="{ml + pw + 12}" y1="{ly}" x2="{ml + pw + 32}" y2="{ly}" '
                     f'stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{ml + pw + 38}" y="{ly + 4}">{escape(c.label)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def compare(configs: Sequence[ExperimentConfig], out_dir, jobs: int = 1) -> tuple[list[Curve], dict]:
    """Run the grid, then write ``aggregate.csv``, ``aulc.csv`` and ``curves.svg``."""
    if len(configs) < 2:
        raise ConfigError("grid", "compare needs at least two strategy configs")
    paths = run_grid(configs, out_dir, jobs=jobs)
    curves = load_curves(paths)
    agg, summ = write_aggregate(curves, out_dir)
    svg = Path(out_dir) / "curves.svg"
    svg.write_text(render_svg(curves, title=f"{configs[0].env}: evaluation return"))
    return curves, {"aggregate": agg, "aulc": summ, "svg": svg, "runs": paths}
