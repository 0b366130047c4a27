"""Fairness and sample-age statistics from a replay log."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..replaylog import EVICT, PUSH, SAMPLE, read_log
from ..samplers import expected_sampling_interval

NO_EVICTIONS = "no fully-evicted transitions"


@dataclass
class FairnessReport:
    batch_size: int
    n_pushed: int
    n_evicted: int
    n_draws: int
    lifetime_mean: float
    lifetime_var: float
    histogram: list[tuple[int, int]]
    age_curve: list[tuple[int, int, float, float, float]]
    probes: list[tuple[int, int, int, float, float, float]]
    flags: list[str] = field(default_factory=list)


def analyze_replay(path, age_window: int = 1000, n_probes: int = 16) -> FairnessReport:
    """Summarise a replay log.

    * lifetime replay counts over transitions that were both pushed and
      evicted inside the log (mean, variance, histogram);
    * sample age ``env_step - birth_step`` per window of ``age_window``
      steps (count, mean, median, p95);
    * for up to ``n_probes`` evicted transitions, the interval predicted by
      ``1/(p*N)`` with ``p`` the probability at the transition's first
      draw, next to the observed ``residency / replay_count``.
    """
    header, rec = read_log(path)
    kind = rec["kind"]
    ids = rec["id"].astype(np.int64)
    steps = rec["env_step"].astype(np.int64)

    push_ids = ids[kind == PUSH]
    push_steps = steps[kind == PUSH]
    ev_mask = kind == EVICT
    ev_ids = ids[ev_mask]
    ev_steps = steps[ev_mask]
    s_mask = kind == SAMPLE
    s_ids = ids[s_mask]
    s_steps = steps[s_mask]
    s_births = rec["birth_step"][s_mask].astype(np.int64)
    s_probs = rec["prob"][s_mask]

    flags: list[str] = []
    pushed = set(push_ids.tolist())
    full = np.array([i for i in ev_ids.tolist() if i in pushed], dtype=np.int64)

    base = int(min(push_ids.min() if push_ids.size else 0, s_ids.min() if s_ids.size else 0))
    top = int(max(push_ids.max() if push_ids.size else 0, s_ids.max() if s_ids.size else 0))
    draw_counts = np.bincount(s_ids - base, minlength=top - base + 1) if s_ids.size else np.zeros(top - base + 1, dtype=np.int64)

    if full.size == 0:
        flags.append(NO_EVICTIONS)
        lifetime = np.zeros(0, dtype=np.int64)
        mean = var = math.nan
        hist: list[tuple[int, int]] = []
    else:
        lifetime = draw_counts[full - base]
        mean = float(lifetime.mean())
        var = float(lifetime.var())
        values, freq = np.unique(lifetime, return_counts=True)
        hist = [(int(v), int(c)) for v, c in zip(values, freq)]

    age_curve = []
    if s_ids.size:
        ages = s_steps - s_births
        window_id = s_steps // age_window
        for w in np.unique(window_id):
            a = ages[window_id == w]
            age_curve.append((int(w * age_window), int(a.size), float(a.mean()),
                              float(np.median(a)), float(np.percentile(a, 95))))

    probes = []
    if full.size:
        chosen = full[np.unique(np.linspace(0, full.size - 1, min(n_probes, full.size)).astype(int))]
        push_at = dict(zip(push_ids.tolist(), push_steps.tolist()))
        evict_at = dict(zip(ev_ids.tolist(), ev_steps.tolist()))
        for tid in chosen.tolist():
            count = int(draw_counts[tid - base])
            residency = int(evict_at[tid] - push_at[tid])
            hits = np.flatnonzero(s_ids == tid)
            p_first = float(s_probs[hits[0]]) if hits.size else math.nan
            predicted = expected_sampling_interval(p_first, header.batch_size) if 0 < p_first <= 1 else math.nan
            observed = residency / count if count else math.nan
            probes.append((tid, count, residency, p_first, predicted, observed))

    return FairnessReport(
        batch_size=header.batch_size,
        n_pushed=int(push_ids.size),
        n_evicted=int(full.size),
        n_draws=int(s_ids.size),
        lifetime_mean=mean,
        lifetime_var=var,
        histogram=hist,
        age_curve=age_curve,
        probes=probes,
        flags=flags,
    )


def _f(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return "nan" if math.isnan(x) else repr(float(x))


def write_report(report: FairnessReport, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []

    p = out / "fairness_summary.csv"
    rows = [
        ("batch_size", report.batch_size),
        ("n_pushed", report.n_pushed),
        ("n_evicted", report.n_evicted),
        ("n_draws", report.n_draws),
        ("lifetime_mean", report.lifetime_mean),
        ("lifetime_var", report.lifetime_var),
    ]
    with open(p, "w") as fh:
        fh.write("metric,value\n")
        for k, v in rows:
            fh.write(f"{k},{_f(v)}\n")
        for flag in report.flags:
            fh.write(f"flag,{flag}\n")
    paths.append(p)

    p = out / "lifetime_histogram.csv"
    with open(p, "w") as fh:
        fh.write("replay_count,transitions\n")
        for v, c in report.histogram:
            fh.write(f"{v},{c}\n")
    paths.append(p)

    p = out / "age_curve.csv"
    with open(p, "w") as fh:
        fh.write("window_start,draws,age_mean,age_median,age_p95\n")
        for row in report.age_curve:
            fh.write(",".join(_f(x) for x in row) + "\n")
    paths.append(p)

    p = out / "interval_probes.csv"
    with open(p, "w") as fh:
        fh.write("id,replay_count,residency,first_prob,predicted_interval,observed_interval\n")
        for row in report.probes:
            fh.write(",".join(_f(x) for x in row) + "\n")
    paths.append(p)
    return paths
