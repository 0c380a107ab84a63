"""Seeded experiment runner: replications, regret traces, sweeps and output.

Replication ``r`` of an experiment with base seed ``s`` draws its streams
from ``numpy.random.SeedSequence([s, r]).spawn(2)``: the first child drives
the environment and the second the policy. Results therefore do not depend
on how replications are scheduled over threads.
"""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from .baselines import GLMUCB, UCB1, LinUCB
from .core import Rank1Instance
from .environments import (Environment, LowRankSpec, SpikeSpec, make_environment,
                           make_lowrank, make_spike)
from .rank1elim import Rank1Elim

DEFAULT_CHECKPOINTS = 200
CHUNK = 1 << 16
SUMMARY_HEADER = ["K", "L", "p_u", "p_v", "delta_u", "delta_v", "policy", "n", "reps",
                  "regret_mean", "regret_std"]

_SPIKE_KEYS = {"K": "K", "L": "L", "pu": "p_u", "p_u": "p_u", "pv": "p_v", "p_v": "p_v",
               "du": "delta_u", "delta_u": "delta_u", "dv": "delta_v", "delta_v": "delta_v"}
_LOWRANK_KEYS = {"K": "K", "L": "L", "r": "rank", "rank": "rank", "w": "leading_weight",
                 "leading_weight": "leading_weight", "seed": "seed", "max_mean": "max_mean"}
_POLICY_KEYS = {
    "ucb1": {},
    "rank1elim": {},
    "linucb": {"lambda": "lam", "lam": "lam", "eps": "eps", "scale": "scale", "delta": "delta"},
    "glmucb": {"eps": "eps", "scale": "scale", "delta": "delta", "lambda": "lam",
               "lam": "lam", "prior": "prior"},
}


def _split_spec(spec: str) -> tuple[str, dict[str, str]]:
    name, _, rest = spec.strip().partition(":")
    params = {}
    if rest:
        for item in rest.split(","):
            key, eq, value = item.partition("=")
            if not eq:
                raise ValueError(f"malformed parameter {item!r} in {spec!r}")
            params[key.strip()] = value.strip()
    return name.strip().lower(), params


def _map_keys(params, table, spec):
    out = {}
    for key, value in params.items():
        if key not in table:
            raise ValueError(f"unknown parameter {key!r} in {spec!r}")
        out[table[key]] = value
    return out


def parse_env(spec):
    """Turn an environment spec into a ``SpikeSpec``, ``LowRankSpec`` or
    ``Rank1Instance``.

    Strings look like ``spike:K=8,L=8,pu=0.7,pv=0.7,du=0.2,dv=0.2``,
    ``lowrank:K=32,L=32,r=5,w=10,seed=0`` or ``file:instance.json``.
    """
    if isinstance(spec, (SpikeSpec, LowRankSpec, Rank1Instance)):
        return spec
    name, _, rest = spec.strip().partition(":")
    if name == "file":
        return Rank1Instance.load(rest)
    name, params = _split_spec(spec)
    if name == "spike":
        kw = _map_keys(params, _SPIKE_KEYS, spec)
        missing = {"K", "L", "p_u", "p_v", "delta_u", "delta_v"} - kw.keys()
        if missing:
            raise ValueError(f"spike spec missing {sorted(missing)}")
        return SpikeSpec(int(kw["K"]), int(kw["L"]), float(kw["p_u"]), float(kw["p_v"]),
                         float(kw["delta_u"]), float(kw["delta_v"]))
    if name == "lowrank":
        kw = _map_keys(params, _LOWRANK_KEYS, spec)
        missing = {"K", "L", "rank", "leading_weight"} - kw.keys()
        if missing:
            raise ValueError(f"lowrank spec missing {sorted(missing)}")
        return LowRankSpec(int(kw["K"]), int(kw["L"]), int(kw["rank"]),
                           float(kw["leading_weight"]), int(kw.get("seed", 0)),
                           float(kw.get("max_mean", 0.95)))
    raise ValueError(f"unknown environment kind {name!r}")


def build_environment(spec, rng=None) -> Environment:
    spec = parse_env(spec)
    if isinstance(spec, SpikeSpec):
        return make_environment(make_spike(spec), rng)
    if isinstance(spec, LowRankSpec):
        return make_lowrank(spec, rng)
    return make_environment(spec, rng)


def parse_policy(spec: str) -> tuple[str, dict]:
    name, params = _split_spec(spec)
    if name not in _POLICY_KEYS:
        raise ValueError(f"unknown policy {name!r}")
    kw = _map_keys(params, _POLICY_KEYS[name], spec)
    return name, {k: float(v) for k, v in kw.items()}


def build_policy(spec: str, K: int, L: int, n: int, rng=None, log=None):
    name, kw = parse_policy(spec)
    if name == "ucb1":
        return UCB1(K, L)
    if name == "rank1elim":
        return Rank1Elim(K, L, n, rng=rng, log=log)
    if name == "linucb":
        return LinUCB(K, L, n, **kw)
    return GLMUCB(K, L, n, **kw)


@dataclass
class ExperimentConfig:
    env: object
    policy: str
    n: int
    reps: int = 1
    seed: int = 0
    checkpoints: int | None = None
    out: str | None = None

    def __post_init__(self):
        if self.checkpoints is None:
            self.checkpoints = min(DEFAULT_CHECKPOINTS, self.n)
        if self.n < 3:
            raise ValueError("n must be at least 3")
        if self.reps < 1:
            raise ValueError("reps must be at least 1")
        if not 1 <= self.checkpoints <= self.n:
            raise ValueError("checkpoints must be in [1, n]")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        parse_policy(self.policy)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        if not isinstance(self.env, str):
            d["env"] = repr(self.env)
        return d

    def key(self) -> dict:
        """Spike parameters of the environment (NaN when not a spike)."""
        spec = parse_env(self.env)
        if isinstance(spec, SpikeSpec):
            return {"K": spec.K, "L": spec.L, "p_u": spec.p_u, "p_v": spec.p_v,
                    "delta_u": spec.delta_u, "delta_v": spec.delta_v}
        K, L = (spec.K, spec.L)
        nan = float("nan")
        return {"K": K, "L": L, "p_u": nan, "p_v": nan, "delta_u": nan, "delta_v": nan}


def checkpoint_steps(n: int, count: int = DEFAULT_CHECKPOINTS) -> np.ndarray:
    """``count`` evenly spaced steps ending at ``n``."""
    steps = np.unique(np.round(np.arange(1, count + 1) * (n / count)).astype(np.int64))
    return steps[steps >= 1]


@dataclass(eq=False)
class RegretTrace:
    steps: np.ndarray
    regret: np.ndarray
    counts: np.ndarray
    seed: int
    rep: int

    @property
    def final(self) -> float:
        return float(self.regret[-1])


class _Recorder:
    """Accumulates pseudo-regret and pull counts over consecutive blocks."""

    def __init__(self, env: Environment, n: int, steps: np.ndarray):
        self.gaps = env.gaps
        self.L = env.L
        self.steps = steps
        self.regret = np.empty(steps.size)
        self.counts = np.zeros(env.K * env.L, dtype=np.int64)
        self.t = 0
        self.total = 0.0
        self.k = 0

    def add(self, flat: np.ndarray):
        m = flat.size
        if m == 0:
            return
        g = self.gaps.ravel()[flat]
        cum = np.cumsum(g)
        stop = self.t + m
        k2 = np.searchsorted(self.steps, stop, side="right")
        if k2 > self.k:
            idx = self.steps[self.k:k2] - self.t - 1
            self.regret[self.k:k2] = self.total + cum[idx]
            self.k = k2
        self.total += cum[-1]
        self.counts += np.bincount(flat, minlength=self.counts.size)
        self.t = stop


def simulate(policy, env: Environment, n: int, steps: np.ndarray | None = None,
             stepwise: bool = False):
    """Play ``policy`` against ``env`` for ``n`` steps.

    Returns ``(regret at steps, K x L pull counts)``. Rank1Elim runs
    block-wise, baselines through their compiled chunks, and anything else
    (or ``stepwise=True``) one ``choose``/``observe`` at a time. All paths
    give the same arm sequence for the same seeds.
    """
    steps = checkpoint_steps(n) if steps is None else np.asarray(steps, dtype=np.int64)
    rec = _Recorder(env, n, steps)
    L = env.L
    if stepwise:
        buf = np.empty(min(n, CHUNK), dtype=np.int64)
        b = 0
        for t in range(n):
            i, j = policy.choose(t)
            policy.observe((i, j), env.sample((i, j)))
            buf[b] = i * L + j
            b += 1
            if b == buf.size:
                rec.add(buf)
                b = 0
        rec.add(buf[:b])
    elif hasattr(policy, "plan_block"):
        while rec.t < n:
            rows, cols = policy.plan_block(min(CHUNK, n - rec.t))
            rewards = env.sample_batch(rows, cols)
            policy.observe_block(rows, cols, rewards)
            rec.add(rows * L + cols)
    elif hasattr(policy, "run_chunk"):
        while rec.t < n:
            m = min(CHUNK, n - rec.t)
            rec.add(policy.run_chunk(env, env.draw_noise(m)))
    else:
        return simulate(policy, env, n, steps, stepwise=True)
    return rec.regret, rec.counts.reshape(env.K, env.L)


def replication_streams(seed: int, rep: int):
    env_ss, pol_ss = np.random.SeedSequence([seed, rep]).spawn(2)
    return np.random.default_rng(env_ss), np.random.default_rng(pol_ss)


def run_single(config: ExperimentConfig, rep: int, stepwise: bool = False) -> RegretTrace:
    env_rng, pol_rng = replication_streams(config.seed, rep)
    env = build_environment(config.env, env_rng)
    policy = build_policy(config.policy, env.K, env.L, config.n, pol_rng)
    steps = checkpoint_steps(config.n, config.checkpoints)
    regret, counts = simulate(policy, env, config.n, steps, stepwise=stepwise)
    return RegretTrace(steps, regret, counts, config.seed, rep)


@dataclass
class SummaryRow:
    K: int
    L: int
    p_u: float
    p_v: float
    delta_u: float
    delta_v: float
    policy: str
    n: int
    reps: int
    regret_mean: float
    regret_std: float
    error: str | None = None
    traces: list = field(default_factory=list, repr=False, compare=False)

    def as_record(self) -> dict:
        return {k: getattr(self, k) for k in SUMMARY_HEADER}


def summarize(config: ExperimentConfig, traces: Sequence[RegretTrace]) -> SummaryRow:
    finals = np.array([t.final for t in traces])
    std = float(finals.std(ddof=1)) if finals.size > 1 else float("nan")
    return SummaryRow(**config.key(), policy=config.policy, n=config.n, reps=len(traces),
                      regret_mean=float(finals.mean()), regret_std=std, traces=list(traces))


def run_sweep(configs: Sequence[ExperimentConfig], workers: int = 1) -> list[SummaryRow]:
    """Run every replication of every config and summarise in grid order.

    A config whose replications raise is reported with ``error`` set and NaN
    statistics; the rest of the sweep continues.
    """
    jobs = [(c, r) for c in configs for r in range(c.reps)]

    def job(item):
        try:
            return run_single(*item)
        except Exception as exc:  # recorded per row
            return exc

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(job, jobs))
    else:
        results = [job(j) for j in jobs]
    rows, pos = [], 0
    for c in configs:
        part = results[pos:pos + c.reps]
        pos += c.reps
        errors = [r for r in part if isinstance(r, Exception)]
        if errors:
            nan = float("nan")
            try:
                key = c.key()
            except Exception:
                key = dict.fromkeys(["K", "L"], 0) | dict.fromkeys(
                    ["p_u", "p_v", "delta_u", "delta_v"], nan)
            rows.append(SummaryRow(**key, policy=c.policy, n=c.n, reps=c.reps,
                                   regret_mean=nan, regret_std=nan,
                                   error=f"{type(errors[0]).__name__}: {errors[0]}"))
        else:
            rows.append(summarize(c, part))
    return rows


def _spike(K, L, p_u, p_v, d_u, d_v) -> str:
    return f"spike:K={K},L={L},pu={p_u},pv={p_v},du={d_u},dv={d_v}"


def preset(name: str, n: int = 2_000_000, reps: int = 20, seed: int = 0) -> list[ExperimentConfig]:
    """Experiment grids: the three scaling tables and the baseline comparison."""
    def cfg(env, policy="rank1elim", r=reps):
        return ExperimentConfig(env, policy, n, r, seed)

    if name == "table1-left":
        return [cfg(_spike(K, L, 0.7, 0.7, 0.2, 0.2)) for K in (8, 16, 32) for L in (8, 16, 32)]
    if name == "table1-mid":
        ps = (0.7, 0.35, 0.175)
        return [cfg(_spike(8, 8, pu, pv, 0.2, 0.2)) for pu in ps for pv in ps]
    if name == "table1-right":
        ds = (0.2, 0.1, 0.05)
        return [cfg(_spike(8, 8, 0.7, 0.7, du, dv)) for du in ds for dv in ds]
    if name == "fig2":
        return [cfg(_spike(K, K, 0.7, 0.7, 0.2, 0.2), pol)
                for K in (16, 32, 64) for pol in ("rank1elim", "ucb1", "linucb", "glmucb")]
    raise ValueError(f"unknown preset {name!r}")


PRESETS = ("table1-left", "table1-mid", "table1-right", "fig2")


# Output

def write_summary_csv(rows: Sequence[SummaryRow], path) -> Path:
    if not rows:
        raise ValueError("no summaries to write")
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_HEADER)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row.as_record().values()])
    return path


def read_summary_csv(path) -> list[dict]:
    ints = {"K", "L", "n", "reps"}
    out = []
    with Path(path).open(newline="") as fh:
        for rec in csv.DictReader(fh):
            out.append({k: (int(v) if k in ints else v if k == "policy" else float(v))
                        for k, v in rec.items()})
    return out


def write_summary_json(rows: Sequence[SummaryRow], path) -> Path:
    if not rows:
        raise ValueError("no summaries to write")
    path = Path(path)
    recs = []
    for row in rows:
        rec = row.as_record()
        rec["error"] = row.error
        rec["finals"] = [t.final for t in row.traces]
        recs.append({k: (None if isinstance(v, float) and math.isnan(v) else v)
                     for k, v in rec.items()})
    path.write_text(json.dumps(recs, indent=2))
    return path


def trace_stats(traces: Sequence[RegretTrace]):
    if not traces:
        raise ValueError("no traces")
    R = np.vstack([t.regret for t in traces])
    std = R.std(axis=0, ddof=1) if len(traces) > 1 else np.zeros(R.shape[1])
    return traces[0].steps, R.mean(axis=0), std


def write_trace_csv(traces: Sequence[RegretTrace], path) -> Path:
    steps, mean, std = trace_stats(traces)
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "mean_regret", "std_regret"])
        for s, m, d in zip(steps, mean, std):
            w.writerow([int(s), repr(float(m)), repr(float(d))])
    return path


_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"]


def write_svg(curves: dict[str, Sequence[RegretTrace]], path, title: str = "",
              width: int = 480, height: int = 320) -> Path:
    """Mean regret against step, one polyline per label."""
    if not curves or any(len(v) == 0 for v in curves.values()):
        raise ValueError("no traces to plot")
    stats = {k: trace_stats(v) for k, v in curves.items()}
    xmax = max(float(s[0][-1]) for s in stats.values())
    ymax = max(float(s[1].max()) for s in stats.values()) or 1.0
    pad = 50
    sx = (width - 2 * pad) / xmax
    sy = (height - 2 * pad) / ymax
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
             f'<rect width="{width}" height="{height}" fill="white"/>',
             f'<text x="{width / 2}" y="20" text-anchor="middle" font-size="13">{title}</text>',
             f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" '
             'stroke="black"/>',
             f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
             f'<text x="{width - pad}" y="{height - pad + 20}" text-anchor="end" '
             f'font-size="11">step {xmax:.0f}</text>',
             f'<text x="{pad - 5}" y="{pad - 5}" font-size="11">regret {ymax:.4g}</text>']
    for k, (label, (steps, mean, _)) in enumerate(stats.items()):
        color = _COLORS[k % len(_COLORS)]
        pts = " ".join(f"{pad + x * sx:.2f},{height - pad - y * sy:.2f}"
                       for x, y in zip(steps, mean))
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" '
                     f'points="{pts}"><title>{label}</title></polyline>')
        parts.append(f'<text x="{width - pad + 2}" y="{pad + 14 * k}" font-size="10" '
                     f'fill="{color}">{label}</text>')
    parts.append("</svg>")
    path = Path(path)
    path.write_text("\n".join(parts) + "\n")
    return path


def emit(rows: Sequence[SummaryRow], out, formats=("csv", "json", "svg"), name="summary"):
    """Write summaries (and traces) for ``rows`` under directory ``out``."""
    if not rows:
        raise ValueError("nothing to emit")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if "csv" in formats:
        written.append(write_summary_csv(rows, out / f"{name}.csv"))
        for k, row in enumerate(rows):
            if row.traces:
                written.append(write_trace_csv(row.traces, out / f"trace_{k:03d}_{row.policy.split(':')[0]}.csv"))
    if "json" in formats:
        written.append(write_summary_json(rows, out / f"{name}.json"))
    if "svg" in formats:
        groups: dict[tuple, dict[str, list]] = {}
        for row in rows:
            if row.traces:
                curves = groups.setdefault((row.K, row.L), {})
                label = row.policy
                if label in curves:
                    label += f" p={row.p_u:g}/{row.p_v:g} d={row.delta_u:g}/{row.delta_v:g}"
                curves[label] = row.traces
        for (K, L), curves in groups.items():
            written.append(write_svg(curves, out / f"regret_{K}x{L}.svg", f"K={K}, L={L}"))
    return written
