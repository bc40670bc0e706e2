"""Batch experiment runner: ``edgebandit run | compare | sweep``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, EdgeBanditError
from .scenario import POLICIES, ScenarioConfig
from .simulation import (MetricsReport, SlotTrace, atomic_write, generate_topology, run_experiment,
                         csv_text, metrics_csv, trace_csv)

log = logging.getLogger("edgebandit")

SWEEP_AXES = ("budget", "overlap", "context_dims", "horizon")

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2


@dataclass
class RunSpec:
    command: str
    config: ScenarioConfig
    out: Path
    seeds: list[int]
    policies: list[str] = field(default_factory=list)
    axis: str | None = None
    values: list[float] = field(default_factory=list)
    svg: bool = False


class InvariantError(EdgeBanditError):
    """A completed run violated a simulator invariant."""


# ---------------------------------------------------------------------------
# argument parsing


def parse_seeds(text: str) -> list[int]:
    """``"1,2,5-7"`` -> ``[1, 2, 5, 6, 7]``."""
    seeds: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        lo, sep, hi = part.partition("-")
        if sep:
            if int(hi) < int(lo):
                raise ValueError(f"empty seed range {part!r}")
            seeds.extend(range(int(lo), int(hi) + 1))
        else:
            seeds.append(int(part))
    if not seeds:
        raise ValueError("seed list is empty")
    return seeds


def parse_sweep(text: str) -> tuple[str, list[float]]:
    axis, sep, vals = text.partition("=")
    axis = axis.strip()
    if not sep or axis not in SWEEP_AXES:
        raise ValueError(f"--sweep expects AXIS=V1,V2,... with AXIS in {', '.join(SWEEP_AXES)}")
    values = [float(v) for v in vals.split(",") if v.strip()]
    if not values:
        raise ValueError("--sweep needs at least one value")
    if axis != "overlap" and any(v != int(v) for v in values):
        raise ValueError(f"sweep values for {axis} must be integers")
    return axis, values


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="edgebandit", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("run", "run one policy and write trace/metrics files"),
                        ("compare", "paired-seed comparison of several policies"),
                        ("sweep", "compare policies across values of one scenario axis")):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", type=Path, help="scenario YAML (defaults if omitted)")
        sp.add_argument("--out", type=Path, default=Path("out"), help="output directory")
        sp.add_argument("--seeds", help="comma list or ranges, e.g. 1-10 (default: config seed)")
        sp.add_argument("--policy", action="append",
                        help=f"policy name ({', '.join(POLICIES)}); repeat or comma-separate for compare/sweep")
        if name != "run":
            sp.add_argument("--svg", action="store_true", help="also write an SVG plot")
        if name == "sweep":
            sp.add_argument("--sweep", required=True, metavar="AXIS=V1,V2,...")
    return p


def make_spec(args: argparse.Namespace) -> RunSpec:
    config = ScenarioConfig.load(args.config) if args.config else ScenarioConfig()
    seeds = parse_seeds(args.seeds) if args.seeds else [config.seed]
    policies = [q.strip() for p in (args.policy or []) for q in p.split(",") if q.strip()]
    for p in policies:
        if p not in POLICIES:
            raise ValueError(f"unknown policy {p!r}; choose from {', '.join(POLICIES)}")
    spec = RunSpec(args.command, config, args.out, seeds, policies, svg=getattr(args, "svg", False))
    if args.command == "run" and len(policies) > 1:
        raise ValueError("run takes a single --policy")
    if args.command in ("compare", "sweep") and policies and len(policies) < 2:
        raise ValueError(f"{args.command} needs at least two policies")
    if args.command == "sweep":
        spec.axis, spec.values = parse_sweep(args.sweep)
    return spec


# ---------------------------------------------------------------------------
# execution


def max_threads() -> int:
    env = os.environ.get("EDGEBANDIT_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            log.warning("ignoring non-integer EDGEBANDIT_THREADS=%r", env)
    return os.cpu_count() or 1


def check_invariants(traces: Sequence[SlotTrace], report: MetricsReport) -> None:
    if any(tr.regret < 0 for tr in traces):
        raise InvariantError("negative pseudo-regret increment")
    if not np.all(np.isfinite(report.cumulative_utility)):
        raise InvariantError("non-finite utility in trace")


def _one(config: ScenarioConfig, policy: str, seed: int, keep_users: bool = False):
    cfg = config.replace(seed=seed)
    traces, report = run_experiment(cfg, policy, generate_topology(cfg), keep_users=keep_users)
    check_invariants(traces, report)
    return traces, report


def run_many(jobs: list[tuple[ScenarioConfig, str, int]]):
    """Run ``(config, policy, seed)`` jobs on a thread pool; results keep job order."""
    workers = min(max_threads(), max(len(jobs), 1))
    if workers == 1:
        return [_one(*j) for j in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda j: _one(*j), jobs))


def default_policies(config: ScenarioConfig) -> list[str]:
    learner = "seen-o" if config.overlap else "seen"
    return ["oracle", learner, "cucb", "c2ucb", "eps-greedy", "random"]


class Outputs:
    """Tracks files written by this invocation so they can be removed on failure."""

    def __init__(self, out: Path):
        self.out = out
        self.written: list[Path] = []

    def write(self, name: str, text: str) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        path = self.out / name
        atomic_write(path, text)
        self.written.append(path)
        return path

    def rollback(self) -> None:
        for p in self.written:
            p.unlink(missing_ok=True)
        self.written.clear()


def cmd_run(spec: RunSpec, outs: Outputs) -> None:
    policy = spec.policies[0] if spec.policies else spec.config.policy.name
    results = run_many([(spec.config, policy, s) for s in spec.seeds])
    for seed, (traces, report) in zip(spec.seeds, results):
        outs.write(f"trace_{policy}_seed{seed}.csv", trace_csv(traces))
        outs.write(f"metrics_{policy}_seed{seed}.csv", metrics_csv(report))
        mse = report.checkpoints[-1].mse_visited if report.checkpoints else float("nan")
        print(f"{policy} seed={seed} utility={report.final_utility:.4f} "
              f"regret={report.final_regret:.4f} mse={mse:.6g}")


def compare_curves(config: ScenarioConfig, policies: Sequence[str],
                   seeds: Sequence[int]) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Seed-averaged cumulative utility and regret curves per policy."""
    jobs = [(config, p, s) for p in policies for s in seeds]
    results = run_many(jobs)
    curves = {}
    k = len(seeds)
    for i, p in enumerate(policies):
        reps = [r for _, r in results[i * k:(i + 1) * k]]
        curves[p] = (np.mean([r.cumulative_utility for r in reps], axis=0),
                     np.mean([r.cumulative_regret for r in reps], axis=0))
    return curves


def _pyplot():
    try:
        import matplotlib
    except ImportError as exc:
        raise ConfigError("--svg needs matplotlib (pip install 'artifact[plot]')") from exc
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def _svg(curves: dict[str, tuple[np.ndarray, np.ndarray]], title: str) -> str:
    import io

    plt = _pyplot()

    fig, ax = plt.subplots(figsize=(6, 4))
    for p, (u, _) in curves.items():
        ax.plot(np.arange(1, len(u) + 1), u, label=p)
    ax.set_xlabel("slot")
    ax.set_ylabel("cumulative utility")
    ax.set_title(title)
    ax.legend()
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    return buf.getvalue()


def cmd_compare(spec: RunSpec, outs: Outputs) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    policies = spec.policies or default_policies(spec.config)
    curves = compare_curves(spec.config, policies, spec.seeds)
    T = spec.config.horizon
    rows = [[t + 1] + [repr(float(curves[p][0][t])) for p in policies] for t in range(T)]
    outs.write("compare.csv", csv_text(["t"] + list(policies), rows))
    if spec.svg:
        outs.write("compare.svg", _svg(curves, "cumulative utility"))
    for p in policies:
        print(f"{p}: utility={curves[p][0][-1]:.4f} regret={curves[p][1][-1]:.4f}")
    return curves


def apply_axis(config: ScenarioConfig, axis: str, value: float) -> ScenarioConfig:
    if axis == "budget":
        return config.replace(budget=int(value))
    if axis == "horizon":
        return config.replace(horizon=int(value))
    if axis == "context_dims":
        return config.replace(context_dims=int(value), sbs_context_dims=None)
    if axis == "overlap":
        return config.replace(overlap=True, target_overlap=float(value))
    raise ValueError(f"unknown sweep axis {axis!r}")


def cmd_sweep(spec: RunSpec, outs: Outputs) -> None:
    rows = []
    svg_curves = {}
    for v in spec.values:
        cfg = apply_axis(spec.config, spec.axis, v)
        policies = spec.policies or default_policies(cfg)
        print(f"{spec.axis}={v:g}")
        curves = compare_curves(cfg, policies, spec.seeds)
        for p in policies:
            u, r = curves[p]
            rows.append([f"{v:g}", p, repr(float(u[-1])), repr(float(r[-1]))])
            print(f"  {p}: utility={u[-1]:.4f} regret={r[-1]:.4f}")
            svg_curves.setdefault(p, ([], []))
            svg_curves[p][0].append(v)
            svg_curves[p][1].append(float(u[-1]))
    outs.write("sweep.csv", csv_text(["axis_value", "policy", "final_utility", "final_regret"], rows))
    if spec.svg:
        outs.write("sweep.svg", _sweep_svg(svg_curves, spec.axis))


def _sweep_svg(points: dict[str, tuple[list, list]], axis: str) -> str:
    import io

    plt = _pyplot()

    fig, ax = plt.subplots(figsize=(6, 4))
    for p, (xs, ys) in points.items():
        ax.plot(xs, ys, marker="o", label=p)
    ax.set_xlabel(axis)
    ax.set_ylabel("final cumulative utility")
    ax.legend()
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    return buf.getvalue()


COMMANDS = {"run": cmd_run, "compare": cmd_compare, "sweep": cmd_sweep}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        spec = make_spec(args)
    except (ValueError, EdgeBanditError) as exc:
        print(f"edgebandit: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    outs = Outputs(spec.out)
    try:
        COMMANDS[spec.command](spec, outs)
    except ValueError as exc:  # ConfigError and friends
        outs.rollback()
        print(f"edgebandit: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except EdgeBanditError as exc:
        outs.rollback()
        print(f"edgebandit: error: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except BaseException:
        outs.rollback()
        raise
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
