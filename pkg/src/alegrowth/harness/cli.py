"""Command line entry point: ``alegrowth <experiment> [--config ...]``.

The exit status is 0 only when every contracted check of the run passes.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from ..cluster import boundary_trace
from ..sampling import Trajectory
from .config import EXPERIMENTS, ExperimentConfig, load_config
from .experiments import (
    run_convergence_experiment,
    run_estimate_checks,
    run_moment_experiment,
    run_phase_experiment,
    run_simulation,
)
from .output import (
    cluster_aspect,
    read_trajectory_csv,
    render_angles_svg,
    render_cluster_svg,
    write_json,
    write_trajectory_csv,
)

log = logging.getLogger("alegrowth")


def split_timing(obj):
    """Remove every ``runtime`` entry from ``obj``; returns the removed values by path."""
    found = {}

    def walk(o, path):
        if isinstance(o, dict):
            if "runtime" in o:
                found[path or "."] = o.pop("runtime")
            for k, v in o.items():
                walk(v, f"{path}/{k}")
        elif isinstance(o, list):
            for i, v in enumerate(o):
                walk(v, f"{path}/{i}")

    walk(obj, "")
    return found


def _finish(d: dict, cfg: ExperimentConfig, out: Path) -> dict:
    # timings go to their own file so report.json is reproducible bit for bit
    d["config"] = cfg.reproducible_dict()
    write_json(out / "timing.json", {"threads": cfg.threads, "runtime": split_timing(d)})
    write_json(out / "report.json", d)
    return d


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="alegrowth", description="ALE(alpha, eta) growth experiments")
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--config", type=Path, help="JSON config file")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    p.add_argument("--threads", type=int, help="worker processes")
    p.add_argument("--pin-theta1", action="store_true", help="fix the first angle at 0")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    d = cfg.to_dict()
    d["experiment"] = args.experiment
    if args.out is not None:
        d["output_dir"] = str(args.out)
    if args.seed is not None:
        if not 0 <= args.seed < 2 ** 64:
            raise SystemExit("--seed must be an unsigned 64-bit integer")
        d["seed"] = args.seed
    if args.threads is not None:
        d["threads"] = args.threads
    if args.pin_theta1:
        d["pin_theta1"] = True
    return ExperimentConfig.from_dict(d)


def _traces(trajs: list[Trajectory], cfg: ExperimentConfig):
    return [boundary_trace(t.cluster(), cfg.trace_points, cfg.refine_tol) for t in trajs]


def _simulate(cfg: ExperimentConfig, out: Path, trace_only: bool = False) -> dict:
    if trace_only and cfg.trajectory_csv:
        cols = read_trajectory_csv(cfg.trajectory_csv)
        from ..cluster import ClusterState

        st = ClusterState.from_arrays(cols["theta"], cols["c"])
        tr = boundary_trace(st, cfg.trace_points, cfg.refine_tol)
        meta = {"config": cfg.reproducible_dict(), "source": cols["meta"]}
        svg = render_cluster_svg(tr, title=str(cfg.trajectory_csv), meta=meta)
        (out / "cluster.svg").write_text(svg, encoding="utf-8")
        report = {"kind": "trace", "n": st.n, "trace_points": int(tr.points.size),
                  "aspect": cluster_aspect(tr.points), "flagged": tr.flagged,
                  "checks": {"trace_outside_disk": bool((abs(tr.points) >= 1 - 1e-9).all())}}
        report["passed"] = all(report["checks"].values())
        return _finish(report, cfg, out)
    rep = run_simulation(cfg)
    d = rep.to_dict()
    many = len(rep.trajectories) > 1
    conf = cfg.reproducible_dict()
    metas = [{"config": conf, "run": r["index"], "seed": r["seed"]} for r in d["runs"]]
    for i, tr in enumerate(rep.trajectories):
        write_trajectory_csv(out / (f"trajectory_{i}.csv" if many else "trajectory.csv"), tr, metas[i])
    labels = [f"eta={r['eta']} c={r['c']:.3g} sigma={r['sigma']:.3g} n={r['n']}" for r in d["runs"]]
    svg = render_angles_svg([t.angles for t in rep.trajectories], labels,
                            meta={"config": conf, "seeds": [m["seed"] for m in metas]})
    (out / "angles.svg").write_text(svg, encoding="utf-8")
    traces = _traces(rep.trajectories, cfg)
    for r, t in zip(d["runs"], traces):
        r["aspect"] = cluster_aspect(t.points)
        r["trace_points"] = int(t.points.size)
        r["flagged_boundary_points"] = t.flagged
        d["checks"][f"run{r['index']}:trace_outside_disk"] = bool((abs(t.points) >= 1 - 1e-9).all())
    if many:
        for i, t in enumerate(traces):
            svg = render_cluster_svg(t, title=labels[i], meta=metas[i])
            (out / f"cluster_{i}.svg").write_text(svg, encoding="utf-8")
    else:
        svg = render_cluster_svg(traces[0], title=labels[0], meta=metas[0])
        (out / "cluster.svg").write_text(svg, encoding="utf-8")
    d["passed"] = all(d["checks"].values())
    return _finish(d, cfg, out)


def run(cfg: ExperimentConfig) -> dict:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.experiment in ("simulate", "trace"):
        return _simulate(cfg, out, trace_only=cfg.experiment == "trace")
    if cfg.experiment == "phase":
        d = run_phase_experiment(cfg).to_dict()
    elif cfg.experiment == "moments":
        d = run_moment_experiment(cfg).to_dict()
    elif cfg.experiment == "converge":
        d = run_convergence_experiment(cfg).to_dict()
    else:
        d = run_estimate_checks(cfg).to_dict()
    return _finish(d, cfg, out)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        rep = run(cfg)
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    for name, ok in rep.get("checks", {}).items():
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    print(f"report: {Path(cfg.output_dir) / 'report.json'}")
    return 0 if rep.get("passed", False) else 1


if __name__ == "__main__":
    sys.exit(main())
