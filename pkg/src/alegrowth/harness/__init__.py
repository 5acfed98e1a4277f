"""Experiment orchestration, persistence and rendering."""

from .config import EXPERIMENTS, ExperimentConfig, load_config
from .experiments import (
    ConvergenceReport,
    EstimateReport,
    MomentReport,
    PhaseReport,
    SimulationReport,
    gamma_threshold,
    make_params,
    parallel_map,
    run_convergence_experiment,
    run_estimate_checks,
    run_moment_experiment,
    run_phase_experiment,
    run_simulation,
    slit_gap,
    wilson_interval,
)
from .output import (
    cluster_aspect,
    read_trajectory_csv,
    render_angles_svg,
    render_cluster_svg,
    render_svg,
    write_json,
    write_trajectory_csv,
)
