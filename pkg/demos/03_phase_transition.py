"""The eta = 1 phase transition in the Markov surrogate model.

For eta = 4 nearly every run attaches each particle to its predecessor.  For
eta = 0.5 even two particles rarely do, and less so as c shrinks.

    python3 demos/03_phase_transition.py
"""

from alegrowth.harness.config import ExperimentConfig
from alegrowth.harness.experiments import gamma_threshold, run_phase_experiment

strong = ExperimentConfig(experiment="phase", model="markov", eta=4.0, c_values=[1e-2, 1e-3],
                          gamma=gamma_threshold(4.0, "markov") + 0.5, T=0.1, replicas=100, seed=1)
weak = ExperimentConfig(experiment="phase", model="markov", eta=0.5, c_values=[1e-3, 1e-4, 1e-5],
                        gamma=1.0, n=2, replicas=400, seed=2)

for cfg in (strong, weak):
    rep = run_phase_experiment(cfg)
    print(f"eta = {cfg.eta}")
    for cell in rep.cells:
        lo, hi = cell.wilson
        print(f"  c = {cell.c:7.0e}  frequency {cell.frequency:.3f}  95% interval [{lo:.3f}, {hi:.3f}]"
              f"  mean largest gap / beta_c = {cell.mean_sup_gap / cell.beta_c:.3g}")
