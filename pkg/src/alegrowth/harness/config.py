"""Experiment configuration: a flat JSON object mapped onto a dataclass."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import List, Optional

from ..slitgeom import DomainError

__all__ = ["ExperimentConfig", "EXPERIMENTS", "load_config"]

EXPERIMENTS = ("simulate", "phase", "moments", "converge", "estimates", "trace")
EXECUTION_FIELDS = ("threads", "output_dir")


@dataclass
class ExperimentConfig:
    """Every knob of a harness run.

    Scalar model fields (``eta``, ``c``, ``sigma``/``gamma``, ``T``/``n``) are the
    defaults for the sweep lists; an unset sweep list becomes the one-element
    list of its scalar.  When neither ``sigma`` nor ``gamma`` is set, ``gamma``
    defaults to the threshold exponent plus ``gamma_margin`` for ``eta > 1``
    and to 1 otherwise.
    """

    experiment: str = "simulate"
    model: str = "ale"
    eta: float = 4.0
    c: float = 1e-3
    alpha: float = 0.0
    sigma: Optional[float] = None
    gamma: Optional[float] = None
    gamma_margin: float = 0.5
    T: Optional[float] = 0.05
    n: Optional[int] = None
    capacity_rule: str = "constant"
    sigma_tilde: Optional[float] = None
    pin_theta1: bool = False
    seed: int = 0
    replicas: int = 1
    threads: int = 1
    output_dir: str = "out"
    eta_values: Optional[List[float]] = None
    c_values: Optional[List[float]] = None
    sigma_values: Optional[List[float]] = None
    gamma_values: Optional[List[float]] = None
    # moments
    t: float = 0.01
    moment_x: Optional[float] = None
    # convergence
    radius: float = 2.0
    n_rays: int = 256
    gap_max: Optional[float] = None
    # estimates
    cases: int = 500
    T_min: float = 1e-3
    T_max: float = 1.0
    ode_tol: float = 1e-11
    # rendering
    trace_points: int = 1024
    refine_tol: float = 0.005
    trajectory_csv: Optional[str] = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise DomainError(f"unknown experiment {self.experiment!r}")
        if self.model not in ("ale", "markov"):
            raise DomainError(f"unknown model {self.model!r}")
        if self.replicas < 1:
            raise DomainError("replicas must be >= 1")
        if self.threads < 1:
            raise DomainError("threads must be >= 1")
        if self.T is not None and self.n is not None:
            # n wins when both are supplied explicitly
            self.T = None
        for name in ("eta_values", "c_values", "sigma_values", "gamma_values"):
            v = getattr(self, name)
            if v is not None and len(v) == 0:
                raise DomainError(f"{name} must be non-empty")

    @property
    def etas(self) -> list:
        return list(self.eta_values) if self.eta_values is not None else [self.eta]

    @property
    def cs(self) -> list:
        return list(self.c_values) if self.c_values is not None else [self.c]

    def regularizations(self, eta: float) -> list[tuple[str, float]]:
        """``("sigma", v)`` or ``("gamma", v)`` pairs swept for ``eta``."""
        from .experiments import gamma_threshold

        if self.sigma_values is not None:
            return [("sigma", float(v)) for v in self.sigma_values]
        if self.gamma_values is not None:
            return [("gamma", float(v)) for v in self.gamma_values]
        if self.sigma is not None:
            return [("sigma", float(self.sigma))]
        if self.gamma is not None:
            return [("gamma", float(self.gamma))]
        if eta > 1:
            return [("gamma", gamma_threshold(eta, self.model) + self.gamma_margin)]
        return [("gamma", 1.0)]

    def to_dict(self) -> dict:
        return asdict(self)

    def reproducible_dict(self) -> dict:
        """Config without execution-only fields; results do not depend on these."""
        d = asdict(self)
        for k in EXECUTION_FIELDS:
            d.pop(k)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise DomainError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


def load_config(path) -> ExperimentConfig:
    with open(Path(path), encoding="utf-8") as fh:
        return ExperimentConfig.from_dict(json.load(fh))
