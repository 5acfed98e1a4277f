"""Simulation of ALE(alpha, eta) planar growth from composed slit maps."""

from . import cluster, loewner, rng, sampling, slitgeom
from .cluster import ClusterState, append_particle, map_deriv, map_point, omega_event, parent_of
from .loewner import DrivingFunction, reverse_flow, reverse_flow_deriv
from .sampling import ModelParams, Trajectory, run_model
from .slitgeom import LogPolarPoint, base_angle, capacity_from_length, length_from_capacity, slit_map, slit_map_deriv

__version__ = "0.1.0"
