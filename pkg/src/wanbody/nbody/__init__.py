"""TreePM force evaluation, time integration and verification oracles."""

from .direct import direct_force_oracle, direct_potential_energy
from .force import DirectForce, ForceParams, ForceResult, TreeForce, TreePMForce
from .ics import plummer, two_body_circular, uniform_lattice, uniform_random
from .integrate import AdaptiveStep, FixedStep, integrate_step
from .particles import ParticleSet, SnapshotError, load_text, read_snapshot, write_snapshot
from .pm import Mesh, green_function, pm_assign_density, pm_interpolate, pm_solve
from .split import shape_form_factor, short_range_taper
from .tree import EmptyTreeError, OcTree, TruncatedNodeError, build_tree, make_groups, tree_force

__all__ = [
    "AdaptiveStep",
    "DirectForce",
    "EmptyTreeError",
    "FixedStep",
    "ForceParams",
    "ForceResult",
    "Mesh",
    "OcTree",
    "ParticleSet",
    "SnapshotError",
    "TreeForce",
    "TreePMForce",
    "TruncatedNodeError",
    "build_tree",
    "direct_force_oracle",
    "direct_potential_energy",
    "green_function",
    "integrate_step",
    "load_text",
    "make_groups",
    "plummer",
    "pm_assign_density",
    "pm_interpolate",
    "pm_solve",
    "read_snapshot",
    "shape_form_factor",
    "short_range_taper",
    "tree_force",
    "two_body_circular",
    "uniform_lattice",
    "uniform_random",
    "write_snapshot",
]
