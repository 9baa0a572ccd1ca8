"""Slab decomposition across sites, multisection within a site, LET export."""

from .let import build_local_essential_tree, decode_let, encode_let, model_let_bytes, region_box
from .multisection import MultisectionError, ProcessDomain, domain_ranks, multisection_decompose, section_counts
from .slabs import (
    BoundaryUpdate,
    MigrationError,
    MigrationSplit,
    SampleSet,
    SiteSlab,
    check_tiling,
    sample_particles,
    select_migrants,
    slab_index,
    target_fractions,
    uniform_slabs,
    update_site_boundaries,
    with_stats,
    write_decomposition_csv,
)

__all__ = [
    "BoundaryUpdate",
    "MigrationError",
    "MigrationSplit",
    "MultisectionError",
    "ProcessDomain",
    "SampleSet",
    "SiteSlab",
    "build_local_essential_tree",
    "check_tiling",
    "decode_let",
    "domain_ranks",
    "encode_let",
    "model_let_bytes",
    "multisection_decompose",
    "region_box",
    "sample_particles",
    "section_counts",
    "select_migrants",
    "slab_index",
    "target_fractions",
    "uniform_slabs",
    "update_site_boundaries",
    "with_stats",
    "write_decomposition_csv",
]
