"""Reduced-order diffusion in tubes and branched tubular networks."""

from tubediff.network import (
    ConeRadius,
    MeshError,
    NetworkMesh,
    SinusoidRadius,
    TabulatedRadius,
    TwoPath,
    interval_mesh,
    load_mesh,
    radius_derivative,
    read_mesh,
    refine,
    two_paths,
    write_mesh,
)

__version__ = "0.1.0"
