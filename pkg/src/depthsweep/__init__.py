"""depthsweep: direct-depth stereo matching at desk scale.

A two-stage pipeline: a depth-uniform plane-sweep cost volume regresses a
coarse depth map, then a five-candidate refinement guided by learned scale
and feature uncertainties corrects it.  Hot kernels run through a compiled
Cython core when built, with a pure numpy fallback selected at import.
"""

from ._kernels import backend_name
from .geometry import (
    DepthPlanes,
    StereoRig,
    candidate_disparity,
    depth_error_from_disparity_error,
    depth_to_disparity,
    disparity_to_depth,
    make_rig,
    sample_depth_planes,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "backend_name",
    "StereoRig",
    "DepthPlanes",
    "make_rig",
    "sample_depth_planes",
    "depth_to_disparity",
    "disparity_to_depth",
    "candidate_disparity",
    "depth_error_from_disparity_error",
]
