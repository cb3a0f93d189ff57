"""Conformal Wasserstein distances between disk-type surfaces."""

from .density import (ConformalDensity, evaluate, load_density, pull_back, push_forward,
                      renormalize, save_density, synthesize, total_mass)
from .errors import (ConvergenceError, CwassError, InvalidInputError, InvalidParameterError,
                     MeshFormatError, TopologyError)
from .flatten import (FlatteningResult, SurfaceMesh, disk_mesh, flatten_to_disk, hemisphere_mesh,
                      load_mesh, mobius_normalize)
from .hyperbolic import (BoundaryPoint, DiskPoint, GeodesicDisk, MobiusTransform, geodesic_disk,
                         geodesic_volume, hyperbolic_distance, hyperbolic_quadrature,
                         interpolating_mobius, mobius_apply, mobius_compose, mobius_inverse)
from .localcost import CostConfig, CostMatrix, cost_matrix, local_cost
from .quotient import QuotientConfig, QuotientResult, quotient_distance, self_fittability_scan
from .transport import (TransportPlan, TransportProblem, generalized_distance, solve_assignment,
                        solve_transport)

__version__ = "0.1.0"

__all__ = [
    "BoundaryPoint", "ConformalDensity", "ConvergenceError", "CostConfig", "CostMatrix",
    "CwassError", "DiskPoint", "FlatteningResult", "GeodesicDisk", "InvalidInputError",
    "InvalidParameterError", "MeshFormatError", "MobiusTransform", "QuotientConfig",
    "QuotientResult", "SurfaceMesh", "TopologyError", "TransportPlan", "TransportProblem",
    "cost_matrix", "disk_mesh", "evaluate", "flatten_to_disk", "generalized_distance",
    "geodesic_disk", "geodesic_volume", "hemisphere_mesh", "hyperbolic_distance",
    "hyperbolic_quadrature", "interpolating_mobius", "load_density", "load_mesh", "local_cost",
    "mobius_apply", "mobius_compose", "mobius_inverse", "mobius_normalize", "pull_back",
    "push_forward", "quotient_distance", "renormalize", "save_density", "self_fittability_scan",
    "solve_assignment", "solve_transport", "synthesize", "total_mass",
]
