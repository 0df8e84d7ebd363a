"""Vector-field k-means: cluster 2-D trajectories by the vector fields that explain them."""

__version__ = "0.1.0"

from vfkm.clustering import (  # noqa: E402
    Assignment,
    ClusteringConfig,
    RunState,
    assign,
    initialize,
    run,
    subcluster,
    total_energy,
)
from vfkm.fieldops import (  # noqa: E402
    VectorField,
    cotangent_laplacian,
    eval_field,
    lambda_matrix,
    segment_constraint,
    traj_error,
)
from vfkm.grid import Grid, build_grid  # noqa: E402
from vfkm.solver import (  # noqa: E402
    FitProblem,
    assemble_normal_system,
    conjugate_gradient,
    fit_vector_field,
)
from vfkm.trajectory import (  # noqa: E402
    Trajectory,
    TrajectorySet,
    build_segments,
    parse_trajectories,
    resample_min_interval,
    split_on_gaps,
)

__all__ = [
    "Assignment", "ClusteringConfig", "FitProblem", "Grid", "RunState", "Trajectory",
    "TrajectorySet", "VectorField", "assemble_normal_system", "assign", "build_grid",
    "build_segments", "conjugate_gradient", "cotangent_laplacian", "eval_field",
    "fit_vector_field", "initialize", "lambda_matrix", "parse_trajectories",
    "resample_min_interval", "run", "segment_constraint", "split_on_gaps", "subcluster",
    "total_energy", "traj_error",
]
