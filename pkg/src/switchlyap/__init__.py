"""Scenario-based synthesis and certification of min-switching control laws
for switched affine systems with interval uncertainty.

The pipeline: pick mixing weights and solve for the operating point, sample
scenario realizations, synthesize a quadratic function and a contraction
ellipsoid by maxdet semidefinite programming, shrink a sublevel set around
the sampled attraction ellipsoids, certify out-of-sample violation levels
from support-scenario counts, and validate by simulation and fresh sampling.
"""

from .confidence import (
    ConfidenceCertificate,
    DegenerateCountWarning,
    certify,
    epsilon,
    epsilon_residual,
    split_confidence,
)
from .control import (
    EllipsoidSet,
    OutputRegion,
    Trajectory,
    lyapunov_value,
    simulate,
    switching_law,
    translate_invariant_set,
)
from .intervals import (
    CredalStructure,
    ErrorModel,
    IntervalMatrix,
    ModelFormatError,
    NotSchurStable,
    OperatingPoint,
    SingularSystem,
    SwitchedAffineModel,
    build_error_model,
    load_model,
    model_from_dict,
    model_to_dict,
    project_operating_point,
    solve_operating_point,
)
from .sampling import ScenarioBatch, sample_batch, stream_rng
from .synthesis import (
    Infeasible,
    InvariantSetCertificate,
    LyapunovCertificate,
    NumericalFailure,
    ScenarioOffsetWarning,
    SupportCount,
    SynthesisError,
    Unbounded,
    build_sp1,
    build_sp2,
    count_support_scenarios,
    scenario_lmi_data,
    solve_sp1,
    solve_sp2,
)
from .validation import (
    InvarianceReport,
    ViolationReport,
    empirical_violation,
    invariance_suite,
    max_quadratic_over_ellipsoid,
    stage_one_violation,
    stage_two_violation,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "IntervalMatrix",
    "CredalStructure",
    "SwitchedAffineModel",
    "OperatingPoint",
    "ErrorModel",
    "ModelFormatError",
    "NotSchurStable",
    "SingularSystem",
    "solve_operating_point",
    "project_operating_point",
    "build_error_model",
    "load_model",
    "model_from_dict",
    "model_to_dict",
    "ScenarioBatch",
    "sample_batch",
    "stream_rng",
    "LyapunovCertificate",
    "InvariantSetCertificate",
    "SupportCount",
    "SynthesisError",
    "Infeasible",
    "Unbounded",
    "NumericalFailure",
    "ScenarioOffsetWarning",
    "scenario_lmi_data",
    "build_sp1",
    "solve_sp1",
    "build_sp2",
    "solve_sp2",
    "count_support_scenarios",
    "ConfidenceCertificate",
    "DegenerateCountWarning",
    "epsilon",
    "epsilon_residual",
    "split_confidence",
    "certify",
    "EllipsoidSet",
    "OutputRegion",
    "Trajectory",
    "lyapunov_value",
    "switching_law",
    "translate_invariant_set",
    "simulate",
    "ViolationReport",
    "InvarianceReport",
    "max_quadratic_over_ellipsoid",
    "stage_one_violation",
    "stage_two_violation",
    "empirical_violation",
    "invariance_suite",
]
