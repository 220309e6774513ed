"""selftrig: simulation and analysis of self-triggered nonlinear control loops.

Pipeline: model a closed loop with measurement error, certify it with an
ISS-style Lyapunov bound, derive state-dependent inter-execution budgets
(via scaling symmetries or polynomial homogenization), and simulate the
resulting sample-and-hold loop against periodic and event-driven baselines.
"""

from .errors import (
    SelftrigError,
    NumericOverflow,
    StiffnessFailure,
    OriginReached,
    InvalidCertificate,
    WeightSingularity,
    EmptyRegion,
    InvalidThreshold,
    NotPolynomial,
    InvalidLambda,
    QuadratureFailure,
    SamplePointDegenerate,
    ConfigError,
)

__version__ = "0.1.0"
