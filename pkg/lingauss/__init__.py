from .__about__ import __version__  # noqa: F401

from .constraints import (  # noqa: F401
    AffineTransform,
    GaussianProblem,
    LinearConstraints,
    evaluate_shifted,
    whiten,
)
from .derivatives import (  # noqa: F401
    GradientEstimate,
    MomentEstimates,
    estimate_moments,
    grad_log_pmin,
    gradient,
    pmin_problem,
    pmin_to_standard,
)
from .hdr import (  # noqa: F401
    LogZEstimate,
    RepeatedLogZ,
    estimate_log_z,
    estimate_log_z_repeated,
    integrate,
)
from .liness import (  # noqa: F401
    ChainConfig,
    LinESS,
    active_brackets,
    intersection_angles,
    sample_chain,
)
from .nestings import ShiftSequence, build_sequence, find_shift  # noqa: F401
