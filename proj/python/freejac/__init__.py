"""Free-probability spectra of deep-network Jacobians and Fisher information."""

import json

from ._core import (
    ConfigError,
    NumericalError,
    PreconditionError,
    UndefinedTransformError,
    __version__,
    free_multiplicative_convolution,
    haar_orthogonal,
    jacobian,
    moments_from_s,
    predict_mu,
    predict_xi,
    s_transform,
    schatten_norm,
    singular_values,
    symmetric_eigenvalues,
    theory_profile,
    trace_moments,
)
from ._core import run_experiment_json as _run_experiment_json


def run_experiment(config, threads=1):
    """Run one harness command; returns (payload dict, {table name: CSV text})."""
    text = config if isinstance(config, str) else json.dumps(config)
    payload, tables = _run_experiment_json(text, threads)
    return json.loads(payload), dict(tables)
