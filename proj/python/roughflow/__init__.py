"""Python access to the roughflow experiment core."""

import json

from ._core import (
    ConfigError,
    DivergenceError,
    InfeasibleError,
    ParameterError,
    RoughflowError,
    __version__,
    builtin_model_names,
    experiment_kinds,
    lift,
    sample_fbm,
    sample_mixed,
    sha256_hex,
)
from . import _core

__all__ = [
    "ConfigError",
    "DivergenceError",
    "InfeasibleError",
    "ParameterError",
    "RoughflowError",
    "__version__",
    "builtin_model_names",
    "experiment_kinds",
    "lift",
    "run",
    "sample_fbm",
    "sample_mixed",
    "sha256_hex",
    "validate",
]


def validate(config):
    """Raise ConfigError if the config dict is not runnable."""
    _core.validate_config(config["kind"], json.dumps(config))


def run(config, seed=None, workers=1):
    """Run a config dict in memory.

    Returns (artifacts, resolved): artifact name to text, and the resolved
    parameters echoed into the manifest.
    """
    if seed is None:
        seed = config.get("seed", 0)
    out = _core.run_experiment(config["kind"], json.dumps(config), seed, workers)
    return dict(out["artifacts"]), json.loads(out["resolved"])
