"""Selective Adaptive Learning (SAL) networks, datasets and experiments."""

from ._core import (
    Activation,
    Method,
    Network,
    NetworkConfig,
    deep_config,
    grad_check_suite,
    load_benchmark,
    run_cli,
    shallow_config,
)

__all__ = [
    "Activation",
    "Method",
    "Network",
    "NetworkConfig",
    "deep_config",
    "grad_check_suite",
    "load_benchmark",
    "run_cli",
    "shallow_config",
]
