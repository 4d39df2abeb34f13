"""Python bindings for the pvtrack estimator, controller and simulator."""

from ._core import *  # noqa: F401,F403
from ._core import ConfigError, DomainError, Error, run

__all__ = [name for name in dir() if not name.startswith("_")]
