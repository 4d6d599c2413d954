"""Discrete-event model of a 5G system acting as a logical TSN bridge."""

from .config import ScenarioConfig, load_config
from .topology import Network, build

__version__ = "0.1.0"

__all__ = ["Network", "ScenarioConfig", "build", "load_config", "__version__"]
