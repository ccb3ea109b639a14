"""Multi-depot same-day delivery routing engine and rolling-horizon fleet simulator."""

from sddroute.model import ScenarioConfig
from sddroute.network import Network, load_network

__all__ = ["Network", "ScenarioConfig", "load_network"]
__version__ = "0.1.0"
