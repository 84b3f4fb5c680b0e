"""vplat: a containerization-ready virtual platform.

Deterministic event-driven simulation of a CPU + bus + AI-accelerator
system with GDB debugging, VCD tracing, console capture, a configuration
property system and a session-manager REST service.
"""

__version__ = "0.1.0"

from .kernel import RunOutcome, SimKernel
from .platform import ExitReport, Platform, build_platform, property_catalog

__all__ = [
    "ExitReport",
    "Platform",
    "RunOutcome",
    "SimKernel",
    "build_platform",
    "property_catalog",
    "__version__",
]
