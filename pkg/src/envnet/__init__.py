"""envnet: ground-based environmental sensor data management engine."""

__version__ = "0.1.0"

from .model import (  # noqa: F401
    CalibrationSpec,
    ChannelDescriptor,
    Deployment,
    NodeDescriptor,
    QualityFlag,
    SensorRecord,
    Site,
)
from .store import open_store  # noqa: F401
