"""restokit: an agentic image-restoration engine.

Fast/slow/feedback agent routing, single- and mixed-distortion restoration
tools, deterministic degradation synthesis, instruction-corpus builders, and
experiment harnesses, served behind an HTTP gateway.
"""

from .domain import (
    DistortionInstance,
    DistortionKind,
    ImageState,
    Provenance,
    QualityReport,
    SINGLE_KINDS,
    ToolId,
    USER_KINDS,
    WEATHER_KINDS,
    tool_for_kind,
)

__all__ = [
    "DistortionInstance",
    "DistortionKind",
    "ImageState",
    "Provenance",
    "QualityReport",
    "SINGLE_KINDS",
    "ToolId",
    "USER_KINDS",
    "WEATHER_KINDS",
    "tool_for_kind",
]

__version__ = "0.1.0"
