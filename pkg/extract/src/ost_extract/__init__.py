"""Offline embedding extraction for the ost matcher."""

from .encoders import ClipEncoder, EncoderLoadError, TinyJointEncoder, load_encoder
from .extract import ExtractJob, extract_frames, extract_text

__version__ = "0.1.0"

__all__ = [
    "ClipEncoder",
    "EncoderLoadError",
    "ExtractJob",
    "TinyJointEncoder",
    "extract_frames",
    "extract_text",
    "load_encoder",
    "__version__",
]
