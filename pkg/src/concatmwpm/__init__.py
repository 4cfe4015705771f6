"""Concatenated minimum-weight perfect matching decoders for triangular color codes."""

from importlib.metadata import PackageNotFoundError, version

from .circuit import OPTIMAL_SCHEDULE, CnotSchedule, apply_noise, build_memory_circuit, enumerate_schedules
from .decoder2d import ConcatMatchingDecoder2D, Syndrome2D, syndrome_array, syndrome_from_error
from .decoder_cl import ConcatMatchingDecoderCL, build_context
from .dem import DetectorErrorModel, decompose, extract_dem, parse_dem, serialize_dem
from .lattice import Color, ColorLattice, build_triangular
from .montecarlo import FailureEstimate, estimate_pfail, run_bitflip, sample

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

__all__ = [
    "OPTIMAL_SCHEDULE",
    "CnotSchedule",
    "Color",
    "ColorLattice",
    "ConcatMatchingDecoder2D",
    "ConcatMatchingDecoderCL",
    "DetectorErrorModel",
    "FailureEstimate",
    "Syndrome2D",
    "apply_noise",
    "build_context",
    "build_memory_circuit",
    "build_triangular",
    "decompose",
    "enumerate_schedules",
    "estimate_pfail",
    "extract_dem",
    "parse_dem",
    "run_bitflip",
    "sample",
    "serialize_dem",
    "syndrome_array",
    "syndrome_from_error",
]
