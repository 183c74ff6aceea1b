"""Sewing pattern reconstruction from garment point clouds."""
from .pattern import (
    DecodeThresholds,
    Edge,
    Panel,
    PanelClassMap,
    PatternError,
    PatternTensor,
    Placement,
    SewingPattern,
    Stitch,
    decode_pattern,
    default_class_map,
    encode_pattern,
    parse_pattern,
    serialize_pattern,
    validate_pattern,
)

__version__ = "0.1.0"
