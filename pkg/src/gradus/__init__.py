"""Tokenized piano scores, difficulty models and pair mining for simplification."""

__version__ = "0.1.0"

from .score import (
    MusicXmlParseError,
    NoteEvent,
    Pitch,
    Score,
    ScoreError,
    UnsupportedStructureError,
    ValidationError,
    parse_musicxml,
    read_musicxml,
    serialize_musicxml,
    timeline,
    validate_two_staff,
    write_musicxml,
)

__all__ = [
    "__version__",
    "MusicXmlParseError",
    "NoteEvent",
    "Pitch",
    "Score",
    "ScoreError",
    "UnsupportedStructureError",
    "ValidationError",
    "parse_musicxml",
    "read_musicxml",
    "serialize_musicxml",
    "timeline",
    "validate_two_staff",
    "write_musicxml",
]
