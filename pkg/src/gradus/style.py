"""Style embeddings and cosine similarity between pieces.

The baseline embedding is a fixed 64-dimensional handcrafted vector built
from three normalized blocks: the pitch-class profile, a hashed histogram
of melodic bigrams, and octave-invariant rhythm and texture statistics.
It exists so that the pair-mining stage has a deterministic, dependency-free
notion of "stylistically similar"; richer embeddings can be swapped in
through the same JSONL interchange format.
"""

from __future__ import annotations

import json
import zlib
from typing import Optional, Sequence

import numpy as np

from .analysis import pitch_class_profile, skyline
from .score import Score, timeline

__all__ = [
    "StyleError",
    "EMBEDDING_DIM",
    "cosine_similarity",
    "style_distance",
    "baseline_embed",
    "save_embeddings",
    "load_embeddings",
]


class StyleError(Exception):
    pass


EMBEDDING_DIM = 64
_BIGRAM_BINS = 40
_STAT_BINS = 12


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine of the angle between two embeddings.

    Both vectors must share one dimension and have nonzero norm; a zero
    embedding carries no direction and is rejected rather than silently
    mapped to similarity 0.
    """
    va = np.asarray(a, dtype=np.float64).ravel()
    vb = np.asarray(b, dtype=np.float64).ravel()
    if va.shape != vb.shape:
        raise StyleError(f"dimension mismatch: {va.shape} vs {vb.shape}")
    na = np.linalg.norm(va)
    nb = np.linalg.norm(vb)
    if na == 0 or nb == 0:
        raise StyleError("cannot take cosine with a zero vector")
    return float(np.dot(va, vb) / (na * nb))


def style_distance(a: np.ndarray, b: np.ndarray) -> float:
    """``1 - cosine_similarity``; 0 means identical direction."""
    return 1.0 - cosine_similarity(a, b)


def baseline_embed(score: Score) -> np.ndarray:
    """Deterministic 64-dimensional style vector.

    Layout: 12 pitch-class profile bins, 40 hashed melodic-bigram counts,
    12 rhythm and texture statistics.  Each block is L2-normalized before
    concatenation, so every block contributes equal weight and the full
    vector has norm ``sqrt(3)`` before the final normalization.  Because
    the bigram hash uses pitch-class intervals and the statistics ignore
    octave, transposing a piece by whole octaves leaves the vector
    unchanged.
    """
    profile = pitch_class_profile(score)
    bigrams = _bigram_block(score)
    stats = _stat_block(score)
    blocks = []
    for block in (profile, bigrams, stats):
        norm = np.linalg.norm(block)
        blocks.append(block / norm if norm > 0 else block)
    v = np.concatenate(blocks)
    norm = np.linalg.norm(v)
    if norm == 0:
        raise StyleError("embedding degenerated to zero")
    return v / norm


def _bigram_block(score: Score) -> np.ndarray:
    """Hashed counts of (pitch-class interval, duration ratio sign) bigrams."""
    counts = np.zeros(_BIGRAM_BINS, dtype=np.float64)
    notes = [n for n in skyline(score) if n.pitch is not None]
    for a, b in zip(notes, notes[1:]):
        interval = (b.pitch.midi_number - a.pitch.midi_number) % 12
        if b.duration > a.duration:
            shape = "longer"
        elif b.duration < a.duration:
            shape = "shorter"
        else:
            shape = "equal"
        key = f"{interval}:{shape}".encode()
        counts[zlib.crc32(key) % _BIGRAM_BINS] += 1.0
    return counts


def _stat_block(score: Score) -> np.ndarray:
    """Octave-invariant rhythm and texture statistics."""
    segs = timeline(score)
    total = float(score.total_duration)
    durations = [float(n.duration) for n in skyline(score) if n.pitch is not None]
    sizes = [len(seg.pitches) for seg in segs]
    sounding = sum(float(seg.end - seg.start) for seg in segs if seg.pitches)
    onsets = sorted({float(ev.onset) for ev in score.notes()})
    iois = np.diff(onsets) if len(onsets) >= 2 else np.array([0.0])
    profile = pitch_class_profile(score)
    nz = profile[profile > 0]
    entropy = float(-(nz * np.log(nz)).sum())
    stats = np.array([
        np.mean(durations) if durations else 0.0,
        np.std(durations) if durations else 0.0,
        min(durations) if durations else 0.0,
        max(durations) if durations else 0.0,
        float(np.mean(sizes)),
        float(max(sizes)),
        sounding / total if total > 0 else 0.0,
        float(np.mean(iois)),
        float(np.std(iois)),
        entropy,
        len(durations) / total if total > 0 else 0.0,
        float(len({round(d, 9) for d in durations})),
    ], dtype=np.float64)
    return stats


# ---------------------------------------------------------------------------
# Interchange format

def save_embeddings(path: str, embeddings: dict[str, np.ndarray]) -> None:
    """Write one JSON object per line: ``{"id", "dim", "v"}``."""
    dims = {v.shape for v in embeddings.values()}
    if len(dims) > 1:
        raise StyleError(f"inconsistent embedding shapes: {sorted(dims)}")
    with open(path, "w", encoding="utf-8") as fh:
        for key in embeddings:
            v = np.asarray(embeddings[key], dtype=np.float64).ravel()
            fh.write(json.dumps({"id": key, "dim": int(v.shape[0]),
                                 "v": [float(x) for x in v]}) + "\n")


def load_embeddings(path: str) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    dim: Optional[int] = None
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise StyleError(f"{path}:{line_no}: bad JSON: {exc}") from exc
            key = rec.get("id")
            v = np.asarray(rec.get("v", []), dtype=np.float64)
            if key is None or v.ndim != 1 or v.shape[0] == 0:
                raise StyleError(f"{path}:{line_no}: record needs 'id' and nonempty 'v'")
            if rec.get("dim") != v.shape[0]:
                raise StyleError(f"{path}:{line_no}: dim {rec.get('dim')} does not "
                                 f"match vector length {v.shape[0]}")
            if dim is None:
                dim = v.shape[0]
            elif v.shape[0] != dim:
                raise StyleError(f"{path}:{line_no}: mixed dimensions {dim} and {v.shape[0]}")
            if key in out:
                raise StyleError(f"{path}:{line_no}: duplicate id {key!r}")
            out[key] = v
    return out
