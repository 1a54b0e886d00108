"""Mining difficulty-ordered variation pairs for simplification training.

Given several generated variations of each piece, each with a predicted
difficulty level, a confidence and a style embedding, this module
enumerates (harder, easier) pairs whose level gap is at least a minimum,
optionally after dropping the least confident quarter of all variations
and keeping only the most stylistically similar half of each piece's
pairs.  The filtered strategy therefore always yields a subset of the
random strategy's pairs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .gnb import confidence_filter
from .style import cosine_similarity

__all__ = [
    "MiningError",
    "Variation",
    "Pair",
    "MiningReport",
    "STRATEGIES",
    "enumerate_pairs",
    "mine",
    "save_pairs",
    "load_pairs",
    "save_report",
    "load_report",
]


class MiningError(Exception):
    pass


STRATEGIES = ("random", "filtered")

CONFIDENCE_DROP_FRACTION = 0.25
SIMILARITY_KEEP_FRACTION = 0.5


@dataclass(frozen=True)
class Variation:
    """One generated variation: its id, source piece and model outputs."""

    id: str
    piece: str
    level: int
    confidence: float
    embedding: np.ndarray

    def __post_init__(self) -> None:
        if not 1 <= self.level <= 9:
            raise MiningError(f"variation {self.id}: level {self.level} outside 1..9")
        if not 0 <= self.confidence <= 1:
            raise MiningError(f"variation {self.id}: confidence {self.confidence}"
                              " outside [0, 1]")


@dataclass(frozen=True)
class Pair:
    """A training pair oriented from the harder to the easier variation."""

    piece: str
    hard: str
    easy: str
    hard_level: int
    easy_level: int
    gap: int
    sim: float


@dataclass(frozen=True)
class MiningReport:
    strategy: str
    min_gap: int
    counts: dict[str, int] = field(default_factory=dict)
    mean_distance: float = float("nan")
    mean_distance_by_gap: dict[int, float] = field(default_factory=dict)


def enumerate_pairs(levels: Sequence[int], min_gap: int = 1) -> list[tuple[int, int]]:
    """All index pairs ``(harder, easier)`` with a level gap of at least ``min_gap``.

    Pairs are ordered by (harder index, easier index).  A pair never
    relates an item to itself, and equal levels never pair (the gap is
    strictly positive whenever ``min_gap >= 1``).
    """
    if min_gap < 1:
        raise MiningError("min_gap must be at least 1")
    pairs = []
    for i, hi in enumerate(levels):
        for j, lo in enumerate(levels):
            if hi - lo >= min_gap:
                pairs.append((i, j))
    return pairs


def mine(variations: Sequence[Variation], strategy: str = "filtered",
         min_gap: int = 1) -> tuple[list[Pair], MiningReport]:
    """Mine training pairs from a pool of variations.

    ``random`` enumerates every in-piece pair meeting the gap.  ``filtered``
    first drops the least confident quarter of all variations (a single
    global cut), then keeps, per piece, the most similar half of the
    surviving pairs, rounding up.  Ties on similarity keep the pair that
    was enumerated first.
    """
    if strategy not in STRATEGIES:
        raise MiningError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
    ids = [v.id for v in variations]
    if len(set(ids)) != len(ids):
        raise MiningError("variation ids must be unique")

    pool = list(variations)
    raw_pairs = _in_piece_pairs(pool, min_gap)
    counts = {"raw": len(raw_pairs)}

    if strategy == "random":
        kept = raw_pairs
        counts["after_confidence"] = len(kept)
        counts["after_similarity"] = len(kept)
    else:
        keep_idx = confidence_filter([v.confidence for v in pool],
                                     CONFIDENCE_DROP_FRACTION)
        survivors = [pool[i] for i in keep_idx]
        confident = _in_piece_pairs(survivors, min_gap)
        counts["after_confidence"] = len(confident)
        kept = _similarity_cut(confident)
        counts["after_similarity"] = len(kept)

    report = MiningReport(
        strategy=strategy, min_gap=min_gap, counts=counts,
        mean_distance=_mean_distance(kept),
        mean_distance_by_gap={
            g: _mean_distance([p for p in kept if p.gap == g])
            for g in sorted({p.gap for p in kept})},
    )
    return kept, report


def _in_piece_pairs(pool: Sequence[Variation], min_gap: int) -> list[Pair]:
    by_piece: dict[str, list[Variation]] = {}
    for v in pool:
        by_piece.setdefault(v.piece, []).append(v)
    pairs: list[Pair] = []
    for piece in sorted(by_piece):
        group = by_piece[piece]
        for i, j in enumerate_pairs([v.level for v in group], min_gap):
            hard, easy = group[i], group[j]
            pairs.append(Pair(
                piece=piece, hard=hard.id, easy=easy.id,
                hard_level=hard.level, easy_level=easy.level,
                gap=hard.level - easy.level,
                sim=cosine_similarity(hard.embedding, easy.embedding)))
    return pairs


def _similarity_cut(pairs: Sequence[Pair]) -> list[Pair]:
    by_piece: dict[str, list[tuple[int, Pair]]] = {}
    for idx, p in enumerate(pairs):
        by_piece.setdefault(p.piece, []).append((idx, p))
    keep: list[tuple[int, Pair]] = []
    for piece, group in by_piece.items():
        n_keep = int(np.ceil(SIMILARITY_KEEP_FRACTION * len(group)))
        ranked = sorted(group, key=lambda t: (-t[1].sim, t[0]))
        keep.extend(ranked[:n_keep])
    keep.sort(key=lambda t: t[0])
    return [p for _, p in keep]


def _mean_distance(pairs: Sequence[Pair]) -> float:
    if not pairs:
        return float("nan")
    return float(np.mean([1.0 - p.sim for p in pairs]))


# ---------------------------------------------------------------------------
# Interchange format

def save_pairs(path: str, pairs: Sequence[Pair]) -> None:
    """One JSON object per line, sorted by (piece, hard, easy)."""
    ordered = sorted(pairs, key=lambda p: (p.piece, p.hard, p.easy))
    with open(path, "w", encoding="utf-8") as fh:
        for p in ordered:
            fh.write(json.dumps({
                "piece": p.piece, "hard": p.hard, "easy": p.easy,
                "hard_level": p.hard_level, "easy_level": p.easy_level,
                "gap": p.gap, "sim": p.sim}) + "\n")


def load_pairs(path: str) -> list[Pair]:
    out: list[Pair] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MiningError(f"{path}:{line_no}: bad JSON: {exc}") from exc
            try:
                out.append(Pair(
                    piece=rec["piece"], hard=rec["hard"], easy=rec["easy"],
                    hard_level=int(rec["hard_level"]),
                    easy_level=int(rec["easy_level"]),
                    gap=int(rec["gap"]), sim=float(rec["sim"])))
            except KeyError as exc:
                raise MiningError(f"{path}:{line_no}: missing field {exc}") from exc
    return out


def save_report(path: str, report: MiningReport) -> None:
    payload = {
        "strategy": report.strategy,
        "min_gap": report.min_gap,
        "counts": report.counts,
        "mean_distance": None if np.isnan(report.mean_distance) else report.mean_distance,
        "mean_distance_by_gap": {str(g): d for g, d in report.mean_distance_by_gap.items()},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_report(path: str) -> MiningReport:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    md = payload.get("mean_distance")
    return MiningReport(
        strategy=payload["strategy"], min_gap=int(payload["min_gap"]),
        counts=dict(payload["counts"]),
        mean_distance=float("nan") if md is None else float(md),
        mean_distance_by_gap={int(g): float(d)
                              for g, d in payload["mean_distance_by_gap"].items()},
    )
