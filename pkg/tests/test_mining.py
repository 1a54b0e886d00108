"""Pair mining tests, including an exhaustive enumeration oracle."""

import itertools
import math

import numpy as np
import pytest

from gradus.mining import (
    CONFIDENCE_DROP_FRACTION,
    MiningError,
    Pair,
    SIMILARITY_KEEP_FRACTION,
    Variation,
    enumerate_pairs,
    load_pairs,
    load_report,
    mine,
    save_pairs,
    save_report,
)


def oracle_pairs(levels, min_gap):
    """Every ordered index pair whose level gap clears the threshold."""
    out = []
    for i, hi in enumerate(levels):
        for j, lo in enumerate(levels):
            if i != j and hi - lo >= min_gap:
                out.append((i, j))
    return sorted(out)


class TestEnumeratePairs:
    def test_exhaustive_small_multisets(self):
        # every multiset of levels 1..4 up to size 8, several gaps
        for size in range(2, 9):
            for levels in itertools.combinations_with_replacement(
                    range(1, 5), size):
                for gap in (1, 2, 3):
                    got = sorted(enumerate_pairs(list(levels), min_gap=gap))
                    assert got == oracle_pairs(levels, gap), (levels, gap)

    def test_empty_and_singleton(self):
        assert enumerate_pairs([], min_gap=1) == []
        assert enumerate_pairs([5], min_gap=1) == []

    def test_no_self_pairs(self):
        pairs = enumerate_pairs([1, 5, 9], min_gap=1)
        assert all(i != j for i, j in pairs)
        assert len(pairs) == 3

    def test_gap_below_one_rejected(self):
        with pytest.raises(MiningError):
            enumerate_pairs([1, 2], min_gap=0)

    def test_count_formula(self):
        # uniform levels 1..9, gap g: count = sum over pairs with diff >= g
        levels = list(range(1, 10))
        for gap in range(1, 9):
            expected = sum(1 for a in levels for b in levels if a - b >= gap)
            assert len(enumerate_pairs(levels, min_gap=gap)) == expected


def make_variations(rng, n_pieces=4, per_piece=12):
    out = []
    for p in range(n_pieces):
        for k in range(per_piece):
            emb = rng.normal(size=8)
            emb /= np.linalg.norm(emb)
            out.append(Variation(
                id=f"piece{p:03d}.v{k:03d}",
                piece=f"piece{p:03d}",
                level=int(rng.integers(1, 10)),
                confidence=float(rng.uniform(0.2, 1.0)),
                embedding=emb))
    return out


class TestMine:
    def test_random_strategy_is_all_in_piece_pairs(self):
        rng = np.random.default_rng(0)
        variations = make_variations(rng)
        pairs, report = mine(variations, strategy="random", min_gap=1)
        # oracle: group by piece, enumerate within each
        want = 0
        by_piece = {}
        for v in variations:
            by_piece.setdefault(v.piece, []).append(v)
        for vs in by_piece.values():
            want += len(oracle_pairs([v.level for v in vs], 1))
        assert len(pairs) == want
        assert report.counts["raw"] == want

    def test_pairs_never_cross_pieces(self):
        rng = np.random.default_rng(1)
        variations = make_variations(rng)
        for strategy in ("random", "filtered"):
            pairs, _ = mine(variations, strategy=strategy, min_gap=2)
            for pr in pairs:
                assert pr.hard.startswith(pr.piece)
                assert pr.easy.startswith(pr.piece)

    def test_gap_attribute_correct(self):
        rng = np.random.default_rng(2)
        variations = make_variations(rng)
        lookup = {v.id: v for v in variations}
        pairs, _ = mine(variations, strategy="random", min_gap=3)
        for pr in pairs:
            assert pr.gap == pr.hard_level - pr.easy_level
            assert pr.gap >= 3
            assert lookup[pr.hard].level == pr.hard_level
            assert lookup[pr.easy].level == pr.easy_level

    def test_filtered_subset_of_random(self):
        for seed in range(5):
            rng = np.random.default_rng(seed)
            variations = make_variations(rng, n_pieces=5, per_piece=10)
            rand, _ = mine(variations, strategy="random", min_gap=1)
            filt, _ = mine(variations, strategy="filtered", min_gap=1)
            rand_keys = {(p.hard, p.easy) for p in rand}
            filt_keys = {(p.hard, p.easy) for p in filt}
            assert filt_keys <= rand_keys
            assert len(filt) < len(rand) or len(rand) == 0

    def test_filtered_counts_consistent(self):
        rng = np.random.default_rng(3)
        variations = make_variations(rng)
        pairs, report = mine(variations, strategy="filtered", min_gap=1)
        c = report.counts
        assert c["after_similarity"] == len(pairs)
        assert c["after_similarity"] <= c["after_confidence"] <= c["raw"]

    def test_confidence_cut_drops_exact_fraction(self):
        rng = np.random.default_rng(4)
        variations = make_variations(rng, n_pieces=5, per_piece=20)  # 100
        pairs, _ = mine(variations, strategy="filtered", min_gap=1)
        dropped = {v.id for v in sorted(
            variations, key=lambda v: v.confidence)[:25]}
        # kept pairs never touch the 25 least-confident variations
        for pr in pairs:
            assert pr.hard not in dropped
            assert pr.easy not in dropped

    def test_similarity_cut_keeps_most_similar_half(self):
        rng = np.random.default_rng(5)
        variations = make_variations(rng, n_pieces=1, per_piece=8)
        # uniform confidence: the 25% cut drops the last two by index
        variations = [Variation(id=v.id, piece=v.piece, level=v.level,
                                confidence=1.0, embedding=v.embedding)
                      for v in variations]
        pairs, _ = mine(variations, strategy="filtered", min_gap=1)
        survivors = variations[:6]
        all_pairs = enumerate_pairs([v.level for v in survivors], 1)
        if not all_pairs:
            pytest.skip("degenerate level draw")
        sims = sorted(
            (float(np.dot(survivors[i].embedding, survivors[j].embedding))
             for i, j in all_pairs), reverse=True)
        keep = math.ceil(len(all_pairs) * SIMILARITY_KEEP_FRACTION)
        assert len(pairs) == keep
        got_sims = sorted((p.sim for p in pairs), reverse=True)
        np.testing.assert_allclose(got_sims, sims[:keep], atol=1e-12)

    def test_filtered_distance_not_worse(self):
        hits = 0
        for seed in range(6):
            rng = np.random.default_rng(100 + seed)
            variations = make_variations(rng, n_pieces=6, per_piece=12)
            _, rrep = mine(variations, strategy="random", min_gap=1)
            _, frep = mine(variations, strategy="filtered", min_gap=1)
            if not math.isnan(frep.mean_distance):
                assert frep.mean_distance <= rrep.mean_distance + 1e-12
                hits += 1
        assert hits > 0

    def test_unknown_strategy_rejected(self):
        rng = np.random.default_rng(6)
        with pytest.raises(MiningError):
            mine(make_variations(rng), strategy="exotic", min_gap=1)

    def test_duplicate_ids_rejected(self):
        rng = np.random.default_rng(7)
        variations = make_variations(rng, n_pieces=1, per_piece=3)
        variations.append(variations[0])
        with pytest.raises(MiningError):
            mine(variations, strategy="random", min_gap=1)

    def test_empty_input(self):
        pairs, report = mine([], strategy="random", min_gap=1)
        assert pairs == []
        assert math.isnan(report.mean_distance)

    def test_report_distance_matches_pairs(self):
        rng = np.random.default_rng(8)
        variations = make_variations(rng)
        pairs, report = mine(variations, strategy="random", min_gap=2)
        want = float(np.mean([1.0 - p.sim for p in pairs]))
        assert report.mean_distance == pytest.approx(want, abs=1e-12)
        for gap, dist in report.mean_distance_by_gap.items():
            sub = [1.0 - p.sim for p in pairs if p.gap == gap]
            assert dist == pytest.approx(float(np.mean(sub)), abs=1e-12)


class TestPersistence:
    def test_pairs_round_trip(self, tmp_path):
        rng = np.random.default_rng(9)
        variations = make_variations(rng)
        pairs, report = mine(variations, strategy="filtered", min_gap=1)
        ppath = tmp_path / "pairs.jsonl"
        save_pairs(str(ppath), pairs)
        loaded = load_pairs(str(ppath))
        assert sorted(loaded, key=lambda p: (p.piece, p.hard, p.easy)) == \
            sorted(pairs, key=lambda p: (p.piece, p.hard, p.easy))

    def test_pairs_file_sorted(self, tmp_path):
        rng = np.random.default_rng(10)
        variations = make_variations(rng)
        pairs, _ = mine(variations, strategy="random", min_gap=1)
        ppath = tmp_path / "pairs.jsonl"
        save_pairs(str(ppath), pairs)
        loaded = load_pairs(str(ppath))
        keys = [(p.piece, p.hard, p.easy) for p in loaded]
        assert keys == sorted(keys)

    def test_report_round_trip(self, tmp_path):
        rng = np.random.default_rng(11)
        variations = make_variations(rng)
        _, report = mine(variations, strategy="filtered", min_gap=2)
        rpath = tmp_path / "report.json"
        save_report(str(rpath), report)
        loaded = load_report(str(rpath))
        assert loaded.strategy == report.strategy
        assert loaded.min_gap == report.min_gap
        assert loaded.counts == report.counts
        if math.isnan(report.mean_distance):
            assert math.isnan(loaded.mean_distance)
        else:
            assert loaded.mean_distance == pytest.approx(report.mean_distance)

    def test_nan_distance_round_trips(self, tmp_path):
        _, report = mine([], strategy="random", min_gap=1)
        rpath = tmp_path / "empty.json"
        save_report(str(rpath), report)
        assert math.isnan(load_report(str(rpath)).mean_distance)


class TestVariationValidation:
    def test_level_bounds(self):
        emb = np.ones(4) / 2.0
        with pytest.raises(MiningError):
            Variation(id="a", piece="p", level=0, confidence=0.5,
                      embedding=emb)
        with pytest.raises(MiningError):
            Variation(id="a", piece="p", level=10, confidence=0.5,
                      embedding=emb)

    def test_confidence_bounds(self):
        emb = np.ones(4) / 2.0
        with pytest.raises(MiningError):
            Variation(id="a", piece="p", level=5, confidence=1.5,
                      embedding=emb)
