"""Rating workflow: scheduling, votes, composites, road labels, ledger."""

import itertools
import math

import numpy as np
import pytest

from restoregraph.city_graph import RoadSegment
from restoregraph.labeling import (
    INDICATORS,
    ImageRecord,
    LabelSet,
    RatingState,
    VoteRecord,
    append_ledger,
    apply_vote,
    composite_scores,
    label_roads,
    next_pair,
    open_ledger,
    read_image_manifest,
    read_label_set,
    read_ledger,
    replay_ledger,
    write_image_manifest,
    write_label_set,
)
from restoregraph.trueskill import TrueSkillParams


def state_of(n=4, prefix="img"):
    return RatingState([f"{prefix}{i}" for i in range(n)])


class TestRatingState:
    def test_initial_ratings_are_priors(self):
        state = state_of(2)
        r = state.ratings["img0"]["extent"]
        assert (r.mu, r.sigma) == (25.0, 25.0 / 3.0)
        assert state.counts == {"img0": 0, "img1": 0}

    def test_duplicate_ids_rejected(self):
        with pytest.raises(ValueError, match="duplicate"):
            RatingState(["a", "a"])

    def test_progress_fields(self):
        state = state_of(3)
        p = state.progress()
        assert p == {"images": 3, "min_count": 0, "complete_fraction": 0.0}


class TestNextPair:
    def test_two_images_unique_pair(self):
        state = state_of(2)
        pair = next_pair(state, "extent", seed=0)
        assert set(pair) == {"img0", "img1"}

    def test_min_sum_rule_skips_saturated_image(self):
        state = state_of(3)
        state.counts["img0"] = 20
        pair = next_pair(state, "extent", seed=1)
        assert set(pair) == {"img1", "img2"}

    def test_repeated_calls_identical(self):
        state = state_of(6)
        for indicator in INDICATORS:
            a = next_pair(state, indicator, seed=7)
            b = next_pair(state, indicator, seed=7)
            assert a == b

    def test_never_self_pair(self):
        state = state_of(5)
        rng = np.random.default_rng(0)
        for k in range(200):
            pair = next_pair(state, "fascination", seed=k)
            assert pair[0] != pair[1]
            apply_vote(state, pair, "fascination",
                       ["left", "right", "both", "neither"][int(rng.integers(4))])

    def test_single_lowest_pairs_with_second_lowest(self):
        state = state_of(4)
        state.counts.update({"img0": 0, "img1": 5, "img2": 5, "img3": 9})
        for k in range(20):
            pair = set(next_pair(state, "extent", seed=k))
            assert "img0" in pair
            assert pair & {"img1", "img2"}

    def test_uniform_over_lowest_pairs(self):
        # all three pairs of the three zero-count images should appear
        state = state_of(4)
        state.counts["img3"] = 3
        seen = set()
        for k in range(60):
            seen.add(frozenset(next_pair(state, "extent", seed=k)))
        want = {frozenset(p) for p in itertools.combinations(
            ["img0", "img1", "img2"], 2)}
        assert seen == want

    def test_too_few_images_rejected(self):
        with pytest.raises(ValueError, match="at least 2"):
            next_pair(state_of(1), "extent")

    def test_unknown_indicator_rejected(self):
        with pytest.raises(ValueError, match="indicator"):
            next_pair(state_of(3), "comfort")


class TestApplyVote:
    def test_left_win_moves_ratings(self):
        state = state_of(2)
        apply_vote(state, ("img0", "img1"), "extent", "left")
        winner = state.ratings["img0"]["extent"]
        loser = state.ratings["img1"]["extent"]
        assert winner.mu > 25.0 > loser.mu
        assert winner.sigma < 25.0 / 3.0 and loser.sigma < 25.0 / 3.0
        assert abs((winner.mu - 25.0) + (loser.mu - 25.0)) < 1e-12
        assert state.counts == {"img0": 1, "img1": 1}

    def test_frozen_win_values(self):
        state = state_of(2)
        apply_vote(state, ("img0", "img1"), "extent", "left")
        winner = state.ratings["img0"]["extent"]
        assert winner.mu == pytest.approx(29.39557565, abs=1e-6)
        assert winner.sigma == pytest.approx(7.17114146, abs=1e-6)

    def test_right_win_mirrors_left_win(self):
        s1 = state_of(2)
        apply_vote(s1, ("img0", "img1"), "extent", "left")
        s2 = state_of(2)
        apply_vote(s2, ("img1", "img0"), "extent", "right")
        assert s1.ratings["img0"]["extent"] == s2.ratings["img0"]["extent"]
        assert s1.ratings["img1"]["extent"] == s2.ratings["img1"]["extent"]

    def test_both_is_draw(self):
        state = state_of(2)
        apply_vote(state, ("img0", "img1"), "extent", "both")
        a = state.ratings["img0"]["extent"]
        b = state.ratings["img1"]["extent"]
        assert a.mu == 25.0 and b.mu == 25.0
        assert a.sigma == b.sigma < 25.0 / 3.0

    def test_neither_keeps_ratings_counts_advance(self):
        state = state_of(2)
        before = state.ratings["img0"]["extent"]
        apply_vote(state, ("img0", "img1"), "extent", "neither")
        assert state.ratings["img0"]["extent"] == before
        assert state.counts == {"img0": 1, "img1": 1}
        assert len(state.ledger) == 1

    def test_only_voted_indicator_changes(self):
        state = state_of(2)
        apply_vote(state, ("img0", "img1"), "extent", "left")
        for ind in INDICATORS:
            if ind != "extent":
                assert state.ratings["img0"][ind].mu == 25.0

    def test_unknown_image_rejected(self):
        with pytest.raises(ValueError, match="unknown image"):
            apply_vote(state_of(2), ("img0", "ghost"), "extent", "left")

    def test_self_pair_rejected(self):
        with pytest.raises(ValueError, match="itself"):
            apply_vote(state_of(2), ("img0", "img0"), "extent", "left")

    def test_unknown_outcome_rejected(self):
        with pytest.raises(ValueError, match="outcome"):
            apply_vote(state_of(2), ("img0", "img1"), "extent", "tie")


class TestCompositeScores:
    def vote_all_indicators(self, state, pair, outcome="left"):
        for ind in INDICATORS:
            apply_vote(state, pair, ind, outcome)

    def test_unrated_prior_mean(self):
        state = state_of(2)
        self.vote_all_indicators(state, ("img0", "img1"), "neither")
        scores, incomplete = composite_scores(state)
        assert scores == {"img0": 25.0, "img1": 25.0}
        assert incomplete == []

    def test_mean_of_four_indicators(self):
        state = state_of(2)
        self.vote_all_indicators(state, ("img0", "img1"), "left")
        scores, _ = composite_scores(state)
        mus = [state.ratings["img0"][ind].mu for ind in INDICATORS]
        assert scores["img0"] == pytest.approx(sum(mus) / 4)

    def test_incomplete_image_flagged(self):
        state = state_of(3)
        self.vote_all_indicators(state, ("img0", "img1"))
        apply_vote(state, ("img0", "img2"), "extent", "left")
        scores, incomplete = composite_scores(state)
        assert incomplete == ["img2"]
        assert set(scores) == {"img0", "img1"}

    def test_matches_scalar_loop_oracle(self):
        state = state_of(5)
        rng = np.random.default_rng(3)
        for _ in range(120):
            pair = next_pair(state, INDICATORS[int(rng.integers(4))], int(rng.integers(1e6)))
            indicator = INDICATORS[int(rng.integers(4))]
            outcome = ["left", "right", "both", "neither"][int(rng.integers(4))]
            apply_vote(state, pair, indicator, outcome)
        scores, incomplete = composite_scores(state)
        for image in state.image_ids:
            if image in incomplete:
                assert any(state.indicator_counts[image][i] == 0 for i in INDICATORS)
                continue
            total = 0.0
            for ind in INDICATORS:
                total += state.ratings[image][ind].mu
            assert scores[image] == pytest.approx(total / 4, abs=1e-12)


class TestLabelRoads:
    def roads(self):
        return [
            RoadSegment("r1", ((0.0, 0.0), (10.0, 0.0))),
            RoadSegment("r2", ((0.0, 100.0), (10.0, 100.0))),
            RoadSegment("r3", ((0.0, 200.0), (10.0, 200.0))),
            RoadSegment("r4", ((0.0, 900.0), (10.0, 900.0))),
        ]

    def test_three_class_split(self):
        points = [
            ((5.0, 1.0), 10.0), ((6.0, -1.0), 11.0),
            ((5.0, 99.0), 20.0), ((6.0, 101.0), 21.0),
            ((5.0, 199.0), 30.0), ((6.0, 201.0), 31.0),
        ]
        labels = label_roads(points, self.roads())
        assert labels.classes == {"r1": "low", "r2": "medium", "r3": "high"}
        assert labels.scores["r1"] == pytest.approx(10.5)
        assert "r4" not in labels.classes

    def test_point_feeds_all_overlapping_roads(self):
        roads = [
            RoadSegment("a", ((0.0, 0.0), (10.0, 0.0))),
            RoadSegment("b", ((0.0, 10.0), (10.0, 10.0))),
            RoadSegment("c", ((0.0, 300.0), (10.0, 300.0))),
            RoadSegment("d", ((0.0, 600.0), (10.0, 600.0))),
        ]
        points = [
            ((5.0, 5.0), 12.0),  # within 25 m of both a and b
            ((5.0, 300.0), 30.0),
            ((5.0, 600.0), 50.0),
        ]
        labels = label_roads(points, roads)
        assert labels.scores["a"] == 12.0
        assert labels.scores["b"] == 12.0

    def test_boundary_point_at_25_included(self):
        roads = [RoadSegment("a", ((0.0, 0.0), (10.0, 0.0))),
                 RoadSegment("b", ((0.0, 200.0), (10.0, 200.0))),
                 RoadSegment("c", ((0.0, 400.0), (10.0, 400.0)))]
        points = [((5.0, 25.0), 1.0), ((5.0, 200.0), 2.0), ((5.0, 400.0), 3.0)]
        labels = label_roads(points, roads)
        assert labels.scores["a"] == 1.0

    def test_no_points_anywhere_rejected(self):
        with pytest.raises(ValueError, match="no road receives"):
            label_roads([((0.0, 5000.0), 1.0)], self.roads())

    def test_empty_scores_rejected(self):
        with pytest.raises(ValueError, match="no scored points"):
            label_roads([], self.roads())

    def test_class_monotone_in_score(self):
        rng = np.random.default_rng(4)
        roads = [RoadSegment(f"r{i}", ((i * 100.0, 0.0), (i * 100.0 + 10, 0.0)))
                 for i in range(12)]
        points = [((i * 100.0 + 5, rng.uniform(-20, 20)), float(rng.uniform(0, 50)))
                  for i in range(12)]
        labels = label_roads(points, roads)
        rank = {"low": 0, "medium": 1, "high": 2}
        pairs = sorted(labels.scores.items(), key=lambda kv: kv[1])
        ranks = [rank[labels.classes[rid]] for rid, _ in pairs]
        assert ranks == sorted(ranks)


class TestLabelSetType:
    def test_inconsistent_class_rejected(self):
        with pytest.raises(ValueError, match="inconsistent"):
            LabelSet({"r": "high"}, (10.0, 20.0), {"r": 5.0})

    def test_descending_breaks_rejected(self):
        with pytest.raises(ValueError, match="ascending"):
            LabelSet({}, (20.0, 10.0), {})


class TestLedger:
    def test_replay_reproduces_state_bit_exactly(self):
        state = state_of(5)
        rng = np.random.default_rng(5)
        for k in range(150):
            indicator = INDICATORS[int(rng.integers(4))]
            pair = next_pair(state, indicator, seed=k)
            outcome = ["left", "right", "both", "neither"][int(rng.integers(4))]
            apply_vote(state, pair, indicator, outcome, timestamp=float(k))

        rebuilt = replay_ledger(state.image_ids, state.ledger)
        assert rebuilt.counts == state.counts
        assert rebuilt.indicator_counts == state.indicator_counts
        assert rebuilt.ledger == state.ledger
        for image in state.image_ids:
            for ind in INDICATORS:
                a = state.ratings[image][ind]
                b = rebuilt.ratings[image][ind]
                assert (a.mu, a.sigma) == (b.mu, b.sigma)  # bit-exact

    def test_file_round_trip(self, tmp_path):
        state = state_of(3)
        path = tmp_path / "votes.ledger"
        fh = open_ledger(path)
        for k in range(10):
            pair = next_pair(state, "extent", seed=k)
            apply_vote(state, pair, "extent", "left", timestamp=float(k))
            append_ledger(fh, state.ledger[-1])
        fh.close()
        assert read_ledger(path) == state.ledger

    def test_append_resumes_existing_file(self, tmp_path):
        path = tmp_path / "votes.ledger"
        fh = open_ledger(path)
        append_ledger(fh, VoteRecord(0, 1.0, "extent", "a", "b", "left"))
        fh.close()
        fh = open_ledger(path)
        append_ledger(fh, VoteRecord(1, 2.0, "extent", "a", "b", "right"))
        fh.close()
        records = read_ledger(path)
        assert [r.seq for r in records] == [0, 1]

    def test_unknown_version_rejected(self, tmp_path):
        path = tmp_path / "votes.ledger"
        path.write_text('{"format": "restoregraph-ledger", "version": 9}\n')
        with pytest.raises(ValueError, match="version"):
            read_ledger(path)

    def test_nondefault_params_replay(self):
        params = TrueSkillParams(mu0=50.0, sigma0=10.0, beta=5.0,
                                 tau=0.1, draw_probability=0.25)
        state = RatingState(["a", "b", "c"], params)
        apply_vote(state, ("a", "b"), "extent", "left")
        apply_vote(state, ("b", "c"), "extent", "both")
        rebuilt = replay_ledger(["a", "b", "c"], state.ledger, params)
        for image in ("a", "b", "c"):
            a = state.ratings[image]["extent"]
            b = rebuilt.ratings[image]["extent"]
            assert (a.mu, a.sigma) == (b.mu, b.sigma)


class TestManifest:
    def test_round_trip(self, tmp_path):
        records = [
            ImageRecord("img0", "shots/img0.png", 12.5, -3.25),
            ImageRecord("img1", "shots/img1.png", 0.0, 99.0),
        ]
        path = tmp_path / "manifest.csv"
        write_image_manifest(path, records)
        assert read_image_manifest(path) == records

    def test_duplicate_id_rejected(self, tmp_path):
        path = tmp_path / "manifest.csv"
        path.write_text("img0,a.png,0,0\nimg0,b.png,1,1\n")
        with pytest.raises(ValueError, match="duplicate"):
            read_image_manifest(path)

    def test_unknown_version_rejected(self, tmp_path):
        path = tmp_path / "manifest.csv"
        path.write_text("# restoregraph image-manifest v9\nimg0,a.png,0,0\n")
        with pytest.raises(ValueError, match="version"):
            read_image_manifest(path)


class TestLabelSetFile:
    def test_round_trip(self, tmp_path):
        labels = LabelSet(
            {"r1": "low", "r2": "medium", "r3": "high"},
            (10.5, 20.25),
            {"r1": 5.0, "r2": 15.0, "r3": 30.0},
        )
        path = tmp_path / "labels.csv"
        write_label_set(path, labels)
        back = read_label_set(path)
        assert back.classes == labels.classes
        assert back.breaks == labels.breaks
        assert back.scores == labels.scores

    def test_unknown_version_rejected(self, tmp_path):
        path = tmp_path / "labels.csv"
        path.write_text("# restoregraph road-labels v9\n")
        with pytest.raises(ValueError, match="version"):
            read_label_set(path)
