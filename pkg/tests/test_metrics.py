import math

import numpy as np
import pytest

from kgquiz.metrics import average_ranks, mae, pearson, r2_score, rmse, spearman


def brute_rmse(y, p):
    return math.sqrt(sum((a - b) ** 2 for a, b in zip(p, y)) / len(y))


def brute_mae(y, p):
    return sum(abs(a - b) for a, b in zip(p, y)) / len(y)


def brute_r2(y, p):
    mean = sum(y) / len(y)
    ss_tot = sum((v - mean) ** 2 for v in y)
    ss_res = sum((a - b) ** 2 for a, b in zip(y, p))
    return 1 - ss_res / ss_tot


def brute_ranks(values):
    """Average ranks by definition: mean 1-based position among sorted copies."""
    ranks = []
    for v in values:
        less = sum(1 for w in values if w < v)
        equal = sum(1 for w in values if w == v)
        ranks.append(less + (equal + 1) / 2.0)
    return ranks


def brute_pearson(a, b):
    ma = sum(a) / len(a)
    mb = sum(b) / len(b)
    num = sum((x - ma) * (y - mb) for x, y in zip(a, b))
    den = math.sqrt(sum((x - ma) ** 2 for x in a) * sum((y - mb) ** 2 for y in b))
    return num / den


class TestPointMetrics:
    def test_perfect_predictions(self):
        y = np.array([0.1, 0.5, 0.9])
        assert rmse(y, y) == 0.0
        assert mae(y, y) == 0.0
        assert r2_score(y, y) == pytest.approx(1.0)
        assert spearman(y, y) == pytest.approx(1.0)

    def test_mean_predictor_r2_zero(self):
        y = np.array([0.2, 0.4, 0.9, 0.1])
        pred = np.full(4, y.mean())
        assert r2_score(y, pred) == pytest.approx(0.0, abs=1e-12)

    def test_reversed_ranking_spearman_minus_one(self):
        y = np.array([1.0, 2.0, 3.0, 4.0])
        assert spearman(y, y[::-1]) == pytest.approx(-1.0)

    def test_constant_target_r2_missing(self, caplog):
        with caplog.at_level("WARNING"):
            assert r2_score(np.ones(5), np.linspace(0, 1, 5)) is None

    def test_constant_vector_spearman_missing(self):
        assert spearman(np.ones(4), np.array([1.0, 2.0, 3.0, 4.0])) is None

    def test_matches_brute_force_to_1e12(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            n = int(rng.integers(3, 40))
            y = rng.random(n)
            p = rng.random(n)
            assert rmse(y, p) == pytest.approx(brute_rmse(y, p), abs=1e-12)
            assert mae(y, p) == pytest.approx(brute_mae(y, p), abs=1e-12)
            assert r2_score(y, p) == pytest.approx(brute_r2(y, p), abs=1e-12)

    def test_rmse_at_least_mae_always(self):
        rng = np.random.default_rng(8)
        for _ in range(200):
            n = int(rng.integers(2, 30))
            y = rng.random(n)
            p = rng.random(n)
            assert rmse(y, p) >= mae(y, p) - 1e-15

    def test_rmse_equals_mae_when_errors_equal(self):
        y = np.zeros(5)
        p = np.full(5, 0.3)
        assert rmse(y, p) == pytest.approx(mae(y, p), abs=1e-15)


class TestRanksAndSpearman:
    def test_average_ranks_with_ties(self):
        values = np.array([10.0, 20.0, 20.0, 30.0])
        assert average_ranks(values).tolist() == [1.0, 2.5, 2.5, 4.0]

    def test_ranks_match_brute_force(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            n = int(rng.integers(2, 25))
            values = rng.integers(0, 6, size=n).astype(float)  # many ties
            assert average_ranks(values).tolist() == pytest.approx(brute_ranks(values), abs=1e-12)

    def test_spearman_matches_rank_then_pearson_definition(self):
        rng = np.random.default_rng(7)
        for trial in range(100):
            n = int(rng.integers(3, 30))
            if trial % 2 == 0:
                a = rng.integers(0, 5, size=n).astype(float)  # tied
                b = rng.integers(0, 5, size=n).astype(float)
            else:
                a = rng.random(n)
                b = rng.random(n)
            expected_defined = len(set(a.tolist())) > 1 and len(set(b.tolist())) > 1
            got = spearman(a, b)
            if not expected_defined:
                assert got is None
                continue
            expected = brute_pearson(brute_ranks(a), brute_ranks(b))
            assert got == pytest.approx(expected, abs=1e-12)

    def test_pearson_basic(self):
        a = np.array([1.0, 2.0, 3.0])
        assert pearson(a, 2 * a + 1) == pytest.approx(1.0)
        assert pearson(a, -a) == pytest.approx(-1.0)
