import math

import numpy as np
import pytest

from acklab import crf
from acklab import tensor as T


class TestLogPartition:
    def test_all_zero_scores_count_paths(self):
        # n=2, k=2: Z = number of paths = 4.
        val = crf.crf_log_partition(np.zeros((2, 2)), np.zeros((4, 4)))
        assert val == pytest.approx(math.log(4), abs=1e-12)

    def test_single_step_is_logsumexp(self):
        e = np.array([[0.3, -1.2, 2.0]])
        val = crf.crf_log_partition(e, np.zeros((5, 5)))
        expected = T.logsumexp(T.Tensor(e[0])).item()
        assert val == pytest.approx(expected, abs=1e-12)

    def test_matches_brute_force_on_random_instances(self):
        rng = np.random.default_rng(17)
        for _ in range(100):
            n = int(rng.integers(1, 6))
            k = int(rng.integers(1, 5))
            e = rng.uniform(-2, 2, (n, k))
            t = rng.uniform(-2, 2, (k + 2, k + 2))
            assert abs(crf.crf_log_partition(e, t) - crf.brute_force_partition(e, t)) < 1e-8

    def test_shape_validation(self):
        with pytest.raises(crf.CrfError):
            crf.crf_log_partition(np.zeros((2, 3)), np.zeros((4, 4)))


class TestNll:
    def test_single_tag_path_loss_zero(self):
        e = np.array([[1.7], [0.3]])
        t = np.random.default_rng(0).uniform(-1, 1, (3, 3))
        loss = crf.crf_nll(e, t, [0, 0])
        assert loss.item() == pytest.approx(0.0, abs=1e-9)

    def test_uniform_scores_loss_ln4(self):
        loss = crf.crf_nll(np.zeros((2, 2)), np.zeros((4, 4)), [0, 1])
        assert loss.item() == pytest.approx(math.log(4), abs=1e-12)

    def test_nonnegative_on_random_instances(self):
        rng = np.random.default_rng(23)
        for _ in range(50):
            n, k = int(rng.integers(1, 5)), int(rng.integers(1, 4))
            e = rng.uniform(-2, 2, (n, k))
            t = rng.uniform(-2, 2, (k + 2, k + 2))
            tags = [int(x) for x in rng.integers(0, k, n)]
            assert crf.crf_nll(e, t, tags).item() >= -1e-9

    def test_gold_tag_out_of_inventory_errors(self):
        with pytest.raises(crf.CrfError, match="inventory"):
            crf.crf_nll(np.zeros((2, 2)), np.zeros((4, 4)), [0, 5])

    def test_gradient_matches_finite_differences(self):
        rng = T.default_rng(5)
        e = T.parameter((3, 3), rng, name="e")
        t = T.parameter((5, 5), rng, name="t")
        err = T.grad_check(lambda: crf.crf_nll(e, t, [0, 2, 1]), [e, t], eps=1e-4)
        assert err < 1e-4

    def test_equals_logpartition_minus_path_score(self):
        rng = np.random.default_rng(3)
        e = rng.uniform(-2, 2, (4, 3))
        t = rng.uniform(-2, 2, (5, 5))
        tags = [2, 0, 1, 1]
        nll = crf.crf_nll(e, t, tags).item()
        expected = crf.crf_log_partition(e, t) - crf.path_score(e, t, tags)
        assert nll == pytest.approx(expected, abs=1e-10)


class TestViterbi:
    def test_diagonal_emissions(self):
        path, score = crf.viterbi(np.array([[1.0, 0.0], [0.0, 1.0]]), np.zeros((4, 4)))
        assert path == [0, 1]
        assert score == pytest.approx(2.0)

    def test_tie_breaks_toward_lowest_tag(self):
        path, score = crf.viterbi(np.zeros((2, 2)), np.zeros((4, 4)))
        assert path == [0, 0]
        assert score == 0.0

    def test_empty_sentence(self):
        path, score = crf.viterbi(np.zeros((0, 2)), np.zeros((4, 4)))
        assert path == [] and score == 0.0

    def test_matches_brute_force_on_random_instances(self):
        rng = np.random.default_rng(29)
        for _ in range(100):
            n = int(rng.integers(1, 6))
            k = int(rng.integers(1, 5))
            e = rng.uniform(-2, 2, (n, k))
            t = rng.uniform(-2, 2, (k + 2, k + 2))
            v_path, v_score = crf.viterbi(e, t)
            b_path, b_score = crf.brute_force_best(e, t)
            assert abs(v_score - b_score) < 1e-9
            # Paths must agree whenever the maximum is unique.
            runner_up = max((s for p, s in crf._enumerate_scores(e, t) if p != b_path),
                            default=-np.inf)
            if b_score - runner_up > 1e-9:
                assert v_path == b_path


class TestBruteForce:
    def test_rejects_large_instances(self):
        with pytest.raises(crf.CrfError, match="too large"):
            crf.brute_force_partition(np.zeros((30, 4)), np.zeros((6, 6)))

    def test_path_score_convention(self):
        e = np.array([[1.0, 0.0]])
        t = np.zeros((4, 4))
        t[2, 0] = 0.5   # START -> tag0
        t[0, 3] = 0.25  # tag0 -> STOP
        assert crf.path_score(e, t, [0]) == pytest.approx(1.75)


class TestCrfLayer:
    def test_effective_transitions_masked(self):
        layer = crf.CrfLayer(3, T.default_rng(1))
        eff = layer.effective_transitions()
        assert eff.shape == (5, 5)
        assert np.all(np.isneginf(eff[:, 3]))  # into START
        assert np.all(np.isneginf(eff[4, :]))  # out of STOP
        finite_mask = np.ones((5, 5), dtype=bool)
        finite_mask[:, 3] = False
        finite_mask[4, :] = False
        assert np.all(np.isfinite(eff[finite_mask]))
