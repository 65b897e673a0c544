import itertools
import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linear_sum_assignment

from pitlab.assign import (
    CapabilityError, SwitchLog, best_assignment_bruteforce, best_assignment_hungarian,
    negative_si_snr, pairwise_loss_matrix, pit_loss, switch_percentage,
)
from pitlab.signal import DB_CAP, StructuralError


def signals(seed, n=2, length=128):
    return list(np.random.default_rng(seed).standard_normal((n, length)))


class TestPairwiseMatrix:
    def test_self_pairs_on_cap(self):
        x = signals(0, 3)
        m = pairwise_loss_matrix(x, x)
        np.testing.assert_array_equal(np.diag(m), [-DB_CAP] * 3)

    def test_single(self):
        x = signals(0, 1)
        assert pairwise_loss_matrix(x, x).shape == (1, 1)

    def test_matches_nested_loops_and_counts_calls(self):
        outs, tgts = signals(1), signals(2)
        calls = []

        def loss(a, b):
            calls.append(1)
            return negative_si_snr(a, b)

        m = pairwise_loss_matrix(outs, tgts, loss)
        want = [[negative_si_snr(o, t) for t in tgts] for o in outs]
        np.testing.assert_array_equal(m, want)
        assert len(calls) == 4

    def test_size_mismatch(self):
        with pytest.raises(StructuralError):
            pairwise_loss_matrix(signals(0, 2), signals(1, 3))
        with pytest.raises(StructuralError):
            pairwise_loss_matrix([np.ones(4)], [np.ones(5)])


class TestSolvers:
    def test_diagonal_optimum(self):
        a = best_assignment_bruteforce([[0, 5], [5, 0]])
        assert a.perm == (0, 1) and a.total_loss == 0

    def test_swap_optimum(self):
        # identity costs 3 + 10 = 13, swap costs 1 + 2 = 3
        a = best_assignment_bruteforce([[3, 1], [2, 10]])
        assert a.perm == (1, 0) and a.total_loss == 3
        assert best_assignment_hungarian([[3, 1], [2, 10]]).total_loss == 3

    def test_hungarian_single(self):
        a = best_assignment_hungarian([[7]])
        assert a.perm == (0,) and a.total_loss == 7

    def test_four_by_four_cross_check(self):
        m = np.random.default_rng(4).random((4, 4))
        assert best_assignment_bruteforce(m) == best_assignment_hungarian(m)

    def test_200_random_six_by_six(self):
        rng = np.random.default_rng(6)
        for _ in range(200):
            m = rng.normal(size=(6, 6))
            assert best_assignment_hungarian(m).total_loss == best_assignment_bruteforce(m).total_loss

    def test_agrees_with_scipy_large(self):
        rng = np.random.default_rng(8)
        for n in (10, 33, 64):
            m = rng.random((n, n))
            r, c = linear_sum_assignment(m)
            assert best_assignment_hungarian(m).total_loss == pytest.approx(m[r, c].sum(), rel=1e-12)

    def test_bruteforce_guard(self):
        with pytest.raises(CapabilityError, match="hungarian"):
            best_assignment_bruteforce(np.zeros((9, 9)))

    def test_hungarian_rejects_nonfinite(self):
        with pytest.raises(StructuralError):
            best_assignment_hungarian([[0, np.inf], [1, 0]])

    def test_tie_breaking_lexicographic(self):
        m = np.ones((3, 3))
        assert best_assignment_bruteforce(m).perm == (0, 1, 2)
        assert best_assignment_hungarian(m).perm == (0, 1, 2)
        m = np.array([[1, 0, 0], [0, 1, 1], [0, 1, 1]], dtype=float)
        assert best_assignment_bruteforce(m).perm == best_assignment_hungarian(m).perm == (1, 0, 2)

    @settings(max_examples=300, deadline=None)
    @given(st.integers(2, 6), st.integers(0, 2**32 - 1))
    def test_integer_ties_agree(self, n, seed):
        m = np.random.default_rng(seed).integers(0, 3, (n, n)).astype(float)
        assert best_assignment_bruteforce(m) == best_assignment_hungarian(m)

    def test_total_loss_is_sum(self):
        m = np.random.default_rng(0).random((5, 5))
        a = best_assignment_hungarian(m)
        assert sorted(a.perm) == list(range(5))
        assert a.total_loss == pytest.approx(sum(m[i, j] for i, j in enumerate(a.perm)), rel=1e-12)

    def test_hungarian_64_speed(self):
        m = np.random.default_rng(1).random((64, 64))
        best_assignment_hungarian(m)
        t = time.perf_counter()
        for _ in range(5):
            best_assignment_hungarian(m)
        assert (time.perf_counter() - t) / 5 < 0.05


class TestPitLoss:
    def test_perfect(self):
        x = signals(0)
        loss, a = pit_loss(x, x)
        assert loss == -DB_CAP and a.perm == (0, 1)

    def test_swapped_targets(self):
        outs, tgts = signals(1), signals(2)
        l1, a1 = pit_loss(outs, tgts)
        l2, a2 = pit_loss(outs, tgts[::-1])
        assert l1 == l2
        assert a2.perm == tuple(1 - p for p in a1.perm)

    def test_enumerated_orderings(self):
        rng = np.random.default_rng(3)
        s = rng.standard_normal((2, 200))
        outs = [s[1] + 0.3 * rng.standard_normal(200), s[0] + 0.5 * rng.standard_normal(200)]
        ident = (negative_si_snr(outs[0], s[0]) + negative_si_snr(outs[1], s[1])) / 2
        swap = (negative_si_snr(outs[0], s[1]) + negative_si_snr(outs[1], s[0])) / 2
        loss, a = pit_loss(outs, list(s))
        assert loss == pytest.approx(min(ident, swap), rel=1e-15)
        assert a.perm == (1, 0)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(2, 5))
    def test_symmetry_and_guard(self, seed, n):
        rng = np.random.default_rng(seed)
        outs = list(rng.standard_normal((n, 64)))
        tgts = list(rng.standard_normal((n, 64)))
        loss, a = pit_loss(outs, tgts)
        m = pairwise_loss_matrix(outs, tgts)
        assert loss <= np.trace(m) / n + 1e-12
        sigma = rng.permutation(n)
        loss2, a2 = pit_loss(outs, [tgts[k] for k in sigma])
        assert loss2 == loss
        inv = np.argsort(sigma)
        assert a2.perm == tuple(int(inv[p]) for p in a.perm)


class TestSwitches:
    def make_log(self, flips):
        log = SwitchLog()
        for k in range(8):
            log.record(1, f"utt_{k}", (0, 1))
            log.record(2, f"utt_{k}", (1, 0) if k < flips else (0, 1))
        return log

    def test_identical(self):
        log = self.make_log(0)
        assert switch_percentage(log, 1, 2) == 0.0
        assert switch_percentage(log, 2, 2) == 0.0

    def test_all_flipped(self):
        assert switch_percentage(self.make_log(8), 1, 2) == 100.0

    def test_three_of_eight(self):
        assert switch_percentage(self.make_log(3), 1, 2) == 37.5

    def test_errors(self):
        log = self.make_log(0)
        with pytest.raises(StructuralError):
            switch_percentage(log, 1, 3)
        log.record(2, "extra", (0, 1))
        with pytest.raises(StructuralError):
            switch_percentage(log, 1, 2)

    def test_serialization_round_trip(self, tmp_path):
        log = self.make_log(3)
        log.dump(tmp_path / "switches.tsv")
        lines = (tmp_path / "switches.tsv").read_text().splitlines()
        assert lines[0] == "1\tutt_0\t01"
        assert "2\tutt_0\t10" in lines
        again = SwitchLog.load(tmp_path / "switches.tsv")
        assert again.epochs == log.epochs

    def test_malformed_line(self):
        with pytest.raises(StructuralError, match="line 1"):
            SwitchLog.from_lines(["1 utt 01"])
