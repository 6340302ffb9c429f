import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rcstruct.errors import InvalidConfigError, InvalidInputError, InvalidStateError
from rcstruct.ofdm import constellation, qam_hard_indices
from rcstruct.structnet import (BinaryClassifier, BinarySamples, ClassifierConfig, EffectiveChannel,
                                StructDetector, build_training_set, class_scores, classify_symbol,
                                decompose, detect_subframe, estimate_effective_channel,
                                make_shift_set, pick_class, subcarrier_groups, symbols_to_bits,
                                train_classifier)

from conftest import crandn


def random_symbols(rng, order, shape):
    return constellation(order).points[rng.integers(0, order, shape)]


def oracle_log_ratio(h):
    """Exact log-ratio of +1 vs -1 under Gaussian noise, up to a positive scale."""
    h = np.asarray(h, dtype=float)

    def f(x):
        return 2.0 * (x @ h) / (h @ h)

    return f


def brute_force_class(log_ratios, classes):
    """Evaluate every class as an explicit product of likelihood ratios."""
    k = (len(classes) - 2) // 2
    best, best_val = None, -np.inf
    for c in sorted(classes, key=lambda c: (abs(c), c)):
        # class c = -2j+1 multiplies the ratios at shifts j..K; the lowest class has none
        j = (1 - c) // 2
        val = float(np.prod(np.exp(log_ratios[j + k:])))
        if val > best_val:
            best, best_val = c, val
    return best


class TestShiftSet:
    def test_sixteen_qam(self):
        s = make_shift_set(16)
        assert (s.k, s.classes, s.shifts) == (1, (-3, -1, 1, 3), (-2, 0, 2))

    def test_qpsk(self):
        s = make_shift_set(4)
        assert (s.k, s.classes, s.shifts) == (0, (-1, 1), (0,))

    def test_sixty_four_qam(self):
        s = make_shift_set(64)
        assert s.k == 3 and len(s.classes) == 8 and len(s.shifts) == 7
        assert all(c % 2 for c in s.classes) and all(x % 2 == 0 for x in s.shifts)

    def test_unsupported(self):
        with pytest.raises(InvalidConfigError):
            make_shift_set(32)


class TestDecompose:
    def test_values(self):
        np.testing.assert_array_equal(decompose(3 - 1j), [3.0, -1.0])
        assert decompose(2.5)[1] == 0

    def test_bijection(self, rng):
        x = crandn(rng, 10)
        i = decompose(x)
        np.testing.assert_array_equal(i[..., 0] + 1j * i[..., 1], x)

    def test_effective_channel_vectors_orthogonal(self, rng):
        ch = EffectiveChannel(crandn(rng, 2, 8))
        dots = np.sum(ch.h_r * ch.h_im, axis=-1)
        np.testing.assert_allclose(dots, 0, atol=1e-15)
        np.testing.assert_allclose(ch.h_im[..., 0], -ch.h.imag)


class TestEffectiveChannel:
    def test_perfect(self, rng):
        x = random_symbols(rng, 16, (2, 4, 8))
        np.testing.assert_allclose(estimate_effective_channel(x, x, 0.0).h, 1.0, atol=1e-12)

    def test_scaled(self, rng):
        x = random_symbols(rng, 16, (2, 4, 8))
        c = 0.7 - 0.2j
        np.testing.assert_allclose(estimate_effective_channel(c * x, x, 0.0).h, c, atol=1e-9)

    def test_scalar_lmmse_oracle(self, rng):
        x = random_symbols(rng, 4, (1, 6, 3))
        y = (0.9 + 0.3j) * x + 0.2 * crandn(rng, 1, 6, 3)
        h = estimate_effective_channel(y, x, 0.04).h
        expect = np.sum(y * x.conj(), axis=1) / (np.sum(np.abs(x) ** 2, axis=1) + 0.04)
        np.testing.assert_allclose(h, expect, atol=1e-10)

    def test_zero_pilots(self):
        with pytest.raises(InvalidInputError):
            estimate_effective_channel(np.ones((1, 2, 3)), np.zeros((1, 2, 3)), 0.1)


class TestTrainingSet:
    @pytest.mark.parametrize("nt,nsc,npil", [(2, 8, 4), (1, 16, 2), (4, 4, 3)])
    def test_count(self, rng, nt, nsc, npil):
        x = random_symbols(rng, 16, (nt, npil, nsc))
        ch = estimate_effective_channel(x, x, 0.0)
        for axis in ("real", "imag"):
            assert len(build_training_set(x, x, ch, 16, axis)) == 2 * nt * nsc * npil

    def test_qpsk_shifts(self):
        x = np.full((1, 1, 1), constellation(4).points[0])  # grid point +1 + 1j
        ch = EffectiveChannel(np.ones((1, 1)))
        s = build_training_set(x, x, ch, 4, "real")
        a = constellation(4).scale
        # o = +1: shift 0 gives label +1, shift -2 gives label -1
        np.testing.assert_allclose(s.inputs, [[1, 1], [-1, 1]], atol=1e-12)
        np.testing.assert_array_equal(s.labels, [1, -1])
        assert a > 0

    def test_perfect_positive_samples_sit_on_plus_one(self, rng):
        x = random_symbols(rng, 16, (2, 4, 8))
        ch = EffectiveChannel(np.ones((2, 8)))
        for axis in ("real", "imag"):
            s = build_training_set(x, x, ch, 16, axis)
            np.testing.assert_allclose(s.inputs[s.labels > 0, 0], 1.0, atol=1e-12)
            np.testing.assert_allclose(s.inputs[s.labels < 0, 0], -1.0, atol=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(st.sampled_from([4, 16, 64]), st.integers(0, 2**31 - 1))
    def test_shift_identity(self, order, seed):
        rng = np.random.default_rng(seed)
        h = complex(*rng.standard_normal(2))
        hr = decompose(h)
        for o in make_shift_set(order).classes:
            i_o = decompose(h * o)
            np.testing.assert_allclose(i_o + (-o + 1) * hr, decompose(h * 1), atol=1e-12)


class TestClassifier:
    def test_zero_epochs_is_initialization(self):
        s = BinarySamples(np.ones((4, 2)), np.array([1, -1, 1, -1]))
        clf = train_classifier(s, epochs=0, seed=5, hidden=8)
        init = BinaryClassifier.xavier(8, np.random.default_rng(5))
        for a, b in zip(clf.params(), init.params()):
            np.testing.assert_array_equal(a, b)

    def test_xavier_bounds(self):
        clf = BinaryClassifier.xavier(128, np.random.default_rng(0))
        lim = np.sqrt(6 / 130)
        assert np.max(np.abs(clf.w1)) <= lim and np.max(np.abs(clf.w2)) <= lim
        assert not np.any(clf.b1) and not np.any(clf.b2)

    def test_gradient_check(self, rng):
        clf = BinaryClassifier.xavier(16, rng)
        clf.b1[:] = rng.standard_normal(16) * 0.1
        x = rng.standard_normal((10, 2))
        y = rng.choice([-1, 1], 10)
        _, grads = clf.loss_and_grads(x, y)
        eps = 1e-6
        for p, g in zip(clf.params(), grads):
            flat = p.reshape(-1)
            num = np.empty_like(flat)
            for j in range(flat.size):
                old = flat[j]
                flat[j] = old + eps
                lp, _ = clf.loss_and_grads(x, y)
                flat[j] = old - eps
                lm, _ = clf.loss_and_grads(x, y)
                flat[j] = old
                num[j] = (lp - lm) / (2 * eps)
            np.testing.assert_allclose(g.reshape(-1), num, rtol=1e-4, atol=1e-9)

    def test_separable_blobs(self, rng):
        n = 400
        labels = np.where(np.arange(n) < n // 2, 1, -1)
        centres = np.where(labels[:, None] > 0, [1.5, 0.0], [-1.5, 0.0])
        x = centres + rng.uniform(-0.9, 0.9, (n, 2)) * [0.5, 1.0]
        clf = train_classifier(BinarySamples(x, labels), epochs=800, seed=0)
        acc = np.mean(np.sign(clf.log_ratio(x)) == labels)
        assert acc >= 0.99

    def test_deterministic(self, rng):
        s = BinarySamples(rng.standard_normal((50, 2)), rng.choice([-1, 1], 50))
        a = train_classifier(s, epochs=5, seed=2, hidden=8)
        b = train_classifier(s, epochs=5, seed=2, hidden=8)
        for pa, pb in zip(a.params(), b.params()):
            np.testing.assert_array_equal(pa, pb)

    def test_empty(self):
        with pytest.raises(InvalidInputError):
            train_classifier(BinarySamples(np.zeros((0, 2)), np.zeros(0)))

    def test_json_round_trip(self, rng):
        clf = BinaryClassifier.xavier(4, rng)
        back = BinaryClassifier.from_json(clf.to_json())
        for a, b in zip(clf.params(), back.params()):
            np.testing.assert_array_equal(a, b)


class TestScores:
    def test_matches_brute_force_products(self, rng):
        for order in (4, 16, 64):
            classes = make_shift_set(order).classes
            lr = rng.normal(0, 2, (2000, len(classes) - 1))
            fast = pick_class(class_scores(lr), classes)
            slow = [brute_force_class(row, classes) for row in lr]
            np.testing.assert_array_equal(fast, slow)

    def test_lowest_class_scores_zero(self, rng):
        assert np.all(class_scores(rng.normal(size=(5, 3)))[:, 0] == 0)

    def test_tie_break(self):
        classes = (-3, -1, 1, 3)
        assert pick_class(np.zeros(4), classes) == -1
        assert pick_class(np.array([0.0, -1.0, -1.0, 0.0]), classes) == -3


class TestClassifySymbol:
    def test_qpsk_sign(self, rng):
        s = make_shift_set(4)
        i = rng.standard_normal((100, 2))
        got = classify_symbol(i, np.array([1.0, 0.0]), s, lambda x: x[:, 0])
        np.testing.assert_array_equal(got, np.where(i[:, 0] > 0, 1, -1))

    @pytest.mark.parametrize("order", [4, 16, 64])
    def test_oracle_matches_nearest_neighbour(self, rng, order):
        const = constellation(order)
        s = make_shift_set(order)
        h = complex(*rng.standard_normal(2))
        x = const.grid_points[rng.integers(0, order, 10 ** 4)]
        y = h * x
        hr = decompose(h)
        o_r = classify_symbol(decompose(y), hr, s, oracle_log_ratio(hr))
        o_i = classify_symbol(decompose(-1j * y), hr, s, oracle_log_ratio(hr))
        np.testing.assert_array_equal(o_r + 1j * o_i, np.round(x))

    def test_oracle_noisy_equals_slicer(self, rng):
        const = constellation(16)
        s = make_shift_set(16)
        h = 0.8 + 0.5j
        x = const.grid_points[rng.integers(0, 16, 5000)]
        y = h * x + 0.6 * crandn(rng, 5000)
        hr = decompose(h)
        o = (classify_symbol(decompose(y), hr, s, oracle_log_ratio(hr))
             + 1j * classify_symbol(decompose(-1j * y), hr, s, oracle_log_ratio(hr)))
        nn = np.round(const.grid_points[qam_hard_indices(y / h * const.scale, 16)])
        np.testing.assert_array_equal(o, nn)

    def test_equivariance(self, rng):
        s = make_shift_set(64)
        h = np.array([0.9, 0.3])
        i = rng.standard_normal((20, 2))
        calls = []

        def record(x):
            calls.append(x.copy())
            return x[:, 0]

        classify_symbol(i, h, s, record)
        classify_symbol(i + 2 * h, h, s, record)
        a = calls[0].reshape(20, 7, 2)
        b = calls[1].reshape(20, 7, 2)
        np.testing.assert_allclose(b[:, :-1], a[:, 1:], atol=1e-12)


class TestDetector:
    def test_groups(self):
        g = subcarrier_groups(1024, 84)
        assert len(g) == 13
        assert g[-1] == slice(1008, 1024)
        assert subcarrier_groups(64, 84) == [slice(0, 64)]
        with pytest.raises(InvalidConfigError):
            subcarrier_groups(10, 0)

    def test_perfect_equalization_oracle(self, rng):
        order = 16
        x = random_symbols(rng, order, (2, 6, 8))
        ch = EffectiveChannel(np.ones((2, 8)))
        hr = np.array([1.0, 0.0])
        clfs = {(0, order): oracle_log_ratio(hr)}
        out = detect_subframe(x, ch, (order, order), clfs, 84)
        np.testing.assert_allclose(out, x, atol=1e-12)
        bits = symbols_to_bits(out[0], order)
        assert bits.size == 6 * 8 * 4

    def test_missing_classifier(self, rng):
        x = random_symbols(rng, 4, (1, 2, 4))
        with pytest.raises(InvalidStateError):
            detect_subframe(x, EffectiveChannel(np.ones((1, 4))), (4,), {}, 84)

    def test_unfitted(self, rng):
        det = StructDetector(ClassifierConfig(), (4,))
        with pytest.raises(InvalidStateError):
            det.detect(random_symbols(rng, 4, (1, 2, 4)))

    def test_fit_and_detect_noisy(self, rng):
        order = 16
        h = (0.9 + 0.2j) * np.exp(1j * rng.uniform(-0.1, 0.1, (2, 1, 16)))
        x = random_symbols(rng, order, (2, 10, 16))
        y = h * x + 0.05 * crandn(rng, 2, 10, 16)
        det = StructDetector(ClassifierConfig(epochs=50, hidden=32), (order, order))
        det.fit(y[:, :4], x[:, :4], 0.0025, seed=0)
        assert len(det.classifiers) == 1
        out = det.detect(y[:, 4:])
        assert np.mean(np.abs(out - x[:, 4:]) > 1e-9) < 0.01

    def test_unpooled_streams(self, rng):
        x = random_symbols(rng, 4, (2, 6, 8))
        det = StructDetector(ClassifierConfig(epochs=2, hidden=4, pool_streams=False), (4, 4))
        det.fit(x[:, :4], x[:, :4], 0.0, seed=0)
        assert sorted(det.classifiers) == [(0, 0), (0, 1)]
