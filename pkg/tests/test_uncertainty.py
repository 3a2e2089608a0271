import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_stack
from oracles import pixel_uncertainties
from patchuq.uncertainty import mutual_information, predictive_entropy, uncertainty_map


def one_pixel(*samples):
    return np.array(samples, dtype=float).reshape(len(samples), len(samples[0]), 1, 1)


def test_uniform_entropy():
    assert predictive_entropy(one_pixel((0.25,) * 4)).values[0, 0] == pytest.approx(math.log(4))


def test_degenerate_entropy():
    s = one_pixel(*[(0, 0, 1, 0, 0)] * 3)
    assert predictive_entropy(s).values[0, 0] == 0.0
    assert mutual_information(s).values[0, 0] == 0.0


def test_disagreeing_samples():
    s = one_pixel((1, 0), (0, 1))
    assert predictive_entropy(s).values[0, 0] == pytest.approx(math.log(2), abs=1e-12)
    assert mutual_information(s).values[0, 0] == pytest.approx(math.log(2), abs=1e-12)


def test_hand_values():
    samples = [(0.9, 0.1), (0.7, 0.3)]
    h, mi = pixel_uncertainties(samples)
    assert h == pytest.approx(0.500402, abs=1e-6)
    assert mi == pytest.approx(0.032429, abs=1e-6)
    s = one_pixel(*samples)
    assert predictive_entropy(s).values[0, 0] == pytest.approx(h, abs=1e-12)
    assert mutual_information(s).values[0, 0] == pytest.approx(mi, abs=1e-12)


def test_against_scalar_oracle(rng):
    p = random_stack(rng, 5, 4, 3, 3, concentration=0.5)
    h, mi = predictive_entropy(p).values, mutual_information(p).values
    for r in range(3):
        for c in range(3):
            samples = [list(p[t, :, r, c]) for t in range(5)]
            eh, emi = pixel_uncertainties(samples)
            assert h[r, c] == pytest.approx(eh, abs=1e-12)
            assert mi[r, c] == pytest.approx(max(emi, 0.0), abs=1e-12)


def test_single_sample_is_softmax_entropy(rng):
    p = random_stack(rng, 1, 6, 5, 5)
    assert np.all(mutual_information(p).values <= 1e-12)
    expected = -(p[0] * np.log(p[0])).sum(axis=0)
    np.testing.assert_allclose(predictive_entropy(p).values, expected, atol=1e-12)


def test_identical_samples_zero_mi(rng):
    p = np.repeat(random_stack(rng, 1, 3, 4, 4), 6, axis=0)
    assert np.all(mutual_information(p).values <= 1e-12)


def test_dispatch(rng):
    p = np.full((3, 5, 2, 2), 0.2)
    np.testing.assert_allclose(uncertainty_map(p, "predictive_entropy").values, math.log(5))
    np.testing.assert_allclose(uncertainty_map(p, "mutual_information").values, 0.0, atol=1e-12)
    assert uncertainty_map(p, "mi").shape == (2, 2)
    with pytest.raises(ValueError):
        uncertainty_map(p, "variance")


@settings(max_examples=60, deadline=None)
@given(t=st.integers(1, 8), c=st.integers(2, 6), seed=st.integers(0, 2**32 - 1),
       conc=st.sampled_from([0.05, 0.3, 1.0, 5.0]))
def test_bounds_and_symmetries(t, c, seed, conc):
    rng = np.random.default_rng(seed)
    p = random_stack(rng, t, c, 3, 4, concentration=conc)
    h, mi = predictive_entropy(p).values, mutual_information(p).values
    assert np.all(mi >= 0) and np.all(mi <= h + 1e-9) and np.all(h <= math.log(c) + 1e-12)
    perm_t, perm_c = rng.permutation(t), rng.permutation(c)
    for q in (p[perm_t], p[:, perm_c]):
        np.testing.assert_allclose(predictive_entropy(q).values, h, atol=1e-12)
        np.testing.assert_allclose(mutual_information(q).values, mi, atol=1e-12)
    doubled = np.concatenate([p, p])
    np.testing.assert_allclose(predictive_entropy(doubled).values, h, atol=1e-12)
    np.testing.assert_allclose(mutual_information(doubled).values, mi, atol=1e-12)
