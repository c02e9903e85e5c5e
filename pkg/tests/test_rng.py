import numpy as np

from tis.rng import Rng


def test_same_seed_same_stream():
    a = Rng(42).uniform((100,))
    b = Rng(42).uniform((100,))
    np.testing.assert_array_equal(a, b)


def test_different_seeds_differ():
    assert not np.array_equal(Rng(1).uniform((50,)), Rng(2).uniform((50,)))


def test_counter_continuation():
    r = Rng(9)
    first = r.uniform((10,))
    second = r.uniform((10,))
    both = Rng(9).uniform((20,))
    np.testing.assert_array_equal(np.concatenate([first, second]), both)


def test_uniform_range_and_normal_moments():
    u = Rng(5).uniform((20000,))
    assert u.min() >= 0.0 and u.max() < 1.0
    z = Rng(6).normal((20000,))
    assert abs(z.mean()) < 0.03
    assert abs(z.std() - 1.0) < 0.03


def test_integers_inclusive_exclusive():
    v = Rng(7).integers(-3, 4, (5000,))
    assert v.min() == -3 and v.max() == 3
    assert set(np.unique(v)) == set(range(-3, 4))


def test_derive_is_independent_and_stable():
    r = Rng(11)
    c1 = r.derive(1).uniform((20,))
    c2 = r.derive(2).uniform((20,))
    assert not np.array_equal(c1, c2)
    np.testing.assert_array_equal(c1, Rng(11).derive(1).uniform((20,)))
    assert r.counter == 0  # derive must not consume draws


def test_shuffled_is_permutation():
    p = Rng(3).shuffled(17)
    assert sorted(p.tolist()) == list(range(17))
