# pylint: disable=redefined-outer-name
# required to avoid trouble with fixture declaration

"""Test module for scalar formats and double-word arithmetic."""

import math

import numpy as np
from mpmath import mp
from mpmath import mpf

from pytest import raises

from modules.precision import ExtendedArray
from modules.precision import ExtendedScalar
from modules.precision import PrecisionError
from modules.precision import PrecisionKind
from modules.precision import cast
from modules.precision import demote
from modules.precision import ext_add
from modules.precision import ext_matmul
from modules.precision import ext_mul
from modules.precision import precision_tag
from modules.precision import promote
from modules.precision import two_prod
from modules.precision import two_sum

from tests.common import EPS


def _exact(a: ExtendedScalar):
    return mpf(a.hi) + mpf(a.lo)


def _random_extended(rng, size):
    # Values in [-1, 1] with a nonzero trailing word
    res = []
    for hi, lo in zip(rng.uniform(-1, 1, size), rng.uniform(-1, 1, size)):
        res.append(ext_add(promote(hi), promote(lo * abs(hi) * EPS / 4)))
    return res


def test_tags():
    """Tests unit roundoff ordering and reference value."""
    single = precision_tag(PrecisionKind.SINGLE).eps
    double = precision_tag(PrecisionKind.DOUBLE).eps
    extended = precision_tag("extended").eps

    assert single > double > extended
    assert double == 5e-16
    assert precision_tag("double").kind is PrecisionKind.DOUBLE


def test_cast():
    """Tests storage dtypes of the formats."""
    assert cast(np.ones(2), PrecisionKind.SINGLE).dtype == np.float32
    assert cast(np.ones(2, dtype=complex), "single").dtype == np.complex64
    # Extended values are stored as double
    assert cast(np.ones(2), PrecisionKind.EXTENDED).dtype == np.float64


def test_promote():
    """Tests promotion and demotion of doubles."""
    assert promote(0.0) == (0.0, 0.0)
    assert promote(1.0) == (1.0, 0.0)
    assert promote(0.1) == (0.1, 0.0)
    assert demote(promote(0.1)) == 0.1

    with raises(PrecisionError):
        promote(math.inf)
    with raises(PrecisionError):
        promote(math.nan)


def test_error_free_transforms():
    """Tests exactness of two_sum and two_prod."""
    rng = np.random.default_rng(0)
    with mp.workprec(200):
        for a, b in rng.uniform(-1, 1, (200, 2)):
            s, e = two_sum(a, b)
            assert mpf(s) + mpf(e) == mpf(a) + mpf(b)

            p, e = two_prod(a, b)
            assert mpf(p) + mpf(e) == mpf(a) * mpf(b)


def test_add_examples():
    """Tests cancellation and retention of tiny addends."""
    res = promote(1.0) + promote(-1.0)
    assert res.hi == 0.0 and res.lo == 0.0

    res = ext_add(promote(1.0), promote(2.0**-60))
    assert demote(res) == 1.0
    assert res.lo == 2.0**-60

    res = promote(3.0) - 1.0
    assert res == (2.0, 0.0)


def test_add_rounding():
    """Tests that demoted sums of doubles are correctly rounded."""
    rng = np.random.default_rng(1)
    x = rng.standard_normal(500) * 10.0 ** rng.integers(-8, 8, 500)
    y = rng.standard_normal(500) * 10.0 ** rng.integers(-8, 8, 500)

    for a, b in zip(x, y):
        assert demote(ext_add(promote(a), promote(b))) == a + b


def test_against_oracle():
    """Tests addition and multiplication against 200-bit arithmetic."""
    rng = np.random.default_rng(2)
    xs = _random_extended(rng, 200)
    ys = _random_extended(rng, 200)

    with mp.workprec(200):
        for a, b in zip(xs, ys):
            exact = _exact(a) + _exact(b)
            assert abs(_exact(a + b) - exact) <= 1e-30 * abs(exact)

            exact = _exact(a) * _exact(b)
            assert abs(_exact(ext_mul(a, b)) - exact) <= 1e-30 * abs(exact)


def test_associativity():
    """Tests the associativity defect of the sum."""
    rng = np.random.default_rng(3)
    bound = 4.0 * precision_tag(PrecisionKind.EXTENDED).eps

    with mp.workprec(200):
        for a, b, c in rng.uniform(0.5, 1.0, (500, 3)):
            a, b, c = promote(a), promote(b), promote(c)
            left = _exact((a + b) + c)
            right = _exact(a + (b + c))
            assert abs(left - right) <= bound * abs(left)


def test_overflow():
    """Tests overflow flagging."""
    assert not promote(1.0).overflowed
    assert (promote(1e308) + promote(1e308)).overflowed
    assert ext_mul(promote(1e200), promote(1e200)).overflowed


def test_array_sum():
    """Tests the pairwise double-word sum."""
    arr = ExtendedArray.from_array(np.array([1e16, 1.0, -1e16]))
    assert arr.sum().demote() == 1.0

    # Empty and column sums
    assert ExtendedArray.zeros((0,)).sum().demote() == 0.0
    cols = ExtendedArray.from_array(np.arange(6.0).reshape(2, 3)).sum(axis=0)
    assert np.array_equal(cols.demote(), np.array([3.0, 5.0, 7.0]))


def test_array_ops():
    """Tests complex products and conjugation of arrays."""
    a = np.array([1.0 + 2.0j, -0.5j])
    b = np.array([3.0 - 1.0j, 2.0 + 2.0j])
    ea, eb = ExtendedArray.from_array(a), ExtendedArray.from_array(b)

    assert np.array_equal((ea * eb).demote(), a * b)
    assert np.array_equal((ea + eb).demote(), a + b)
    assert np.array_equal(ea.conj().demote(), a.conj())
    assert np.array_equal((-ea).demote(), -a)
    assert ea.take(1).demote() == a[1]


def test_matmul():
    """Tests double-word matrix products."""
    # Cancellation lost in double
    x = np.array([[1e16, 1.0, -1e16]])
    y = np.ones((3, 1))
    assert ext_matmul(x, y).demote()[0, 0] == 1.0

    rng = np.random.default_rng(4)
    a = rng.standard_normal((4, 5)) + 1j * rng.standard_normal((4, 5))
    b = rng.standard_normal((5, 3)) + 1j * rng.standard_normal((5, 3))
    assert np.allclose(ext_matmul(a, b).demote(), a @ b, rtol=1e-12)

    a = rng.uniform(0.5, 1.0, (4, 5))
    b = rng.uniform(0.5, 1.0, (5, 3))
    res = ext_matmul(a, b)
    with mp.workprec(200):
        for i in range(4):
            for j in range(3):
                exact = sum(mpf(a[i, k]) * mpf(b[k, j]) for k in range(5))
                got = mpf(res.re_hi[i, j]) + mpf(res.re_lo[i, j])
                assert abs(got - exact) <= 1e-30 * exact
    assert np.all(res.im_hi == 0.0)
