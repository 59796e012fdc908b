"""Scalar formats and double-word arithmetic.

Classes
-----------------------
PrecisionError
    Exception raised for invalid operations on scalar formats.
PrecisionKind
    Enum of the supported scalar formats.
PrecisionTag
    Format kind paired with its unit roundoff.
ExtendedScalar
    Double-word real scalar (unevaluated sum hi + lo).
ExtendedArray
    Elementwise double-word complex array.

Functions
-----------------------
precision_tag()
    Return the tag of a scalar format.
real_dtype()
    Return the numpy real dtype used by a format.
complex_dtype()
    Return the numpy complex dtype used by a format.
cast()
    Cast an array to the storage dtype of a format.
two_sum()
    Error-free sum of two doubles.
quick_two_sum()
    Error-free sum of two doubles, assuming |a| >= |b|.
split()
    Dekker split of a double into two 26-bit halves.
two_prod()
    Error-free product of two doubles.
dd_add()
    Double-word addition.
dd_mul()
    Double-word multiplication.
promote()
    Convert a double to ExtendedScalar.
demote()
    Round an ExtendedScalar to the nearest double.
ext_add()
    Add two ExtendedScalar.
ext_mul()
    Multiply two ExtendedScalar.
ext_matmul()
    Matrix product accumulated in double-word arithmetic.
"""

# Copyright (c) 2024 Adriano Angelone
#
# The above copyright notice and this permission notice shall be included in
# all copies or substantial portions of the Software.
#
# This file is part of rbcert.
#
# This file may be used under the terms of the GNU General Public License
# version 3.0 as published by the Free Software Foundation and appearing in the
# file LICENSE included in the packaging of this file. Please review the
# following information to ensure the GNU General Public License version 3.0
# requirements will be met:
# http://www.gnu.org/copyleft/gpl.html.
#
# THE SOFTWARE IS PROVIDED "AS IS", WITHOUT WARRANTY OF ANY KIND, EXPRESS OR
# IMPLIED, INCLUDING BUT NOT LIMITED TO THE WARRANTIES OF MERCHANTABILITY,
# FITNESS FOR A PARTICULAR PURPOSE AND NONINFRINGEMENT. IN NO EVENT SHALL THE
# AUTHORS OR COPYRIGHT HOLDERS BE LIABLE FOR ANY CLAIM, DAMAGES OR OTHER
# LIABILITY, WHETHER IN AN ACTION OF CONTRACT, TORT OR OTHERWISE, ARISING FROM,
# OUT OF OR IN CONNECTION WITH THE SOFTWARE OR THE USE OR OTHER DEALINGS IN THE
# SOFTWARE.


import math
from enum import Enum
from typing import NamedTuple
from typing import Optional

import numpy as np


# 2^27 + 1, exact in double
_SPLITTER = 134217729.0


class PrecisionError(Exception):
    """Exception raised for invalid operations on scalar formats."""


class PrecisionKind(str, Enum):
    """Enum of the supported scalar formats."""

    SINGLE = "single"
    DOUBLE = "double"
    EXTENDED = "extended"


class PrecisionTag(NamedTuple):
    """Format kind paired with its unit roundoff.

    Attributes
    -----------------------
    kind : PrecisionKind
        The scalar format.
    eps : float
        Unit roundoff of the format.
    """

    kind: PrecisionKind
    eps: float


# Double uses the customary reference value rather than 2^-53
_EPS = {
    PrecisionKind.SINGLE: 2.0**-24,
    PrecisionKind.DOUBLE: 5e-16,
    PrecisionKind.EXTENDED: 2.0**-104,
}


def precision_tag(kind: PrecisionKind) -> PrecisionTag:
    """Return the tag of a scalar format.

    Parameters
    -----------------------
    kind : PrecisionKind
        The scalar format.

    Returns
    -----------------------
    PrecisionTag
        Kind and unit roundoff.
    """
    kind = PrecisionKind(kind)
    return PrecisionTag(kind=kind, eps=_EPS[kind])


def real_dtype(kind: PrecisionKind) -> np.dtype:
    """Return the numpy real dtype used by a format.

    Extended values are stored as double and only accumulated in
    double-word arithmetic.
    """
    if PrecisionKind(kind) is PrecisionKind.SINGLE:
        return np.dtype(np.float32)
    return np.dtype(np.float64)


def complex_dtype(kind: PrecisionKind) -> np.dtype:
    """Return the numpy complex dtype used by a format."""
    if PrecisionKind(kind) is PrecisionKind.SINGLE:
        return np.dtype(np.complex64)
    return np.dtype(np.complex128)


def cast(array, kind: PrecisionKind) -> np.ndarray:
    """Cast an array to the storage dtype of a format.

    Real arrays stay real, complex arrays stay complex.

    Parameters
    -----------------------
    array : array_like
        Input data.
    kind : PrecisionKind
        Target format.

    Returns
    -----------------------
    np.ndarray
        The cast array (a copy only when the dtype changes).
    """
    array = np.asarray(array)
    if np.iscomplexobj(array):
        return array.astype(complex_dtype(kind), copy=False)
    return array.astype(real_dtype(kind), copy=False)


# ---------------------------------------------------------------------------
# Error-free transformations, valid on floats and float64 arrays
# ---------------------------------------------------------------------------


def two_sum(a, b):
    """Error-free sum of two doubles.

    Returns
    -----------------------
    tuple
        (s, err) with s + err == a + b exactly.
    """
    s = a + b
    bb = s - a
    err = (a - (s - bb)) + (b - bb)
    return s, err


def quick_two_sum(a, b):
    """Error-free sum of two doubles, assuming |a| >= |b|."""
    s = a + b
    return s, b - (s - a)


def split(a):
    """Dekker split of a double into two 26-bit halves.

    Returns
    -----------------------
    tuple
        (hi, lo) with hi + lo == a, each part fitting in 26 bits.
    """
    c = _SPLITTER * a
    hi = c - (c - a)
    return hi, a - hi


def two_prod(a, b):
    """Error-free product of two doubles.

    Returns
    -----------------------
    tuple
        (p, err) with p + err == a * b exactly.
    """
    p = a * b
    ahi, alo = split(a)
    bhi, blo = split(b)
    err = ((ahi * bhi - p) + ahi * blo + alo * bhi) + alo * blo
    return p, err


def dd_add(ahi, alo, bhi, blo):
    """Double-word addition, relative error O(eps^2)."""
    s, e = two_sum(ahi, bhi)
    t, f = two_sum(alo, blo)
    e = e + t
    s, e = quick_two_sum(s, e)
    e = e + f
    return quick_two_sum(s, e)


def dd_mul(ahi, alo, bhi, blo):
    """Double-word multiplication, relative error O(eps^2)."""
    p, e = two_prod(ahi, bhi)
    e = e + (ahi * blo + alo * bhi)
    return quick_two_sum(p, e)


# ---------------------------------------------------------------------------
# Scalars
# ---------------------------------------------------------------------------


class ExtendedScalar(NamedTuple):
    """Double-word real scalar (unevaluated sum hi + lo).

    Invariant: |lo| <= ulp(hi)/2, so that hi == fl(hi + lo).

    Attributes
    -----------------------
    hi : float
        Leading double.
    lo : float
        Trailing double.
    """

    hi: float
    lo: float = 0.0

    @property
    def overflowed(self) -> bool:
        """Whether an operation overflowed to infinity (or NaN)."""
        return not (math.isfinite(self.hi) and math.isfinite(self.lo))

    def __add__(self, other):
        return ext_add(self, _as_extended(other))

    def __sub__(self, other):
        return ext_add(self, -_as_extended(other))

    def __neg__(self):
        return ExtendedScalar(-self.hi, -self.lo)

    def __mul__(self, other):
        return ext_mul(self, _as_extended(other))


def _as_extended(x) -> ExtendedScalar:
    if isinstance(x, ExtendedScalar):
        return x
    return promote(x)


def promote(x: float) -> ExtendedScalar:
    """Convert a double to ExtendedScalar.

    Parameters
    -----------------------
    x : float
        Finite input.

    Returns
    -----------------------
    ExtendedScalar
        (x, 0).

    Raises
    -----------------------
    PrecisionError
        If x is not finite.
    """
    x = float(x)
    if not math.isfinite(x):
        raise PrecisionError(f"{x} :: cannot promote non-finite value")

    return ExtendedScalar(x, 0.0)


def demote(a: ExtendedScalar) -> float:
    """Round an ExtendedScalar to the nearest double."""
    return a.hi + a.lo


def ext_add(a: ExtendedScalar, b: ExtendedScalar) -> ExtendedScalar:
    """Add two ExtendedScalar.

    Overflow propagates as infinity/NaN and is reported by
    `ExtendedScalar.overflowed`.
    """
    hi, lo = dd_add(a.hi, a.lo, b.hi, b.lo)
    return ExtendedScalar(hi, lo)


def ext_mul(a: ExtendedScalar, b: ExtendedScalar) -> ExtendedScalar:
    """Multiply two ExtendedScalar."""
    hi, lo = dd_mul(a.hi, a.lo, b.hi, b.lo)
    return ExtendedScalar(hi, lo)


# ---------------------------------------------------------------------------
# Arrays
# ---------------------------------------------------------------------------


class ExtendedArray(NamedTuple):
    """Elementwise double-word complex array.

    Complex products use the naive 4-multiply formula, each real product
    and sum carried out in double-word arithmetic.

    Attributes
    -----------------------
    re_hi, re_lo : np.ndarray
        Double-word real part.
    im_hi, im_lo : np.ndarray
        Double-word imaginary part.

    Methods
    -----------------------
    from_array()
        Promote a real or complex double array.
    conj()
        Elementwise conjugate.
    take()
        Index all components.
    sum()
        Pairwise double-word sum along an axis.
    demote()
        Round to a complex128 array.
    """

    re_hi: np.ndarray
    re_lo: np.ndarray
    im_hi: np.ndarray
    im_lo: np.ndarray

    @classmethod
    def from_array(cls, z) -> "ExtendedArray":
        """Promote a real or complex double array."""
        z = np.asarray(z)
        re = np.array(z.real, dtype=np.float64)
        if np.iscomplexobj(z):
            im = np.array(z.imag, dtype=np.float64)
        else:
            im = np.zeros_like(re)
        return cls(re, np.zeros_like(re), im, np.zeros_like(re))

    @classmethod
    def zeros(cls, shape) -> "ExtendedArray":
        """Return an all-zero array of given shape."""
        return cls(*(np.zeros(shape) for _ in range(4)))

    @property
    def shape(self) -> tuple:
        return self.re_hi.shape

    def __add__(self, other: "ExtendedArray") -> "ExtendedArray":
        rh, rl = dd_add(self.re_hi, self.re_lo, other.re_hi, other.re_lo)
        ih, il = dd_add(self.im_hi, self.im_lo, other.im_hi, other.im_lo)
        return ExtendedArray(rh, rl, ih, il)

    def __neg__(self) -> "ExtendedArray":
        return ExtendedArray(*(-c for c in self))

    def __mul__(self, other: "ExtendedArray") -> "ExtendedArray":
        a, b = (self.re_hi, self.re_lo), (self.im_hi, self.im_lo)
        c, d = (other.re_hi, other.re_lo), (other.im_hi, other.im_lo)

        ac = dd_mul(*a, *c)
        bd = dd_mul(*b, *d)
        ad = dd_mul(*a, *d)
        bc = dd_mul(*b, *c)

        rh, rl = dd_add(ac[0], ac[1], -bd[0], -bd[1])
        ih, il = dd_add(ad[0], ad[1], bc[0], bc[1])
        return ExtendedArray(rh, rl, ih, il)

    def conj(self) -> "ExtendedArray":
        """Elementwise conjugate."""
        return ExtendedArray(self.re_hi, self.re_lo, -self.im_hi, -self.im_lo)

    def take(self, index) -> "ExtendedArray":
        """Index all components with the same (numpy) index."""
        return ExtendedArray(*(c[index] for c in self))

    def sum(self, axis: Optional[int] = None) -> "ExtendedArray":
        """Pairwise double-word sum along an axis (all axes if `None`)."""
        if axis is None:
            parts = [c.ravel() for c in self]
        else:
            parts = [np.moveaxis(c, axis, 0) for c in self]

        acc = ExtendedArray(*parts)
        while acc.re_hi.shape[0] > 1:
            n = acc.re_hi.shape[0]
            if n % 2:
                pad = np.zeros((1,) + acc.re_hi.shape[1:])
                acc = ExtendedArray(
                    *(np.concatenate([c, pad], axis=0) for c in acc)
                )
                n += 1
            half = n // 2
            acc = acc.take(slice(0, half)) + acc.take(slice(half, n))

        if acc.re_hi.shape[0] == 0:
            return ExtendedArray.zeros(acc.re_hi.shape[1:])
        return acc.take(0)

    def demote(self) -> np.ndarray:
        """Round to a complex128 array."""
        return (self.re_hi + self.re_lo) + 1j * (self.im_hi + self.im_lo)


def ext_matmul(left, right) -> ExtendedArray:
    """Matrix product accumulated in double-word arithmetic.

    Parameters
    -----------------------
    left : np.ndarray or ExtendedArray
        (m, n) operand.
    right : np.ndarray or ExtendedArray
        (n, p) operand.

    Returns
    -----------------------
    ExtendedArray
        (m, p) product, each entry a pairwise double-word dot product.
    """
    if not isinstance(left, ExtendedArray):
        left = ExtendedArray.from_array(left)
    if not isinstance(right, ExtendedArray):
        right = ExtendedArray.from_array(right)

    m, p = left.shape[0], right.shape[1]
    out = ExtendedArray.zeros((m, p))
    for j in range(p):
        col = (left * right.take((slice(None), j))).sum(axis=1)
        for dst, src in zip(out, col):
            dst[:, j] = src

    return out
