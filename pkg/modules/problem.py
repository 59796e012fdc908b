"""Parametrized affine problems and Riesz machinery.

With a(u, v) = v^H A u and (u, v)_V = v^H G u, the truth problem reads
A_mu U = B with A_mu = sum_k alpha_k(mu) A_k.

Classes
-----------------------
ProblemError
    Exception raised for invalid problems or failed solves.
AffineOperator
    Coefficient functions and parameter-independent matrices.
ParameterGrid
    Ordered set of trial parameters inside a parameter box.
TruthProblem
    Full discrete problem with its inner product.

Functions
-----------------------
assemble()
    Assemble the operator at a parameter.
riesz()
    Riesz representer of a functional.
v_norm()
    V-norm of a vector.
dual_norm()
    Dual norm of a functional.
beta_direct()
    Inf-sup constant by dense singular value computation.
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


from typing import Callable
from typing import Optional
from typing import Sequence

import numpy as np
import scipy.linalg

from modules.precision import PrecisionKind
from modules.precision import cast


class ProblemError(Exception):
    """Exception raised for invalid problems or failed solves."""


class AffineOperator:
    """Coefficient functions and parameter-independent matrices.

    Attributes
    -----------------------
    alpha : Callable[[float], Sequence]
        Parameter -> d coefficients alpha_k(mu).
    terms : np.ndarray
        (d, N, N) stack of the matrices A_k.

    Methods
    -----------------------
    __init__()
        Initialize class instance.
    coefficients()
        Evaluate the coefficients at a parameter.
    coefficient_table()
        Evaluate the coefficients at several parameters.
    adjoint()
        Operator of the adjoint form.
    astype()
        Copy with terms cast to another scalar format.
    """

    def __init__(
        self,
        alpha: Callable[[float], Sequence],
        terms: Sequence[np.ndarray],
    ):
        """Initialize class instance.

        Parameters
        -----------------------
        alpha : Callable[[float], Sequence]
            Parameter -> d coefficients alpha_k(mu).
        terms : Sequence[np.ndarray]
            The d square matrices A_k.

        Raises
        -----------------------
        ProblemError
            If terms are missing, not square or of different sizes.
        """
        if len(terms) == 0:
            raise ProblemError("affine operator :: no terms")

        shape = np.shape(terms[0])
        for k, a in enumerate(terms):
            if np.ndim(a) != 2 or np.shape(a) != shape or shape[0] != shape[1]:
                raise ProblemError(
                    f"term {k} :: shape {np.shape(a)} does not match {shape}"
                )

        self.alpha = alpha
        self.terms = np.stack([np.asarray(a) for a in terms])

    @property
    def d(self) -> int:
        return self.terms.shape[0]

    @property
    def n(self) -> int:
        return self.terms.shape[1]

    @property
    def dtype(self) -> np.dtype:
        return self.terms.dtype

    def coefficients(self, mu: float) -> np.ndarray:
        """Evaluate the coefficients at a parameter.

        Returned with the scalar type of the terms, so that real problems
        stay real and single problems stay single.
        """
        values = np.asarray(self.alpha(mu))
        if values.shape != (self.d,):
            raise ProblemError(
                f"mu={mu} :: expected {self.d} coefficients, "
                f"got shape {values.shape}"
            )
        if np.iscomplexobj(values) and not np.iscomplexobj(self.terms):
            raise ProblemError(
                f"mu={mu} :: complex coefficients on real terms"
            )

        return values.astype(self.dtype)

    def coefficient_table(self, mus) -> np.ndarray:
        """Evaluate the coefficients at several parameters, shape (m, d)."""
        rows = [self.coefficients(mu) for mu in mus]
        return np.array(rows, dtype=self.dtype)

    def adjoint(self) -> "AffineOperator":
        """Operator of the adjoint form a(w, v) -> conj(a(v, w))."""
        alpha = self.alpha
        return AffineOperator(
            lambda mu: np.conj(np.asarray(alpha(mu))),
            [a.conj().T for a in self.terms],
        )

    def astype(self, kind: PrecisionKind) -> "AffineOperator":
        """Copy with terms cast to another scalar format."""
        return AffineOperator(self.alpha, cast(self.terms, kind))


class ParameterGrid:
    """Ordered set of trial parameters inside a parameter box.

    Attributes
    -----------------------
    points : np.ndarray
        Trial parameters, in order.
    box : tuple[float, float]
        Parameter interval.

    Methods
    -----------------------
    __init__()
        Initialize class instance.
    uniform()
        Uniformly spaced grid including both box ends.
    index_of()
        Position of a parameter in the grid.
    midpoint()
        Middle grid point.
    """

    def __init__(self, points, box: tuple[float, float]):
        """Initialize class instance.

        Raises
        -----------------------
        ProblemError
            If the grid is empty, has duplicates or leaves the box.
        """
        points = np.asarray(points, dtype=np.float64).ravel()
        lo, hi = box

        if points.size == 0:
            raise ProblemError("parameter grid :: empty")
        if lo > hi or np.any(points < lo) or np.any(points > hi):
            raise ProblemError(f"parameter grid :: points outside box {box}")
        if np.unique(points).size != points.size:
            raise ProblemError("parameter grid :: duplicate points")

        self.points = points
        self.box = (float(lo), float(hi))

    @classmethod
    def uniform(cls, box: tuple[float, float], count: int) -> "ParameterGrid":
        """Uniformly spaced grid including both box ends."""
        if count == 1:
            return cls([0.5 * (box[0] + box[1])], box)
        return cls(np.linspace(box[0], box[1], count), box)

    def __len__(self) -> int:
        return self.points.size

    def __iter__(self):
        return iter(self.points)

    def index_of(self, mu: float) -> int:
        """Position of a parameter in the grid.

        Raises
        -----------------------
        ProblemError
            If mu is not a grid point (relative tolerance 1e-14).
        """
        hits = np.flatnonzero(
            np.isclose(self.points, mu, rtol=1e-14, atol=0.0)
        )
        if hits.size == 0:
            raise ProblemError(f"mu={mu} :: not a trial parameter")
        return int(hits[0])

    def midpoint(self) -> float:
        """Middle grid point (lower middle for even sizes)."""
        return float(self.points[(self.points.size - 1) // 2])


class TruthProblem:
    """Full discrete problem with its inner product.

    Attributes
    -----------------------
    name : str
        Short identifier.
    gram : np.ndarray
        Hermitian positive-definite matrix of (., .)_V.
    op : AffineOperator
        The operator A_mu.
    rhs : np.ndarray
        Coefficients B of the functional b.
    output : Optional[np.ndarray]
        Vector q of the output Q(w) = q^H w, if any.
    beta_lb : Callable[[float], float]
        Inf-sup lower bound of the operator.
    beta_lb_dual : Callable[[float], float]
        Inf-sup lower bound of the adjoint operator.
    grid : ParameterGrid
        Trial parameters.

    Methods
    -----------------------
    __init__()
        Initialize class instance, factorizing the gram matrix.
    solve_gram()
        Solve G w = f with the cached factorization.
    dual()
        Problem of the dual solution.
    astype()
        Copy with arrays cast to another scalar format.
    """

    def __init__(
        self,
        name: str,
        gram: np.ndarray,
        op: AffineOperator,
        rhs: np.ndarray,
        grid: ParameterGrid,
        beta_lb: Callable[[float], float],
        output: Optional[np.ndarray] = None,
        beta_lb_dual: Optional[Callable[[float], float]] = None,
    ):
        """Initialize class instance, factorizing the gram matrix.

        Raises
        -----------------------
        ProblemError
            If sizes do not match or the gram matrix is not Hermitian
            positive definite.
        """
        gram = np.asarray(gram)
        rhs = np.asarray(rhs)

        if gram.shape != (op.n, op.n):
            raise ProblemError(
                f"{name} :: gram shape {gram.shape} does not match N={op.n}"
            )
        if rhs.shape != (op.n,):
            raise ProblemError(
                f"{name} :: rhs shape {rhs.shape} does not match N={op.n}"
            )
        if output is not None and np.shape(output) != (op.n,):
            raise ProblemError(
                f"{name} :: output shape {np.shape(output)} does not match "
                f"N={op.n}"
            )

        scale = max(float(np.max(np.abs(gram))), np.finfo(np.float64).tiny)
        tol = 100.0 * np.finfo(gram.dtype).eps * scale
        if np.max(np.abs(gram - gram.conj().T)) > tol:
            raise ProblemError(f"{name} :: gram matrix is not Hermitian")

        try:
            self._gram_factor = scipy.linalg.cho_factor(gram, lower=True)
        except np.linalg.LinAlgError as err:
            raise ProblemError(
                f"{name} :: gram matrix is not positive definite"
            ) from err

        self.name = name
        self.gram = gram
        self.op = op
        self.rhs = rhs
        self.output = None if output is None else np.asarray(output)
        self.grid = grid
        self.beta_lb = beta_lb
        self.beta_lb_dual = beta_lb if beta_lb_dual is None else beta_lb_dual
        self._dual = None
        self._casts = {}

    @property
    def n(self) -> int:
        return self.op.n

    @property
    def d(self) -> int:
        return self.op.d

    @property
    def is_real(self) -> bool:
        """Whether all arrays (and hence the coefficients) are real."""
        arrays = [self.gram, self.op.terms, self.rhs]
        if self.output is not None:
            arrays.append(self.output)
        return not any(np.iscomplexobj(a) for a in arrays)

    @property
    def dtype(self) -> np.dtype:
        arrays = [self.gram, self.op.terms, self.rhs]
        if self.output is not None:
            arrays.append(self.output)
        return np.result_type(*arrays)

    @property
    def output_norm(self) -> float:
        """Dual norm of the output functional (0 without output)."""
        if self.output is None:
            return 0.0
        return dual_norm(self, self.output)

    def solve_gram(self, f: np.ndarray) -> np.ndarray:
        """Solve G w = f with the cached factorization."""
        return scipy.linalg.cho_solve(self._gram_factor, f)

    def dual(self) -> "TruthProblem":
        """Problem of the dual solution: A_mu^H v = q.

        Raises
        -----------------------
        ProblemError
            If the problem has no output.
        """
        if self.output is None:
            raise ProblemError(f"{self.name} :: no output functional")

        if self._dual is None:
            self._dual = self._build_dual()
        return self._dual

    def _build_dual(self) -> "TruthProblem":
        return TruthProblem(
            name=f"{self.name}-dual",
            gram=self.gram,
            op=self.op.adjoint(),
            rhs=self.output,
            grid=self.grid,
            beta_lb=self.beta_lb_dual,
            output=self.rhs,
            beta_lb_dual=self.beta_lb,
        )

    def astype(self, kind: PrecisionKind) -> "TruthProblem":
        """Copy with arrays cast to another scalar format.

        Returns the instance itself when no array changes type.
        """
        kind = PrecisionKind(kind)
        if all(
            cast(a.ravel()[:1], kind).dtype == a.dtype
            for a in (self.gram, self.op.terms, self.rhs)
        ):
            return self

        if kind not in self._casts:
            self._casts[kind] = self._build_cast(kind)
        return self._casts[kind]

    def _build_cast(self, kind: PrecisionKind) -> "TruthProblem":
        return TruthProblem(
            name=self.name,
            gram=cast(self.gram, kind),
            op=self.op.astype(kind),
            rhs=cast(self.rhs, kind),
            grid=self.grid,
            beta_lb=self.beta_lb,
            output=None if self.output is None else cast(self.output, kind),
            beta_lb_dual=self.beta_lb_dual,
        )


def assemble(op: AffineOperator, mu: float) -> np.ndarray:
    """Assemble the operator at a parameter.

    The sum is carried out term by term in the scalar type of the terms.

    Parameters
    -----------------------
    op : AffineOperator
        Affine operator.
    mu : float
        Parameter.

    Returns
    -----------------------
    np.ndarray
        sum_k alpha_k(mu) A_k.
    """
    coeffs = op.coefficients(mu)
    res = coeffs[0] * op.terms[0]
    for k in range(1, op.d):
        res = res + coeffs[k] * op.terms[k]
    return res


def riesz(problem: TruthProblem, functional: np.ndarray) -> np.ndarray:
    """Riesz representer of a functional.

    Parameters
    -----------------------
    problem : TruthProblem
        Problem providing the inner product.
    functional : np.ndarray
        Coefficients f of l(v) = v^H f, or (N, m) stack of them.

    Returns
    -----------------------
    np.ndarray
        w with G w = f, so that (w, v)_V = l(v) for all v.
    """
    return problem.solve_gram(functional)


def v_norm(problem: TruthProblem, u: np.ndarray) -> float:
    """V-norm of a vector.

    Raises
    -----------------------
    ProblemError
        If u^H G u has an imaginary part or a negative value beyond
        round-off.
    """
    u = np.asarray(u)
    q = complex(np.vdot(u, problem.gram @ u))
    # round-off scale of the quadratic form
    scale = float(np.abs(u) @ (np.abs(problem.gram) @ np.abs(u)))

    tol = max(1e-12, 100.0 * np.finfo(problem.gram.dtype).eps)
    if abs(q.imag) > tol * scale:
        raise ProblemError(
            f"{problem.name} :: imaginary squared norm {q}, broken gram"
        )
    if q.real < -tol * scale:
        raise ProblemError(
            f"{problem.name} :: negative squared norm {q.real}, broken gram"
        )

    return float(np.sqrt(max(q.real, 0.0)))


def dual_norm(problem: TruthProblem, functional: np.ndarray) -> float:
    """Dual norm of a functional, computed as the V-norm of its representer."""
    return v_norm(problem, riesz(problem, functional))


def beta_direct(problem: TruthProblem, mu: float) -> float:
    """Inf-sup constant by dense singular value computation.

    With G = L L^H, returns the smallest singular value of
    L^-1 A_mu L^-H, which equals that of G^-1/2 A_mu G^-1/2.

    Raises
    -----------------------
    ProblemError
        If the factorization or the SVD fails.
    """
    try:
        chol = scipy.linalg.cholesky(problem.gram, lower=True)
        a = assemble(problem.op, mu)
        tmp = scipy.linalg.solve_triangular(chol, a, lower=True)
        tmp = scipy.linalg.solve_triangular(
            chol, tmp.conj().T, lower=True
        ).conj().T
        sv = scipy.linalg.svdvals(tmp)
    except (np.linalg.LinAlgError, ValueError) as err:
        raise ProblemError(f"{problem.name} :: mu={mu} :: {err}") from err

    return float(sv[-1])
