"""Evaluation procedures E1-E4 of the residual-based error bound.

All procedures return beta^-1 ||G00 + sum_I x_I g_I||_V with
x_I = alpha_k(mu) gamma_i(mu), through numerically different routes:

- E1 assembles the residual representer and takes its V-norm;
- E2 evaluates the developed quadratic form delta^2 + 2 Re(s^T x) + x^H S x;
- E3 interpolates the squared norm through a square system on the monomial
  vector X(mu) = (1, x, conj(x), conj(x_I) x_J);
- E4 does the same with the empirical interpolation of X.

Classes
-----------------------
EstimatorError
    Exception raised for errors in bound evaluation.
E3State
    Nodes, factorized system and node values of E3.
E4State
    Empirical interpolation and node values of E4.

Functions
-----------------------
build_xvector()
    Monomial vector X(mu).
xvector_table()
    Monomial vectors at several parameters.
linear_form_coefficients()
    Coefficients t with t . X(mu) equal to the E2 radicand.
e1()
    Bound through the assembled residual.
e2()
    Bound through the developed quadratic form.
build_e3()
    Offline stage of E3.
e3()
    Bound through the E3 linear system.
build_e4()
    Offline stage of E4 from a completed interpolation.
offline_e4()
    Empirical interpolation of X followed by build_e4().
e4()
    Bound through the empirical interpolation.
e1_go(), e2_go(), e3_go(), e4_go()
    Goal-oriented bounds with corrected output.
corrected_output()
    Output corrected by the dual residual.
sweep()
    Vectorized bound values at several parameters.
evaluate_grid()
    Bound values on a grid, offline stages included.
predicted_floors()
    Round-off and solver validity thresholds.
magnitudes()
    Unclamped bound magnitudes sqrt(|radicand|) / beta.
validity_floor()
    Maximum bound magnitude over the selected parameters.
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


import logging
import warnings
from typing import Optional

import numpy as np
import scipy.linalg

from modules.eim import EimState
from modules.eim import eim_offline
from modules.eim import eim_online
from modules.precision import ExtendedArray
from modules.precision import PrecisionKind
from modules.precision import ext_matmul
from modules.problem import ParameterGrid
from modules.problem import TruthProblem
from modules.problem import assemble
from modules.reduced_basis import ReducedBasisState
from modules.reduced_basis import coefficient_table
from modules.reduced_basis import coefficient_vector
from modules.reduced_basis import lift
from modules.reduced_basis import reduced_solve
from modules.schemas import BoundReport
from modules.schemas import EimVariant
from modules.schemas import EstimatorKind
from modules.schemas import GoalReport


logger = logging.getLogger(__name__)

# Relative LU pivot below which the E3 system is considered singular
E3_SINGULAR_PIVOT = 1e-30

# Relative QR pivot, in units of the table roundoff, below which a row of
# X is dependent on the rows kept
E3_RANK_ULPS = 512.0


class EstimatorError(Exception):
    """Exception raised for errors in bound evaluation."""


# ---------------------------------------------------------------------------
# Monomial vector
# ---------------------------------------------------------------------------


def _xhat(state: ReducedBasisState, problem: TruthProblem, mu: float):
    if state.size == 0:
        return np.zeros(0, dtype=state.dtype)
    return coefficient_vector(state, problem, mu)


def _xhat_table(state: ReducedBasisState, problem: TruthProblem, mus):
    if state.size == 0:
        return np.zeros((0, len(mus)), dtype=state.dtype)
    return coefficient_table(state, problem, mus)


def _monomials(x: np.ndarray) -> np.ndarray:
    # x is (p,) or (p, m)
    p = x.shape[0]
    ones = np.ones((1,) + x.shape[1:], dtype=x.dtype)
    quad = (x.conj()[:, None] * x[None, :]).reshape((p * p,) + x.shape[1:])
    return np.concatenate([ones, x, x.conj(), quad])


def build_xvector(
    state: ReducedBasisState, problem: TruthProblem, mu: float
) -> np.ndarray:
    """Monomial vector X(mu).

    Parameters
    -----------------------
    state : ReducedBasisState
        Reduced basis.
    problem : TruthProblem
        Problem providing the coefficients.
    mu : float
        Parameter.

    Returns
    -----------------------
    np.ndarray
        (sigma,) vector (1, x, conj(x), conj(x_I) x_J) with x flattened as
        I = i + Nhat k, the last block row-major in (I, J), and
        sigma = 1 + 2 d Nhat + (d Nhat)^2.
    """
    return _monomials(_xhat(state, problem, mu))


def xvector_table(
    state: ReducedBasisState, problem: TruthProblem, mus
) -> np.ndarray:
    """(sigma, m) monomial vectors, one column per parameter."""
    return _monomials(_xhat_table(state, problem, mus))


def linear_form_coefficients(state: ReducedBasisState) -> np.ndarray:
    """Coefficients t with t . X(mu) equal to the E2 radicand.

    Returns
    -----------------------
    np.ndarray
        (delta^2, s, conj(s), S row-major).
    """
    s = state.s_vec
    head = np.array([state.gram_block[0, 0]], dtype=state.gram_block.dtype)
    return np.concatenate([head, s, s.conj(), state.S_mat.ravel()])


def _report(mu, radicand, beta, method, precision) -> BoundReport:
    radicand = float(radicand)
    return BoundReport(
        mu=float(mu),
        value=float(np.sqrt(max(radicand, 0.0))) / beta,
        method=method,
        raw_radicand=radicand,
        precision=precision,
    )


def _beta(problem: TruthProblem, mu: float, beta: Optional[float]) -> float:
    return float(problem.beta_lb(mu)) if beta is None else float(beta)


# ---------------------------------------------------------------------------
# E1 and E2
# ---------------------------------------------------------------------------


def _e1_radicand_ext(state, work, x) -> float:
    y = np.concatenate([np.ones(1, dtype=x.dtype), x])
    r = ext_matmul(state.riesz_block, y[:, None])
    gr = ext_matmul(work.gram, r)
    q = (r.conj() * gr).sum()
    return float(q.re_hi + q.re_lo)


def _e1_radicands(state, work, xs, precision) -> np.ndarray:
    # xs is (p, m)
    if precision is PrecisionKind.EXTENDED:
        return np.array(
            [
                _e1_radicand_ext(state, work, xs[:, j])
                for j in range(xs.shape[1])
            ]
        )

    ys = np.concatenate([np.ones((1, xs.shape[1]), dtype=xs.dtype), xs])
    r = state.riesz_block @ ys
    return np.sum(r.conj() * (work.gram @ r), axis=0).real


def e1_radicand(
    state: ReducedBasisState,
    problem: TruthProblem,
    mu: float,
    precision: Optional[PrecisionKind] = None,
) -> float:
    """Squared V-norm of the assembled residual representer at mu."""
    precision = state.precision if precision is None else precision
    work = problem.astype(state.precision)
    x = _xhat(state, work, mu)
    return float(_e1_radicands(state, work, x[:, None], precision)[0])


def e1(
    state: ReducedBasisState,
    problem: TruthProblem,
    mu: float,
    beta: Optional[float] = None,
    precision: Optional[PrecisionKind] = None,
) -> BoundReport:
    """Bound through the assembled residual.

    Assembles r = G00 + sum_I x_I g_I as a truth vector and returns
    beta^-1 ||r||_V. Cost O(N d Nhat + N^2), not online efficient.

    Parameters
    -----------------------
    state : ReducedBasisState
        Reduced basis with Riesz vectors.
    problem : TruthProblem
        Truth problem.
    mu : float
        Parameter.
    beta : Optional[float]
        Inf-sup lower bound at mu, `problem.beta_lb(mu)` if `None`.
    precision : Optional[PrecisionKind]
        Accumulation format, the state's if `None`.

    Returns
    -----------------------
    BoundReport
        The bound.
    """
    precision = state.precision if precision is None else precision
    rad = e1_radicand(state, problem, mu, precision)
    return _report(
        mu, rad, _beta(problem, mu, beta), EstimatorKind.E1, precision
    )


def _e2_radicand_ext(state, x) -> float:
    gram = state.gram_ordered_ext
    if gram is None:
        raise EstimatorError(
            "e2 :: no double-word gram block, state not built in extended "
            "precision"
        )

    y = np.concatenate([np.ones(1, dtype=x.dtype), x])
    y = ExtendedArray.from_array(y)
    outer = y.conj().take((slice(None), None)) * y.take((None, slice(None)))
    q = (gram * outer).sum()
    return float(q.re_hi + q.re_lo)


def _e2_radicands(state, xs, precision) -> np.ndarray:
    if precision is PrecisionKind.EXTENDED:
        return np.array(
            [_e2_radicand_ext(state, xs[:, j]) for j in range(xs.shape[1])]
        )

    delta2 = state.gram_block[0, 0].real
    s, big_s = state.s_vec, state.S_mat
    return (
        delta2
        + 2 * np.real(s @ xs)
        + np.real(np.sum(xs.conj() * (big_s @ xs), axis=0))
    )


def e2_radicand(
    state: ReducedBasisState,
    problem: TruthProblem,
    mu: float,
    precision: Optional[PrecisionKind] = None,
) -> float:
    """Developed quadratic form delta^2 + 2 Re(s^T x) + x^H S x at mu."""
    precision = state.precision if precision is None else precision
    x = _xhat(state, problem.astype(state.precision), mu)
    return float(_e2_radicands(state, x[:, None], precision)[0])


def e2(
    state: ReducedBasisState,
    problem: TruthProblem,
    mu: float,
    beta: Optional[float] = None,
    precision: Optional[PrecisionKind] = None,
) -> BoundReport:
    """Bound through the developed quadratic form.

    Cost O((d Nhat)^2) online. A negative radicand is clamped to zero in
    `value` and kept in `raw_radicand`.

    Parameters
    -----------------------
    state : ReducedBasisState
        Reduced basis with delta, s, S.
    problem : TruthProblem
        Problem providing coefficients and beta.
    mu : float
        Parameter.
    beta : Optional[float]
        Inf-sup lower bound at mu, `problem.beta_lb(mu)` if `None`.
    precision : Optional[PrecisionKind]
        Accumulation format, the state's if `None`.

    Returns
    -----------------------
    BoundReport
        The bound.

    Raises
    -----------------------
    EstimatorError
        If extended precision is requested on a state without double-word
        gram block.
    """
    precision = state.precision if precision is None else precision
    rad = e2_radicand(state, problem, mu, precision)
    return _report(
        mu, rad, _beta(problem, mu, beta), EstimatorKind.E2, precision
    )


# ---------------------------------------------------------------------------
# E3
# ---------------------------------------------------------------------------


def _independent_rows(table: np.ndarray) -> np.ndarray:
    # Column-pivoted QR of the rows with the constant row fixed first
    ones = table[0]
    q0 = ones / np.linalg.norm(ones)
    rest = table[1:] - np.outer(table[1:] @ q0.conj(), q0)
    if rest.shape[0] == 0:
        return np.zeros(1, dtype=np.int64)

    _, r, piv = scipy.linalg.qr(rest.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    scale = max(float(np.linalg.norm(ones)), float(diag[0]))
    tol = E3_RANK_ULPS * float(np.finfo(table.dtype).eps)
    rank = int(np.count_nonzero(diag > tol * scale))
    return np.concatenate([[0], np.sort(piv[:rank]) + 1]).astype(np.int64)


class E3State:
    """Nodes, factorized system and node values of E3.

    Attributes
    -----------------------
    rows : np.ndarray
        Linearly independent rows of the monomial table, sigma' of them,
        the constant row first.
    node_indices : np.ndarray
        Grid positions of the sigma' nodes mu_r.
    mus : np.ndarray
        Node parameters.
    T : np.ndarray
        (sigma', sigma') matrix T_pr = X_p(mu_r).
    V : np.ndarray
        (sigma',) squared residual norms at the nodes.
    cond_estimate : float
        Spectral condition number of T.
    enabled : bool
        Whether T could be factorized.
    reason : str
        Why E3 is disabled, empty otherwise.
    basis_size : int
        Basis size the state was built for.
    seed : int
        Seed of the node draw.
    """

    def __init__(self, rows, node_indices, mus, T, V, basis_size, seed):
        self.rows = rows
        self.node_indices = node_indices
        self.mus = mus
        self.T = T
        self.V = V
        self.basis_size = basis_size
        self.seed = seed
        self.enabled = True
        self.reason = ""

        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            self.factor = scipy.linalg.lu_factor(T, check_finite=False)
            self.cond_estimate = float(np.linalg.cond(T))

        pivots = np.abs(np.diag(self.factor[0]))
        scale = np.linalg.norm(T, np.inf)
        if not np.all(np.isfinite(pivots)) or (
            pivots.min() < E3_SINGULAR_PIVOT * scale
        ):
            self.enabled = False
            self.reason = (
                f"T numerically singular (min pivot {pivots.min():.3e}, "
                f"norm {scale:.3e})"
            )
            logger.warning("e3 :: disabled, %s", self.reason)

    @property
    def sigma(self) -> int:
        return self.rows.size


def build_e3(
    state: ReducedBasisState,
    problem: TruthProblem,
    grid: ParameterGrid,
    seed: int = 0,
) -> E3State:
    """Offline stage of E3.

    Selects sigma' linearly independent rows of the monomial table on the
    grid (pivoted QR, constant row kept), draws sigma' distinct trial
    parameters, builds T from those rows of X at the nodes and stores the
    squared residual norms computed through the E1 route.

    Parameters
    -----------------------
    state : ReducedBasisState
        Reduced basis.
    problem : TruthProblem
        Truth problem.
    grid : ParameterGrid
        Trial parameters.
    seed : int
        Seed of the node draw.

    Returns
    -----------------------
    E3State
        The state, `enabled` False if T is numerically singular.

    Raises
    -----------------------
    EstimatorError
        If the grid has fewer points than sigma'.
    """
    work = problem.astype(state.precision)
    table = xvector_table(state, work, grid.points)
    rows = _independent_rows(table)
    if len(grid) < rows.size:
        raise EstimatorError(
            f"e3 :: {len(grid)} trial parameters, need sigma'={rows.size}"
        )

    rng = np.random.default_rng(seed)
    nodes = rng.choice(len(grid), size=rows.size, replace=False)
    mus = grid.points[nodes]

    T = table[np.ix_(rows, nodes)]
    V = _e1_radicands(
        state, work, _xhat_table(state, work, mus), state.precision
    )

    res = E3State(rows, nodes, mus, T, V, state.size, seed)
    logger.info(
        "e3 :: sigma=%d, independent rows=%d, cond(T)=%.3e",
        table.shape[0],
        rows.size,
        res.cond_estimate,
    )
    return res


def _check_e3(e3state: E3State, state: ReducedBasisState):
    if not e3state.enabled:
        raise EstimatorError(f"e3 :: disabled, {e3state.reason}")
    if e3state.basis_size != state.size:
        raise EstimatorError(
            f"e3 :: built for Nhat={e3state.basis_size}, basis has "
            f"Nhat={state.size}, rebuild needed"
        )


def _e3_radicands(e3state, xtab) -> np.ndarray:
    lam = scipy.linalg.lu_solve(e3state.factor, xtab[e3state.rows])
    return np.real(e3state.V @ lam)


def e3(
    e3state: E3State,
    state: ReducedBasisState,
    problem: TruthProblem,
    mu: float,
    beta: Optional[float] = None,
) -> BoundReport:
    """Bound through the E3 linear system.

    Solves T lambda = X(mu) and returns beta^-1 sqrt(max(lambda . V, 0)).

    Raises
    -----------------------
    EstimatorError
        If E3 is disabled or was built for another basis size.
    """
    _check_e3(e3state, state)
    xv = build_xvector(state, problem.astype(state.precision), mu)
    rad = _e3_radicands(e3state, xv[:, None])[0]
    return _report(
        mu, rad, _beta(problem, mu, beta), EstimatorKind.E3, state.precision
    )


# ---------------------------------------------------------------------------
# E4
# ---------------------------------------------------------------------------


class E4State:
    """Empirical interpolation and node values of E4.

    Attributes
    -----------------------
    eim : EimState
        Interpolation of the monomial table on the trial grid.
    V : np.ndarray
        (sigma_hat,) squared residual norms at the interpolation points.
    basis_size : int
        Basis size the state was built for.
    """

    def __init__(self, eim: EimState, V: np.ndarray, basis_size: int):
        self.eim = eim
        self.V = V
        self.basis_size = basis_size

    @property
    def sigma_hat(self) -> int:
        return self.eim.sigma_hat


def build_e4(
    eim_state: EimState, state: ReducedBasisState, problem: TruthProblem
) -> E4State:
    """Offline stage of E4 from a completed interpolation.

    The squared residual norms at the interpolation parameters are
    recomputed through the E1 route; they must be rebuilt whenever the
    basis grows.
    """
    work = problem.astype(state.precision)
    V = _e1_radicands(
        state, work, _xhat_table(state, work, eim_state.mus), state.precision
    )
    return E4State(eim_state, V, state.size)


def offline_e4(
    state: ReducedBasisState,
    problem: TruthProblem,
    grid: ParameterGrid,
    sigma_hat: int,
    variant: EimVariant = EimVariant.STABILIZED,
    tol: Optional[float] = None,
) -> E4State:
    """Empirical interpolation of X on the grid followed by build_e4().

    sigma_hat is capped by the table dimensions.
    """
    work = problem.astype(state.precision)
    table = xvector_table(state, work, grid.points)
    sigma_hat = min(sigma_hat, *table.shape)
    eim_state = eim_offline(table, grid.points, sigma_hat, variant, tol)
    return build_e4(eim_state, state, work)


def _check_e4(e4state: E4State, state: ReducedBasisState):
    if e4state.basis_size != state.size:
        raise EstimatorError(
            f"e4 :: built for Nhat={e4state.basis_size}, basis has "
            f"Nhat={state.size}, rebuild needed"
        )


def e4(
    e4state: E4State,
    state: ReducedBasisState,
    problem: TruthProblem,
    mu: float,
    beta: Optional[float] = None,
) -> BoundReport:
    """Bound through the empirical interpolation.

    Solves B lambda = q(mu) and returns beta^-1 sqrt(max(lambda . V, 0)).
    Cost O(sigma_hat^2) online.

    Raises
    -----------------------
    EstimatorError
        If the state was built for another basis size.
    modules.eim.EimError
        If mu is not a trial parameter.
    """
    _check_e4(e4state, state)
    lam = eim_online(e4state.eim, mu)
    rad = np.real(lam @ e4state.V)
    return _report(
        mu, rad, _beta(problem, mu, beta), EstimatorKind.E4, state.precision
    )


# ---------------------------------------------------------------------------
# Goal-oriented bounds
# ---------------------------------------------------------------------------


def _dual_problem(problem: TruthProblem) -> TruthProblem:
    if problem.output is None:
        raise EstimatorError(f"{problem.name} :: no output functional")
    return problem.dual()


def corrected_output(
    primal: ReducedBasisState,
    dual: ReducedBasisState,
    problem: TruthProblem,
    mu: float,
) -> complex:
    """Output corrected by the dual residual, Q(u) - (A u - B, v)."""
    dual_problem = _dual_problem(problem)
    u = np.zeros(problem.n, dtype=problem.dtype)
    if primal.size:
        u = lift(primal, reduced_solve(primal, problem, mu))
    v = np.zeros(problem.n, dtype=problem.dtype)
    if dual.size:
        v = lift(dual, reduced_solve(dual, dual_problem, mu))

    residual = assemble(problem.op, mu) @ u - problem.rhs
    return complex(np.vdot(problem.output, u) - np.vdot(v, residual))


def _go_report(method, mu, rad_p, rad_d, beta_d, output, precision):
    rad_p, rad_d = float(rad_p), float(rad_d)
    value = np.sqrt(max(rad_p, 0.0)) * np.sqrt(max(rad_d, 0.0)) / beta_d
    return GoalReport(
        mu=float(mu),
        value=float(value),
        method=method,
        raw_radicand=rad_p,
        dual_radicand=rad_d,
        output_real=output.real,
        output_imag=output.imag,
        precision=precision,
    )


def _beta_dual(problem, mu, beta):
    return float(problem.beta_lb_dual(mu)) if beta is None else float(beta)


def e1_go(
    primal: ReducedBasisState,
    dual: ReducedBasisState,
    problem: TruthProblem,
    mu: float,
    beta: Optional[float] = None,
) -> GoalReport:
    """Goal-oriented bound, both residual norms through the E1 route.

    Returns (beta^d)^-1 ||G u_hat||_V ||G^d v_hat||_V and the corrected
    output.

    Raises
    -----------------------
    EstimatorError
        If the problem has no output.
    """
    dual_problem = _dual_problem(problem)
    return _go_report(
        EstimatorKind.E1,
        mu,
        e1_radicand(primal, problem, mu),
        e1_radicand(dual, dual_problem, mu),
        _beta_dual(problem, mu, beta),
        corrected_output(primal, dual, problem, mu),
        primal.precision,
    )


def e2_go(
    primal: ReducedBasisState,
    dual: ReducedBasisState,
    problem: TruthProblem,
    mu: float,
    beta: Optional[float] = None,
) -> GoalReport:
    """Goal-oriented bound, both residual norms through the E2 route."""
    dual_problem = _dual_problem(problem)
    return _go_report(
        EstimatorKind.E2,
        mu,
        e2_radicand(primal, problem, mu),
        e2_radicand(dual, dual_problem, mu),
        _beta_dual(problem, mu, beta),
        corrected_output(primal, dual, problem, mu),
        primal.precision,
    )


def e3_go(
    e3_primal: E3State,
    e3_dual: E3State,
    primal: ReducedBasisState,
    dual: ReducedBasisState,
    problem: TruthProblem,
    mu: float,
    beta: Optional[float] = None,
) -> GoalReport:
    """Goal-oriented bound, both residual norms through the E3 route."""
    dual_problem = _dual_problem(problem)
    return _go_report(
        EstimatorKind.E3,
        mu,
        e3(e3_primal, primal, problem, mu).raw_radicand,
        e3(e3_dual, dual, dual_problem, mu).raw_radicand,
        _beta_dual(problem, mu, beta),
        corrected_output(primal, dual, problem, mu),
        primal.precision,
    )


def e4_go(
    e4_primal: E4State,
    e4_dual: E4State,
    primal: ReducedBasisState,
    dual: ReducedBasisState,
    problem: TruthProblem,
    mu: float,
    beta: Optional[float] = None,
) -> GoalReport:
    """Goal-oriented bound, both residual norms through the E4 route."""
    dual_problem = _dual_problem(problem)
    return _go_report(
        EstimatorKind.E4,
        mu,
        e4(e4_primal, primal, problem, mu).raw_radicand,
        e4(e4_dual, dual, dual_problem, mu).raw_radicand,
        _beta_dual(problem, mu, beta),
        corrected_output(primal, dual, problem, mu),
        primal.precision,
    )


# ---------------------------------------------------------------------------
# Sweeps and floors
# ---------------------------------------------------------------------------


def sweep_radicands(
    method: EstimatorKind,
    state: ReducedBasisState,
    problem: TruthProblem,
    mus,
    e3state: Optional[E3State] = None,
    e4state: Optional[E4State] = None,
    precision: Optional[PrecisionKind] = None,
) -> np.ndarray:
    """Raw radicands of a procedure at several parameters.

    Raises
    -----------------------
    EstimatorError
        If the offline state of E3/E4 is missing or stale.
    """
    method = EstimatorKind(method)
    precision = state.precision if precision is None else precision
    work = problem.astype(state.precision)
    mus = np.asarray(mus, dtype=np.float64)

    if method is EstimatorKind.E1:
        xs = _xhat_table(state, work, mus)
        return _e1_radicands(state, work, xs, precision)
    if method is EstimatorKind.E2:
        return _e2_radicands(state, _xhat_table(state, work, mus), precision)
    if method is EstimatorKind.E3:
        if e3state is None:
            raise EstimatorError("e3 :: offline state missing")
        _check_e3(e3state, state)
        return _e3_radicands(e3state, xvector_table(state, work, mus))

    if e4state is None:
        raise EstimatorError("e4 :: offline state missing")
    _check_e4(e4state, state)
    lam = e4state.eim.lambdas(e4state.sigma_hat)
    cols = [e4state.eim.column_of(mu) for mu in mus]
    return np.real(e4state.V @ lam[:, cols])


def sweep(
    method: EstimatorKind,
    state: ReducedBasisState,
    problem: TruthProblem,
    mus,
    e3state: Optional[E3State] = None,
    e4state: Optional[E4State] = None,
    precision: Optional[PrecisionKind] = None,
):
    """Vectorized bound values at several parameters.

    Returns
    -----------------------
    tuple[np.ndarray, np.ndarray]
        Bound values and raw radicands.
    """
    rad = sweep_radicands(
        method, state, problem, mus, e3state, e4state, precision
    ).astype(np.float64)
    beta = np.array([problem.beta_lb(mu) for mu in mus], dtype=np.float64)
    return np.sqrt(np.maximum(rad, 0.0)) / beta, rad


def evaluate_grid(
    method: EstimatorKind,
    state: ReducedBasisState,
    problem: TruthProblem,
    grid: ParameterGrid,
    sigma_hat: int = 23,
    e3_seed: int = 0,
    variant: EimVariant = EimVariant.STABILIZED,
) -> np.ndarray:
    """Bound values on a grid, offline stages of E3/E4 included."""
    method = EstimatorKind(method)
    e3state = e4state = None
    if method is EstimatorKind.E3:
        e3state = build_e3(state, problem, grid, e3_seed)
    elif method is EstimatorKind.E4:
        e4state = offline_e4(state, problem, grid, sigma_hat, variant)

    values, _ = sweep(method, state, problem, grid.points, e3state, e4state)
    return values


def predicted_floors(
    delta: float,
    beta_min: float,
    eps: float,
    xi: Optional[float] = None,
    output_norm: Optional[float] = None,
    beta_dual_min: Optional[float] = None,
) -> dict[str, float]:
    """Round-off and solver validity thresholds.

    E1 cannot certify below 2 delta max(xi, eps) / beta, E2 below
    2 delta max(xi, sqrt(eps)) / beta; the goal-oriented analogues square
    the relative part.

    Returns
    -----------------------
    dict[str, float]
        Keys "e1", "e2" and, with `output_norm`, "e1_go", "e2_go".
    """
    xi = 0.0 if xi is None else xi
    res = {
        "e1": 2.0 * delta * max(xi, eps) / beta_min,
        "e2": 2.0 * delta * max(xi, np.sqrt(eps)) / beta_min,
    }
    if output_norm is not None:
        beta_d = beta_min if beta_dual_min is None else beta_dual_min
        scale = 2.0 * delta * output_norm / beta_d
        res["e1_go"] = scale * max(xi**2, eps**2)
        res["e2_go"] = scale * max(xi**2, eps)
    return res


def magnitudes(radicands, beta) -> np.ndarray:
    """Unclamped bound magnitudes sqrt(|radicand|) / beta.

    A negative radicand is round-off of the size of its magnitude, which
    the clamped bound values hide as 0.

    Parameters
    -----------------------
    radicands : array_like
        Raw radicands, primal times dual for goal-oriented bounds.
    beta : array_like
        Stability lower bounds at the same parameters.
    """
    rad = np.asarray(radicands).astype(np.float64)
    return np.sqrt(np.abs(rad)) / np.asarray(beta, dtype=np.float64)


def validity_floor(values, mus, selected) -> float:
    """Maximum bound magnitude over the selected parameters.

    A procedure is valid for tolerance tol when this is <= tol. Pass
    magnitudes() of the raw radicands, not clamped bound values.

    Parameters
    -----------------------
    values : array_like
        Bound magnitudes at `mus`.
    mus : array_like
        Parameters of the values.
    selected : list[float]
        Selected parameters (must all appear in `mus`).

    Raises
    -----------------------
    EstimatorError
        If a selected parameter is missing from `mus`.
    """
    values = np.asarray(values)
    mus = np.asarray(mus)
    res = 0.0
    for mu in selected:
        hits = np.flatnonzero(np.isclose(mus, mu, rtol=1e-14, atol=0.0))
        if hits.size == 0:
            raise EstimatorError(f"mu={mu} :: selected parameter not swept")
        res = max(res, float(values[hits[0]]))
    return res
