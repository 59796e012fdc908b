# pylint: disable=redefined-outer-name
# required to avoid trouble with fixture declaration

"""Test module for affine operators, grids and Riesz machinery."""

import numpy as np

from pytest import raises

from modules.precision import PrecisionKind
from modules.problem import AffineOperator
from modules.problem import ParameterGrid
from modules.problem import ProblemError
from modules.problem import TruthProblem
from modules.problem import assemble
from modules.problem import beta_direct
from modules.problem import dual_norm
from modules.problem import riesz
from modules.problem import v_norm
from modules.schemas import Diffusion1DSpec
from modules.truth import build_diffusion1d

from tests.common import dual_norm_oracle
from tests.common import identity_problem
from tests.common import small_diffusion


def _spd(rng, n):
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return a @ a.conj().T + n * np.eye(n)


def test_assemble():
    """Tests assembly against hand-made and direct matrices."""
    op = AffineOperator(lambda mu: (1.0,), [np.eye(3)])
    assert np.array_equal(assemble(op, 5.0), np.eye(3))

    problem = small_diffusion()
    stiff, mass = problem.op.terms
    assert np.array_equal(assemble(problem.op, 0.0), stiff)
    # Partition of unity, interior rows
    assert np.allclose(mass.sum(axis=1)[1:-1], 0.05, rtol=1e-13)

    # -u'' + 10 u on 6 elements, tridiagonal
    problem = build_diffusion1d(Diffusion1DSpec(mesh_h=1.0 / 6.0))
    h, mu = 1.0 / 6.0, 10.0
    expected = (
        np.diag(np.full(5, 2.0 / h + mu * 2.0 * h / 3.0))
        + np.diag(np.full(4, -1.0 / h + mu * h / 6.0), 1)
        + np.diag(np.full(4, -1.0 / h + mu * h / 6.0), -1)
    )
    assert np.allclose(assemble(problem.op, mu), expected, rtol=1e-13)


def test_operator_errors():
    """Tests rejection of malformed operators."""
    with raises(ProblemError):
        AffineOperator(lambda mu: (), [])
    with raises(ProblemError):
        AffineOperator(lambda mu: (1.0, 1.0), [np.eye(2), np.eye(3)])
    with raises(ProblemError):
        AffineOperator(lambda mu: (1.0,), [np.ones((2, 3))])

    # Wrong number of coefficients
    op = AffineOperator(lambda mu: (1.0, 2.0), [np.eye(2)])
    with raises(ProblemError):
        op.coefficients(1.0)

    # Complex coefficients on real terms
    op = AffineOperator(lambda mu: (1.0j,), [np.eye(2)])
    with raises(ProblemError):
        op.coefficients(1.0)


def test_adjoint():
    """Tests the adjoint operator."""
    rng = np.random.default_rng(0)
    a = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    op = AffineOperator(lambda mu: (1.0 + 1.0j * mu,), [a])

    adj = op.adjoint()
    assert np.allclose(assemble(adj, 2.0), assemble(op, 2.0).conj().T)


def test_parameter_grid():
    """Tests grid construction and lookup."""
    grid = ParameterGrid.uniform((1.0, 100.0), 100)
    assert len(grid) == 100
    assert grid.points[0] == 1.0 and grid.points[-1] == 100.0
    assert grid.index_of(100.0) == 99
    assert grid.midpoint() == grid.points[49]

    assert ParameterGrid.uniform((1.0, 3.0), 1).points[0] == 2.0
    assert list(ParameterGrid([1.0, 2.0], (0.0, 3.0))) == [1.0, 2.0]

    with raises(ProblemError):
        grid.index_of(1.5)
    with raises(ProblemError):
        ParameterGrid([], (0.0, 1.0))
    with raises(ProblemError):
        ParameterGrid([0.5, 0.5], (0.0, 1.0))
    with raises(ProblemError):
        ParameterGrid([0.5, 2.0], (0.0, 1.0))


def test_truth_problem_checks():
    """Tests rejection of inconsistent problems."""
    grid = ParameterGrid([1.0], (0.0, 2.0))
    op = AffineOperator(lambda mu: (1.0,), [np.eye(2)])

    def beta(mu):
        return 1.0

    with raises(ProblemError):
        TruthProblem("p", np.eye(3), op, np.ones(2), grid, beta)
    with raises(ProblemError):
        TruthProblem("p", np.eye(2), op, np.ones(3), grid, beta)
    with raises(ProblemError):
        TruthProblem(
            "p", np.eye(2), op, np.ones(2), grid, beta, output=np.ones(3)
        )
    # Not Hermitian, not positive definite
    with raises(ProblemError):
        TruthProblem(
            "p", np.array([[1.0, 1.0], [0.0, 1.0]]), op, np.ones(2), grid, beta
        )
    with raises(ProblemError):
        TruthProblem("p", -np.eye(2), op, np.ones(2), grid, beta)


def test_riesz():
    """Tests Riesz representers."""
    problem = identity_problem()
    f = np.array([1.0, -2.0, 3.0])
    assert np.allclose(riesz(problem, f), f, rtol=1e-15)
    assert np.all(riesz(problem, np.zeros(3)) == 0.0)

    problem = small_diffusion()
    b = problem.rhs
    assert np.isclose(
        v_norm(problem, riesz(problem, b)),
        dual_norm_oracle(problem.gram, b),
        rtol=1e-10,
    )

    # (w, v)_V = l(v)
    rng = np.random.default_rng(1)
    w = riesz(problem, b)
    v = rng.standard_normal(problem.n)
    scale = np.abs(v) @ np.abs(b)
    assert np.isclose(v @ problem.gram @ w, v @ b, atol=1e-12 * scale)


def test_riesz_linear():
    """Tests linearity of the Riesz map."""
    problem = small_diffusion()
    rng = np.random.default_rng(2)
    f, g = rng.standard_normal((2, problem.n))
    a = 3.5

    lhs = riesz(problem, a * f + g)
    rhs = a * riesz(problem, f) + riesz(problem, g)
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-12 * np.abs(lhs).max())


def test_v_norm():
    """Tests V-norms against Euclidean and Cholesky oracles."""
    problem = identity_problem(n=2)
    assert v_norm(problem, np.zeros(2)) == 0.0
    assert np.isclose(v_norm(problem, np.array([3.0, 4.0])), 5.0, rtol=1e-15)

    rng = np.random.default_rng(3)
    gram = _spd(rng, 6)
    chol = np.linalg.cholesky(gram)
    op = AffineOperator(lambda mu: (1.0,), [gram])
    problem = TruthProblem(
        "spd",
        gram,
        op,
        np.ones(6, dtype=complex),
        ParameterGrid([1.0], (0.0, 2.0)),
        lambda mu: 1.0,
    )
    u = rng.standard_normal(6) + 1j * rng.standard_normal(6)
    assert np.isclose(
        v_norm(problem, u), np.linalg.norm(chol.conj().T @ u), rtol=1e-12
    )
    assert np.isclose(
        dual_norm(problem, u), dual_norm_oracle(gram, u), rtol=1e-10
    )

    # Broken gram after construction
    problem = identity_problem()
    problem.gram = -np.eye(3)
    with raises(ProblemError):
        v_norm(problem, np.ones(3))


def test_beta_direct():
    """Tests the inf-sup constant oracle."""
    rng = np.random.default_rng(4)
    gram = _spd(rng, 5)
    problem = TruthProblem(
        "spd",
        gram,
        AffineOperator(lambda mu: (1.0,), [gram]),
        np.ones(5, dtype=complex),
        ParameterGrid([1.0], (0.0, 2.0)),
        lambda mu: 1.0,
    )
    assert np.isclose(beta_direct(problem, 1.0), 1.0, rtol=1e-10)

    problem = small_diffusion()
    for mu in (1.0, 2.5, 37.0, 100.0):
        assert beta_direct(problem, mu) >= problem.beta_lb(mu) * (1 - 1e-10)


def test_dual_and_cast():
    """Tests the dual problem and scalar casts."""
    problem = small_diffusion()
    with raises(ProblemError):
        problem.dual()

    problem = small_diffusion(output=True)
    dual = problem.dual()
    assert dual is problem.dual()
    assert np.array_equal(dual.rhs, problem.output)
    adjoint_terms = problem.op.terms.conj().transpose(0, 2, 1)
    assert np.array_equal(dual.op.terms, adjoint_terms)
    assert problem.output_norm == dual_norm(problem, problem.output)

    assert problem.astype(PrecisionKind.DOUBLE) is problem
    assert problem.astype(PrecisionKind.EXTENDED) is problem
    single = problem.astype(PrecisionKind.SINGLE)
    assert single.gram.dtype == np.float32
    assert single.op.terms.dtype == np.float32
    assert single is problem.astype("single")
