# pylint: disable=redefined-outer-name
# required to avoid trouble with fixture declaration

"""Test module for the greedy basis construction."""

import numpy as np

from pytest import raises

from modules.estimators import e1
from modules.greedy import dual_greedy_build
from modules.greedy import greedy_build
from modules.precision import PrecisionKind
from modules.problem import ProblemError
from modules.schemas import EstimatorKind
from modules.schemas import GreedyConfig

from tests.common import build_state
from tests.common import identity_problem
from tests.common import small_diffusion


def test_first_step():
    """Tests the default start parameter."""
    problem = small_diffusion()
    state = build_state(problem, nmax=1)

    assert state.selected == [problem.grid.midpoint()]
    assert len(state.max_estimates) == 1

    state = build_state(problem, nmax=1, start_mu=problem.grid.points[0])
    assert state.selected == [problem.grid.points[0]]

    with raises(ProblemError):
        build_state(problem, nmax=1, start_mu=1.2345)


def test_selection():
    """Tests bound decay and exactness at the snapshots."""
    problem = small_diffusion()
    state = build_state(problem, nmax=4)

    assert state.size == 4
    assert len(set(state.selected)) == 4
    assert len(state.max_estimates) == state.size
    assert state.max_estimates[-1] < state.max_estimates[0]

    for mu in state.selected:
        assert e1(state, problem, mu).value <= 1e-13

    # The next parameter is the maximizer of the previous step
    values = [e1(state, problem, mu).value for mu in problem.grid.points]
    assert np.isclose(max(values), state.max_estimates[-1], rtol=1e-8)


def test_stopping():
    """Tests the tolerance and exact-approximation stops."""
    problem = small_diffusion()
    state = build_state(problem, nmax=5, tol_rb=10.0)
    assert state.size == 1

    # A_mu constant: one snapshot reproduces every solution
    problem = identity_problem()
    state = build_state(problem, nmax=3, tol_rb=1e-300)
    assert state.size == 1
    assert state.max_estimates == [0.0]


def test_estimator_choice():
    """Tests that E1, E2 and E4 drive the same first selections."""
    problem = small_diffusion()
    by_e1 = build_state(problem, nmax=3)
    by_e2 = build_state(problem, nmax=3, estimator=EstimatorKind.E2)
    by_e4 = build_state(
        problem, nmax=2, estimator=EstimatorKind.E4, sigma_hat=5
    )

    assert by_e2.selected[:2] == by_e1.selected[:2]
    assert by_e4.size == 2
    assert by_e4.selected[0] == by_e1.selected[0]


def test_dual():
    """Tests the dual greedy on a self-adjoint problem."""
    config = GreedyConfig(nmax=3)
    with raises(ProblemError):
        dual_greedy_build(small_diffusion(), small_diffusion().grid, config)

    # Output equal to the load: dual and primal coincide
    problem = small_diffusion(output=True)
    primal = greedy_build(problem, problem.grid, config)
    dual = dual_greedy_build(problem, problem.grid, config)
    assert dual.selected == primal.selected
    assert np.allclose(dual.basis, primal.basis, atol=1e-12)

    start = problem.grid.points[0]
    dual = dual_greedy_build(problem, problem.grid, config, start_mu=start)
    assert dual.selected[0] == start
    assert config.start_mu is None


def test_single_precision():
    """Tests greedy in single precision."""
    problem = small_diffusion()
    state = build_state(problem, nmax=2, precision=PrecisionKind.SINGLE)

    assert state.precision is PrecisionKind.SINGLE
    assert state.basis.dtype == np.float32
    assert state.gram_block.dtype == np.float32
    assert state.selected[0] == problem.grid.midpoint()


def test_single_precision_selection():
    """Tests distinct parameters and orthonormality in single precision."""
    problem = small_diffusion()
    state = build_state(problem, nmax=6, precision=PrecisionKind.SINGLE)

    assert len(set(state.selected)) == state.size
    w = state.basis.astype(np.float64)
    ident = w.T @ problem.gram @ w
    assert np.allclose(ident, np.eye(state.size), atol=1e-4)
