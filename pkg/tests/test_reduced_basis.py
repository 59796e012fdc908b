# pylint: disable=redefined-outer-name
# required to avoid trouble with fixture declaration

"""Test module for the reduced basis state."""

import copy
import json

import numpy as np

from pytest import raises

from modules.precision import PrecisionKind
from modules.problem import assemble
from modules.problem import dual_norm
from modules.problem import v_norm
from modules.reduced_basis import ReducedBasisError
from modules.reduced_basis import ReducedBasisState
from modules.reduced_basis import coefficient_table
from modules.reduced_basis import coefficient_vector
from modules.reduced_basis import lift
from modules.reduced_basis import load_state
from modules.reduced_basis import perturb_snapshots
from modules.reduced_basis import precompute_bound_data
from modules.reduced_basis import reduced_solve
from modules.reduced_basis import reduced_solve_many
from modules.reduced_basis import save_state
from modules.truth import solve_truth

from tests.common import build_state
from tests.common import identity_problem
from tests.common import small_diffusion
from tests.common import small_synthetic
from tests.common import with_rhs


def _gram_oracle(problem, state):
    y = state.riesz_block
    return y.conj().T @ problem.gram @ y


def test_orthonormality():
    """Tests V-orthonormality and snapshot reproduction."""
    problem = small_diffusion()
    state = build_state(problem, nmax=3)
    assert state.size == 3

    ident = state.basis.T @ problem.gram @ state.basis
    assert np.allclose(ident, np.eye(3), atol=1e-12)

    for mu in state.selected:
        u = solve_truth(problem, mu)
        u_hat = lift(state, reduced_solve(state, problem, mu))
        assert v_norm(problem, u - u_hat) <= 1e-10 * v_norm(problem, u)


def test_single_snapshot():
    """Tests the scalar reduced problem with one basis vector."""
    problem = small_diffusion()
    state = ReducedBasisState(problem)
    state.append_snapshot(problem, solve_truth(problem, 10.0), 10.0)

    w = state.basis[:, 0]
    for mu in (1.0, 55.0):
        expected = (w @ problem.rhs) / (w @ assemble(problem.op, mu) @ w)
        got = reduced_solve(state, problem, mu)
        assert got.shape == (1,)
        assert np.isclose(got[0], expected, rtol=1e-12)


def test_gram_block():
    """Tests the gram block against its definition."""
    for problem in (small_diffusion(), small_synthetic()):
        state = build_state(problem, nmax=2)
        oracle = _gram_oracle(problem, state)
        scale = np.abs(oracle).max()

        assert np.allclose(state.gram_ordered, oracle, atol=1e-12 * scale)
        assert np.isclose(
            state.delta, dual_norm(problem, problem.rhs), rtol=1e-12
        )
        assert np.array_equal(state.s_vec, state.gram_ordered[0, 1:])

        # Hermitian to the last bit, real diagonal
        s_mat = state.S_mat
        assert np.array_equal(s_mat, s_mat.conj().T)
        assert np.all(np.imag(np.diag(s_mat)) == 0.0)


def test_quadratic_form():
    """Tests X^H M X against the V-norm of the combined Riesz vector."""
    problem = small_diffusion()
    state = build_state(problem, nmax=3)
    rng = np.random.default_rng(0)

    for _ in range(10):
        x = np.concatenate([[1.0], rng.standard_normal(state.d * state.size)])
        form = x @ state.gram_ordered @ x
        norm = v_norm(problem, state.riesz_block @ x)
        assert np.isclose(form, norm**2, rtol=1e-10)


def test_zero_rhs():
    """Tests delta and s for a vanishing rhs."""
    problem = with_rhs(identity_problem(), np.zeros(3))
    state = ReducedBasisState(problem)
    state.append_snapshot(problem, np.array([0.0, 1.0, 0.0]), 1.0)

    assert state.delta == 0.0
    assert np.all(state.s_vec == 0.0)
    assert np.all(reduced_solve(state, problem, 1.5) == 0.0)


def test_identity_gram():
    """Tests Riesz vectors with gram = I."""
    problem = identity_problem(n=4, rhs=np.array([1.0, 2.0, 0.0, 0.0]))
    state = ReducedBasisState(problem)
    state.append_snapshot(problem, np.array([1.0, 2.0, 0.0, 0.0]), 1.0)
    state.append_snapshot(problem, np.array([0.0, 1.0, 1.0, 0.0]), 2.0)

    assert np.allclose(state.g00, -problem.rhs, rtol=1e-15)
    assert np.allclose(state.riesz_vectors, state.basis, rtol=1e-15)
    assert np.allclose(state.basis.T @ state.basis, np.eye(2), atol=1e-15)
    assert np.isclose(state.delta, np.sqrt(5.0), rtol=1e-15)


def test_precompute_bound_data():
    """Tests that batch recomputation matches the incremental build."""
    problem = small_synthetic()
    state = build_state(problem, nmax=3)
    batch = precompute_bound_data(copy.deepcopy(state), problem)

    scale = np.abs(state.gram_block).max()
    assert np.allclose(batch.gram_block, state.gram_block, atol=1e-12 * scale)
    assert np.allclose(batch.riesz_vectors, state.riesz_vectors, atol=1e-12)
    assert np.array_equal(batch.gram_block, batch.gram_block.conj().T)


def test_append_errors():
    """Tests rejection of zero and dependent snapshots."""
    problem = small_diffusion()
    state = ReducedBasisState(problem)
    with raises(ReducedBasisError):
        reduced_solve(state, problem, 1.0)
    with raises(ReducedBasisError):
        reduced_solve_many(state, problem, [1.0, 2.0])

    u = solve_truth(problem, 5.0)
    state.append_snapshot(problem, u, 5.0)
    with raises(ReducedBasisError):
        state.append_snapshot(problem, 2.0 * u, 5.0)
    with raises(ReducedBasisError):
        state.append_snapshot(problem, np.zeros(problem.n), 6.0)

    # Failed appends leave the state untouched
    assert state.size == 1
    assert state.selected == [5.0]
    assert state.gram_block.shape == (3, 3)


def test_dependence_tolerance():
    """Tests the dependence test in single precision."""
    problem = small_diffusion()
    work = problem.astype(PrecisionKind.SINGLE)
    state = ReducedBasisState(work, PrecisionKind.SINGLE)

    u = solve_truth(problem, 5.0)
    state.append_snapshot(work, u, 5.0)
    # float32 round-off left by orthogonalization is not a new direction
    with raises(ReducedBasisError):
        state.append_snapshot(work, 2.0 * u, 5.0)

    state.append_snapshot(work, solve_truth(problem, 50.0), 50.0)
    w = state.basis.astype(np.float64)
    ident = w.T @ problem.gram @ w
    assert state.size == 2
    assert np.allclose(ident, np.eye(2), atol=1e-4)


def test_reduced_solve_many():
    """Tests batched reduced solves and coefficient vectors."""
    problem = small_synthetic()
    state = build_state(problem, nmax=3)
    mus = problem.grid.points[::9]

    gammas = reduced_solve_many(state, problem, mus)
    table = coefficient_table(state, problem, mus)
    assert gammas.shape == (len(mus), 3)
    assert table.shape == (problem.d * 3, len(mus))

    for m, mu in enumerate(mus):
        gamma = reduced_solve(state, problem, mu)
        assert np.allclose(gammas[m], gamma, rtol=1e-10)

        x = coefficient_vector(state, problem, mu)
        alpha = problem.op.coefficients(mu)
        # x[i + Nhat k] = alpha_k gamma_i
        assert np.allclose(x[2 + 3 * 1], alpha[1] * gamma[2], rtol=1e-12)
        assert np.allclose(table[:, m], x, rtol=1e-10)


def test_perturb_snapshots():
    """Tests the residual of perturbed snapshots."""
    problem = small_diffusion()
    state = build_state(problem, nmax=3)
    xi = 1e-3

    perturbed = perturb_snapshots(state, problem, xi, seed=1)
    assert perturbed.selected == state.selected
    assert perturbed.size == state.size

    rhs_norm = dual_norm(problem, problem.rhs)
    for u, mu in zip(perturbed.raw_snapshots.T, perturbed.selected):
        res = assemble(problem.op, mu) @ u - problem.rhs
        assert np.isclose(dual_norm(problem, res) / rhs_norm, xi, rtol=1e-3)

    for bad in (0.0, 1.0, -0.5):
        with raises(ReducedBasisError):
            perturb_snapshots(state, problem, bad)


def test_extended_gram_block():
    """Tests the double-word copy of the gram block."""
    problem = small_diffusion()
    state = ReducedBasisState(problem, PrecisionKind.EXTENDED)
    state.append_snapshot(problem, solve_truth(problem, 3.0), 3.0)
    state.append_snapshot(problem, solve_truth(problem, 80.0), 80.0)

    double = state.gram_ordered
    ext = state.gram_ordered_ext.demote()
    scale = np.abs(double).max()
    assert np.allclose(ext.real, double, atol=1e-12 * scale)
    assert np.all(ext.imag == 0.0)

    state = ReducedBasisState(problem)
    assert state.gram_ordered_ext is None


def test_save_load(tmpdir):
    """Tests the versioned state bundle."""
    problem = small_synthetic()
    state = build_state(problem, nmax=2)
    path = str(tmpdir.join("state.npz"))

    save_state(path, state)
    loaded = load_state(path)
    assert loaded.selected == state.selected
    assert loaded.max_estimates == state.max_estimates
    assert loaded.precision is PrecisionKind.DOUBLE
    assert np.array_equal(loaded.gram_block, state.gram_block)
    assert np.array_equal(
        reduced_solve(loaded, problem, 1.0), reduced_solve(state, problem, 1.0)
    )

    header = {"format_version": 99}
    np.savez(path, header=np.array(json.dumps(header)))
    with raises(ReducedBasisError):
        load_state(path)
    with raises(FileNotFoundError):
        load_state(str(tmpdir.join("missing.npz")))
