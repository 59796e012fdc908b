# pylint: disable=redefined-outer-name
# required to avoid trouble with fixture declaration

"""Common testing utilities."""


from pathlib import Path

import numpy as np

from modules.greedy import greedy_build
from modules.precision import PrecisionKind
from modules.problem import AffineOperator
from modules.problem import ParameterGrid
from modules.problem import TruthProblem
from modules.schemas import Diffusion1DSpec
from modules.schemas import EstimatorKind
from modules.schemas import ExperimentConfig
from modules.schemas import GreedyConfig
from modules.schemas import SyntheticComplexSpec
from modules.truth import build_diffusion1d
from modules.truth import build_synthetic


# Small problems, N = 19 and N = 24
DIFFUSION_H = 0.05
DIFFUSION_POINTS = 60
SYNTHETIC_N = 24
SYNTHETIC_POINTS = 40

# Double precision unit roundoff (not the customary 5e-16)
EPS = float(np.finfo(np.float64).eps)


def small_diffusion(output: bool = False) -> TruthProblem:
    """Return the 1D diffusion problem on a coarse mesh."""
    return build_diffusion1d(
        Diffusion1DSpec(
            mesh_h=DIFFUSION_H,
            trial_points=DIFFUSION_POINTS,
            output=output,
        )
    )


def small_synthetic(
    planted_beta: float = 1e-2, seed: int = 0, output: bool = True
) -> TruthProblem:
    """Return a small synthetic complex problem."""
    return build_synthetic(
        SyntheticComplexSpec(
            n=SYNTHETIC_N,
            planted_beta=planted_beta,
            seed=seed,
            trial_points=SYNTHETIC_POINTS,
            output=output,
        )
    )


def identity_problem(
    n: int = 3, rhs=None, output=None, alpha_fn=None
) -> TruthProblem:
    """Return a problem with gram = A = I and constant coefficient.

    Parameters
    -----------------------
    n : int
        Dimension.
    rhs : Optional[np.ndarray]
        Right-hand side, first canonical vector if `None`.
    output : Optional[np.ndarray]
        Output vector.
    alpha_fn : Optional[Callable]
        Coefficient function, constant 1 if `None`.
    """
    if rhs is None:
        rhs = np.zeros(n)
        rhs[0] = 1.0
    alpha = alpha_fn or (lambda mu: (1.0,))
    return TruthProblem(
        name="identity",
        gram=np.eye(n),
        op=AffineOperator(alpha, [np.eye(n)]),
        rhs=np.asarray(rhs),
        grid=ParameterGrid.uniform((1.0, 2.0), 5),
        beta_lb=lambda mu: 1.0,
        output=output,
    )


def with_rhs(problem: TruthProblem, rhs, output=None) -> TruthProblem:
    """Copy of a problem with another rhs (and output)."""
    return TruthProblem(
        name=problem.name,
        gram=problem.gram,
        op=problem.op,
        rhs=np.asarray(rhs),
        grid=problem.grid,
        beta_lb=problem.beta_lb,
        output=output,
    )


def build_state(
    problem: TruthProblem,
    nmax: int = 3,
    estimator: EstimatorKind = EstimatorKind.E1,
    precision: PrecisionKind = PrecisionKind.DOUBLE,
    **kwargs,
):
    """Greedy basis of a problem on its own grid."""
    config = GreedyConfig(nmax=nmax, estimator=estimator, **kwargs)
    return greedy_build(problem, problem.grid, config, precision)


def dual_norm_oracle(gram: np.ndarray, f: np.ndarray) -> float:
    """Dual norm sqrt(f^H G^-1 f) through the eigenvectors of G."""
    lam, vecs = np.linalg.eigh(gram)
    coeffs = vecs.conj().T @ f
    return float(np.sqrt(np.sum(np.abs(coeffs) ** 2 / lam)))


def small_config(out: Path, **updates) -> ExperimentConfig:
    """Experiment on the coarse diffusion problem, N_hat = 2.

    Parameters
    -----------------------
    out : Path
        Output directory.
    **updates
        Top-level field overrides; "problem" entries update the problem
        spec instead of replacing it.
    """
    problem = {
        "problem": "diffusion1d",
        "mesh_h": DIFFUSION_H,
        "trial_points": DIFFUSION_POINTS,
    }
    problem.update(updates.pop("problem", {}))

    data = {
        "problem": problem,
        "greedy": {"nmax": 2},
        "sigma_hat": 5,
        "bench_sizes": [10, 20],
        "bench_calls": 5,
        "output_dir": str(out),
    }
    data.update(updates)
    return ExperimentConfig.model_validate(data)

