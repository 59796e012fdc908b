"""Greedy construction of primal and dual reduced bases.

Functions
-----------------------
greedy_build()
    Greedy selection of snapshots driven by an error bound.
dual_greedy_build()
    Greedy construction of the dual basis.
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
from typing import Optional

import numpy as np

from modules.estimators import evaluate_grid
from modules.precision import PrecisionKind
from modules.problem import ParameterGrid
from modules.problem import ProblemError
from modules.problem import TruthProblem
from modules.reduced_basis import ReducedBasisError
from modules.reduced_basis import ReducedBasisState
from modules.schemas import GreedyConfig
from modules.truth import solve_truth


logger = logging.getLogger(__name__)


def greedy_build(
    problem: TruthProblem,
    grid: ParameterGrid,
    config: GreedyConfig,
    precision: PrecisionKind = PrecisionKind.DOUBLE,
) -> ReducedBasisState:
    """Greedy selection of snapshots driven by an error bound.

    Starting from `config.start_mu` (grid midpoint if unset), solves the
    truth problem, appends the V-orthonormalized snapshot and moves to the
    first maximizer of the configured estimator over the grid parameters
    not selected yet. Stops when the maximum falls below `config.tol_rb`,
    after `config.nmax` snapshots, or when a snapshot turns out dependent
    on the basis (logged warning).

    Parameters
    -----------------------
    problem : TruthProblem
        Truth problem.
    grid : ParameterGrid
        Trial parameters.
    config : GreedyConfig
        Greedy parameters.
    precision : PrecisionKind
        Scalar format of all computations.

    Returns
    -----------------------
    ReducedBasisState
        The basis, parameters in selection order, `max_estimates` filled
        after each step.

    Raises
    -----------------------
    ReducedBasisError
        If the estimator returns non-finite values.
    ProblemError
        If the start parameter is not a trial parameter, or a truth solve
        fails.
    """
    precision = PrecisionKind(precision)
    work = problem.astype(precision)
    state = ReducedBasisState(work, precision)

    mu = grid.midpoint() if config.start_mu is None else config.start_mu
    grid.index_of(mu)

    for step in range(config.nmax):
        u = solve_truth(work, mu)
        try:
            state.append_snapshot(work, u, mu)
        except ReducedBasisError as err:
            logger.warning(
                "greedy :: stopping at Nhat=%d, mu=%.6g :: %s",
                state.size,
                mu,
                err,
            )
            break

        values = evaluate_grid(
            config.estimator,
            state,
            work,
            grid,
            sigma_hat=config.sigma_hat,
            e3_seed=config.e3_seed,
        )
        if not np.all(np.isfinite(values)):
            raise ReducedBasisError(
                f"greedy :: non-finite {config.estimator.value} values at "
                f"Nhat={state.size}"
            )

        # Parameters already in the basis are not candidates
        values = np.array(values, dtype=np.float64)
        values[[grid.index_of(m) for m in state.selected]] = -np.inf
        j = int(np.argmax(values))
        if not np.isfinite(values[j]):
            logger.info("greedy :: trial grid exhausted")
            break
        state.max_estimates.append(float(values[j]))
        logger.info(
            "greedy :: step %d, mu=%.6g, max %s=%.3e at mu=%.6g",
            step + 1,
            mu,
            config.estimator.value,
            values[j],
            grid.points[j],
        )

        if values[j] < config.tol_rb:
            logger.info("greedy :: tol_rb=%.1e reached", config.tol_rb)
            break
        mu = float(grid.points[j])

    return state


def dual_greedy_build(
    problem: TruthProblem,
    grid: ParameterGrid,
    config: GreedyConfig,
    precision: PrecisionKind = PrecisionKind.DOUBLE,
    start_mu: Optional[float] = None,
) -> ReducedBasisState:
    """Greedy construction of the dual basis.

    Same procedure as greedy_build() on the dual problem A_mu^H v = q,
    whose rhs is the output functional.

    Raises
    -----------------------
    ProblemError
        If the problem has no output.
    """
    if problem.output is None:
        raise ProblemError(f"{problem.name} :: no output functional")

    if start_mu is not None:
        config = config.model_copy(update={"start_mu": start_mu})
    return greedy_build(problem.dual(), grid, config, precision)
