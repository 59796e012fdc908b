"""Shipped truth problems and the truth solver.

Functions
-----------------------
build_diffusion1d()
    P1 finite elements for -u'' + mu u = 1 on ]0,1[.
diffusion_nodes()
    Interior node coordinates of the 1D mesh.
analytic_solution()
    Exact solution of the 1D diffusion problem.
build_synthetic()
    Dense complex problem with planted inf-sup constant.
build_problem()
    Build the problem described by a spec.
solve_truth()
    Solve A_mu U = B by dense LU.
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

import numpy as np

from modules.problem import AffineOperator
from modules.problem import ParameterGrid
from modules.problem import ProblemError
from modules.problem import TruthProblem
from modules.problem import assemble
from modules.schemas import Diffusion1DSpec
from modules.schemas import SyntheticComplexSpec


logger = logging.getLogger(__name__)

# Keeps the supplied lower bound under round-off of the direct SVD
_BETA_MARGIN = 1.0 - 1e-6


def _element_count(h: float) -> int:
    n_el = int(round(1.0 / h))
    if n_el < 2 or abs(n_el * h - 1.0) > 1e-9:
        raise ProblemError(f"mesh_h={h} :: 1/h is not an integer >= 2")
    return n_el


def diffusion_nodes(h: float) -> np.ndarray:
    """Interior node coordinates of the 1D mesh of size h."""
    n_el = _element_count(h)
    return np.arange(1, n_el) / n_el


def _assemble_p1(n_el: int):
    h = 1.0 / n_el
    k_loc = np.array([[1.0, -1.0], [-1.0, 1.0]]) / h
    m_loc = np.array([[2.0, 1.0], [1.0, 2.0]]) * (h / 6.0)
    f_loc = np.array([1.0, 1.0]) * (h / 2.0)

    n_nodes = n_el + 1
    stiff = np.zeros((n_nodes, n_nodes))
    mass = np.zeros((n_nodes, n_nodes))
    load = np.zeros(n_nodes)

    for e in range(n_el):
        dofs = (e, e + 1)
        for i in range(2):
            load[dofs[i]] += f_loc[i]
            for j in range(2):
                stiff[dofs[i], dofs[j]] += k_loc[i, j]
                mass[dofs[i], dofs[j]] += m_loc[i, j]

    # Homogeneous Dirichlet: drop boundary nodes
    inner = slice(1, n_el)
    return stiff[inner, inner], mass[inner, inner], load[inner]


def build_diffusion1d(spec: Diffusion1DSpec) -> TruthProblem:
    """P1 finite elements for -u'' + mu u = 1 on ]0,1[, u(0) = u(1) = 0.

    A_1 is the stiffness matrix, A_2 the mass matrix, alpha = (1, mu), the
    inner product is the H^1 one (stiffness + mass), beta_lb = 1. With
    `spec.output` the output is the mean Q(u) = integral of u, whose
    vector equals the load vector.

    Parameters
    -----------------------
    spec : Diffusion1DSpec
        Problem definition.

    Returns
    -----------------------
    TruthProblem
        The assembled problem, N = 1/h - 1.

    Raises
    -----------------------
    ProblemError
        If 1/h is not integral.
    """
    n_el = _element_count(spec.mesh_h)
    stiff, mass, load = _assemble_p1(n_el)

    logger.debug("diffusion1d :: %d elements, N=%d", n_el, n_el - 1)

    return TruthProblem(
        name="diffusion1d",
        gram=stiff + mass,
        op=AffineOperator(lambda mu: (1.0, mu), [stiff, mass]),
        rhs=load,
        grid=ParameterGrid.uniform(spec.param_box, spec.trial_points),
        beta_lb=lambda mu: 1.0,
        output=load.copy() if spec.output else None,
    )


def analytic_solution(mu: float, x):
    """Exact solution of -u'' + mu u = 1, u(0) = u(1) = 0.

    Parameters
    -----------------------
    mu : float
        Positive parameter.
    x : float or np.ndarray
        Points in [0, 1].

    Returns
    -----------------------
    float or np.ndarray
        u(x).
    """
    r = np.sqrt(mu)
    x = np.asarray(x, dtype=np.float64)
    res = -(np.cosh(r * x) - 1.0) / mu + (
        (np.cosh(r) - 1.0) / (mu * np.sinh(r))
    ) * np.sinh(r * x)
    return res if res.ndim else float(res)


def _synthetic_alpha(d: int):
    def alpha(mu):
        # (1, 1/mu, mu, 1/mu^2, mu^2, ...)
        values = [1.0]
        for j in range(1, d):
            power = (j + 1) // 2
            values.append(mu**-power if j % 2 else mu**power)
        return np.array(values)

    return alpha


def _random_unitary(rng: np.random.Generator, n: int) -> np.ndarray:
    z = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    q, r = np.linalg.qr(z)
    diag = np.diag(r)
    return q * (diag / np.abs(diag))


def _random_phase(rng: np.random.Generator, size) -> np.ndarray:
    return np.exp(2j * np.pi * rng.uniform(0.0, 1.0, size))


def build_synthetic(spec: SyntheticComplexSpec) -> TruthProblem:
    """Dense complex problem with planted inf-sup constant.

    A_k = U diag(D_k) V^H with U, V random unitary and gram = I, so the
    singular values of A_mu are |sum_k alpha_k(mu) D_k|. All entries but
    the last have modulus in [1.4, 3] over the box; for d >= 3 the last
    is beta + c (mu - mu_c)^2 / mu, with mu_c the box center. The rhs is a
    random vector of unit norm, so solutions near mu_c are dominated by
    the corresponding right singular vector.

    Parameters
    -----------------------
    spec : SyntheticComplexSpec
        Problem definition.

    Returns
    -----------------------
    TruthProblem
        The problem, deterministic in `spec.seed`.

    Raises
    -----------------------
    ProblemError
        - If n < 2d or the box is not positive.
        - If the operator is singular somewhere on the trial grid.
    """
    n, d = spec.n, spec.d
    lo, hi = spec.param_box
    if n < 2 * d:
        raise ProblemError(f"synthetic :: n={n} < 2d={2 * d}")
    if lo <= 0.0 or hi < lo:
        raise ProblemError(f"synthetic :: invalid param_box {spec.param_box}")

    rng = np.random.default_rng(spec.seed)
    alpha = _synthetic_alpha(d)
    mu_c = 0.5 * (lo + hi)
    beta = spec.planted_beta
    scale = max(1.0, beta)

    u_mat = _random_unitary(rng, n)
    v_mat = _random_unitary(rng, n)

    diag = np.zeros((d, n), dtype=np.complex128)
    center = scale * rng.uniform(1.5, 3.0, n - 1) * _random_phase(rng, n - 1)
    if d > 1:
        diag[1:, :-1] = (
            0.1
            * scale
            * rng.uniform(0.0, 1.0, (d - 1, n - 1))
            * _random_phase(rng, (d - 1, n - 1))
        )
    diag[0, :-1] = center - alpha(mu_c)[1:] @ diag[1:, :-1]

    a = spec.curvature
    if d >= 3:
        diag[0, -1] = beta - 2.0 * a * mu_c
        diag[1, -1] = a * mu_c**2
        diag[2, -1] = a
    else:
        diag[0, -1] = beta

    grid = ParameterGrid.uniform(spec.param_box, spec.trial_points)
    op = AffineOperator(alpha, [(u_mat * dk) @ v_mat.conj().T for dk in diag])

    # Singular values on the grid, known in closed form
    sv = np.abs(op.coefficient_table(grid.points).astype(np.complex128) @ diag)
    smallest = sv.min(axis=1)
    bad = np.flatnonzero(~np.isfinite(smallest) | (smallest < 0.5 * beta))
    if bad.size:
        raise ProblemError(
            f"synthetic :: operator singular at mu={grid.points[bad[0]]}"
        )

    rhs = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    rhs /= np.linalg.norm(rhs)

    output = None
    if spec.output:
        output = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        output /= np.linalg.norm(output)

    logger.debug(
        "synthetic :: n=%d, d=%d, min sv on grid=%.3e", n, d, smallest.min()
    )

    return TruthProblem(
        name="synthetic",
        gram=np.eye(n),
        op=op,
        rhs=rhs,
        grid=grid,
        beta_lb=lambda mu: _BETA_MARGIN * beta,
        output=output,
    )


def build_problem(spec) -> TruthProblem:
    """Build the problem described by a spec.

    Raises
    -----------------------
    ProblemError
        If the spec type is unknown, or the build fails.
    """
    if isinstance(spec, Diffusion1DSpec):
        return build_diffusion1d(spec)
    if isinstance(spec, SyntheticComplexSpec):
        return build_synthetic(spec)
    raise ProblemError(f"{type(spec).__name__} :: unknown problem spec")


def solve_truth(problem: TruthProblem, mu: float) -> np.ndarray:
    """Solve A_mu U = B by dense LU with partial pivoting.

    Raises
    -----------------------
    ProblemError
        If A_mu is singular.
    """
    a = assemble(problem.op, mu)
    try:
        return np.linalg.solve(a, problem.rhs)
    except np.linalg.LinAlgError as err:
        raise ProblemError(
            f"{problem.name} :: mu={mu} :: singular operator"
        ) from err
