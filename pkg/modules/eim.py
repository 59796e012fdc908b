"""Discrete empirical interpolation of functions sampled on a trial grid.

The interpolated function is a table X[p, j] = X_p(mu_j), rows p = 0..sigma-1,
columns the trial parameters. Basis functions q_k are functions of the
parameter; the rank-k interpolant of any table v is

    (I^k v)(mu) = sum_r lambda^k_r(mu) v(mu_r),    B^k lambda^k(mu) = q^k(mu),

with B_ij = q_i(mu_j), upper triangular with unit diagonal in exact
arithmetic. Coefficients are applied through the inverse of B^k, computed
once per rank, so the online step is a matrix-vector product and round-off
at the selected parameters is carried into later residuals.

Classes
-----------------------
EimError
    Exception raised for errors in interpolation operations.
EimState
    Selected rows, parameters, basis functions and diagnostics.

Functions
-----------------------
eim_offline()
    Greedy selection of interpolation rows and parameters.
eim_online()
    Interpolation coefficients at a trial parameter.
interpolate()
    Rank-k interpolant of the table at a trial parameter.
apply_interpolation()
    Apply the rank-k interpolation operator to a table.
classical_residual()
    Column of (Id - I^k) X at a trial parameter.
stabilized_residual()
    Column of the cascaded residual at a trial parameter.
diagnostics()
    Per-step determinant, condition number and residual.
save_eim()
    Write the state to a versioned .npz bundle.
load_eim()
    Read a state written by save_eim().
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


import json
import logging
import warnings
from pathlib import Path
from typing import Optional
from typing import Union

import numpy as np
import scipy.linalg

from modules.schemas import EimStep
from modules.schemas import EimVariant


logger = logging.getLogger(__name__)

FORMAT_VERSION = 1

# Smallest admissible LU pivot of B^k
BREAKDOWN_PIVOT = 1e-14

# Hybrid variant: accept a point once |det(B^k) - 1| is below this
HYBRID_DET_TOL = 1e-6


class EimError(Exception):
    """Exception raised for errors in interpolation operations."""


def _lu(b: np.ndarray):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return scipy.linalg.lu_factor(b, check_finite=False)


def _det(lu_piv) -> complex:
    lu, piv = lu_piv
    swaps = np.count_nonzero(piv != np.arange(piv.size))
    return complex(np.prod(np.diag(lu))) * (-1) ** swaps


class EimState:
    """Selected rows, parameters, basis functions and diagnostics.

    Attributes
    -----------------------
    variant : EimVariant
        Residual used by the greedy selection.
    table : np.ndarray
        (sigma, M) interpolated table.
    grid_points : np.ndarray
        (M,) trial parameters of the columns.
    p_indices : list[int]
        Selected rows.
    mu_indices : list[int]
        Columns of the selected parameters.
    q_table : np.ndarray
        (sigma_hat, M) basis functions sampled on the grid.
    B : np.ndarray
        (sigma_hat, sigma_hat) matrix B_ij = q_i(mu_j).
    history : list[EimStep]
        Per-step diagnostics.
    breakdown_step : Optional[int]
        Size at which B became numerically singular, if it did.

    Methods
    -----------------------
    __init__()
        Initialize an empty state.
    inverse()
        Inverse of the leading block B^k.
    lambdas()
        Interpolation coefficients of rank k on the whole grid.
    column_of()
        Grid column of a trial parameter.
    """

    def __init__(
        self,
        table: np.ndarray,
        grid_points: np.ndarray,
        variant: EimVariant = EimVariant.STABILIZED,
    ):
        """Initialize an empty state.

        Raises
        -----------------------
        EimError
            If table and grid sizes do not match.
        """
        table = np.asarray(table)
        grid_points = np.asarray(grid_points, dtype=np.float64)
        if table.ndim != 2 or table.shape[1] != grid_points.size:
            raise EimError(
                f"table shape {table.shape} does not match "
                f"{grid_points.size} trial parameters"
            )

        self.variant = EimVariant(variant)
        self.table = table
        self.grid_points = grid_points
        self.p_indices = []
        self.mu_indices = []
        self.q_table = np.zeros((0, grid_points.size), dtype=table.dtype)
        self.B = np.zeros((0, 0), dtype=table.dtype)
        self.history = []
        self.breakdown_step = None
        self._inverses = {}
        self._lambdas = {}

    @property
    def sigma(self) -> int:
        return self.table.shape[0]

    @property
    def sigma_hat(self) -> int:
        return len(self.p_indices)

    @property
    def mus(self) -> np.ndarray:
        """Interpolation parameters."""
        return self.grid_points[self.mu_indices]

    def column_of(self, mu: float) -> int:
        """Grid column of a trial parameter.

        Raises
        -----------------------
        EimError
            If mu is not a trial parameter.
        """
        hits = np.flatnonzero(
            np.isclose(self.grid_points, mu, rtol=1e-14, atol=0.0)
        )
        if hits.size == 0:
            raise EimError(
                f"mu={mu} :: not a trial parameter, interpolation "
                "coefficients are only available on the trial grid"
            )
        return int(hits[0])

    def inverse(self, k: int) -> np.ndarray:
        """Inverse of the leading block B^k, cached.

        Raises
        -----------------------
        EimError
            If k is out of range or B^k is singular.
        """
        if not 1 <= k <= self.sigma_hat:
            raise EimError(f"k={k} :: expected 1 <= k <= {self.sigma_hat}")
        if k not in self._inverses:
            try:
                self._inverses[k] = scipy.linalg.inv(
                    self.B[:k, :k], check_finite=False
                )
            except np.linalg.LinAlgError as err:
                raise EimError(f"k={k} :: B^k is singular") from err
        return self._inverses[k]

    def lambdas(self, k: int) -> np.ndarray:
        """Interpolation coefficients of rank k on the whole grid.

        Returns
        -----------------------
        np.ndarray
            (k, M) coefficients (B^k)^-1 q^k, cached.
        """
        if not 0 <= k <= self.sigma_hat:
            raise EimError(f"k={k} :: expected 0 <= k <= {self.sigma_hat}")
        if k not in self._lambdas:
            if k == 0:
                self._lambdas[k] = np.zeros((0, self.grid_points.size))
            else:
                self._lambdas[k] = self.inverse(k) @ self.q_table[:k]
        return self._lambdas[k]

    def _candidate(self, p: int, j: int, q: np.ndarray):
        k = self.sigma_hat
        b = np.zeros((k + 1, k + 1), dtype=np.result_type(self.B, q))
        b[:k, :k] = self.B
        b[:k, k] = self.q_table[:, j]
        b[k, :] = q[self.mu_indices + [j]]
        return b, _lu(b)

    def _append(self, p: int, j: int, q: np.ndarray, b: np.ndarray):
        self.p_indices.append(int(p))
        self.mu_indices.append(int(j))
        self.q_table = np.vstack([self.q_table, q[None, :]])
        self.B = b


def apply_interpolation(state: EimState, k: int, values: np.ndarray):
    """Apply the rank-k interpolation operator to a table.

    Parameters
    -----------------------
    state : EimState
        Interpolation state.
    k : int
        Rank, 0 <= k <= sigma_hat.
    values : np.ndarray
        (rows, M) table sampled on the trial grid.

    Returns
    -----------------------
    np.ndarray
        (rows, M) table I^k values.
    """
    values = np.asarray(values)
    lam = state.lambdas(k)
    if k == 0:
        return np.zeros(values.shape, dtype=np.result_type(values, lam))
    return values[:, state.mu_indices[:k]] @ lam


def _cascade(state: EimState, values: np.ndarray, k: int) -> np.ndarray:
    res = values
    for i in range(1, k + 1):
        res = res - apply_interpolation(state, i, res)
    return res


def _select(residual: np.ndarray, masked: list):
    mag = np.abs(residual)
    if masked:
        mag[:, masked] = -1.0

    row_max = mag.max(axis=1)
    p = int(np.argmax(row_max))
    if row_max[p] <= 0.0:
        return None

    j = int(np.argmax(mag[p]))
    return p, j, residual[p, j]


def eim_offline(
    table: np.ndarray,
    grid_points: np.ndarray,
    sigma_hat: int,
    variant: EimVariant = EimVariant.STABILIZED,
    tol: Optional[float] = None,
) -> EimState:
    """Greedy selection of interpolation rows and parameters.

    At each step the residual is maximized over rows, then over parameters
    (first maximizer on ties), normalized into a new basis function and
    appended to B. Residuals per variant:

    - classical: (Id - I^k) X;
    - unique_choice: as classical, parameters already selected skipped;
    - stabilized: cascade (Id - I^k)...(Id - I^1) X;
    - hybrid: classical, followed by cascade passes (Id - I^j), j = 1..k,
      until |det(B^{k+1}) - 1| <= HYBRID_DET_TOL.

    Parameters
    -----------------------
    table : np.ndarray
        (sigma, M) function values X_p(mu_j).
    grid_points : np.ndarray
        (M,) trial parameters.
    sigma_hat : int
        Maximum number of points.
    variant : EimVariant
        Residual variant.
    tol : Optional[float]
        Stop when the selected residual magnitude falls below this.

    Returns
    -----------------------
    EimState
        The state; fewer than sigma_hat points if the residual vanished,
        fell below tol, or B broke down (see `breakdown_step`).

    Raises
    -----------------------
    EimError
        If sigma_hat exceeds the table dimensions.
    """
    state = EimState(table, grid_points, variant)
    variant = state.variant
    if not 1 <= sigma_hat <= min(state.table.shape):
        raise EimError(
            f"sigma_hat={sigma_hat} :: expected 1 <= sigma_hat <= "
            f"{min(state.table.shape)}"
        )

    stab = state.table
    for _ in range(sigma_hat):
        k = state.sigma_hat
        if variant is EimVariant.STABILIZED:
            if k:
                stab = stab - apply_interpolation(state, k, stab)
            residual = stab
        else:
            residual = state.table - apply_interpolation(state, k, state.table)

        masked = []
        if variant is EimVariant.UNIQUE_CHOICE:
            masked = state.mu_indices
        cand = _select(residual, masked)
        if cand is None:
            logger.info("eim :: zero residual after %d points", k)
            break

        p, j, value = cand
        if tol is not None and abs(value) < tol:
            logger.info(
                "eim :: residual %.3e below tol at k=%d", abs(value), k
            )
            break

        q = residual[p] / value
        b, lu_piv = state._candidate(p, j, q)

        if variant is EimVariant.HYBRID:
            for i in range(1, k + 1):
                if abs(_det(lu_piv) - 1.0) <= HYBRID_DET_TOL:
                    break
                residual = residual - apply_interpolation(state, i, residual)
                cand = _select(residual, [])
                if cand is None:
                    break
                p, j, value = cand
                q = residual[p] / value
                b, lu_piv = state._candidate(p, j, q)

        # A repeated parameter duplicates a column of B
        if j in state.mu_indices:
            state.breakdown_step = k + 1
            logger.warning(
                "eim :: mu=%.6g selected twice at %d points",
                state.grid_points[j],
                k + 1,
            )
            break

        pivots = np.abs(np.diag(lu_piv[0]))
        if not np.all(np.isfinite(pivots)) or pivots.min() < BREAKDOWN_PIVOT:
            state.breakdown_step = k + 1
            logger.warning(
                "eim :: B singular at %d points (min pivot %.3e)",
                k + 1,
                pivots.min(),
            )
            break

        state._append(p, j, q, b)
        det = _det(lu_piv)
        state.history.append(
            EimStep(
                k=k + 1,
                det_real=det.real,
                det_imag=det.imag,
                cond=float(np.linalg.cond(b)),
                residual=float(abs(value)),
            )
        )
        logger.debug(
            "eim :: k=%d, p=%d, mu=%.6g, residual=%.3e, det=%.6g",
            k + 1,
            p,
            state.grid_points[j],
            abs(value),
            det.real,
        )

    logger.info(
        "eim :: %s, %d points selected", state.variant.value, state.sigma_hat
    )
    return state


def eim_online(state: EimState, mu: float) -> np.ndarray:
    """Interpolation coefficients at a trial parameter.

    Parameters
    -----------------------
    state : EimState
        Completed state.
    mu : float
        A trial parameter.

    Returns
    -----------------------
    np.ndarray
        lambda solving B lambda = q(mu).

    Raises
    -----------------------
    EimError
        If mu is not a trial parameter or the state is empty.
    """
    if state.sigma_hat == 0:
        raise EimError("eim :: empty interpolation")

    j = state.column_of(mu)
    return state.inverse(state.sigma_hat) @ state.q_table[:, j]


def interpolate(state: EimState, k: int, mu: float) -> np.ndarray:
    """Rank-k interpolant of the table at a trial parameter.

    Returns
    -----------------------
    np.ndarray
        (sigma,) vector sum_r lambda^k_r(mu) X(mu_r).
    """
    j = state.column_of(mu)
    return apply_interpolation(state, k, state.table)[:, j]


def classical_residual(state: EimState, k: int, mu: float) -> np.ndarray:
    """Column of (Id - I^k) X at a trial parameter."""
    j = state.column_of(mu)
    return state.table[:, j] - apply_interpolation(state, k, state.table)[:, j]


def stabilized_residual(state: EimState, k: int, mu: float) -> np.ndarray:
    """Column of the cascaded residual at a trial parameter.

    The cascade is d^1 = X - I^1 X, d^i = d^(i-1) - I^i d^(i-1), returned at
    i = k.
    """
    j = state.column_of(mu)
    return _cascade(state, state.table, k)[:, j]


def diagnostics(state: EimState) -> list[EimStep]:
    """Per-step determinant, condition number and residual."""
    return list(state.history)


def save_eim(path: Union[str, Path], state: EimState):
    """Write the state to a versioned .npz bundle."""
    header = {
        "format_version": FORMAT_VERSION,
        "variant": state.variant.value,
        "p_indices": state.p_indices,
        "mu_indices": state.mu_indices,
        "breakdown_step": state.breakdown_step,
        "history": [h.model_dump() for h in state.history],
    }
    np.savez_compressed(
        path,
        header=np.array(json.dumps(header)),
        table=state.table,
        grid_points=state.grid_points,
        q_table=state.q_table,
        B=state.B,
    )


def load_eim(path: Union[str, Path]) -> EimState:
    """Read a state written by save_eim().

    Raises
    -----------------------
    FileNotFoundError
        If file not found.
    EimError
        If the bundle has another format version.
    """
    try:
        data = np.load(path, allow_pickle=False)
    except FileNotFoundError as err:
        raise FileNotFoundError(f"{path} not found") from err

    with data:
        header = json.loads(str(data["header"]))
        if header.get("format_version") != FORMAT_VERSION:
            raise EimError(
                f"{path} :: unsupported format version "
                f"{header.get('format_version')}"
            )

        state = EimState(data["table"], data["grid_points"], header["variant"])
        state.p_indices = list(header["p_indices"])
        state.mu_indices = list(header["mu_indices"])
        state.breakdown_step = header["breakdown_step"]
        state.history = [EimStep(**h) for h in header["history"]]
        state.q_table = data["q_table"]
        state.B = data["B"]

    return state
