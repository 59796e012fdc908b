"""Reduced basis state, reduced solves and error-bound data.

Snapshots enter the basis V-orthonormalized. For each basis vector w_i
and term k the state keeps the Riesz vector g_{k,i} = J(A_k w_i), next to
G00 = -J(b). The gram block M = Y^H G Y of Y = [G00, g_{0,0}, ...] is
grown incrementally in append order (column 1 + i d + k) and exposed in
flattened order I = i + N k, giving delta^2 = M_00, s_I = M_{0,I} and
S_{I,J} = M_{I,J}.

Classes
-----------------------
ReducedBasisError
    Exception raised for errors in reduced basis operations.
ReducedBasisState
    Snapshots, reduced blocks and error-bound data.

Functions
-----------------------
reduced_solve()
    Solve the reduced problem at a parameter.
reduced_solve_many()
    Solve the reduced problem at several parameters.
coefficient_vector()
    Flattened coefficients x_I = alpha_k(mu) gamma_i(mu).
coefficient_table()
    Coefficient vectors at several parameters.
lift()
    Truth vector of reduced coefficients.
precompute_bound_data()
    Recompute all Riesz vectors and the gram block from the basis.
perturb_snapshots()
    Rebuild the state from snapshots with a prescribed residual.
save_state()
    Write the state to a versioned .npz bundle.
load_state()
    Read a state written by save_state().
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
from pathlib import Path
from typing import Optional
from typing import Union

import numpy as np

from modules.precision import ExtendedArray
from modules.precision import PrecisionKind
from modules.precision import cast
from modules.precision import ext_matmul
from modules.problem import TruthProblem
from modules.problem import assemble
from modules.problem import dual_norm
from modules.problem import riesz
from modules.problem import v_norm


logger = logging.getLogger(__name__)

FORMAT_VERSION = 1

# Relative norm left by orthogonalization, in units of the storage
# roundoff, below which a snapshot is considered dependent
DEPENDENCE_ULPS = 1024.0


class ReducedBasisError(Exception):
    """Exception raised for errors in reduced basis operations."""


def _gram_products(
    problem: TruthProblem,
    left: np.ndarray,
    right: np.ndarray,
    precision: PrecisionKind,
):
    """Return (left^H G right, double-word copy or None)."""
    if precision is PrecisionKind.EXTENDED:
        ext = ext_matmul(left.conj().T, ext_matmul(problem.gram, right))
        res = ext.demote()
        if not np.iscomplexobj(left) and not np.iscomplexobj(right):
            res = res.real
        return res, ext

    return left.conj().T @ (problem.gram @ right), None


def _mirror(block: np.ndarray, m: int) -> np.ndarray:
    # Lower part from the freshly computed columns m:, new diagonal block
    # from its upper triangle
    block[m:, :m] = block[:m, m:].conj().T
    new = block[m:, m:]
    new = np.triu(new) + np.triu(new, 1).conj().T
    if np.iscomplexobj(new):
        new[np.diag_indices_from(new)] = new.diagonal().real
    block[m:, m:] = new
    return block


def _mirror_ext(ext: ExtendedArray, m: int) -> ExtendedArray:
    hi = _mirror(ext.re_hi + 1j * ext.im_hi, m)
    lo = _mirror(ext.re_lo + 1j * ext.im_lo, m)
    return ExtendedArray(hi.real, lo.real, hi.imag, lo.imag)


class ReducedBasisState:
    """Snapshots, reduced blocks and error-bound data.

    Attributes
    -----------------------
    precision : PrecisionKind
        Scalar format of the offline computations.
    basis : np.ndarray
        (N, Nhat) V-orthonormal basis vectors w_i.
    raw_snapshots : np.ndarray
        (N, Nhat) truth solutions before orthonormalization.
    selected : list[float]
        Parameters of the snapshots, in selection order.
    reduced_terms : np.ndarray
        (d, Nhat, Nhat) blocks with (A_k)_{ji} = w_j^H A_k w_i.
    reduced_rhs : np.ndarray
        (Nhat,) vector with B_j = w_j^H B.
    g00 : np.ndarray
        Riesz vector -J(b).
    riesz_vectors : np.ndarray
        (N, d Nhat) Riesz vectors J(A_k w_i), append order.
    gram_block : np.ndarray
        Gram matrix of [g00, riesz_vectors], append order.
    gram_block_ext : Optional[ExtendedArray]
        Double-word copy of gram_block (extended precision only).
    max_estimates : list[float]
        Maximum of the driving estimator after each greedy step.

    Methods
    -----------------------
    __init__()
        Initialize an empty state.
    append_snapshot()
        Orthonormalize a snapshot and add it to the basis.
    """

    def __init__(
        self,
        problem: TruthProblem,
        precision: PrecisionKind = PrecisionKind.DOUBLE,
    ):
        """Initialize an empty state.

        Parameters
        -----------------------
        problem : TruthProblem
            Truth problem, already cast to `precision`.
        precision : PrecisionKind
            Scalar format of the offline computations.
        """
        self.precision = PrecisionKind(precision)
        n, d = problem.n, problem.d
        dtype = problem.dtype

        self.basis = np.zeros((n, 0), dtype=dtype)
        self.raw_snapshots = np.zeros((n, 0), dtype=dtype)
        self.selected = []
        self.reduced_terms = np.zeros((d, 0, 0), dtype=dtype)
        self.reduced_rhs = np.zeros(0, dtype=dtype)
        self.max_estimates = []

        self.g00 = -riesz(problem, problem.rhs)
        self.riesz_vectors = np.zeros((n, 0), dtype=self.g00.dtype)
        block, ext = _gram_products(
            problem, self.g00[:, None], self.g00[:, None], self.precision
        )
        self.gram_block = _mirror(block, 0)
        self.gram_block_ext = None if ext is None else _mirror_ext(ext, 0)

    @property
    def size(self) -> int:
        """Basis size Nhat."""
        return self.basis.shape[1]

    @property
    def d(self) -> int:
        return self.reduced_terms.shape[0]

    @property
    def n(self) -> int:
        return self.basis.shape[0]

    @property
    def dtype(self) -> np.dtype:
        return self.reduced_terms.dtype

    @property
    def is_real(self) -> bool:
        return not np.iscomplexobj(self.gram_block)

    @property
    def order(self) -> np.ndarray:
        """Append positions of [G00, flattened I = i + Nhat k]."""
        perm = [0]
        for k in range(self.d):
            for i in range(self.size):
                perm.append(1 + i * self.d + k)
        return np.array(perm, dtype=np.int64)

    @property
    def riesz_block(self) -> np.ndarray:
        """(N, 1 + d Nhat) matrix [G00, g_I], flattened order."""
        block = np.column_stack([self.g00, self.riesz_vectors])
        return block[:, self.order]

    @property
    def gram_ordered(self) -> np.ndarray:
        """Gram block in flattened order."""
        perm = self.order
        return self.gram_block[np.ix_(perm, perm)]

    @property
    def gram_ordered_ext(self) -> Optional[ExtendedArray]:
        """Double-word gram block in flattened order, if available."""
        if self.gram_block_ext is None:
            return None
        perm = self.order
        return self.gram_block_ext.take(np.ix_(perm, perm))

    @property
    def delta(self) -> float:
        """Dual norm of b, delta = ||G00||_V."""
        return float(np.sqrt(max(self.gram_block[0, 0].real, 0.0)))

    @property
    def s_vec(self) -> np.ndarray:
        """s_I = (g_I, G00)_V."""
        return self.gram_block[0, self.order[1:]]

    @property
    def S_mat(self) -> np.ndarray:
        """S_IJ = (g_J, g_I)_V (Hermitian)."""
        perm = self.order[1:]
        return self.gram_block[np.ix_(perm, perm)]

    def _orthonormalize(self, problem: TruthProblem, u: np.ndarray):
        norm0 = v_norm(problem, u)
        if norm0 == 0.0:
            raise ReducedBasisError("snapshot :: zero vector")

        v = u.copy()
        # Gram-Schmidt, applied twice
        for _ in range(2):
            if self.size:
                v = v - self.basis @ (self.basis.conj().T @ (problem.gram @ v))

        norm = v_norm(problem, v)
        tol = DEPENDENCE_ULPS * float(np.finfo(self.dtype).eps)
        if norm < tol * norm0:
            raise ReducedBasisError(
                f"snapshot :: dependent on the basis "
                f"(relative norm {norm / norm0:.3e})"
            )
        return v / norm

    def append_snapshot(self, problem: TruthProblem, u: np.ndarray, mu: float):
        """Orthonormalize a snapshot and add it to the basis.

        Updates the reduced blocks, the Riesz vectors and the gram block
        incrementally.

        Parameters
        -----------------------
        problem : TruthProblem
            Truth problem, already cast to the state precision.
        u : np.ndarray
            Truth solution.
        mu : float
            Its parameter.

        Raises
        -----------------------
        ReducedBasisError
            If the snapshot is (numerically) dependent on the basis.
        """
        u = np.asarray(u).astype(self.dtype, copy=False)
        w = self._orthonormalize(problem, u)
        old, d = self.size, self.d

        a_w = np.stack([a @ w for a in problem.op.terms])

        terms = np.zeros((d, old + 1, old + 1), dtype=self.dtype)
        terms[:, :old, :old] = self.reduced_terms
        terms[:, :old, old] = (self.basis.conj().T @ a_w.T).T
        for k in range(d):
            terms[k, old, :old] = (w.conj() @ problem.op.terms[k]) @ self.basis
        terms[:, old, old] = a_w @ w.conj()

        self.reduced_terms = terms
        self.reduced_rhs = np.append(self.reduced_rhs, np.vdot(w, problem.rhs))

        new_cols = riesz(problem, a_w.T)
        self._extend_gram_block(problem, new_cols)

        self.riesz_vectors = np.column_stack([self.riesz_vectors, new_cols])
        self.basis = np.column_stack([self.basis, w])
        self.raw_snapshots = np.column_stack([self.raw_snapshots, u])
        self.selected.append(float(mu))

    def _extend_gram_block(self, problem: TruthProblem, new_cols: np.ndarray):
        m = self.gram_block.shape[0]
        y_all = np.column_stack([self.g00, self.riesz_vectors, new_cols])
        cross, cross_ext = _gram_products(
            problem, y_all, new_cols, self.precision
        )

        block = np.zeros((m + new_cols.shape[1],) * 2, dtype=cross.dtype)
        block[:m, :m] = self.gram_block
        block[:, m:] = cross
        self.gram_block = _mirror(block, m)

        if cross_ext is not None:
            size = m + new_cols.shape[1]
            ext = ExtendedArray.zeros((size, size))
            for dst, old, col in zip(ext, self.gram_block_ext, cross_ext):
                dst[:m, :m] = old
                dst[:, m:] = col
            self.gram_block_ext = _mirror_ext(ext, m)


def reduced_solve(
    state: ReducedBasisState, problem: TruthProblem, mu: float
) -> np.ndarray:
    """Solve the reduced problem at a parameter.

    Parameters
    -----------------------
    state : ReducedBasisState
        Nonempty state.
    problem : TruthProblem
        Problem providing the coefficients.
    mu : float
        Parameter.

    Returns
    -----------------------
    np.ndarray
        Coefficients gamma of u_hat = sum_i gamma_i w_i.

    Raises
    -----------------------
    ReducedBasisError
        If the state is empty or the reduced matrix is singular.
    """
    if state.size == 0:
        raise ReducedBasisError("reduced solve :: empty basis")

    coeffs = problem.op.coefficients(mu).astype(state.dtype)
    a_hat = np.tensordot(coeffs, state.reduced_terms, axes=1)
    try:
        return np.linalg.solve(a_hat, state.reduced_rhs)
    except np.linalg.LinAlgError as err:
        raise ReducedBasisError(
            f"mu={mu} :: singular reduced matrix"
        ) from err


def reduced_solve_many(
    state: ReducedBasisState, problem: TruthProblem, mus
) -> np.ndarray:
    """Solve the reduced problem at several parameters.

    Returns
    -----------------------
    np.ndarray
        (m, Nhat) coefficients, one row per parameter.

    Raises
    -----------------------
    ReducedBasisError
        If the state is empty or a reduced matrix is singular.
    """
    if state.size == 0:
        raise ReducedBasisError("reduced solve :: empty basis")

    coeffs = problem.op.coefficient_table(mus).astype(state.dtype)
    a_hat = np.einsum("mk,kji->mji", coeffs, state.reduced_terms)
    rhs = np.broadcast_to(state.reduced_rhs, (len(coeffs), state.size))
    try:
        return np.linalg.solve(a_hat, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError as err:
        raise ReducedBasisError("singular reduced matrix in sweep") from err


def coefficient_vector(
    state: ReducedBasisState, problem: TruthProblem, mu: float
) -> np.ndarray:
    """Flattened coefficients x_I = alpha_k(mu) gamma_i(mu), I = i + Nhat k."""
    gamma = reduced_solve(state, problem, mu)
    coeffs = problem.op.coefficients(mu).astype(state.dtype)
    return np.outer(coeffs, gamma).ravel()


def coefficient_table(
    state: ReducedBasisState, problem: TruthProblem, mus
) -> np.ndarray:
    """(d Nhat, m) table of coefficient vectors, one column per parameter."""
    gammas = reduced_solve_many(state, problem, mus)
    coeffs = problem.op.coefficient_table(mus).astype(state.dtype)
    return (coeffs[:, :, None] * gammas[:, None, :]).reshape(len(gammas), -1).T


def lift(state: ReducedBasisState, gamma: np.ndarray) -> np.ndarray:
    """Truth vector sum_i gamma_i w_i."""
    return state.basis @ gamma


def precompute_bound_data(
    state: ReducedBasisState, problem: TruthProblem
) -> ReducedBasisState:
    """Recompute all Riesz vectors and the gram block from the basis.

    Parameters
    -----------------------
    state : ReducedBasisState
        State with snapshots.
    problem : TruthProblem
        Truth problem.

    Returns
    -----------------------
    ReducedBasisState
        The same state, updated in place.
    """
    problem = problem.astype(state.precision)
    state.g00 = -riesz(problem, problem.rhs)

    cols = []
    for i in range(state.size):
        for a in problem.op.terms:
            cols.append(a @ state.basis[:, i])
    if cols:
        state.riesz_vectors = riesz(problem, np.column_stack(cols))
    else:
        state.riesz_vectors = np.zeros((state.n, 0), dtype=state.g00.dtype)

    y = np.column_stack([state.g00, state.riesz_vectors])
    block, ext = _gram_products(problem, y, y, state.precision)
    # Hermitian by construction: upper triangle mirrored
    state.gram_block = _mirror(block, 0)
    state.gram_block_ext = None if ext is None else _mirror_ext(ext, 0)

    return state


def perturb_snapshots(
    state: ReducedBasisState,
    problem: TruthProblem,
    xi: float,
    seed: int = 0,
) -> ReducedBasisState:
    """Rebuild the state from snapshots with a prescribed residual.

    Each raw snapshot u_i becomes u_i + t e_i, e_i a random direction (real
    for real problems) and t such that the normalized dual residual
    ||A_mu_i (u_i + t e_i) - B||_V' / ||B||_V' is xi.

    Parameters
    -----------------------
    state : ReducedBasisState
        State to perturb.
    problem : TruthProblem
        Truth problem.
    xi : float
        Normalized residual, 0 < xi < 1.
    seed : int
        RNG seed of the directions.

    Returns
    -----------------------
    ReducedBasisState
        New state, bound data recomputed.

    Raises
    -----------------------
    ReducedBasisError
        If xi is out of range.
    """
    if not 0.0 < xi < 1.0:
        raise ReducedBasisError(f"xi={xi} :: expected 0 < xi < 1")

    work = problem.astype(state.precision)
    rng = np.random.default_rng(seed)
    rhs_norm = dual_norm(work, work.rhs)

    res = ReducedBasisState(work, state.precision)
    for u, mu in zip(state.raw_snapshots.T, state.selected):
        e = rng.standard_normal(state.n)
        if not work.is_real:
            e = e + 1j * rng.standard_normal(state.n)
        e = cast(e, state.precision)

        t = xi * rhs_norm / dual_norm(work, assemble(work.op, mu) @ e)
        res.append_snapshot(work, u + t * e, mu)

    logger.info("perturbed %d snapshots, xi=%.3e", res.size, xi)
    return res


def save_state(path: Union[str, Path], state: ReducedBasisState):
    """Write the state to a versioned .npz bundle.

    Parameters
    -----------------------
    path : str or Path
        Output file.
    state : ReducedBasisState
        State to save.
    """
    header = {
        "format_version": FORMAT_VERSION,
        "precision": state.precision.value,
        "selected": state.selected,
        "max_estimates": [float(v) for v in state.max_estimates],
        "extended": state.gram_block_ext is not None,
    }
    arrays = {
        "header": np.array(json.dumps(header)),
        "basis": state.basis,
        "raw_snapshots": state.raw_snapshots,
        "reduced_terms": state.reduced_terms,
        "reduced_rhs": state.reduced_rhs,
        "g00": state.g00,
        "riesz_vectors": state.riesz_vectors,
        "gram_block": state.gram_block,
    }
    if state.gram_block_ext is not None:
        for name, comp in zip(ExtendedArray._fields, state.gram_block_ext):
            arrays[f"ext_{name}"] = comp

    np.savez_compressed(path, **arrays)


def load_state(path: Union[str, Path]) -> ReducedBasisState:
    """Read a state written by save_state().

    Raises
    -----------------------
    FileNotFoundError
        If file not found.
    ReducedBasisError
        If the bundle has another format version.
    """
    try:
        data = np.load(path, allow_pickle=False)
    except FileNotFoundError as err:
        raise FileNotFoundError(f"{path} not found") from err

    with data:
        header = json.loads(str(data["header"]))
        if header.get("format_version") != FORMAT_VERSION:
            raise ReducedBasisError(
                f"{path} :: unsupported format version "
                f"{header.get('format_version')}"
            )

        state = ReducedBasisState.__new__(ReducedBasisState)
        state.precision = PrecisionKind(header["precision"])
        state.selected = [float(v) for v in header["selected"]]
        state.max_estimates = [float(v) for v in header["max_estimates"]]
        for name in (
            "basis",
            "raw_snapshots",
            "reduced_terms",
            "reduced_rhs",
            "g00",
            "riesz_vectors",
            "gram_block",
        ):
            setattr(state, name, data[name])

        state.gram_block_ext = None
        if header["extended"]:
            state.gram_block_ext = ExtendedArray(
                *(data[f"ext_{name}"] for name in ExtendedArray._fields)
            )

    return state
