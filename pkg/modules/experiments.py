"""Experiment driver: offline builds, bound sweeps, diagnostics, benchmarks.

Output files (all numbers in scientific notation, 17 significant digits):

- sweep.csv: mu, e1, e2, e3, e4, true_error, raw_radicand_e2, followed by
  e1_go, e2_go, e3_go, e4_go, output_error in goal-oriented runs; empty
  fields for quantities not computed;
- meta.json: sizes, seeds, floors and diagnostics needed to rerun;
- eim_diag.csv: k, det_real, det_imag, cond, residual;
- bench.csv: n, method, median_seconds, calls.

Classes
-----------------------
ExperimentError
    Exception raised for errors in experiments.
OfflineStages
    Products of the offline stage of an experiment.

Functions
-----------------------
build_offline()
    Run the offline stage described by a configuration.
run_sweep()
    Evaluate the requested bounds on the trial grid and write results.
run_perturb()
    Sweep with snapshots perturbed to a prescribed residual.
run_eim_diag()
    Run every EIM variant on the monomial table and write diagnostics.
bench_online()
    Median online evaluation time per estimator and truth size.
export_solution_csv()
    Write truth and exact solutions of the 1D problem.
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


import csv
import logging
import time
from pathlib import Path
from typing import Optional
from typing import Union

import numpy as np

from modules.eim import EimState
from modules.eim import eim_offline
from modules.eim import save_eim
from modules.estimators import build_e3
from modules.estimators import corrected_output
from modules.estimators import e1
from modules.estimators import e2
from modules.estimators import e3
from modules.estimators import e4
from modules.estimators import magnitudes
from modules.estimators import offline_e4
from modules.estimators import predicted_floors
from modules.estimators import sweep
from modules.estimators import sweep_radicands
from modules.estimators import validity_floor
from modules.estimators import xvector_table
from modules.greedy import dual_greedy_build
from modules.greedy import greedy_build
from modules.precision import precision_tag
from modules.problem import TruthProblem
from modules.problem import v_norm
from modules.reduced_basis import ReducedBasisState
from modules.reduced_basis import lift
from modules.reduced_basis import perturb_snapshots
from modules.reduced_basis import reduced_solve_many
from modules.reduced_basis import save_state
from modules.schemas import Diffusion1DSpec
from modules.schemas import DualMeta
from modules.schemas import E3Meta
from modules.schemas import EimDiagMeta
from modules.schemas import EimMeta
from modules.schemas import EimVariant
from modules.schemas import EimVariantMeta
from modules.schemas import EstimatorKind
from modules.schemas import ExperimentConfig
from modules.schemas import FloorsMeta
from modules.schemas import SweepMeta
from modules.truth import analytic_solution
from modules.truth import build_diffusion1d
from modules.truth import build_problem
from modules.truth import diffusion_nodes
from modules.truth import solve_truth


logger = logging.getLogger(__name__)

META_VERSION = 1

SWEEP_COLUMNS = ["mu", "e1", "e2", "e3", "e4", "true_error", "raw_radicand_e2"]
GOAL_COLUMNS = ["e1_go", "e2_go", "e3_go", "e4_go", "output_error"]
EIM_DIAG_COLUMNS = ["k", "det_real", "det_imag", "cond", "residual"]
BENCH_COLUMNS = ["n", "method", "median_seconds", "calls"]
SOLUTION_COLUMNS = ["x", "u_h", "u_exact"]

# Trial parameters of the benchmark problems
BENCH_TRIAL_POINTS = 300


class ExperimentError(Exception):
    """Exception raised for errors in experiments."""


class OfflineStages:
    """Products of the offline stage of an experiment.

    Attributes
    -----------------------
    config : ExperimentConfig
        Configuration the stages were built from.
    problem : TruthProblem
        Truth problem, double precision.
    state : ReducedBasisState
        Primal basis (perturbed if `config.xi` is set).
    e3 : Optional[E3State]
        E3 offline state, if requested.
    e4 : Optional[E4State]
        E4 offline state, if requested.
    dual : Optional[ReducedBasisState]
        Dual basis of goal-oriented runs.
    dual_e3 : Optional[E3State]
        E3 offline state of the dual basis.
    dual_e4 : Optional[E4State]
        E4 offline state of the dual basis.
    """

    def __init__(self, config: ExperimentConfig, problem: TruthProblem):
        self.config = config
        self.problem = problem
        self.state = None
        self.e3 = None
        self.e4 = None
        self.dual = None
        self.dual_e3 = None
        self.dual_e4 = None

    @property
    def grid(self):
        return self.problem.grid

    def offline_states(self, dual: bool = False):
        """Return (E3State, E4State) of the primal or dual basis."""
        if dual:
            return self.dual_e3, self.dual_e4
        return self.e3, self.e4


def _fmt(value) -> str:
    if value is None:
        return ""
    return f"{float(value):.16e}"


def _write_csv(path: Path, header: list[str], rows):
    with open(path, "w", newline="", encoding="utf-8") as csvfile:
        writer = csv.writer(csvfile, quotechar='"')
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)
    logger.info("wrote %s", path)


def _output_dir(config: ExperimentConfig) -> Path:
    out = Path(config.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as err:
        raise ExperimentError(f"{out} :: cannot create directory") from err
    return out


def _estimator_states(config, state, problem, grid):
    e3state = e4state = None
    if EstimatorKind.E3 in config.estimators:
        e3state = build_e3(state, problem, grid, config.e3_seed)
    if EstimatorKind.E4 in config.estimators:
        e4state = offline_e4(
            state,
            problem,
            grid,
            config.sigma_hat,
            config.eim_variant,
            config.eim_tol,
        )
    return e3state, e4state


def build_offline(config: ExperimentConfig) -> OfflineStages:
    """Run the offline stage described by a configuration.

    Builds the problem, the greedy basis (perturbed when `config.xi` is
    set), the E3/E4 offline states of the requested estimators and, for
    goal-oriented runs, the same for the dual problem.

    Parameters
    -----------------------
    config : ExperimentConfig
        Experiment definition.

    Returns
    -----------------------
    OfflineStages
        The offline products.
    """
    problem = build_problem(config.problem)
    res = OfflineStages(config, problem)
    grid = problem.grid

    state = greedy_build(problem, grid, config.greedy, config.precision)
    if config.xi is not None:
        state = perturb_snapshots(
            state, problem, config.xi, config.perturb_seed
        )
    res.state = state
    res.e3, res.e4 = _estimator_states(config, state, problem, grid)

    if config.goal_oriented:
        dual_problem = problem.dual()
        res.dual = dual_greedy_build(
            problem, grid, config.greedy, config.precision
        )
        if res.dual.size:
            res.dual_e3, res.dual_e4 = _estimator_states(
                config, res.dual, dual_problem, grid
            )

    return res


def _true_errors(stages: OfflineStages) -> tuple[np.ndarray, np.ndarray]:
    problem, state = stages.problem, stages.state
    mus = stages.grid.points
    work = problem.astype(state.precision)

    errors = np.zeros(mus.size)
    outputs = np.zeros(mus.size, dtype=np.complex128)
    gammas = None
    if state.size:
        gammas = reduced_solve_many(state, work, mus)

    for j, mu in enumerate(mus):
        u = solve_truth(problem, mu)
        u_hat = np.zeros_like(u)
        if gammas is not None:
            u_hat = lift(state, gammas[j]).astype(u.dtype)
        errors[j] = v_norm(problem, u - u_hat)
        if problem.output is not None:
            outputs[j] = np.vdot(problem.output, u)

    return errors, outputs


def _disabled(method: EstimatorKind, e3state) -> bool:
    return (
        method is EstimatorKind.E3
        and e3state is not None
        and not e3state.enabled
    )


def _goal_columns(stages: OfflineStages, truth_outputs) -> dict:
    problem, primal, dual = stages.problem, stages.state, stages.dual
    dual_problem = problem.dual()
    mus = stages.grid.points
    beta_d = np.array([problem.beta_lb_dual(mu) for mu in mus])
    e3p, e4p = stages.offline_states()
    e3d, e4d = stages.offline_states(dual=True)

    cols, mags = {}, {}
    for method in stages.config.estimators:
        if _disabled(method, e3p) or _disabled(method, e3d):
            continue
        rad_p = sweep_radicands(method, primal, problem, mus, e3p, e4p)
        if dual.size:
            rad_d = sweep_radicands(method, dual, dual_problem, mus, e3d, e4d)
        else:
            # Empty dual basis: the dual residual is the output itself
            rad_d = sweep_radicands(EstimatorKind.E1, dual, dual_problem, mus)
        rad_p = rad_p.astype(np.float64)
        rad_d = rad_d.astype(np.float64)
        name = f"{method.value}_go"
        cols[name] = (
            np.sqrt(np.maximum(rad_p, 0.0))
            * np.sqrt(np.maximum(rad_d, 0.0))
            / beta_d
        )
        mags[name] = magnitudes(rad_p * rad_d, beta_d)

    if truth_outputs is not None:
        corrected = np.array(
            [corrected_output(primal, dual, problem, mu) for mu in mus]
        )
        cols["output_error"] = np.abs(truth_outputs - corrected)

    return cols, mags


def _sweep_columns(stages: OfflineStages) -> tuple[dict, dict]:
    """Return CSV columns and unclamped magnitudes by name."""
    config = stages.config
    state, problem = stages.state, stages.problem
    mus = stages.grid.points
    beta = np.array([problem.beta_lb(mu) for mu in mus], dtype=np.float64)

    cols, mags = {"mu": mus}, {}
    for method in config.estimators:
        if _disabled(method, stages.e3):
            logger.warning("e3 :: column left empty, %s", stages.e3.reason)
            continue
        values, raw = sweep(method, state, problem, mus, stages.e3, stages.e4)
        cols[method.value] = values
        mags[method.value] = magnitudes(raw, beta)
        if method is EstimatorKind.E2:
            cols["raw_radicand_e2"] = raw

    truth_outputs = None
    if config.truth_error:
        cols["true_error"], outputs = _true_errors(stages)
        if problem.output is not None:
            truth_outputs = outputs

    if config.goal_oriented:
        goal_cols, goal_mags = _goal_columns(stages, truth_outputs)
        cols.update(goal_cols)
        mags.update(goal_mags)

    return cols, mags


def _rows(cols: dict, header: list[str]):
    size = len(cols["mu"])
    for j in range(size):
        yield [
            _fmt(cols[name][j]) if name in cols else "" for name in header
        ]


def _sigma(state: ReducedBasisState) -> int:
    p = state.d * state.size
    return 1 + 2 * p + p * p


def _meta(stages: OfflineStages, mags: dict) -> SweepMeta:
    config, problem, state = stages.config, stages.problem, stages.state
    mus = stages.grid.points
    beta_min = float(min(problem.beta_lb(mu) for mu in mus))
    tag = precision_tag(config.precision)

    output_norm = beta_dual_min = None
    if config.goal_oriented:
        output_norm = problem.output_norm
        beta_dual_min = float(min(problem.beta_lb_dual(mu) for mu in mus))

    measured = {}
    if state.size:
        measured = {
            name: validity_floor(values, mus, state.selected)
            for name, values in mags.items()
        }

    e3_meta = None
    if stages.e3 is not None:
        e3_meta = E3Meta(
            enabled=stages.e3.enabled,
            reason=stages.e3.reason,
            sigma_distinct=stages.e3.sigma,
            cond_estimate=stages.e3.cond_estimate,
            node_indices=[int(i) for i in stages.e3.node_indices],
        )

    eim_meta = None
    if stages.e4 is not None:
        eim = stages.e4.eim
        eim_meta = EimMeta(
            variant=eim.variant,
            sigma_hat=eim.sigma_hat,
            sigma_hat_requested=config.sigma_hat,
            breakdown_step=eim.breakdown_step,
            p_indices=[int(p) for p in eim.p_indices],
            mus=[float(mu) for mu in eim.mus],
        )

    riesz_solves = {"e1": 0, "e2": state.d * state.size + 1}
    if stages.e3 is not None:
        riesz_solves["e3"] = stages.e3.sigma
    if stages.e4 is not None:
        riesz_solves["e4"] = stages.e4.sigma_hat

    dual_meta = None
    if stages.dual is not None:
        dual_meta = DualMeta(
            n_hat=stages.dual.size,
            selected=stages.dual.selected,
            delta=stages.dual.delta,
            output_norm=output_norm,
        )

    plateau = None
    if config.xi is not None:
        plateau = state.delta * config.xi / beta_min

    return SweepMeta(
        meta_version=META_VERSION,
        problem=config.problem,
        n=problem.n,
        d=problem.d,
        n_hat=state.size,
        sigma=_sigma(state),
        sigma_hat=None if stages.e4 is None else stages.e4.sigma_hat,
        delta=state.delta,
        beta_min=beta_min,
        precision=config.precision,
        eps=tag.eps,
        xi=config.xi,
        seeds={
            "e3_seed": config.e3_seed,
            "perturb_seed": config.perturb_seed,
            "problem_seed": getattr(config.problem, "seed", None),
        },
        selected=state.selected,
        max_estimates=state.max_estimates,
        greedy=config.greedy,
        estimators=config.estimators,
        e3=e3_meta,
        eim=eim_meta,
        riesz_solves=riesz_solves,
        floors=FloorsMeta(
            predicted=predicted_floors(
                state.delta,
                beta_min,
                tag.eps,
                config.xi,
                output_norm,
                beta_dual_min,
            ),
            measured=measured,
        ),
        perturbation_plateau=plateau,
        dual=dual_meta,
    )


def _eim_rows(eim: Optional[EimState]):
    if eim is None:
        return []
    return [
        [str(h.k)]
        + [_fmt(v) for v in (h.det_real, h.det_imag, h.cond, h.residual)]
        for h in eim.history
    ]


def run_sweep(config: ExperimentConfig) -> dict[str, Path]:
    """Evaluate the requested bounds on the trial grid and write results.

    Writes sweep.csv, meta.json, eim_diag.csv and the state bundles
    state.npz (and eim.npz with E4) to `config.output_dir`.

    Parameters
    -----------------------
    config : ExperimentConfig
        Experiment definition.

    Returns
    -----------------------
    dict[str, Path]
        Written files by role.

    Raises
    -----------------------
    ExperimentError
        If the output directory cannot be created.
    """
    out = _output_dir(config)
    stages = build_offline(config)
    cols, mags = _sweep_columns(stages)

    header = list(SWEEP_COLUMNS)
    if config.goal_oriented:
        header += GOAL_COLUMNS

    files = {
        "sweep": out / "sweep.csv",
        "meta": out / "meta.json",
        "eim_diag": out / "eim_diag.csv",
        "state": out / "state.npz",
    }
    _write_csv(files["sweep"], header, _rows(cols, header))
    _write_csv(
        files["eim_diag"],
        EIM_DIAG_COLUMNS,
        _eim_rows(None if stages.e4 is None else stages.e4.eim),
    )

    meta = _meta(stages, mags)
    files["meta"].write_text(meta.model_dump_json(indent=2), encoding="utf-8")
    logger.info("wrote %s", files["meta"])

    save_state(files["state"], stages.state)
    if stages.e4 is not None:
        files["eim"] = out / "eim.npz"
        save_eim(files["eim"], stages.e4.eim)

    return files


def run_perturb(config: ExperimentConfig, xi: float = 1e-6) -> dict[str, Path]:
    """Sweep with snapshots perturbed to a prescribed residual.

    Uses `config.xi` if set, `xi` otherwise. meta.json then carries the
    expected plateau delta xi / beta_min.
    """
    if config.xi is None:
        config = config.model_copy(update={"xi": xi})
    return run_sweep(config)


def run_eim_diag(
    config: ExperimentConfig, variants: Optional[list[EimVariant]] = None
) -> dict[EimVariant, EimState]:
    """Run EIM variants on the monomial table and write diagnostics.

    For each variant writes eim_diag_<variant>.csv, and a summary
    eim_meta.json with breakdown steps and final det/cond.

    Parameters
    -----------------------
    config : ExperimentConfig
        Experiment definition; `sigma_hat` and `eim_tol` are used.
    variants : Optional[list[EimVariant]]
        Variants to run, all if `None`.

    Returns
    -----------------------
    dict[EimVariant, EimState]
        The completed interpolations.
    """
    out = _output_dir(config)
    variants = list(EimVariant) if variants is None else variants

    problem = build_problem(config.problem)
    grid = problem.grid
    state = greedy_build(problem, grid, config.greedy, config.precision)
    table = xvector_table(state, problem.astype(config.precision), grid.points)
    sigma_hat = min(config.sigma_hat, *table.shape)

    res, summary = {}, {}
    for variant in variants:
        eim = eim_offline(
            table, grid.points, sigma_hat, variant, config.eim_tol
        )
        res[variant] = eim
        _write_csv(
            out / f"eim_diag_{variant.value}.csv",
            EIM_DIAG_COLUMNS,
            _eim_rows(eim),
        )

        last = eim.history[-1] if eim.history else None
        summary[variant.value] = EimVariantMeta(
            sigma_hat=eim.sigma_hat,
            breakdown_step=eim.breakdown_step,
            det_real=None if last is None else last.det_real,
            det_imag=None if last is None else last.det_imag,
            cond=None if last is None else last.cond,
        )

    meta = EimDiagMeta(
        meta_version=META_VERSION,
        sigma=table.shape[0],
        sigma_hat_requested=config.sigma_hat,
        n_hat=state.size,
        variants=summary,
    )
    (out / "eim_meta.json").write_text(
        meta.model_dump_json(indent=2), encoding="utf-8"
    )

    return res


def _median_time(func, mus, calls: int) -> float:
    times = np.zeros(calls)
    for c in range(calls):
        mu = mus[c % len(mus)]
        start = time.perf_counter()
        func(mu)
        times[c] = time.perf_counter() - start
    return float(np.median(times))


def bench_online(
    config: ExperimentConfig, n_values: Optional[list[int]] = None
) -> list[dict]:
    """Median online evaluation time per estimator and truth size.

    For each N builds the 1D diffusion problem with h = 1/(N+1) and
    BENCH_TRIAL_POINTS trial parameters, the greedy basis and the offline
    states, then times `config.bench_calls` calls of each estimator.
    Results go to bench.csv.

    Parameters
    -----------------------
    config : ExperimentConfig
        Experiment definition.
    n_values : Optional[list[int]]
        Truth sizes, `config.bench_sizes` if `None`.

    Returns
    -----------------------
    list[dict]
        One record (n, method, median_seconds, calls) per size and method.

    Raises
    -----------------------
    ExperimentError
        If fewer than 2 distinct sizes are given.
    """
    n_values = config.bench_sizes if n_values is None else n_values
    if len(set(n_values)) < 2:
        raise ExperimentError(
            f"bench :: need >= 2 distinct sizes, got {n_values}"
        )
    out = _output_dir(config)

    records = []
    for n in n_values:
        problem = build_diffusion1d(
            Diffusion1DSpec(
                mesh_h=1.0 / (n + 1), trial_points=BENCH_TRIAL_POINTS
            )
        )
        grid = problem.grid
        state = greedy_build(problem, grid, config.greedy, config.precision)
        e3state, e4state = _estimator_states(config, state, problem, grid)

        funcs = {
            EstimatorKind.E1: lambda mu: e1(state, problem, mu),
            EstimatorKind.E2: lambda mu: e2(state, problem, mu),
            EstimatorKind.E3: lambda mu: e3(e3state, state, problem, mu),
            EstimatorKind.E4: lambda mu: e4(e4state, state, problem, mu),
        }
        for method in config.estimators:
            if method is EstimatorKind.E3 and not e3state.enabled:
                continue
            median = _median_time(
                funcs[method], grid.points, config.bench_calls
            )
            records.append(
                {
                    "n": problem.n,
                    "method": method.value,
                    "median_seconds": median,
                    "calls": config.bench_calls,
                }
            )
            logger.info(
                "bench :: N=%d, %s, %.3e s", problem.n, method.value, median
            )

    _write_csv(
        out / "bench.csv",
        BENCH_COLUMNS,
        (
            [
                str(r["n"]),
                r["method"],
                _fmt(r["median_seconds"]),
                str(r["calls"]),
            ]
            for r in records
        ),
    )
    return records


def export_solution_csv(
    path: Union[str, Path], problem: TruthProblem, mu: float
) -> Path:
    """Write truth and exact solutions of the 1D problem.

    Rows x, u_h, u_exact at the interior nodes.

    Raises
    -----------------------
    ExperimentError
        If the problem is not the 1D diffusion problem.
    """
    if problem.name != "diffusion1d":
        raise ExperimentError(
            f"{problem.name} :: solution export needs the diffusion1d problem"
        )

    x = diffusion_nodes(1.0 / (problem.n + 1))
    u_h = solve_truth(problem, mu)
    u_exact = analytic_solution(mu, x)

    path = Path(path)
    _write_csv(
        path,
        SOLUTION_COLUMNS,
        ([_fmt(a), _fmt(b), _fmt(c)] for a, b, c in zip(x, u_h, u_exact)),
    )
    return path
