"""Definition of schemas for problem, experiment and report data.

Classes
-----------------------
EstimatorKind
    Enum of the error-bound evaluation procedures.
EimVariant
    Enum of the empirical interpolation variants.
Diffusion1DSpec
    Definition of the 1D diffusion problem.
SyntheticComplexSpec
    Definition of the synthetic dense complex problem.
GreedyConfig
    Parameters of the greedy basis construction.
ExperimentConfig
    Full definition of an experiment.
BoundReport
    Error bound evaluated at one parameter.
GoalReport
    Goal-oriented bound with its corrected output.
EimStep
    One row of the EIM diagnostics table.
FloorsMeta
    Predicted and measured validity floors of a sweep.
E3Meta
    Offline data of E3 recorded with a sweep.
EimMeta
    Interpolation behind E4 recorded with a sweep.
DualMeta
    Dual basis recorded with a goal-oriented sweep.
SweepMeta
    Content of meta.json.
EimVariantMeta
    Outcome of one EIM variant in eim_meta.json.
EimDiagMeta
    Content of eim_meta.json.

Functions
-----------------------
load_problem_spec()
    Load a problem definition from a JSON file.
load_experiment_config()
    Load an experiment definition from a JSON file.
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

from enum import Enum
from pathlib import Path
from typing import Annotated
from typing import Literal
from typing import Optional
from typing import Union

from pydantic import BaseModel
from pydantic import Field
from pydantic import TypeAdapter
from pydantic import model_validator

from modules.precision import PrecisionKind


class EstimatorKind(str, Enum):
    """Enum of the error-bound evaluation procedures."""

    E1 = "e1"
    E2 = "e2"
    E3 = "e3"
    E4 = "e4"


class EimVariant(str, Enum):
    """Enum of the empirical interpolation variants."""

    CLASSICAL = "classical"
    UNIQUE_CHOICE = "unique_choice"
    STABILIZED = "stabilized"
    HYBRID = "hybrid"


class Diffusion1DSpec(BaseModel):
    """Definition of the 1D diffusion problem -u'' + mu u = 1 on ]0,1[.

    Attributes
    -----------------------
    problem : Literal["diffusion1d"]
        Discriminator.
    mesh_h : float
        Mesh size, 1/h must be integral. Default is 0.005.
    param_box : tuple[float, float]
        Parameter interval. Default is (1, 100).
    trial_points : int
        Number of uniformly spaced trial parameters. Default is 1000.
    output : bool
        Whether to attach the output Q(u) = integral of u. Default is
        `False`.
    """

    problem: Literal["diffusion1d"] = "diffusion1d"
    mesh_h: float = Field(
        default=0.005,
        gt=0.0,
        le=0.5,
        description="Mesh size, 1/h must be integral. Default is 0.005.",
    )
    param_box: tuple[float, float] = Field(
        default=(1.0, 100.0),
        description="Parameter interval. Default is (1, 100).",
    )
    trial_points: int = Field(
        default=1000,
        ge=1,
        description="""Number of uniformly spaced trial parameters. Default is
        1000.""",
    )
    output: bool = Field(
        default=False,
        description="""Whether to attach the output Q(u) = integral of u.
        Default is `False`.""",
    )


class SyntheticComplexSpec(BaseModel):
    """Definition of the synthetic dense complex problem.

    Attributes
    -----------------------
    problem : Literal["synthetic"]
        Discriminator.
    n : int
        Truth dimension. Default is 200.
    d : int
        Number of affine terms, coefficients (1, 1/mu, mu, 1/mu^2, ...).
        Default is 3.
    planted_beta : float
        Inf-sup constant at the center of the parameter box. Default is
        1e-6.
    curvature : float
        Growth rate of the smallest singular value away from the center.
        Default is 0.1.
    seed : int
        RNG seed. Default is 0.
    param_box : tuple[float, float]
        Parameter interval. Default is (0.9, 1.1).
    trial_points : int
        Number of uniformly spaced trial parameters. Default is 200.
    output : bool
        Whether to attach a random unit output functional. Default is
        `True`.
    """

    problem: Literal["synthetic"] = "synthetic"
    n: int = Field(default=200, ge=2, description="Truth dimension.")
    d: int = Field(
        default=3,
        ge=1,
        description="Number of affine terms. Default is 3.",
    )
    planted_beta: float = Field(
        default=1e-6,
        gt=0.0,
        description="""Inf-sup constant at the center of the parameter box.
        Default is 1e-6.""",
    )
    curvature: float = Field(
        default=0.1,
        ge=0.0,
        description="""Growth rate of the smallest singular value away from
        the center. Default is 0.1.""",
    )
    seed: int = Field(default=0, ge=0, description="RNG seed. Default is 0.")
    param_box: tuple[float, float] = Field(
        default=(0.9, 1.1),
        description="Parameter interval. Default is (0.9, 1.1).",
    )
    trial_points: int = Field(
        default=200,
        ge=1,
        description="""Number of uniformly spaced trial parameters. Default is
        200.""",
    )
    output: bool = Field(
        default=True,
        description="""Whether to attach a random unit output functional.
        Default is `True`.""",
    )


ProblemSpec = Annotated[
    Union[Diffusion1DSpec, SyntheticComplexSpec],
    Field(discriminator="problem"),
]


class GreedyConfig(BaseModel):
    """Parameters of the greedy basis construction.

    Attributes
    -----------------------
    tol_rb : float
        Stop when the maximum estimator value falls below this. Default is
        1e-14.
    nmax : int
        Maximum basis size. Default is 7.
    estimator : EstimatorKind
        Estimator driving the selection. Default is E1.
    start_mu : Optional[float]
        First parameter. Grid midpoint if `None`. Default is `None`.
    sigma_hat : int
        Interpolation points used when E4 drives the selection. Default is
        23.
    e3_seed : int
        Node seed used when E3 drives the selection. Default is 0.
    """

    tol_rb: float = Field(
        default=1e-14,
        gt=0.0,
        description="""Stop when the maximum estimator value falls below
        this. Default is 1e-14.""",
    )
    nmax: int = Field(
        default=7, ge=1, description="Maximum basis size. Default is 7."
    )
    estimator: EstimatorKind = Field(
        default=EstimatorKind.E1,
        description="Estimator driving the selection. Default is E1.",
    )
    start_mu: Optional[float] = Field(
        default=None,
        description="First parameter. Grid midpoint if `None`.",
    )
    sigma_hat: int = Field(
        default=23,
        ge=1,
        description="""Interpolation points used when E4 drives the
        selection. Default is 23.""",
    )
    e3_seed: int = Field(
        default=0,
        ge=0,
        description="Node seed used when E3 drives the selection.",
    )


def _affine_terms(spec: Union[Diffusion1DSpec, SyntheticComplexSpec]) -> int:
    if isinstance(spec, Diffusion1DSpec):
        return 2
    return spec.d


class ExperimentConfig(BaseModel):
    """Full definition of an experiment.

    Attributes
    -----------------------
    problem : ProblemSpec
        Truth problem definition.
    precision : PrecisionKind
        Scalar format of the offline/online computations. Default is double.
    greedy : GreedyConfig
        Greedy parameters.
    estimators : list[EstimatorKind]
        Estimators evaluated in the sweep. Default is all four.
    sigma_hat : int
        Number of EIM interpolation points for E4. Default is 23.
    eim_variant : EimVariant
        EIM variant for E4. Default is stabilized.
    eim_tol : Optional[float]
        Residual threshold stopping the EIM early. Default is `None`.
    e3_seed : int
        Seed for the E3 node draw. Default is 0.
    xi : Optional[float]
        Normalized residual of perturbed snapshots, no perturbation if
        `None`. Default is `None`.
    perturb_seed : int
        Seed for perturbation directions. Default is 0.
    output_dir : Path
        Directory receiving output files. Default is "out".
    bench_sizes : list[int]
        Truth sizes of the online benchmark. Default is [200, 2000].
    bench_calls : int
        Calls per timing median. Default is 1000.
    truth_error : bool
        Whether to compute the true error column. Default is `True`.
    goal_oriented : bool
        Whether to build the dual basis and write goal-oriented columns.
        Default is `False`.
    """

    problem: ProblemSpec = Field(
        default_factory=Diffusion1DSpec,
        description="Truth problem definition.",
    )
    precision: PrecisionKind = Field(
        default=PrecisionKind.DOUBLE,
        description="Scalar format. Default is double.",
    )
    greedy: GreedyConfig = Field(
        default_factory=GreedyConfig, description="Greedy parameters."
    )
    estimators: list[EstimatorKind] = Field(
        default_factory=lambda: list(EstimatorKind),
        description="Estimators evaluated in the sweep. Default is all four.",
    )
    sigma_hat: int = Field(
        default=23,
        ge=1,
        description="Number of EIM interpolation points. Default is 23.",
    )
    eim_variant: EimVariant = Field(
        default=EimVariant.STABILIZED,
        description="EIM variant for E4. Default is stabilized.",
    )
    eim_tol: Optional[float] = Field(
        default=None,
        gt=0.0,
        description="Residual threshold stopping the EIM early.",
    )
    e3_seed: int = Field(
        default=0, ge=0, description="Seed for the E3 node draw."
    )
    xi: Optional[float] = Field(
        default=None,
        gt=0.0,
        lt=1.0,
        description="""Normalized residual of perturbed snapshots, no
        perturbation if `None`.""",
    )
    perturb_seed: int = Field(
        default=0, ge=0, description="Seed for perturbation directions."
    )
    output_dir: Path = Field(
        default=Path("out"), description="Directory receiving output files."
    )
    bench_sizes: list[int] = Field(
        default_factory=lambda: [200, 2000],
        description="Truth sizes of the online benchmark.",
    )
    bench_calls: int = Field(
        default=1000, ge=1, description="Calls per timing median."
    )
    truth_error: bool = Field(
        default=True,
        description="Whether to compute the true error column.",
    )
    goal_oriented: bool = Field(
        default=False,
        description="""Whether to build the dual basis and write
        goal-oriented columns.""",
    )

    @model_validator(mode="after")
    def _check_prerequisites(self) -> "ExperimentConfig":
        p = _affine_terms(self.problem) * self.greedy.nmax
        sigma = 1 + 2 * p + p * p

        if (
            EstimatorKind.E3 in self.estimators
            and self.problem.trial_points < sigma
        ):
            raise ValueError(
                f"E3 needs at least sigma={sigma} trial points, "
                f"got {self.problem.trial_points}"
            )
        if len(set(self.bench_sizes)) < 2:
            raise ValueError("bench_sizes needs at least 2 distinct sizes")
        if self.goal_oriented and not self.problem.output:
            raise ValueError("goal_oriented needs problem.output = true")

        return self


class BoundReport(BaseModel):
    """Error bound evaluated at one parameter.

    Attributes
    -----------------------
    mu : float
        Parameter value.
    value : float
        Bound value, beta^-1 sqrt(max(raw_radicand, 0)).
    method : EstimatorKind
        Evaluation procedure.
    raw_radicand : float
        Squared residual norm before clamping.
    precision : PrecisionKind
        Scalar format used.
    """

    mu: float = Field(description="Parameter value.")
    value: float = Field(ge=0.0, description="Bound value.")
    method: EstimatorKind = Field(description="Evaluation procedure.")
    raw_radicand: float = Field(
        description="Squared residual norm before clamping."
    )
    precision: PrecisionKind = Field(description="Scalar format used.")


class GoalReport(BoundReport):
    """Goal-oriented bound with its corrected output.

    `raw_radicand` holds the primal radicand, `dual_radicand` the dual one.

    Attributes
    -----------------------
    dual_radicand : float
        Squared dual residual norm before clamping.
    output_real : float
        Real part of the corrected output.
    output_imag : float
        Imaginary part of the corrected output.
    """

    dual_radicand: float = Field(
        description="Squared dual residual norm before clamping."
    )
    output_real: float = Field(description="Real part of corrected output.")
    output_imag: float = Field(
        default=0.0, description="Imaginary part of corrected output."
    )

    @property
    def corrected_output(self) -> complex:
        """Corrected output as a complex number."""
        return complex(self.output_real, self.output_imag)


class EimStep(BaseModel):
    """One row of the EIM diagnostics table.

    Attributes
    -----------------------
    k : int
        Number of interpolation points.
    det_real : float
        Real part of det(B^k).
    det_imag : float
        Imaginary part of det(B^k).
    cond : float
        Spectral condition number of B^k.
    residual : float
        Magnitude of the residual at the point selected at step k.
    """

    k: int = Field(ge=1, description="Number of interpolation points.")
    det_real: float = Field(description="Real part of det(B^k).")
    det_imag: float = Field(
        default=0.0, description="Imaginary part of det(B^k)."
    )
    cond: float = Field(description="Spectral condition number of B^k.")
    residual: float = Field(
        description="Residual magnitude at the selected point."
    )


class FloorsMeta(BaseModel):
    """Predicted and measured validity floors of a sweep.

    Measured floors are maximal unclamped magnitudes sqrt(|radicand|)/beta
    over the selected parameters, so negative radicands count.

    Attributes
    -----------------------
    predicted : dict[str, float]
        Round-off thresholds by estimator.
    measured : dict[str, float]
        Floors measured on the sweep by estimator.
    """

    predicted: dict[str, float] = Field(
        description="Round-off thresholds by estimator."
    )
    measured: dict[str, float] = Field(
        description="Floors measured on the sweep by estimator."
    )


class E3Meta(BaseModel):
    """Offline data of E3 recorded with a sweep."""

    enabled: bool = Field(description="Whether T could be factorized.")
    reason: str = Field(description="Why E3 is disabled, empty otherwise.")
    sigma_distinct: int = Field(description="Independent rows kept.")
    cond_estimate: float = Field(description="Condition number of T.")
    node_indices: list[int] = Field(description="Grid positions of nodes.")


class EimMeta(BaseModel):
    """Interpolation behind E4 recorded with a sweep."""

    variant: EimVariant = Field(description="EIM variant.")
    sigma_hat: int = Field(description="Points selected.")
    sigma_hat_requested: int = Field(description="Points requested.")
    breakdown_step: Optional[int] = Field(
        default=None, description="Size at which B broke down, if it did."
    )
    p_indices: list[int] = Field(description="Selected rows.")
    mus: list[float] = Field(description="Interpolation parameters.")


class DualMeta(BaseModel):
    """Dual basis recorded with a goal-oriented sweep."""

    n_hat: int = Field(description="Dual basis size.")
    selected: list[float] = Field(description="Dual selected parameters.")
    delta: float = Field(description="Dual norm of the output functional.")
    output_norm: Optional[float] = Field(
        default=None, description="Dual norm of the output."
    )


class SweepMeta(BaseModel):
    """Content of meta.json, enough to re-run a sweep.

    Attributes
    -----------------------
    meta_version : int
        Layout version of this document.
    problem : ProblemSpec
        Truth problem definition.
    n, d, n_hat, sigma : int
        Truth size, affine terms, basis size and length of X.
    sigma_hat : Optional[int]
        Interpolation points of E4, `None` without E4.
    delta : float
        Dual norm of the right-hand side.
    beta_min : float
        Minimum stability lower bound over the trial grid.
    precision : PrecisionKind
        Scalar format.
    eps : float
        Unit roundoff used for the predicted floors.
    xi : Optional[float]
        Normalized residual of perturbed snapshots.
    floors : FloorsMeta
        Predicted and measured floors.
    perturbation_plateau : Optional[float]
        Expected plateau delta xi / beta_min of perturbed runs.
    """

    meta_version: int = Field(description="Layout version.")
    problem: ProblemSpec = Field(description="Truth problem definition.")
    n: int = Field(description="Truth dimension.")
    d: int = Field(description="Number of affine terms.")
    n_hat: int = Field(description="Basis size.")
    sigma: int = Field(description="Length of the monomial vector X.")
    sigma_hat: Optional[int] = Field(
        default=None, description="Interpolation points of E4."
    )
    delta: float = Field(description="Dual norm of the right-hand side.")
    beta_min: float = Field(description="Minimum stability lower bound.")
    precision: PrecisionKind = Field(description="Scalar format.")
    eps: float = Field(description="Unit roundoff of the format.")
    xi: Optional[float] = Field(
        default=None, description="Normalized residual of snapshots."
    )
    seeds: dict[str, Optional[int]] = Field(description="Random seeds.")
    selected: list[float] = Field(description="Selected parameters.")
    max_estimates: list[float] = Field(description="Greedy maxima.")
    greedy: GreedyConfig = Field(description="Greedy parameters.")
    estimators: list[EstimatorKind] = Field(description="Swept estimators.")
    e3: Optional[E3Meta] = Field(default=None, description="E3 offline data.")
    eim: Optional[EimMeta] = Field(
        default=None, description="Interpolation behind E4."
    )
    cond_norm: str = Field(
        default="2", description="Norm of condition numbers."
    )
    riesz_solves: dict[str, int] = Field(
        description="Riesz solves per estimator offline stage."
    )
    floors: FloorsMeta = Field(description="Predicted and measured floors.")
    perturbation_plateau: Optional[float] = Field(
        default=None, description="Expected plateau of perturbed runs."
    )
    dual: Optional[DualMeta] = Field(
        default=None, description="Dual basis of goal-oriented runs."
    )


class EimVariantMeta(BaseModel):
    """Outcome of one EIM variant in eim_meta.json."""

    sigma_hat: int = Field(description="Points selected.")
    breakdown_step: Optional[int] = Field(
        default=None, description="Size at which B broke down, if it did."
    )
    det_real: Optional[float] = Field(
        default=None, description="Real part of the final det(B)."
    )
    det_imag: Optional[float] = Field(
        default=None, description="Imaginary part of the final det(B)."
    )
    cond: Optional[float] = Field(
        default=None, description="Final condition number of B."
    )


class EimDiagMeta(BaseModel):
    """Content of eim_meta.json."""

    meta_version: int = Field(description="Layout version.")
    sigma: int = Field(description="Length of the monomial vector X.")
    sigma_hat_requested: int = Field(description="Points requested.")
    n_hat: int = Field(description="Basis size.")
    cond_norm: str = Field(
        default="2", description="Norm of condition numbers."
    )
    variants: dict[str, EimVariantMeta] = Field(
        description="Outcome by variant."
    )


def load_problem_spec(path: Union[str, Path]):
    """Load a problem definition from a JSON file.

    Parameters
    -----------------------
    path : str or Path
        JSON document with a "problem" discriminator field.

    Returns
    -----------------------
    Diffusion1DSpec or SyntheticComplexSpec
        The validated definition.

    Raises
    -----------------------
    FileNotFoundError
        If file not found.
    pydantic.ValidationError
        If the document is invalid.
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError as err:
        raise FileNotFoundError(f"{path} not found") from err

    return TypeAdapter(ProblemSpec).validate_json(text)


def load_experiment_config(path: Union[str, Path]) -> ExperimentConfig:
    """Load an experiment definition from a JSON file.

    Raises
    -----------------------
    FileNotFoundError
        If file not found.
    pydantic.ValidationError
        If the document is invalid.
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError as err:
        raise FileNotFoundError(f"{path} not found") from err

    return ExperimentConfig.model_validate_json(text)
