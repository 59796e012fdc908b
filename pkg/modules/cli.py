"""CLI subcommands running experiments.

Every subcommand accepts --config (JSON ExperimentConfig), --out,
--precision and --seed, which override the configuration. Failures are
reported as a JSON object {"error": <class>, "message": <text>} on stdout,
with exit code 1.

Functions
-----------------------
error_report()
    Convert exceptions into a JSON error report and exit code 1.
build_config()
    Load a configuration and apply command-line overrides.
run()
    Greedy build, bound sweep and output files.
eim_diag()
    Diagnostics of all EIM variants.
bench()
    Online timing benchmark.
perturb()
    Sweep with perturbed snapshots.
solution()
    Export truth and exact solution of the 1D problem.
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
from contextlib import contextmanager
from pathlib import Path
from typing import Optional

import click

from rich.console import Console
from rich.table import Table

from modules.experiments import bench_online
from modules.experiments import export_solution_csv
from modules.experiments import run_eim_diag
from modules.experiments import run_perturb
from modules.experiments import run_sweep
from modules.precision import PrecisionKind
from modules.schemas import ExperimentConfig
from modules.schemas import SyntheticComplexSpec
from modules.schemas import load_experiment_config
from modules.truth import build_problem


console = Console()
# Emphasis formatting - rich
em = "[bold green]"


@contextmanager
def error_report():
    """Convert exceptions into a JSON error report and exit code 1.

    Raises
    -----------------------
    click.exceptions.Exit
        With code 1, after printing the report.
    """
    try:
        yield
    except Exception as err:  # pylint: disable=broad-exception-caught
        report = {"error": type(err).__name__, "message": str(err)}
        click.echo(json.dumps(report))
        raise click.exceptions.Exit(1) from err


def build_config(
    config: Optional[str],
    out: Optional[str],
    precision: Optional[str],
    seed: Optional[int],
) -> ExperimentConfig:
    """Load a configuration and apply command-line overrides.

    Parameters
    -----------------------
    config : Optional[str]
        Path of a JSON ExperimentConfig, defaults if `None`.
    out : Optional[str]
        Output directory override.
    precision : Optional[str]
        Precision override.
    seed : Optional[int]
        Sets the E3, perturbation and synthetic problem seeds.

    Returns
    -----------------------
    ExperimentConfig
        The validated configuration.
    """
    if config is None:
        res = ExperimentConfig()
    else:
        res = load_experiment_config(config)
    data = res.model_dump()

    if out is not None:
        data["output_dir"] = Path(out)
    if precision is not None:
        data["precision"] = PrecisionKind(precision)
    if seed is not None:
        data["e3_seed"] = seed
        data["perturb_seed"] = seed
        data["greedy"]["e3_seed"] = seed
        if isinstance(res.problem, SyntheticComplexSpec):
            data["problem"]["seed"] = seed

    return ExperimentConfig.model_validate(data)


def common_options(func):
    """Attach the shared --config/--out/--precision/--seed options."""
    options = [
        click.option(
            "--config",
            "config_path",
            type=click.Path(dir_okay=False),
            default=None,
            help="JSON experiment configuration.",
        ),
        click.option("--out", default=None, help="Output directory."),
        click.option(
            "--precision",
            type=click.Choice([p.value for p in PrecisionKind]),
            default=None,
            help="Scalar format.",
        ),
        click.option(
            "--seed",
            type=click.IntRange(min=0),
            default=None,
            help="Seed of every random draw.",
        ),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def _fmt(value) -> str:
    return "-" if value is None else f"{value:.3e}"


def _print_sweep_summary(meta_path: Path):
    with open(meta_path, encoding="utf-8") as f:
        meta = json.load(f)

    console.print(
        f"{em}N[/] :: {meta['n']}    {em}Nhat[/] :: {meta['n_hat']}    "
        f"{em}sigma[/] :: {meta['sigma']}    "
        f"{em}precision[/] :: {meta['precision']}"
    )

    table = Table()
    table.add_column(f"{em}Method[/]")
    table.add_column(f"{em}Measured floor[/]")
    table.add_column(f"{em}Predicted floor[/]")

    floors = meta["floors"]
    names = sorted(set(floors["measured"]) | set(floors["predicted"]))
    for name in names:
        table.add_row(
            name,
            _fmt(floors["measured"].get(name)),
            _fmt(floors["predicted"].get(name)),
        )

    console.print(table)


@click.command()
@common_options
def run(config_path, out, precision, seed):
    """Greedy build, bound sweep and output files."""
    with error_report():
        config = build_config(config_path, out, precision, seed)
        files = run_sweep(config)
        _print_sweep_summary(files["meta"])


@click.command(name="eim-diag")
@common_options
def eim_diag(config_path, out, precision, seed):
    """Diagnostics of all EIM variants."""
    with error_report():
        config = build_config(config_path, out, precision, seed)
        states = run_eim_diag(config)

        table = Table()
        table.add_column(f"{em}Variant[/]")
        table.add_column(f"{em}Points[/]")
        table.add_column(f"{em}Breakdown[/]")
        table.add_column(f"{em}|det - 1|[/]")
        table.add_column(f"{em}cond[/]")

        for variant, state in states.items():
            det_err = cond = None
            if state.history:
                last = state.history[-1]
                det_err = abs(complex(last.det_real, last.det_imag) - 1.0)
                cond = last.cond
            breakdown = state.breakdown_step
            table.add_row(
                variant.value,
                str(state.sigma_hat),
                "-" if breakdown is None else str(breakdown),
                _fmt(det_err),
                _fmt(cond),
            )

        console.print(table)


@click.command()
@common_options
def bench(config_path, out, precision, seed):
    """Online timing benchmark."""
    with error_report():
        config = build_config(config_path, out, precision, seed)
        records = bench_online(config)

        table = Table()
        table.add_column(f"{em}N[/]")
        table.add_column(f"{em}Method[/]")
        table.add_column(f"{em}Median (s)[/]")
        for r in records:
            table.add_row(str(r["n"]), r["method"], _fmt(r["median_seconds"]))

        console.print(table)


@click.command()
@common_options
@click.option(
    "--xi",
    type=click.FloatRange(min=0.0, max=1.0, min_open=True, max_open=True),
    default=1e-6,
    show_default=True,
    help="Normalized residual of the perturbed snapshots.",
)
def perturb(config_path, out, precision, seed, xi):
    """Sweep with perturbed snapshots."""
    with error_report():
        config = build_config(config_path, out, precision, seed)
        files = run_perturb(config, xi)
        _print_sweep_summary(files["meta"])


@click.command()
@common_options
@click.option("--mu", type=float, required=True, help="Parameter value.")
def solution(config_path, out, precision, seed, mu):
    """Export truth and exact solution of the 1D problem."""
    with error_report():
        config = build_config(config_path, out, precision, seed)
        config.output_dir.mkdir(parents=True, exist_ok=True)
        path = export_solution_csv(
            config.output_dir / "solution.csv",
            build_problem(config.problem),
            mu,
        )
        console.print(f"{em}Written[/] :: {path}")
