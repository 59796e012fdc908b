"""Main entrypoint."""

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

import click

from rich.console import Console
from rich.logging import RichHandler

from modules import cli


__version__ = "1.0.0"

_LEVELS = [logging.WARNING, logging.INFO, logging.DEBUG]


def configure_logging(verbosity: int):
    """Route library logs to stderr through rich, level from -v count."""
    level = _LEVELS[min(verbosity, len(_LEVELS) - 1)]
    logging.basicConfig(
        level=level,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=Console(stderr=True))],
        force=True,
    )


@click.group()
@click.version_option(__version__, prog_name="rbcert")
@click.option("-v", "--verbose", count=True, help="-v info, -vv debug.")
def rbcert(verbose):
    """Certified reduced-basis error bounds: sweeps, EIM, benchmarks."""
    configure_logging(verbose)


rbcert.add_command(cli.run)
rbcert.add_command(cli.eim_diag)
rbcert.add_command(cli.bench)
rbcert.add_command(cli.perturb)
rbcert.add_command(cli.solution)


def main():
    """Execute main entrypoint."""
    rbcert()  # pylint: disable=no-value-for-parameter


if __name__ == "__main__":
    main()
