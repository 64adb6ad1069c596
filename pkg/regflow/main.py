"""
Main CLI entry point.

Registers all command groups and provides the main Typer app.
"""
import typer
from typing import Optional

from regflow import __version__
from regflow.commands import bench, config, network
from regflow.config.settings import get_settings
from regflow.utils.console import console

# Create main Typer app
app = typer.Typer(
    name="regflow",
    help="Regularized map equation community detection",
    no_args_is_help=True,
)

# Register command groups
app.add_typer(network.app, name="network", help="Community detection and network utilities")
app.add_typer(bench.app, name="bench", help="Experiment sweeps and sampling")
app.add_typer(config.app, name="config", help="Inspect effective settings")


def version_callback(value: bool):
    """Show version and exit."""
    if value:
        console.print(f"regflow version {__version__}")
        raise typer.Exit()


@app.callback()
def main(
    version: Optional[bool] = typer.Option(
        None,
        "--version",
        "-v",
        callback=version_callback,
        is_eager=True,
        help="Show version and exit",
    ),
):
    """
    regflow - two-level community detection with regularized flows.

    Detects modules by minimizing the map equation on flows smoothed with an
    empirical Bayes prior, and runs undersampling experiments.

    Examples:
        regflow network detect links.txt --regularized
        regflow network detect links.txt --metadata labels.txt
        regflow bench sweep sweep.env
    """
    if not get_settings().color_enabled:
        console.no_color = True


if __name__ == "__main__":
    app()
