"""
Configuration commands.
"""
import json

import typer
from rich.table import Table

from regflow.config.settings import get_settings
from regflow.utils.console import console

app = typer.Typer(help="Inspect effective settings")


@app.command()
def show(
    as_json: bool = typer.Option(False, "--json", help="Print settings as JSON"),
):
    """Show effective settings (defaults, .env.regflow and REGFLOW_* variables)."""
    settings = get_settings()
    values = settings.model_dump(mode="json")

    if as_json:
        print(json.dumps(values, indent=2))
        return

    table = Table(title="regflow settings")
    table.add_column("Setting", style="cyan", no_wrap=True)
    table.add_column("Value", style="magenta")
    table.add_column("Environment variable", style="dim")
    for name, value in values.items():
        table.add_row(name, str(value), f"REGFLOW_{name.upper()}")
    console.print(table)
