"""
Rich console utilities for formatted output.

Provides a shared Rich console instance and helper functions.
"""
from typing import Any, Mapping, Optional

from rich.console import Console
from rich.markup import escape
from rich.panel import Panel

# Shared console instance
console = Console()


def print_success(message: str) -> None:
    """Print success message in green with checkmark."""
    console.print(f"✓ {message}", style="green")


def print_error(message: str) -> None:
    """Print error message in red with X mark."""
    console.print(f"✗ {escape(message)}", style="red")


def print_warning(message: str) -> None:
    """Print warning message in yellow."""
    console.print(f"⚠ {message}", style="yellow")


def print_info(message: str) -> None:
    """Print info message in blue."""
    console.print(f"ℹ {message}", style="blue")


def print_run_context(title: str, config: Mapping[str, Any], model: Optional[str] = None) -> None:
    """
    Print the effective run configuration as a header panel.

    Args:
        title: What is being run (e.g. the input file)
        config: Effective configuration values
        model: Optional flow model name, highlighted by kind
    """
    info_text = f"[bold cyan]Run:[/bold cyan] {title}"

    if model:
        model_styles = {
            "none": "white",
            "uniform": "green bold",
            "bipartite": "magenta bold",
            "metadata": "yellow bold",
            "teleport": "blue bold",
        }
        model_style = model_styles.get(model.lower(), "white")
        info_text += f"\n[bold]Flow model:[/bold] [{model_style}]{model}[/{model_style}]"

    for key, value in config.items():
        info_text += f"\n[dim]{key}:[/dim] {value}"

    panel = Panel(
        info_text,
        border_style="cyan",
        padding=(0, 1)
    )
    console.print(panel)
