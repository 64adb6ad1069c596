"""
Experiment commands.

Sweeps over removal fractions and metadata noise, single cross-validations
and thinned network samples.
"""
from pathlib import Path
from typing import Optional

import numpy as np
import typer
from rich.progress import BarColumn, MofNCompleteColumn, Progress, TextColumn, TimeElapsedColumn
from rich.table import Table

from regflow.config.settings import detect_config, get_settings
from regflow.models.schemas import FlowModel
from regflow.services.bench import (
    cross_validate_folds,
    load_sweep_spec,
    remove_multiedges,
    run_sweep,
    split_two_fold,
    summarize,
    summary_path,
)
from regflow.services.graph import read_annotated_graph, write_graph
from regflow.utils.console import console, print_error, print_info, print_run_context, print_success, print_warning
from regflow.utils.errors import RegFlowError

app = typer.Typer(help="Experiment sweeps and sampling")


def _fmt(value: Optional[float], digits: int = 4) -> str:
    return "" if value is None else f"{value:.{digits}f}"


@app.command()
def sweep(
    spec_file: Path = typer.Argument(..., exists=True, dir_okay=False, help="Sweep spec (.json or key=value)"),
    output: Optional[Path] = typer.Option(None, "--output", "-o", help="CSV path (overrides the spec)"),
    workers: Optional[int] = typer.Option(None, "--workers", "-w", help="Worker processes"),
    quiet: bool = typer.Option(False, "--quiet", "-q", help="No progress bar or summary table"),
):
    """Run a sweep and write one CSV row per (method, r, mu, repetition)."""
    settings = get_settings()
    try:
        spec = load_sweep_spec(spec_file)
    except RegFlowError as e:
        print_error(str(e))
        raise typer.Exit(e.exit_code)

    updates = {}
    if output is not None:
        updates["output"] = output
    if workers is not None:
        updates["workers"] = workers
    if updates:
        spec = spec.model_copy(update=updates)

    total = len(spec.r_values) * len(spec.mu_values) * spec.repetitions * len(spec.methods)
    if not quiet:
        print_run_context(
            spec_file.name,
            {
                "r values": ", ".join(str(r) for r in spec.r_values),
                "mu values": ", ".join(str(mu) for mu in spec.mu_values),
                "methods": ", ".join(m.value for m in spec.methods),
                "repetitions": spec.repetitions,
                "records": total,
                "output": spec.output,
            },
        )

    cfg = detect_config(settings)
    try:
        if quiet:
            records = run_sweep(spec, cfg)
        else:
            with Progress(
                TextColumn("[progress.description]{task.description}"),
                BarColumn(),
                MofNCompleteColumn(),
                TimeElapsedColumn(),
                console=console,
            ) as progress:
                task = progress.add_task("Sweeping", total=total)
                records = run_sweep(spec, cfg, on_record=lambda _: progress.advance(task))
    except RegFlowError as e:
        print_error(str(e))
        print_info(f"Rows written so far remain in {spec.output}")
        raise typer.Exit(e.exit_code)

    print_success(f"Wrote {len(records)} records to {spec.output}")
    console.print(f"  Summary: {summary_path(spec.output)}")
    if quiet:
        return

    table = Table(title="Sweep summary (mean ± stderr)")
    table.add_column("Method", style="cyan")
    table.add_column("r", justify="right")
    table.add_column("mu", justify="right")
    table.add_column("Modules", justify="right", style="magenta")
    table.add_column("AMI", justify="right", style="green")
    table.add_column("Savings", justify="right", style="yellow")
    for row in summarize(records):
        table.add_row(
            row.method.value,
            f"{row.r:g}",
            f"{row.mu:g}",
            f"{row.n_modules_mean:.1f} ± {row.n_modules_stderr:.1f}",
            "" if row.ami_mean is None else f"{row.ami_mean:.3f} ± {row.ami_stderr:.3f}",
            "" if row.savings_mean is None else f"{row.savings_mean:.4f} ± {row.savings_stderr:.4f}",
        )
    console.print(table)


@app.command()
def xval(
    input_path: Path = typer.Argument(..., exists=True, dir_okay=False, help="Edge list or Pajek (.net) file"),
    directed: Optional[bool] = typer.Option(None, "--directed/--undirected", help="Treat links as arcs or edges"),
    prior: Optional[FlowModel] = typer.Option(None, "--prior", "-p", case_sensitive=False, help="Flow model"),
    regularized: bool = typer.Option(False, "--regularized", "-r", help="Use the uniform empirical Bayes prior"),
    metadata: Optional[Path] = typer.Option(None, "--metadata", "-m", exists=True, dir_okay=False),
    bipartite: Optional[Path] = typer.Option(None, "--bipartite", "-b", exists=True, dir_okay=False),
    remove_fraction: float = typer.Option(0.0, "--remove-fraction", help="Thin the network before splitting"),
    seed: Optional[int] = typer.Option(None, "--seed", "-s", help="Random seed"),
    trials: Optional[int] = typer.Option(None, "--trials", "-t", help="Independent search trials"),
):
    """Split a network into two folds, detect on one and score the other."""
    settings = get_settings()
    seed = settings.seed if seed is None else seed
    try:
        model = FlowModel.from_flags(
            prior=prior,
            regularized=regularized,
            metadata=metadata is not None,
            bipartite=bipartite is not None,
        )
    except ValueError as e:
        print_error(f"Invalid configuration: {e}")
        raise typer.Exit(2)

    cfg = detect_config(settings, seed=seed, trials=trials)
    try:
        g = read_annotated_graph(input_path, directed, metadata, bipartite)
        if remove_fraction > 0:
            g = remove_multiedges(g, remove_fraction, np.random.SeedSequence([seed]))
        train, test = split_two_fold(g, np.random.SeedSequence([seed, 1]))
        result = cross_validate_folds(train, test, model, cfg)
    except RegFlowError as e:
        print_error(str(e))
        raise typer.Exit(e.exit_code)

    print_success(f"{model.value}: {result.n_modules} modules on the training fold")
    console.print(f"  Training fold multiedges: {result.fold_multiedges}")
    console.print(f"  Train codelength: {_fmt(result.train_codelength, 6)} bits")
    console.print(f"  Test codelength: {_fmt(result.test_codelength, 6)} bits")
    console.print(f"  Test one-module codelength: {_fmt(result.test_one_level_codelength, 6)} bits")
    console.print(f"  Test savings: {result.savings:.4%}")
    if result.savings < 0:
        print_warning("The training partition compresses the test fold worse than one module")


@app.command()
def sample(
    input_path: Path = typer.Argument(..., exists=True, dir_okay=False, help="Edge list or Pajek (.net) file"),
    output: Path = typer.Argument(..., dir_okay=False, help="Network to write (.net for Pajek)"),
    fraction: float = typer.Option(..., "--fraction", "-r", help="Fraction of multiedges to remove"),
    directed: Optional[bool] = typer.Option(None, "--directed/--undirected", help="Treat links as arcs or edges"),
    seed: Optional[int] = typer.Option(None, "--seed", "-s", help="Random seed"),
):
    """Write a copy of a network with a fraction of its multiedges removed."""
    seed = get_settings().seed if seed is None else seed
    try:
        g = read_annotated_graph(input_path, directed)
        thinned = remove_multiedges(g, fraction, np.random.SeedSequence([seed]))
        write_graph(thinned, output)
    except RegFlowError as e:
        print_error(str(e))
        raise typer.Exit(e.exit_code)

    before = g.describe()["total_weight"]
    after = thinned.describe()["total_weight"]
    print_success(f"Kept {after:g} of {before:g} multiedges in {output}")
    console.print(f"  Links: {thinned.describe()['links']} (was {g.describe()['links']})")
