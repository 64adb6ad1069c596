"""
Network commands.

Community detection on a network file, planted network generation,
partition comparison and graph statistics.
"""
import json
from pathlib import Path
from typing import Optional

import numpy as np
import typer
from pydantic import ValidationError as PydanticValidationError
from rich.table import Table

from regflow.config.settings import detect_config, get_settings
from regflow.models.schemas import DetectSummary, FlowModel, RunConfig
from regflow.services.bench import (
    cross_validate_detect,
    detect as run_detection,
    generate_planted,
    remove_multiedges,
    split_two_fold,
)
from regflow.services.graph import (
    MultiGraph,
    read_annotated_graph,
    write_graph,
    write_labels,
)
from regflow.services.mapeq import read_partition, write_partition
from regflow.services.metrics import ami
from regflow.utils.console import console, print_error, print_run_context, print_success, print_warning
from regflow.utils.errors import MissingLabelsError, RegFlowError

app = typer.Typer(help="Community detection and network utilities")


def _validation_message(e: PydanticValidationError) -> str:
    return "; ".join(err["msg"].removeprefix("Value error, ") for err in e.errors())


def _module_table(module_of: np.ndarray, flows: np.ndarray, limit: int = 10) -> Table:
    sizes = np.bincount(module_of)
    module_flow = np.bincount(module_of, weights=flows, minlength=sizes.size)
    order = np.argsort(-module_flow, kind="stable")[:limit]

    table = Table(title="Largest modules by flow")
    table.add_column("Module", justify="right", style="cyan", no_wrap=True)
    table.add_column("Nodes", justify="right", style="magenta")
    table.add_column("Flow", justify="right", style="yellow")
    for m in order:
        table.add_row(str(int(m)), str(int(sizes[m])), f"{module_flow[m]:.4f}")
    return table


@app.command()
def detect(
    input_path: Path = typer.Argument(..., exists=True, dir_okay=False, help="Edge list or Pajek (.net) file"),
    directed: Optional[bool] = typer.Option(
        None,
        "--directed/--undirected",
        help="Treat links as arcs or edges (default: directed; Pajek files decide themselves)",
    ),
    prior: Optional[FlowModel] = typer.Option(
        None,
        "--prior",
        "-p",
        case_sensitive=False,
        help="Flow model: none, uniform, bipartite, metadata, teleport",
    ),
    regularized: bool = typer.Option(False, "--regularized", "-r", help="Use the uniform empirical Bayes prior"),
    metadata: Optional[Path] = typer.Option(
        None, "--metadata", "-m", exists=True, dir_okay=False, help="Node metadata file (node-id label)"
    ),
    bipartite: Optional[Path] = typer.Option(
        None, "--bipartite", "-b", exists=True, dir_okay=False, help="Node type file (node-id A|B)"
    ),
    teleport: Optional[float] = typer.Option(
        None, "--teleport", help="Recorded teleportation with probability ALPHA"
    ),
    remove_fraction: float = typer.Option(
        0.0, "--remove-fraction", help="Remove this fraction of multiedges before detection"
    ),
    xval: bool = typer.Option(False, "--xval", help="Two-fold cross-validation of the detected partition"),
    seed: Optional[int] = typer.Option(None, "--seed", "-s", help="Random seed"),
    trials: Optional[int] = typer.Option(None, "--trials", "-t", help="Independent search trials"),
    prior_scale: Optional[float] = typer.Option(
        None, "--prior-scale", help="Multiplier on the prior's connectivity parameters"
    ),
    tolerance: Optional[float] = typer.Option(
        None, "--tolerance", help="L1 convergence tolerance of the power iteration"
    ),
    max_iter: Optional[int] = typer.Option(None, "--max-iter", help="Maximum number of power iterations"),
    weight_model: str = typer.Option("ccm", "--weight-model", help="Prior link weights: ccm or unit"),
    output_dir: Optional[Path] = typer.Option(None, "--output-dir", "-o", help="Directory for result files"),
    as_json: bool = typer.Option(False, "--json", help="Print the summary as JSON"),
):
    """Detect two-level communities and write the partition and a JSON summary."""
    settings = get_settings()
    try:
        model = FlowModel.from_flags(
            prior=prior,
            regularized=regularized,
            metadata=metadata is not None,
            bipartite=bipartite is not None,
            teleport=teleport is not None,
        )
        run = RunConfig(
            input_path=input_path,
            directed=True if directed is None else directed,
            model=model,
            teleport_alpha=settings.teleport_alpha if teleport is None else teleport,
            metadata_path=metadata,
            types_path=bipartite,
            seed=settings.seed if seed is None else seed,
            trials=settings.trials if trials is None else trials,
            tolerance=settings.tolerance if tolerance is None else tolerance,
            max_iter=settings.max_iter if max_iter is None else max_iter,
            prior_scale=settings.prior_scale if prior_scale is None else prior_scale,
            weight_model=weight_model,
            remove_fraction=remove_fraction,
            xval=xval,
            output_dir=settings.output_dir if output_dir is None else output_dir,
        )
    except (PydanticValidationError, ValueError) as e:
        message = _validation_message(e) if isinstance(e, PydanticValidationError) else str(e)
        print_error(f"Invalid configuration: {message}")
        raise typer.Exit(2)

    cfg = detect_config(
        settings,
        seed=run.seed,
        trials=run.trials,
        teleport_alpha=run.teleport_alpha,
        tolerance=run.tolerance,
        max_iter=run.max_iter,
        prior_scale=run.prior_scale,
        weight_model=run.weight_model,
    )
    effective = {**run.model_dump(mode="json"), "search": cfg.search.model_dump(mode="json")}

    if not as_json:
        print_run_context(input_path.name, effective, model.value)

    try:
        g = read_annotated_graph(input_path, directed, run.metadata_path, run.types_path)
        if run.remove_fraction > 0:
            g = remove_multiedges(g, run.remove_fraction, np.random.SeedSequence([run.seed]))

        if run.xval:
            train, test = split_two_fold(g, np.random.SeedSequence([run.seed, 1]))
            result, validation = cross_validate_detect(train, test, model, cfg)
        else:
            result, validation = run_detection(g, model, cfg), None

        flows = result.flows
        summary = DetectSummary(
            model=model,
            n_nodes=g.n_nodes,
            n_arcs=g.n_arcs,
            n_modules=result.n_modules,
            codelength=result.codelength,
            one_level_codelength=result.one_level_codelength,
            savings=result.savings,
            flow_residual=flows.residual,
            flow_iterations=flows.iterations,
            alpha_min=float(flows.alpha.min()) if flows.n_nodes else 0.0,
            alpha_mean=float(flows.alpha.mean()) if flows.n_nodes else 0.0,
            alpha_max=float(flows.alpha.max()) if flows.n_nodes else 0.0,
            test_codelength=validation.test_codelength if validation else None,
            test_savings=validation.savings if validation else None,
            config=effective,
        )

        out_dir = Path(run.output_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        partition_path = out_dir / f"{input_path.stem}.partition.txt"
        summary_path = out_dir / f"{input_path.stem}.summary.json"
        with open(partition_path, "w", encoding="utf-8", newline="\n") as f:
            write_partition(result.partition, g.names, f)
        with open(summary_path, "w", encoding="utf-8", newline="\n") as f:
            f.write(summary.model_dump_json(indent=2))
            f.write("\n")

    except RegFlowError as e:
        print_error(str(e))
        raise typer.Exit(e.exit_code)
    except OSError as e:
        print_error(f"Error: {e}")
        raise typer.Exit(1)

    if as_json:
        print(summary.model_dump_json(indent=2))
        return

    print_success(f"Found {summary.n_modules} modules in {g.n_nodes} nodes")
    console.print(f"  Codelength: {summary.codelength:.6f} bits")
    console.print(f"  One-module codelength: {summary.one_level_codelength:.6f} bits")
    console.print(f"  Savings: {summary.savings:.4%}")
    if summary.test_codelength is not None:
        console.print(f"  Test codelength: {summary.test_codelength:.6f} bits")
        console.print(f"  Test savings: {summary.test_savings:.4%}")
        if summary.test_savings < 0:
            print_warning("Negative test savings: the partition does not generalize to held-out links")
    console.print(f"  α range: {summary.alpha_min:.4f} .. {summary.alpha_max:.4f}")
    console.print(_module_table(result.partition.module_of, flows.visit_rate))
    console.print(f"\nPartition: {partition_path}")
    console.print(f"Summary:   {summary_path}")


@app.command()
def generate(
    output: Path = typer.Argument(..., dir_okay=False, help="Network to write (.net for Pajek)"),
    labels: Optional[Path] = typer.Option(
        None, "--labels", "-l", dir_okay=False, help="Planted labels file (default: <output>.labels)"
    ),
    nodes: int = typer.Option(1000, "--nodes", "-n", help="Number of nodes"),
    degree: float = typer.Option(7.0, "--degree", "-k", help="Average out-degree"),
    mixing: float = typer.Option(0.4, "--mixing", help="Fraction of arcs leaving the community"),
    modules: int = typer.Option(31, "--modules", "-M", help="Number of planted communities"),
    mean_weight: float = typer.Option(4.9, "--mean-weight", "-w", help="Average arc weight"),
    degree_exponent: float = typer.Option(2.0, "--degree-exponent", help="Power-law exponent of the out-degrees"),
    max_degree: int = typer.Option(50, "--max-degree", help="Largest out-degree"),
    strength_exponent: float = typer.Option(
        1.5, "--strength-exponent", help="Node strength grows like degree to this power"
    ),
    poisson: bool = typer.Option(False, "--poisson-degrees", help="Poisson out-degrees instead of a power law"),
    seed: Optional[int] = typer.Option(None, "--seed", "-s", help="Random seed"),
):
    """Generate a directed planted-partition network and its planted labels."""
    seed = get_settings().seed if seed is None else seed
    labels = labels or output.with_suffix(".labels")
    try:
        g, planted = generate_planted(
            nodes,
            degree,
            mixing,
            modules,
            mean_weight,
            seed,
            degree_exponent=None if poisson else degree_exponent,
            max_degree=max_degree,
            strength_exponent=strength_exponent,
        )
        write_graph(g, output)
        with open(labels, "w", encoding="utf-8", newline="\n") as f:
            write_labels(g.names, planted, f)
    except RegFlowError as e:
        print_error(str(e))
        raise typer.Exit(e.exit_code)

    print_success(f"Wrote {g.n_nodes} nodes and {g.n_arcs} arcs to {output}")
    console.print(f"  Planted labels: {labels}")
    console.print(f"  Mean out-degree: {g.k_out.mean():.3f}")
    console.print(f"  Mean weight: {g.weight.mean():.3f}")


@app.command()
def compare(
    first: Path = typer.Argument(..., exists=True, dir_okay=False, help="Partition or label file"),
    second: Path = typer.Argument(..., exists=True, dir_okay=False, help="Partition or label file"),
    average: Optional[str] = typer.Option(
        None, "--average", "-a", help="AMI normalization: arithmetic, geometric, min, max"
    ),
):
    """Adjusted mutual information between two partitions of the same nodes."""
    average = average or get_settings().ami_average
    try:
        with open(first, "r", encoding="utf-8") as f:
            a = read_partition(f)
        with open(second, "r", encoding="utf-8") as f:
            b = read_partition(f)
        missing = [name for name in a if name not in b]
        if missing or len(a) != len(b):
            raise MissingLabelsError(missing or [name for name in b if name not in a], "a module in both files")
        names = list(a)
        score = ami([a[name] for name in names], [b[name] for name in names], average)
    except RegFlowError as e:
        print_error(str(e))
        raise typer.Exit(e.exit_code)

    console.print(f"AMI ({average}): [bold]{score:.6f}[/bold]")
    console.print(f"  Nodes: {len(names)}")
    console.print(f"  Modules: {len(set(a.values()))} vs {len(set(b.values()))}")


def _info_table(g: MultiGraph) -> Table:
    table = Table(title="Network")
    table.add_column("Statistic", style="cyan")
    table.add_column("Value", justify="right", style="magenta")
    for key, value in g.describe().items():
        shown = f"{value:.4f}" if isinstance(value, float) else str(value)
        table.add_row(key.replace("_", " "), shown)
    return table


@app.command()
def info(
    input_path: Path = typer.Argument(..., exists=True, dir_okay=False, help="Edge list or Pajek (.net) file"),
    directed: Optional[bool] = typer.Option(None, "--directed/--undirected", help="Treat links as arcs or edges"),
    metadata: Optional[Path] = typer.Option(None, "--metadata", "-m", exists=True, dir_okay=False),
    bipartite: Optional[Path] = typer.Option(None, "--bipartite", "-b", exists=True, dir_okay=False),
    as_json: bool = typer.Option(False, "--json", help="Print statistics as JSON"),
):
    """Show network statistics."""
    try:
        g = read_annotated_graph(input_path, directed, metadata, bipartite)
    except RegFlowError as e:
        print_error(str(e))
        raise typer.Exit(e.exit_code)

    if as_json:
        print(json.dumps(g.describe(), indent=2))
        return
    console.print(_info_table(g))
