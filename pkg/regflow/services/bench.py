"""
Experiment harness.

Planted-partition networks, multiedge removal, metadata randomization,
two-fold cross-validation and the sweep driver that writes one CSV row per
(method, r, mu, repetition).
"""
import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from itertools import repeat
from pathlib import Path
from typing import Callable, Iterator, Optional, Union

import numpy as np
from dotenv import dotenv_values
from pydantic import ValidationError as PydanticValidationError
from scipy import optimize as sp_optimize

from regflow.models.schemas import (
    CSV_COLUMNS,
    CrossValidationResult,
    DetectConfig,
    ExperimentRecord,
    FlowModel,
    SummaryRow,
    SweepSpec,
)
from regflow.services.flow import FlowField, compute_flows
from regflow.services.graph import MultiGraph, attach_metadata, read_graph, read_labels
from regflow.services.mapeq import Partition, codelength, codelength_savings
from regflow.services.metrics import ami
from regflow.services.prior import WeightModel
from regflow.services.search import one_level_partition, optimize
from regflow.utils.errors import ConfigError, DomainError, ValidationError

SeedLike = Union[int, np.random.SeedSequence, np.random.Generator, None]


def _rng(seed: SeedLike) -> np.random.Generator:
    return np.random.default_rng(seed)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


# ============================================================================
# Generation
# ============================================================================


def _power_law_mean(lower: float, upper: float, exponent: float) -> float:
    """Mean of the density proportional to x^-exponent on [lower, upper]."""

    def moment(k: int) -> float:
        e = k + 1.0 - exponent
        if abs(e) < 1e-12:
            return math.log(upper / lower)
        return (upper**e - lower**e) / e

    return moment(1) / moment(0)


def power_law_degrees(
    n: int,
    avg_degree: float,
    exponent: float,
    max_degree: float,
    seed: SeedLike = None,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Degree sequence from a truncated continuous power law.

    The lower cutoff is solved so that the distribution on
    [lower, max_degree] has mean `avg_degree`; samples are rounded up or
    down at random with the fractional part as probability, which keeps
    the mean.

    Returns:
        (integer degrees, continuous propensities)

    Raises:
        DomainError: If exponent <= 1 or avg_degree >= max_degree
    """
    if exponent <= 1:
        raise DomainError(f"degree exponent must exceed 1, got {exponent}")
    if not 0 < avg_degree < max_degree:
        raise DomainError(f"average degree must lie in (0, {max_degree}), got {avg_degree}")
    rng = _rng(seed)
    try:
        lower = sp_optimize.brentq(
            lambda x: _power_law_mean(x, max_degree, exponent) - avg_degree, 1e-9, avg_degree
        )
    except ValueError:
        raise DomainError(
            f"no power law with exponent {exponent} below {max_degree} has mean {avg_degree}"
        ) from None
    e = 1.0 - exponent
    u = rng.random(n)
    propensity = (lower**e + u * (max_degree**e - lower**e)) ** (1.0 / e)
    base = np.floor(propensity)
    degrees = base + (rng.random(n) < propensity - base)
    return degrees.astype(np.int64), propensity


def generate_planted(
    n: int,
    avg_degree: float,
    mixing: float,
    n_modules: int,
    mean_weight: float,
    seed: SeedLike = None,
    degree_exponent: Optional[float] = 2.0,
    max_degree: int = 50,
    strength_exponent: float = 1.5,
) -> tuple[MultiGraph, np.ndarray]:
    """
    Directed planted-partition multigraph with heterogeneous degrees and strengths.

    Communities are contiguous blocks of near-equal size. Out-degrees follow
    a power law with `degree_exponent` capped at `max_degree` (Poisson when
    the exponent is None). Each node sends Binomial(d, 1 - mixing) arcs to
    distinct nodes of its own community and the rest elsewhere, choosing
    targets in proportion to their degree propensity, so in- and out-degrees
    go together. Arc weights are 1 + Poisson(c (x_i x_j)^(strength_exponent - 1))
    with c set for a mean arc weight of `mean_weight`; node strength then
    grows like degree^strength_exponent.

    Returns:
        (graph, planted community per node)

    Raises:
        DomainError: If a parameter is out of range
    """
    if n < 2:
        raise DomainError(f"planted network needs at least 2 nodes, got {n}")
    if not 1 <= n_modules <= n:
        raise DomainError(f"number of communities must lie in 1..{n}, got {n_modules}")
    if not 0 <= mixing < 1:
        raise DomainError(f"mixing must lie in [0, 1), got {mixing}")
    if avg_degree <= 0:
        raise DomainError(f"average degree must be positive, got {avg_degree}")
    if mean_weight < 1:
        raise DomainError(f"mean weight must be at least 1, got {mean_weight}")
    if strength_exponent < 1:
        raise DomainError(f"strength exponent must be at least 1, got {strength_exponent}")

    rng = _rng(seed)
    if degree_exponent is None:
        degrees = rng.poisson(avg_degree, size=n).astype(np.int64)
        propensity = np.ones(n)
    else:
        degrees, propensity = power_law_degrees(
            n, avg_degree, degree_exponent, min(max_degree, n - 1), rng
        )

    planted = (np.arange(n, dtype=np.int64) * n_modules) // n
    members = [np.flatnonzero(planted == m) for m in range(n_modules)]

    sources: list[np.ndarray] = []
    targets: list[np.ndarray] = []
    for i in range(n):
        own = members[planted[i]]
        inside = own[own != i]
        outside = np.flatnonzero(planted != planted[i])
        degree = int(degrees[i])
        inward = int(rng.binomial(degree, 1.0 - mixing))
        d_in = min(inward, inside.size)
        d_out = min(degree - inward, outside.size)
        chosen = np.concatenate([_pick(rng, inside, propensity, d_in), _pick(rng, outside, propensity, d_out)])
        sources.append(np.full(chosen.size, i, dtype=np.int64))
        targets.append(chosen.astype(np.int64))

    source = np.concatenate(sources)
    target = np.concatenate(targets)
    affinity = (propensity[source] * propensity[target]) ** (strength_exponent - 1.0)
    scale = (mean_weight - 1.0) / affinity.mean() if affinity.size else 0.0
    weight = 1.0 + rng.poisson(scale * affinity)
    return MultiGraph.from_arcs(n, source, target, weight, directed=True), planted


def _pick(rng: np.random.Generator, pool: np.ndarray, propensity: np.ndarray, size: int) -> np.ndarray:
    if size == 0:
        return np.zeros(0, dtype=np.int64)
    weights = propensity[pool]
    return rng.choice(pool, size=size, replace=False, p=weights / weights.sum())


def randomize_metadata(planted: np.ndarray, mu: float, seed: SeedLike = None) -> np.ndarray:
    """
    Replace the labels of floor(mu * N) uniformly chosen nodes with labels
    drawn uniformly from the existing label set.

    Raises:
        DomainError: If mu is outside [0, 1]
    """
    if not 0 <= mu <= 1:
        raise DomainError(f"randomization fraction must lie in [0, 1], got {mu}")
    planted = np.asarray(planted)
    labels = planted.copy()
    count = int(math.floor(mu * planted.size))
    if count == 0:
        return labels
    rng = _rng(seed)
    chosen = rng.choice(planted.size, size=count, replace=False)
    labels[chosen] = rng.choice(np.unique(planted), size=count)
    return labels


def with_metadata(g: MultiGraph, labels: np.ndarray) -> MultiGraph:
    """Attach per-node labels given in node order."""
    return attach_metadata(g, {name: str(label) for name, label in zip(g.names, labels)})


# ============================================================================
# Sampling
# ============================================================================


def _multiedge_counts(g: MultiGraph) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    source, target, weight = g.edges()
    if not np.all(weight == np.round(weight)):
        raise ValidationError(
            "multiedge sampling needs integer weights; round or scale the weights first"
        )
    return source, target, weight.astype(np.int64)


def remove_multiedges(g: MultiGraph, r: float, seed: SeedLike = None) -> MultiGraph:
    """
    Remove round(r * m) of the m unit multiedges uniformly without replacement.

    Links whose weight drops to zero disappear; the node set is unchanged.

    Raises:
        ValidationError: If weights are not integers
        DomainError: If r is outside [0, 1)
    """
    if not 0 <= r < 1:
        raise DomainError(f"removal fraction must lie in [0, 1), got {r}")
    source, target, counts = _multiedge_counts(g)
    total = int(counts.sum())
    removed = _round_half_up(r * total)
    if removed == 0:
        return g
    kept = _rng(seed).multivariate_hypergeometric(counts, total - removed)
    return g.with_edges(source, target, kept)


def split_two_fold(g: MultiGraph, seed: SeedLike = None) -> tuple[MultiGraph, MultiGraph]:
    """
    Balanced two-fold split of the multiedges.

    The training fold receives ceil(m / 2) multiedges drawn without
    replacement, the test fold the rest, so per-link weights of the two
    folds add up to the original.
    """
    source, target, counts = _multiedge_counts(g)
    total = int(counts.sum())
    train = _rng(seed).multivariate_hypergeometric(counts, (total + 1) // 2)
    return g.with_edges(source, target, train), g.with_edges(source, target, counts - train)


# ============================================================================
# Detection and cross-validation
# ============================================================================


@dataclass(frozen=True, eq=False)
class DetectionResult:
    flows: FlowField
    partition: Partition
    codelength: float
    one_level_codelength: float
    savings: float

    @property
    def n_modules(self) -> int:
        return self.partition.n_modules


def flows_for(g: MultiGraph, model: FlowModel, cfg: DetectConfig) -> FlowField:
    return compute_flows(
        g,
        FlowModel(model),
        teleport_alpha=cfg.teleport_alpha,
        tol=cfg.tolerance,
        max_iter=cfg.max_iter,
        prior_scale=cfg.prior_scale,
        weight_model=WeightModel(cfg.weight_model),
    )


def detect(g: MultiGraph, model: FlowModel, cfg: Optional[DetectConfig] = None) -> DetectionResult:
    """
    Flows, best partition and codelengths for one network.

    Savings are 0 when the one-module codelength vanishes (a single node,
    or all flow on one node).
    """
    cfg = cfg or DetectConfig()
    flows = flows_for(g, model, cfg)
    partition = optimize(g, flows, cfg.search)
    length = codelength(flows, partition)
    one_level = codelength(flows, one_level_partition(g))
    savings = codelength_savings(length, one_level) if one_level > 0 else 0.0
    return DetectionResult(flows, partition, length, one_level, savings)


def cross_validate_detect(
    train: MultiGraph, test: MultiGraph, model: FlowModel, cfg: DetectConfig
) -> tuple[DetectionResult, CrossValidationResult]:
    if train.n_nodes != test.n_nodes:
        raise ValidationError("training and test folds must share their nodes")
    trained = detect(train, model, cfg)
    test_flows = flows_for(test, model, cfg)
    transferred = Partition(module_of=trained.partition.module_of, n_modules=trained.n_modules)
    test_length = codelength(test_flows, transferred)
    test_one_level = codelength(test_flows, one_level_partition(test))
    result = CrossValidationResult(
        n_modules=trained.n_modules,
        train_codelength=trained.codelength,
        test_codelength=test_length,
        test_one_level_codelength=test_one_level,
        savings=codelength_savings(test_length, test_one_level),
        fold_multiedges=int(round(float(train.edges()[2].sum()))),
    )
    return trained, result


def cross_validate_folds(
    train: MultiGraph, test: MultiGraph, model: FlowModel, cfg: Optional[DetectConfig] = None
) -> CrossValidationResult:
    """
    Optimize on the training fold and score that partition on the test fold.

    The test fold's flows use the same flow model as training; savings are
    measured against the test fold's one-module codelength.

    Raises:
        DomainError: If the test fold's one-module codelength is zero
    """
    return cross_validate_detect(train, test, model, cfg or DetectConfig())[1]


def cross_validate(
    g: MultiGraph, model: FlowModel, cfg: Optional[DetectConfig] = None, seed: SeedLike = None
) -> float:
    """Test-fold codelength savings of one balanced two-fold split."""
    train, test = split_two_fold(g, seed)
    return cross_validate_folds(train, test, model, cfg).savings


# ============================================================================
# Sweeps
# ============================================================================


@dataclass(frozen=True)
class SweepJob:
    r_index: int
    mu_index: int
    rep: int
    r: float
    mu: float
    seed: int


@dataclass(frozen=True, eq=False)
class SweepContext:
    spec: SweepSpec
    base: MultiGraph
    reference: Optional[np.ndarray]
    cfg: DetectConfig


def job_seed(seed: int, r_index: int, mu_index: int, rep: int) -> int:
    """Per-job seed, independent of the order in which jobs run."""
    return int(np.random.SeedSequence([seed, r_index, mu_index, rep]).generate_state(1)[0])


def sweep_jobs(spec: SweepSpec) -> list[SweepJob]:
    return [
        SweepJob(r_index, mu_index, rep, r, mu, job_seed(spec.seed, r_index, mu_index, rep))
        for r_index, r in enumerate(spec.r_values)
        for mu_index, mu in enumerate(spec.mu_values)
        for rep in range(spec.repetitions)
    ]


def load_sweep_network(spec: SweepSpec) -> tuple[MultiGraph, Optional[np.ndarray]]:
    """Base network and reference labels (planted or from the metadata file)."""
    if spec.network_path is None:
        g, planted = generate_planted(
            spec.n_nodes,
            spec.avg_degree,
            spec.mixing,
            spec.n_modules,
            spec.mean_weight,
            seed=np.random.SeedSequence([spec.seed]),
            degree_exponent=spec.degree_exponent,
            max_degree=spec.max_degree,
            strength_exponent=spec.strength_exponent,
        )
        return g, planted
    g = read_graph(spec.network_path, directed=spec.directed)
    if spec.metadata_path is None:
        return g, None
    annotated = attach_metadata(g, read_labels(spec.metadata_path))
    return replace(annotated, metadata=None, label_names=()), annotated.metadata


def run_job(context: SweepContext, job: SweepJob) -> list[ExperimentRecord]:
    """All methods of one (r, mu, repetition) cell on the same sampled network."""
    spec = context.spec
    sample_seed, meta_seed, split_seed = np.random.SeedSequence(job.seed).spawn(3)
    cfg = context.cfg.model_copy(
        update={"search": context.cfg.search.model_copy(update={"seed": job.seed})}
    )

    sample = remove_multiedges(context.base, job.r, sample_seed)
    if context.reference is not None:
        sample = with_metadata(sample, randomize_metadata(context.reference, job.mu, meta_seed))
    folds = split_two_fold(sample, split_seed) if spec.xval else None

    records = []
    for method in spec.methods:
        if folds is not None:
            trained, xval = cross_validate_detect(folds[0], folds[1], method, cfg)
            fields = dict(
                train_codelength=xval.train_codelength,
                test_codelength=xval.test_codelength,
                savings=xval.savings,
                fold_multiedges=xval.fold_multiedges,
            )
        else:
            trained = detect(sample, method, cfg)
            fields = dict(train_codelength=trained.codelength, savings=trained.savings)
        score = (
            ami(trained.partition.module_of, context.reference, context.cfg.ami_average)
            if context.reference is not None
            else None
        )
        records.append(
            ExperimentRecord(
                method=method,
                r=job.r,
                mu=job.mu,
                rep=job.rep,
                seed=job.seed,
                n_modules=trained.n_modules,
                ami=score,
                codelength=trained.codelength,
                **fields,
            )
        )
    return records


def iter_sweep(spec: SweepSpec, cfg: Optional[DetectConfig] = None) -> Iterator[ExperimentRecord]:
    """
    Records of a sweep in job order.

    One base network is built from `spec.seed`; every (r, mu, repetition)
    job then resamples it with its own seed. With several workers, jobs run
    in a process pool and are yielded in submission order.
    """
    base_cfg = cfg or DetectConfig()
    cfg = base_cfg.model_copy(
        update={
            "teleport_alpha": spec.teleport_alpha,
            "prior_scale": spec.prior_scale,
            "search": base_cfg.search.model_copy(update={"trials": spec.trials, "workers": 1}),
        }
    )
    base, reference = load_sweep_network(spec)
    context = SweepContext(spec=spec, base=base, reference=reference, cfg=cfg)
    jobs = sweep_jobs(spec)

    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            for records in pool.map(run_job, repeat(context), jobs):
                yield from records
    else:
        for job in jobs:
            yield from run_job(context, job)


def summary_path(output: Path) -> Path:
    return Path(output).with_suffix(".summary.json")


def run_sweep(
    spec: SweepSpec,
    cfg: Optional[DetectConfig] = None,
    on_record: Optional[Callable[[ExperimentRecord], None]] = None,
) -> list[ExperimentRecord]:
    """
    Run a sweep, writing CSV rows as they are produced and a summary JSON at the end.

    Rows written before a failure stay in the CSV.

    Returns:
        All records in job order
    """
    output = Path(spec.output)
    output.parent.mkdir(parents=True, exist_ok=True)
    records: list[ExperimentRecord] = []
    with open(output, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        f.flush()
        for record in iter_sweep(spec, cfg):
            writer.writerow(record.to_row())
            f.flush()
            records.append(record)
            if on_record is not None:
                on_record(record)

    write_summary(spec, summarize(records), summary_path(output))
    return records


def summarize(records: list[ExperimentRecord]) -> list[SummaryRow]:
    """Mean and standard error per (method, r, mu), in first-appearance order."""
    groups: dict[tuple[FlowModel, float, float], list[ExperimentRecord]] = {}
    for record in records:
        groups.setdefault((record.method, record.r, record.mu), []).append(record)

    rows = []
    for (method, r, mu), group in groups.items():
        n_modules = SummaryRow.mean_stderr([rec.n_modules for rec in group])
        amis = [rec.ami for rec in group if rec.ami is not None]
        savings = [rec.savings for rec in group if rec.savings is not None]
        ami_stats = SummaryRow.mean_stderr(amis) if amis else (None, None)
        savings_stats = SummaryRow.mean_stderr(savings) if savings else (None, None)
        rows.append(
            SummaryRow(
                method=method,
                r=r,
                mu=mu,
                count=len(group),
                n_modules_mean=n_modules[0],
                n_modules_stderr=n_modules[1],
                ami_mean=ami_stats[0],
                ami_stderr=ami_stats[1],
                savings_mean=savings_stats[0],
                savings_stderr=savings_stats[1],
            )
        )
    return rows


def write_summary(spec: SweepSpec, rows: list[SummaryRow], path: Path) -> None:
    payload = {
        "spec": spec.model_dump(mode="json"),
        "rows": [row.model_dump(mode="json") for row in rows],
    }
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(json.dumps(payload, indent=2))
        f.write("\n")


def load_sweep_spec(path: Path) -> SweepSpec:
    """
    Read a sweep spec from JSON (.json) or key=value lines (anything else).

    Raises:
        ConfigError: If the file is missing, malformed or fails validation
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"sweep spec not found: {path}")
    if path.suffix.lower() == ".json":
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON ({e.msg} at line {e.lineno})")
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a JSON object")
    else:
        data = {key.lower(): value for key, value in dotenv_values(path).items() if value is not None}
    try:
        return SweepSpec.model_validate(data)
    except PydanticValidationError as e:
        problems = "; ".join(
            f"{'.'.join(str(part) for part in err['loc']) or 'spec'}: {err['msg']}"
            for err in e.errors()
        )
        raise ConfigError(f"{path}: {problems}")
