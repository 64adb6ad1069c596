"""
Pydantic models for run configuration, experiment records and summaries.

Numerical state (graphs, priors, flows, partitions) lives in the service
modules as numpy-backed dataclasses; these models describe what crosses
the command-line and file boundaries.
"""
from enum import Enum
from pathlib import Path
from typing import Any, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


# ============================================================================
# Flow models
# ============================================================================


class FlowModel(str, Enum):
    """How the random walker's transition rates are built."""

    NONE = "none"            # standard map equation on observed links
    UNIFORM = "uniform"      # empirical Bayes prior, lambda = ln N / N
    BIPARTITE = "bipartite"  # prior only between nodes of different type
    METADATA = "metadata"    # prior reinforced within metadata classes
    TELEPORT = "teleport"    # fixed-alpha recorded teleportation

    @property
    def is_regularized(self) -> bool:
        return self in (FlowModel.UNIFORM, FlowModel.BIPARTITE, FlowModel.METADATA)

    @classmethod
    def from_flags(
        cls,
        prior: Optional[str] = None,
        regularized: bool = False,
        metadata: bool = False,
        bipartite: bool = False,
        teleport: bool = False,
    ) -> "FlowModel":
        """
        Resolve the flow model from command-line flags.

        An explicit prior wins. Otherwise --teleport selects teleportation,
        a type or metadata file selects its prior and --regularized alone
        the uniform prior.

        Raises:
            ValueError: If the flags name incompatible models
        """
        if prior is not None:
            return cls(prior)
        implied = []
        if teleport:
            implied.append(cls.TELEPORT)
        if bipartite:
            implied.append(cls.BIPARTITE)
        if metadata:
            implied.append(cls.METADATA)
        if len(implied) > 1:
            names = ", ".join(m.value for m in implied)
            raise ValueError(f"flags select several flow models ({names}); pick one with --prior")
        if teleport and regularized:
            raise ValueError("--teleport and --regularized select different flow models")
        if implied:
            return implied[0]
        return cls.UNIFORM if regularized else cls.NONE


def default_r_values() -> list[float]:
    return [round(0.05 * i, 2) for i in range(20)]


def _split_list(value: Any) -> Any:
    """Accept comma-separated strings for list fields read from key=value files."""
    if isinstance(value, str):
        return [item.strip() for item in value.split(",") if item.strip()]
    return value


# ============================================================================
# Search
# ============================================================================


class SearchConfig(BaseModel):
    """Parameters of the greedy two-level search."""

    model_config = ConfigDict(frozen=True)

    seed: int = 0
    trials: int = Field(default=10, ge=1)
    max_outer_loops: int = Field(default=100, ge=1)
    max_sweeps: int = Field(default=1000, ge=1)
    improvement_threshold: float = Field(default=1e-10, gt=0)
    shuffle: bool = True  # seeded shuffle of the move order per sweep
    workers: int = Field(default=1, ge=1)


AmiAverage = Literal["arithmetic", "geometric", "min", "max"]


class DetectConfig(BaseModel):
    """Flow and search parameters of one detection."""

    model_config = ConfigDict(frozen=True)

    teleport_alpha: float = Field(default=0.15, gt=0, lt=1)
    tolerance: float = Field(default=1e-12, gt=0)
    max_iter: int = Field(default=10_000, ge=1)
    prior_scale: float = Field(default=1.0, gt=0)
    weight_model: Literal["ccm", "unit"] = "ccm"
    search: SearchConfig = Field(default_factory=SearchConfig)
    ami_average: AmiAverage = "arithmetic"  # scoring against planted labels


# ============================================================================
# Detection run
# ============================================================================


class RunConfig(BaseModel):
    """Effective configuration of one `network detect` run."""

    input_path: Path
    directed: bool = True
    model: FlowModel = FlowModel.NONE
    teleport_alpha: float = Field(default=0.15, gt=0, lt=1)
    metadata_path: Optional[Path] = None
    types_path: Optional[Path] = None
    seed: int = 0
    trials: int = Field(default=10, ge=1)
    tolerance: float = Field(default=1e-12, gt=0)
    max_iter: int = Field(default=10_000, ge=1)
    prior_scale: float = Field(default=1.0, gt=0)
    weight_model: Literal["ccm", "unit"] = "ccm"
    remove_fraction: float = Field(default=0.0, ge=0, lt=1)
    xval: bool = False
    output_dir: Path = Path("regflow-out")

    @model_validator(mode="after")
    def _check_model_inputs(self) -> "RunConfig":
        if self.model is FlowModel.METADATA and self.metadata_path is None:
            raise ValueError("metadata prior requires a metadata file (--metadata FILE)")
        if (
            self.model is FlowModel.BIPARTITE
            and self.types_path is None
            and self.input_path.suffix.lower() != ".net"
        ):
            raise ValueError(
                "bipartite prior requires a node-type file (--bipartite FILE) "
                "or a two-mode Pajek input"
            )
        return self


class DetectSummary(BaseModel):
    """JSON summary written next to a partition file."""

    model: FlowModel
    n_nodes: int
    n_arcs: int
    n_modules: int
    codelength: float
    one_level_codelength: float
    savings: float
    flow_residual: float
    flow_iterations: int
    alpha_min: float
    alpha_mean: float
    alpha_max: float
    test_codelength: Optional[float] = None
    test_savings: Optional[float] = None
    config: dict[str, Any] = Field(default_factory=dict)


# ============================================================================
# Experiments
# ============================================================================


class SweepSpec(BaseModel):
    """One experiment sweep: removal fractions x metadata noise x repetitions."""

    r_values: list[float] = Field(default_factory=default_r_values)
    mu_values: list[float] = Field(default_factory=lambda: [0.0, 0.15, 0.5])
    repetitions: int = Field(default=100, ge=1)
    methods: list[FlowModel] = Field(
        default_factory=lambda: [FlowModel.NONE, FlowModel.UNIFORM, FlowModel.METADATA]
    )
    seed: int = 0
    output: Path = Path("regflow-out/sweep.csv")

    # Planted-partition generator (used when network_path is not given)
    n_nodes: int = Field(default=1000, ge=2)
    avg_degree: float = Field(default=7.0, gt=0)
    mixing: float = Field(default=0.4, ge=0, lt=1)
    n_modules: int = Field(default=31, ge=1)
    mean_weight: float = Field(default=4.9, ge=1)
    degree_exponent: Optional[float] = Field(default=2.0, gt=1)  # none: Poisson degrees
    max_degree: int = Field(default=50, ge=2)
    strength_exponent: float = Field(default=1.5, ge=1)

    # External network instead of the generator
    network_path: Optional[Path] = None
    metadata_path: Optional[Path] = None
    directed: bool = True

    # Detection
    trials: int = Field(default=10, ge=1)
    xval: bool = True
    teleport_alpha: float = Field(default=0.15, gt=0, lt=1)
    prior_scale: float = Field(default=1.0, gt=0)
    workers: int = Field(default=1, ge=1)

    @field_validator("r_values", "mu_values", "methods", mode="before")
    @classmethod
    def _split_lists(cls, value: Any) -> Any:
        return _split_list(value)

    @field_validator("degree_exponent", mode="before")
    @classmethod
    def _none_degree_exponent(cls, value: Any) -> Any:
        if isinstance(value, str) and value.strip().lower() in ("", "none", "poisson"):
            return None
        return value

    @field_validator("r_values")
    @classmethod
    def _check_r(cls, values: list[float]) -> list[float]:
        if not values:
            raise ValueError("r_values must not be empty")
        for r in values:
            if not 0 <= r < 1:
                raise ValueError(f"removal fraction {r} outside [0, 1)")
        return values

    @field_validator("mu_values")
    @classmethod
    def _check_mu(cls, values: list[float]) -> list[float]:
        if not values:
            raise ValueError("mu_values must not be empty")
        for mu in values:
            if not 0 <= mu <= 1:
                raise ValueError(f"metadata randomization {mu} outside [0, 1]")
        return values

    @field_validator("methods")
    @classmethod
    def _check_methods(cls, values: list[FlowModel]) -> list[FlowModel]:
        if not values:
            raise ValueError("methods must not be empty")
        return values

    @model_validator(mode="after")
    def _check_sources(self) -> "SweepSpec":
        if self.network_path is None and self.n_modules > self.n_nodes:
            raise ValueError("n_modules cannot exceed n_nodes")
        if self.network_path is None and self.degree_exponent is not None:
            if self.avg_degree >= min(self.max_degree, self.n_nodes - 1):
                raise ValueError("avg_degree must be below max_degree and n_nodes - 1")
        if FlowModel.METADATA in self.methods and self.network_path is not None and self.metadata_path is None:
            raise ValueError("metadata method on an external network requires metadata_path")
        if FlowModel.BIPARTITE in self.methods and self.network_path is None:
            raise ValueError("bipartite method requires an external two-mode network")
        return self


CSV_COLUMNS = [
    "method",
    "r",
    "mu",
    "rep",
    "seed",
    "n_modules",
    "ami",
    "train_codelength",
    "test_codelength",
    "savings",
    "codelength",
    "fold_multiedges",
]


class ExperimentRecord(BaseModel):
    """One row of a sweep."""

    method: FlowModel
    r: float
    mu: float
    rep: int
    seed: int
    n_modules: int
    ami: Optional[float] = None
    train_codelength: Optional[float] = None
    test_codelength: Optional[float] = None
    savings: Optional[float] = None
    codelength: float
    fold_multiedges: Optional[int] = None

    def to_row(self) -> list[str]:
        """Render as CSV cells; floats use repr so reruns are byte-identical."""
        cells = []
        for column in CSV_COLUMNS:
            value = getattr(self, column)
            if value is None:
                cells.append("")
            elif isinstance(value, FlowModel):
                cells.append(value.value)
            elif isinstance(value, float):
                cells.append(repr(float(value)))
            else:
                cells.append(str(value))
        return cells


class CrossValidationResult(BaseModel):
    """Outcome of a two-fold cross-validation."""

    n_modules: int
    train_codelength: float
    test_codelength: float
    test_one_level_codelength: float
    savings: float
    fold_multiedges: int


class SummaryRow(BaseModel):
    """Mean and standard error of a sweep cell."""

    method: FlowModel
    r: float
    mu: float
    count: int
    n_modules_mean: float
    n_modules_stderr: float
    ami_mean: Optional[float] = None
    ami_stderr: Optional[float] = None
    savings_mean: Optional[float] = None
    savings_stderr: Optional[float] = None

    @staticmethod
    def mean_stderr(values: list[float]) -> tuple[float, float]:
        arr = np.asarray(values, dtype=float)
        if arr.size == 0:
            return float("nan"), float("nan")
        if arr.size == 1:
            return float(arr[0]), 0.0
        return float(arr.mean()), float(arr.std(ddof=1) / np.sqrt(arr.size))
