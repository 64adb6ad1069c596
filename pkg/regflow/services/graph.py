"""
Multigraph data model and ingestion.

Holds the observed network: arc weights W (their support is the adjacency A),
optional bipartite node types and optional discrete metadata labels.
"""
from dataclasses import dataclass, replace
from functools import cached_property
from pathlib import Path
from typing import IO, Iterable, Mapping, Optional, Union

import numpy as np
from scipy import sparse

from regflow.utils.errors import (
    BipartiteViolationError,
    MissingLabelsError,
    ParseError,
    ValidationError,
)

TYPE_NAMES = ("A", "B")

TextSource = Union[str, IO[str], Iterable[str]]


@dataclass(frozen=True, eq=False)
class MultiGraph:
    """
    Immutable weighted multigraph.

    Arcs are unique (source, target) pairs sorted by source then target;
    parallel observations are summed into the arc weight. Undirected input
    is stored as two opposing arcs of equal weight (a self-loop of weight w
    becomes one arc of weight 2w).
    """

    n_nodes: int
    source: np.ndarray
    target: np.ndarray
    weight: np.ndarray
    directed: bool
    names: tuple[str, ...]
    node_type: Optional[np.ndarray] = None
    metadata: Optional[np.ndarray] = None
    label_names: tuple[str, ...] = ()

    # ------------------------------------------------------------------
    # Construction
    # ------------------------------------------------------------------

    @classmethod
    def from_arcs(
        cls,
        n_nodes: int,
        source: Iterable[int],
        target: Iterable[int],
        weight: Iterable[float],
        directed: bool = True,
        names: Optional[Iterable[str]] = None,
    ) -> "MultiGraph":
        """
        Build a graph from parallel arrays, summing duplicates and dropping zero weights.

        Raises:
            ValidationError: If an endpoint is out of range or a weight is negative
        """
        src = np.asarray(source, dtype=np.int64).ravel()
        dst = np.asarray(target, dtype=np.int64).ravel()
        w = np.asarray(weight, dtype=np.float64).ravel()

        if not (src.shape == dst.shape == w.shape):
            raise ValidationError("source, target and weight arrays differ in length")
        if n_nodes < 0:
            raise ValidationError("number of nodes must be non-negative")
        if src.size and (src.min() < 0 or dst.min() < 0 or max(src.max(), dst.max()) >= n_nodes):
            raise ValidationError(f"arc endpoint outside 0..{n_nodes - 1}")
        if not np.all(np.isfinite(w)):
            raise ValidationError("arc weights must be finite")
        if np.any(w < 0):
            raise ValidationError("arc weights must be non-negative")

        if not directed:
            src, dst = np.concatenate([src, dst]), np.concatenate([dst, src])
            w = np.concatenate([w, w])

        matrix = sparse.coo_array((w, (src, dst)), shape=(n_nodes, n_nodes)).tocsr()
        matrix.sum_duplicates()
        matrix.eliminate_zeros()
        matrix.sort_indices()

        rows = np.repeat(np.arange(n_nodes, dtype=np.int64), np.diff(matrix.indptr))

        if names is None:
            node_names = tuple(str(i) for i in range(n_nodes))
        else:
            node_names = tuple(str(name) for name in names)
            if len(node_names) != n_nodes:
                raise ValidationError("number of names differs from number of nodes")

        return cls(
            n_nodes=n_nodes,
            source=rows,
            target=matrix.indices.astype(np.int64),
            weight=matrix.data.astype(np.float64),
            directed=directed,
            names=node_names,
        )

    def with_edges(self, source: np.ndarray, target: np.ndarray, weight: np.ndarray) -> "MultiGraph":
        """Rebuild from an input-level edge view, keeping nodes, types and metadata."""
        rebuilt = MultiGraph.from_arcs(
            self.n_nodes, source, target, weight, directed=self.directed, names=self.names
        )
        return replace(
            rebuilt,
            node_type=self.node_type,
            metadata=self.metadata,
            label_names=self.label_names,
        )

    # ------------------------------------------------------------------
    # Derived quantities
    # ------------------------------------------------------------------

    @property
    def n_arcs(self) -> int:
        return int(self.source.size)

    @cached_property
    def k_out(self) -> np.ndarray:
        """Out-degree counting distinct targets."""
        return np.bincount(self.source, minlength=self.n_nodes).astype(np.float64)

    @cached_property
    def k_in(self) -> np.ndarray:
        return np.bincount(self.target, minlength=self.n_nodes).astype(np.float64)

    @cached_property
    def s_out(self) -> np.ndarray:
        """Out-strength: summed weights of outgoing arcs."""
        return np.bincount(self.source, weights=self.weight, minlength=self.n_nodes)

    @cached_property
    def s_in(self) -> np.ndarray:
        return np.bincount(self.target, weights=self.weight, minlength=self.n_nodes)

    @cached_property
    def adjacency(self) -> sparse.csr_array:
        """Weight matrix W in CSR form."""
        return sparse.csr_array(
            (self.weight, (self.source, self.target)), shape=(self.n_nodes, self.n_nodes)
        )

    @cached_property
    def index(self) -> dict[str, int]:
        return {name: i for i, name in enumerate(self.names)}

    @property
    def total_weight(self) -> float:
        return float(self.weight.sum())

    @property
    def is_integer_weighted(self) -> bool:
        return bool(np.all(self.weight == np.round(self.weight)))

    @cached_property
    def label_counts(self) -> Optional[np.ndarray]:
        """N_m per metadata label, or None without metadata."""
        if self.metadata is None:
            return None
        return np.bincount(self.metadata, minlength=len(self.label_names))

    @property
    def n_a(self) -> int:
        return 0 if self.node_type is None else int(np.count_nonzero(self.node_type == 0))

    @property
    def n_b(self) -> int:
        return 0 if self.node_type is None else int(np.count_nonzero(self.node_type == 1))

    def edges(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Input-level edge view.

        Directed graphs return their arcs. Undirected graphs return each pair
        once (source < target) and self-loops at their input weight, so that
        `with_edges(*g.edges())` reproduces `g`.
        """
        if self.directed:
            return self.source, self.target, self.weight
        upper = self.source < self.target
        loops = self.source == self.target
        keep = upper | loops
        weight = np.where(loops, self.weight / 2.0, self.weight)[keep]
        return self.source[keep], self.target[keep], weight

    def describe(self) -> dict[str, object]:
        """Summary statistics for display."""
        _, _, edge_weight = self.edges()
        stats: dict[str, object] = {
            "nodes": self.n_nodes,
            "arcs": self.n_arcs,
            "links": int(edge_weight.size),
            "directed": self.directed,
            "total_weight": float(edge_weight.sum()),
            "mean_weight": float(edge_weight.mean()) if edge_weight.size else 0.0,
            "self_loops": int(np.count_nonzero(self.source == self.target)),
            "isolated": int(np.count_nonzero((self.k_in + self.k_out) == 0)),
        }
        if self.node_type is not None:
            stats["n_a"] = self.n_a
            stats["n_b"] = self.n_b
        if self.metadata is not None:
            stats["labels"] = len(self.label_names)
        return stats


# ============================================================================
# Parsing
# ============================================================================


def iter_lines(text: TextSource) -> Iterable[str]:
    if isinstance(text, str):
        return text.splitlines()
    return text


def _parse_weight(token: str, line_number: int) -> float:
    try:
        value = float(token)
    except ValueError as e:
        raise ParseError(f"invalid weight '{token}'", line_number) from e
    if not np.isfinite(value):
        raise ValidationError(f"line {line_number}: weight must be finite")
    if value < 0:
        raise ValidationError(f"line {line_number}: negative weight {token}")
    return value


def load_edge_list(text: TextSource, directed: bool = True) -> MultiGraph:
    """
    Parse a whitespace-separated "src dst [weight]" edge list.

    Lines starting with '#' or '%' are comments. A line holding a single
    node id declares that node, so isolated nodes survive a round trip.
    Node ids are remapped to a dense index in order of first appearance;
    the original ids are kept as node names. Repeated (src, dst) lines are
    summed.

    Args:
        text: File content, open file, or iterable of lines
        directed: Treat lines as arcs (True) or undirected links (False)

    Returns:
        Parsed MultiGraph

    Raises:
        ParseError: If a line is malformed
        ValidationError: If a weight is negative
    """
    index: dict[str, int] = {}
    src: list[int] = []
    dst: list[int] = []
    weights: list[float] = []

    for line_number, raw in enumerate(iter_lines(text), start=1):
        line = raw.strip()
        if not line or line[0] in "#%":
            continue
        tokens = line.split()
        if len(tokens) == 1:
            index.setdefault(tokens[0], len(index))
            continue
        if len(tokens) not in (2, 3):
            raise ParseError(f"expected 'src dst [weight]', got '{line}'", line_number)
        weight = _parse_weight(tokens[2], line_number) if len(tokens) == 3 else 1.0
        for token in tokens[:2]:
            if token not in index:
                index[token] = len(index)
        src.append(index[tokens[0]])
        dst.append(index[tokens[1]])
        weights.append(weight)

    return MultiGraph.from_arcs(len(index), src, dst, weights, directed=directed, names=list(index))


def load_pajek(text: TextSource, directed: Optional[bool] = None) -> MultiGraph:
    """
    Parse the Pajek subset: *Vertices, *Arcs and *Edges sections.

    `*Vertices N N_A` marks a two-mode network whose first N_A vertices are
    type A and the rest type B. Vertex ids become node names. Arcs make the
    graph directed; a file with only *Edges is undirected unless `directed`
    forces otherwise.

    Raises:
        ParseError: On unknown sections or malformed lines
    """
    n_nodes: Optional[int] = None
    n_first_mode: Optional[int] = None
    section: Optional[str] = None
    arcs: list[tuple[int, int, float]] = []
    edges: list[tuple[int, int, float]] = []

    for line_number, raw in enumerate(iter_lines(text), start=1):
        line = raw.strip()
        if not line or line[0] == "%":
            continue
        if line.startswith("*"):
            tokens = line.split()
            keyword = tokens[0].lower()
            if keyword == "*vertices":
                try:
                    n_nodes = int(tokens[1])
                    if len(tokens) > 2:
                        n_first_mode = int(tokens[2])
                except (IndexError, ValueError) as e:
                    raise ParseError(f"malformed header '{line}'", line_number) from e
                section = "vertices"
            elif keyword in ("*arcs", "*edges"):
                section = keyword[1:]
            else:
                raise ParseError(f"unsupported Pajek section '{tokens[0]}'", line_number)
            continue

        if section is None:
            raise ParseError("content before *Vertices", line_number)
        if section == "vertices":
            continue

        tokens = line.split()
        if len(tokens) not in (2, 3):
            raise ParseError(f"expected 'src dst [weight]', got '{line}'", line_number)
        try:
            u, v = int(tokens[0]), int(tokens[1])
        except ValueError as e:
            raise ParseError(f"non-integer vertex id in '{line}'", line_number) from e
        if n_nodes is None or not (1 <= u <= n_nodes and 1 <= v <= n_nodes):
            raise ParseError(f"vertex id outside 1..{n_nodes}", line_number)
        weight = _parse_weight(tokens[2], line_number) if len(tokens) == 3 else 1.0
        (arcs if section == "arcs" else edges).append((u - 1, v - 1, weight))

    if n_nodes is None:
        raise ParseError("missing *Vertices header")

    if directed is None:
        directed = bool(arcs) or not edges
    if directed:
        triples = arcs + edges + [(v, u, w) for u, v, w in edges if u != v]
        triples += [(u, v, w) for u, v, w in edges if u == v]
    else:
        triples = arcs + edges

    src = [t[0] for t in triples]
    dst = [t[1] for t in triples]
    weights = [t[2] for t in triples]
    graph = MultiGraph.from_arcs(
        n_nodes, src, dst, weights, directed=directed, names=[str(i) for i in range(1, n_nodes + 1)]
    )

    if n_first_mode is not None:
        types = {name: ("A" if i < n_first_mode else "B") for i, name in enumerate(graph.names)}
        graph = attach_bipartite_types(graph, types)
    return graph


def read_graph(path: Path, directed: Optional[bool] = None) -> MultiGraph:
    """Read a graph file, choosing the parser from the suffix (.net is Pajek)."""
    path = Path(path)
    with open(path, "r", encoding="utf-8") as f:
        if path.suffix.lower() == ".net":
            return load_pajek(f, directed=directed)
        return load_edge_list(f, directed=True if directed is None else directed)


def load_labels(text: TextSource) -> dict[str, str]:
    """
    Parse "node-id label" lines.

    Raises:
        ParseError: If a line does not have exactly two fields or repeats a node
    """
    labels: dict[str, str] = {}
    for line_number, raw in enumerate(iter_lines(text), start=1):
        line = raw.strip()
        if not line or line[0] in "#%":
            continue
        tokens = line.split()
        if len(tokens) != 2:
            raise ParseError(f"expected 'node-id label', got '{line}'", line_number)
        if tokens[0] in labels:
            raise ParseError(f"node '{tokens[0]}' labelled twice", line_number)
        labels[tokens[0]] = tokens[1]
    return labels


def read_labels(path: Path) -> dict[str, str]:
    with open(path, "r", encoding="utf-8") as f:
        return load_labels(f)


# ============================================================================
# Annotations
# ============================================================================


def _labels_in_node_order(g: MultiGraph, labels: Mapping, what: str) -> list[str]:
    normalized = {str(key): str(value) for key, value in labels.items()}
    missing = [name for name in g.names if name not in normalized]
    if missing:
        raise MissingLabelsError(missing, what)
    return [normalized[name] for name in g.names]


def attach_metadata(g: MultiGraph, labels: Mapping) -> MultiGraph:
    """
    Attach one discrete metadata label per node.

    Labels are coded against their sorted universe; per-label counts are
    available as `label_counts`.

    Raises:
        MissingLabelsError: If any node has no label
    """
    ordered = _labels_in_node_order(g, labels, "metadata label")
    universe, codes = np.unique(np.asarray(ordered, dtype=object).astype(str), return_inverse=True)
    return replace(
        g,
        metadata=codes.astype(np.int64),
        label_names=tuple(str(label) for label in universe),
    )


def attach_bipartite_types(g: MultiGraph, types: Mapping) -> MultiGraph:
    """
    Attach node types A/B and verify that every arc joins different types.

    Raises:
        MissingLabelsError: If any node has no type
        ValidationError: If a type is not A or B
        BipartiteViolationError: If an arc connects two same-type nodes
    """
    ordered = _labels_in_node_order(g, types, "node type")
    codes = np.empty(g.n_nodes, dtype=np.int8)
    for i, value in enumerate(ordered):
        key = value.upper()
        if key in ("A", "0"):
            codes[i] = 0
        elif key in ("B", "1"):
            codes[i] = 1
        else:
            raise ValidationError(f"node '{g.names[i]}' has type '{value}', expected A or B")

    same = np.flatnonzero(codes[g.source] == codes[g.target])
    if same.size:
        arc = same[0]
        u, v = int(g.source[arc]), int(g.target[arc])
        raise BipartiteViolationError(g.names[u], g.names[v], TYPE_NAMES[codes[u]])

    return replace(g, node_type=codes)


# ============================================================================
# Serialization
# ============================================================================


def _format_weight(value: float) -> str:
    return str(int(value)) if float(value).is_integer() else repr(float(value))


def write_edge_list(g: MultiGraph, stream: IO[str]) -> None:
    """
    Write every node name on its own line, then "src dst weight" lines.

    The node lines fix the node order and keep isolated nodes, so
    load_edge_list reads back the same graph.
    """
    stream.write(f"# {'directed' if g.directed else 'undirected'} {g.n_nodes} nodes\n")
    for name in g.names:
        stream.write(f"{name}\n")
    for u, v, w in zip(*g.edges()):
        stream.write(f"{g.names[u]} {g.names[v]} {_format_weight(w)}\n")


def write_pajek(g: MultiGraph, stream: IO[str]) -> None:
    """
    Write a Pajek network with node names as quoted vertex labels.

    Node types become a two-mode header, which needs every type A node
    before the first type B node.

    Raises:
        ValidationError: If typed nodes are not ordered A before B
    """
    header = f"*Vertices {g.n_nodes}"
    if g.node_type is not None:
        if np.any(np.diff(g.node_type.astype(np.int64)) < 0):
            raise ValidationError("two-mode Pajek output needs all type A nodes before type B nodes")
        header += f" {g.n_a}"
    stream.write(header + "\n")
    for i, name in enumerate(g.names, start=1):
        stream.write(f'{i} "{name}"\n')
    stream.write("*Arcs\n" if g.directed else "*Edges\n")
    for u, v, w in zip(*g.edges()):
        stream.write(f"{u + 1} {v + 1} {_format_weight(w)}\n")


def write_graph(g: MultiGraph, path: Path) -> None:
    """Write a graph file, choosing the format from the suffix (.net is Pajek)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        if path.suffix.lower() == ".net":
            write_pajek(g, f)
        else:
            write_edge_list(g, f)


def write_labels(names: Iterable[str], labels: Iterable, stream: IO[str]) -> None:
    """Write "node-id label" lines."""
    for name, label in zip(names, labels):
        stream.write(f"{name} {label}\n")


def read_annotated_graph(
    path: Path,
    directed: Optional[bool] = None,
    metadata_path: Optional[Path] = None,
    types_path: Optional[Path] = None,
) -> MultiGraph:
    """Read a graph file and attach metadata labels and node types from their files."""
    g = read_graph(path, directed=directed)
    if metadata_path is not None:
        g = attach_metadata(g, read_labels(metadata_path))
    if types_path is not None:
        g = attach_bipartite_types(g, read_labels(types_path))
    return g
