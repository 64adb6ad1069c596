"""
Greedy two-level map equation search.

Each level moves nodes one at a time to the candidate module with the
largest exact codelength decrease, then merges modules into super-nodes
and repeats on the smaller network. Channel mass (prior or teleportation)
enters the move deltas through per-module aggregates, so prior links are
never enumerated.
"""
import heapq
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from itertools import repeat
from typing import Optional

import numpy as np
from scipy import sparse

from regflow.models.schemas import SearchConfig
from regflow.services.flow import FlowField
from regflow.services.graph import MultiGraph
from regflow.services.mapeq import Partition, codelength
from regflow.utils.errors import ValidationError

# Moves must beat this to count as a decrease; absorbs rounding noise.
MIN_GAIN = 1e-14

LabelEntries = dict[int, tuple[float, float]]


def _plogp(x: float) -> float:
    return x * math.log2(x) if x > 0 else 0.0


@dataclass(frozen=True)
class _ModuleUpdate:
    exit_obs: float
    exit: float
    flow: float
    label_change: float


class LevelState:
    """
    Module bookkeeping for one level of the search.

    Nodes of a level are the super-nodes produced by the previous level.
    Per module it tracks visit rate, observed exit flow, channel source mass
    A_c and target mass V_c, and per-label (A, V) pairs; the encoded exit of
    module M is

        exit_obs(M) + sum_c coef_c A_c(M) (T_c - V_c(M)) + sum_l lam_l A_l(M) (T_l - V_l(M))

    The move loop runs on plain Python floats and lists; numpy arrays are
    only touched once per sweep and at aggregation.
    """

    def __init__(
        self,
        flow: np.ndarray,
        link: sparse.csr_array,
        channel_source: np.ndarray,
        channel_target: np.ndarray,
        coef: np.ndarray,
        channel_total: np.ndarray,
        node_labels: Optional[list[LabelEntries]],
        label_coef: Optional[np.ndarray],
        label_total: Optional[np.ndarray],
        node_entropy: float,
    ):
        n = int(flow.size)
        self.flow = flow
        self.node_a = channel_source
        self.node_v = channel_target
        self.coef = coef
        self.channel_total = channel_total
        self.node_labels = node_labels
        self.label_coef = label_coef
        self.label_total = label_total
        self.node_entropy = node_entropy

        self._link_out = sparse.csr_array(link)
        self._link_in = sparse.csr_array(self._link_out.T)
        self._out_adj = _adjacency_lists(self._link_out)
        self._in_adj = _adjacency_lists(self._link_in)

        self._coef: list[float] = coef.tolist()
        self._total: list[float] = channel_total.tolist()
        self._label_coef: list[float] = [] if label_coef is None else label_coef.tolist()
        self._label_total: list[float] = [] if label_total is None else label_total.tolist()
        self._flow: list[float] = flow.tolist()
        self._node_a: list[list[float]] = channel_source.T.tolist()
        self._node_v: list[list[float]] = channel_target.T.tolist()

        self_flow = self._link_out.diagonal()
        node_exit = np.asarray(self._link_out.sum(axis=1)).ravel() - self_flow
        self.node_exit: list[float] = node_exit.tolist()

        self.module_of: list[int] = list(range(n))
        self.mod_size: list[int] = [1] * n
        self.mod_flow: list[float] = list(self._flow)
        self.mod_exit_obs: list[float] = list(self.node_exit)
        self.mod_a: list[list[float]] = [list(a) for a in self._node_a]
        self.mod_v: list[list[float]] = [list(v) for v in self._node_v]
        if node_labels is not None:
            self.mod_labels: list[LabelEntries] = [dict(entries) for entries in node_labels]
            self.mod_label_term: list[float] = [self._label_term(e) for e in self.mod_labels]
        else:
            self.mod_labels = []
            self.mod_label_term = [0.0] * n
        self.mod_exit: list[float] = [
            self._module_exit(self.mod_exit_obs[m], self.mod_a[m], self.mod_v[m], self.mod_label_term[m])
            for m in range(n)
        ]

        self._empty: list[int] = []
        self._hub: Optional[int] = None
        self._label_hubs: dict[int, int] = {}
        self._recount()

    @classmethod
    def from_flows(cls, flows: FlowField) -> "LevelState":
        """Level-zero state: one node per network node, all singletons."""
        n = flows.n_nodes
        p = flows.visit_rate
        channels = flows.channels
        if flows.recorded and channels.n_channels:
            coef = channels.coef.astype(np.float64)
            source = p * channels.src_rate
            target = channels.tgt.astype(np.float64)
            total = channels.total
        else:
            coef = np.zeros(0)
            source = np.zeros((0, n))
            target = np.zeros((0, n))
            total = np.zeros(0)

        node_labels = label_coef = label_total = None
        if flows.recorded and channels.labels is not None:
            label_source = p * channels.label_src_rate
            node_labels = [
                {int(label): (float(a), float(v))}
                for label, a, v in zip(channels.labels, label_source, channels.label_tgt)
            ]
            label_coef = channels.label_coef
            label_total = channels.label_total

        return cls(
            flow=p.astype(np.float64),
            link=flows.link_flow(),
            channel_source=source,
            channel_target=target,
            coef=coef,
            channel_total=np.asarray(total, dtype=np.float64),
            node_labels=node_labels,
            label_coef=label_coef,
            label_total=label_total,
            node_entropy=-float(sum(_plogp(x) for x in p.tolist())),
        )

    # ------------------------------------------------------------------
    # Codelength bookkeeping
    # ------------------------------------------------------------------

    @property
    def n_nodes(self) -> int:
        return len(self._flow)

    @property
    def n_modules(self) -> int:
        return sum(1 for size in self.mod_size if size)

    @property
    def membership(self) -> np.ndarray:
        return np.array(self.module_of, dtype=np.int64)

    @property
    def codelength(self) -> float:
        return (
            _plogp(self._exit_total)
            - 2.0 * self._exit_plogp
            + self.node_entropy
            + self._exit_flow_plogp
        )

    def _recount(self) -> None:
        self._exit_total = float(sum(self.mod_exit))
        self._exit_plogp = sum(_plogp(q) for q in self.mod_exit)
        self._exit_flow_plogp = sum(_plogp(q + p) for q, p in zip(self.mod_exit, self.mod_flow))

    def _label_term(self, entries: LabelEntries) -> float:
        return sum(
            self._label_coef[label] * a * (self._label_total[label] - v)
            for label, (a, v) in entries.items()
        )

    def _module_exit(self, exit_obs: float, a: list[float], v: list[float], label_term: float) -> float:
        q = exit_obs + label_term
        for c, a_c, t_c, v_c in zip(self._coef, a, self._total, v):
            q += c * a_c * (t_c - v_c)
        return q if q > 0.0 else 0.0

    def _label_change(self, module: int, u: int, sign: float) -> float:
        if self.node_labels is None:
            return 0.0
        entries = self.mod_labels[module]
        change = 0.0
        for label, (a_u, v_u) in self.node_labels[u].items():
            a, v = entries.get(label, (0.0, 0.0))
            total = self._label_total[label]
            change += self._label_coef[label] * (
                (a + sign * a_u) * (total - v - sign * v_u) - a * (total - v)
            )
        return change

    # ------------------------------------------------------------------
    # Moves
    # ------------------------------------------------------------------

    def neighbor_flows(self, u: int) -> dict[int, list[float]]:
        """Observed flow from u into, and out of, each neighboring module (self-flow excluded)."""
        result: dict[int, list[float]] = {}
        module_of = self.module_of
        for adjacency, slot in ((self._out_adj, 0), (self._in_adj, 1)):
            nodes, flows = adjacency[u]
            for v, f in zip(nodes, flows):
                if v == u:
                    continue
                entry = result.get(module_of[v])
                if entry is None:
                    entry = result[module_of[v]] = [0.0, 0.0]
                entry[slot] += f
        return result

    def _evaluate(
        self, u: int, target: int, neighbors: dict[int, list[float]]
    ) -> tuple[float, _ModuleUpdate, _ModuleUpdate]:
        source = self.module_of[u]
        out_x, in_x = neighbors.get(source, (0.0, 0.0))
        out_y, in_y = neighbors.get(target, (0.0, 0.0))
        e_u = self.node_exit[u]
        p_u = self._flow[u]
        a_u, v_u = self._node_a[u], self._node_v[u]

        if self.mod_size[source] == 1:
            new_x = _ModuleUpdate(0.0, 0.0, 0.0, -self.mod_label_term[source])
        else:
            change = self._label_change(source, u, -1.0)
            exit_obs = self.mod_exit_obs[source] - e_u + out_x + in_x
            new_x = _ModuleUpdate(
                exit_obs,
                self._module_exit(
                    exit_obs,
                    [x - y for x, y in zip(self.mod_a[source], a_u)],
                    [x - y for x, y in zip(self.mod_v[source], v_u)],
                    self.mod_label_term[source] + change,
                ),
                self.mod_flow[source] - p_u,
                change,
            )

        change = self._label_change(target, u, 1.0)
        exit_obs = self.mod_exit_obs[target] + e_u - out_y - in_y
        new_y = _ModuleUpdate(
            exit_obs,
            self._module_exit(
                exit_obs,
                [x + y for x, y in zip(self.mod_a[target], a_u)],
                [x + y for x, y in zip(self.mod_v[target], v_u)],
                self.mod_label_term[target] + change,
            ),
            self.mod_flow[target] + p_u,
            change,
        )

        old_qx, old_qy = self.mod_exit[source], self.mod_exit[target]
        old_px, old_py = self.mod_flow[source], self.mod_flow[target]
        new_total = self._exit_total - old_qx - old_qy + new_x.exit + new_y.exit
        delta = (
            _plogp(new_total)
            - _plogp(self._exit_total)
            - 2.0 * (_plogp(new_x.exit) + _plogp(new_y.exit) - _plogp(old_qx) - _plogp(old_qy))
            + _plogp(new_x.exit + new_x.flow)
            + _plogp(new_y.exit + new_y.flow)
            - _plogp(old_qx + old_px)
            - _plogp(old_qy + old_py)
        )
        return delta, new_x, new_y

    def move_delta(self, u: int, target: int, neighbors: Optional[dict[int, list[float]]] = None) -> float:
        """Exact codelength change of moving node u into module `target`."""
        u, target = int(u), int(target)
        if target == self.module_of[u]:
            return 0.0
        if neighbors is None:
            neighbors = self.neighbor_flows(u)
        return self._evaluate(u, target, neighbors)[0]

    def apply_move(self, u: int, target: int, neighbors: Optional[dict[int, list[float]]] = None) -> float:
        """Move node u into module `target` and return the codelength change."""
        u, target = int(u), int(target)
        source = self.module_of[u]
        if target == source:
            return 0.0
        if neighbors is None:
            neighbors = self.neighbor_flows(u)
        delta, new_x, new_y = self._evaluate(u, target, neighbors)

        old = (self.mod_exit[source], self.mod_exit[target], self.mod_flow[source], self.mod_flow[target])
        self._exit_total += new_x.exit + new_y.exit - old[0] - old[1]
        self._exit_plogp += _plogp(new_x.exit) + _plogp(new_y.exit) - _plogp(old[0]) - _plogp(old[1])
        self._exit_flow_plogp += (
            _plogp(new_x.exit + new_x.flow)
            + _plogp(new_y.exit + new_y.flow)
            - _plogp(old[0] + old[2])
            - _plogp(old[1] + old[3])
        )

        self.mod_size[source] -= 1
        self.mod_size[target] += 1
        self.module_of[u] = target
        emptied = self.mod_size[source] == 0
        a_u, v_u = self._node_a[u], self._node_v[u]

        self.mod_exit_obs[target] = new_y.exit_obs
        self.mod_exit[target] = new_y.exit
        self.mod_flow[target] = new_y.flow
        self.mod_a[target] = [x + y for x, y in zip(self.mod_a[target], a_u)]
        self.mod_v[target] = [x + y for x, y in zip(self.mod_v[target], v_u)]
        self.mod_label_term[target] += new_y.label_change

        if emptied:
            self.mod_exit_obs[source] = 0.0
            self.mod_exit[source] = 0.0
            self.mod_flow[source] = 0.0
            self.mod_a[source] = [0.0] * len(a_u)
            self.mod_v[source] = [0.0] * len(v_u)
            self.mod_label_term[source] = 0.0
            heapq.heappush(self._empty, source)
        else:
            self.mod_exit_obs[source] = new_x.exit_obs
            self.mod_exit[source] = new_x.exit
            self.mod_flow[source] = new_x.flow
            self.mod_a[source] = [x - y for x, y in zip(self.mod_a[source], a_u)]
            self.mod_v[source] = [x - y for x, y in zip(self.mod_v[source], v_u)]
            self.mod_label_term[source] += new_x.label_change

        if self.node_labels is not None:
            into = self.mod_labels[target]
            for label, (a_l, v_l) in self.node_labels[u].items():
                a, v = into.get(label, (0.0, 0.0))
                into[label] = (a + a_l, v + v_l)
            if emptied:
                self.mod_labels[source] = {}
            else:
                away = self.mod_labels[source]
                for label, (a_l, v_l) in self.node_labels[u].items():
                    a, v = away[label]
                    away[label] = (a - a_l, v - v_l)
        return delta

    # ------------------------------------------------------------------
    # Candidates and sweeps
    # ------------------------------------------------------------------

    def _empty_module(self) -> Optional[int]:
        while self._empty and self.mod_size[self._empty[0]] > 0:
            heapq.heappop(self._empty)
        return self._empty[0] if self._empty else None

    def refresh_hubs(self) -> None:
        """Modules holding the most channel target mass, globally and per label."""
        self._hub = None
        self._label_hubs = {}
        occupied = np.asarray(self.mod_size) > 0
        if self.coef.size:
            mass = np.where(occupied, np.asarray(self.mod_v) @ self.coef, -np.inf)
            self._hub = int(np.argmax(mass))
        if self.node_labels is not None:
            best: dict[int, tuple[float, int]] = {}
            for m in np.flatnonzero(occupied).tolist():
                for label, (_, v) in self.mod_labels[m].items():
                    if v > best.get(label, (-1.0, -1))[0]:
                        best[label] = (v, m)
            self._label_hubs = {label: m for label, (_, m) in best.items()}

    def candidates(self, u: int, neighbors: dict[int, list[float]]) -> list[int]:
        source = self.module_of[u]
        found = set(neighbors)
        if self._hub is not None:
            found.add(self._hub)
        if self.node_labels is not None:
            for label in self.node_labels[u]:
                if label in self._label_hubs:
                    found.add(self._label_hubs[label])
        if self.mod_size[source] > 1:
            empty = self._empty_module()
            if empty is not None:
                found.add(empty)
        found.discard(source)
        return sorted(found)

    def sweep(self, rng: np.random.Generator, shuffle: bool = True) -> tuple[float, int]:
        """
        Visit every node once and apply its best strictly improving move.

        Returns:
            (total codelength decrease, number of moves)
        """
        self.refresh_hubs()
        order = rng.permutation(self.n_nodes) if shuffle else np.arange(self.n_nodes)
        improvement = 0.0
        moves = 0
        for u in order.tolist():
            neighbors = self.neighbor_flows(u)
            best_target, best_delta = None, -MIN_GAIN
            for target in self.candidates(u, neighbors):
                delta = self._evaluate(u, target, neighbors)[0]
                if delta < best_delta:
                    best_target, best_delta = target, delta
            if best_target is not None:
                self.apply_move(u, best_target, neighbors)
                improvement -= best_delta
                moves += 1
        return improvement, moves

    def aggregate(self) -> tuple["LevelState", np.ndarray]:
        """
        Merge every module into one super-node.

        Returns:
            (state of the next level, super-node id per node of this level)
        """
        _, relabel = np.unique(np.asarray(self.module_of, dtype=np.int64), return_inverse=True)
        relabel = relabel.astype(np.int64)
        k = int(relabel.max()) + 1
        n = self.n_nodes
        membership = sparse.csr_array((np.ones(n), (np.arange(n), relabel)), shape=(n, k))
        link = sparse.csr_array(membership.T @ self._link_out @ membership)

        def _merge(rows: np.ndarray) -> np.ndarray:
            if rows.shape[0] == 0:
                return np.zeros((0, k))
            return np.vstack([np.bincount(relabel, weights=row, minlength=k) for row in rows])

        node_labels = None
        if self.node_labels is not None:
            node_labels = [{} for _ in range(k)]
            for u, entries in enumerate(self.node_labels):
                merged = node_labels[relabel[u]]
                for label, (a, v) in entries.items():
                    a0, v0 = merged.get(label, (0.0, 0.0))
                    merged[label] = (a0 + a, v0 + v)

        state = LevelState(
            flow=np.bincount(relabel, weights=self.flow, minlength=k),
            link=link,
            channel_source=_merge(self.node_a),
            channel_target=_merge(self.node_v),
            coef=self.coef,
            channel_total=self.channel_total,
            node_labels=node_labels,
            label_coef=self.label_coef,
            label_total=self.label_total,
            node_entropy=self.node_entropy,
        )
        return state, relabel


def _adjacency_lists(matrix: sparse.csr_array) -> list[tuple[list[int], list[float]]]:
    indptr = matrix.indptr.tolist()
    indices = matrix.indices.tolist()
    data = matrix.data.tolist()
    return [
        (indices[indptr[u] : indptr[u + 1]], data[indptr[u] : indptr[u + 1]])
        for u in range(len(indptr) - 1)
    ]


# ============================================================================
# Search
# ============================================================================


def one_level_partition(g: MultiGraph) -> Partition:
    """Every node in module 0."""
    n = g.n_nodes
    return Partition(module_of=np.zeros(n, dtype=np.int64), n_modules=1 if n else 0)


def run_trial(flows: FlowField, cfg: SearchConfig, trial: int) -> np.ndarray:
    """One seeded local-move / aggregate run; returns a module id per node."""
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, trial]))
    state = LevelState.from_flows(flows)
    node_module = np.arange(flows.n_nodes, dtype=np.int64)
    for _ in range(cfg.max_outer_loops):
        start = state.codelength
        for _ in range(cfg.max_sweeps):
            improvement, moves = state.sweep(rng, cfg.shuffle)
            if moves == 0 or improvement < cfg.improvement_threshold:
                break
        if state.n_modules == state.n_nodes:
            break
        state, relabel = state.aggregate()
        node_module = relabel[node_module]
        if start - state.codelength < cfg.improvement_threshold:
            break
    return node_module


def optimize(g: MultiGraph, flows: FlowField, cfg: Optional[SearchConfig] = None) -> Partition:
    """
    Best two-level partition over `cfg.trials` seeded runs.

    Trial t draws its move orders from SeedSequence([cfg.seed, t]). The
    lowest codelength wins, ties going to the lower trial index, and the
    one-module partition is kept unless the best run beats it by more than
    `cfg.improvement_threshold`.

    Returns:
        Partition bound to `flows`
    """
    cfg = cfg or SearchConfig()
    if flows.n_nodes != g.n_nodes:
        raise ValidationError(f"flows cover {flows.n_nodes} nodes, network has {g.n_nodes}")
    if g.n_nodes == 0:
        return one_level_partition(g)
    one_level = one_level_partition(g).bind(flows)
    if g.n_nodes == 1:
        return one_level

    trials = range(cfg.trials)
    if cfg.workers > 1 and cfg.trials > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.workers, cfg.trials)) as pool:
            memberships = list(pool.map(run_trial, repeat(flows), repeat(cfg), trials))
    else:
        memberships = [run_trial(flows, cfg, t) for t in trials]

    best, best_length = one_level, math.inf
    for membership in memberships:
        candidate = Partition.from_membership(membership).bind(flows)
        length = codelength(flows, candidate)
        if length < best_length:
            best, best_length = candidate, length

    if best_length < codelength(flows, one_level) - cfg.improvement_threshold:
        return best
    return one_level
