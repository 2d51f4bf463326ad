"""The three generation algorithms over the running graph.

``run_apx``   level-wise reduce-from-universal search.
``run_bi``    bidirectional search (reducts forward, augments backward) with
              optional correlation-based pruning; pruning off is the
              no-pruning variant.
``run_div``   bidirectional search whose per-level survivors are greedily
              diversified down to k states before expansion continues.

Everything is deterministic: children valuate and submit in bitmap order,
queues advance level by level, and no RNG is involved anywhere.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .errors import ArgumentError, EstimatorFailure
from .measures import (
    Bounds,
    CorrelationGraph,
    MeasureSet,
    PerfVector,
    TestLog,
    build_correlation_graph,
    estimate_bounds,
    valuate,
)
from .operators import BACKWARD, FORWARD, Bitmap, SearchState, StateSpace, Transition
from .skyline import SkylineGrid
from .tabular import UniversalTable

ALGORITHMS = ("apx", "bi", "nobi", "div")


@dataclass
class SearchConfig:
    epsilon: float
    budget: int = 2**31
    max_len: Optional[int] = None
    algorithm: str = "apx"
    k: int = 0
    alpha: float = 0.5
    theta: float = 0.8
    target: Optional[str] = None
    workers: int = 1
    cache_size: int = 256

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ArgumentError("epsilon must be positive")
        if self.budget < 1:
            raise ArgumentError("budget must be at least 1")
        if self.algorithm not in ALGORITHMS:
            raise ArgumentError(f"unknown algorithm {self.algorithm!r}")
        if self.algorithm == "div" and self.k < 1:
            raise ArgumentError("diversified search needs k >= 1")
        if not 0.0 <= self.alpha <= 1.0:
            raise ArgumentError("alpha must lie in [0, 1]")


@dataclass
class RunningGraph:
    """DAG of explored states connected by one-flip transitions."""

    nodes: dict = field(default_factory=dict)   # bits -> SearchState (valuated)
    edges: list = field(default_factory=list)
    roots: list = field(default_factory=list)
    parents: dict = field(default_factory=dict)  # bits -> first inbound Transition

    def add_root(self, state: SearchState):
        self.roots.append(state.bitmap)
        self.nodes[state.bitmap.bits] = state

    def add_edge(self, transition: Transition):
        self.edges.append(transition)
        self.parents.setdefault(transition.target.bits, transition)

    def add_node(self, state: SearchState):
        self.nodes[state.bitmap.bits] = state

    def path_to(self, bitmap: Bitmap) -> list:
        """Operator path from a root to the bitmap, for provenance replay."""
        path = []
        bits = bitmap.bits
        root_bits = {b.bits for b in self.roots}
        while bits not in root_bits:
            edge = self.parents.get(bits)
            if edge is None:
                raise ArgumentError(f"no recorded path to bitmap {bits:x}")
            path.append(edge)
            bits = edge.source.bits
        path.reverse()
        return path


@dataclass(frozen=True)
class PrunedState:
    bitmap: Bitmap
    forward: Bitmap
    backward: Bitmap
    level: int


@dataclass
class RunResult:
    grid: SkylineGrid
    graph: RunningGraph
    log: TestLog
    algorithm: str
    valuations: int = 0
    partial: bool = False
    failure: Optional[str] = None
    pruned: list = field(default_factory=list)
    div_set: list = field(default_factory=list)

    def as_tuple(self):
        return self.grid, self.graph, self.log


def back_st(space: StateSpace, target: str) -> SearchState:
    """Minimal backward start: the target attribute with all of its value
    clusters retained, so no class of the target is missed.

    When the estimator needs a feature column, the first non-target
    attribute's first literal joins the bitmap (fixed deterministic choice).
    """
    u = space.universal
    if target not in u.schema:
        raise ArgumentError(f"target {target!r} not in universal schema")
    bits = list(space.attr_bits[target])
    if not bits:
        raise ArgumentError(f"target {target!r} has no literals")
    if getattr(space, "_needs_feature", False):
        for a in u.schema:
            if a != target and space.attr_bits[a]:
                bits.append(space.attr_bits[a][0])
                break
    return SearchState(space.bitmap_from_bits(bits), level=0)


def _bounds_of(state: SearchState, space: StateSpace, log: TestLog,
               graph: CorrelationGraph, measures: MeasureSet) -> PerfVector:
    if state.perf is not None and state.perf.is_fully_valuated():
        return state.perf
    return estimate_bounds(state.bitmap, space.row_count(state.bitmap),
                           log, graph, measures)


def param_eps_dominates(a: PerfVector, b: PerfVector, eps: float) -> bool:
    """Interval form of eps-dominance of ``b`` by ``a``.

    Valuated entries are point intervals, so all the mixed cases collapse to
    upper(a) <= (1+eps) * lower(b) per measure.  Any unvaluated-and-unbounded
    entry makes the relation indeterminate, reported as False.
    """
    if len(a) != len(b):
        raise ArgumentError("vectors cover different measure sets")
    factor = 1.0 + eps
    for i in range(len(a)):
        ua, lb = a.upper(i), b.lower(i)
        if ua is None or lb is None:
            return False
        if ua > factor * lb:
            return False
    return True


def _informative(bounds: PerfVector, measures: MeasureSet) -> bool:
    for i, spec in enumerate(measures.specs):
        v = bounds.values[i]
        if isinstance(v, Bounds):
            if (v.lo, v.hi) != (spec.p_low, spec.p_high):
                return True
        elif v is not None:
            return True
    return False


def can_prune(s_mid: SearchState, fwd: SearchState, bwd: SearchState, eps: float,
              graph: CorrelationGraph, log: TestLog, measures: MeasureSet,
              space: StateSpace) -> bool:
    """Skip ``s_mid`` without valuating it?

    Requires: the mid state sandwiched between the endpoints by bitmap
    containment, the backward endpoint interval-dominating the forward one
    within (1+eps), and the same interval relation holding against the mid's
    own estimated bounds, so an already-valuated state eps-dominates whatever
    value the mid could take.  A mid whose bounds all come from the declared
    measure ranges carries no evidence and is never pruned; with an empty
    correlation graph no bounds are derivable at all.
    """
    if graph.is_empty():
        return False
    if s_mid.bitmap.bits in (fwd.bitmap.bits, bwd.bitmap.bits):
        return False
    if not (fwd.bitmap.contains(s_mid.bitmap) and s_mid.bitmap.contains(bwd.bitmap)):
        return False
    fwd_b = _bounds_of(fwd, space, log, graph, measures)
    bwd_b = _bounds_of(bwd, space, log, graph, measures)
    if not param_eps_dominates(bwd_b, fwd_b, eps):
        return False
    mid_b = estimate_bounds(s_mid.bitmap, space.row_count(s_mid.bitmap),
                            log, graph, measures)
    if not _informative(mid_b, measures):
        return False
    return param_eps_dominates(bwd_b, mid_b, eps)


# -- diversification ---------------------------------------------------------


def _euc(a: PerfVector, b: PerfVector) -> float:
    return math.sqrt(sum((x - y) ** 2 for x, y in zip(a.as_floats(), b.as_floats())))


def _euc_max(log: TestLog, measures: MeasureSet) -> float:
    cached = getattr(log, "_euc_max_cache", None)
    if cached is not None and cached[0] == log.version:
        return cached[1]
    vectors = [e.perf for e in log if e.perf.is_fully_valuated()]
    if len(vectors) < 2:
        value = math.sqrt(len(measures))
    else:
        value = 0.0
        for i in range(len(vectors)):
            for j in range(i + 1, len(vectors)):
                value = max(value, _euc(vectors[i], vectors[j]))
        if value == 0.0:
            value = math.sqrt(len(measures))
    log._euc_max_cache = (log.version, value)
    return value


def dis_score(a: SearchState, b: SearchState, alpha: float, log: TestLog,
              measures: MeasureSet) -> float:
    """Blend of bitmap cosine dissimilarity and normalized performance
    distance, in [0, 1]."""
    if a.bitmap.length != b.bitmap.length:
        raise ArgumentError("bitmaps have different lengths")
    if a.perf is None or b.perf is None:
        raise ArgumentError("dis_score needs valuated states")
    na, nb = a.bitmap.popcount(), b.bitmap.popcount()
    if na == 0 or nb == 0:
        cos = 0.0  # cosine undefined on a zero bitmap
    else:
        common = (a.bitmap.bits & b.bitmap.bits).bit_count()
        cos = common / math.sqrt(na * nb)
    euc_m = _euc_max(log, measures)
    euc = _euc(a.perf, b.perf) / euc_m if euc_m > 0 else 0.0
    score = alpha * (1.0 - cos) / 2.0 + (1.0 - alpha) * euc
    return min(max(score, 0.0), 1.0)


def div_score(states: Sequence[SearchState], alpha: float, log: TestLog,
              measures: MeasureSet) -> float:
    total = 0.0
    for i in range(len(states)):
        for j in range(i + 1, len(states)):
            total += dis_score(states[i], states[j], alpha, log, measures)
    return total


def diversify_level(level_set: Sequence[SearchState], k: int, alpha: float,
                    log: TestLog, measures: MeasureSet) -> list:
    """Greedy swap diversification of one level's survivors down to k.

    Seeds with the first k states in bitmap order, then gives every seed
    member one chance to be replaced by the outside state that most improves
    the summed pairwise distance.
    """
    if k < 1:
        raise ArgumentError("k must be at least 1")
    states = list(level_set)
    if len(states) <= k:
        return states

    pair_cache: dict = {}

    def dis(a: SearchState, b: SearchState) -> float:
        key = (min(a.bitmap.bits, b.bitmap.bits), max(a.bitmap.bits, b.bitmap.bits))
        if key not in pair_cache:
            pair_cache[key] = dis_score(a, b, alpha, log, measures)
        return pair_cache[key]

    def score(members: list) -> float:
        total = 0.0
        for i in range(len(members)):
            for j in range(i + 1, len(members)):
                total += dis(members[i], members[j])
        return total

    ordered = sorted(states, key=lambda s: s.bitmap.bits)
    chosen = ordered[:k]
    best_score = score(chosen)
    for seed in list(chosen):
        if seed not in chosen:
            continue
        best_swap = None
        for candidate in ordered:
            if any(candidate.bitmap.bits == m.bitmap.bits for m in chosen):
                continue
            trial = [m for m in chosen if m is not seed] + [candidate]
            trial_score = score(trial)
            if trial_score > best_score and (
                best_swap is None or trial_score > best_swap[0]
            ):
                best_swap = (trial_score, candidate)
        if best_swap is not None:
            chosen = [m for m in chosen if m is not seed] + [best_swap[1]]
            best_score = best_swap[0]
    return sorted(chosen, key=lambda s: s.bitmap.bits)


# -- the level-wise runner ----------------------------------------------------


class _BudgetExhausted(Exception):
    pass


class _Runner:
    def __init__(self, universal: UniversalTable, measures: MeasureSet,
                 estimator, cfg: SearchConfig):
        protected = (cfg.target,) if cfg.target else ()
        self.space = StateSpace(universal, protected=protected,
                                cache_size=cfg.cache_size)
        self.space._needs_feature = bool(getattr(estimator, "requires_feature", False))
        self.measures = measures
        self.estimator = estimator
        self.cfg = cfg
        self.grid = SkylineGrid(cfg.epsilon, measures)
        self.log = TestLog()
        self.graph = RunningGraph()
        self.valuations = 0
        self._corr_cache = None

    def corr_graph(self) -> CorrelationGraph:
        if self._corr_cache is None or self._corr_cache[0] != self.log.version:
            graph = build_correlation_graph(self.log, self.cfg.theta, self.measures)
            self._corr_cache = (self.log.version, graph)
        return self._corr_cache[1]

    def valuate_one(self, state: SearchState) -> SearchState:
        cached = self.log.get(state.bitmap)
        if cached is not None and cached.perf.is_fully_valuated():
            return state.valuated(cached.perf)
        if self.valuations >= self.cfg.budget:
            raise _BudgetExhausted
        perf, invoked = valuate(state, self.estimator, self.log, self.measures,
                                self.space)
        if invoked:
            self.valuations += 1
        return state.valuated(perf)

    def valuate_level(self, children: list) -> tuple:
        """Valuate a sorted batch; returns (valuated, budget_hit).

        With several workers the estimator calls overlap but results apply
        in the given order, keeping runs reproducible.
        """
        out = []
        if self.cfg.workers > 1:
            fresh = [c for c in children
                     if self.log.get(c.bitmap) is None][: max(self.cfg.budget - self.valuations, 0)]
            if fresh:
                with ThreadPoolExecutor(max_workers=self.cfg.workers) as pool:
                    list(pool.map(
                        lambda s: valuate(s, self.estimator, self.log,
                                          self.measures, self.space),
                        fresh,
                    ))
                self.valuations += len(fresh)
        for child in children:
            try:
                out.append(self.valuate_one(child))
            except _BudgetExhausted:
                return out, True
        return out, False

    def expand(self, frontier: list, direction: str, seen: set) -> list:
        children = []
        for state in frontier:
            for child, transition in self.space.op_gen(state, direction):
                self.graph.add_edge(transition)
                if child.bitmap.bits in seen:
                    continue
                seen.add(child.bitmap.bits)
                children.append(child)
        children.sort(key=lambda s: s.bitmap.bits)
        return children

    def submit(self, state: SearchState) -> str:
        self.graph.add_node(state)
        return self.grid.submit(state)

    def start_root(self, state: SearchState) -> SearchState:
        valuated = self.valuate_one(state)
        self.graph.add_root(valuated)
        self.grid.submit(valuated)
        return valuated

    def result(self, algorithm: str, **kw) -> RunResult:
        return RunResult(grid=self.grid, graph=self.graph, log=self.log,
                         algorithm=algorithm, valuations=self.valuations, **kw)


def run_apx(universal: UniversalTable, measures: MeasureSet, estimator,
            cfg: SearchConfig) -> RunResult:
    """Reduce-from-universal search: breadth-first reducts from the full
    bitmap, each valuated child submitted to the grid."""
    runner = _Runner(universal, measures, estimator, cfg)
    try:
        root = runner.start_root(runner.space.root_state())
    except _BudgetExhausted:
        return runner.result("apx")
    except EstimatorFailure as exc:
        return runner.result("apx", partial=True, failure=str(exc))

    frontier = [root]
    seen = {root.bitmap.bits}
    level = 0
    try:
        while frontier:
            if cfg.max_len is not None and level >= cfg.max_len:
                break
            children = runner.expand(frontier, FORWARD, seen)
            valuated, budget_hit = runner.valuate_level(children)
            for child in valuated:
                runner.submit(child)
            if budget_hit:
                break
            frontier = valuated
            level += 1
    except EstimatorFailure as exc:
        return runner.result("apx", partial=True, failure=str(exc))
    return runner.result("apx")


def run_bi(universal: UniversalTable, measures: MeasureSet, estimator,
           cfg: SearchConfig, pruning: bool = True) -> RunResult:
    """Bidirectional search; ``pruning=False`` is the no-pruning variant."""
    if not cfg.target:
        raise ArgumentError("bidirectional search needs a target attribute")
    algorithm = "bi" if pruning else "nobi"
    runner = _Runner(universal, measures, estimator, cfg)
    try:
        fwd_root = runner.start_root(runner.space.root_state())
        bwd_start = back_st(runner.space, cfg.target)
        if bwd_start.bitmap.bits == fwd_root.bitmap.bits:
            return runner.result(algorithm)
        bwd_root = runner.start_root(bwd_start)
    except _BudgetExhausted:
        return runner.result(algorithm)
    except EstimatorFailure as exc:
        return runner.result(algorithm, partial=True, failure=str(exc))

    fwd_frontier, bwd_frontier = [fwd_root], [bwd_root]
    seen_f = {fwd_root.bitmap.bits}
    seen_b = {bwd_root.bitmap.bits}
    regions: list = []  # validated (forward state, backward state) pairs
    pruned: list = []
    pruned_bits: set = set()  # once pruned, never revisited from either side
    div_set: list = []
    level = 0

    def try_prune(child: SearchState) -> bool:
        if not pruning or not regions:
            return False
        if child.bitmap.bits in pruned_bits:
            return True
        cached = runner.log.get(child.bitmap)
        if cached is not None and cached.perf.is_fully_valuated():
            return False  # nothing to save: valuation is a cache hit
        graph = runner.corr_graph()
        if graph.is_empty():
            return False
        for f_state, b_state in regions:
            if can_prune(child, f_state, b_state, cfg.epsilon, graph,
                         runner.log, measures, runner.space):
                pruned.append(PrunedState(child.bitmap, f_state.bitmap,
                                          b_state.bitmap, child.level))
                pruned_bits.add(child.bitmap.bits)
                return True
        return False

    try:
        while fwd_frontier or bwd_frontier:
            if cfg.max_len is not None and level >= cfg.max_len:
                break
            if fwd_frontier and bwd_frontier:
                if {s.bitmap.bits for s in fwd_frontier} & {s.bitmap.bits for s in bwd_frontier}:
                    break  # frontiers met: every candidate between is explored
            new_f = runner.expand(fwd_frontier, FORWARD, seen_f)
            new_b = runner.expand(bwd_frontier, BACKWARD, seen_b)

            budget_hit = False
            valuated_f: list = []
            valuated_b: list = []
            for bucket, children in ((valuated_f, new_f), (valuated_b, new_b)):
                kept = [c for c in children if not try_prune(c)]
                got, hit = runner.valuate_level(kept)
                for child in got:
                    runner.submit(child)
                bucket.extend(got)
                if hit:
                    budget_hit = True
                    break

            if pruning:
                for f_state in valuated_f:
                    for b_state in valuated_b:
                        if f_state.bitmap.bits == b_state.bitmap.bits:
                            continue
                        if not f_state.bitmap.contains(b_state.bitmap):
                            continue
                        if param_eps_dominates(b_state.perf, f_state.perf, cfg.epsilon):
                            regions.append((f_state, b_state))

            if budget_hit:
                break

            if cfg.algorithm == "div" and cfg.k >= 1:
                unique: dict = {}
                for s in valuated_f + valuated_b:
                    unique.setdefault(s.bitmap.bits, s)
                pool = list(unique.values())
                chosen = diversify_level(pool, cfg.k, cfg.alpha, runner.log, measures)
                div_set = chosen
                chosen_bits = {s.bitmap.bits for s in chosen}
                valuated_f = [s for s in valuated_f if s.bitmap.bits in chosen_bits]
                valuated_b = [s for s in valuated_b if s.bitmap.bits in chosen_bits]

            fwd_frontier, bwd_frontier = valuated_f, valuated_b
            level += 1
    except EstimatorFailure as exc:
        return runner.result(algorithm, partial=True, failure=str(exc),
                             pruned=pruned, div_set=div_set)
    return runner.result(algorithm, pruned=pruned, div_set=div_set)


def run_div(universal: UniversalTable, measures: MeasureSet, estimator,
            cfg: SearchConfig) -> RunResult:
    """Diversified bidirectional search: each level's survivors are pruned,
    grid-submitted, then thinned to the k most mutually distant states."""
    if cfg.k < 1:
        raise ArgumentError("diversified search needs k >= 1")
    div_cfg = SearchConfig(
        epsilon=cfg.epsilon, budget=cfg.budget, max_len=cfg.max_len,
        algorithm="div", k=cfg.k, alpha=cfg.alpha, theta=cfg.theta,
        target=cfg.target, workers=cfg.workers, cache_size=cfg.cache_size,
    )
    result = run_bi(universal, measures, estimator, div_cfg, pruning=True)
    result.algorithm = "div"
    return result


def run_algorithm(universal: UniversalTable, measures: MeasureSet, estimator,
                  cfg: SearchConfig) -> RunResult:
    if cfg.algorithm == "apx":
        return run_apx(universal, measures, estimator, cfg)
    if cfg.algorithm == "bi":
        return run_bi(universal, measures, estimator, cfg, pruning=True)
    if cfg.algorithm == "nobi":
        return run_bi(universal, measures, estimator, cfg, pruning=False)
    if cfg.algorithm == "div":
        return run_div(universal, measures, estimator, cfg)
    raise ArgumentError(f"unknown algorithm {cfg.algorithm!r}")
