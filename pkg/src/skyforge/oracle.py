"""Brute-force verification harness.

Everything here is deliberately independent of the search machinery: the
dominance predicate is re-implemented naively, the front comes from an O(n^2)
pairwise filter, and enumeration walks the whole bitmap space directly
instead of following any transition order.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .errors import ArgumentError, EnumerationCapError
from .measures import MeasureSet, TestLog, valuate
from .operators import SearchState, StateSpace
from .search import div_score
from .skyline import SkylineGrid, eps_dominates
from .tabular import UniversalTable


@dataclass
class EnumerationReport:
    total_states: int = 0
    degenerate: int = 0
    exact_front: list = field(default_factory=list)  # bitmap hex strings
    eps_cover_violations: list = field(default_factory=list)  # (hex, reason)
    pruned_validated: int = 0

    def ok(self) -> bool:
        return not self.eps_cover_violations

    def to_dict(self) -> dict:
        return {
            "total_states": self.total_states,
            "degenerate": self.degenerate,
            "exact_front": list(self.exact_front),
            "eps_cover_violations": [list(v) for v in self.eps_cover_violations],
            "pruned_validated": self.pruned_validated,
            "ok": self.ok(),
        }


def naive_dominates(a: Sequence[float], b: Sequence[float]) -> bool:
    # kept separate from skyline.dominates on purpose: this is the oracle
    no_worse = all(x <= y for x, y in zip(a, b))
    better = any(x < y for x, y in zip(a, b))
    return no_worse and better


def naive_exact_pareto(states: Sequence[SearchState]) -> list:
    out = []
    vectors = [s.perf.as_floats() for s in states]
    seen = set()
    for i, s in enumerate(states):
        if vectors[i] in seen:
            continue
        dominated = any(
            naive_dominates(vectors[j], vectors[i])
            for j in range(len(states)) if j != i
        )
        if not dominated:
            out.append(s)
            seen.add(vectors[i])
    return out


def state_count_bound(space: StateSpace) -> int:
    """Number of attribute-consistent bitmaps, empty schema excluded."""
    total = 1
    for a in space.universal.schema:
        bits = space.attr_bits[a]
        if a in space.protected:
            continue
        total *= 2 ** len(bits)
    return total - (0 if space.protected else 1)


def enumerate_all(universal: UniversalTable, estimator, measures: MeasureSet,
                  target: Optional[str] = None, max_bits: int = 20,
                  log: Optional[TestLog] = None) -> list:
    """Valuate every non-degenerate state of the instance.

    Walks the product of per-attribute literal subsets (the protected target,
    when given, always keeps its full set).  Refuses instances whose bitmap
    is longer than ``max_bits``.
    """
    protected = (target,) if target else ()
    space = StateSpace(universal, protected=protected)
    if space.n_bits > max_bits:
        raise EnumerationCapError(
            f"bitmap length {space.n_bits} exceeds the {max_bits}-bit enumeration cap",
            required=state_count_bound(space),
        )
    log = log if log is not None else TestLog()

    per_attr_choices = []
    for a in universal.schema:
        bits = space.attr_bits[a]
        if a in space.protected:
            per_attr_choices.append([tuple(bits)])
            continue
        subsets = []
        for r in range(len(bits) + 1):
            subsets.extend(itertools.combinations(bits, r))
        per_attr_choices.append(subsets)

    states = []
    for combo in itertools.product(*per_attr_choices):
        chosen = [i for subset in combo for i in subset]
        bitmap = space.bitmap_from_bits(chosen)
        if bitmap.bits == 0 or space.is_degenerate(bitmap):
            continue
        state = SearchState(bitmap, level=0)
        perf, _ = valuate(state, estimator, log, measures, space)
        states.append(state.valuated(perf))
    states.sort(key=lambda s: s.bitmap.bits)
    return states


def check_eps_cover(grid: SkylineGrid, all_states: Sequence[SearchState],
                    eps: float) -> EnumerationReport:
    """Assert every valuated in-bounds state is eps-dominated by an occupant."""
    report = EnumerationReport(total_states=len(all_states))
    occupants = list(grid.cells.values())
    for state in all_states:
        perf = state.perf
        in_bounds = all(
            float(perf.values[i]) <= spec.p_high
            for i, spec in enumerate(grid.measures.specs)
        )
        if not in_bounds:
            continue
        if not any(eps_dominates(o.perf, perf, eps) for o in occupants):
            report.eps_cover_violations.append(
                (state.bitmap.to_hex(), "no occupant eps-dominates this state")
            )
    report.exact_front = [s.bitmap.to_hex() for s in naive_exact_pareto(list(all_states))]
    return report


def check_div_bound(chosen: Sequence[SearchState], ground: Sequence[SearchState],
                    k: int, alpha: float, log: TestLog,
                    measures: MeasureSet) -> float:
    """Ratio of the chosen set's diversity to the best k-subset's.

    The caller asserts the streaming guarantee ``ratio >= 0.25``.
    """
    if len(ground) > 14:
        raise ArgumentError("ground set too large to enumerate (max 14)")
    if k > len(ground):
        raise ArgumentError("k exceeds the ground set size")
    best = 0.0
    for subset in itertools.combinations(ground, k):
        best = max(best, div_score(subset, alpha, log, measures))
    achieved = div_score(list(chosen), alpha, log, measures)
    if best == 0.0:
        return 1.0
    return achieved / best
