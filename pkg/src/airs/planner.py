"""Expected-utility selection of a response action."""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from .kb import KnowledgeBase


class PlanningError(ValueError):
    pass


@dataclass(frozen=True)
class NormalizationContext:
    time_min: float
    time_max: float
    cost_min: float
    cost_max: float

    def __post_init__(self):
        if self.time_min > self.time_max or self.cost_min > self.cost_max:
            raise ValueError("normalization range with min > max")

    def time(self, raw: float) -> float:
        return normalize(raw, self.time_min, self.time_max)

    def cost(self, raw: float) -> float:
        return normalize(raw, self.cost_min, self.cost_max)


def normalize(raw: float, lo: float, hi: float) -> float:
    """Min-max scale `raw` onto [0, 1]; a degenerate range maps to 0.

    Computed on exact rationals so the result is the correctly rounded quotient.
    """
    if lo > hi:
        raise ValueError(f"min {lo} > max {hi}")
    if not lo <= raw <= hi:
        raise ValueError(f"{raw} outside [{lo}, {hi}]")
    if lo == hi:
        return 0.0
    return float((Fraction(raw) - Fraction(lo)) / (Fraction(hi) - Fraction(lo)))


def build_normalization(kb: KnowledgeBase) -> NormalizationContext:
    if not kb.profiles:
        raise PlanningError("knowledge base has no profiles")
    times = [p.time for p in kb.profiles]
    costs = [p.cost for p in kb.profiles]
    return NormalizationContext(min(times), max(times), min(costs), max(costs))


def utility_cell(probability: float, norm_cost: float, norm_time: float) -> float:
    return probability / (norm_cost + norm_time + 1.0)


@dataclass(frozen=True)
class UtilityCell:
    action_id: str
    attack_id: str
    norm_time: float
    norm_cost: float
    probability: float
    utility: float


@dataclass(frozen=True)
class UtilityTable:
    action_ids: tuple
    attack_ids: tuple
    cells: dict  # (action_id, attack_id) -> UtilityCell

    def cell(self, action_id: str, attack_id: str) -> UtilityCell:
        return self.cells[(action_id, attack_id)]

    @property
    def sums(self) -> dict:
        return {a: expected_utility(a, self.attack_ids, self.cells) for a in self.action_ids}


def utility_table(kb: KnowledgeBase, attack_ids: Sequence[str] | None = None,
                  norm: NormalizationContext | None = None) -> UtilityTable:
    """Utility cells for every action over `attack_ids` (all attacks by default)."""
    norm = norm or build_normalization(kb)
    attack_ids = tuple(kb.attack_ids if attack_ids is None else attack_ids)
    cells = {}
    for action_id in kb.action_ids:
        for attack_id in attack_ids:
            p = kb.profile(action_id, attack_id)
            nt, nc = norm.time(p.time), norm.cost(p.cost)
            cells[(action_id, attack_id)] = UtilityCell(
                action_id, attack_id, nt, nc, p.probability, utility_cell(p.probability, nc, nt))
    return UtilityTable(tuple(kb.action_ids), attack_ids, cells)


def expected_utility(action_id: str, detected_attacks: Iterable[str], cells: dict) -> float:
    total = 0.0
    for attack_id in detected_attacks:
        try:
            total += cells[(action_id, attack_id)].utility
        except KeyError:
            raise PlanningError(f"no utility cell for {(action_id, attack_id)}") from None
    return total


@dataclass(frozen=True)
class ResponsePlan:
    selected_action_id: str
    expected_utility: float
    detected_attacks: tuple
    table: UtilityTable
    decided_at: int = 0


def select_response(kb: KnowledgeBase, detected_attacks: Iterable[str], decided_at: int = 0) -> ResponsePlan:
    """Pick the action with the largest utility sum over the detected attacks.

    Ties go to the action declared first in the knowledge base.
    """
    detected = tuple(dict.fromkeys(detected_attacks))
    if not detected:
        raise PlanningError("no detected attacks to respond to")
    unknown = [a for a in detected if a not in kb.attack_ids]
    if unknown:
        raise PlanningError(f"unknown attack ids: {unknown}")
    table = utility_table(kb, detected)
    sums = table.sums
    best = kb.action_ids[0]
    for action_id in kb.action_ids[1:]:
        if sums[action_id] > sums[best]:
            best = action_id
    return ResponsePlan(best, sums[best], detected, table, decided_at)


def format_plan(plan: ResponsePlan, digits: int = 3) -> str:
    table = plan.table
    header = ["action", *table.attack_ids, "sum"]
    rows = []
    sums = table.sums
    for action_id in table.action_ids:
        rows.append([action_id, *(f"{table.cell(action_id, e).utility:.{digits}f}" for e in table.attack_ids),
                     f"{sums[action_id]:.{digits}f}"])
    widths = [max(len(r[c]) for r in [header, *rows]) for c in range(len(header))]
    lines = ["  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip() for r in [header, *rows]]
    lines.append(f"selected={plan.selected_action_id} eu={plan.expected_utility!r} "
                 f"attacks={','.join(plan.detected_attacks)}")
    return "\n".join(lines) + "\n"
