"""Three-attack, three-action worked example: normalised table, utilities and sums.

The published figures are rounded (some truncated) to three decimals, so comparisons
use an absolute tolerance of 1e-3.
"""
from __future__ import annotations

from .kb import KnowledgeBase, bundled_kb
from .planner import build_normalization, select_response, utility_table

TOLERANCE = 1e-3
DETECTED = ("E1", "E3")

# (action, attack) -> (normalised time, normalised cost)
NORMALISED = {
    ("a1", "E1"): (0.034, 0.111), ("a1", "E2"): (0.068, 0.333), ("a1", "E3"): (0.655, 1.000),
    ("a2", "E1"): (0.137, 0.555), ("a2", "E2"): (0.068, 0.444), ("a2", "E3"): (1.000, 1.000),
    ("a3", "E1"): (0.000, 0.000), ("a3", "E2"): (0.137, 0.666), ("a3", "E3"): (0.655, 1.000),
}
UTILITIES = {
    ("a1", "E1"): 0.087, ("a1", "E2"): 0.213, ("a1", "E3"): 0.188,
    ("a2", "E1"): 0.118, ("a2", "E2"): 0.066, ("a2", "E3"): 0.133,
    ("a3", "E1"): 0.000, ("a3", "E2"): 0.110, ("a3", "E3"): 0.037,
}
SUMS = {"a1": 0.275, "a2": 0.251, "a3": 0.037}
SELECTED = "a1"


def _grid(kb, title, cell_fmt, columns):
    attacks = kb.attack_ids
    header = "action  " + "  ".join(f"{e:^{len(columns) * 7 - 1}}" for e in attacks)
    sub = "        " + "  ".join(" ".join(f"{c:>6}" for c in columns) for _ in attacks)
    rows = [
        f"{a:<6}  " + "  ".join(" ".join(f"{v:6.3f}" for v in cell_fmt(a, e)) for e in attacks)
        for a in kb.action_ids
    ]
    return "\n".join([title, header, sub, *rows]) + "\n"


def run(kb: KnowledgeBase | None = None) -> tuple[str, list[str]]:
    """Render the three tables and return (report, list of mismatches)."""
    kb = kb or bundled_kb("table_ii")
    norm = build_normalization(kb)
    full = utility_table(kb, norm=norm)
    plan = select_response(kb, DETECTED)

    failures = []
    for (a, e), (t, c) in NORMALISED.items():
        cell = full.cell(a, e)
        for label, got, want in (("time", cell.norm_time, t), ("cost", cell.norm_cost, c)):
            if abs(got - want) > TOLERANCE:
                failures.append(f"normalised {label} {a}/{e}: {got:.4f} != {want:.3f}")
    for (a, e), want in UTILITIES.items():
        got = full.cell(a, e).utility
        if abs(got - want) > TOLERANCE:
            failures.append(f"utility {a}/{e}: {got:.4f} != {want:.3f}")
    sums = plan.table.sums
    for a, want in SUMS.items():
        if abs(sums[a] - want) > TOLERANCE:
            failures.append(f"sum {a}: {sums[a]:.4f} != {want:.3f}")
    if plan.selected_action_id != SELECTED:
        failures.append(f"selected {plan.selected_action_id} != {SELECTED}")

    parts = [
        _grid(kb, "Normalised knowledge base (T, C, P)",
              lambda a, e: (full.cell(a, e).norm_time, full.cell(a, e).norm_cost, full.cell(a, e).probability),
              ("T", "C", "P")),
        _grid(kb, "Utility per action and attack", lambda a, e: (full.cell(a, e).utility,), ("U",)),
        "Utility sums over detected attacks " + ",".join(DETECTED) + "\n",
    ]
    header = "action  " + "  ".join(f"{e:>6}" for e in DETECTED) + "     sum"
    rows = [f"{a:<6}  " + "  ".join(f"{plan.table.cell(a, e).utility:6.3f}" for e in DETECTED)
            + f"  {sums[a]:6.3f}" for a in kb.action_ids]
    parts.append("\n".join([header, *rows]) + "\n")
    parts.append(f"selected={plan.selected_action_id} eu={plan.expected_utility!r} attacks={','.join(DETECTED)}\n")
    return "\n".join(parts), failures
