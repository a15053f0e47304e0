"""Privacy budget allocation over selected colors.

Budgets are computed as exact fractions of the total budget epsilon and only
converted to floats at the sampling boundary, so composition sums can be
checked with equality instead of tolerances.

The allocation walks the sharing partitions from most shared to exclusive.
For a shared color the proportional share is taken against each member
element's running pixel mass (initialized to the element's full mass) and the
minimum across members wins, which keeps every element within budget. In the
exclusive partition each element's remaining budget is split over its still
unallocated selected colors by their counts, which spends the remainder
exactly: the share of the last color always reaches 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from .analysis import Partitioning, RgbLedger
from .model import Rgb


class AllocationError(ValueError):
    """Inconsistent ledger or broken budget invariant."""


@dataclass
class BudgetAllocation:
    epsilon: float
    coeff: dict[Rgb, Fraction]            # share of epsilon per selected color
    ve_spent: dict[int, Fraction]         # per element: sum over its selected set
    ve_slack: dict[int, Fraction]         # per element: 1 - spent
    trace: list[dict] = field(default_factory=list)

    def epsilon_for(self, rgb: Rgb) -> float:
        c = self.coeff[rgb]
        return self.epsilon * c.numerator / c.denominator

    def report(self) -> dict:
        return {
            "epsilon": float(self.epsilon),
            "budgets": [
                {"rgb": list(rgb), "share": self.coeff[rgb]}
                for rgb in sorted(self.coeff)
            ],
            "ve_spent": {str(j): self.ve_spent[j] for j in sorted(self.ve_spent)},
            "ve_slack": {str(j): self.ve_slack[j] for j in sorted(self.ve_slack)},
        }


def allocate(partitioning: Partitioning, ledger: RgbLedger,
             epsilon: float) -> BudgetAllocation:
    """Run the partition-by-partition allocation; shares are exact fractions."""
    if epsilon <= 0:
        raise AllocationError("epsilon must be positive")
    members_of = partitioning.membership
    selected_sets = ledger.require_selection()
    ve_ids = sorted(selected_sets)

    remaining = {j: Fraction(1) for j in ve_ids}
    mass = {j: Fraction(ledger.ve_mass[j]) for j in ve_ids}
    selected_mass = {
        j: Fraction(sum(ledger.records[rgb].per_ve[j] for rgb in selected_sets[j]))
        for j in ve_ids
    }

    coeff: dict[Rgb, Fraction] = {}
    trace: list[dict] = []
    for level, partition in enumerate(partitioning.partitions, start=1):
        shared = partitioning.n - level + 1
        for rgb in partition:
            js = members_of[rgb]
            candidates = []
            for j in js:
                count = Fraction(ledger.records[rgb].per_ve[j])
                denom = mass[j] if shared > 1 else selected_mass[j]
                if denom <= 0:
                    raise AllocationError(
                        f"element {j} ran out of pixel mass with colors unallocated"
                    )
                candidates.append(count / denom * remaining[j])
            share = min(candidates)
            coeff[rgb] = share
            trace.append({
                "rgb": list(rgb),
                "partition": level,
                "members": list(js),
                "share": share,
            })
            for j in js:
                remaining[j] -= share
                if remaining[j] < 0:
                    raise AllocationError(f"element {j} overdrew its budget")
                count = Fraction(ledger.records[rgb].per_ve[j])
                mass[j] -= count
                selected_mass[j] -= count

    spent = {j: Fraction(1) - remaining[j] for j in ve_ids}
    slack = {j: remaining[j] for j in ve_ids}
    allocation = BudgetAllocation(
        epsilon=float(epsilon), coeff=coeff, ve_spent=spent, ve_slack=slack,
        trace=trace,
    )
    for rgb, share in coeff.items():
        rec = ledger.records.get(rgb)
        if rec is not None:
            rec.budget = share
    return allocation


@dataclass(frozen=True)
class CompositionReport:
    per_ve: dict[int, Fraction]           # sum of shares over the selected set
    slack_ves: tuple[int, ...]            # elements that could not spend everything
    suppressed_ves: tuple[int, ...]       # elements whose selected set is empty

    @property
    def fully_spent(self) -> bool:
        return not self.slack_ves

    def to_dict(self) -> dict:
        return {
            "per_ve": {str(j): self.per_ve[j] for j in sorted(self.per_ve)},
            "slack_ves": list(self.slack_ves),
            "suppressed_ves": list(self.suppressed_ves),
        }


def verify_composition(allocation: BudgetAllocation,
                       ledger: RgbLedger) -> CompositionReport:
    """Check the per-element budget sums; overspending is a hard error."""
    sums: dict[int, Fraction] = {}
    slack: list[int] = []
    suppressed: list[int] = []
    selected_sets = ledger.require_selection()
    for j in sorted(selected_sets):
        total = sum(
            (allocation.coeff[rgb] for rgb in selected_sets[j]),
            start=Fraction(0),
        )
        sums[j] = total
        if total > 1:
            raise AllocationError(
                f"element {j} was allocated {total} of the budget (over 1)"
            )
        if not selected_sets[j]:
            suppressed.append(j)
        elif total < 1:
            slack.append(j)
    return CompositionReport(
        per_ve=sums, slack_ves=tuple(slack), suppressed_ves=tuple(suppressed)
    )
