"""Empirical verification of the sampling mechanism's privacy bounds.

The deterministic section re-checks, for every selected color, that the
binomial output-count ratio stays within the color's budget for each member
element, that the chosen count is maximal, and that per-element budget sums
never exceed the total (exact rational arithmetic). Counts up to 64 are
cross-checked against exact integer binomials.

The Monte-Carlo section runs the sampler many times on a video and on its
neighbor with one element removed, compares per-color output-set frequencies
(events need at least 30 hits on both sides; Wilson 99% intervals supply the
statistical slack), and reports the observed probability mass of outputs that
the neighbor could never produce.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from . import rng
from .analysis import CASE_RETAIN, RgbLedger
from .budget import BudgetAllocation
from .io import RunConfig
from .model import Rgb, VeAnnotation, Video
from .pipeline import Phase1Plan, prepare_phase1
from .sampler import (SampleBound, draw_subset, log_ratio, neighboring_video)

LOG_TOL = 1e-9
_WILSON_Z99 = 2.5758293035489004
MIN_EVENT_HITS = 30


class AuditFailure(AssertionError):
    """A deterministic privacy bound was violated: mechanism bug."""


def _exact_log_ratio(c_total: int, c_ve: int, x: int) -> float:
    if x > c_total - c_ve:
        return float("inf")
    return math.log(math.comb(c_total, x)) - math.log(math.comb(c_total - c_ve, x))


def mutate_bounds(bounds: dict, rgb: Rgb | None = None) -> dict:
    """Self-test helper: bump max_out by one for one color (or all of them)."""
    out = {}
    for key, bound in bounds.items():
        if rgb is None or key == rgb:
            out[key] = SampleBound(
                rgb=bound.rgb, c_total=bound.c_total, per_ve=dict(bound.per_ve),
                eps_rgb=bound.eps_rgb, max_out=bound.max_out + 1,
            )
        else:
            out[key] = bound
    return out


def audit_deterministic(ledger: RgbLedger, allocation: BudgetAllocation,
                        bounds: dict) -> dict:
    """Check every bound and budget sum; raises AuditFailure on violation."""
    per_rgb = []
    failures = []
    for rgb in sorted(bounds):
        bound = bounds[rgb]
        eps_rgb = bound.eps_rgb
        x = bound.max_out
        problems = []
        members = {j: c for j, c in bound.per_ve.items() if c > 0}
        for j, c_ve in sorted(members.items()):
            lr = log_ratio(bound.c_total, c_ve, x)
            if lr > eps_rgb + LOG_TOL:
                problems.append(f"ratio at x={x} exceeds budget for element {j}")
            if bound.c_total <= 64:
                exact = _exact_log_ratio(bound.c_total, c_ve, x)
                if exact > eps_rgb + LOG_TOL:
                    problems.append(f"exact ratio at x={x} exceeds budget for element {j}")
        if members:
            worst = max(members.values())
            lr_next = log_ratio(bound.c_total, worst, x + 1)
            if lr_next <= eps_rgb - LOG_TOL:
                problems.append("bound is not maximal: x+1 still satisfies the budget")
            if bound.c_total <= 64:
                exact_next = _exact_log_ratio(bound.c_total, worst, x + 1)
                if exact_next <= eps_rgb - LOG_TOL:
                    problems.append("exact check: x+1 still satisfies the budget")
        per_rgb.append({
            "rgb": list(rgb),
            "eps_rgb": eps_rgb,
            "max_out": x,
            "ok": not problems,
            "problems": problems,
        })
        if problems:
            failures.append(rgb)

    budget_sums = {}
    selected_sets = ledger.require_selection()
    for j in sorted(selected_sets):
        total = sum((allocation.coeff[r] for r in selected_sets[j]),
                    start=Fraction(0))
        budget_sums[str(j)] = {"num": total.numerator, "den": total.denominator}
        if total > 1:
            failures.append(("budget", j))
            per_rgb.append({
                "rgb": None, "ok": False,
                "problems": [f"element {j} budget sum exceeds epsilon"],
            })

    section = {
        "ok": not failures,
        "per_rgb": per_rgb,
        "budget_sums": budget_sums,
    }
    return section


def _wilson(count: int, total: int) -> tuple[float, float]:
    z = _WILSON_Z99
    p = count / total
    denom = 1.0 + z * z / total
    center = (p + z * z / (2 * total)) / denom
    half = z * math.sqrt(p * (1 - p) / total + z * z / (4 * total * total)) / denom
    return max(center - half, 1e-300), min(center + half, 1.0)


def _trial_events(plan: Phase1Plan, seed: int, trials: int,
                  side: int) -> tuple[dict[Rgb, dict[bytes, int]], list[list[bytes]]]:
    """Per-color output-set frequencies over seeded sampler trials."""
    active = [
        (rgb, plan.ledger.records[rgb], plan.bounds[rgb].max_out)
        for rgb in sorted(plan.bounds)
        if plan.bounds[rgb].max_out > 0
    ]
    counts: dict[Rgb, dict[bytes, int]] = {rgb: {} for rgb, _, _ in active}
    per_trial: list[list[bytes]] = []
    for i in range(trials):
        trial_seed = rng.mix64(seed, rng.TRIAL, side, i)
        row = []
        for rgb, rec, x in active:
            idx = draw_subset(trial_seed, rgb, rec.total, x)
            key = rec.positions[idx].tobytes()
            table = counts[rgb]
            table[key] = table.get(key, 0) + 1
            row.append(key)
        per_trial.append(row)
    return counts, per_trial


@dataclass
class AuditReport:
    epsilon_target: float
    deterministic: dict
    monte_carlo: dict | None = None
    trials: int = 0
    seed: int = 0

    @property
    def deterministic_ok(self) -> bool:
        return bool(self.deterministic.get("ok"))

    def to_dict(self) -> dict:
        return {
            "epsilon_target": self.epsilon_target,
            "deterministic": self.deterministic,
            "monte_carlo": self.monte_carlo,
            "trials": self.trials,
            "seed": self.seed,
        }


def audit_monte_carlo(video: Video, annotation: VeAnnotation, ve_id: int,
                      config: RunConfig, trials: int,
                      plan: Phase1Plan | None = None) -> dict:
    """Compare sampler output distributions with and without one element."""
    if trials < 1000:
        raise ValueError("too few trials for any meaningful frequency bound")
    if plan is None:
        plan = prepare_phase1(video, annotation, config)
    other_video, other_ann = neighboring_video(video, plan.annotation, ve_id)
    other_plan = prepare_phase1(other_video, other_ann, config)

    counts_v, per_trial_v = _trial_events(plan, config.seed, trials, side=0)
    counts_w, _ = _trial_events(other_plan, config.seed, trials, side=1)

    # Which outputs can the neighbor produce at all, per color?
    possible: dict[Rgb, tuple[int, set[bytes] | None]] = {}
    for rgb in counts_v:
        rec_w = other_plan.ledger.records.get(rgb)
        bound_w = other_plan.bounds.get(rgb)
        if rec_w is None:
            possible[rgb] = (-1, None)
        elif rec_w.case == CASE_RETAIN:
            # Retained outright on the neighbor side: its single output is
            # the full position set.
            possible[rgb] = (rec_w.total, {rec_w.positions.tobytes()})
        elif bound_w is None:
            possible[rgb] = (0, set())
        else:
            possible[rgb] = (bound_w.max_out, None)  # any subset of its positions

    removed_positions: dict[Rgb, set[bytes]] = {}
    labels = plan.annotation.labels
    for rgb in counts_v:
        rec = plan.ledger.records[rgb]
        pos = rec.positions
        inside = labels[pos[:, 0], pos[:, 1], pos[:, 2]] == ve_id
        removed_positions[rgb] = {row.tobytes() for row in pos[inside]}

    row_bytes = 12  # one (t, a, b) int32 row

    def impossible(rgb: Rgb, key: bytes) -> bool:
        x_w, explicit = possible[rgb]
        n_rows = len(key) // row_bytes
        if explicit is not None:
            return key not in explicit
        if n_rows != x_w:
            return True
        removed = removed_positions[rgb]
        if removed:
            for off in range(0, len(key), row_bytes):
                if key[off:off + row_bytes] in removed:
                    return True
        return False

    impossible_cache: dict[tuple[Rgb, bytes], bool] = {}
    rgbs = sorted(counts_v)
    impossible_trials = 0
    for row in per_trial_v:
        bad = False
        for rgb, key in zip(rgbs, row):
            flag = impossible_cache.get((rgb, key))
            if flag is None:
                flag = impossible(rgb, key)
                impossible_cache[(rgb, key)] = flag
            if flag:
                bad = True
                break
        if bad:
            impossible_trials += 1
    delta_hat = impossible_trials / trials

    per_rgb = []
    max_log_ratio = 0.0
    ratio_violations = 0
    for rgb in rgbs:
        table_v = counts_v[rgb]
        table_w = counts_w.get(rgb, {})
        rec = plan.ledger.records[rgb]
        x = plan.bounds[rgb].max_out
        space = math.comb(rec.total, x)

        # Uniformity of the subset draw against the closed form 1 / C(c, x).
        uniform = None
        if space <= 4096:
            p = 1.0 / space
            sigma = math.sqrt(p * (1 - p) / trials)
            worst = 0.0
            for key in table_v:
                worst = max(worst, abs(table_v[key] / trials - p))
            # Events never observed still deviate by p from their target.
            if len(table_v) < space:
                worst = max(worst, p)
            uniform = {
                "event_space": space,
                "observed_events": len(table_v),
                "max_abs_deviation": worst,
                "three_sigma": 3 * sigma,
                "within_3_sigma": worst <= 3 * sigma,
            }

        eps_rgb = plan.bounds[rgb].eps_rgb
        common = 0
        excluded = 0
        rgb_max_lr = 0.0
        for key, n_v in table_v.items():
            n_w = table_w.get(key, 0)
            if n_v < MIN_EVENT_HITS or n_w < MIN_EVENT_HITS:
                excluded += 1
                continue
            common += 1
            lr = abs(math.log(n_v / trials) - math.log(n_w / trials))
            rgb_max_lr = max(rgb_max_lr, lr)
            lo_v, hi_v = _wilson(n_v, trials)
            lo_w, hi_w = _wilson(n_w, trials)
            floor = max(math.log(lo_v) - math.log(hi_w),
                        math.log(lo_w) - math.log(hi_v))
            if floor > eps_rgb:
                ratio_violations += 1
        max_log_ratio = max(max_log_ratio, rgb_max_lr)
        per_rgb.append({
            "rgb": list(rgb),
            "c_total": rec.total,
            "max_out": x,
            "max_out_neighbor": possible[rgb][0],
            "eps_rgb": eps_rgb,
            "events_v": len(table_v),
            "common_events": common,
            "excluded_events": excluded,
            "max_log_ratio": rgb_max_lr,
            "uniformity": uniform,
        })

    return {
        "removed_ve": ve_id,
        "trials": trials,
        "per_rgb": per_rgb,
        "max_log_ratio": max_log_ratio,
        "ratio_violations": ratio_violations,
        "delta_hat": delta_hat,
    }


def run_audit(video: Video, annotation: VeAnnotation, ve_id: int,
              config: RunConfig, trials: int,
              inject_x_plus_1: bool = False) -> AuditReport:
    plan = prepare_phase1(video, annotation, config)
    bounds = mutate_bounds(plan.bounds) if inject_x_plus_1 else plan.bounds
    deterministic = audit_deterministic(plan.ledger, plan.allocation, bounds)
    monte_carlo = None
    if trials > 0 and deterministic["ok"]:
        monte_carlo = audit_monte_carlo(video, annotation, ve_id, config,
                                        trials, plan=plan)
    return AuditReport(
        epsilon_target=config.epsilon,
        deterministic=deterministic,
        monte_carlo=monte_carlo,
        trials=trials,
        seed=config.seed,
    )
