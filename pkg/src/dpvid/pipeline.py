"""End-to-end orchestration: classify colors, pick k per element, allocate
budgets, bound output counts, sample, and interpolate."""

from __future__ import annotations

from dataclasses import dataclass, field

from .analysis import (Partitioning, RgbLedger, classify_rgbs, prioritize,
                       select_representatives)
from .budget import (BudgetAllocation, CompositionReport, allocate,
                     verify_composition)
from .expectation import KChoice, choose_k
from .interpolate import InterpolationStats, interpolate_with_stats
from .io import RunConfig
from .model import SampledVideo, VeAnnotation, Video
from .sampler import SampleBound, compute_bounds, sample_phase1


@dataclass
class Phase1Plan:
    """Everything the sampler needs, derived deterministically from the input."""

    annotation: VeAnnotation          # non-sensitive elements already folded away
    ledger: RgbLedger
    k_by_ve: dict[int, int]
    k_choices: dict[int, KChoice] = field(default_factory=dict)
    partitioning: Partitioning | None = None
    allocation: BudgetAllocation | None = None
    bounds: dict[tuple, SampleBound] = field(default_factory=dict)


def prepare_phase1(video: Video, annotation: VeAnnotation,
                   config: RunConfig) -> Phase1Plan:
    if not annotation.congruent_with(video):
        raise ValueError("annotation dimensions do not match the video")
    sensitive = (frozenset(config.sensitive_ves)
                 if config.sensitive_ves is not None
                 else frozenset(annotation.ve_ids()))
    effective = annotation
    if sensitive != frozenset(annotation.ve_ids()):
        effective = annotation.restrict_to(sensitive)

    ledger = classify_rgbs(video, effective)
    k_by_ve: dict[int, int] = {}
    k_choices: dict[int, KChoice] = {}
    for j in ledger.nonempty_ves():
        if config.k_fixed is not None:
            k_by_ve[j] = config.k_fixed
        else:
            choice = choose_k(video, effective, j, config.epsilon,
                              (config.k_min, config.k_max), config.k_solver,
                              ledger)
            k_choices[j] = choice
            k_by_ve[j] = choice.k

    select_representatives(video, effective, ledger, k_by_ve)
    partitioning = prioritize(ledger)
    allocation = allocate(partitioning, ledger, config.epsilon)
    bounds = compute_bounds(ledger, allocation)
    return Phase1Plan(
        annotation=effective, ledger=ledger, k_by_ve=k_by_ve,
        k_choices=k_choices, partitioning=partitioning,
        allocation=allocation, bounds=bounds,
    )


@dataclass
class SanitizeResult:
    plan: Phase1Plan
    sampled: SampledVideo
    private: Video
    interp_stats: InterpolationStats
    composition: CompositionReport

    def reports(self) -> dict[str, dict]:
        plan = self.plan
        return {
            "budgets": plan.allocation.report(),
            "bounds": {
                "per_rgb": [plan.bounds[rgb].to_dict() for rgb in sorted(plan.bounds)],
            },
            "k_tables": {
                str(j): plan.k_choices[j].to_dict() for j in sorted(plan.k_choices)
            },
            "composition": self.composition.to_dict(),
            "interpolation": {
                "passes_by_scope": {
                    str(j): p for j, p in sorted(self.interp_stats.passes_by_scope.items())
                },
                "inserted_frames": {
                    str(j): f for j, f in sorted(self.interp_stats.inserted_frames.items())
                },
                "stuck_filled": self.interp_stats.stuck_filled,
                "merged_into_background": self.interp_stats.merged_into_background,
            },
        }


def sanitize(video: Video, annotation: VeAnnotation,
             config: RunConfig) -> SanitizeResult:
    """Run Phases I and II; deterministic in (video, annotation, config)."""
    plan = prepare_phase1(video, annotation, config)
    sampled = sample_phase1(video, plan.annotation, plan.ledger,
                            plan.allocation, config.seed, plan.bounds)
    private, stats = interpolate_with_stats(sampled, plan.annotation)
    composition = verify_composition(plan.allocation, plan.ledger)
    return SanitizeResult(
        plan=plan, sampled=sampled, private=private,
        interp_stats=stats, composition=composition,
    )
