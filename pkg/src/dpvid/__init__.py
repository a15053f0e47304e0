"""Differentially private video sanitization and analytics.

The pipeline turns an annotated video into a utility-driven private video in
two phases (budgeted pixel sampling, then scope-isolated interpolation) and
answers analyst queries from the result as pure post-processing. A Laplace
baseline, utility metrics, and an empirical privacy audit round out the
toolkit.
"""

from .analysis import (Partitioning, RgbLedger, RgbRecord, classify_rgbs,
                       multi_scale_select, prioritize, select_representatives)
from .analytics import (PresenceRule, Query, QueryResult, kl_divergence,
                        mse_metric, presence_scores, run_laplace_baseline,
                        run_videodp_query)
from .audit import AuditReport, audit_deterministic, audit_monte_carlo, run_audit
from .budget import (AllocationError, BudgetAllocation, allocate,
                     verify_composition)
from .expectation import (KChoice, choose_k, neighbor_probs, pr_from_bounds,
                          sampling_probabilities, solve_expectations)
from .interpolate import interpolate, interpolate_with_stats
from .io import Manifest, RunConfig, load_config, load_manifest, load_masks, \
    load_sampled, load_video, save_sampled, save_video
from .model import (Rgb, SampledVideo, VeAnnotation, Video, pixel_count,
                    rgb_histogram, ve_extent)
from .pipeline import Phase1Plan, SanitizeResult, prepare_phase1, sanitize
from .sampler import (SampleBound, compute_bounds, max_output_count,
                      neighboring_video, sample_phase1)
from .synth import GroundTruth, ScenarioSpec, ped_mini, synthesize, veh_mini, \
    write_scenario

__version__ = "0.1.0"
