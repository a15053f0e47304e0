"""Closed-form expectation of the private video after one interpolation pass,
and the per-element search for the representative-color count k that
minimizes the expected gray MSE.

For every in-scope pixel p with sampling probability Pr_p and in-scope
neighbors N(p) (absent neighbors at frame or scope borders are excluded):

    E[out_p] = Pr_p * gray_p
             + (1 - Pr_p) * (1 - sigma0_p) / |N(p)| * sum_{u in N(p)} E[out_u]

where sigma0_p is the probability that no neighbor is sampled, treating
neighbor samplings as independent Bernoulli draws. A pixel that ends up with
no sampled neighbor contributes value 0, which is exactly how the sparse
Phase-I output scores before interpolation. Collecting the equations gives a
linear system solved by damped Jacobi iteration with a direct dense solve as
fallback for small scopes; near-singular systems are retried with a tiny
pseudorandom perturbation of the nonzero couplings.

The search works in the normalized gray domain, and while k is being chosen
each candidate color set is priced with the element's own proportional
budget share (cross-element minima are unknowable until every element has
fixed its k; the final sampler uses the true allocation).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from . import rng
from .analysis import (CASE_RETAIN, CASE_SAMPLE, RgbLedger, classify_rgbs,
                       multi_scale_select)
from .model import VeAnnotation, Video, gray_values
from .sampler import SampleBound, max_output_count

DENSE_LIMIT = 2500
RESIDUAL_TOL = 1e-9
_JACOBI_TOL = 1e-12
_JACOBI_MAXITER = 5000
_PERTURB_RETRIES = 3

_SHIFTS = ((-1, 0), (1, 0), (0, -1), (0, 1))


class SolverError(RuntimeError):
    """The expectation system did not reach the residual tolerance."""


def neighbor_probs(pr_frame: np.ndarray, pixel: tuple[int, int]) -> tuple:
    """(sigma0..sigma4) for one pixel of a 2-D grid.

    NaN entries mark out-of-scope pixels; those and out-of-frame positions do
    not count as neighbors, so border pixels get sigma_s = 0 for s above
    their neighbor count.
    """
    a, b = pixel
    h, w = pr_frame.shape
    probs = []
    for da, db in _SHIFTS:
        na, nb = a + da, b + db
        if 0 <= na < h and 0 <= nb < w and not np.isnan(pr_frame[na, nb]):
            probs.append(float(pr_frame[na, nb]))
    poly = np.array([1.0])
    for p in probs:
        poly = np.convolve(poly, [1.0 - p, p])
    sigma = np.zeros(5)
    sigma[: poly.size] = poly
    return tuple(sigma)


@dataclass
class ExpectationSystem:
    """One frame's linear system over the scope pixels."""

    coords: np.ndarray       # (n, 2) rows (a, b)
    coupling: sparse.csr_matrix  # C with E = b + C E
    constant: np.ndarray     # b = Pr * gray
    gray: np.ndarray         # original gray per scope pixel
    pr: np.ndarray           # sampling probability per scope pixel


def build_system(gray_frame: np.ndarray, pr_frame: np.ndarray,
                 scope: np.ndarray) -> ExpectationSystem:
    h, w = scope.shape
    aa, bb = np.nonzero(scope)
    n = aa.size
    index = np.full((h, w), -1, dtype=np.int64)
    index[aa, bb] = np.arange(n)

    pr = pr_frame[aa, bb].astype(np.float64)
    gray = gray_frame[aa, bb].astype(np.float64)

    sigma0 = np.ones(n)
    q = np.zeros(n)
    rows, cols = [], []
    for da, db in _SHIFTS:
        na, nb = aa + da, bb + db
        ok = (na >= 0) & (na < h) & (nb >= 0) & (nb < w)
        ok[ok] &= index[na[ok], nb[ok]] >= 0
        sigma0[ok] *= 1.0 - pr_frame[na[ok], nb[ok]]
        q[ok] += 1
        rows.append(np.nonzero(ok)[0])
        cols.append(index[na[ok], nb[ok]])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    weight = np.zeros(n)
    has_nbr = q > 0
    weight[has_nbr] = (1.0 - pr[has_nbr]) * (1.0 - sigma0[has_nbr]) / q[has_nbr]
    coupling = sparse.csr_matrix(
        (weight[rows], (rows, cols)), shape=(n, n)
    )
    return ExpectationSystem(
        coords=np.stack([aa, bb], axis=1),
        coupling=coupling,
        constant=pr * gray,
        gray=gray,
        pr=pr,
    )


def _residual(system: ExpectationSystem, x: np.ndarray) -> float:
    r = system.constant + system.coupling @ x - x
    return float(np.abs(r).max(initial=0.0))


def solve_expectations(system: ExpectationSystem, omega: float = 1.0) -> np.ndarray:
    """Solve E = b + C E for the scope pixels."""
    n = system.constant.size
    if n == 0:
        return np.empty(0)

    x = system.constant.copy()
    for _ in range(_JACOBI_MAXITER):
        x_new = system.constant + system.coupling @ x
        if omega != 1.0:
            x_new = (1.0 - omega) * x + omega * x_new
        delta = float(np.abs(x_new - x).max(initial=0.0))
        x = x_new
        if delta <= _JACOBI_TOL:
            break
    if _residual(system, x) <= RESIDUAL_TOL:
        return x

    if n > DENSE_LIMIT:
        raise SolverError(
            f"iteration stalled on a {n}-unknown system above the dense limit"
        )
    coupling = system.coupling
    for attempt in range(_PERTURB_RETRIES + 1):
        dense = np.eye(n) - coupling.toarray()
        try:
            x = np.linalg.solve(dense, system.constant)
        except np.linalg.LinAlgError:
            x = None
        if x is not None and _residual(system, x) <= RESIDUAL_TOL:
            return x
        # Nudge the nonzero couplings and try again.
        gen = rng.substream(0xD5, rng.PERTURB, attempt)
        perturbed = coupling.tocoo(copy=True)
        perturbed.data = perturbed.data * (
            1.0 + 1e-9 * gen.standard_normal(perturbed.data.size)
        )
        coupling = perturbed.tocsr()
    raise SolverError("expectation system failed the residual tolerance after retries")


def solve_expectation_grid(gray3: np.ndarray, pr3: np.ndarray,
                           scope3: np.ndarray) -> np.ndarray:
    """Per-frame solves over a (T, H, W) scope; NaN outside the scope."""
    out = np.full(gray3.shape, np.nan)
    for t in range(gray3.shape[0]):
        if not scope3[t].any():
            continue
        system = build_system(gray3[t], pr3[t], scope3[t])
        values = solve_expectations(system)
        out[t][scope3[t]] = values
    return out


def expected_mse(gray3: np.ndarray, pr3: np.ndarray, scope3: np.ndarray) -> float:
    """Mean squared gray error over the scope for the one-pass model."""
    solution = solve_expectation_grid(gray3, pr3, scope3)
    diff = gray3[scope3] - solution[scope3]
    return float(np.mean(diff * diff))


def proxy_bounds(ledger: RgbLedger, ve_id: int, chosen, epsilon: float) -> dict:
    """Bound each candidate color with the element-local proportional budget."""
    mass = ledger.ve_mass[ve_id]
    bounds = {}
    for rgb in sorted(chosen):
        rec = ledger.records[rgb]
        eps_rgb = epsilon * rec.per_ve[ve_id] / mass
        bounds[rgb] = SampleBound(
            rgb=rgb, c_total=rec.total, per_ve=dict(rec.per_ve),
            eps_rgb=eps_rgb,
            max_out=max_output_count(rec.total, rec.per_ve, eps_rgb),
        )
    return bounds


def _pr_grid_from(ledger: RgbLedger, dims, selected_bounds: dict) -> np.ndarray:
    """Full-video sampling probabilities: retained 1, suppressed/unselected 0,
    selected shared colors x / c."""
    width, height, frames = dims
    pr = np.zeros((frames, height, width))
    for rgb, rec in ledger.records.items():
        if rec.case == CASE_RETAIN:
            value = 1.0
        elif rec.case == CASE_SAMPLE and rgb in selected_bounds:
            value = selected_bounds[rgb].max_out / rec.total
        else:
            continue
        pos = rec.positions
        pr[pos[:, 0], pos[:, 1], pos[:, 2]] = value
    return pr


def sampling_probabilities(video: Video, annotation: VeAnnotation, ve_id: int,
                           k: int, epsilon: float,
                           ledger: RgbLedger | None = None) -> np.ndarray:
    """Per-pixel sampling probability grid for one element's candidate k."""
    if ledger is None:
        ledger = classify_rgbs(video, annotation)
    chosen = multi_scale_select(video, annotation, ve_id, k, ledger)
    bounds = proxy_bounds(ledger, ve_id, chosen, epsilon)
    return _pr_grid_from(ledger, ledger.dims, bounds)


def pr_from_bounds(ledger: RgbLedger, bounds: dict) -> np.ndarray:
    """Probability grid of the real pipeline, from the final sample bounds."""
    return _pr_grid_from(ledger, ledger.dims, bounds)


@dataclass(frozen=True)
class KChoice:
    ve_id: int
    k: int
    mse_by_k: dict[int, float]
    mode: str
    per_frame_k: dict[int, int] | None = None  # per-frame-avg mode only

    def to_dict(self) -> dict:
        out = {
            "ve_id": self.ve_id,
            "k": self.k,
            "mode": self.mode,
            "mse_by_k": {str(k): v for k, v in sorted(self.mse_by_k.items())},
        }
        if self.per_frame_k is not None:
            out["per_frame_k"] = {str(t): k for t, k in sorted(self.per_frame_k.items())}
        return out


def choose_k(video: Video, annotation: VeAnnotation, ve_id: int, epsilon: float,
             k_range: tuple[int, int], mode: str = "full",
             ledger: RgbLedger | None = None) -> KChoice:
    """Pick the k in [k_min, k_max] minimizing expected gray MSE (ties: smallest)."""
    if ledger is None:
        ledger = classify_rgbs(video, annotation)
    annotation._check_id(ve_id)
    if ledger.ve_mass.get(ve_id, 0) == 0:
        raise ValueError(f"element {ve_id} has no pixels")
    k_min, k_max = k_range
    if k_min < 1 or k_max < k_min:
        raise ValueError("need 1 <= k_min <= k_max")

    labels = annotation.labels
    scope3 = labels == ve_id
    frame_counts = scope3.reshape(scope3.shape[0], -1).sum(axis=1)
    frames_with = [t for t in range(video.frame_count) if frame_counts[t]]
    if mode == "single-frame":
        best_t = int(np.argmax(frame_counts))  # argmax takes the first maximum
        frames_used = [best_t]
    elif mode in ("full", "per-frame-avg"):
        frames_used = frames_with
    else:
        raise ValueError(f"unknown solver mode {mode!r}")

    gray3 = video.gray()
    mse_by_k: dict[int, float] = {}
    per_frame_mse: dict[int, dict[int, float]] = {t: {} for t in frames_used}
    for k in range(k_min, k_max + 1):
        pr3 = sampling_probabilities(video, annotation, ve_id, k, epsilon, ledger)
        total_sq = 0.0
        total_px = 0
        for t in frames_used:
            system = build_system(gray3[t], pr3[t], scope3[t])
            values = solve_expectations(system)
            sq = float(np.sum((system.gray - values) ** 2))
            per_frame_mse[t][k] = sq / values.size
            total_sq += sq
            total_px += values.size
        mse_by_k[k] = total_sq / total_px

    if mode == "per-frame-avg":
        per_frame_k = {
            t: min(per_frame_mse[t], key=lambda k: (per_frame_mse[t][k], k))
            for t in frames_used
        }
        mean_k = sum(per_frame_k.values()) / len(per_frame_k)
        k_star = min(max(round(mean_k), k_min), k_max)
        return KChoice(ve_id=ve_id, k=k_star, mse_by_k=mse_by_k, mode=mode,
                       per_frame_k=per_frame_k)
    k_star = min(mse_by_k, key=lambda k: (mse_by_k[k], k))
    return KChoice(ve_id=ve_id, k=k_star, mse_by_k=mse_by_k, mode=mode)
