"""Command-line surface: synthesize scenarios, sanitize videos, run queries
and audits. Exit codes: 0 ok, 1 mechanism violation, 2 usage, 3 I/O."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import synth
from .analytics import (PresenceRule, Query, run_laplace_baseline,
                        run_videodp_query)
from .audit import run_audit
from .io import (FormatError, Manifest, RunConfig, load_config, load_manifest,
                 load_masks, load_sampled, load_video, save_config, save_json,
                 save_manifest, save_sampled, save_video)
from .model import VeAnnotation, Video
from .pipeline import sanitize

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_USAGE = 2
EXIT_IO = 3


class UsageError(ValueError):
    pass


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="key=value config file")
    parser.add_argument("--epsilon", type=float)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--k-min", type=int, dest="k_min")
    parser.add_argument("--k-max", type=int, dest="k_max")
    parser.add_argument("--k-fixed", type=int, dest="k_fixed")
    parser.add_argument("--k-solver", choices=("full", "single-frame", "per-frame-avg"),
                        dest="k_solver")
    parser.add_argument("--sensitive-ves", dest="sensitive_ves",
                        help="comma-separated element ids (default: all)")
    parser.add_argument("--trials", type=int)
    parser.add_argument("--min-pixels", type=int, dest="min_pixels")


def _resolve_config(args) -> RunConfig:
    """Config file first, every flag on top."""
    base = load_config(args.config) if args.config else RunConfig()
    values = {
        "epsilon": base.epsilon, "seed": base.seed, "k_min": base.k_min,
        "k_max": base.k_max, "k_fixed": base.k_fixed, "k_solver": base.k_solver,
        "sensitive_ves": base.sensitive_ves, "trials": base.trials,
        "min_pixels": base.min_pixels,
    }
    for key in ("epsilon", "seed", "k_min", "k_max", "k_fixed", "k_solver",
                "trials", "min_pixels"):
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    if getattr(args, "sensitive_ves", None) is not None:
        values["sensitive_ves"] = tuple(
            int(v) for v in str(args.sensitive_ves).split(",") if v.strip()
        ) or None
    return RunConfig(**values)


def _load_inputs(manifest_path: Path) -> tuple[Manifest, Video, VeAnnotation]:
    manifest = load_manifest(manifest_path)
    video = load_video(manifest)
    if manifest.mask_pattern is None:
        annotation = VeAnnotation.background_only(
            manifest.width, manifest.height, manifest.frame_count
        )
    else:
        annotation = load_masks(manifest)
    return manifest, video, annotation


def _cmd_synthesize(args) -> int:
    if args.preset:
        spec = synth.PRESETS[args.preset](frame_count=args.frames or 32)
    else:
        spec = synth.ScenarioSpec(
            width=args.width, height=args.height,
            frame_count=args.frames or 24, ve_count=args.ves,
        )
    synth.write_scenario(spec, args.seed if args.seed is not None else 0, args.out)
    print(f"wrote scenario '{spec.name}' to {args.out}")
    return EXIT_OK


def _cmd_sanitize(args) -> int:
    config = _resolve_config(args)
    manifest, video, annotation = _load_inputs(args.manifest)
    result = sanitize(video, annotation, config)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_sampled(result.sampled, out / "sampled.vdps")
    save_video(result.private, out / "private")
    save_manifest(
        Manifest(
            width=manifest.width, height=manifest.height,
            frame_count=manifest.frame_count,
            frame_pattern="private/{t:04d}.ppm", mask_pattern=None,
            ve_count=manifest.ve_count, root=out,
        ),
        out / "private_manifest.json",
    )
    save_config(config, out / "config.used")
    reports = result.reports()
    reports_dir = out / "reports"
    reports_dir.mkdir(exist_ok=True)
    for name, payload in reports.items():
        save_json(payload, reports_dir / f"{name}.json")

    from .audit import audit_deterministic

    section = audit_deterministic(result.plan.ledger, result.plan.allocation,
                                  result.plan.bounds)
    save_json(section, reports_dir / "audit_deterministic.json")
    if not section["ok"]:
        print("sanitize: deterministic audit FAILED", file=sys.stderr)
        return EXIT_VIOLATION
    print(f"sanitize: wrote {len(result.sampled)} retained pixels and "
          f"{result.private.frame_count} private frames to {out}")
    return EXIT_OK


def _parse_predicate(text: str):
    for op in ("<=", ">=", "==", "<", ">"):
        if op in text:
            channel, _, value = text.partition(op)
            return (channel.strip(), op, float(value))
    raise UsageError(f"cannot parse predicate {text!r}")


def _build_query(args) -> Query:
    kind = {
        "histogram": "rgb-histogram",
        "stay-time": "ve-stay-time",
        "count-per-frame": "ve-count-per-frame",
        "predicate-count": "pixel-predicate-count",
    }.get(args.query)
    if kind is None:
        raise UsageError(f"unknown query {args.query!r}")
    frames = None
    if args.frames:
        frames = tuple(int(v) for v in args.frames.split(","))
    predicate = _parse_predicate(args.predicate) if args.predicate else None
    try:
        return Query(kind=kind, frames=frames,
                     bins_per_channel=args.bins, predicate=predicate)
    except ValueError as err:
        raise UsageError(str(err)) from None


def _cmd_query(args) -> int:
    query = _build_query(args)
    rule = PresenceRule(min_pixels=args.min_pixels or 1)
    if args.mechanism == "videodp":
        if not args.private_dir:
            raise UsageError("videodp queries need --private-dir from a sanitize run")
        private_dir = Path(args.private_dir)
        manifest = load_manifest(private_dir / "private_manifest.json")
        private = load_video(manifest)
        sampled = load_sampled(private_dir / "sampled.vdps")
        annotation = VeAnnotation.background_only(*sampled.dims)
        result = run_videodp_query(private, sampled, annotation, query, rule)
    else:
        if not args.manifest:
            raise UsageError("laplace queries need --manifest for the original video")
        _, video, annotation = _load_inputs(args.manifest)
        result = run_laplace_baseline(
            video, annotation, query,
            sensitivity=args.sensitivity, epsilon_q=args.epsilon_q,
            seed=args.seed if args.seed is not None else 0,
        )
    payload = result.to_dict()
    if args.out:
        save_json(payload, args.out)
        print(f"wrote query result to {args.out}")
    else:
        from .io import dump_json

        print(dump_json(payload), end="")
    return EXIT_OK


def _cmd_audit(args) -> int:
    config = _resolve_config(args)
    _, video, annotation = _load_inputs(args.manifest)
    report = run_audit(video, annotation, args.ve, config,
                       trials=config.trials if args.monte_carlo else 0,
                       inject_x_plus_1=args.inject_x_plus_1)
    payload = report.to_dict()
    if args.out:
        save_json(payload, args.out)
    else:
        from .io import dump_json

        print(dump_json(payload), end="")
    if not report.deterministic_ok:
        print("audit: deterministic section FAILED", file=sys.stderr)
        return EXIT_VIOLATION
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dpvid",
        description="Differentially private video sanitization and analytics",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_syn = sub.add_parser("synthesize", help="generate a synthetic scenario")
    p_syn.add_argument("--preset", choices=sorted(synth.PRESETS))
    p_syn.add_argument("--width", type=int, default=48)
    p_syn.add_argument("--height", type=int, default=48)
    p_syn.add_argument("--frames", type=int)
    p_syn.add_argument("--ves", type=int, default=6)
    p_syn.add_argument("--seed", type=int, default=0)
    p_syn.add_argument("--out", type=Path, required=True)
    p_syn.set_defaults(func=_cmd_synthesize)

    p_san = sub.add_parser("sanitize", help="produce the private video")
    p_san.add_argument("--manifest", type=Path, required=True)
    p_san.add_argument("--out", type=Path, required=True)
    _add_config_flags(p_san)
    p_san.set_defaults(func=_cmd_sanitize)

    p_q = sub.add_parser("query", help="answer a query")
    p_q.add_argument("--query", required=True,
                     choices=("histogram", "stay-time", "count-per-frame",
                              "predicate-count"))
    p_q.add_argument("--mechanism", required=True, choices=("videodp", "laplace"))
    p_q.add_argument("--private-dir", type=Path)
    p_q.add_argument("--manifest", type=Path)
    p_q.add_argument("--frames", help="comma-separated frame ids (histogram)")
    p_q.add_argument("--bins", type=int, default=256)
    p_q.add_argument("--predicate", help="e.g. 'gray>0.5' or 'r>=128'")
    p_q.add_argument("--sensitivity", type=float, default=1.0)
    p_q.add_argument("--epsilon-q", type=float, default=1.0, dest="epsilon_q")
    p_q.add_argument("--seed", type=int)
    p_q.add_argument("--min-pixels", type=int, dest="min_pixels")
    p_q.add_argument("--out", type=Path)
    p_q.set_defaults(func=_cmd_query)

    p_a = sub.add_parser("audit", help="verify the privacy bounds")
    p_a.add_argument("--manifest", type=Path, required=True)
    p_a.add_argument("--ve", type=int, required=True,
                     help="element to remove for the neighboring input")
    p_a.add_argument("--monte-carlo", action="store_true",
                     help="also run the trial-based comparison")
    p_a.add_argument("--inject-x-plus-1", action="store_true",
                     dest="inject_x_plus_1",
                     help="self-test: corrupt every bound and expect failure")
    p_a.add_argument("--out", type=Path)
    _add_config_flags(p_a)
    p_a.set_defaults(func=_cmd_audit)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, FileNotFoundError, OSError) as err:
        print(f"i/o error: {err}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
