"""Command line interface.

Exit codes: 0 success, 2 validation/usage errors, 1 anything else.
A flat ``key = value`` config file can seed any flag; explicit flags win.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import _kernels
from .baselines import BaselineConfig, HoughConfig, combine_post_hoc, gmd_detect, hough_detect
from .detector import DetectorConfig, run_detector
from .errors import EbssaError, ValidationError
from .events import (
    SensorGeometry,
    merge_streams,
    read_events,
    write_events,
    write_events_csv,
)
from .metrics import EvalConfig, evaluate, load_labels, save_labels, sweep_r, write_stats_csv
from .pipeline import (
    reproduce_fig11,
    reproduce_fig14,
    reproduce_fig15,
    reproduce_table4_synthetic,
    run_pipeline,
    write_stage_report,
)
from .synth import SynthConfig, generate, sweep_grid
from .tracker import TrackerConfig, run_tracker

POLARITIES = {"on": (1,), "off": (-1,), "both": (1, -1)}


def _geometry(args) -> SensorGeometry:
    return SensorGeometry(args.width, args.height)


def _add_geometry(p):
    p.add_argument("--width", type=int, default=240, help="sensor width (CSV inputs)")
    p.add_argument("--height", type=int, default=180, help="sensor height (CSV inputs)")


def _add_detector(p):
    p.add_argument("--R", dest="radius", type=int, default=7, help="ROI radius, pixels")
    p.add_argument("--N", dest="n_templates", type=int, default=36, help="template count")
    p.add_argument("--s", dest="penalty", type=float, default=-0.2, help="off-bar template weight")
    p.add_argument("--tau", type=float, default=0.4, help="surface decay, seconds")
    p.add_argument("--phi", type=float, default=None, help="recency window, seconds (default tau)")
    p.add_argument("--L", dest="min_active", type=int, default=3, help="activation count threshold")
    p.add_argument("--W", dest="w_factor", type=float, default=0.5, help="dynamic threshold factor")
    p.add_argument("--psi-static", type=float, default=None, help="use a static angular threshold")
    p.add_argument("--delta", type=float, default=2.0, help="unimodality bound, template indices")
    p.add_argument(
        "--threshold-formula", choices=("midrange", "halfrange"), default="midrange",
        help="dynamic threshold form",
    )


def _detector_cfg(args) -> DetectorConfig:
    return DetectorConfig(
        radius=args.radius,
        n_templates=args.n_templates,
        penalty=args.penalty,
        tau=args.tau,
        phi=args.phi,
        min_active=args.min_active,
        w_factor=args.w_factor,
        psi_static=args.psi_static,
        delta=args.delta,
        threshold_mode="static" if args.psi_static is not None else "dynamic",
        threshold_formula=args.threshold_formula,
    )


def _add_tracker(p):
    p.add_argument("--gamma", type=float, default=2.0, help="membrane decay, 1/s")
    p.add_argument("--m-a", dest="m_a", type=float, default=5.0, help="activation threshold")
    p.add_argument("--d-max", dest="d_max", type=float, default=15.0, help="assignment radius, px")
    p.add_argument("--v", dest="v_scale", type=float, default=0.1, help="angular weight scale")
    p.add_argument("--k", dest="k_window", type=int, default=30, help="regression window length")
    p.add_argument("--emit-all", action="store_true", help="emit unactivated tracks too")


def _tracker_cfg(args) -> TrackerConfig:
    return TrackerConfig(
        gamma=args.gamma,
        activation_threshold=args.m_a,
        d_max=args.d_max,
        angle_weight_scale=args.v_scale,
        window=args.k_window,
        emit_all=args.emit_all,
    )


def _add_polarity(p):
    p.add_argument("--polarity", choices=("on", "off", "both"), default="both")


def _per_polarity(stream, args):
    present = [pol for pol in POLARITIES[args.polarity] if np.any(stream.p == pol)]
    return [(("on" if pol == 1 else "off"), stream.with_polarity(pol)) for pol in present]


def cmd_synth(args) -> int:
    cfg = SynthConfig(
        seed=args.seed,
        geometry=_geometry(args),
        t_max=args.t_max,
        lambda1=args.lambda1,
        lambda0=args.lambda0,
        alpha_from_interval=args.alpha_interval,
    )
    rec = generate(cfg)
    os.makedirs(args.out, exist_ok=True)
    write_events(rec.events, os.path.join(args.out, "events.ebs"))
    save_labels(rec.labels, os.path.join(args.out, "labels.json"))
    with open(os.path.join(args.out, "truth.json"), "w", encoding="utf-8") as fh:
        json.dump(rec.truth, fh, indent=1)
    print(f"wrote {len(rec.events)} events to {args.out}")
    return 0


def cmd_detect(args) -> int:
    stream = read_events(args.input, geometry=_geometry(args))
    cfg = _detector_cfg(args)
    parts = []
    for _, sub in _per_polarity(stream, args):
        det, counts = run_detector(sub, cfg)
        parts.append(det)
        print(
            f"polarity {int(sub.p[0])}: {counts.n_input} events -> "
            f"{counts.n_surface_pass} surface -> {counts.n_angular_pass} angular -> "
            f"{counts.n_detections} detections"
        )
    out = parts[0] if len(parts) == 1 else merge_streams(parts[0], parts[1])
    write_events_csv(out, args.out)
    return 0


def cmd_track(args) -> int:
    stream = read_events(args.input, geometry=_geometry(args))
    if stream.theta is None:
        raise ValidationError("track input must be a detection CSV with theta_rad")
    cfg = _tracker_cfg(args)
    parts = []
    for _, sub in _per_polarity(stream, args):
        trk, n_created = run_tracker(sub, cfg)
        parts.append(trk)
        print(f"polarity {int(sub.p[0])}: {len(sub)} detections -> {len(trk)} track events "
              f"({n_created} hypotheses)")
    out = parts[0] if len(parts) == 1 else merge_streams(parts[0], parts[1])
    write_events_csv(out, args.out)
    return 0


def cmd_baseline(args) -> int:
    stream = read_events(args.input, geometry=_geometry(args))
    base_cfg = BaselineConfig(radius=args.radius, tau=args.tau, phi=args.phi,
                              min_active=args.min_active)
    hough_cfg = HoughConfig(radius=args.radius, tau=args.tau, phi=args.phi,
                            min_active=args.min_active,
                            line_threshold=args.line_threshold,
                            endpoint_threshold=args.endpoint_threshold)
    parts = []
    for _, sub in _per_polarity(stream, args):
        if args.algo == "gmd":
            det = gmd_detect(sub, base_cfg)
        elif args.algo == "hough":
            det = hough_detect(sub, hough_cfg)
        else:
            if args.labels is None:
                raise ValidationError("--algo combined requires --labels")
            labels = load_labels(args.labels)
            det = combine_post_hoc(
                gmd_detect(sub, base_cfg), hough_detect(sub, hough_cfg),
                labels, sub.geometry,
            )
        parts.append(det)
        print(f"polarity {int(sub.p[0])}: {len(sub)} events -> {len(det)} detections")
    out = parts[0] if len(parts) == 1 else merge_streams(parts[0], parts[1])
    write_events_csv(out, args.out)
    return 0


def cmd_eval(args) -> int:
    stream = read_events(args.events, geometry=_geometry(args))
    labels = load_labels(args.labels)
    cfg = EvalConfig(r=args.r, slice_s=args.slice_ms / 1000.0)
    stem = os.path.splitext(os.path.basename(args.events))[0]
    rows = []
    for name, sub in _per_polarity(stream, args):
        st = evaluate(sub, labels, stream.geometry, cfg)
        rows.append(
            {
                "stream": stem,
                "polarity": name,
                "sensitivity": st.sensitivity,
                "specificity": st.specificity,
                "informedness": st.informedness,
                "n_events": st.n_events,
            }
        )
        print(
            f"{stem} [{name}] sensitivity={st.sensitivity:.4f} "
            f"specificity={st.specificity:.4f} informedness={st.informedness:.4f} "
            f"n={st.n_events}"
        )
    if args.out:
        write_stats_csv(rows, args.out)
    return 0


def cmd_pipeline(args) -> int:
    stream = read_events(args.input, geometry=_geometry(args))
    labels = load_labels(args.labels) if args.labels else None
    eval_cfg = EvalConfig(r=args.r, slice_s=args.slice_ms / 1000.0)
    result = run_pipeline(
        stream,
        det_cfg=_detector_cfg(args),
        trk_cfg=_tracker_cfg(args),
        polarity=args.polarity,
        labels=labels,
        eval_cfg=eval_cfg,
        profile=args.profile_stages,
    )
    os.makedirs(args.out_dir, exist_ok=True)
    stats_rows = []
    for name, res in result.per_polarity.items():
        # persist every intermediate stream so any stage can be re-run alone
        from . import _kernels
        from .events import write_events_binary

        if len(res.raw):
            r = args.radius
            u = np.arange(-r, r + 1)
            ux, uy = np.meshgrid(u, u, indexing="xy")
            keep = (ux * ux + uy * uy <= r * r).ravel()
            mask = _kernels.surface_pass_mask(
                res.raw.t, res.raw.x, res.raw.y,
                res.raw.geometry.width, res.raw.geometry.height,
                _detector_cfg(args).phi_effective, args.min_active,
                ux.ravel()[keep].astype(np.int32), uy.ravel()[keep].astype(np.int32),
            )
            write_events_binary(res.raw.select(mask),
                                os.path.join(args.out_dir, f"filtered_{name}.ebs"))
        write_events_csv(res.detections, os.path.join(args.out_dir, f"detections_{name}.csv"))
        write_events_csv(res.tracks, os.path.join(args.out_dir, f"tracks_{name}.csv"))
        if res.stats:
            for stream_name, st in res.stats.items():
                stats_rows.append(
                    {
                        "stream": stream_name,
                        "polarity": name,
                        "sensitivity": st.sensitivity,
                        "specificity": st.specificity,
                        "informedness": st.informedness,
                        "n_events": st.n_events,
                    }
                )
    write_stage_report(result, os.path.join(args.out_dir, "stage_report.csv"))
    if stats_rows:
        write_stats_csv(stats_rows, os.path.join(args.out_dir, "stats.csv"))
    for row in result.all_rows():
        wall = "" if row.wall_s is None else f" wall={row.wall_s:.4f}s"
        print(f"[{row.polarity}] {row.stage}: {row.events_in} -> {row.events_out}{wall}")
    return 0


def cmd_reproduce(args) -> int:
    os.makedirs(args.out_dir, exist_ok=True)
    if args.experiment == "fig11":
        rows = reproduce_fig11(trials=args.trials, threads=args.threads, base_seed=args.seed)
        out = os.path.join(args.out_dir, "fig11.csv")
    elif args.experiment == "fig14":
        rows = reproduce_fig14(seed=args.seed)
        out = os.path.join(args.out_dir, "fig14.csv")
    elif args.experiment == "fig15":
        rows = reproduce_fig15(seed=args.seed)
        out = os.path.join(args.out_dir, "fig15.csv")
    else:
        rows = reproduce_table4_synthetic()
        out = os.path.join(args.out_dir, "table4_synthetic.csv")
    write_stats_csv(rows, out)
    print(f"wrote {len(rows)} rows to {out}")
    return 0


def cmd_sweep(args) -> int:
    if args.what == "r":
        stream = read_events(args.events, geometry=_geometry(args))
        labels = load_labels(args.labels)
        stem = os.path.splitext(os.path.basename(args.events))[0]
        rows = sweep_r(
            {stem: stream}, labels, stream.geometry,
            r_values=list(range(args.r_min, args.r_max + 1)),
            slice_s=args.slice_ms / 1000.0,
        )
        write_stats_csv(rows, args.out)
    elif args.what == "tau":
        from .metrics import sweep_tau

        stream = read_events(args.events, geometry=_geometry(args))
        labels = load_labels(args.labels)
        taus = [float(v) for v in args.taus.split(",")]
        rows = []
        for name, sub in _per_polarity(stream, args):
            for row in sweep_tau(
                sub, labels, stream.geometry, taus,
                det_cfg=_detector_cfg(args), trk_cfg=_tracker_cfg(args),
                eval_cfg=EvalConfig(r=args.r, slice_s=args.slice_ms / 1000.0),
            ):
                row["polarity"] = name
                rows.append(row)
        write_stats_csv(rows, args.out)
    else:  # grid
        lambda1s = [float(v) for v in args.lambda1s.split(",")]
        lambda0s = [float(v) for v in args.lambda0s.split(",")]
        rows = sweep_grid(
            args.out_dir, lambda1s, lambda0s, trials=args.trials, base_seed=args.seed,
            max_bytes=args.max_bytes,
        )
        write_stats_csv(rows, os.path.join(args.out_dir, "manifest.csv"))
        print(f"wrote {len(rows)} recordings to {args.out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ebssa",
        description="Event-based space object detection, tracking and evaluation.",
    )
    parser.add_argument("--config", default=None, help="flat key=value defaults file")
    parser.add_argument("--backend", default=None, help=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate an artificial recording")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--lambda1", type=float, default=10.0)
    p.add_argument("--lambda0", type=float, default=0.01)
    p.add_argument("--t-max", type=float, default=10.0)
    p.add_argument("--alpha-interval", action="store_true",
                   help="draw linear velocities from [-20,20] instead of {-20,20}")
    p.add_argument("--out", required=True)
    _add_geometry(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("detect", help="run the feature detector")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    _add_detector(p)
    _add_polarity(p)
    _add_geometry(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("track", help="run the tracker on detections")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    _add_tracker(p)
    _add_polarity(p)
    _add_geometry(p)
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("baseline", help="run a baseline detector")
    p.add_argument("--algo", choices=("gmd", "hough", "combined"), required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--labels", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--R", dest="radius", type=int, default=7)
    p.add_argument("--tau", type=float, default=0.4)
    p.add_argument("--phi", type=float, default=None)
    p.add_argument("--L", dest="min_active", type=int, default=3)
    p.add_argument("--line-threshold", type=float, default=HoughConfig.line_threshold)
    p.add_argument("--endpoint-threshold", type=float, default=HoughConfig.endpoint_threshold)
    _add_polarity(p)
    _add_geometry(p)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("eval", help="volume statistics of a stream against labels")
    p.add_argument("--events", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--r", type=float, default=10.0)
    p.add_argument("--slice-ms", type=float, default=10.0)
    p.add_argument("--out", default=None)
    _add_polarity(p)
    _add_geometry(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("pipeline", help="raw events -> detections -> tracks (+ stats)")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--labels", default=None)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--r", type=float, default=10.0)
    p.add_argument("--slice-ms", type=float, default=10.0)
    p.add_argument("--profile-stages", action="store_true",
                   help="time the detector sub-stages (adds overhead)")
    _add_detector(p)
    _add_tracker(p)
    _add_polarity(p)
    _add_geometry(p)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("reproduce", help="desk-scale experiment tables")
    p.add_argument("experiment", choices=("fig11", "fig14", "fig15", "table4-synthetic"))
    p.add_argument("--out-dir", required=True)
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--seed", type=int, default=7000)
    p.set_defaults(func=cmd_reproduce)

    p = sub.add_parser("sweep", help="parameter sweeps")
    p.add_argument("what", choices=("r", "tau", "grid"))
    p.add_argument("--events", default=None)
    p.add_argument("--labels", default=None)
    p.add_argument("--out", default="sweep.csv")
    p.add_argument("--out-dir", default="grid")
    p.add_argument("--r-min", type=int, default=1)
    p.add_argument("--r-max", type=int, default=30)
    p.add_argument("--taus", default="0.05,0.1,0.2,0.4,0.7,1.0,1.5,2.0,5.0")
    p.add_argument("--r", type=float, default=10.0)
    p.add_argument("--slice-ms", type=float, default=10.0)
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--seed", type=int, default=1000)
    p.add_argument("--lambda1s", default="0.1,1,10,100")
    p.add_argument("--lambda0s", default="0.0001,0.01,1")
    p.add_argument("--max-bytes", type=int, default=None)
    _add_detector(p)
    _add_tracker(p)
    _add_polarity(p)
    _add_geometry(p)
    p.set_defaults(func=cmd_sweep)

    return parser


def _apply_config_file(parser: argparse.ArgumentParser, argv):
    """Seed parser defaults from a flat key=value file (flags still win)."""
    if "--config" not in argv:
        return argv
    i = argv.index("--config")
    if i + 1 >= len(argv):
        return argv
    path = argv[i + 1]
    overrides = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValidationError(f"config line without '=': {line!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            overrides[key.replace("-", "_")] = value
    # Apply to every subparser; keys may be flag names or dest names.
    for action in parser._subparsers._group_actions:
        for sp in action.choices.values():
            known = {}
            for a in sp._actions:
                known[a.dest] = a
                for opt in a.option_strings:
                    known[opt.lstrip("-").replace("-", "_")] = a
            for key, value in overrides.items():
                if key in known:
                    a = known[key]
                    if a.type is not None:
                        sp.set_defaults(**{a.dest: a.type(value)})
                    elif isinstance(a.const, bool) or isinstance(a.default, bool):
                        sp.set_defaults(**{a.dest: value.lower() in ("1", "true", "yes")})
                    else:
                        sp.set_defaults(**{a.dest: value})
    return argv


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _apply_config_file(parser, argv)
        args = parser.parse_args(argv)
        if args.backend and args.backend != _kernels.BACKEND:
            raise ValidationError(
                f"backend {args.backend!r} requested but {_kernels.BACKEND!r} is active; "
                "set EBSSA_BACKEND before launching"
            )
        return args.func(args)
    except (ValidationError, EbssaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:
        return int(exc.code or 0)
    except Exception as exc:  # pragma: no cover - defensive
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
