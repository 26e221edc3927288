#!/usr/bin/env python3
"""Compare the compiled kernel core against the pure-Python fallback.

Runs the detection cascade and the tracker over a standard benchmark
recording (real-sky background rate, three synthetic objects) with both
backends, checks that their outputs are bit-identical, and reports the
speedup. The fallback only processes a slice of the stream; its rate is
extrapolated.

Usage: python benchmarks/bench_kernels.py [--events N] [--fallback-events N]
"""

import argparse
import time

import numpy as np

from ebssa.detector import DetectorConfig
from ebssa.synth import SynthConfig, generate
from ebssa.templates import build_templates
from ebssa.tracker import TrackerConfig


def _detect_args(stream, bank, cfg):
    return (
        stream.t, stream.x, stream.y,
        stream.geometry.width, stream.geometry.height,
        cfg.tau, cfg.phi_effective, cfg.min_active, cfg.radius,
        bank.disc_dx, bank.disc_dy, bank.bar_flat, bank.bar_start,
        cfg.penalty, cfg.n_templates,
        1 if cfg.threshold_mode == "static" else 0,
        cfg.psi_static if cfg.psi_static is not None else 0.0,
        cfg.w_factor,
        1 if cfg.threshold_formula == "halfrange" else 0,
        cfg.delta,
    )


def _track_args(det, cfg):
    return (
        det.t, det.x.astype(np.float64), det.y.astype(np.float64), det.theta,
        cfg.gamma, cfg.activation_threshold, cfg.d_max,
        cfg.angle_weight_scale, cfg.window, 0,
    )


def bench(module, stream, bank, det_cfg, trk_cfg, repeats=3):
    best_detect = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        idx, q, n_surf, n_ang, _ = module.detect_events(*_detect_args(stream, bank, det_cfg))
        best_detect = min(best_detect, time.perf_counter() - t0)
    det = stream.select(idx)
    det.theta = 2.0 * np.pi * (q - 1.0) / det_cfg.n_templates
    best_track = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = module.track_events(*_track_args(det, trk_cfg))
        best_track = min(best_track, time.perf_counter() - t0)
    return (idx, q, out), best_detect, best_track, len(det)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--events", type=int, default=None, help="cap the compiled-run stream")
    ap.add_argument("--fallback-events", type=int, default=12_000)
    ap.add_argument("--seed", type=int, default=1234)
    args = ap.parse_args()

    try:
        from ebssa._kernels import _core
    except ImportError:
        _core = None
    from ebssa._kernels import _fallback

    rec = generate(SynthConfig(seed=args.seed, lambda1=10.0, lambda0=0.24))
    stream = rec.events if args.events is None else rec.events.select(slice(0, args.events))
    det_cfg = DetectorConfig()
    trk_cfg = TrackerConfig()
    bank = build_templates(det_cfg.n_templates, det_cfg.radius, det_cfg.penalty)
    n = len(stream)
    print(f"benchmark recording: {n} events over {stream.duration:.1f}s "
          f"(lambda0=0.24 background + three objects)")

    sub = stream.select(slice(0, min(args.fallback_events, n)))
    (idx_p, q_p, trk_p), d_py, t_py, ndet_py = bench(_fallback, sub, bank, det_cfg, trk_cfg, repeats=1)
    rate_py = len(sub) / (d_py + t_py)
    print(f"python   backend: {len(sub):7d} events  detect {d_py:6.2f}s  track {t_py:6.2f}s "
          f"-> {rate_py / 1e3:8.1f} k events/s")

    if _core is None:
        print("compiled backend: not built (pip install -e . with a C compiler)")
        return

    (idx_c, q_c, trk_c), d_c, t_c, ndet_c = bench(_core, stream, bank, det_cfg, trk_cfg)
    rate_c = n / (d_c + t_c)
    print(f"compiled backend: {n:7d} events  detect {d_c:6.2f}s  track {t_c:6.2f}s "
          f"-> {rate_c / 1e3:8.1f} k events/s")
    print(f"speedup: {rate_c / rate_py:.0f}x")

    # parity on the shared slice
    (idx_c2, q_c2, trk_c2), _, _, _ = bench(_core, sub, bank, det_cfg, trk_cfg, repeats=1)
    same = (
        np.array_equal(idx_c2, idx_p)
        and np.array_equal(q_c2, q_p)
        and np.array_equal(trk_c2[0], trk_p[0])
        and np.array_equal(trk_c2[1], trk_p[1])
    )
    print(f"bit-identical outputs on the shared slice: {same}")


if __name__ == "__main__":
    main()
