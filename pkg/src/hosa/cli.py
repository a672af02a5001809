"""Command-line front end.

Subcommands: ``filter`` renders a filter's time trace, frequency response and
summary; ``simulate`` runs a scan from a TOML config; ``sequence`` optimizes
or inspects pulse sequences; ``predistort`` inverts an RC lowpass on the
drive envelope.  Exit codes: 0 success, 2 usage or config errors,
3 infeasible sequence constraints, 4 numerical failure during a run.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .analyzer import scan_drive_amplitude, scan_filters, scan_noise_frequency
from .coherent import drive_from_filter, predistort
from .config import ConfigError, InfeasibleError, load_run_plan
from .filters import (
    BlackmanFilterSpec,
    blackman_frequency_filter,
    blackman_sensitivity,
    piecewise_filter_amplitude,
    piecewise_values,
)
from .fock import (
    optimize_sequence,
    piecewise_frequency_filter,
    reference_target,
    sensitivity_from_sequence,
    sequence_from_json,
    sequence_to_json,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INFEASIBLE = 3
EXIT_NUMERICAL = 4

OUTPUT_ENV = "HOSA_OUTPUT_DIR"


def _out_dir(args) -> Path:
    out = args.output or os.environ.get(OUTPUT_ENV) or "."
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write(path: Path, text: str) -> None:
    path.write_text(text)
    print(f"wrote {path}")


def _csv(header: str, columns) -> str:
    rows = [header]
    n = len(columns[0])
    for i in range(n):
        rows.append(",".join(repr(float(c[i])) for c in columns))
    return "\n".join(rows) + "\n"


def _load_sequence(path: str):
    file = Path(path)
    if not file.is_file():
        raise ConfigError(f"no such sequence file: {file}")
    try:
        return sequence_from_json(file.read_text())
    except ValueError as exc:
        raise ConfigError(f"{file.name}: {exc}") from exc


def cmd_filter(args) -> int:
    out = _out_dir(args)
    if args.piecewise is not None:
        seq = _load_sequence(args.piecewise)
        pw = sensitivity_from_sequence(seq, "half_value")
        t = np.linspace(pw.breakpoints[0], pw.breakpoints[-1], args.points)
        s_t = piecewise_values(pw, t)
        filt = piecewise_frequency_filter(pw)
    else:
        if args.tw_s is None or args.k is None:
            raise ConfigError("filter needs --tw-s and --k (or --piecewise)")
        try:
            spec = BlackmanFilterSpec(args.tw_s, args.k, args.s0)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        t = np.linspace(-spec.t_w, spec.t_w, args.points)
        s_t = blackman_sensitivity(spec, t)
        filt = blackman_frequency_filter(spec)
    _write(out / "filter_time.csv", _csv("t_s,s_t", [t, s_t]))
    keep = filt.f_grid >= 0.0
    _write(
        out / "filter_freq.csv",
        _csv("f_hz,magnitude_sq", [filt.f_grid[keep], filt.magnitude_sq[keep]]),
    )
    summary = {
        "f0_hz": filt.f0,
        "rbw_hz": filt.rbw,
        "amplification": filt.amplification,
    }
    _write(out / "filter.json", json.dumps(summary, indent=2) + "\n")
    return EXIT_OK


def _run_filter_bank(scan: dict, threads) -> tuple[str, str]:
    del threads  # analytic; nothing to parallelize
    f = np.linspace(scan["f_min_hz"], scan["f_max_hz"], scan["points"])
    columns = [f]
    header = ["f_hz"]
    summaries = []
    for i, center in enumerate(scan["centers_hz"]):
        try:
            target = reference_target(center, **scan["target"])
            opt = optimize_sequence(target)
        except ValueError as exc:
            raise InfeasibleError(f"center {center:g} Hz: {exc}") from exc
        pw = sensitivity_from_sequence(opt.sequence, "half_value")
        mag_sq = np.abs(piecewise_filter_amplitude(pw, f)) ** 2
        columns.append(mag_sq)
        header.append(f"filter{i}_magnitude_sq")
        summaries.append(
            {
                "requested_center_hz": center,
                "center_hz": opt.center_hz,
                "rbw_hz": opt.rbw_hz,
                "residual": opt.residual,
                "pulses": len(opt.sequence.pulses),
                "total_duration_s": opt.sequence.total_duration,
            }
        )
    doc = {"mode": "filter_bank", "filters": summaries, "scan": scan}
    return _csv(",".join(header), columns), json.dumps(doc, indent=2) + "\n"


def cmd_simulate(args) -> int:
    plan = load_run_plan(args.config)
    out = _out_dir(args)
    threads = args.threads if args.threads is not None else plan.threads
    if plan.mode == "filter_bank":
        csv_text, json_text = _run_filter_bank(plan.scan, threads)
        _write(out / "filter_bank.csv", csv_text)
        _write(out / "filter_bank.json", json_text)
        return EXIT_OK
    config = plan.config
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    if plan.mode == "noise_frequency":
        result = scan_noise_frequency(config, plan.scan["f_hz"], threads=threads)
    elif plan.mode == "filters":
        result = scan_filters(config, plan.scan["k"], threads=threads)
    else:
        result = scan_drive_amplitude(config, plan.scan["s0"], threads=threads)
    _write(out / "scan.csv", result.to_csv())
    _write(out / "scan.json", result.to_json() + "\n")
    return EXIT_OK


def cmd_sequence_optimize(args) -> int:
    out = _out_dir(args)
    try:
        target = reference_target(
            args.f0_hz,
            cycles=args.cycles,
            amplitude=args.amplitude,
            max_phonon=args.max_phonon,
            sideband_pi=args.sideband_pi_s,
            mw_pi=args.mw_pi_s,
        )
        opt = optimize_sequence(target)
    except ValueError as exc:
        raise InfeasibleError(str(exc)) from exc
    _write(out / "sequence.json", sequence_to_json(opt.sequence))
    report = {
        "residual": opt.residual,
        "center_hz": opt.center_hz,
        "rbw_hz": opt.rbw_hz,
        "pulses": len(opt.sequence.pulses),
        "total_duration_s": opt.sequence.total_duration,
    }
    print(json.dumps(report, indent=2))
    return EXIT_OK


def cmd_sequence_show(args) -> int:
    out = _out_dir(args)
    seq = _load_sequence(args.sequence)
    pw = sensitivity_from_sequence(seq, "half_value")
    # two rows per plateau so the CSV plots as the exact staircase
    ts, vals = [], []
    for i, v in enumerate(pw.values):
        ts.extend((pw.breakpoints[i], pw.breakpoints[i + 1]))
        vals.extend((v, v))
    _write(out / "staircase.csv", _csv("t_s,delta_n", [ts, vals]))
    return EXIT_OK


def cmd_predistort(args) -> int:
    out = _out_dir(args)
    try:
        spec = BlackmanFilterSpec(args.tw_s, args.k, args.s0)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    drive = drive_from_filter(spec)
    n = args.points
    t = np.linspace(-spec.t_w, spec.t_w, n, endpoint=False)
    oi, oq = predistort(drive, args.c1_s, args.c2_s2, args.carrier_hz, t)
    target = drive.amplitude(t)

    # frequency-domain round trip: push the predistorted signal back through
    # the lowpass and compare against the target inside the drive band
    dt = t[1] - t[0]
    freqs = np.fft.fftfreq(n, dt)
    w = 2 * np.pi * freqs
    carrier = 2 * np.pi * args.carrier_hz * t
    u = oi * np.cos(carrier) + oq * np.sin(carrier)
    response = 1.0 + 1j * w * args.c1_s - w * w * args.c2_s2
    filtered = np.fft.fft(u) * dt / response
    want = np.fft.fft(target * np.cos(carrier)) * dt
    band_hw = drive.b.max() / (2 * np.pi) + 2.0 / spec.t_w
    band = np.abs(np.abs(freqs) - args.carrier_hz) < band_hw
    scale = float(np.max(np.abs(want[band])))
    err = float(np.max(np.abs(filtered[band] - want[band]))) / scale

    _write(
        out / "predistort.csv",
        _csv("t_s,omega_i_rad_s,omega_q_rad_s,target_rad_s", [t, oi, oq, target]),
    )
    report = {
        "carrier_hz": args.carrier_hz,
        "c1_s": args.c1_s,
        "c2_s2": args.c2_s2,
        "round_trip_error": err,
    }
    _write(out / "predistort.json", json.dumps(report, indent=2) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hosa",
        description="Harmonic-oscillator noise spectrum analyzer toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("filter", help="render a filter's s(t), |s~(f)|^2 and summary")
    p.add_argument("--tw-s", type=float, default=None, help="half-window t_w in seconds")
    p.add_argument("--k", type=int, default=None, help="number of oscillation periods")
    p.add_argument("--s0", type=float, default=1.0, help="peak sensitivity amplitude")
    p.add_argument(
        "--piecewise", metavar="SEQ_JSON", default=None,
        help="render the staircase filter of a pulse sequence instead",
    )
    p.add_argument("--points", type=int, default=2001, help="time samples")
    p.add_argument("--output", default=None, help="output directory")
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("simulate", help="run a scan described by a TOML config")
    p.add_argument("config", help="path to the run configuration")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--threads", type=int, default=None, help="worker threads")
    p.add_argument("--output", default=None, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sequence", help="optimize or inspect pulse sequences")
    seq_sub = p.add_subparsers(dest="action", required=True)

    q = seq_sub.add_parser("optimize", help="fit a sequence to a passband target")
    q.add_argument("--f0-hz", type=float, required=True, help="passband center")
    q.add_argument("--cycles", type=float, default=1.5, help="oscillations in the window")
    q.add_argument("--amplitude", type=float, default=3.0, help="target staircase amplitude")
    q.add_argument("--max-phonon", type=int, default=3, help="highest allowed rung")
    q.add_argument("--sideband-pi-s", type=float, default=16e-6, help="sideband pi time")
    q.add_argument("--mw-pi-s", type=float, default=0.0, help="microwave pi time")
    q.add_argument("--output", default=None, help="output directory")
    q.set_defaults(func=cmd_sequence_optimize)

    q = seq_sub.add_parser("show", help="staircase CSV of a sequence")
    q.add_argument("sequence", help="sequence JSON file")
    q.add_argument("--output", default=None, help="output directory")
    q.set_defaults(func=cmd_sequence_show)

    p = sub.add_parser("predistort", help="invert an RC lowpass on the drive")
    p.add_argument("--tw-s", type=float, required=True, help="half-window t_w in seconds")
    p.add_argument("--k", type=int, required=True, help="number of oscillation periods")
    p.add_argument("--s0", type=float, default=1.0, help="peak sensitivity amplitude")
    p.add_argument("--carrier-hz", type=float, required=True, help="carrier frequency")
    p.add_argument("--c1-s", type=float, default=0.0, help="first-order lowpass constant")
    p.add_argument(
        "--c2-s2", type=float, default=0.0,
        help="second-order lowpass constant (0 keeps the single-pole case)",
    )
    p.add_argument("--points", type=int, default=1 << 16, help="FFT sample count")
    p.add_argument("--output", default=None, help="output directory")
    p.set_defaults(func=cmd_predistort)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InfeasibleError as exc:
        print(f"error: infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
