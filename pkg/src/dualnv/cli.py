"""Command-line front end: scan, calibrate, odmr, selftest.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys

import numpy as np

from . import demux
from .config import load_run_config
from .errors import ConfigError, DualNvError
from .fields import total_field
from .scanner import EdgeScan, ScanPath, fit_probe_geometry, run_scan
from .selftest import run_selftest
from .spinmodel import odmr_spectrum

EDGE_SCAN_COLUMNS = ("pos_nm", "f1a_mhz", "f1b_mhz", "f2a_mhz", "f2b_mhz")


def _fmt(value) -> str:
    return f"{value:.9g}"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dualnv",
        description="Simulate multiplexed dual-sensor scanning magnetometry.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", help="path to the INI run configuration")
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("--threads", type=int, default=None,
                        help="worker processes (default: machine parallelism)")
    common.add_argument("--out-dir", default=None, help="override the output directory")

    sub = parser.add_subparsers(dest="command", required=True)

    p_scan = sub.add_parser("scan", parents=[common], help="run a scan and write scan_result.csv")
    p_scan.add_argument("--mode", choices=("phases", "covariance", "both"), default=None)
    p_scan.add_argument("--dump-counts", action="store_true",
                        help="also write one counts_matrix CSV per pixel")

    p_cal = sub.add_parser("calibrate", parents=[common],
                           help="fit probe geometry from two edge-scan CSVs")
    p_cal.add_argument("scan_x", help="edge scan along x (CSV)")
    p_cal.add_argument("scan_y", help="edge scan along y (CSV)")
    p_cal.add_argument("--bootstrap", type=int, default=None,
                       help="bootstrap resamples for uncertainties (0 disables)")

    sub.add_parser("odmr", parents=[common], help="write the simulated ODMR spectrum")

    sub.add_parser("selftest", help="run fast internal consistency checks")
    return parser


def _read_edge_scan(path: str) -> EdgeScan:
    try:
        f = open(path, newline="")
    except FileNotFoundError:
        raise ConfigError("edge scan file not found", path=path) from None
    with f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise ConfigError("edge scan file is empty", path=path) from None
        if tuple(h.strip() for h in header) != EDGE_SCAN_COLUMNS:
            raise ConfigError(
                f"row 1: expected header {','.join(EDGE_SCAN_COLUMNS)}", path=path, line=1
            )
        positions = []
        shifts = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 5:
                raise ConfigError(
                    f"row {lineno}: expected 5 fields, got {len(row)}", path=path, line=lineno
                )
            try:
                values = [float(x) for x in row]
            except ValueError:
                raise ConfigError(
                    f"row {lineno}: non-numeric field", path=path, line=lineno
                ) from None
            positions.append(values[0])
            shifts.append(values[1:])
    if len(positions) < 5:
        raise ConfigError("edge scan needs at least 5 points", path=path)
    return EdgeScan(np.asarray(positions), np.asarray(shifts))


def _resolve_out_dir(cfg, args) -> str:
    out_dir = args.out_dir if args.out_dir is not None else cfg.output_dir
    os.makedirs(out_dir, exist_ok=True)
    return out_dir


def cmd_scan(args) -> int:
    cfg = load_run_config(args.config, need=("scan",))
    seed = args.seed if args.seed is not None else cfg.seed
    mode = args.mode if args.mode is not None else (cfg.scan_mode or "both")
    out_dir = _resolve_out_dir(cfg, args)
    try:
        result = run_scan(
            cfg.probe, cfg.sources, cfg.ramsey, cfg.scan_path,
            mode=mode, seed=seed, schedule=cfg.schedule,
            noise_sigmas=cfg.noise_sigmas, threads=args.threads,
            collect_counts=args.dump_counts,
        )
    except ValueError as exc:
        raise ConfigError(str(exc), path=args.config) from exc
    result_path = os.path.join(out_dir, "scan_result.csv")
    result.to_csv(result_path)
    written = [result_path]
    if args.dump_counts and result.matrices is not None:
        for i, pair in enumerate(result.matrices):
            if pair is None:
                continue
            counts, moments = pair
            path = os.path.join(out_dir, f"counts_matrix_{i:04d}.csv")
            with open(path, "w", newline="") as f:
                f.write("combo,total,e,v\n")
                for label, total, e, v in demux.matrix_rows(counts, moments):
                    f.write(f"{label},{int(total)},{_fmt(e)},{_fmt(v)}\n")
            written.append(path)
    print("\n".join(written))
    return 0


def cmd_calibrate(args) -> int:
    cfg = load_run_config(args.config, need=("calibration",))
    scan_x = _read_edge_scan(args.scan_x)
    scan_y = _read_edge_scan(args.scan_y)
    seed = args.seed if args.seed is not None else cfg.seed
    cal = cfg.calibration
    bootstrap = args.bootstrap if args.bootstrap is not None else cal["bootstrap"]
    out_dir = _resolve_out_dir(cfg, args)
    fit = fit_probe_geometry(
        scan_x, scan_y, cal["guess"], cal["sample"],
        gamma=cfg.ramsey.gamma, bootstrap=bootstrap, seed=seed,
    )
    report_path = os.path.join(out_dir, "fit_report.txt")
    with open(report_path, "w") as f:
        for name, value, sigma in fit.report_values():
            err = "n/a" if sigma is None else _fmt(sigma)
            f.write(f"{name} = {_fmt(value)} ± {err}\n")
        f.write(f"residual_norm_mhz = {_fmt(fit.residual_norm)}\n")
        f.write(f"nfev = {fit.nfev}\n")
    resid_path = os.path.join(out_dir, "fit_residuals.csv")
    _write_fit_residuals(resid_path, fit, scan_x, scan_y, cal, cfg.ramsey.gamma)
    print(report_path)
    print(resid_path)
    return 0


def _write_fit_residuals(path, fit, scan_x, scan_y, cal, gamma):
    from .scanner import _edge_scan_model

    params = [
        fit.theta1_deg, fit.phi1_deg, fit.theta2_deg, fit.phi2_deg,
        fit.edge_x1_nm, fit.edge_x2_nm, fit.edge_y1_nm, fit.edge_y2_nm,
        fit.z1_nm, fit.z2_nm,
    ]
    channels = ("f1a", "f1b", "f2a", "f2b")
    with open(path, "w", newline="") as f:
        f.write("scan,pos_nm,channel,residual_mhz\n")
        for axis, scan in (("x", scan_x), ("y", scan_y)):
            model = _edge_scan_model(params, scan.positions_nm, axis, cal["sample"], gamma)
            resid = scan.shifts_mhz - model
            for i, pos in enumerate(scan.positions_nm):
                for j, channel in enumerate(channels):
                    f.write(f"{axis},{_fmt(pos)},{channel},{_fmt(resid[i, j])}\n")


def cmd_odmr(args) -> int:
    cfg = load_run_config(args.config, need=("odmr",))
    od = cfg.odmr
    out_dir = _resolve_out_dir(cfg, args)
    n_steps = int(math.floor((od["stop_mhz"] - od["start_mhz"]) / od["step_mhz"] + 1e-9))
    freqs = od["start_mhz"] + od["step_mhz"] * np.arange(n_steps + 1)
    bias = np.stack([
        total_field(cfg.sources, sensor.position_nm, 0.0) for sensor in cfg.probe.sensors
    ])
    spectrum = odmr_spectrum(
        cfg.probe.sensors, bias, freqs,
        d0_mhz=od["d0_mhz"], dip_width_mhz=od["dip_width_mhz"], dip_depth=od["dip_depth"],
        gamma=cfg.ramsey.gamma,
    )
    spec_path = os.path.join(out_dir, "odmr_spectrum.csv")
    with open(spec_path, "w", newline="") as f:
        f.write("freq_mhz,pl\n")
        for freq, pl in zip(spectrum.freqs_mhz, spectrum.pl):
            f.write(f"{_fmt(freq)},{_fmt(pl)}\n")
    centers_path = os.path.join(out_dir, "odmr_centers.csv")
    with open(centers_path, "w", newline="") as f:
        f.write("sensor,transition,freq_mhz\n")
        for i in range(spectrum.centers_mhz.shape[0]):
            for j, name in enumerate(("lower", "upper")):
                f.write(f"{i + 1},{name},{_fmt(spectrum.centers_mhz[i, j])}\n")
    if spectrum.overlapping:
        print("note: overlapping dips (degenerate transitions)", file=sys.stderr)
    print(spec_path)
    print(centers_path)
    return 0


def cmd_selftest(_args) -> int:
    return 0 if run_selftest() else 1


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = {
        "scan": cmd_scan,
        "calibrate": cmd_calibrate,
        "odmr": cmd_odmr,
        "selftest": cmd_selftest,
    }[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DualNvError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main_entry():
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
