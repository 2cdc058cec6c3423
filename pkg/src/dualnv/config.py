"""Run configuration: flat INI-style sections with strict key checking.

Unknown sections or keys fail parsing so that typos cannot silently change a
simulation.  Seeds are mandatory; there is no wall-clock fallback.
"""

from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .fields import CurrentWaveform, FiniteWire, StripeEdge, UniformField
from .probe import DephasingModel, NvSensor, ProbePair, SensorAxis
from .scanner import EdgeSampleParams, ProbeGeometryGuess, ScanPath, line_path
from .spinmodel import RamseyConfig

__all__ = ["RunConfig", "load_run_config"]

_KEYS = {
    "run": {"required": {"seed"}, "optional": set()},
    "probe": {
        "required": {
            "theta1_deg", "phi1_deg", "theta2_deg", "phi2_deg",
            "dx_nm", "dy_nm", "dz_nm", "z1_nm",
            "c1", "c2", "eps1", "eps2", "zeta1", "zeta2",
        },
        "optional": {"f1a_mhz", "f1b_mhz", "f2a_mhz", "f2b_mhz"},
    },
    "sequence": {
        "required": {"tau_ns", "n_shots"},
        "optional": {
            "schedule", "zeta_exponent", "gamma_ghz_per_t", "overhead_us",
            "noise1_rad", "noise2_rad",
        },
    },
    "scan": {
        "required": {"start_x_nm", "start_y_nm", "stop_x_nm", "stop_y_nm", "pixels"},
        "optional": {"start_z_nm", "stop_z_nm", "dwell", "mode"},
    },
    "odmr": {
        "required": {"start_mhz", "stop_mhz", "step_mhz"},
        "optional": {"d0_mhz", "dip_width_mhz", "dip_depth"},
    },
    "calibration": {
        "required": {"sheet_moment_mt_nm"},
        "optional": {
            "sign", "edge_x1_nm", "edge_x2_nm", "edge_y1_nm", "edge_y2_nm",
            "bootstrap",
        },
    },
    "output": {"required": set(), "optional": {"dir", "formats"}},
}

_FIELD_KEYS = {
    "uniform": {"required": {"kind"}, "optional": {"bx_mt", "by_mt", "bz_mt"}},
    "stripe_edge": {
        "required": {"kind", "edge_position_nm", "normal", "sheet_moment_mt_nm"},
        "optional": {"sign"},
    },
    "wire": {
        "required": {"kind", "width_nm", "center_nm", "direction", "waveform", "current_ma"},
        "optional": {"frequency_khz"},
    },
}


@dataclass(frozen=True, eq=False)
class RunConfig:
    """Parsed and validated configuration for one run."""

    probe: ProbePair
    sources: tuple
    ramsey: RamseyConfig
    schedule: str
    noise_sigmas: tuple
    overhead_s: float
    seed: int
    output_dir: str
    scan_path: ScanPath | None
    scan_mode: str | None
    odmr: dict | None
    calibration: dict | None
    source_path: str


def _find_line(text: str, token: str) -> int | None:
    pattern = re.compile(rf"^\s*{re.escape(token)}\s*[=\[]?", re.IGNORECASE)
    for i, line in enumerate(text.splitlines(), start=1):
        if pattern.match(line) or token in line.split("=")[0]:
            if line.strip().startswith(("#", ";")):
                continue
            first = line.split("=")[0].strip().strip("[]").strip()
            if first.lower() == token.lower() or first.lower().startswith(token.lower()):
                return i
    return None


class _Section:
    def __init__(self, name, mapping, path, text):
        self.name = name
        self.map = dict(mapping)
        self.path = path
        self.text = text

    def _fail(self, key, message):
        raise ConfigError(
            f"[{self.name}] {message}", path=self.path, line=_find_line(self.text, key)
        )

    def check_keys(self, required, optional):
        for key in self.map:
            if key not in required and key not in optional:
                self._fail(key, f"unknown key {key!r}")
        for key in required:
            if key not in self.map:
                raise ConfigError(
                    f"[{self.name}] missing required key {key!r}",
                    path=self.path,
                    line=_find_line(self.text, self.name),
                )

    def get_float(self, key, default=None):
        if key not in self.map:
            return default
        try:
            value = float(self.map[key])
        except ValueError:
            self._fail(key, f"key {key!r} must be a number, got {self.map[key]!r}")
        if not math.isfinite(value):
            self._fail(key, f"key {key!r} must be finite")
        return value

    def get_int(self, key, default=None):
        if key not in self.map:
            return default
        try:
            return int(self.map[key], 0) if isinstance(self.map[key], str) else int(self.map[key])
        except ValueError:
            self._fail(key, f"key {key!r} must be an integer, got {self.map[key]!r}")

    def get_str(self, key, default=None, choices=None):
        value = self.map.get(key, default)
        if choices is not None and value not in choices:
            self._fail(key, f"key {key!r} must be one of {sorted(choices)}, got {value!r}")
        return value


def _parse_direction(section: _Section, key: str):
    raw = section.get_str(key)
    if raw == "x":
        return np.array([1.0, 0.0, 0.0])
    if raw == "y":
        return np.array([0.0, 1.0, 0.0])
    try:
        ang = math.radians(float(raw))
    except (TypeError, ValueError):
        section._fail(key, f"key {key!r} must be 'x', 'y', or an angle in degrees")
    return np.array([math.cos(ang), math.sin(ang), 0.0])


def _build_source(section: _Section):
    kind = section.get_str("kind")
    if kind not in _FIELD_KEYS:
        section._fail("kind", f"unknown source kind {kind!r}")
    section.check_keys(_FIELD_KEYS[kind]["required"], _FIELD_KEYS[kind]["optional"])
    if kind == "uniform":
        b = np.array([
            section.get_float("bx_mt", 0.0),
            section.get_float("by_mt", 0.0),
            section.get_float("bz_mt", 0.0),
        ]) * 1e-3
        return UniformField(b)
    if kind == "stripe_edge":
        return StripeEdge(
            edge_position_nm=section.get_float("edge_position_nm"),
            edge_normal=_parse_direction(section, "normal"),
            sheet_moment_t_nm=section.get_float("sheet_moment_mt_nm") * 1e-3,
            magnetization_sign=section.get_int("sign", 1),
        )
    waveform_kind = section.get_str("waveform", choices={"dc", "ac"})
    freq_khz = section.get_float("frequency_khz")
    if waveform_kind == "ac" and freq_khz is None:
        section._fail("waveform", "AC wire requires frequency_khz")
    waveform = CurrentWaveform(
        kind=waveform_kind,
        amplitude_a=section.get_float("current_ma") * 1e-3,
        frequency_hz=None if freq_khz is None else freq_khz * 1e3,
    )
    return FiniteWire(
        width_nm=section.get_float("width_nm"),
        center_nm=section.get_float("center_nm"),
        direction=_parse_direction(section, "direction"),
        waveform=waveform,
    )


def _build_probe(section: _Section, tau_s: float, zeta_exponent: float, d0_mhz: float) -> ProbePair:
    z1 = section.get_float("z1_nm")
    dz = section.get_float("dz_nm")
    sensors = []
    for i, pos in enumerate((
        np.array([0.0, 0.0, z1]),
        np.array([section.get_float("dx_nm"), section.get_float("dy_nm"), z1 + dz]),
    )):
        tag = str(i + 1)
        try:
            sensors.append(
                NvSensor(
                    axis=SensorAxis(
                        section.get_float(f"theta{tag}_deg"), section.get_float(f"phi{tag}_deg")
                    ),
                    position_nm=pos,
                    photon_yield=section.get_float(f"c{tag}"),
                    contrast=section.get_float(f"eps{tag}"),
                    dephasing=DephasingModel.from_zeta_at(
                        section.get_float(f"zeta{tag}"), tau_s, zeta_exponent
                    ),
                    transition_frequencies_mhz=(
                        section.get_float(f"f{tag}a_mhz", d0_mhz),
                        section.get_float(f"f{tag}b_mhz", d0_mhz),
                    ),
                )
            )
        except ValueError as exc:
            raise ConfigError(f"[probe] {exc}", path=section.path) from exc
    return ProbePair(*sensors)


def load_run_config(path: str, need=()) -> RunConfig:
    """Load and validate a run configuration file.

    `need` lists sections that must be present for the requested command
    (e.g. ("scan",) for a scan run); probe, sequence, and run are always
    required.
    """
    try:
        with open(path) as f:
            text = f.read()
    except FileNotFoundError:
        raise ConfigError("configuration file not found", path=path) from None
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",))
    try:
        parser.read_string(text, source=path)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        raise ConfigError(f"malformed configuration: {exc.message}", path=path, line=line) from exc

    sections = {}
    field_sections = []
    for name in parser.sections():
        if name == "field" or name.startswith("field:"):
            field_sections.append(_Section(name, parser[name], path, text))
        elif name in _KEYS:
            sections[name] = _Section(name, parser[name], path, text)
        else:
            raise ConfigError(
                f"unknown section [{name}]", path=path, line=_find_line(text, name)
            )

    for name in ("run", "probe", "sequence") + tuple(need):
        if name not in sections:
            raise ConfigError(f"missing required section [{name}]", path=path)
    for name, sec in sections.items():
        sec.check_keys(_KEYS[name]["required"], _KEYS[name]["optional"])

    run = sections["run"]
    seed = run.get_int("seed")
    if not (0 <= seed < 2**64):
        run._fail("seed", "seed must be an unsigned 64-bit integer")

    seq = sections["sequence"]
    tau_s = seq.get_float("tau_ns") * 1e-9
    gamma = 2.0 * math.pi * seq.get_float("gamma_ghz_per_t", 28.0) * 1e9
    try:
        ramsey = RamseyConfig(tau_s=tau_s, n_shots=seq.get_int("n_shots"), gamma=gamma)
    except ValueError as exc:
        raise ConfigError(f"[sequence] {exc}", path=path) from exc
    schedule = seq.get_str("schedule", "sixteen", choices={"sixteen", "eight", "n_sensor"})
    if schedule == "n_sensor":
        schedule = "sixteen"  # two configured sensors: the factorial grid is 4x4
    noise = (seq.get_float("noise1_rad", 0.0), seq.get_float("noise2_rad", 0.0))
    overhead_s = seq.get_float("overhead_us", 3.0) * 1e-6

    odmr_cfg = None
    if "odmr" in sections:
        od = sections["odmr"]
        odmr_cfg = {
            "start_mhz": od.get_float("start_mhz"),
            "stop_mhz": od.get_float("stop_mhz"),
            "step_mhz": od.get_float("step_mhz"),
            "d0_mhz": od.get_float("d0_mhz", 2870.0),
            "dip_width_mhz": od.get_float("dip_width_mhz", 8.0),
            "dip_depth": od.get_float("dip_depth", 0.2),
        }
        if odmr_cfg["step_mhz"] <= 0 or odmr_cfg["stop_mhz"] <= odmr_cfg["start_mhz"]:
            od._fail("step_mhz", "frequency grid must have positive extent and step")

    d0_for_probe = odmr_cfg["d0_mhz"] if odmr_cfg else 2870.0
    probe = _build_probe(
        sections["probe"], tau_s, seq.get_float("zeta_exponent", 2.0), d0_for_probe
    )

    sources = []
    for sec in field_sections:
        try:
            sources.append(_build_source(sec))
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"[{sec.name}] {exc}", path=path) from exc

    scan_path = None
    scan_mode = None
    if "scan" in sections:
        sc = sections["scan"]
        pixels = sc.get_int("pixels")
        if pixels < 1:
            sc._fail("pixels", "pixel count must be positive")
        dwell = sc.get_int("dwell", ramsey.n_shots)
        scan_mode = sc.get_str("mode", "both", choices={"phases", "covariance", "both"})
        start = [sc.get_float("start_x_nm"), sc.get_float("start_y_nm"), sc.get_float("start_z_nm", 0.0)]
        stop = [sc.get_float("stop_x_nm"), sc.get_float("stop_y_nm"), sc.get_float("stop_z_nm", 0.0)]
        try:
            scan_path = line_path(start, stop, pixels, dwell)
        except ValueError as exc:
            raise ConfigError(f"[scan] {exc}", path=path) from exc

    calibration = None
    if "calibration" in sections:
        cal = sections["calibration"]
        sample = EdgeSampleParams(
            sheet_moment_t_nm=cal.get_float("sheet_moment_mt_nm") * 1e-3,
            magnetization_sign=cal.get_int("sign", 1),
        )
        guess = ProbeGeometryGuess(
            theta1_deg=probe.sensor1.axis.theta_deg,
            phi1_deg=probe.sensor1.axis.phi_deg,
            theta2_deg=probe.sensor2.axis.theta_deg,
            phi2_deg=probe.sensor2.axis.phi_deg,
            z1_nm=probe.sensor1.position_nm[2],
            z2_nm=probe.sensor2.position_nm[2],
            edge_x1_nm=cal.get_float("edge_x1_nm"),
            edge_x2_nm=cal.get_float("edge_x2_nm"),
            edge_y1_nm=cal.get_float("edge_y1_nm"),
            edge_y2_nm=cal.get_float("edge_y2_nm"),
        )
        calibration = {
            "sample": sample,
            "guess": guess,
            "bootstrap": cal.get_int("bootstrap", 100),
        }

    out = sections.get("output")
    output_dir = "out"
    if out is not None:
        output_dir = out.get_str("dir", "out")
        fmt = out.get_str("formats", "csv")
        if fmt != "csv":
            out._fail("formats", f"unsupported output format {fmt!r}")

    return RunConfig(
        probe=probe,
        sources=tuple(sources),
        ramsey=ramsey,
        schedule=schedule,
        noise_sigmas=noise,
        overhead_s=overhead_s,
        seed=seed,
        output_dir=output_dir,
        scan_path=scan_path,
        scan_mode=scan_mode,
        odmr=odmr_cfg,
        calibration=calibration,
        source_path=path,
    )
