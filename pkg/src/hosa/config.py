"""TOML run configurations with strict keys and explicit units in key names.

Every physical quantity carries its unit as a key suffix (``t_w_s``,
``f0_hz``, ``delta0_rad_s``); unknown keys anywhere in the file are errors so
typos never silently fall back to defaults.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .analyzer import ExperimentConfig
from .coherent import ReadoutModel
from .filters import BlackmanFilterSpec
from .fock import (
    PulseSequence,
    SequenceTarget,
    optimize_sequence,
    reference_target,
    sequence_from_json,
)
from .noise import CompositeNoise, PowerLawNoise, SinusoidalNoise, WhiteBandNoise

__all__ = [
    "ConfigError",
    "InfeasibleError",
    "RunPlan",
    "load_run_plan",
]

MODES = ("noise_frequency", "filters", "amplitude", "filter_bank")


class ConfigError(ValueError):
    """Malformed run configuration; the message names the offending key path."""


class InfeasibleError(ValueError):
    """Sequence constraints admit no solution; the message names the binding one."""


@dataclass(frozen=True)
class RunPlan:
    """Parsed configuration: what to scan plus the resolved experiment."""

    mode: str
    config: ExperimentConfig | None  # None for the analytic filter_bank mode
    scan: dict
    threads: int | None


def _type_name(v) -> str:
    return type(v).__name__


def _take(tbl: dict, path: str, key: str, kind, required: bool, default=None):
    """Pop ``key`` from ``tbl`` enforcing its type; dotted path for messages."""
    where = f"{path}.{key}" if path else key
    if key not in tbl:
        if required:
            raise ConfigError(f"{where}: missing required key")
        return default
    v = tbl.pop(key)
    if kind is float:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {_type_name(v)}")
        return float(v)
    if kind is int:
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(f"{where}: expected an integer, got {_type_name(v)}")
        return v
    if kind is bool:
        if not isinstance(v, bool):
            raise ConfigError(f"{where}: expected a boolean, got {_type_name(v)}")
        return v
    if kind is str:
        if not isinstance(v, str):
            raise ConfigError(f"{where}: expected a string, got {_type_name(v)}")
        return v
    if kind is list:
        if not isinstance(v, list):
            raise ConfigError(f"{where}: expected a list, got {_type_name(v)}")
        return v
    raise AssertionError(kind)


def _take_table(tbl: dict, path: str, key: str, required: bool) -> dict | None:
    where = f"{path}.{key}" if path else key
    if key not in tbl:
        if required:
            raise ConfigError(f"{where}: missing required table")
        return None
    v = tbl.pop(key)
    if not isinstance(v, dict):
        raise ConfigError(f"{where}: expected a table, got {_type_name(v)}")
    return v


def _reject_leftovers(tbl: dict, path: str) -> None:
    if tbl:
        key = sorted(tbl)[0]
        where = f"{path}.{key}" if path else key
        raise ConfigError(f"{where}: unknown key")


def _float_list(tbl: dict, path: str, key: str, required: bool):
    raw = _take(tbl, path, key, list, required)
    if raw is None:
        return None
    where = f"{path}.{key}" if path else key
    if not raw:
        raise ConfigError(f"{where}: list must not be empty")
    out = []
    for i, v in enumerate(raw):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{where}[{i}]: expected a number, got {_type_name(v)}")
        out.append(float(v))
    return out


def _int_list(tbl: dict, path: str, key: str):
    raw = _take(tbl, path, key, list, required=True)
    where = f"{path}.{key}" if path else key
    if not raw:
        raise ConfigError(f"{where}: list must not be empty")
    for i, v in enumerate(raw):
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(f"{where}[{i}]: expected an integer, got {_type_name(v)}")
    return list(raw)


def _build_noise(tbl: dict, path: str):
    kind = _take(tbl, path, "type", str, required=True)
    try:
        if kind == "sinusoidal":
            delta0 = _take(tbl, path, "delta0_rad_s", float, required=True)
            f_noise = _take(tbl, path, "f_noise_hz", float, required=True)
            phase = _take(tbl, path, "phase_rad", float, required=False)
            _reject_leftovers(tbl, path)
            return SinusoidalNoise(delta0, f_noise, phase)
        if kind == "white":
            level = _take(tbl, path, "level_rad2_s2_per_hz", float, required=True)
            f_min = _take(tbl, path, "f_min_hz", float, required=True)
            f_max = _take(tbl, path, "f_max_hz", float, required=True)
            _reject_leftovers(tbl, path)
            return WhiteBandNoise(level, f_min, f_max)
        if kind == "power_law":
            level1 = _take(
                tbl, path, "level_at_1hz_rad2_s2_per_hz", float, required=True
            )
            exponent = _take(tbl, path, "exponent", float, required=True)
            f_min = _take(tbl, path, "f_min_hz", float, required=True)
            f_max = _take(tbl, path, "f_max_hz", float, required=True)
            _reject_leftovers(tbl, path)
            return PowerLawNoise(level1, exponent, f_min, f_max)
        if kind == "composite":
            raw = _take(tbl, path, "components", list, required=True)
            _reject_leftovers(tbl, path)
            parts = []
            for i, item in enumerate(raw):
                sub = f"{path}.components[{i}]"
                if not isinstance(item, dict):
                    raise ConfigError(f"{sub}: expected a table")
                parts.append(_build_noise(dict(item), sub))
            return CompositeNoise(tuple(parts))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{path}: {exc}") from exc
    raise ConfigError(f"{path}.type: unknown noise type {kind!r}")


def _sequence_target(tbl: dict, path: str, f0: float) -> SequenceTarget:
    cycles = _take(tbl, path, "cycles", float, required=False, default=1.5)
    amplitude = _take(tbl, path, "amplitude", float, required=False, default=3.0)
    max_phonon = _take(tbl, path, "max_phonon", int, required=False, default=3)
    sideband_pi = _take(tbl, path, "sideband_pi_s", float, required=False, default=16e-6)
    mw_pi = _take(tbl, path, "mw_pi_s", float, required=False, default=0.0)
    try:
        return reference_target(
            f0,
            cycles=cycles,
            amplitude=amplitude,
            max_phonon=max_phonon,
            sideband_pi=sideband_pi,
            mw_pi=mw_pi,
        )
    except ValueError as exc:
        raise InfeasibleError(f"{path}: {exc}") from exc


def _build_filter(tbl: dict, path: str, base_dir: Path):
    kind = _take(tbl, path, "type", str, required=True)
    if kind == "blackman":
        t_w = _take(tbl, path, "t_w_s", float, required=True)
        k = _take(tbl, path, "k", int, required=True)
        s0 = _take(tbl, path, "s0", float, required=False, default=1.0)
        _reject_leftovers(tbl, path)
        try:
            return BlackmanFilterSpec(t_w, k, s0)
        except ValueError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    if kind == "sequence":
        rel = _take(tbl, path, "path", str, required=True)
        _reject_leftovers(tbl, path)
        file = base_dir / rel
        if not file.is_file():
            raise ConfigError(f"{path}.path: no such file {str(file)!r}")
        try:
            return sequence_from_json(file.read_text())
        except ValueError as exc:
            raise ConfigError(f"{path}.path: {exc}") from exc
    if kind == "optimize":
        f0 = _take(tbl, path, "f0_hz", float, required=True)
        target = _sequence_target(tbl, path, f0)
        _reject_leftovers(tbl, path)
        try:
            return optimize_sequence(target).sequence
        except ValueError as exc:
            raise InfeasibleError(f"{path}: {exc}") from exc
    raise ConfigError(f"{path}.type: unknown filter type {kind!r}")


def _build_readout(tbl: dict, path: str) -> ReadoutModel:
    eta = _take(tbl, path, "eta", float, required=False, default=0.357)
    n_max = _take(tbl, path, "n_max", int, required=False, default=60)
    area = _take(tbl, path, "pulse_area_rad", float, required=False)
    _reject_leftovers(tbl, path)
    try:
        if area is None:
            return ReadoutModel(eta=eta, n_max=n_max)
        return ReadoutModel(eta=eta, n_max=n_max, pulse_area=area)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _scan_payload(tbl: dict, mode: str) -> dict:
    path = "scan"
    if mode == "noise_frequency":
        explicit = _float_list(tbl, path, "f_hz", required=False)
        if explicit is not None:
            _reject_leftovers(tbl, path)
            return {"f_hz": explicit}
        f_min = _take(tbl, path, "f_min_hz", float, required=True)
        f_max = _take(tbl, path, "f_max_hz", float, required=True)
        points = _take(tbl, path, "points", int, required=True)
        _reject_leftovers(tbl, path)
        if points < 2 or f_max <= f_min:
            raise ConfigError("scan: need f_min_hz < f_max_hz and points >= 2")
        step = (f_max - f_min) / (points - 1)
        return {"f_hz": [f_min + step * i for i in range(points)]}
    if mode == "filters":
        ks = _int_list(tbl, path, "k")
        _reject_leftovers(tbl, path)
        return {"k": ks}
    if mode == "amplitude":
        s0s = _float_list(tbl, path, "s0", required=True)
        _reject_leftovers(tbl, path)
        return {"s0": s0s}
    # filter_bank: optimize one sequence per requested center, report the
    # analytic response of each on a common frequency grid
    centers = _float_list(tbl, path, "centers_hz", required=True)
    f_min = _take(tbl, path, "f_min_hz", float, required=True)
    f_max = _take(tbl, path, "f_max_hz", float, required=True)
    points = _take(tbl, path, "points", int, required=True)
    target_kw = {
        "cycles": _take(tbl, path, "cycles", float, required=False, default=1.5),
        "amplitude": _take(tbl, path, "amplitude", float, required=False, default=3.0),
        "max_phonon": _take(tbl, path, "max_phonon", int, required=False, default=3),
        "sideband_pi": _take(
            tbl, path, "sideband_pi_s", float, required=False, default=16e-6
        ),
        "mw_pi": _take(tbl, path, "mw_pi_s", float, required=False, default=0.0),
    }
    _reject_leftovers(tbl, path)
    if points < 2 or f_max <= f_min or f_min < 0:
        raise ConfigError("scan: need 0 <= f_min_hz < f_max_hz and points >= 2")
    return {
        "centers_hz": centers,
        "f_min_hz": f_min,
        "f_max_hz": f_max,
        "points": points,
        "target": target_kw,
    }


def load_run_plan(path) -> RunPlan:
    """Parse a TOML run configuration into a RunPlan.

    Raises ConfigError on malformed input (unknown keys, wrong types, missing
    sections) and InfeasibleError when an inline sequence optimization has no
    solution under its constraints.
    """
    file = Path(path)
    try:
        doc = tomllib.loads(file.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"no such config file: {file}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{file.name}: {exc}") from exc

    mode = _take(doc, "", "mode", str, required=True)
    if mode not in MODES:
        raise ConfigError(f"mode: unknown mode {mode!r}; choose from {MODES}")
    threads = _take(doc, "", "threads", int, required=False)
    if threads is not None and threads < 1:
        raise ConfigError("threads: must be at least 1")
    scan_tbl = _take_table(doc, "", "scan", required=True)
    scan = _scan_payload(scan_tbl, mode)

    if mode == "filter_bank":
        method = _take(doc, "", "method", str, required=True)
        if method != "fock":
            raise ConfigError("method: filter_bank mode requires method = 'fock'")
        _reject_leftovers(doc, "")
        return RunPlan(mode, None, scan, threads)

    method = _take(doc, "", "method", str, required=True)
    seed = _take(doc, "", "seed", int, required=True)
    repetitions = _take(doc, "", "repetitions", int, required=True)
    shot_noise = _take(doc, "", "shot_noise", bool, required=False, default=True)

    filter_tbl = _take_table(doc, "", "filter", required=True)
    noise_tbl = _take_table(doc, "", "noise", required=True)
    readout_tbl = _take_table(doc, "", "readout", required=False)
    env_tbl = _take_table(doc, "", "environment", required=False)
    _reject_leftovers(doc, "")

    filt = _build_filter(filter_tbl, "filter", file.parent)
    if mode == "filters" and not isinstance(filt, BlackmanFilterSpec):
        raise ConfigError("filter.type: filters mode sweeps k of a blackman filter")
    noise = _build_noise(noise_tbl, "noise")
    readout = _build_readout(readout_tbl, "readout") if readout_tbl is not None else None

    env = {}
    if env_tbl is not None:
        env["nbar_base"] = _take(
            env_tbl, "environment", "nbar_base", float, required=False, default=0.0
        )
        env["heating_rate"] = _take(
            env_tbl, "environment", "heating_rate_per_s", float, required=False,
            default=0.0,
        )
        env["sigma_p"] = _take(
            env_tbl, "environment", "sigma_p", float, required=False
        )
        env["drive_limit"] = _take(
            env_tbl, "environment", "drive_limit_rad_s", float, required=False
        )
        _reject_leftovers(env_tbl, "environment")

    try:
        config = ExperimentConfig(
            method=method,
            filter=filt,
            noise=noise,
            repetitions=repetitions,
            seed=seed,
            readout=readout,
            shot_noise=shot_noise,
            **env,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if mode == "noise_frequency" and not isinstance(noise, SinusoidalNoise):
        raise ConfigError("noise.type: noise_frequency mode sweeps a sinusoidal tone")
    return RunPlan(mode, config, scan, threads)
