"""Config-file ingestion for the command line.

Schema: one ``key = value`` pair per line, ``#`` starts a comment, blank
lines ignored. Positions are comma-separated pairs in meters. The harvest
process can be given either directly as ``lambda1`` (1/mJ) or as
``harvest_mean_dB`` (mean harvest per slot in dB relative to
``harvest_dB_ref_mJ``, default 1 mJ; -11 dB means 10**(-1.1) mJ per
slot). Supplying both, or both ``N0`` and ``N0_dBm``, is an error. Every
defaulted key is reported back to the caller so emitted reports are
self-describing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from ..channel import (RELAY_POLICIES, RELAY_TIMINGS, NetworkConfig,
                       dbm_to_watts)
from ..errors import ConfigError

MANDATORY_KEYS = ("pos_S", "pos_R", "pos_D", "M_R", "z")
HARVEST_KEYS = ("lambda1", "harvest_mean_dB")

_FLOAT_KEYS = {
    "alpha", "P_S", "M_R", "N0", "N0_dBm", "R0", "gamma_th", "z",
    "lambda1", "harvest_mean_dB", "harvest_dB_ref_mJ",
}
_POSITION_KEYS = {"pos_S", "pos_R", "pos_D"}
_INT_KEYS = {"n_bins"}
_ENUM_KEYS = {"relay_policy": RELAY_POLICIES, "relay_timing": RELAY_TIMINGS}

KNOWN_KEYS = (_FLOAT_KEYS | _POSITION_KEYS | _INT_KEYS
              | set(_ENUM_KEYS) | {"harvest_dB_ref_mJ"})


@dataclass(frozen=True)
class ParsedConfig:
    config: NetworkConfig
    applied_defaults: dict
    source: dict   # raw key -> value as given in the file


def _parse_value(key: str, raw: str, lineno: int):
    try:
        if key in _POSITION_KEYS:
            parts = [float(p) for p in raw.split(",")]
            if len(parts) != 2:
                raise ValueError
            return (parts[0], parts[1])
        if key in _INT_KEYS:
            return int(raw)
        if key in _ENUM_KEYS:
            if raw not in _ENUM_KEYS[key]:
                raise ConfigError(
                    f"line {lineno}: {key} must be one of "
                    f"{', '.join(_ENUM_KEYS[key])}, got {raw!r}")
            return raw
        return float(raw)
    except ConfigError:
        raise
    except ValueError:
        raise ConfigError(
            f"line {lineno}: cannot parse value {raw!r} for key {key!r}") from None


def _check_range(key: str, value, lineno: int):
    positive = {"alpha", "P_S", "M_R", "N0", "R0", "gamma_th", "lambda1",
                "harvest_dB_ref_mJ"}
    if key in positive and value <= 0.0:
        raise ConfigError(f"line {lineno}: {key} must be positive, got {value!r}")
    if key == "z" and not 0.0 <= value < 1.0:
        raise ConfigError(f"line {lineno}: z must lie in [0, 1), got {value!r}")
    if key == "n_bins" and value < 2:
        raise ConfigError(f"line {lineno}: n_bins must be at least 2, got {value!r}")


def parse_config(text: str) -> ParsedConfig:
    """Parse and validate config text into a NetworkConfig.

    Unknown keys, missing mandatory keys, and out-of-range values raise
    ConfigError naming the offending line.
    """
    given: dict = {}
    lines: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in body.split("=", 1))
        if key not in KNOWN_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in given:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        value = _parse_value(key, raw, lineno)
        _check_range(key, value, lineno)
        given[key] = value
        lines[key] = lineno

    missing = [k for k in MANDATORY_KEYS if k not in given]
    if not any(k in given for k in HARVEST_KEYS):
        missing.append(" or ".join(HARVEST_KEYS))
    if missing:
        raise ConfigError("missing mandatory keys: " + ", ".join(missing))

    if all(k in given for k in HARVEST_KEYS):
        raise ConfigError(
            f"line {lines['harvest_mean_dB']}: give either lambda1 or "
            "harvest_mean_dB, not both")
    if "N0" in given and "N0_dBm" in given:
        raise ConfigError(
            f"line {lines['N0_dBm']}: give either N0 or N0_dBm, not both")

    applied: dict = {}
    kwargs: dict = {}

    for key in ("pos_S", "pos_R", "pos_D", "alpha", "P_S", "M_R", "R0",
                "z", "n_bins", "relay_policy", "relay_timing"):
        if key in given:
            kwargs[key] = given[key]
        else:
            kwargs[key] = NetworkConfig.__dataclass_fields__[key].default
            applied[key] = kwargs[key]

    if "N0" in given:
        kwargs["N0"] = given["N0"]
    elif "N0_dBm" in given:
        kwargs["N0"] = dbm_to_watts(given["N0_dBm"])
    else:
        kwargs["N0"] = NetworkConfig.__dataclass_fields__["N0"].default
        applied["N0"] = kwargs["N0"]

    if "lambda1" in given:
        kwargs["lambda1"] = given["lambda1"]
    else:
        ref = given.get("harvest_dB_ref_mJ", 1.0)
        if "harvest_dB_ref_mJ" not in given:
            applied["harvest_dB_ref_mJ"] = ref
        mean = ref * 10.0 ** (given["harvest_mean_dB"] / 10.0)
        kwargs["lambda1"] = 1.0 / mean

    if "gamma_th" in given:
        kwargs["gamma_th"] = given["gamma_th"]
    else:
        kwargs["gamma_th"] = 2.0 ** kwargs["R0"] - 1.0
        applied["gamma_th"] = kwargs["gamma_th"]

    try:
        cfg = NetworkConfig(**kwargs)
    except ValueError as err:
        raise ConfigError(str(err)) from err
    return ParsedConfig(config=cfg, applied_defaults=applied, source=given)


def load_config(path: str) -> ParsedConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())
