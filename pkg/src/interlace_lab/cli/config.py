"""Experiment configuration: JSON parsing, defaults and validation."""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from ..deviation.rates import DisconnectionSetup
from ..lattice import Box
from ..variational.regions import region_from_spec

KINDS = (
    "laplace-threeway",
    "capacity-scan",
    "rate-function",
    "insulation",
    "tilted-entropy",
    "subadditivity",
    "disconnection-frequency",
)

COMMON_DEFAULTS: dict[str, Any] = {
    "d": 3,
    "seed": 0,
    "threads": None,
    "tol": 1e-10,
    "output_dir": "results",
}

KIND_DEFAULTS: dict[str, dict[str, Any]] = {
    "laplace-threeway": {
        "box": {"lo": [0, 0, 0], "hi": [1, 1, 1]},
        "N": 3,
        "V": 0.05,
        "u": 1.0,
        "samples": 100_000,
        "R": None,
    },
    "capacity-scan": {
        "region": {"ball": {"center": [0, 0, 0], "radius": 1.0}},
        "N_ladder": [10, 20, 30],
    },
    "rate-function": {
        "box": {"lo": [-3, -3, -3], "hi": [3, 3, 3]},
        "obstacle": {"box": {"lo": [-1, -1, -1], "hi": [1, 1, 1]}},
        "N": 1,
        "a_values": [2.0, 4.0],
        "R": None,
    },
    "insulation": {
        "region": {"ball": {"center": [0, 0, 0], "radius": 1.0}},
        "box0": {"lo": [-2, -2, -2], "hi": [2, 2, 2]},
        "box": {"lo": [-3, -3, -3], "hi": [3, 3, 3]},
        "delta_values": [0.4, 0.2, 0.1],
        "a": 4.0,
        "u": 1.0,
        "N_ladder": [10],
    },
    "tilted-entropy": {
        "box": {"lo": [-2, -2, -2], "hi": [2, 2, 2]},
        "obstacle": {"box": {"lo": [-1, -1, -1], "hi": [1, 1, 1]}},
        "N": 1,
        "u": 1.0,
        "a": 2.0,
        "eps": 0.5,
        "samples": 100_000,
    },
    "subadditivity": {
        "box": {"lo": [0, 0, 0], "hi": [1, 1, 1]},
        "N": 3,
        "delta": 0.3,
        "t_values": [1.0, 2.0, 4.0],
        "samples": 20_000,
        "test_functions": ["one"],
        "center": "lebesgue",
    },
    "disconnection-frequency": {
        "region": {"ball": {"center": [0, 0, 0], "radius": 0.25}},
        "box0": {"lo": [-0.75, -0.75, -0.75], "hi": [0.75, 0.75, 0.75]},
        "box": {"lo": [-1.1, -1.1, -1.1], "hi": [1.1, 1.1, 1.1]},
        "delta": 0.3,
        "a": 20.0,
        "u": 10.0,
        "eps": 10.0,
        "N_ladder": [4, 6, 8],
        "samples": 400,
        "refine": False,
    },
}


class ConfigError(ValueError):
    """Invalid configuration; ``violations`` lists every problem found."""

    def __init__(self, violations: list[str]):
        super().__init__("invalid configuration:\n  - " + "\n  - ".join(violations))
        self.violations = violations


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    params: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.params[key]

    def get(self, key, default=None):
        return self.params.get(key, default)

    def to_dict(self) -> dict:
        return {"kind": self.kind, **self.params}


def _reject_duplicates(pairs):
    out = {}
    for k, v in pairs:
        if k in out:
            raise ConfigError([f"duplicate key {k!r}"])
        out[k] = v
    return out


def _box(spec, name: str, d: int, errs: list[str]) -> Box | None:
    try:
        if set(spec) != {"lo", "hi"}:
            raise ValueError("needs exactly the keys 'lo' and 'hi'")
        b = Box(tuple(spec["lo"]), tuple(spec["hi"]))
        if b.d != d:
            raise ValueError(f"has dimension {b.d}, expected {d}")
        return b
    except (TypeError, ValueError) as exc:
        errs.append(f"{name}: {exc}")
        return None


def _region(spec, name: str, d: int, errs: list[str]):
    try:
        if not isinstance(spec, dict) or not set(spec) <= {"ball", "box", "dilate"}:
            raise ValueError("must be {'ball': {center, radius}} or {'box': {lo, hi}}, optionally with 'dilate'")
        r = region_from_spec(spec)
        if r.d != d:
            raise ValueError(f"has dimension {r.d}, expected {d}")
        return r
    except (TypeError, ValueError, KeyError) as exc:
        errs.append(f"{name}: {exc}")
        return None


def _positive_int(v, name, errs, minimum=1):
    if isinstance(v, bool) or not isinstance(v, int) or v < minimum:
        errs.append(f"{name} must be an integer >= {minimum}")
        return False
    return True


def _positive(v, name, errs, allow_zero=False):
    ok = isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v) and (v >= 0 if allow_zero else v > 0)
    if not ok:
        errs.append(f"{name} must be a {'nonnegative' if allow_zero else 'positive'} finite number")
    return ok


def validate(raw: dict) -> ExperimentConfig:
    """Fill defaults and check every constraint, collecting all violations."""
    errs: list[str] = []
    if not isinstance(raw, dict):
        raise ConfigError(["top level must be a JSON object"])
    kind = raw.get("kind")
    if kind not in KINDS:
        raise ConfigError([f"kind must be one of {', '.join(KINDS)}; got {kind!r}"])
    allowed = {"kind", *COMMON_DEFAULTS, *KIND_DEFAULTS[kind]}
    for key in sorted(set(raw) - allowed):
        errs.append(f"unknown key {key!r} for kind {kind}")
    p = {**COMMON_DEFAULTS, **KIND_DEFAULTS[kind]}
    p.update({k: v for k, v in raw.items() if k != "kind" and k in allowed})

    d = p["d"]
    if not _positive_int(d, "d", errs, 3):
        raise ConfigError(errs)
    if isinstance(p["seed"], bool) or not isinstance(p["seed"], int) or not (0 <= p["seed"] < 2**64):
        errs.append("seed must be an integer in [0, 2^64)")
    if p["threads"] is None:
        p["threads"] = os.cpu_count() or 1
    else:
        _positive_int(p["threads"], "threads", errs)
    _positive(p["tol"], "tol", errs)
    if not isinstance(p["output_dir"], str):
        errs.append("output_dir must be a string")

    for key in ("N",):
        if key in p:
            _positive_int(p[key], key, errs)
    for key in ("N_ladder",):
        if key in p:
            if not isinstance(p[key], list) or not p[key]:
                errs.append(f"{key} must be a nonempty list")
            else:
                for i, n in enumerate(p[key]):
                    _positive_int(n, f"{key}[{i}]", errs)
    for key in ("samples",):
        if key in p:
            _positive_int(p[key], key, errs, 2)
    for key in ("u", "a", "delta"):
        if key in p:
            _positive(p[key], key, errs)
    if "R" in p and p["R"] is not None:
        _positive_int(p["R"], "R", errs)

    boxes = {}
    for key in ("box", "box0"):
        if key in p:
            boxes[key] = _box(p[key], key, d, errs)
    regions = {}
    for key in ("region", "obstacle"):
        if key in p:
            regions[key] = _region(p[key], key, d, errs)

    if kind == "laplace-threeway":
        if not isinstance(p["V"], (int, float)) or isinstance(p["V"], bool) or not math.isfinite(p["V"]):
            errs.append("V must be a finite number (constant potential on the window)")
    if kind == "rate-function":
        vals = p["a_values"]
        if not isinstance(vals, list) or not vals:
            errs.append("a_values must be a nonempty list")
        else:
            for i, a in enumerate(vals):
                _positive(a, f"a_values[{i}]", errs)
    if kind == "tilted-entropy":
        _positive(p["eps"], "eps", errs, allow_zero=True)
        if all(isinstance(p[k], (int, float)) for k in ("a", "eps", "u")) and p["a"] + p["eps"] < p["u"]:
            errs.append("tilted level a + eps must be at least u")
    if kind == "subadditivity":
        ts = p["t_values"]
        if not isinstance(ts, list) or not ts:
            errs.append("t_values must be a nonempty list")
        else:
            for i, t in enumerate(ts):
                _positive(t, f"t_values[{i}]", errs)
        tf = p["test_functions"]
        if not isinstance(tf, list) or not tf or tf[0] != "one":
            errs.append("test_functions must be a list starting with 'one' (the indicator of the box)")
        else:
            for name in tf[1:]:
                ok = isinstance(name, str) and name.startswith("coord:") and name[6:].isdigit() and int(name[6:]) < d
                if not ok:
                    errs.append(f"unknown test function {name!r}; use 'one' or 'coord:i'")
        if p["center"] not in ("mean", "lebesgue"):
            errs.append("center must be 'mean' or 'lebesgue'")
    if kind in ("insulation", "disconnection-frequency"):
        if kind == "insulation":
            dv = p["delta_values"]
            if not isinstance(dv, list) or not dv:
                errs.append("delta_values must be a nonempty list")
                deltas = []
            else:
                deltas = [x for i, x in enumerate(dv) if _positive(x, f"delta_values[{i}]", errs)]
            if all(isinstance(p[k], (int, float)) for k in ("a", "u")) and not p["a"] > p["u"]:
                errs.append("insulation bounds need a > u")
        else:
            deltas = [p["delta"]] if isinstance(p["delta"], (int, float)) else []
            if p["eps"] is not None:
                _positive(p["eps"], "eps", errs, allow_zero=True)
                if isinstance(p["eps"], (int, float)) and isinstance(p["a"], (int, float)) and p["a"] + p["eps"] < p["u"]:
                    errs.append("tilted level a + eps must be at least u")
            if not isinstance(p["refine"], bool):
                errs.append("refine must be true or false")
        K, B0, B = regions.get("region"), boxes.get("box0"), boxes.get("box")
        if K is not None and B0 is not None and B is not None:
            for delta in deltas:
                try:
                    DisconnectionSetup(K, B0, B, float(delta), 1.0, 1.0)
                except ValueError as exc:
                    errs.append(f"geometry (delta={delta}): {exc} (required: K inside B_0, and the boundaries of B_0 and B more than delta apart)")
    if errs:
        raise ConfigError(errs)
    return ExperimentConfig(kind, p)


def parse_config(path: str | os.PathLike) -> ExperimentConfig:
    """Read and validate a JSON experiment configuration."""
    path = Path(path)
    if not path.exists():
        raise ConfigError([f"config file {path} does not exist"])
    try:
        raw = json.loads(path.read_text(), object_pairs_hook=_reject_duplicates)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"malformed JSON: {exc}"]) from exc
    return validate(raw)
