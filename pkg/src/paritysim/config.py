"""Scenario configuration: TOML schema, defaults, and validation.

Flat sections per module; all physical defaults are the reference device
values (eta=0.78, f_mm=0.84, t_w=1 us, t2_star=3.5 us, f_ro=0.94,
p_e_th=0.04, n0=3.3).  Unknown sections or keys are rejected by name.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

from .errors import ConfigError

SCENARIO_NAMES = (
    "parity-train",
    "wigner-map",
    "theta-sweep",
    "herald-cats",
    "g2-sweep",
    "moments",
)

DEFAULTS: dict = {
    "detector": {
        "t_w": 1.0,
        "t2_star": 3.5,
        "t1": 4.5,
        "f_ro": 0.94,
        "p_e_th": 0.04,
        "delta": 0.0,
        "eta": 0.78,
    },
    "channels": {"eta": 0.78, "f_mm": 0.84},
    "grid": {"half_extent": 3.0, "points": 41},
    "noise": {"n0": 3.3},
    "source": {"theta": math.pi / 2, "two_photon_contamination": 0.0, "t_p": 0.08, "kappa_p": 2.0},
    "run": {"seed": 0, "n_max": 20, "recon_n_max": 5},
    "parity_train": {"max_pulses": 6, "shots": 100000, "ideal_detection": False},
    "wigner_map": {
        "state": "vacuum",
        "alpha_re": 1.06,
        "alpha_im": 0.0,
        "shots": 0,
        "audit_convolution": False,
    },
    "theta_sweep": {
        "thetas": [k * math.pi / 4 for k in range(9)],
        "shots": 10000,
    },
    "herald_cats": {"alpha_re": 1.06, "alpha_im": 0.0},
    "g2_sweep": {
        "powers": [0.25, 0.5, 0.75, 1.0, 1.5, 2.0],
        "shots": 200000,
        "ideal_detection": True,
    },
    "moments": {
        "alpha_re": 1.06,
        "alpha_im": 0.0,
        "shots": 200000,
        "max_order": 4,
        "herald": True,
        "record_rows": 100000,
    },
}

_RANGES = {
    ("detector", "eta"): (lambda v: 0.0 < v <= 1.0, "must lie in (0, 1]"),
    ("detector", "f_ro"): (lambda v: 0.5 <= v <= 1.0, "must lie in [0.5, 1]"),
    ("detector", "p_e_th"): (lambda v: 0.0 <= v <= 0.5, "must lie in [0, 0.5]"),
    ("detector", "t_w"): (lambda v: v > 0, "must be positive"),
    ("detector", "t2_star"): (lambda v: v > 0, "must be positive"),
    ("detector", "t1"): (lambda v: v > 0, "must be positive"),
    ("detector", "delta"): (lambda v: abs(v) <= 0.5, "must lie in [-0.5, 0.5]"),
    ("channels", "eta"): (lambda v: 0.0 < v <= 1.0, "must lie in (0, 1]"),
    ("channels", "f_mm"): (lambda v: 0.0 < v <= 1.0, "must lie in (0, 1]"),
    ("grid", "half_extent"): (lambda v: v > 0, "must be positive"),
    ("grid", "points"): (lambda v: v >= 2, "must be >= 2"),
    ("noise", "n0"): (lambda v: v >= 0, "must be >= 0"),
    ("source", "theta"): (lambda v: math.isfinite(v), "must be finite"),
    ("source", "two_photon_contamination"): (lambda v: 0.0 <= v <= 0.1, "must lie in [0, 0.1]"),
    ("run", "seed"): (lambda v: 0 <= v < 2**64, "must fit in u64"),
    ("run", "n_max"): (lambda v: 1 <= v <= 60, "must lie in [1, 60]"),
    ("run", "recon_n_max"): (lambda v: 1 <= v <= 10, "must lie in [1, 10]"),
    ("parity_train", "max_pulses"): (lambda v: 0 <= v <= 20, "must lie in [0, 20]"),
    ("parity_train", "shots"): (lambda v: v >= 1, "must be >= 1"),
    ("wigner_map", "shots"): (lambda v: v >= 0, "must be >= 0 (0 = noiseless)"),
    ("theta_sweep", "shots"): (lambda v: v >= 0, "must be >= 0 (0 = noiseless)"),
    ("g2_sweep", "shots"): (lambda v: v >= 1000, "must be >= 1000"),
    ("moments", "shots"): (lambda v: v >= 1000, "must be >= 1000"),
    ("moments", "max_order"): (lambda v: 2 <= v <= 7, "must lie in [2, 7]"),
    ("moments", "record_rows"): (lambda v: v >= 0, "must be >= 0"),
}

_WIGNER_STATES = ("vacuum", "one", "superposition", "coherent", "cat-even", "cat-odd")


@dataclass
class ValidationReport:
    ok: bool
    errors: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    defaulted: list = field(default_factory=list)

    def lines(self) -> list:
        out = []
        for e in self.errors:
            out.append(f"error: {e}")
        for w in self.warnings:
            out.append(f"warning: {w}")
        if self.ok:
            out.append("OK")
            if self.defaulted:
                out.append("defaulted: " + ", ".join(sorted(self.defaulted)))
        return out


@dataclass(frozen=True)
class Scenario:
    """Fully resolved scenario: name plus the merged parameter tree."""

    name: str
    params: dict
    report: ValidationReport

    def section(self, key: str) -> dict:
        return self.params[key]


def _merge_with_defaults(raw: dict) -> tuple[dict, list, list]:
    errors: list = []
    defaulted: list = []
    merged: dict = {}
    known = set(DEFAULTS) | {"scenario"}
    for section in raw:
        if section not in known:
            errors.append(f"unknown section [{section}]")
    for section, defaults in DEFAULTS.items():
        given = raw.get(section, {})
        if not isinstance(given, dict):
            errors.append(f"section [{section}] must be a table")
            given = {}
        for key in given:
            if key not in defaults:
                errors.append(f"unknown key {section}.{key}")
        merged[section] = {}
        for key, default in defaults.items():
            if key in given:
                merged[section][key] = given[key]
            else:
                merged[section][key] = default
                defaulted.append(f"{section}.{key}")
    return merged, errors, defaulted


def validate_config(raw: dict) -> tuple[str, dict, ValidationReport]:
    scenario_tbl = raw.get("scenario", {})
    errors: list = []
    warnings: list = []
    name = scenario_tbl.get("name") if isinstance(scenario_tbl, dict) else None
    if isinstance(scenario_tbl, dict):
        for key in scenario_tbl:
            if key != "name":
                errors.append(f"unknown key scenario.{key}")
    if name not in SCENARIO_NAMES:
        errors.append(f"scenario.name must be one of {', '.join(SCENARIO_NAMES)}; got {name!r}")
    merged, merge_errors, defaulted = _merge_with_defaults(raw)
    errors.extend(merge_errors)

    for (section, key), (check, message) in _RANGES.items():
        value = merged[section][key]
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            errors.append(f"{section}.{key} must be a number")
        elif not check(value):
            errors.append(f"{section}.{key}={value} {message}")
    for section, key in (("theta_sweep", "thetas"), ("g2_sweep", "powers")):
        seq = merged[section][key]
        if not isinstance(seq, list) or not seq or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v) for v in seq
        ):
            errors.append(f"{section}.{key} must be a non-empty list of finite numbers")
    if merged["g2_sweep"]["powers"] and isinstance(merged["g2_sweep"]["powers"], list):
        if any(isinstance(p, (int, float)) and p <= 0 for p in merged["g2_sweep"]["powers"]):
            errors.append("g2_sweep.powers must be positive mean photon numbers")
    if merged["wigner_map"]["state"] not in _WIGNER_STATES:
        errors.append(
            f"wigner_map.state must be one of {', '.join(_WIGNER_STATES)}; "
            f"got {merged['wigner_map']['state']!r}"
        )
    for flag_key in (
        ("parity_train", "ideal_detection"),
        ("g2_sweep", "ideal_detection"),
        ("moments", "herald"),
        ("wigner_map", "audit_convolution"),
    ):
        v = merged[flag_key[0]][flag_key[1]]
        if not isinstance(v, bool):
            errors.append(f"{flag_key[0]}.{flag_key[1]} must be a boolean")
    if merged["detector"]["t_w"] >= merged["detector"]["t2_star"]:
        warnings.append(
            "detector.t_w is not shorter than detector.t2_star; "
            "parity assignment degrades severely"
        )

    report = ValidationReport(ok=not errors, errors=errors, warnings=warnings, defaulted=defaulted)
    return (name if isinstance(name, str) else ""), merged, report


def load_scenario(path: Path) -> Scenario:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
    name, merged, report = validate_config(raw)
    if not report.ok:
        raise ConfigError("; ".join(report.errors))
    return Scenario(name=name, params=merged, report=report)
