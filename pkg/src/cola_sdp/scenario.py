"""
Scenario configuration, the bundled test conjunction and the build pipeline.

A scenario is a JSON document validated against :data:`CONFIG_SCHEMA`. It
names either a CDM file (relative paths resolve against the config file) or
inline TCA states with RTN position covariances, plus planner settings. All
quantities are SI unless the key carries another unit suffix.

The bundled scenario is a near-circular 550 km primary and a secondary on a
crossing orbit meeting it almost head-on. Both objects share the same RTN
covariance shape; its overall scale is solved for by bisection so that the
closed-form Pc at TCA equals 1e-5.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from importlib import resources

import jsonschema
import numpy as np
from scipy import optimize

from . import dynamics as dyn
from .cdm import CdmMessage, CdmObject, covariance_to_eci, format_cdm, load_cdm
from .conjunction import bplane, build_geometry, combined_covariance, density_ceiling, poc_estimate

BUNDLED_CONFIG = "bundled_scenario.json"
BUNDLED_CDM = "bundled_scenario.cdm"

_VEC3 = {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3}
_STATE = {
    "type": "object",
    "required": ["designator", "epoch", "position_m", "velocity_mps", "covariance_rtn_m2"],
    "additionalProperties": False,
    "properties": {
        "designator": {"type": "string"},
        "epoch": {"type": "string"},
        "position_m": _VEC3,
        "velocity_mps": _VEC3,
        "covariance_rtn_m2": {"type": "array", "items": _VEC3, "minItems": 3, "maxItems": 3},
    },
}

CONFIG_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "title": "collision-avoidance scenario",
    "type": "object",
    "additionalProperties": False,
    "oneOf": [
        {"required": ["cdm_path"], "not": {"anyOf": [{"required": ["primary"]}, {"required": ["secondary"]}]}},
        {"required": ["primary", "secondary"], "not": {"required": ["cdm_path"]}},
    ],
    "properties": {
        "name": {"type": "string"},
        "cdm_path": {"type": "string"},
        "primary": _STATE,
        "secondary": _STATE,
        "force_model": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "j2_enabled": {"type": "boolean"},
                "drag_enabled": {"type": "boolean"},
                "drag_ballistic_coefficient_m2pkg": {"type": "number", "exclusiveMinimum": 0},
                "drag_reference_density_kgpm3": {"type": "number", "minimum": 0},
                "drag_scale_height_m": {"type": "number", "exclusiveMinimum": 0},
                "drag_reference_altitude_m": {"type": "number"},
            },
        },
        "n_knots": {"type": "integer", "minimum": 2},
        "horizon_revolutions": {"type": "number", "exclusiveMinimum": 0},
        "horizon_s": {"type": "number", "exclusiveMinimum": 0},
        "target_pc": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "hard_body_radius_m": {"type": "number", "exclusiveMinimum": 0},
        "mode": {"enum": ["standard", "contingency"]},
        "alpha": {"type": "number", "exclusiveMinimum": 0},
        "control_upper_mmps2": {"type": ["number", "null"], "exclusiveMinimum": 0},
        "control_lower_mmps2": {"type": ["number", "null"], "minimum": 0},
        "dv_caps_mps": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
        "baseline_count": {"type": "integer", "minimum": 1},
    },
}

DEFAULTS = {
    "n_knots": 50,
    "horizon_revolutions": 1.0,
    "target_pc": 1e-6,
    "hard_body_radius_m": 10.0,
    "mode": "standard",
    "alpha": 10.0,
    "control_upper_mmps2": None,
    "control_lower_mmps2": None,
    "dv_caps_mps": [0.004, 0.006, 0.008, 0.010],
    "baseline_count": 100,
}


class ConfigError(ValueError):
    """Invalid or unreadable scenario configuration."""


@dataclass(frozen=True)
class ScenarioConfig:
    values: dict
    base_dir: str = "."
    source: str | None = None

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        return self.values.get(key, default)

    def with_overrides(self, **kw):
        vals = copy.deepcopy(self.values)
        vals.update({k: v for k, v in kw.items() if v is not None})
        return ScenarioConfig(validate_config(vals), self.base_dir, self.source)

    def digest(self):
        """SHA-256 of the canonical JSON form; stamps every report."""
        text = json.dumps(self.values, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    def cdm_file(self):
        path = self.values.get("cdm_path")
        if path is None:
            return None
        return path if os.path.isabs(path) else os.path.join(self.base_dir, path)

    def force_model(self):
        fm = self.values.get("force_model", {})
        keys = {
            "j2_enabled": "j2_enabled",
            "drag_enabled": "drag_enabled",
            "drag_ballistic_coefficient_m2pkg": "drag_ballistic_coefficient",
            "drag_reference_density_kgpm3": "drag_reference_density",
            "drag_scale_height_m": "drag_scale_height",
            "drag_reference_altitude_m": "drag_reference_altitude",
        }
        return dyn.ForceModelConfig(**{keys[k]: v for k, v in fm.items()})


def validate_config(values):
    try:
        jsonschema.validate(values, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {exc.message}") from None
    out = dict(DEFAULTS)
    out.update(values)
    if "horizon_s" in values:
        out.pop("horizon_revolutions", None)
    return out


def load_config(path):
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path) as fh:
            values = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    cfg = ScenarioConfig(validate_config(values), os.path.dirname(os.path.abspath(path)), path)
    cdm = cfg.cdm_file()
    if cdm is not None and not os.path.exists(cdm):
        raise ConfigError(f"CDM file not found: {cdm}")
    return cfg


def bundled_config_path():
    return str(resources.files("cola_sdp") / "data" / BUNDLED_CONFIG)


def load_bundled():
    return load_config(bundled_config_path())


# -- state sources -------------------------------------------------------------------

def _inline_object(entry):
    epoch = dyn.Epoch.from_iso(entry["epoch"])
    state = dyn.StateVector(epoch, entry["position_m"], entry["velocity_mps"])
    return CdmObject(entry["designator"], "EME2000", state, np.array(entry["covariance_rtn_m2"]))


def load_objects(cfg):
    """(primary, secondary) :class:`CdmObject` pair at TCA."""
    path = cfg.cdm_file()
    if path is not None:
        msg = load_cdm(path)
        return msg.objects
    prim, sec = _inline_object(cfg["primary"]), _inline_object(cfg["secondary"])
    if prim.state.epoch != sec.state.epoch:
        raise ConfigError("inline primary and secondary epochs differ")
    return prim, sec


# -- pipeline ------------------------------------------------------------------------

@dataclass
class Scenario:
    config: ScenarioConfig
    primary: CdmObject
    secondary: CdmObject
    force_model: dyn.ForceModelConfig
    c1_eci: np.ndarray
    c2_eci: np.ndarray
    horizon: float
    _model: dyn.LinearModel | None = field(default=None, repr=False)

    @property
    def hard_body_radius(self):
        return float(self.config["hard_body_radius_m"])

    def geometry(self, target_pc=None):
        target = self.config["target_pc"] if target_pc is None else target_pc
        return build_geometry(self.primary.state, self.secondary.state, self.c1_eci, self.c2_eci,
                              self.hard_body_radius, target)

    def initial_estimate(self):
        frame, c = self.frame_and_covariance()
        rb = frame.projector @ (self.primary.state.position - self.secondary.state.position)
        return poc_estimate(rb, c, self.hard_body_radius)

    def frame_and_covariance(self):
        dr = self.primary.state.position - self.secondary.state.position
        dv = self.primary.state.velocity - self.secondary.state.velocity
        frame = bplane(dr, dv)
        return frame, combined_covariance(self.c1_eci, self.c2_eci, frame)

    @property
    def model(self):
        """Linearized error-state model about the uncontrolled reference (built once)."""
        if self._model is None:
            n = int(self.config["n_knots"])
            start = dyn.backpropagate(self.primary.state, self.horizon, self.force_model)
            traj = dyn.discretize_reference(start, self.horizon, n, self.force_model)
            self._model = dyn.linearize(traj, self.force_model)
        return self._model


def build_scenario(cfg):
    prim, sec = load_objects(cfg)
    fm = cfg.force_model()
    c1 = covariance_to_eci(prim.position_covariance_rtn, prim.state)
    c2 = covariance_to_eci(sec.position_covariance_rtn, sec.state)
    if "horizon_s" in cfg.values:
        horizon = float(cfg["horizon_s"])
    else:
        horizon = float(cfg["horizon_revolutions"]) * dyn.orbital_period(prim.state, fm.mu)
    return Scenario(cfg, prim, sec, fm, c1, c2, horizon)


# -- bundled conjunction ---------------------------------------------------------------

ALTITUDE = 550e3
INCLINATION_DEG = 53.0
ARGUMENT_OF_LATITUDE_DEG = 40.0
CROSSING_ANGLE_DEG = 150.0
MISS_BPLANE_M = (150.0, 400.0)  # along b_x, b_z
SIGMA_RTN_SHAPE_M = (40.0, 400.0, 40.0)
TCA_ISO = "2025-03-01T12:00:00"
INITIAL_PC = 1e-5


def _rotate(axis, angle, x):
    """Rodrigues rotation of ``x`` about unit ``axis``."""
    return (x * math.cos(angle) + np.cross(axis, x) * math.sin(angle)
            + axis * (axis @ x) * (1.0 - math.cos(angle)))


def bundled_states(mu=dyn.ForceModelConfig().mu, earth_radius=dyn.ForceModelConfig().earth_radius):
    """Primary and secondary TCA states of the bundled encounter."""
    a = earth_radius + ALTITUDE
    speed = math.sqrt(mu / a)
    inc = math.radians(INCLINATION_DEG)
    u = math.radians(ARGUMENT_OF_LATITUDE_DEG)
    r_hat = np.array([math.cos(u), math.cos(inc) * math.sin(u), math.sin(inc) * math.sin(u)])
    t_hat = np.array([-math.sin(u), math.cos(inc) * math.cos(u), math.sin(inc) * math.cos(u)])
    rp, vp = a * r_hat, speed * t_hat
    vs = _rotate(r_hat, math.radians(CROSSING_ANGLE_DEG), vp)
    # any vector off the relative velocity fixes the plane orientation
    axes = bplane(r_hat, vp - vs)
    dr = MISS_BPLANE_M[0] * axes.b_x + MISS_BPLANE_M[1] * axes.b_z
    tca = dyn.Epoch.from_iso(TCA_ISO)
    return dyn.StateVector(tca, rp, vp), dyn.StateVector(tca, rp - dr, vs)


def _log_closed_form_pc(prim, sec, cov_rtn, r_hbr):
    c1 = covariance_to_eci(cov_rtn, prim)
    c2 = covariance_to_eci(cov_rtn, sec)
    dr = prim.position - sec.position
    frame = bplane(dr, prim.velocity - sec.velocity)
    c = combined_covariance(c1, c2, frame)
    rb = frame.projector @ dr
    return math.log(density_ceiling(r_hbr, c)) - 0.5 * float(rb @ np.linalg.solve(c, rb))


def calibrate_covariance_scale(prim, sec, shape_rtn, target_pc=INITIAL_PC, r_hbr=10.0):
    """Scale factor s with Pc(s^2 * shape) = target on the large-covariance branch.

    Pc(s) rises from zero, peaks where the miss sits one sigma out, then decays
    like the density ceiling. The root is bracketed past the peak and found
    by bisection.
    """
    shape = np.asarray(shape_rtn, dtype=float)

    def log_gap(scale):
        return _log_closed_form_pc(prim, sec, shape * scale ** 2, r_hbr) - math.log(target_pc)

    grid = np.logspace(-2, 4, 241)
    values = np.array([log_gap(s) for s in grid])
    peak = int(np.argmax(values))
    if values[peak] < 0:
        raise ValueError("target Pc is above the largest Pc any scale can give")
    beyond = np.flatnonzero(values[peak:] < 0)
    if beyond.size == 0:
        raise ValueError("could not bracket the calibration root")
    hi = peak + int(beyond[0])
    return float(optimize.bisect(log_gap, grid[hi - 1], grid[hi], xtol=1e-14, rtol=1e-14, maxiter=200))


def bundled_message():
    """The bundled CDM, calibrated so its closed-form Pc is 1e-5."""
    prim, sec = bundled_states()
    shape = np.diag(np.square(SIGMA_RTN_SHAPE_M))
    scale = calibrate_covariance_scale(prim, sec, shape)
    cov = shape * scale ** 2
    objects = (
        CdmObject("PRIMARY-550", "EME2000", prim, cov),
        CdmObject("SECONDARY-X", "EME2000", sec, cov),
    )
    miss = float(np.linalg.norm(prim.position - sec.position))
    return CdmMessage(prim.epoch, prim.epoch, objects, miss)


def write_bundled(directory):
    """Write the bundled CDM and config into ``directory``."""
    msg = bundled_message()
    with open(os.path.join(directory, BUNDLED_CDM), "w") as fh:
        fh.write(format_cdm(msg, comment="bundled near head-on LEO conjunction, Pc calibrated to 1e-5"))
    cfg = {"name": "bundled-leo-550km", "cdm_path": BUNDLED_CDM}
    cfg.update(DEFAULTS)
    with open(os.path.join(directory, BUNDLED_CONFIG), "w") as fh:
        json.dump(cfg, fh, indent=2)
        fh.write("\n")


def ceiling_of(scn):
    _, c = scn.frame_and_covariance()
    return density_ceiling(scn.hard_body_radius, c)
