"""
Conjunction data message (KVN subset) parsing and RTN covariance handling.

Supported lines are ``KEY = VALUE [unit]``, ``COMMENT ...`` and blank lines.
Header keys precede the first ``OBJECT`` line; each ``OBJECT = OBJECT1|OBJECT2``
opens an object section. File units follow CCSDS convention (km, km/s, m^2);
everything is converted to SI on input.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .dynamics import Epoch, StateVector
from .errors import (
    DegenerateState,
    DuplicateKey,
    MalformedLine,
    MissingKey,
    NonPsdCovariance,
    UnsupportedFrame,
)

SUPPORTED_FRAME = "EME2000"
PSD_ALLOWANCE = 1e-9

STATE_KEYS = ("X", "Y", "Z", "X_DOT", "Y_DOT", "Z_DOT")
COVARIANCE_KEYS = ("CR_R", "CT_R", "CT_T", "CN_R", "CN_T", "CN_N")
OBJECT_KEYS = ("OBJECT_DESIGNATOR", "REF_FRAME") + STATE_KEYS + COVARIANCE_KEYS
HEADER_KEYS = ("TCA",)

_LINE = re.compile(r"^\s*([A-Z0-9_]+)\s*=\s*(.*?)\s*(\[[^\]]*\])?\s*$")


@dataclass(frozen=True)
class CdmObject:
    designator: str
    ref_frame: str
    state: StateVector
    position_covariance_rtn: np.ndarray
    hard_body_radius_contribution: float = 0.0

    def __post_init__(self):
        cov = np.array(self.position_covariance_rtn, dtype=float).reshape(3, 3)
        cov.setflags(write=False)
        object.__setattr__(self, "position_covariance_rtn", cov)


@dataclass(frozen=True)
class CdmMessage:
    creation_date: Epoch
    tca: Epoch
    objects: tuple
    miss_distance: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))
        if len(self.objects) != 2:
            raise ValueError("a CDM carries exactly two objects")
        if self.tca < self.creation_date:
            raise ValueError("TCA precedes the creation date")


def rtn_basis(state):
    """Rows R, T, N in ECI; the matrix maps ECI components to RTN."""
    r = np.asarray(state.position, dtype=float)
    v = np.asarray(state.velocity, dtype=float)
    h = np.cross(r, v)
    rn, hn = np.linalg.norm(r), np.linalg.norm(h)
    if rn == 0.0 or hn <= 1e-12 * rn * np.linalg.norm(v):
        raise DegenerateState("position and velocity are parallel")
    radial = r / rn
    normal = h / hn
    transverse = np.cross(normal, radial)
    return np.vstack([radial, transverse, normal])


def repair_covariance(cov):
    """Symmetrize and clamp round-off negative eigenvalues; reject real ones."""
    cov = np.asarray(cov, dtype=float)
    cov = 0.5 * (cov + cov.T)
    w, v = np.linalg.eigh(cov)
    floor = -PSD_ALLOWANCE * max(float(np.trace(cov)), 0.0)
    if w[0] < floor or (w[0] < 0 and floor == 0.0):
        raise NonPsdCovariance(f"minimum eigenvalue {w[0]:.3e} below {floor:.3e}")
    if w[0] >= 0:
        return cov
    w = np.maximum(w, 0.0)
    out = (v * w) @ v.T
    return 0.5 * (out + out.T)


def covariance_to_eci(cov_rtn, state):
    """Rotate an RTN position covariance into ECI: Q^T C Q with Q = rtn_basis."""
    cov = repair_covariance(cov_rtn)
    q = rtn_basis(state)
    out = q.T @ cov @ q
    return 0.5 * (out + out.T)


def _number(value, line_no, raw):
    try:
        return float(value)
    except ValueError:
        raise MalformedLine(line_no, raw) from None


def parse_cdm(text):
    """Parse KVN text (str or UTF-8 bytes) into a :class:`CdmMessage`."""
    if isinstance(text, (bytes, bytearray)):
        text = text.decode("utf-8")
    header = {}
    sections = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("COMMENT"):
            continue
        m = _LINE.match(line)
        if m is None:
            raise MalformedLine(line_no, raw)
        key, value = m.group(1), m.group(2)
        if key == "OBJECT":
            sections.append({"OBJECT": (value, line_no, raw)})
            continue
        target = sections[-1] if sections else header
        if key in target:
            raise DuplicateKey(key)
        target[key] = (value, line_no, raw)

    for key in HEADER_KEYS:
        if key not in header:
            raise MissingKey(key)
    tca = _epoch(header["TCA"])
    creation = _epoch(header["CREATION_DATE"]) if "CREATION_DATE" in header else tca
    miss = None
    if "MISS_DISTANCE" in header:
        miss = _number(*header["MISS_DISTANCE"])
    if len(sections) != 2:
        raise MissingKey("OBJECT")
    objects = tuple(_parse_object(sec, tca) for sec in sections)
    return CdmMessage(creation, tca, objects, miss)


def _epoch(entry):
    value, line_no, raw = entry
    try:
        return Epoch.from_iso(value)
    except (ValueError, IndexError):
        raise MalformedLine(line_no, raw) from None


def _parse_object(sec, tca):
    for key in OBJECT_KEYS:
        if key not in sec:
            raise MissingKey(key)
    frame = sec["REF_FRAME"][0]
    if frame != SUPPORTED_FRAME:
        raise UnsupportedFrame(frame)
    vals = {k: _number(*sec[k]) for k in STATE_KEYS + COVARIANCE_KEYS}
    pos = np.array([vals["X"], vals["Y"], vals["Z"]]) * 1e3
    vel = np.array([vals["X_DOT"], vals["Y_DOT"], vals["Z_DOT"]]) * 1e3
    state = StateVector(tca, pos, vel)
    cov = np.array([
        [vals["CR_R"], vals["CT_R"], vals["CN_R"]],
        [vals["CT_R"], vals["CT_T"], vals["CN_T"]],
        [vals["CN_R"], vals["CN_T"], vals["CN_N"]],
    ])
    cov = repair_covariance(cov)
    hbr = _number(*sec["HBR"]) if "HBR" in sec else 0.0
    return CdmObject(sec["OBJECT_DESIGNATOR"][0], frame, state, cov, hbr)


def format_cdm(msg, comment=None):
    """Write ``msg`` back to KVN; ``parse_cdm(format_cdm(m))`` reproduces ``m``."""
    lines = ["CCSDS_CDM_VERS = 1.0"]
    if comment:
        lines.append(f"COMMENT {comment}")
    lines.append(f"CREATION_DATE = {msg.creation_date.to_iso(9)}")
    lines.append(f"TCA = {msg.tca.to_iso(9)}")
    if msg.miss_distance is not None:
        lines.append(f"MISS_DISTANCE = {msg.miss_distance:.17g} [m]")
    for idx, obj in enumerate(msg.objects, start=1):
        pos = obj.state.position / 1e3
        vel = obj.state.velocity / 1e3
        c = obj.position_covariance_rtn
        lines += [
            f"OBJECT = OBJECT{idx}",
            f"OBJECT_DESIGNATOR = {obj.designator}",
            f"REF_FRAME = {obj.ref_frame}",
        ]
        if obj.hard_body_radius_contribution:
            lines.append(f"HBR = {obj.hard_body_radius_contribution:.17g} [m]")
        for key, val in zip(("X", "Y", "Z"), pos):
            lines.append(f"{key} = {val:.17g} [km]")
        for key, val in zip(("X_DOT", "Y_DOT", "Z_DOT"), vel):
            lines.append(f"{key} = {val:.17g} [km/s]")
        cov_entries = (c[0, 0], c[1, 0], c[1, 1], c[2, 0], c[2, 1], c[2, 2])
        for key, val in zip(COVARIANCE_KEYS, cov_entries):
            lines.append(f"{key} = {val:.17g} [m**2]")
    return "\n".join(lines) + "\n"


def load_cdm(path):
    with open(path, "rb") as fh:
        return parse_cdm(fh.read())
