"""Built-in loudspeaker layouts and the layout file format.

Azimuths are in degrees, measured from the listener's front (+x) toward +y;
every built-in speaker sits at unit distance facing the listener.

Layout files are JSON (or TOML) objects::

    {"speakers": [{"azimuth_deg": 30, "distance": 2.0, "name": "R"},
                  {"position": [1.0, -1.0], "orientation_deg": 135}]}

``orientation_deg`` defaults to facing the listener at the origin.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from ..errors import InvalidArgument
from ..speaker_field import Layout, Loudspeaker

try:  # Python 3.11+
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

__all__ = ["BUILTIN_LAYOUTS", "builtin_angles", "builtin_layout", "layout_from_angles",
           "layout_from_spec", "load_layout", "load_mapping"]

BUILTIN_LAYOUTS = {
    "itu_5_0": (("L", -30.0), ("R", 30.0), ("C", 0.0), ("SL", -110.0), ("SR", 110.0)),
    "itu_3_0": (("L", -30.0), ("C", 0.0), ("R", 30.0)),
    "lrc": (("L", -30.0), ("C", 0.0), ("R", 30.0)),
    "wide_lrc": (("L", -45.0), ("C", 0.0), ("R", 45.0)),
    "surround_lrc": (("L", -120.0), ("C", 0.0), ("R", 120.0)),
    "lr_rear": (("L", -30.0), ("R", 30.0), ("B", 180.0)),
    "lrslsr": (("L", -30.0), ("R", 30.0), ("SL", -110.0), ("SR", 110.0)),
    "pentagon": (("P0", 0.0), ("P1", 72.0), ("P2", 144.0), ("P3", -144.0), ("P4", -72.0)),
}


def builtin_angles(name):
    """``(names, azimuths_deg)`` for a built-in layout."""
    try:
        entries = BUILTIN_LAYOUTS[name]
    except KeyError:
        raise InvalidArgument(
            f"unknown layout {name!r}; choose from {', '.join(sorted(BUILTIN_LAYOUTS))}") from None
    return [e[0] for e in entries], np.array([e[1] for e in entries])


def layout_from_angles(azimuths_deg, names=None, distances=None):
    az = np.asarray(azimuths_deg, dtype=float).reshape(-1)
    if az.size == 0:
        raise InvalidArgument("a layout needs at least one loudspeaker")
    if np.unique(np.round(np.mod(az, 360.0), 9)).size != az.size:
        raise InvalidArgument("loudspeaker azimuths must be distinct")
    names = list(names) if names is not None else [f"spk{i}" for i in range(az.size)]
    dist = np.ones(az.size) if distances is None else np.broadcast_to(distances, az.shape)
    return Layout(tuple(Loudspeaker.polar(math.radians(a), float(d), name=str(n))
                        for a, d, n in zip(az, dist, names)))


def builtin_layout(name):
    names, az = builtin_angles(name)
    return layout_from_angles(az, names)


def _speaker_from_entry(i, entry):
    if not isinstance(entry, dict):
        raise InvalidArgument(f"speaker {i}: expected an object")
    known = {"azimuth_deg", "position", "orientation_deg", "distance", "name", "elevation_deg"}
    extra = set(entry) - known
    if extra:
        raise InvalidArgument(f"speaker {i}: unknown field(s) {sorted(extra)}")
    if entry.get("elevation_deg", 0) not in (0, 0.0):
        raise InvalidArgument(f"speaker {i}: elevation is not supported (2D layouts only)")
    name = str(entry.get("name", f"spk{i}"))
    has_az, has_pos = "azimuth_deg" in entry, "position" in entry
    if has_az == has_pos:
        raise InvalidArgument(f"speaker {i}: give exactly one of azimuth_deg or position")
    try:
        if has_az:
            az = math.radians(float(entry["azimuth_deg"]))
            d = float(entry.get("distance", 1.0))
            if not d > 0:
                raise InvalidArgument(f"speaker {i}: distance must be positive")
            pos = d * np.array([math.cos(az), math.sin(az)])
        else:
            if "distance" in entry:
                raise InvalidArgument(f"speaker {i}: distance conflicts with position")
            pos = np.asarray(entry["position"], dtype=float)
            if pos.shape != (2,):
                raise InvalidArgument(f"speaker {i}: position must be [x, y]")
        if "orientation_deg" in entry:
            o = math.radians(float(entry["orientation_deg"]))
            ori = np.array([math.cos(o), math.sin(o)])
        else:
            norm = np.linalg.norm(pos)
            if norm == 0:
                raise InvalidArgument(f"speaker {i}: cannot sit at the listener position")
            ori = -pos / norm
    except (TypeError, ValueError) as err:
        if isinstance(err, InvalidArgument):
            raise
        raise InvalidArgument(f"speaker {i}: {err}") from None
    return Loudspeaker(pos, ori, name)


def layout_from_spec(spec):
    """Build a layout from a parsed mapping, or a built-in name under ``"layout"``."""
    if isinstance(spec, str):
        return builtin_layout(spec)
    if not isinstance(spec, dict):
        raise InvalidArgument("layout description must be an object")
    if "speakers" not in spec:
        if "layout" in spec and isinstance(spec["layout"], str):
            return builtin_layout(spec["layout"])
        raise InvalidArgument("layout description needs a 'speakers' list")
    speakers = spec["speakers"]
    if not isinstance(speakers, list) or not speakers:
        raise InvalidArgument("'speakers' must be a non-empty list")
    return Layout(tuple(_speaker_from_entry(i, e) for i, e in enumerate(speakers)))


def load_mapping(path):
    """Parse a JSON or TOML file (by extension) into a dict."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as err:
        raise InvalidArgument(f"cannot read {path}: {err.strerror}") from None
    try:
        if path.suffix.lower() == ".toml":
            return tomllib.loads(text)
        return json.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as err:
        raise InvalidArgument(f"{path}: {err}") from None


def load_layout(path_or_name):
    """A built-in layout name or a path to a layout file."""
    if isinstance(path_or_name, str) and path_or_name in BUILTIN_LAYOUTS:
        return builtin_layout(path_or_name)
    p = Path(path_or_name)
    if not p.exists():
        raise InvalidArgument(
            f"unknown layout {str(path_or_name)!r}: not a built-in name "
            f"({', '.join(sorted(BUILTIN_LAYOUTS))}) nor an existing file")
    return layout_from_spec(load_mapping(p))
