"""JSON encodings of finite distributions and maps.

A distribution is ``{"x": [{"id": ..., "vec": [...]?}], "y": [ids],
"pxy": [[row-major reals]]}``; a map is ``{"f": {"x_id": "xt_id"}}`` with an
optional ``"xt": [{"id": ..., "vec": [...]}]`` block for codomain payloads.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .finite_dist import FiniteJointDistribution, FiniteMap


def distribution_to_dict(p: FiniteJointDistribution) -> dict:
    xs = []
    for i, xid in enumerate(p.x_ids):
        entry: dict = {"id": xid}
        if p.x_payloads is not None:
            entry["vec"] = p.x_payloads[i].tolist()
        xs.append(entry)
    return {"x": xs, "y": list(p.y_ids), "pxy": p.pxy.tolist()}


def distribution_from_dict(obj: dict) -> FiniteJointDistribution:
    for key in ("x", "y", "pxy"):
        if key not in obj:
            raise ValidationError(f"distribution JSON is missing field {key!r}")
    xs = obj["x"]
    if not isinstance(xs, list) or not all(isinstance(e, dict) and "id" in e for e in xs):
        raise ValidationError("field 'x' must be a list of objects with an 'id'")
    x_ids = tuple(e["id"] for e in xs)
    has_vec = [("vec" in e) for e in xs]
    payloads = None
    if any(has_vec):
        if not all(has_vec):
            raise ValidationError("field 'x': either all points carry 'vec' or none")
        try:
            payloads = np.array([e["vec"] for e in xs], dtype=np.float64)
        except (TypeError, ValueError):
            raise ValidationError("field 'x': 'vec' entries must be real vectors") from None
    pxy = obj["pxy"]
    if not isinstance(pxy, list) or len(pxy) != len(x_ids):
        raise ValidationError("field 'pxy' must have one row per x point")
    try:
        widths = {len(row) for row in pxy}
    except TypeError:
        raise ValidationError("field 'pxy' must be a list of rows") from None
    if widths != {len(obj["y"])}:
        raise ValidationError("field 'pxy' rows must match the length of 'y'")
    try:
        mass = np.array(pxy, dtype=np.float64)
    except (TypeError, ValueError):
        raise ValidationError("field 'pxy' must contain real numbers") from None
    return FiniteJointDistribution(x_ids, tuple(obj["y"]), mass, payloads)


def map_to_dict(f: FiniteMap) -> dict:
    out: dict = {"f": {str(k): str(v) for k, v in f.mapping.items()}}
    if f.codomain_payloads is not None:
        out["xt"] = [
            {"id": str(k), "vec": v.tolist()} for k, v in f.codomain_payloads.items()
        ]
    return out


def map_from_dict(obj: dict) -> FiniteMap:
    if "f" not in obj or not isinstance(obj["f"], dict) or not obj["f"]:
        raise ValidationError("map JSON needs a non-empty object under field 'f'")
    payloads = None
    if "xt" in obj:
        payloads = {}
        for entry in obj["xt"]:
            if "id" not in entry or "vec" not in entry:
                raise ValidationError("field 'xt' entries need 'id' and 'vec'")
            payloads[entry["id"]] = np.array(entry["vec"], dtype=np.float64)
    return FiniteMap(dict(obj["f"]), payloads)


def load_distribution(path: str | Path) -> FiniteJointDistribution:
    return distribution_from_dict(_load_json(path))


def load_map(path: str | Path) -> FiniteMap:
    return map_from_dict(_load_json(path))


def save_distribution(p: FiniteJointDistribution, path: str | Path) -> None:
    Path(path).write_text(json.dumps(distribution_to_dict(p), indent=2, sort_keys=True))


def save_map(f: FiniteMap, path: str | Path) -> None:
    Path(path).write_text(json.dumps(map_to_dict(f), indent=2, sort_keys=True))


def _load_json(path: str | Path) -> dict:
    try:
        obj = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(obj, dict):
        raise ValidationError(f"{path}: top-level JSON value must be an object")
    return obj
