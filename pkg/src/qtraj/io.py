"""Instrument files (JSON) and CSV helpers.

Two layouts are accepted. A biased detector on a perfect unraveling::

    {"dim": 2,
     "perfect_ops": [{"name": "V1", "matrix": [[[re, im], [re, im]], ...]}, ...],
     "eta": [[0.9, 0.1], [0.1, 0.9]],        # optional, row i = reported outcome i
     "labels": ["1", "2"]}                    # optional, one per row of eta

or explicit Kraus lists per outcome::

    {"dim": 2,
     "outcomes": [{"label": "click", "kraus": [matrix, matrix, ...]}, ...]}

Matrices are nested lists of ``[re, im]`` pairs, row-major. Floats are
written with ``repr`` precision, so load -> save -> load is bit-exact.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from qtraj.errors import ParseError
from qtraj.instrument import Instrument, OutcomeMap, build_imperfect

FORMAT = "qtraj-instrument"
VERSION = 1


def matrix_to_json(m) -> list:
    m = np.asarray(m, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in m]


def matrix_from_json(obj, dim=None, where="matrix") -> np.ndarray:
    try:
        arr = np.asarray(obj, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{where}: not a numeric array ({exc})") from None
    if arr.ndim != 3 or arr.shape[2] != 2 or arr.shape[0] != arr.shape[1]:
        raise ParseError(f"{where}: expected a d x d array of [re, im] pairs, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise ParseError(f"{where}: expected dimension {dim}, got {arr.shape[0]}")
    out = np.empty(arr.shape[:2], dtype=complex)
    out.real = arr[..., 0]  # assigning parts keeps signed zeros intact
    out.imag = arr[..., 1]
    return out


def instrument_to_dict(instr: Instrument) -> dict:
    doc = {"format": FORMAT, "version": VERSION, "dim": instr.dim}
    if instr.source is not None:
        src = instr.source
        doc["perfect_ops"] = [
            {"name": name, "matrix": matrix_to_json(v)} for name, v in zip(src["names"], src["perfect_ops"])
        ]
        doc["eta"] = [[float(x) for x in row] for row in np.asarray(src["eta"])]
        doc["labels"] = [str(lab) for lab in instr.labels]
        return doc
    outcomes = []
    for o in instr.outcomes:
        if o.kraus is None:
            raise ValueError(f"outcome {o.label!r} has no Kraus form and cannot be written")
        outcomes.append({"label": str(o.label), "kraus": [matrix_to_json(k) for k in o.kraus]})
    doc["outcomes"] = outcomes
    return doc


def instrument_from_dict(doc: dict, validate: bool = True) -> Instrument:
    if not isinstance(doc, dict):
        raise ParseError("instrument file must contain a JSON object")
    if "dim" not in doc:
        raise ParseError("missing field 'dim'")
    dim = doc["dim"]
    if not isinstance(dim, int) or dim < 1:
        raise ParseError(f"'dim' must be a positive integer, got {dim!r}")
    has_perfect = "perfect_ops" in doc
    has_outcomes = "outcomes" in doc
    if has_perfect == has_outcomes:
        raise ParseError("give exactly one of 'perfect_ops' or 'outcomes'")
    if has_perfect:
        entries = doc["perfect_ops"]
        if not isinstance(entries, list) or not entries:
            raise ParseError("'perfect_ops' must be a non-empty list")
        names, ops = [], []
        for k, e in enumerate(entries):
            if not isinstance(e, dict) or "matrix" not in e:
                raise ParseError(f"perfect_ops[{k}] must be an object with a 'matrix'")
            names.append(str(e.get("name", f"V{k + 1}")))
            ops.append(matrix_from_json(e["matrix"], dim, f"perfect_ops[{k}]"))
        eta = doc.get("eta")
        if eta is not None:
            try:
                eta = np.asarray(eta, dtype=float)
            except (TypeError, ValueError):
                raise ParseError("'eta' must be a numeric matrix") from None
            if eta.ndim != 2:
                raise ParseError(f"'eta' must be 2-D, got shape {eta.shape}")
        labels = doc.get("labels")
        if labels is not None:
            labels = [str(lab) for lab in labels]
        if not validate:
            from qtraj.config import tolerances

            with tolerances(tol_tp=np.inf, tol_stoch=np.inf):
                return build_imperfect(ops, eta, labels=labels, names=names)
        return build_imperfect(ops, eta, labels=labels, names=names)
    entries = doc["outcomes"]
    if not isinstance(entries, list) or not entries:
        raise ParseError("'outcomes' must be a non-empty list")
    outs = []
    for k, e in enumerate(entries):
        if not isinstance(e, dict) or "kraus" not in e or not e["kraus"]:
            raise ParseError(f"outcomes[{k}] must be an object with a non-empty 'kraus' list")
        kraus = [matrix_from_json(m, dim, f"outcomes[{k}].kraus[{j}]") for j, m in enumerate(e["kraus"])]
        outs.append(OutcomeMap(kraus=kraus, label=str(e.get("label", k + 1))))
    return Instrument(outs, validate=validate)


def load_instrument(path, validate: bool = True) -> Instrument:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc})") from None
    return instrument_from_dict(doc, validate=validate)


def dumps_instrument(instr: Instrument) -> str:
    return json.dumps(instrument_to_dict(instr), indent=1)


def save_instrument(instr: Instrument, path) -> None:
    Path(path).write_text(dumps_instrument(instr) + "\n")


def instrument_hash(instr: Instrument) -> str:
    """SHA-256 of the canonical JSON form."""
    canon = json.dumps(instrument_to_dict(instr), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def fmt(x) -> str:
    """Shortest round-tripping text for a float."""
    return repr(float(x))


def metadata_line(**items) -> str:
    return "# " + " ".join(f"{k}={v}" for k, v in items.items())


def write_csv(path, header, rows, meta: dict) -> None:
    lines = [metadata_line(**meta), ",".join(header)]
    lines += [",".join(str(c) for c in row) for row in rows]
    Path(path).write_text("\n".join(lines) + "\n")


def read_csv(path):
    """Returns ``(meta, header, rows)`` for files written by :func:`write_csv`."""
    lines = Path(path).read_text().splitlines()
    meta = {}
    if lines and lines[0].startswith("# "):
        for tok in lines[0][2:].split():
            k, _, v = tok.partition("=")
            meta[k] = v
        lines = lines[1:]
    header = lines[0].split(",")
    rows = [ln.split(",") for ln in lines[1:]]
    return meta, header, rows
