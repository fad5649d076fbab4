"""Run persistence: versioned JSON with parallel point arrays.

Floats travel as JSON numbers (repr round-trip keeps them bit-exact); the
few non-finite values (prior-wide births) are encoded as strings so the
files stay standard JSON.
"""

from __future__ import annotations

import json
import math
import os

import numpy as np

from .models import ModelSpec
from .runs import NestedRun, RunProvenance

__all__ = ["save_run", "load_run", "FORMAT_VERSION"]

FORMAT_VERSION = 1


def _enc(values) -> list:
    out = []
    for x in values:
        x = float(x)
        if math.isinf(x):
            out.append("inf" if x > 0 else "-inf")
        elif math.isnan(x):
            out.append("nan")
        else:
            out.append(x)
    return out


def _dec(values) -> np.ndarray:
    return np.array([float(x) for x in values], dtype=float)


def run_to_dict(run: NestedRun) -> dict:
    return {
        "version": FORMAT_VERSION,
        "model": run.model.to_dict(),
        "provenance": run.provenance.to_dict(),
        "points": {
            "log_l": _enc(run.log_l),
            "birth_log_l": _enc(run.birth_log_l),
            "theta1": _enc(run.theta1),
            "radius": _enc(run.radius),
            "true_log_x": _enc(run.true_log_x),
            "thread_id": [int(t) for t in run.thread_id],
        },
        "open_intervals": {
            "birth_log_l": _enc(run.open_birth_log_l),
            "end_log_l": _enc(run.open_end_log_l),
            "thread_id": [int(t) for t in run.open_thread_id],
        },
    }


def run_from_dict(doc: dict) -> NestedRun:
    version = doc.get("version")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported run file version {version!r}")
    model = ModelSpec.from_dict(doc["model"])
    pts = doc["points"]
    opens = doc["open_intervals"]
    return NestedRun(
        model,
        _dec(pts["log_l"]), _dec(pts["birth_log_l"]), _dec(pts["theta1"]),
        _dec(pts["radius"]), _dec(pts["true_log_x"]),
        np.array(pts["thread_id"], dtype=np.int64),
        open_birth_log_l=_dec(opens["birth_log_l"]),
        open_end_log_l=_dec(opens["end_log_l"]),
        open_thread_id=np.array(opens["thread_id"], dtype=np.int64),
        provenance=RunProvenance.from_dict(doc["provenance"]),
        presorted=True)


def save_run(run: NestedRun, path: str) -> None:
    doc = run_to_dict(run)
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, separators=(",", ":"), sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def load_run(path: str) -> NestedRun:
    with open(path, encoding="utf-8") as fh:
        return run_from_dict(json.load(fh))
