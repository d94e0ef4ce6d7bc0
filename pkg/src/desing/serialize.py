"""Deterministic JSON and CSV writers (doubles at 17 significant digits)."""
from __future__ import annotations

import csv
import io
import json
import math

import numpy as np

from .quotient import FiniteMetricSpace


def fmt_float(x):
    x = float(x)
    if math.isnan(x):
        return '"nan"'
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    return format(x, ".17g")


def _emit(obj, indent, level, out):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        for i, (k, v) in enumerate(obj.items()):
            out.append(pad + json.dumps(str(k)) + ": ")
            _emit(v, indent, level + 1, out)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append(end + "}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        seq = obj.tolist() if isinstance(obj, np.ndarray) else obj
        if not seq:
            out.append("[]")
            return
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in seq):
            parts = []
            for v in seq:
                sub = []
                _emit(v, indent, level + 1, sub)
                parts.append("".join(sub))
            out.append("[" + ", ".join(parts) + "]")
            return
        out.append("[\n")
        for i, v in enumerate(seq):
            out.append(pad)
            _emit(v, indent, level + 1, out)
            out.append(",\n" if i < len(seq) - 1 else "\n")
        out.append(end + "]")
    elif isinstance(obj, (bool, np.bool_)):
        out.append("true" if obj else "false")
    elif obj is None:
        out.append("null")
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(fmt_float(obj))
    else:
        out.append(json.dumps(str(obj)))


def dumps(obj, indent=2):
    out = []
    _emit(obj, indent, 0, out)
    return "".join(out) + "\n"


def write_json(path, obj):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(obj))


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def matrix_to_csv(labels, matrix):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["label", *labels])
    for lab, row in zip(labels, np.asarray(matrix)):
        w.writerow([lab, *(format(float(v), ".17g") for v in row)])
    return buf.getvalue()


def write_space_csv(path, space):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(matrix_to_csv(space.labels, space.distances))


def read_space_csv(path):
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:1] != ["label"]:
        raise ValueError("CSV must start with a 'label' header")
    labels = tuple(rows[0][1:])
    body = rows[1:]
    if len(body) != len(labels) or any(len(r) != len(labels) + 1 for r in body):
        raise ValueError("distance CSV is not square")
    mat = np.array([[float(v) for v in r[1:]] for r in body]) if body else np.zeros((0, 0))
    return FiniteMetricSpace(labels=labels, distances=mat)
