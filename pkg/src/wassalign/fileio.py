"""Text and JSON serialization for point sets, plans, compressions and reports.

Floats are written with ``repr``, the shortest decimal string that parses
back to the identical double, so write-then-read round-trips are exact.
"""

from __future__ import annotations

import json

import numpy as np

from .core import CompressionResult, RigidTransform, TransportPlan, WeightedPointSet


def _fmt(x) -> str:
    return repr(float(x))


def _tokens(line: str) -> list[str]:
    return line.split()


def _fail(path, lineno: int, message: str):
    raise ValueError(f"{path}: line {lineno}: {message}")


def _parse_float(token: str, path, lineno: int, what: str) -> float:
    try:
        value = float(token)
    except ValueError:
        _fail(path, lineno, f"could not parse {what} {token!r}")
    if not np.isfinite(value):
        _fail(path, lineno, f"{what} is not finite: {token!r}")
    return value


def _parse_index(token: str, path, lineno: int, what: str, upper: int) -> int:
    try:
        value = int(token)
    except ValueError:
        _fail(path, lineno, f"could not parse {what} {token!r}")
    if not 0 <= value < upper:
        _fail(path, lineno, f"{what} {value} out of range [0, {upper})")
    return value


def _read_lines(path) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return fh.read().splitlines()


def _point_rows(lines, start_lineno, count, d, path):
    """Parse `w x_1 ... x_d` rows; returns (points, weights)."""
    points = np.empty((count, d))
    weights = np.empty(count)
    for row in range(count):
        lineno = start_lineno + row
        if lineno - 1 >= len(lines):
            _fail(path, lineno, f"expected {count} point rows, file ends after {row}")
        tokens = _tokens(lines[lineno - 1])
        if len(tokens) != d + 1:
            _fail(path, lineno, f"expected {d + 1} fields (w and {d} coordinates), got {len(tokens)}")
        w = _parse_float(tokens[0], path, lineno, "weight")
        if w < 0.0:
            _fail(path, lineno, f"negative weight {w!r}")
        weights[row] = w
        for col, token in enumerate(tokens[1:]):
            points[row, col] = _parse_float(token, path, lineno, f"coordinate {col + 1}")
    return points, weights


def _reject_trailing(lines, first_unused_lineno, path):
    for lineno in range(first_unused_lineno, len(lines) + 1):
        if _tokens(lines[lineno - 1]):
            _fail(path, lineno, "unexpected extra data")


def load_pointset(path) -> WeightedPointSet:
    """Read the canonical `n d` / `w x_1 ... x_d` text format."""
    lines = _read_lines(path)
    if not lines or not _tokens(lines[0]):
        _fail(path, 1, "missing `n d` header")
    header = _tokens(lines[0])
    if len(header) != 2:
        _fail(path, 1, f"header must be `n d`, got {len(header)} fields")
    try:
        n, d = int(header[0]), int(header[1])
    except ValueError:
        _fail(path, 1, f"header must be two integers, got {lines[0]!r}")
    if n < 1 or d < 1:
        _fail(path, 1, f"need n >= 1 and d >= 1, got n={n} d={d}")
    points, weights = _point_rows(lines, 2, n, d, path)
    _reject_trailing(lines, n + 2, path)
    try:
        return WeightedPointSet(points, weights)
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from None


def pointset_to_text(point_set: WeightedPointSet) -> str:
    lines = [f"{point_set.n} {point_set.d}"]
    for w, row in zip(point_set.weights, point_set.points):
        lines.append(" ".join([_fmt(w), *map(_fmt, row)]))
    return "\n".join(lines) + "\n"


def save_pointset(path, point_set: WeightedPointSet) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(pointset_to_text(point_set))


def load_plan(path, n_source: int | None = None, n_target: int | None = None) -> TransportPlan:
    """Read `total_flow cost normalized_distance` then 0-based `i j f` triples.

    The text format does not carry the set sizes; pass them explicitly when
    the plan may leave trailing points untouched.
    """
    lines = _read_lines(path)
    if not lines or not _tokens(lines[0]):
        _fail(path, 1, "missing `total_flow cost normalized_distance` header")
    header = _tokens(lines[0])
    if len(header) != 3:
        _fail(path, 1, f"header must have 3 fields, got {len(header)}")
    total_flow = _parse_float(header[0], path, 1, "total_flow")
    cost = _parse_float(header[1], path, 1, "cost")
    normalized = _parse_float(header[2], path, 1, "normalized_distance")
    sources, targets, flows = [], [], []
    for lineno in range(2, len(lines) + 1):
        tokens = _tokens(lines[lineno - 1])
        if not tokens:
            continue
        if len(tokens) != 3:
            _fail(path, lineno, f"expected `i j f`, got {len(tokens)} fields")
        sources.append(_parse_index(tokens[0], path, lineno, "source index", 2**63))
        targets.append(_parse_index(tokens[1], path, lineno, "target index", 2**63))
        f = _parse_float(tokens[2], path, lineno, "flow")
        if f <= 0.0:
            _fail(path, lineno, f"flow must be positive, got {f!r}")
        flows.append(f)
    if n_source is None:
        n_source = max(sources, default=0) + 1
    if n_target is None:
        n_target = max(targets, default=0) + 1
    try:
        return TransportPlan(
            sources=np.asarray(sources, dtype=np.int64),
            targets=np.asarray(targets, dtype=np.int64),
            flows=np.asarray(flows),
            total_flow=total_flow,
            cost=cost,
            normalized_distance=normalized,
            n_source=n_source,
            n_target=n_target,
        )
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from None


def plan_to_text(plan: TransportPlan) -> str:
    lines = [f"{_fmt(plan.total_flow)} {_fmt(plan.cost)} {_fmt(plan.normalized_distance)}"]
    for i, j, f in plan.entries():
        lines.append(f"{i} {j} {_fmt(f)}")
    return "\n".join(lines) + "\n"


def save_plan(path, plan: TransportPlan) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(plan_to_text(plan))


def load_compression(path) -> CompressionResult:
    """Read `k radius method seed`, k center rows, then assignment pairs."""
    lines = _read_lines(path)
    if not lines or not _tokens(lines[0]):
        _fail(path, 1, "missing `k radius method seed` header")
    header = _tokens(lines[0])
    if len(header) != 4:
        _fail(path, 1, f"header must have 4 fields, got {len(header)}")
    try:
        k = int(header[0])
        seed = int(header[3])
    except ValueError:
        _fail(path, 1, f"k and seed must be integers, got {lines[0]!r}")
    radius = _parse_float(header[1], path, 1, "radius")
    method = header[2]
    if k < 1:
        _fail(path, 1, f"need k >= 1, got {k}")
    if radius < 0.0:
        _fail(path, 1, f"negative radius {radius!r}")
    if not _tokens(lines[1] if len(lines) > 1 else ""):
        _fail(path, 2, "missing center rows")
    d = len(_tokens(lines[1])) - 2
    if d < 1:
        _fail(path, 2, "center rows need `center_index w x_1 ... x_d`")
    points = np.empty((k, d))
    weights = np.empty(k)
    seen = np.zeros(k, dtype=bool)
    for row in range(k):
        lineno = 2 + row
        if lineno - 1 >= len(lines):
            _fail(path, lineno, f"expected {k} center rows, file ends after {row}")
        tokens = _tokens(lines[lineno - 1])
        if len(tokens) != d + 2:
            _fail(path, lineno, f"expected {d + 2} fields, got {len(tokens)}")
        idx = _parse_index(tokens[0], path, lineno, "center index", k)
        if seen[idx]:
            _fail(path, lineno, f"duplicate center index {idx}")
        seen[idx] = True
        w = _parse_float(tokens[1], path, lineno, "weight")
        if w < 0.0:
            _fail(path, lineno, f"negative weight {w!r}")
        weights[idx] = w
        for col, token in enumerate(tokens[2:]):
            points[idx, col] = _parse_float(token, path, lineno, f"coordinate {col + 1}")
    assignment = []
    for lineno in range(k + 2, len(lines) + 1):
        tokens = _tokens(lines[lineno - 1])
        if not tokens:
            continue
        if len(tokens) != 2:
            _fail(path, lineno, f"expected `orig_index center_index`, got {len(tokens)} fields")
        orig = _parse_index(tokens[0], path, lineno, "original index", 2**63)
        if orig != len(assignment):
            _fail(path, lineno, f"assignment rows must cover 0..n-1 in order, expected {len(assignment)} got {orig}")
        assignment.append(_parse_index(tokens[1], path, lineno, "center index", k))
    if not assignment:
        _fail(path, k + 2, "missing assignment rows")
    try:
        return CompressionResult(
            centers=WeightedPointSet(points, weights),
            assignment=np.asarray(assignment, dtype=np.int64),
            radius=radius,
            method_tag=method,
            seed=seed,
        )
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from None


def compression_to_text(result: CompressionResult) -> str:
    lines = [f"{result.k} {_fmt(result.radius)} {result.method_tag} {result.seed}"]
    for idx, (w, row) in enumerate(zip(result.centers.weights, result.centers.points)):
        lines.append(" ".join([str(idx), _fmt(w), *map(_fmt, row)]))
    for orig, center in enumerate(result.assignment):
        lines.append(f"{orig} {int(center)}")
    return "\n".join(lines) + "\n"


def save_compression(path, result: CompressionResult) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(compression_to_text(result))


def report_to_dict(report, include_timings: bool = True) -> dict:
    """JSON-ready view of an AlignmentReport (rotation stored row-major)."""
    doc = {
        "transform": {
            "rotation": [float(x) for x in np.asarray(report.transform.rotation).ravel()],
            "translation": [float(x) for x in np.asarray(report.transform.translation)],
            "d": int(np.asarray(report.transform.translation).shape[0]),
        },
        "final_distance": float(report.final_distance),
        "fraction": float(report.fraction),
        "history": [
            {"distance": float(dist), "update_norm": float(norm)}
            for dist, norm in report.history
        ],
        "compression": report.compression,
    }
    if include_timings:
        doc["timings"] = {k: float(v) for k, v in report.timings.items()}
    return doc


def report_to_json(report, include_timings: bool = True) -> str:
    return json.dumps(report_to_dict(report, include_timings), indent=2, sort_keys=True)


def save_report(path, report, include_timings: bool = True) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(report_to_json(report, include_timings) + "\n")


def transform_from_dict(doc: dict) -> RigidTransform:
    d = int(doc["d"])
    rotation = np.asarray(doc["rotation"], dtype=float).reshape(d, d)
    translation = np.asarray(doc["translation"], dtype=float)
    return RigidTransform(rotation, translation)
