"""Text codecs for every file the pipeline reads or writes.

Every format is line oriented UTF-8. Reals are written with 17 significant
digits so values round-trip exactly. Each non-PLY file starts with a
versioned header line ``# <kind> v1 key=value ...``; readers reject other
versions and check record counts against the header. Grammars are listed in
``docs/formats.md``.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .calibration import CornerTrack, RigCalibration
from .errors import ParseError
from .evaluation import RmseReport
from .geometry import PanTiltPose, RotationAxis, as_points
from .registration import CorrespondenceSet, RegistrationResult
from .servo_model import PulseAngleMap, PulseAngleSample

FORMAT_VERSION = "v1"
_PLY_FLOAT_TYPES = {"float", "float32", "double", "float64"}
_PLY_SIZES = {
    "char", "uchar", "short", "ushort", "int", "uint", "float", "double",
    "int8", "uint8", "int16", "uint16", "int32", "uint32", "float32", "float64",
}  # fmt: skip


def fmt(value: float) -> str:
    return format(float(value), ".17g")


def _fmt_row(values) -> str:
    return " ".join(fmt(v) for v in values)


def _write_lines(path, lines) -> None:
    text = "\n".join(lines) + "\n"
    Path(path).write_text(text, encoding="utf-8", newline="\n")


def _parse_float(token: str, path, line: int) -> float:
    try:
        value = float(token)
    except ValueError:
        raise ParseError(f"not a number: {token!r}", path, line) from None
    if not math.isfinite(value):
        raise ParseError(f"non-finite value: {token!r}", path, line)
    return value


def _parse_int(token: str, path, line: int) -> int:
    try:
        return int(token)
    except ValueError:
        raise ParseError(f"not an integer: {token!r}", path, line) from None


def _floats(tokens, n: int, path, line: int) -> list[float]:
    if len(tokens) != n:
        raise ParseError(f"expected {n} values, got {len(tokens)}", path, line)
    return [_parse_float(t, path, line) for t in tokens]


@dataclass
class _Header:
    kind: str
    fields: dict


def _parse_header(line: str, kind: str, path) -> _Header:
    tokens = line.split()
    if len(tokens) < 3 or tokens[0] != "#" or tokens[1] != kind:
        raise ParseError(f"expected '# {kind} {FORMAT_VERSION}' header, got {line!r}", path, 1)
    if tokens[2] != FORMAT_VERSION:
        raise ParseError(f"unsupported {kind} version {tokens[2]!r}", path, 1)
    fields = {}
    for tok in tokens[3:]:
        key, sep, value = tok.partition("=")
        if not sep:
            raise ParseError(f"malformed header field {tok!r}", path, 1)
        fields[key] = value
    return _Header(kind, fields)


def _header_int(header: _Header, key: str, path) -> int:
    if key not in header.fields:
        raise ParseError(f"header is missing {key}=", path, 1)
    return _parse_int(header.fields[key], path, 1)


def _read_body(path, kind: str) -> tuple[_Header, list[tuple[int, str]]]:
    """Header plus the remaining non-blank lines with their 1-based numbers."""
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError("empty file", path, 1)
    header = _parse_header(lines[0], kind, path)
    body = [(i + 2, ln) for i, ln in enumerate(lines[1:]) if ln.strip()]
    return header, body


def _check_count(expected: int, got: int, path, what: str) -> None:
    if expected != got:
        raise ParseError(f"header declares {expected} {what}, found {got}", path)


# -- PLY -------------------------------------------------------------------


def write_ply(path, points) -> None:
    pts = as_points(points)
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(pts)}",
        "property double x",
        "property double y",
        "property double z",
        "end_header",
    ]
    lines.extend(_fmt_row(p) for p in pts)
    _write_lines(path, lines)


def read_ply(path) -> np.ndarray:
    """Vertex positions of an ASCII PLY file as an (N, 3) array in meters.

    Extra vertex properties and other elements are skipped; list properties
    are only supported on non-vertex elements.
    """
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != "ply":
        raise ParseError("missing 'ply' magic", path, 1)

    elements = []  # (name, count, [(prop_name, is_list, type)])
    lineno = 1
    fmt_seen = False
    while True:
        if lineno >= len(lines):
            raise ParseError("header has no end_header", path, lineno)
        tokens = lines[lineno].split()
        lineno += 1
        if not tokens or tokens[0] in ("comment", "obj_info"):
            continue
        if tokens[0] == "format":
            if tokens[1:] != ["ascii", "1.0"]:
                raise ParseError(f"unsupported format {' '.join(tokens[1:])!r}", path, lineno)
            fmt_seen = True
        elif tokens[0] == "element":
            if len(tokens) != 3:
                raise ParseError("malformed element line", path, lineno)
            elements.append((tokens[1], _parse_int(tokens[2], path, lineno), []))
        elif tokens[0] == "property":
            if not elements:
                raise ParseError("property before any element", path, lineno)
            if tokens[1] == "list" and len(tokens) == 5:
                elements[-1][2].append((tokens[4], True, None))
            elif len(tokens) == 3 and tokens[1] in _PLY_SIZES:
                elements[-1][2].append((tokens[2], False, tokens[1]))
            else:
                raise ParseError("malformed property line", path, lineno)
        elif tokens[0] == "end_header":
            break
        else:
            raise ParseError(f"unexpected header keyword {tokens[0]!r}", path, lineno)
    if not fmt_seen:
        raise ParseError("header has no format line", path, lineno)

    points = None
    for name, count, props in elements:
        if name != "vertex":
            for _ in range(count):
                if lineno >= len(lines):
                    raise ParseError(f"file ends inside element {name!r}", path, lineno)
                lineno += 1
            continue
        names = [p[0] for p in props]
        if any(p[1] for p in props):
            raise ParseError("list properties on vertices are not supported", path)
        try:
            cols = [names.index(axis) for axis in "xyz"]
        except ValueError:
            raise ParseError("vertex element lacks x, y or z", path) from None
        for c in cols:
            if props[c][2] not in _PLY_FLOAT_TYPES:
                raise ParseError(f"vertex {names[c]} must be a float property", path)
        points = np.empty((count, 3))
        for k in range(count):
            if lineno >= len(lines):
                raise ParseError(f"expected {count} vertices, found {k}", path, lineno)
            tokens = lines[lineno].split()
            lineno += 1
            if len(tokens) != len(props):
                raise ParseError(f"expected {len(props)} values, got {len(tokens)}", path, lineno)
            points[k] = [_parse_float(tokens[c], path, lineno) for c in cols]
    if points is None:
        raise ParseError("no vertex element", path)
    trailing = [ln for ln in lines[lineno:] if ln.strip()]
    if trailing:
        raise ParseError("data after the last declared element", path, lineno + 1)
    return points


# -- pulse/angle samples ---------------------------------------------------


def write_samples(path, samples) -> None:
    samples = list(samples)
    lines = [f"# samples {FORMAT_VERSION} count={len(samples)}"]
    lines.extend(_fmt_row((s.pulse, s.angle)) for s in samples)
    _write_lines(path, lines)


def read_samples(path) -> list[PulseAngleSample]:
    header, body = _read_body(path, "samples")
    out = [PulseAngleSample(*_floats(ln.split(), 2, path, no)) for no, ln in body]
    _check_count(_header_int(header, "count", path), len(out), path, "samples")
    return out


# -- corner tracks ---------------------------------------------------------


def write_tracks(path, tracks) -> None:
    tracks = list(tracks)
    lines = [f"# tracks {FORMAT_VERSION} count={len(tracks)}"]
    for track in tracks:
        lines.append(f"track {track.corner_id} {len(track.positions)}")
        lines.extend(_fmt_row(p) for p in track.positions)
    _write_lines(path, lines)


def read_tracks(path) -> list[CornerTrack]:
    header, body = _read_body(path, "tracks")
    tracks = []
    i = 0
    while i < len(body):
        no, ln = body[i]
        tokens = ln.split()
        if len(tokens) != 3 or tokens[0] != "track":
            raise ParseError("expected 'track <corner_id> <n_positions>'", path, no)
        corner_id = _parse_int(tokens[1], path, no)
        n = _parse_int(tokens[2], path, no)
        rows = body[i + 1 : i + 1 + n]
        if len(rows) != n or any(r[1].startswith("track") for r in rows):
            raise ParseError(f"track {corner_id} declares {n} positions", path, no)
        positions = [_floats(r.split(), 3, path, rno) for rno, r in rows]
        tracks.append(CornerTrack(corner_id, np.array(positions).reshape(-1, 3)))
        i += 1 + n
    _check_count(_header_int(header, "count", path), len(tracks), path, "tracks")
    return tracks


# -- correspondences -------------------------------------------------------


def write_correspondences(path, corr: CorrespondenceSet) -> None:
    lines = [
        f"# corr {FORMAT_VERSION} frame_l={corr.frame_l} frame_r={corr.frame_r} count={len(corr)}"
    ]
    lines.extend(_fmt_row((*l, *r)) for l, r in zip(corr.left, corr.right))
    _write_lines(path, lines)


def read_correspondences(path) -> CorrespondenceSet:
    header, body = _read_body(path, "corr")
    rows = [_floats(ln.split(), 6, path, no) for no, ln in body]
    _check_count(_header_int(header, "count", path), len(rows), path, "pairs")
    arr = np.array(rows).reshape(-1, 6)
    return CorrespondenceSet(
        left=arr[:, :3],
        right=arr[:, 3:],
        frame_l=_header_int(header, "frame_l", path),
        frame_r=_header_int(header, "frame_r", path),
    )


def write_labels(path, frame_l: int, frame_r: int, genuine) -> None:
    """Ground-truth inlier labels (1 = genuine pair) for a correspondence file."""
    genuine = np.asarray(genuine, dtype=bool)
    lines = [f"# labels {FORMAT_VERSION} frame_l={frame_l} frame_r={frame_r} count={len(genuine)}"]
    lines.extend("1" if g else "0" for g in genuine)
    _write_lines(path, lines)


def read_labels(path) -> np.ndarray:
    header, body = _read_body(path, "labels")
    values = []
    for no, ln in body:
        if ln.strip() not in ("0", "1"):
            raise ParseError(f"label must be 0 or 1, got {ln.strip()!r}", path, no)
        values.append(ln.strip() == "1")
    _check_count(_header_int(header, "count", path), len(values), path, "labels")
    return np.array(values, dtype=bool)


# -- frame manifest --------------------------------------------------------


@dataclass(frozen=True)
class ManifestEntry:
    frame_id: int
    cloud_path: str
    pan_pulse: float
    tilt_pulse: float
    true_pan_deg: float | None = None
    true_tilt_deg: float | None = None

    @property
    def true_pose(self) -> PanTiltPose | None:
        if self.true_pan_deg is None:
            return None
        return PanTiltPose.from_degrees(self.true_pan_deg, self.true_tilt_deg)


def write_manifest(path, entries) -> None:
    entries = list(entries)
    lines = [f"# manifest {FORMAT_VERSION} count={len(entries)}"]
    for e in entries:
        if any(c.isspace() for c in e.cloud_path):
            raise ValueError(f"cloud paths may not contain whitespace: {e.cloud_path!r}")
        row = f"{e.frame_id} {e.cloud_path} {fmt(e.pan_pulse)} {fmt(e.tilt_pulse)}"
        if e.true_pan_deg is not None:
            row += f" {fmt(e.true_pan_deg)} {fmt(e.true_tilt_deg)}"
        lines.append(row)
    _write_lines(path, lines)


def read_manifest(path) -> list[ManifestEntry]:
    """Manifest entries; relative cloud paths are kept relative to the manifest."""
    header, body = _read_body(path, "manifest")
    entries = []
    for no, ln in body:
        tokens = ln.split()
        if len(tokens) not in (4, 6):
            raise ParseError(f"expected 4 or 6 fields, got {len(tokens)}", path, no)
        frame_id = _parse_int(tokens[0], path, no)
        pan, tilt = (_parse_float(t, path, no) for t in tokens[2:4])
        truth = [_parse_float(t, path, no) for t in tokens[4:]] or [None, None]
        if entries and frame_id <= entries[-1].frame_id:
            raise ParseError("frame ids must be unique and ascending", path, no)
        entries.append(ManifestEntry(frame_id, tokens[1], pan, tilt, *truth))
    _check_count(_header_int(header, "count", path), len(entries), path, "frames")
    return entries


def resolve_cloud_path(manifest_path, entry: ManifestEntry) -> Path:
    p = Path(entry.cloud_path)
    return p if p.is_absolute() else Path(manifest_path).parent / p


# -- calibration -----------------------------------------------------------

_CALIB_KEYS = ("dir", "center", "scale", "offset", "sigma", "range")
_CALIB_ARITY = {"dir": 3, "center": 3, "scale": 1, "offset": 1, "sigma": 1, "range": 2}


def write_calibration(path, rig: RigCalibration) -> None:
    """Axis directions and centers (meters), servo maps in degrees and microseconds."""
    lines = [f"# calibration {FORMAT_VERSION}"]
    for name, axis, servo in (
        ("pan", rig.pan_axis, rig.pan_map),
        ("tilt", rig.tilt_axis, rig.tilt_map),
    ):
        values = {
            "dir": axis.direction,
            "center": axis.center,
            "scale": [servo.scale],
            "offset": [servo.offset],
            "sigma": [servo.sigma],
            "range": servo.pulse_range,
        }
        lines.extend(f"{name}.{key} {_fmt_row(values[key])}" for key in _CALIB_KEYS)
    _write_lines(path, lines)


def read_calibration(path) -> RigCalibration:
    _, body = _read_body(path, "calibration")
    values = {}
    for no, ln in body:
        key, *tokens = ln.split()
        servo, _, field = key.partition(".")
        if servo not in ("pan", "tilt") or field not in _CALIB_ARITY:
            raise ParseError(f"unknown key {key!r}", path, no)
        if key in values:
            raise ParseError(f"duplicate key {key!r}", path, no)
        values[key] = _floats(tokens, _CALIB_ARITY[field], path, no)
    missing = [f"{s}.{k}" for s in ("pan", "tilt") for k in _CALIB_KEYS if f"{s}.{k}" not in values]
    if missing:
        raise ParseError(f"missing keys: {', '.join(missing)}", path)

    def build(servo: str):
        try:
            axis = RotationAxis.normalized(values[f"{servo}.dir"], values[f"{servo}.center"])
            pmap = PulseAngleMap(
                scale=values[f"{servo}.scale"][0],
                offset=values[f"{servo}.offset"][0],
                sigma=values[f"{servo}.sigma"][0],
                pulse_range=tuple(values[f"{servo}.range"]),
            )
        except ValueError as exc:
            raise ParseError(f"invalid {servo} parameters: {exc}", path) from None
        return axis, pmap

    pan_axis, pan_map = build("pan")
    tilt_axis, tilt_map = build("tilt")
    return RigCalibration(pan_axis, tilt_axis, pan_map, tilt_map)


# -- registered poses ------------------------------------------------------


def write_poses(path, results) -> None:
    """One row per frame: id, refined and seed angles (radians), inliers, rms (m), fallback.

    Angles stay in radians here so that reading and rewriting is lossless.
    """
    results = list(results)
    lines = [f"# poses {FORMAT_VERSION} count={len(results)}"]
    for r in results:
        angles = (r.pose.alpha, r.pose.beta, r.seed_pose.alpha, r.seed_pose.beta)
        lines.append(
            f"{r.frame_id} {_fmt_row(angles)} "
            f"{r.inlier_count} {fmt(r.residual_rms)} {int(r.fallback)}"
        )
    _write_lines(path, lines)


def read_poses(path) -> list[RegistrationResult]:
    header, body = _read_body(path, "poses")
    out = []
    for no, ln in body:
        tokens = ln.split()
        if len(tokens) != 8:
            raise ParseError(f"expected 8 fields, got {len(tokens)}", path, no)
        alpha, beta, seed_a, seed_b = _floats(tokens[1:5], 4, path, no)
        fallback = tokens[7]
        if fallback not in ("0", "1"):
            raise ParseError(f"fallback flag must be 0 or 1, got {fallback!r}", path, no)
        out.append(
            RegistrationResult(
                frame_id=_parse_int(tokens[0], path, no),
                pose=PanTiltPose(alpha, beta),
                seed_pose=PanTiltPose(seed_a, seed_b),
                inlier_count=_parse_int(tokens[5], path, no),
                residual_rms=_parse_float(tokens[6], path, no),
                fallback=fallback == "1",
            )
        )
    _check_count(_header_int(header, "count", path), len(out), path, "poses")
    return out


def ensure_dir(path) -> Path:
    path = Path(path)
    os.makedirs(path, exist_ok=True)
    return path


# -- RMSE report -----------------------------------------------------------

RMSE_COLUMNS = ("frame_l", "frame_r", "n_points", "rmse_mm")


def write_rmse_csv(path, reports) -> None:
    """Per-pair rows followed by a ``mean`` row (empty ``frame_r`` and ``n_points``)."""
    reports = list(reports)
    lines = [",".join(RMSE_COLUMNS)]
    for rep in reports:
        l, r = rep.frame_ids
        lines.append(f"{l},{r},{rep.n_points},{fmt(rep.rmse)}")
    if reports:
        lines.append(f"mean,,,{fmt(float(np.mean([rep.rmse for rep in reports])))}")
    _write_lines(path, lines)


def read_rmse_csv(path):
    """Per-pair reports and the mean RMSE (None when there are no pairs)."""
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or tuple(lines[0].split(",")) != RMSE_COLUMNS:
        raise ParseError(f"expected column header {','.join(RMSE_COLUMNS)}", path, 1)
    reports, mean = [], None
    for no, ln in enumerate(lines[1:], start=2):
        cells = ln.split(",")
        if len(cells) != len(RMSE_COLUMNS):
            raise ParseError(f"expected {len(RMSE_COLUMNS)} cells, got {len(cells)}", path, no)
        if cells[0] == "mean":
            mean = _parse_float(cells[3], path, no)
            continue
        reports.append(
            RmseReport(
                rmse=_parse_float(cells[3], path, no),
                n_points=_parse_int(cells[2], path, no),
                frame_ids=(_parse_int(cells[0], path, no), _parse_int(cells[1], path, no)),
            )
        )
    return reports, mean
