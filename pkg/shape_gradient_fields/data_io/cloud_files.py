"""
Point-cloud files. Grammars:

    xyz        one point per line, whitespace-separated floats
               (2 or 3 per line, the same count on every line)
    csv        header "x,y" or "x,y,z", one point per row
    ply_ascii  PLY "format ascii 1.0" with a single vertex element;
               x, y, z are read, other vertex properties are ignored

Values are written with 17 significant digits so a write/read round
trip is lossless.
"""
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import pandas as pd
from loguru import logger

from shape_gradient_fields.core import PointCloud
from shape_gradient_fields.exceptions import DataError

FORMATS = ("xyz", "csv", "ply_ascii")
SUFFIX_FORMATS = {
    ".xyz": "xyz",
    ".txt": "xyz",
    ".csv": "csv",
    ".ply": "ply_ascii",
}
FLOAT_FORMAT = "%.17g"
AXES = ("x", "y", "z")


def infer_format(path: Union[str, Path]) -> str:
    suffix = Path(path).suffix.lower()
    if suffix not in SUFFIX_FORMATS:
        raise DataError(
            f"{path}: cannot infer cloud format from suffix '{suffix}'"
        )
    return SUFFIX_FORMATS[suffix]


def _resolve_format(path: Path, format: Optional[str]) -> str:
    format = format or infer_format(path)
    if format not in FORMATS:
        raise DataError(f"Unknown cloud format '{format}'. Use {FORMATS}")
    return format


def _parse_row(
    fields: list[str], path: Path, line_no: int, width: int
) -> list[float]:
    if len(fields) != width:
        raise DataError(
            f"{path} line {line_no}: expected {width} values, got "
            f"{len(fields)}"
        )
    try:
        values = [float(value) for value in fields]
    except ValueError:
        raise DataError(f"{path} line {line_no}: not a number in {fields}")
    if not all(np.isfinite(values)):
        raise DataError(f"{path} line {line_no}: non-finite coordinate")
    return values


def _to_cloud(rows: list[list[float]], path: Path) -> PointCloud:
    if not rows:
        raise DataError(f"{path}: no points")
    try:
        return PointCloud(np.array(rows, dtype=np.float64))
    except ValueError as e:
        raise DataError(f"{path}: {e}")


def _read_lines(path: Path) -> list[str]:
    try:
        return path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise DataError(f"cannot read {path}: {e.strerror}")


def _read_xyz(path: Path) -> PointCloud:
    rows, width = [], None
    for line_no, line in enumerate(_read_lines(path), start=1):
        fields = line.split()
        if not fields:
            continue
        width = width or len(fields)
        rows.append(_parse_row(fields, path, line_no, width))
    return _to_cloud(rows, path)


def _read_csv(path: Path) -> PointCloud:
    try:
        frame = pd.read_csv(path, dtype=str, skipinitialspace=True)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise DataError(f"{path}: {e}")

    columns = [str(c).strip() for c in frame.columns]
    if columns not in (list(AXES[:2]), list(AXES)):
        raise DataError(
            f"{path} line 1: header must be 'x,y' or 'x,y,z', got "
            f"'{','.join(columns)}'"
        )

    rows = []
    for idx, row in enumerate(frame.itertuples(index=False)):
        fields = ["" if pd.isna(v) else v for v in row]
        # header is line 1
        rows.append(_parse_row(fields, path, idx + 2, len(columns)))
    return _to_cloud(rows, path)


def _read_ply_header(lines: list[str], path: Path) -> tuple[int, list, int]:
    if not lines or lines[0].strip() != "ply":
        raise DataError(f"{path} line 1: missing 'ply' magic")

    count, properties, element = None, [], None
    for line_no, line in enumerate(lines[1:], start=2):
        fields = line.split()
        if not fields or fields[0] in ("comment", "obj_info"):
            continue
        keyword = fields[0]
        if keyword == "format":
            if fields[1:] != ["ascii", "1.0"]:
                raise DataError(
                    f"{path} line {line_no}: only 'format ascii 1.0' is "
                    f"supported"
                )
        elif keyword == "element":
            element = fields[1] if len(fields) == 3 else None
            if element != "vertex" or count is not None:
                raise DataError(
                    f"{path} line {line_no}: only a single vertex element "
                    f"is supported, got '{line.strip()}'"
                )
            try:
                count = int(fields[2])
            except ValueError:
                raise DataError(f"{path} line {line_no}: bad vertex count")
        elif keyword == "property":
            if element != "vertex" or len(fields) != 3:
                raise DataError(
                    f"{path} line {line_no}: unsupported property "
                    f"'{line.strip()}'"
                )
            properties.append(fields[2])
        elif keyword == "end_header":
            if count is None:
                raise DataError(f"{path}: no vertex element in header")
            return count, properties, line_no
        else:
            raise DataError(
                f"{path} line {line_no}: unexpected header line "
                f"'{line.strip()}'"
            )

    raise DataError(f"{path}: missing end_header")


def _read_ply(path: Path) -> PointCloud:
    lines = _read_lines(path)
    count, properties, header_end = _read_ply_header(lines, path)

    missing = [axis for axis in AXES if axis not in properties]
    if missing:
        raise DataError(f"{path}: vertex element lacks {missing}")
    extras = [name for name in properties if name not in AXES]
    if extras:
        logger.warning(f"{path}: ignoring vertex properties {extras}")
    columns = [properties.index(axis) for axis in AXES]

    body = lines[header_end : header_end + count]
    if len(body) < count:
        raise DataError(
            f"{path}: header announces {count} vertices, found {len(body)}"
        )

    rows = []
    for line_no, line in enumerate(body, start=header_end + 1):
        values = _parse_row(line.split(), path, line_no, len(properties))
        rows.append([values[c] for c in columns])
    return _to_cloud(rows, path)


def read_cloud(
    path: Union[str, Path], format: Optional[str] = None
) -> PointCloud:
    path = Path(path)
    readers = {"xyz": _read_xyz, "csv": _read_csv, "ply_ascii": _read_ply}
    return readers[_resolve_format(path, format)](path)


def write_cloud(
    cloud: PointCloud, path: Union[str, Path], format: Optional[str] = None
) -> Path:
    path = Path(path)
    format = _resolve_format(path, format)
    points = cloud.points

    if format == "xyz":
        np.savetxt(path, points, fmt=FLOAT_FORMAT, delimiter=" ")
    elif format == "csv":
        frame = pd.DataFrame(points, columns=list(AXES[: cloud.dim]))
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    else:
        if cloud.dim != 3:
            raise DataError(f"{path}: PLY output needs 3D points")
        header = "\n".join(
            [
                "ply",
                "format ascii 1.0",
                f"element vertex {len(cloud)}",
                *(f"property double {axis}" for axis in AXES),
                "end_header",
            ]
        )
        np.savetxt(
            path, points, fmt=FLOAT_FORMAT, header=header, comments=""
        )

    logger.debug(f"wrote {len(cloud)} points to {path}")
    return path


def trajectory_table(
    positions: Sequence[np.ndarray], labels: Sequence[str]
) -> pd.DataFrame:
    """
    Long table of chain positions, one block of rows per boundary:
    columns chain, boundary, level, x, y[, z].
    """
    if len(positions) != len(labels):
        raise ValueError(
            f"Got {len(labels)} labels for {len(positions)} boundaries"
        )
    frames = []
    for boundary, (points, label) in enumerate(zip(positions, labels)):
        frame = pd.DataFrame(points, columns=list(AXES[: points.shape[1]]))
        frame.insert(0, "chain", np.arange(len(points)))
        frame.insert(1, "boundary", boundary)
        frame.insert(2, "level", label)
        frames.append(frame)
    return pd.concat(frames, ignore_index=True)


def write_trajectory(
    path: Union[str, Path],
    positions: Sequence[np.ndarray],
    labels: Sequence[str],
) -> Path:
    path = Path(path)
    table = trajectory_table(positions, labels)
    table.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    logger.debug(f"wrote {len(positions)} trajectory boundaries to {path}")
    return path
