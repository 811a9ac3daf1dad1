"""
Flat binary tensor container.

    SGFTENSORS 1
    count <n>
    <name> f8le <shape> <offset> <nbytes>     (n lines)
    end_header
    <payload>

`shape` is a comma-separated list of dimensions (`-` for a scalar),
`offset` is counted from the first payload byte and the payload holds
every tensor as little-endian float64 in row-major order. Header lines
are ASCII terminated by a single newline.
"""
from pathlib import Path
from typing import Union

import numpy as np

from shape_gradient_fields.core import Tensor
from shape_gradient_fields.exceptions import DataError

MAGIC = "SGFTENSORS 1"
DTYPE_TAG = "f8le"
END_HEADER = "end_header"


def _format_shape(shape: tuple[int, ...]) -> str:
    return ",".join(str(dim) for dim in shape) if shape else "-"


def _parse_shape(text: str, line_no: int) -> tuple[int, ...]:
    if text == "-":
        return ()
    try:
        shape = tuple(int(dim) for dim in text.split(","))
    except ValueError:
        raise DataError(f"line {line_no}: malformed shape '{text}'")
    if any(dim < 0 for dim in shape):
        raise DataError(f"line {line_no}: negative dimension in '{text}'")
    return shape


def write_tensors(path: Union[str, Path], tensors: dict[str, Tensor]) -> None:
    header = [MAGIC, f"count {len(tensors)}"]
    payload = []
    offset = 0

    for name, value in tensors.items():
        if not name or any(ch.isspace() for ch in name):
            raise ValueError(f"Tensor name '{name}' must be non-empty")
        data = np.ascontiguousarray(value, dtype="<f8")
        header.append(
            f"{name} {DTYPE_TAG} {_format_shape(data.shape)} {offset} "
            f"{data.nbytes}"
        )
        payload.append(data.tobytes())
        offset += data.nbytes

    header.append(END_HEADER)
    with open(path, "wb") as file:
        file.write(("\n".join(header) + "\n").encode("ascii"))
        for chunk in payload:
            file.write(chunk)


def read_tensors(path: Union[str, Path]) -> dict[str, Tensor]:
    raw = Path(path).read_bytes()
    lines = []
    position = 0

    while True:
        end = raw.find(b"\n", position)
        if end < 0:
            raise DataError(
                f"line {len(lines) + 1}: header ended before '{END_HEADER}'"
            )
        try:
            lines.append(raw[position:end].decode("ascii"))
        except UnicodeDecodeError:
            raise DataError(f"line {len(lines) + 1}: header is not ASCII")
        position = end + 1
        if lines[-1] == END_HEADER:
            break

    if lines[0] != MAGIC:
        raise DataError(f"line 1: expected '{MAGIC}', got '{lines[0]}'")

    count_fields = lines[1].split() if len(lines) > 1 else []
    if len(count_fields) != 2 or count_fields[0] != "count":
        raise DataError("line 2: expected 'count <n>'")
    try:
        count = int(count_fields[1])
    except ValueError:
        raise DataError(f"line 2: malformed tensor count '{count_fields[1]}'")

    entries = lines[2:-1]
    if len(entries) != count:
        raise DataError(
            f"line {len(lines)}: header lists {len(entries)} tensors, "
            f"count says {count}"
        )

    payload = raw[position:]
    tensors = {}

    for line_no, entry in enumerate(entries, start=3):
        fields = entry.split()
        if len(fields) != 5:
            raise DataError(
                f"line {line_no}: expected 5 fields, got '{entry}'"
            )
        name, dtype, shape_text, offset_text, nbytes_text = fields
        if dtype != DTYPE_TAG:
            raise DataError(f"line {line_no}: unsupported dtype '{dtype}'")

        shape = _parse_shape(shape_text, line_no)
        try:
            offset, nbytes = int(offset_text), int(nbytes_text)
        except ValueError:
            raise DataError(f"line {line_no}: malformed offset or size")

        if nbytes != 8 * int(np.prod(shape, dtype=np.int64)):
            raise DataError(
                f"line {line_no}: {nbytes} bytes do not fit shape {shape}"
            )
        if offset < 0 or offset + nbytes > len(payload):
            raise DataError(
                f"line {line_no}: tensor '{name}' runs past the payload"
            )
        if name in tensors:
            raise DataError(f"line {line_no}: duplicate tensor '{name}'")

        if nbytes == 0:
            tensors[name] = np.zeros(shape)
            continue
        data = np.frombuffer(
            payload, dtype="<f8", count=nbytes // 8, offset=offset
        )
        tensors[name] = data.astype(np.float64).reshape(shape)

    return tensors
