"""
Flat `key=value` text files: one pair per line, `#` starts a comment,
blank lines are skipped and whitespace around keys and values is
dropped. Used by run configs, checkpoint manifests and metric reports.
"""
from pathlib import Path
from typing import Any, Mapping, Union

from shape_gradient_fields.exceptions import DataError


def parse_key_values(text: str, source: str = "<text>") -> dict[str, str]:
    pairs = {}

    for line_no, line in enumerate(text.splitlines(), start=1):
        content = line.split("#", 1)[0].strip()
        if not content:
            continue
        if "=" not in content:
            raise DataError(
                f"{source} line {line_no}: expected key=value, got "
                f"'{content}'"
            )
        key, value = (part.strip() for part in content.split("=", 1))
        if not key:
            raise DataError(f"{source} line {line_no}: empty key")
        if key in pairs:
            raise DataError(f"{source} line {line_no}: duplicate key '{key}'")
        pairs[key] = value

    return pairs


def read_key_values(path: Union[str, Path]) -> dict[str, str]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise DataError(f"cannot read {path}: {e.strerror}")
    return parse_key_values(text, source=str(path))


def format_key_values(pairs: Mapping[str, Any], header: str = "") -> str:
    lines = [f"# {line}" for line in header.splitlines()]
    lines += [f"{key}={value}" for key, value in pairs.items()]
    return "\n".join(lines) + "\n"


def write_key_values(
    path: Union[str, Path], pairs: Mapping[str, Any], header: str = ""
) -> None:
    Path(path).write_text(format_key_values(pairs, header), encoding="utf-8")
