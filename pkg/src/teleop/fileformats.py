"""Parsers for the on-disk formats: sectioned config text and point clouds.

The sectioned dialect is shared by scene files and kinematic-chain files:

    # comment
    [section]
    token token token ...

Tokens are whitespace separated; `#` starts a comment anywhere on a line.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

CLOUD_MAGIC = b"TELEOP-CLOUD-F32"  # 16 bytes, prefixes the binary variant


class ParseError(ValueError):
    def __init__(self, path, line_no, message):
        self.path = str(path)
        self.line_no = line_no
        super().__init__(f"{path}:{line_no}: {message}")


def parse_sections(path) -> dict:
    """Read a sectioned file into {section: [(line_no, [tokens...]), ...]}."""
    path = Path(path)
    sections: dict = {}
    current = None
    for line_no, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            sections.setdefault(current, [])
            continue
        if current is None:
            raise ParseError(path, line_no, "content before any [section] header")
        sections[current].append((line_no, line.split()))
    return sections


def floats(path, line_no, tokens, field: str) -> list:
    try:
        return [float(t) for t in tokens]
    except ValueError as exc:
        raise ParseError(path, line_no, f"bad number in {field}: {exc}") from None


def load_point_cloud(path) -> np.ndarray:
    """Load a cloud as an (N, 3) float array; ASCII or binary autodetected."""
    path = Path(path)
    raw = path.read_bytes()
    if raw[:16] == CLOUD_MAGIC:
        body = raw[16:]
        if len(body) % 12 != 0:
            raise ParseError(path, 0, "binary cloud body is not a multiple of 12 bytes")
        pts = np.frombuffer(body, dtype="<f4").reshape(-1, 3).astype(float)
    else:
        rows = []
        for line_no, line in enumerate(raw.decode("utf-8").splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ParseError(path, line_no, f"expected 'x y z', got {len(parts)} fields")
            rows.append(floats(path, line_no, parts, "point"))
        pts = np.array(rows, dtype=float).reshape(-1, 3)
    if pts.size and not np.all(np.isfinite(pts)):
        raise ParseError(path, 0, "cloud contains non-finite coordinates")
    return pts


def save_point_cloud(path, points, binary: bool = False) -> None:
    path = Path(path)
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    if binary:
        path.write_bytes(CLOUD_MAGIC + points.astype("<f4").tobytes())
    else:
        lines = ["%.9g %.9g %.9g" % (x, y, z) for x, y, z in points]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
