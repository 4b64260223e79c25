"""MovingAI grid maps: parsing, nearest-neighbour scaling, graph construction.

Format reference: https://movingai.com/benchmarks/formats.html ::

    type octile
    height H
    width W
    map
    <H rows of W characters>
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .graph import WeightedGraph

PASSABLE = frozenset(".G")
BLOCKED = frozenset("@TOW")
ORTHOGONAL_COST = 1.0
DIAGONAL_COST = 1.4


class MapParseError(ValueError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class GridMap:
    width: int
    height: int
    passable: np.ndarray  # shape (height, width), row-major

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("map dimensions must be positive")
        arr = np.asarray(self.passable, dtype=bool)
        if arr.shape != (self.height, self.width):
            raise ValueError("grid shape does not match width x height")
        arr.setflags(write=False)
        object.__setattr__(self, "passable", arr)

    def is_passable(self, col: int, row: int) -> bool:
        return bool(self.passable[row, col])

    def __eq__(self, other):
        return (isinstance(other, GridMap) and self.width == other.width
                and self.height == other.height
                and np.array_equal(self.passable, other.passable))

    def __hash__(self):
        return hash((self.width, self.height, self.passable.tobytes()))


def parse_movingai(text) -> GridMap:
    if not isinstance(text, str):
        text = text.read()
    lines = text.splitlines()
    header = {}
    i = 0
    while True:
        if i >= len(lines):
            raise MapParseError("missing 'map' line", i + 1)
        line = lines[i].strip()
        i += 1
        if not line:
            continue
        if line == "map":
            break
        parts = line.split()
        if len(parts) != 2 or parts[0] not in ("type", "height", "width"):
            raise MapParseError(f"malformed header {line!r}", i)
        header[parts[0]] = parts[1]
    for key in ("type", "height", "width"):
        if key not in header:
            raise MapParseError(f"header lacks {key!r}", i)
    try:
        height, width = int(header["height"]), int(header["width"])
    except ValueError:
        raise MapParseError("height/width must be integers", i) from None
    if height <= 0 or width <= 0:
        raise MapParseError("height/width must be positive", i)

    rows = lines[i:]
    while rows and not rows[-1].strip():
        rows.pop()
    if len(rows) != height:
        raise MapParseError(
            f"row count mismatch: header says {height}, got {len(rows)}", i + 1)
    grid = np.zeros((height, width), dtype=bool)
    for r, row in enumerate(rows):
        lineno = i + r + 1
        row = row.rstrip("\r\n")
        if len(row) != width:
            raise MapParseError(
                f"row length mismatch: expected {width}, got {len(row)}", lineno)
        for c, ch in enumerate(row):
            if ch in PASSABLE:
                grid[r, c] = True
            elif ch not in BLOCKED:
                raise MapParseError(f"unknown cell character {ch!r}", lineno)
    return GridMap(width, height, grid)


def serialize_movingai(grid: GridMap) -> str:
    rows = ["".join("." if p else "@" for p in row) for row in grid.passable]
    return "\n".join([f"type octile", f"height {grid.height}",
                      f"width {grid.width}", "map", *rows]) + "\n"


def load_map(path) -> GridMap:
    with open(path) as fh:
        return parse_movingai(fh.read())


def scale_map(grid: GridMap, factor: float) -> GridMap:
    """Nearest-neighbour resampling to ``ceil(dim * factor)``."""
    if not factor > 0:
        raise ValueError("scale factor must be positive")
    w = math.ceil(grid.width * factor)
    h = math.ceil(grid.height * factor)
    cols = np.minimum(np.floor((np.arange(w) + 0.5) / factor).astype(int), grid.width - 1)
    rows = np.minimum(np.floor((np.arange(h) + 0.5) / factor).astype(int), grid.height - 1)
    return GridMap(w, h, grid.passable[np.ix_(rows, cols)])


def build_graph(grid: GridMap) -> tuple[WeightedGraph, dict[tuple[int, int], int]]:
    """8-neighbourhood graph; diagonal moves may not cut blocked corners.

    Returns the graph and the ``(col, row) -> vertex`` mapping. Vertices are
    numbered in row-major order of the passable cells.
    """
    free = grid.passable
    rr, cc = np.nonzero(free)
    if len(rr) == 0:
        raise ValueError("empty map")
    index = -np.ones(free.shape, dtype=np.intp)
    index[rr, cc] = np.arange(len(rr))
    cells = {(int(c), int(r)): int(v) for v, (r, c) in enumerate(zip(rr, cc))}

    h, w = free.shape
    edges = []
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            if dr == 0 and dc == 0:
                continue
            r2, c2 = rr + dr, cc + dc
            ok = (r2 >= 0) & (r2 < h) & (c2 >= 0) & (c2 < w)
            ok[ok] &= free[r2[ok], c2[ok]]
            if dr and dc:
                # both flanking orthogonal cells must be free
                ok[ok] &= free[rr[ok] + dr, cc[ok]] & free[rr[ok], cc[ok] + dc]
                weight = DIAGONAL_COST
            else:
                weight = ORTHOGONAL_COST
            src = index[rr[ok], cc[ok]]
            dst = index[r2[ok], c2[ok]]
            edges.extend(zip(src.tolist(), dst.tolist(), [weight] * len(src)))
    coords = np.column_stack([cc, rr]).astype(float)
    return WeightedGraph(coords, edges), cells


def grid_from_rows(rows: list[str]) -> GridMap:
    """Convenience constructor from body rows (no header)."""
    text = serialize_header(len(rows[0]), len(rows)) + "\n".join(rows) + "\n"
    return parse_movingai(text)


def serialize_header(width: int, height: int) -> str:
    return f"type octile\nheight {height}\nwidth {width}\nmap\n"


def nearest_passable(grid: GridMap, col: int, row: int) -> tuple[int, int]:
    """Closest passable cell by squared Euclidean distance (ties: row, col)."""
    col = min(max(col, 0), grid.width - 1)
    row = min(max(row, 0), grid.height - 1)
    if grid.passable[row, col]:
        return col, row
    rr, cc = np.nonzero(grid.passable)
    if len(rr) == 0:
        raise ValueError("empty map")
    d = (rr - row) ** 2 + (cc - col) ** 2
    k = np.lexsort((cc, rr, d))[0]
    return int(cc[k]), int(rr[k])
