"""Euclidean ranges and single-differenced ranges in a local Cartesian frame.

Coordinates are local-frame meters. The z coordinate is accepted everywhere
and participates in range computation, but the positioning state itself is
two dimensional.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

from .errors import ParseError, TooFewNodes, UnknownNode


@dataclass(frozen=True)
class Position:
    """A point in local Cartesian meters. z defaults to 0 for 2D use."""

    x: float
    y: float
    z: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.z)):
            raise ValueError(f"non-finite coordinate in {self!r}")


def node_sort_key(node_id: str):
    """Order node ids numerically when they look numeric, lexically otherwise."""
    try:
        return (0, float(node_id), node_id)
    except ValueError:
        return (1, 0.0, node_id)


class NodeCatalog:
    """Immutable map of node id to position.

    Requires at least two nodes, unique ids and distinct positions.
    """

    def __init__(self, positions: dict[str, Position]):
        if len(positions) < 2:
            raise TooFewNodes(f"catalog needs at least 2 nodes, got {len(positions)}")
        seen = {}
        for node_id, pos in positions.items():
            key = (pos.x, pos.y, pos.z)
            if key in seen:
                raise ValueError(f"nodes {seen[key]!r} and {node_id!r} share position {key}")
            seen[key] = node_id
        self._positions = dict(positions)

    def __contains__(self, node_id: str) -> bool:
        return node_id in self._positions

    def __getitem__(self, node_id: str) -> Position:
        try:
            return self._positions[node_id]
        except KeyError:
            raise UnknownNode(f"node {node_id!r} not in catalog") from None

    def __len__(self) -> int:
        return len(self._positions)

    def __iter__(self):
        return iter(self.ids())

    def ids(self) -> list[str]:
        return sorted(self._positions, key=node_sort_key)

    def items(self):
        return [(i, self._positions[i]) for i in self.ids()]

    @classmethod
    def from_csv(cls, path) -> "NodeCatalog":
        """Load a catalog from a CSV with header node_id,x,y[,z]."""
        positions = {}
        with open(path, newline="") as f:
            reader = csv.DictReader(f)
            if reader.fieldnames is None or not {"node_id", "x", "y"} <= set(reader.fieldnames):
                raise ParseError(path, 1, "expected header node_id,x,y[,z]")
            for lineno, row in enumerate(reader, start=2):
                node_id = row["node_id"].strip()
                if node_id in positions:
                    raise ParseError(path, lineno, f"duplicate node id {node_id!r}")
                try:
                    z = float(row["z"]) if row.get("z") not in (None, "") else 0.0
                    positions[node_id] = Position(float(row["x"]), float(row["y"]), z)
                except (TypeError, ValueError) as exc:
                    raise ParseError(path, lineno, f"bad coordinate: {exc}") from None
        return cls(positions)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["node_id", "x", "y", "z"])
            for node_id, pos in self.items():
                writer.writerow([node_id, repr(pos.x), repr(pos.y), repr(pos.z)])


def range_between(a: Position, b: Position) -> float:
    """Geometric Euclidean distance between two positions, in meters."""
    return math.sqrt((a.x - b.x) ** 2 + (a.y - b.y) ** 2 + (a.z - b.z) ** 2)


def sd_range(rover: Position, node: Position, ref_node: Position) -> float:
    """Single-differenced range: range to node minus range to the reference node.

    May be negative; bounded in magnitude by the node-to-reference distance.
    """
    return range_between(rover, node) - range_between(rover, ref_node)
