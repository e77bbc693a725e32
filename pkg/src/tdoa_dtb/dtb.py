"""Differential Transmitter Bias estimation, aggregation and serialization.

An instantaneous DTB sample is what is left of a TDoA observable after the
known single-differenced geometry (from the reference trajectory) is removed.
Individual node biases are not observable on their own; only differences
against the session's reference node are, so every table is tied to one
reference node and one session label.

Correction file format (CSV):
    session,ref_node,node_id,mean_m,std_m,n_samples
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

from .errors import MixedReference, ParseError, UnknownNode
from .geometry import NodeCatalog, Position, node_sort_key, sd_range
from .differencing import TdoaObservation


@dataclass(frozen=True)
class DtbSample:
    """One instantaneous differential bias value."""

    epoch: float
    node_id: str
    ref_node_id: str
    value: float    # meters

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValueError(f"non-finite DTB sample {self.value}")


@dataclass(frozen=True)
class DtbEntry:
    mean: float       # meters
    std: float        # meters, sample std (n-1 divisor), 0 for n == 1
    n_samples: int

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("DTB entry with no samples")
        if self.std < 0:
            raise ValueError("negative DTB std")


class DtbTable:
    """Per-node differential bias statistics against a fixed reference node."""

    def __init__(self, ref_node_id: str, entries: dict[str, DtbEntry], session: str = ""):
        if ref_node_id in entries:
            raise ValueError("reference node cannot carry its own DTB entry")
        self.ref_node_id = ref_node_id
        self.entries = dict(entries)
        self.session = session

    def __contains__(self, node_id: str) -> bool:
        return node_id == self.ref_node_id or node_id in self.entries

    def mean(self, node_id: str) -> float:
        """Mean DTB of a node against the table's reference (0 for the reference)."""
        if node_id == self.ref_node_id:
            return 0.0
        try:
            return self.entries[node_id].mean
        except KeyError:
            raise UnknownNode(f"node {node_id!r} not in DTB table") from None

    def node_ids(self) -> list[str]:
        return sorted(self.entries, key=node_sort_key)

    def __eq__(self, other) -> bool:
        return (isinstance(other, DtbTable)
                and self.ref_node_id == other.ref_node_id
                and self.session == other.session
                and self.entries == other.entries)


def instantaneous_dtb(obs: TdoaObservation, rover_ref: Position,
                      catalog: NodeCatalog) -> DtbSample:
    """DTB sample: measured single difference minus the true single-differenced range."""
    geom = sd_range(rover_ref, catalog[obs.node_id], catalog[obs.ref_node_id])
    return DtbSample(obs.epoch, obs.node_id, obs.ref_node_id, obs.sd_pseudorange - geom)


def _mean_std(values: list[float]) -> tuple[float, float]:
    n = len(values)
    mean = sum(values) / n
    if n == 1:
        return mean, 0.0
    var = sum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, math.sqrt(var)


def aggregate_dtb(samples: list[DtbSample], session: str = "",
                  trim_sigma: float | None = None) -> DtbTable:
    """Reduce instantaneous samples to per-node mean / sample std / count.

    trim_sigma, when given, discards samples farther than trim_sigma times
    the per-node std from the per-node mean (single pass) before the final
    statistics; off by default.
    """
    if not samples:
        raise ValueError("no DTB samples to aggregate")
    refs = {s.ref_node_id for s in samples}
    if len(refs) != 1:
        raise MixedReference(f"samples carry multiple reference nodes: {sorted(refs)}")
    ref = refs.pop()
    by_node: dict[str, list[float]] = {}
    for s in samples:
        by_node.setdefault(s.node_id, []).append(s.value)
    entries = {}
    for node_id, values in by_node.items():
        if trim_sigma is not None and len(values) > 1:
            mean, std = _mean_std(values)
            if std > 0:
                kept = [v for v in values if abs(v - mean) <= trim_sigma * std]
                if kept:
                    values = kept
        mean, std = _mean_std(values)
        entries[node_id] = DtbEntry(mean, std, len(values))
    return DtbTable(ref, entries, session)


def rereference_dtb(table: DtbTable, new_ref: str) -> DtbTable:
    """Express a DTB table against a different reference node.

    Pairwise differences compose: the bias of n against k is the bias of n
    against m minus the bias of k against m. Stds combine assuming
    independence; the old reference inherits the pivot's sample count.
    """
    if new_ref == table.ref_node_id:
        return table
    if new_ref not in table.entries:
        raise UnknownNode(f"new reference {new_ref!r} not in DTB table")
    pivot = table.entries[new_ref]
    entries = {}
    for node_id, entry in table.entries.items():
        if node_id == new_ref:
            continue
        entries[node_id] = DtbEntry(
            mean=entry.mean - pivot.mean,
            std=math.sqrt(entry.std ** 2 + pivot.std ** 2),
            n_samples=min(entry.n_samples, pivot.n_samples),
        )
    entries[table.ref_node_id] = DtbEntry(
        mean=-pivot.mean, std=pivot.std, n_samples=pivot.n_samples,
    )
    return DtbTable(new_ref, entries, table.session)


def write_dtb(table: DtbTable, path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["session", "ref_node", "node_id", "mean_m", "std_m", "n_samples"])
        for node_id in table.node_ids():
            e = table.entries[node_id]
            writer.writerow([table.session, table.ref_node_id, node_id,
                             repr(e.mean), repr(e.std), e.n_samples])


def read_dtb(path) -> DtbTable:
    entries: dict[str, DtbEntry] = {}
    ref = None
    session = None
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        expected = {"session", "ref_node", "node_id", "mean_m", "std_m", "n_samples"}
        if reader.fieldnames is None or not expected <= set(reader.fieldnames):
            raise ParseError(path, 1, "expected header session,ref_node,node_id,mean_m,std_m,n_samples")
        for lineno, row in enumerate(reader, start=2):
            if ref is None:
                ref, session = row["ref_node"], row["session"]
            elif row["ref_node"] != ref or row["session"] != session:
                raise ParseError(path, lineno, "mixed reference node or session in one file")
            node_id = row["node_id"].strip()
            if node_id in entries or node_id == ref:
                raise ParseError(path, lineno, f"duplicate or reference node row {node_id!r}")
            try:
                entry = DtbEntry(float(row["mean_m"]), float(row["std_m"]),
                                 int(row["n_samples"]))
            except ValueError as exc:
                raise ParseError(path, lineno, f"bad DTB row: {exc}") from None
            entries[node_id] = entry
    if ref is None:
        raise ParseError(path, 1, "empty DTB file")
    return DtbTable(ref, entries, session)
