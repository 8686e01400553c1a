"""Weighted bipartite instance model.

Holds the supply/demand node data, a disk-backed arc store that supports
independent streaming scans in both directions, the line-oriented text
format, and a synthetic instance generator with a tunable contention level.
"""

from __future__ import annotations

import math
import os
import tempfile
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

GD_HEADER = "GD v1"

# Arcs are buffered in fixed-size blocks while building the store and while
# re-bucketing them into the two sorted adjacency copies.
CHUNK_ARCS = 65536


class DataError(Exception):
    """Malformed instance data (bad file, broken referential integrity)."""


@dataclass(frozen=True)
class SupplyNode:
    id: str
    weight: float


@dataclass(frozen=True)
class DemandNode:
    id: str
    demand: float
    penalty: float
    priority: float
    revenue_per_impression: float = 0.0


@dataclass
class Allocation:
    """Primal solution: per-arc fractions and per-contract under-delivery."""

    x: dict[tuple[str, str], float]
    under_delivery: dict[str, float]


class ArcStore:
    """Arc list kept on disk in three copies: arrival order, grouped by
    demand node, and grouped by supply node.

    Only O(|supply| + |demand|) index state plus a constant-size chunk
    buffer is ever resident; `peak_resident_bytes` tracks the high-water
    mark of arc-derived allocations for the memory acceptance check.
    """

    def __init__(self, n_supply: int, n_demand: int, directory: str | None = None):
        self.n_supply = n_supply
        self.n_demand = n_demand
        self.n_arcs = 0
        self._tmp = tempfile.TemporaryDirectory(prefix="gdarcs_", dir=directory)
        self._raw_path = os.path.join(self._tmp.name, "raw.bin")
        self._raw = open(self._raw_path, "wb")
        self._buf = np.empty((CHUNK_ARCS, 2), dtype=np.int32)
        self._fill = 0
        self.deg_supply = np.zeros(n_supply, dtype=np.int64)
        self.deg_demand = np.zeros(n_demand, dtype=np.int64)
        self._by_demand = None
        self._by_supply = None
        self.off_demand = None
        self.off_supply = None
        self.peak_resident_bytes = 0
        self._note_resident(self._buf.nbytes + self.deg_supply.nbytes + self.deg_demand.nbytes)

    def _note_resident(self, nbytes: int) -> None:
        if nbytes > self.peak_resident_bytes:
            self.peak_resident_bytes = nbytes

    def append(self, i: int, j: int) -> None:
        self._buf[self._fill, 0] = i
        self._buf[self._fill, 1] = j
        self._fill += 1
        self.deg_supply[i] += 1
        self.deg_demand[j] += 1
        self.n_arcs += 1
        if self._fill == CHUNK_ARCS:
            self._flush()

    def extend(self, i_arr, j_arr) -> None:
        i_arr = np.asarray(i_arr, dtype=np.int32)
        j_arr = np.asarray(j_arr, dtype=np.int32)
        pos = 0
        while pos < len(i_arr):
            take = min(CHUNK_ARCS - self._fill, len(i_arr) - pos)
            self._buf[self._fill:self._fill + take, 0] = i_arr[pos:pos + take]
            self._buf[self._fill:self._fill + take, 1] = j_arr[pos:pos + take]
            self._fill += take
            pos += take
            if self._fill == CHUNK_ARCS:
                self._flush()
        np.add.at(self.deg_supply, i_arr.astype(np.int64), 1)
        np.add.at(self.deg_demand, j_arr.astype(np.int64), 1)
        self.n_arcs += len(i_arr)

    def _flush(self) -> None:
        if self._fill:
            self._buf[: self._fill].tofile(self._raw)
            self._fill = 0

    @staticmethod
    def _scatter(keys, vals, cursor, out) -> None:
        order = np.argsort(keys, kind="stable")
        k = keys[order].astype(np.int64)
        v = vals[order]
        uniq, starts, counts = np.unique(k, return_index=True, return_counts=True)
        ranks = np.arange(k.size, dtype=np.int64) - starts[np.searchsorted(uniq, k)]
        out[cursor[k] + ranks] = v
        cursor[uniq] += counts

    def finalize(self) -> None:
        self._flush()
        self._raw.close()
        self.off_demand = np.concatenate(([0], np.cumsum(self.deg_demand)))
        self.off_supply = np.concatenate(([0], np.cumsum(self.deg_supply)))
        bd_path = os.path.join(self._tmp.name, "by_demand.bin")
        bs_path = os.path.join(self._tmp.name, "by_supply.bin")
        n = max(self.n_arcs, 1)
        bd = np.memmap(bd_path, dtype=np.int32, mode="w+", shape=(n,))
        bs = np.memmap(bs_path, dtype=np.int32, mode="w+", shape=(n,))
        cur_d = self.off_demand[:-1].copy()
        cur_s = self.off_supply[:-1].copy()
        for i_arr, j_arr in self._iter_raw_chunks():
            self._scatter(j_arr, i_arr, cur_d, bd)
            self._scatter(i_arr, j_arr, cur_s, bs)
            self._note_resident(self._buf.nbytes + 2 * i_arr.nbytes
                                + self.off_demand.nbytes + self.off_supply.nbytes
                                + cur_d.nbytes + cur_s.nbytes)
        bd.flush()
        bs.flush()
        self._by_demand = np.memmap(bd_path, dtype=np.int32, mode="r", shape=(n,))
        self._by_supply = np.memmap(bs_path, dtype=np.int32, mode="r", shape=(n,))
        del bd, bs

    def _iter_raw_chunks(self):
        with open(self._raw_path, "rb") as f:
            while True:
                block = np.fromfile(f, dtype=np.int32, count=2 * CHUNK_ARCS)
                if block.size == 0:
                    return
                pairs = block.reshape(-1, 2)
                yield pairs[:, 0], pairs[:, 1]

    def demand_neighbors(self, j: int) -> np.ndarray:
        """Supply indices of Gamma(j), copied out of the grouped adjacency."""
        lo, hi = self.off_demand[j], self.off_demand[j + 1]
        out = np.array(self._by_demand[lo:hi], dtype=np.int64)
        self._note_resident(out.nbytes)
        return out

    def supply_neighbors(self, i: int) -> np.ndarray:
        lo, hi = self.off_supply[i], self.off_supply[i + 1]
        out = np.array(self._by_supply[lo:hi], dtype=np.int64)
        self._note_resident(out.nbytes)
        return out

    def iter_by_demand(self) -> Iterator[tuple[int, np.ndarray]]:
        for j in range(self.n_demand):
            yield j, self.demand_neighbors(j)

    def iter_by_supply(self) -> Iterator[tuple[int, np.ndarray]]:
        for i in range(self.n_supply):
            yield i, self.supply_neighbors(i)

    def iter_arcs(self) -> Iterator[tuple[int, int]]:
        """Arcs in original arrival order (used for round-trip serialization)."""
        for i_arr, j_arr in self._iter_raw_chunks():
            for i, j in zip(i_arr.tolist(), j_arr.tolist()):
                yield i, j


class Instance:
    """Immutable bipartite allocation instance with derived S_j and theta_j."""

    def __init__(self, supply: list[SupplyNode], demand: list[DemandNode],
                 arcs: ArcStore, eligible: np.ndarray):
        self.supply = supply
        self.demand = demand
        self.supply_ids = [n.id for n in supply]
        self.demand_ids = [n.id for n in demand]
        self.supply_index = {n.id: k for k, n in enumerate(supply)}
        self.demand_index = {n.id: k for k, n in enumerate(demand)}
        self.s = np.array([n.weight for n in supply], dtype=float)
        self.d = np.array([n.demand for n in demand], dtype=float)
        self.p = np.array([n.penalty for n in demand], dtype=float)
        self.v = np.array([n.priority for n in demand], dtype=float)
        self.q = np.array([n.revenue_per_impression for n in demand], dtype=float)
        self.arcs = arcs
        self.S = np.asarray(eligible, dtype=float)
        bad = [self.demand_ids[k] for k in np.nonzero(self.S <= 0.0)[0]]
        if bad:
            raise DataError(f"demand nodes with zero eligible supply: {bad}")
        self.theta = self.d / self.S

    @property
    def n_supply(self) -> int:
        return len(self.supply)

    @property
    def n_demand(self) -> int:
        return len(self.demand)

    @property
    def n_arcs(self) -> int:
        return self.arcs.n_arcs

    def eligible_supply(self, demand_id: str) -> float:
        if demand_id not in self.demand_index:
            raise DataError(f"unknown demand id: {demand_id!r}")
        return float(self.S[self.demand_index[demand_id]])

    @classmethod
    def from_nodes(cls, supply: Iterable[SupplyNode], demand: Iterable[DemandNode],
                   arc_pairs: Iterable[tuple[str, str]],
                   directory: str | None = None) -> "Instance":
        supply = list(supply)
        demand = list(demand)
        _validate_nodes(supply, demand)
        sidx = {n.id: k for k, n in enumerate(supply)}
        didx = {n.id: k for k, n in enumerate(demand)}
        weights = np.array([n.weight for n in supply], dtype=float)
        store = ArcStore(len(supply), len(demand), directory=directory)
        eligible = np.zeros(len(demand))
        for sid, did in arc_pairs:
            if sid not in sidx:
                raise DataError(f"arc references unknown supply id: {sid!r}")
            if did not in didx:
                raise DataError(f"arc references unknown demand id: {did!r}")
            i, j = sidx[sid], didx[did]
            store.append(i, j)
            eligible[j] += weights[i]
        store.finalize()
        return cls(supply, demand, store, eligible)


def _validate_nodes(supply: list[SupplyNode], demand: list[DemandNode]) -> None:
    seen: set[str] = set()
    for n in supply:
        if n.id in seen:
            raise DataError(f"duplicate supply id: {n.id!r}")
        seen.add(n.id)
        if not (n.weight >= 0.0):
            raise DataError(f"supply node {n.id!r} has negative weight")
    seen = set()
    for n in demand:
        if n.id in seen:
            raise DataError(f"duplicate demand id: {n.id!r}")
        seen.add(n.id)
        if not (n.demand > 0.0):
            raise DataError(f"demand node {n.id!r} must have positive demand")
        if not (n.penalty > 0.0):
            raise DataError(f"demand node {n.id!r} must have positive penalty")
        if not (n.priority > 0.0):
            raise DataError(f"demand node {n.id!r} must have positive priority")


# ---------------------------------------------------------------------------
# Text format: `GD v1` header, then D/S/A records, comments with '#'.
# Node records must precede any arc that references them.
# ---------------------------------------------------------------------------

def load_instance(path: str, directory: str | None = None) -> Instance:
    supply: list[SupplyNode] = []
    demand: list[DemandNode] = []
    sidx: dict[str, int] = {}
    didx: dict[str, int] = {}
    weights: list[float] = []
    store: ArcStore | None = None
    eligible: np.ndarray | None = None

    def fail(lineno: int, msg: str):
        raise DataError(f"{path}:{lineno}: {msg}")

    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().strip()
        if header != GD_HEADER:
            fail(1, f"bad header {header!r}, expected {GD_HEADER!r}")
        for lineno, line in enumerate(f, start=2):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            kind = parts[0]
            try:
                if kind == "D":
                    if store is not None:
                        fail(lineno, "demand node declared after arcs")
                    _, nid, d, p, v = parts
                    if nid in didx:
                        fail(lineno, f"duplicate demand id {nid!r}")
                    didx[nid] = len(demand)
                    demand.append(DemandNode(nid, float(d), float(p), float(v)))
                elif kind == "S":
                    if store is not None:
                        fail(lineno, "supply node declared after arcs")
                    _, nid, w = parts
                    if nid in sidx:
                        fail(lineno, f"duplicate supply id {nid!r}")
                    sidx[nid] = len(supply)
                    weights.append(float(w))
                    supply.append(SupplyNode(nid, float(w)))
                elif kind == "A":
                    _, sid, did = parts
                    if store is None:
                        store = ArcStore(len(supply), len(demand), directory=directory)
                        eligible = np.zeros(len(demand))
                    if sid not in sidx:
                        fail(lineno, f"arc references unknown supply id {sid!r}")
                    if did not in didx:
                        fail(lineno, f"arc references unknown demand id {did!r}")
                    i, j = sidx[sid], didx[did]
                    store.append(i, j)
                    eligible[j] += weights[i]
                else:
                    fail(lineno, f"unknown record type {kind!r}")
            except (ValueError, IndexError) as exc:
                if isinstance(exc, DataError):
                    raise
                fail(lineno, f"malformed record: {line!r}")
    if store is None:
        store = ArcStore(len(supply), len(demand))
        store.finalize()
        eligible = np.zeros(len(demand))
    else:
        store.finalize()
    return Instance(supply, demand, store, eligible)


def save_instance(instance: Instance, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(GD_HEADER + "\n")
        for n in instance.demand:
            f.write(f"D {n.id} {n.demand!r} {n.penalty!r} {n.priority!r}\n")
        for n in instance.supply:
            f.write(f"S {n.id} {n.weight!r}\n")
        for i, j in instance.arcs.iter_arcs():
            f.write(f"A {instance.supply_ids[i]} {instance.demand_ids[j]}\n")


# ---------------------------------------------------------------------------
# Synthetic instances.
# ---------------------------------------------------------------------------

PENALTY_PRESETS = {
    # Offset-plus-revenue shapes used in the two evaluation setups.
    "offline": lambda q: 0.005 + q,
    "replay": lambda q: 0.002 + 4.0 * q,
}


def generate_synthetic(n_contracts: int, samples_per_contract: int = 50,
                       contention: float = 0.5, seed: int = 0, *,
                       supply_pool: int | None = None,
                       penalty_preset: str = "offline",
                       q_range: tuple[float, float] = (0.005, 0.05),
                       demand_range: tuple[float, float] = (100.0, 1000.0),
                       weight_range: tuple[float, float] = (50.0, 150.0),
                       priority_range: tuple[float, float] = (1.0, 1.0),
                       popularity_exponent: float = 0.8,
                       directory: str | None = None) -> Instance:
    """Random instance whose average supply contention lands on `contention`.

    Contracts draw `samples_per_contract` distinct supply nodes from a shared
    pool with power-law popularity, which creates the overlap that makes the
    problem contended.  Supply weights are then rescaled uniformly; the
    contention metric is exactly inversely proportional to that scale, so the
    target is hit exactly up to float rounding.
    """
    if n_contracts < 1 or samples_per_contract < 1:
        raise ValueError("n_contracts and samples_per_contract must be positive")
    if not (contention > 0.0):
        raise ValueError("contention must be positive")
    if supply_pool is None:
        supply_pool = samples_per_contract * max(1, (n_contracts + 2) // 3)
    if supply_pool < samples_per_contract:
        raise ValueError("supply_pool must be at least samples_per_contract")

    rng = np.random.default_rng(seed)
    sw = len(str(supply_pool - 1))
    dw = len(str(n_contracts - 1))

    weights = rng.uniform(*weight_range, size=supply_pool)
    popularity = (np.arange(supply_pool) + 1.0) ** (-popularity_exponent)
    popularity /= popularity.sum()

    demands = rng.uniform(*demand_range, size=n_contracts)
    qs = rng.uniform(*q_range, size=n_contracts)
    priorities = rng.uniform(*priority_range, size=n_contracts)
    penalty_fn = PENALTY_PRESETS[penalty_preset]

    store = ArcStore(supply_pool, n_contracts, directory=directory)
    eligible = np.zeros(n_contracts)
    for j in range(n_contracts):
        nodes = rng.choice(supply_pool, size=samples_per_contract,
                           replace=False, p=popularity)
        nodes.sort()
        store.extend(nodes, np.full(samples_per_contract, j, dtype=np.int32))
        eligible[j] = weights[nodes].sum()
    store.finalize()

    # Measured contention with the initial weights, then the exact rescale.
    per_supply = np.zeros(supply_pool)
    for i, nbrs in store.iter_by_supply():
        if nbrs.size:
            per_supply[i] = (demands[nbrs] / eligible[nbrs]).sum()
    asc0 = float((weights * per_supply).sum() / weights.sum())
    factor = asc0 / contention
    weights = weights * factor
    eligible = eligible * factor

    supply = [SupplyNode(f"s{k:0{sw}d}", float(weights[k])) for k in range(supply_pool)]
    demand = [DemandNode(f"c{k:0{dw}d}", float(demands[k]),
                         float(penalty_fn(qs[k])), float(priorities[k]),
                         float(qs[k])) for k in range(n_contracts)]
    return Instance(supply, demand, store, eligible)
