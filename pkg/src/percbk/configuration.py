"""Edge configurations and boundary partitions.

Exhaustive code addresses a configuration by its integer index (bit ``i`` is
the state of edge ``i``); simulation code works on ``uint8`` arrays.  Both
are accepted wherever a configuration is expected.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Configuration:
    bits: int
    n: int

    def __post_init__(self):
        if self.bits < 0 or self.bits >> self.n:
            raise ValueError(f"bit pattern {self.bits:#x} does not fit in {self.n} edges")

    def __getitem__(self, i: int) -> int:
        return (self.bits >> i) & 1

    def with_edge(self, i: int, value: int) -> "Configuration":
        """omega^i x value."""
        if value:
            return Configuration(self.bits | (1 << i), self.n)
        return Configuration(self.bits & ~(1 << i), self.n)

    def n_open(self) -> int:
        return bin(self.bits).count("1")

    def to_array(self) -> np.ndarray:
        return ((self.bits >> np.arange(self.n)) & 1).astype(np.uint8)

    @classmethod
    def from_array(cls, arr) -> "Configuration":
        arr = np.asarray(arr).astype(bool)
        return cls(int(sum(1 << int(i) for i in np.flatnonzero(arr))), int(arr.shape[0]))

    @classmethod
    def all_open(cls, n: int) -> "Configuration":
        return cls((1 << n) - 1, n)

    @classmethod
    def all_closed(cls, n: int) -> "Configuration":
        return cls(0, n)


def as_state(omega, n_edges: int) -> np.ndarray:
    """Normalize a Configuration, index or array into a ``uint8`` vector."""
    if isinstance(omega, Configuration):
        if omega.n != n_edges:
            raise ValueError(f"configuration has {omega.n} edges, graph has {n_edges}")
        return omega.to_array()
    if isinstance(omega, (int, np.integer)):
        return ((int(omega) >> np.arange(n_edges)) & 1).astype(np.uint8)
    arr = np.asarray(omega)
    if arr.shape != (n_edges,):
        raise ValueError(f"configuration has shape {arr.shape}, expected ({n_edges},)")
    return arr.astype(np.uint8, copy=False)


@dataclass(frozen=True)
class BoundaryPartition:
    """Partition of boundary vertices; vertices sharing a block are wired."""

    blocks: tuple[tuple[int, ...], ...]
    tag: str = "custom"

    def __post_init__(self):
        seen: set[int] = set()
        for b in self.blocks:
            if not b:
                raise ValueError("empty block in boundary partition")
            for v in b:
                if v in seen:
                    raise ValueError(f"vertex {v} appears in two blocks")
                seen.add(v)

    @classmethod
    def free(cls, vertices=()) -> "BoundaryPartition":
        return cls(tuple((int(v),) for v in vertices), "free")

    @classmethod
    def wired(cls, vertices) -> "BoundaryPartition":
        vs = tuple(sorted(int(v) for v in vertices))
        return cls((vs,) if vs else (), "wired")

    @classmethod
    def from_blocks(cls, blocks) -> "BoundaryPartition":
        return cls(tuple(tuple(sorted(int(v) for v in b)) for b in blocks), "custom")

    @property
    def vertices(self) -> tuple[int, ...]:
        return tuple(sorted(v for b in self.blocks for v in b))

    @property
    def is_free(self) -> bool:
        return all(len(b) == 1 for b in self.blocks)

    def merge_pairs(self) -> tuple[np.ndarray, np.ndarray]:
        pu, pv = [], []
        for b in self.blocks:
            for v in b[1:]:
                pu.append(b[0])
                pv.append(v)
        return np.asarray(pu, dtype=np.int64), np.asarray(pv, dtype=np.int64)

    def to_dict(self) -> dict:
        return {"tag": self.tag, "blocks": [list(b) for b in self.blocks]}


FREE = BoundaryPartition((), "free")
