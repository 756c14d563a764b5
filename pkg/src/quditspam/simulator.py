"""Exact outcome distributions and seeded shot sampling for permutation circuits."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .design import PermutationCircuit
from .model import SpamModel, herald


@dataclass(frozen=True, eq=False)
class CountsRecord:
    circuit: PermutationCircuit
    shots: int
    counts: np.ndarray  # length D, indexed by flat outcome

    def __post_init__(self):
        counts = np.array(self.counts, dtype=np.int64)
        if counts.shape != (self.circuit.shape.D,):
            raise ValueError(f"counts must have length {self.circuit.shape.D}")
        if counts.min() < 0:
            raise ValueError("negative counts")
        if int(counts.sum()) != int(self.shots):
            raise ValueError(f"counts sum to {counts.sum()}, expected {self.shots} shots")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "shots", int(self.shots))

    @property
    def frequencies(self) -> np.ndarray:
        return self.counts / self.shots

    def as_dict(self) -> dict[str, int]:
        shape = self.circuit.shape
        return {shape.bitstring(j): int(c) for j, c in enumerate(self.counts) if c}

    def to_json(self) -> dict:
        return {
            "circuit": self.circuit.to_list(),
            "shots": self.shots,
            "counts": self.as_dict(),
        }

    @classmethod
    def from_json(cls, data: dict, shape=None) -> "CountsRecord":
        from .design import design_from_json

        circ = design_from_json([data["circuit"]], shape)[0]
        counts = np.zeros(circ.shape.D, dtype=np.int64)
        for key, c in data["counts"].items():
            counts[circ.shape.parse_bitstring(key)] = int(c)
        return cls(circ, int(data["shots"]), counts)

    def __eq__(self, other):
        if not isinstance(other, CountsRecord):
            return NotImplemented
        return (self.circuit == other.circuit and self.shots == other.shots
                and np.array_equal(self.counts, other.counts))


def exact_distribution(model: SpamModel, circuit: PermutationCircuit) -> np.ndarray:
    """Pr(l) = sum_j c_j s_{l, pi(j)}."""
    if circuit.shape != model.shape:
        raise ValueError("circuit and model shapes differ")
    return model.confusion[:, circuit.index_map] @ model.prep


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def circuit_seed(master_seed: int, index: int) -> np.random.SeedSequence:
    """Child seed for circuit ``index``; independent of execution order."""
    return np.random.SeedSequence(entropy=master_seed, spawn_key=(index,))


def draw_counts(probs: np.ndarray, shots: int, rng: np.random.Generator) -> np.ndarray:
    """Multinomial counts by inverse-CDF lookup.

    A uniform draw u lands on the first outcome whose cumulative probability
    exceeds u; the last cumulative value is forced to exactly 1.
    """
    probs = np.clip(np.asarray(probs, dtype=float), 0.0, None)
    cdf = np.cumsum(probs / probs.sum())
    cdf[-1] = 1.0
    u = rng.random(shots)
    idx = np.searchsorted(cdf, u, side="right")
    return np.bincount(idx, minlength=len(probs))


def sample(model: SpamModel, circuit: PermutationCircuit, shots: int, seed) -> CountsRecord:
    if shots < 1:
        raise ValueError("shots must be >= 1")
    probs = exact_distribution(model, circuit)
    counts = draw_counts(probs, shots, _rng(seed))
    return CountsRecord(circuit, shots, counts)


def run_design(model: SpamModel, circuits: Sequence[PermutationCircuit], shots: int,
               seed: int, heralded: bool = False) -> list[CountsRecord]:
    """Sample every circuit with a seed derived from (seed, circuit index).

    Heralding is simulated exactly by conditioning the preparation; see
    :func:`quditspam.model.herald`.
    """
    if heralded:
        model = herald(model)
    return [sample(model, c, shots, circuit_seed(seed, i)) for i, c in enumerate(circuits)]


def exact_records(model: SpamModel, circuits: Sequence[PermutationCircuit]) -> list[np.ndarray]:
    """Exact outcome distributions, usable as infinite-shot frequencies."""
    return [exact_distribution(model, c) for c in circuits]


def save_records(records: Sequence[CountsRecord], path) -> None:
    with open(path, "w") as fh:
        json.dump([r.to_json() for r in records], fh, indent=1, sort_keys=True)
