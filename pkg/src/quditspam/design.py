"""Permutation-circuit designs and their first-order design matrices."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .exceptions import DominantOutcome, IndexOutOfRange
from .gauge import numerical_rank
from .model import SystemShape, digit_table, layout


def transposition(j: int, k: int, d: int) -> tuple[int, ...]:
    """Permutation of {0..d-1} swapping levels j < k."""
    if not (0 <= j < k < d):
        raise IndexOutOfRange(f"need 0 <= j < k < d, got j={j}, k={k}, d={d}")
    perm = list(range(d))
    perm[j], perm[k] = k, j
    return tuple(perm)


def _is_perm(p: Sequence[int], d: int) -> bool:
    return len(p) == d and sorted(p) == list(range(d))


def gate_name(perm: Sequence[int]) -> str:
    d = len(perm)
    moved = [i for i in range(d) if perm[i] != i]
    if not moved:
        return "I"
    if len(moved) == 2 and perm[moved[0]] == moved[1]:
        return "X" if d == 2 else f"X{moved[0]}{moved[1]}"
    return "P[" + "".join(map(str, perm)) + "]"


@dataclass(frozen=True)
class PermutationCircuit:
    """One layer of single-qudit permutation gates, qudit 1 first."""

    shape: SystemShape
    perms: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        perms = tuple(tuple(int(x) for x in p) for p in self.perms)
        if len(perms) != self.shape.n:
            raise ValueError(f"need {self.shape.n} permutations, got {len(perms)}")
        for p in perms:
            if not _is_perm(p, self.shape.d):
                raise ValueError(f"{p} is not a permutation of 0..{self.shape.d - 1}")
        object.__setattr__(self, "perms", perms)

    @classmethod
    def identity(cls, shape: SystemShape) -> "PermutationCircuit":
        return cls(shape, (tuple(range(shape.d)),) * shape.n)

    @property
    def name(self) -> str:
        return "".join(gate_name(p) for p in self.perms)

    @cached_property
    def index_map(self) -> np.ndarray:
        """Flat basis index j -> pi(j)."""
        digits = digit_table(self.shape)
        table = np.array(self.perms)
        image = table[np.arange(self.shape.n), digits]
        weights = self.shape.d ** np.arange(self.shape.n - 1, -1, -1)
        out = (image * weights).sum(axis=1)
        out.setflags(write=False)
        return out

    @cached_property
    def inverse_map(self) -> np.ndarray:
        out = np.empty_like(self.index_map)
        out[self.index_map] = np.arange(self.shape.D)
        out.setflags(write=False)
        return out

    def apply(self, j: int) -> int:
        return int(self.index_map[j])

    def to_list(self) -> list[list[int]]:
        return [list(p) for p in self.perms]


def proposition_design(shape: SystemShape) -> list[PermutationCircuit]:
    """The two circuit families that pin every learnable parameter.

    First, for h in {1..d-1}^n: identity where h_i = 1 and the swap (1, h_i)
    otherwise.  Then, for k in Z_d^n minus 0: identity where k_i = 0 and the
    swap (0, k_i) otherwise.  Both loops run in lexicographic order; repeated
    circuits are dropped.
    """
    d, n = shape.d, shape.n
    ident = tuple(range(d))
    out: list[PermutationCircuit] = []
    seen = set()

    def add(perms):
        if perms not in seen:
            seen.add(perms)
            out.append(PermutationCircuit(shape, perms))

    for h in itertools.product(range(1, d), repeat=n):
        add(tuple(ident if hi == 1 else transposition(1, hi, d) for hi in h))
    for k in itertools.product(range(d), repeat=n):
        if any(k):
            add(tuple(ident if ki == 0 else transposition(0, ki, d) for ki in k))
    return out


def first_order_row(circuit: PermutationCircuit, outcome: int):
    """Sparse first-order row for Pr(outcome; circuit).

    Returns ``(positions, coefficients, offset)`` with
    Pr(l) = c_{pi^-1(l)} + s_{l, pi(0)} + O(eps^2).
    """
    shape = circuit.shape
    lay = layout(shape)
    pi0 = circuit.apply(0)
    if outcome == pi0:
        raise DominantOutcome(f"outcome {shape.bitstring(outcome)} is the ideal outcome")
    t = int(circuit.inverse_map[outcome])
    pos = []
    if t != 0:
        pos.append(lay.s_position(t))
    pos.append(lay.m_position(outcome, pi0))
    return np.array(pos), np.ones(len(pos)), 0.0


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    circuits: tuple[PermutationCircuit, ...]
    matrix: np.ndarray
    rows: tuple[tuple[int, int], ...]  # (circuit index, outcome)
    offsets: np.ndarray

    @property
    def shape(self) -> SystemShape:
        return self.circuits[0].shape

    @cached_property
    def rank(self) -> int:
        return numerical_rank(self.matrix)

    @property
    def expected_rank(self) -> int:
        return self.shape.D**2 - 2**self.shape.n

    def predict(self, eps_values) -> np.ndarray:
        return self.matrix @ np.asarray(eps_values) + self.offsets

    @property
    def design_id(self) -> str:
        return ",".join(c.name for c in self.circuits)


def build_design(circuits: Sequence[PermutationCircuit]) -> DesignMatrix:
    circuits = tuple(circuits)
    if not circuits:
        raise ValueError("design needs at least one circuit")
    shape = circuits[0].shape
    if any(c.shape != shape for c in circuits):
        raise ValueError("all circuits must share one system shape")
    D = shape.D
    rows, offsets, entries = [], [], []
    for ci, circ in enumerate(circuits):
        pi0 = circ.apply(0)
        for l in range(D):
            if l == pi0:
                continue
            pos, coef, off = first_order_row(circ, l)
            entries.append((pos, coef))
            rows.append((ci, l))
            offsets.append(off)
    M = np.zeros((len(rows), shape.num_params))
    for r, (pos, coef) in enumerate(entries):
        M[r, pos] = coef
    M.setflags(write=False)
    off = np.array(offsets)
    off.setflags(write=False)
    return DesignMatrix(circuits, M, tuple(rows), off)


def design_to_json(circuits: Sequence[PermutationCircuit]) -> list:
    return [c.to_list() for c in circuits]


def design_from_json(data, shape: SystemShape | None = None) -> list[PermutationCircuit]:
    out = []
    for perms in data:
        n, d = len(perms), len(perms[0])
        sh = shape or SystemShape(n, d)
        out.append(PermutationCircuit(sh, tuple(tuple(p) for p in perms)))
    return out


def load_design(path) -> list[PermutationCircuit]:
    with open(path) as fh:
        data = json.load(fh)
    if isinstance(data, dict):
        data = data["circuits"]
    return design_from_json(data)
