"""Incoherent n-qudit SPAM noise models.

A model is a diagonal preparation state ``prep[j] = c_j`` and a
column-stochastic confusion matrix ``confusion[l, k] = s_{l,k}`` (probability
of reporting ``l`` when the true basis state is ``k``).  Basis states are flat
indices into Z_d^n; qudit 1 is the most significant base-d digit.

The independent small parameters live in an :class:`EpsilonVector` of length
D**2 - 1 laid out as::

    S(j)   for j = 1 .. D-1
    M(l,k) for (l, k) in lexicographic order, l != k
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Sequence, Union

import numpy as np

from .exceptions import HeraldImpossible, NormalizationViolation, ScaleTooLarge

CONSTRUCTED_TOL = 1e-12
LOADED_TOL = 1e-9
MAX_DIM = 4096

Label = tuple  # ("S", j) or ("M", l, k)


@dataclass(frozen=True)
class SystemShape:
    n: int
    d: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n}")
        if int(self.d) != self.d or self.d < 2:
            raise ValueError(f"d must be an integer >= 2, got {self.d}")
        if self.d > 10:
            # outcome labels are rendered as one character per qudit
            raise ValueError("d > 10 is not supported")
        if self.d**self.n > MAX_DIM:
            raise ValueError(f"d**n = {self.d ** self.n} exceeds {MAX_DIM}")

    @property
    def D(self) -> int:
        return self.d**self.n

    @property
    def num_params(self) -> int:
        return self.D**2 - 1

    @property
    def num_gauges(self) -> int:
        return 2**self.n - 1

    def digits(self, j: int) -> tuple[int, ...]:
        return tuple(int(x) for x in digit_table(self)[j])

    def index(self, digits: Sequence[int]) -> int:
        j = 0
        for x in digits:
            if not 0 <= x < self.d:
                raise ValueError(f"digit {x} out of range for d={self.d}")
            j = j * self.d + int(x)
        return j

    def bitstring(self, j: int) -> str:
        return "".join(str(x) for x in self.digits(j))

    def parse_bitstring(self, s: str) -> int:
        if len(s) != self.n:
            raise ValueError(f"outcome label {s!r} does not have {self.n} digits")
        return self.index([int(c) for c in s])


@lru_cache(maxsize=None)
def digit_table(shape: SystemShape) -> np.ndarray:
    """(D, n) integer array; row j holds the base-d digits of j."""
    D, n, d = shape.D, shape.n, shape.d
    j = np.arange(D)
    out = np.empty((D, n), dtype=np.int64)
    for i in range(n - 1, -1, -1):
        out[:, i] = j % d
        j = j // d
    out.setflags(write=False)
    return out


@lru_cache(maxsize=None)
def pattern_table(shape: SystemShape) -> np.ndarray:
    """Support pattern of each basis index as an n-bit mask (qudit 1 = MSB)."""
    digits = digit_table(shape)
    weights = 1 << np.arange(shape.n - 1, -1, -1)
    out = ((digits != 0) * weights).sum(axis=1).astype(np.int64)
    out.setflags(write=False)
    return out


class _Layout:
    """Position bookkeeping shared by every EpsilonVector of one shape."""

    def __init__(self, shape: SystemShape):
        D = shape.D
        self.shape = shape
        self.num_s = D - 1
        self.s_index = np.arange(1, D)
        ll, kk = np.meshgrid(np.arange(D), np.arange(D), indexing="ij")
        off = ll != kk
        self.m_rows = ll[off]
        self.m_cols = kk[off]
        for arr in (self.s_index, self.m_rows, self.m_cols):
            arr.setflags(write=False)

    def s_position(self, j: int) -> int:
        if not 0 < j < self.shape.D:
            raise KeyError(("S", j))
        return j - 1

    def m_position(self, l: int, k: int) -> int:
        D = self.shape.D
        if l == k or not (0 <= l < D and 0 <= k < D):
            raise KeyError(("M", l, k))
        return self.num_s + l * (D - 1) + (k if k < l else k - 1)

    @cached_property
    def labels(self) -> tuple[Label, ...]:
        s = [("S", int(j)) for j in self.s_index]
        m = [("M", int(l), int(k)) for l, k in zip(self.m_rows, self.m_cols)]
        return tuple(s + m)

    @cached_property
    def label_strings(self) -> tuple[str, ...]:
        return tuple(format_label(self.shape, lab) for lab in self.labels)

    @cached_property
    def positions(self) -> dict:
        out = {lab: i for i, lab in enumerate(self.labels)}
        out.update({s: i for i, s in enumerate(self.label_strings)})
        return out

    @cached_property
    def classes(self) -> np.ndarray:
        """Support pattern of every parameter: pt(j) for S(j), pt(k-l) for M(l,k)."""
        pt = pattern_table(self.shape)
        digits = digit_table(self.shape)
        weights = 1 << np.arange(self.shape.n - 1, -1, -1)
        diff = (digits[self.m_rows] != digits[self.m_cols]) * weights
        out = np.concatenate([pt[self.s_index], diff.sum(axis=1)]).astype(np.int64)
        out.setflags(write=False)
        return out

    @cached_property
    def signs(self) -> np.ndarray:
        """+1 for preparation parameters, -1 for measurement parameters."""
        out = np.concatenate([np.ones(self.num_s), -np.ones(len(self.m_rows))])
        out.setflags(write=False)
        return out


@lru_cache(maxsize=None)
def layout(shape: SystemShape) -> _Layout:
    return _Layout(shape)


def format_label(shape: SystemShape, label: Label) -> str:
    if label[0] == "S":
        return f"S({shape.bitstring(label[1])})"
    return f"M({shape.bitstring(label[1])},{shape.bitstring(label[2])})"


def parse_label(shape: SystemShape, text: str) -> Label:
    text = text.strip()
    kind, body = text[0], text[2:-1]
    if kind == "S":
        return ("S", shape.parse_bitstring(body))
    if kind == "M":
        l, k = body.split(",")
        return ("M", shape.parse_bitstring(l), shape.parse_bitstring(k))
    raise ValueError(f"cannot parse parameter label {text!r}")


def _frozen(a, dtype=float) -> np.ndarray:
    out = np.array(a, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class EpsilonVector:
    """The D**2 - 1 independent SPAM parameters of one shape."""

    shape: SystemShape
    values: np.ndarray

    def __post_init__(self):
        vals = _frozen(self.values)
        if vals.shape != (self.shape.num_params,):
            raise ValueError(
                f"expected {self.shape.num_params} parameters, got shape {vals.shape}"
            )
        object.__setattr__(self, "values", vals)

    @classmethod
    def zeros(cls, shape: SystemShape) -> "EpsilonVector":
        return cls(shape, np.zeros(shape.num_params))

    @property
    def index_map(self) -> tuple[Label, ...]:
        return layout(self.shape).labels

    @property
    def label_strings(self) -> tuple[str, ...]:
        return layout(self.shape).label_strings

    def position(self, label) -> int:
        return layout(self.shape).positions[label]

    def __getitem__(self, label) -> float:
        return float(self.values[self.position(label)])

    def __len__(self) -> int:
        return len(self.values)

    def prep_part(self) -> np.ndarray:
        return self.values[: self.shape.D - 1]

    def meas_part(self) -> np.ndarray:
        return self.values[self.shape.D - 1 :]

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.label_strings, map(float, self.values)))

    def __eq__(self, other):
        if not isinstance(other, EpsilonVector):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.values, other.values)


@dataclass(frozen=True, eq=False)
class SpamModel:
    shape: SystemShape
    prep: np.ndarray
    confusion: np.ndarray
    tol: float = field(default=CONSTRUCTED_TOL, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "prep", _frozen(self.prep))
        object.__setattr__(self, "confusion", _frozen(self.confusion))
        validate(self, self.tol)

    def __eq__(self, other):
        if not isinstance(other, SpamModel):
            return NotImplemented
        return (
            self.shape == other.shape
            and np.array_equal(self.prep, other.prep)
            and np.array_equal(self.confusion, other.confusion)
        )

    @classmethod
    def ideal(cls, shape: SystemShape) -> "SpamModel":
        prep = np.zeros(shape.D)
        prep[0] = 1.0
        return cls(shape, prep, np.eye(shape.D))

    def to_dict(self) -> dict:
        return {
            "n": self.shape.n,
            "d": self.shape.d,
            "prep": [float(x) for x in self.prep],
            "confusion": [[float(x) for x in row] for row in self.confusion],
        }

    @classmethod
    def from_dict(cls, data: dict, tol: float = LOADED_TOL) -> "SpamModel":
        shape = SystemShape(int(data["n"]), int(data["d"]))
        return cls(shape, data["prep"], data["confusion"], tol=tol)


def validate(model: SpamModel, tol: float = CONSTRUCTED_TOL) -> None:
    """Raise NormalizationViolation unless ``model`` is a valid SPAM model."""
    D = model.shape.D
    prep, conf = model.prep, model.confusion
    if prep.shape != (D,) or conf.shape != (D, D):
        raise NormalizationViolation(
            f"expected prep of shape ({D},) and confusion ({D}, {D}), "
            f"got {prep.shape} and {conf.shape}"
        )
    if not (np.all(np.isfinite(prep)) and np.all(np.isfinite(conf))):
        raise NormalizationViolation("non-finite entries")
    if prep.min() < -tol:
        raise NormalizationViolation(f"negative population {prep.min():.3g}")
    if abs(prep.sum() - 1.0) > tol:
        raise NormalizationViolation(f"populations sum to {prep.sum()!r}")
    if conf.min() < -tol:
        raise NormalizationViolation(f"negative confusion entry {conf.min():.3g}")
    dev = np.abs(conf.sum(axis=0) - 1.0).max()
    if dev > tol:
        raise NormalizationViolation(f"confusion column sum off by {dev:.3g}")


def model_arrays(shape: SystemShape, values) -> tuple[np.ndarray, np.ndarray]:
    """Preparation vector and confusion matrix for raw parameter values.

    No positivity check is made, so this also serves for points that are
    only feasible up to shot noise.
    """
    lay = layout(shape)
    D = shape.D
    values = np.asarray(values, dtype=float)
    prep = np.empty(D)
    prep[1:] = values[: D - 1]
    prep[0] = 1.0 - prep[1:].sum()
    conf = np.zeros((D, D))
    conf[lay.m_rows, lay.m_cols] = values[D - 1:]
    conf[np.arange(D), np.arange(D)] = 1.0 - conf.sum(axis=0)
    return prep, conf


def from_epsilon(eps: EpsilonVector) -> SpamModel:
    prep, conf = model_arrays(eps.shape, eps.values)
    if prep[0] < -CONSTRUCTED_TOL or np.diag(conf).min() < -CONSTRUCTED_TOL:
        raise NormalizationViolation(
            "epsilon vector leaves a negative ideal population or readout fidelity"
        )
    if eps.values.min() < -CONSTRUCTED_TOL:
        raise NormalizationViolation("negative epsilon entry")
    return SpamModel(eps.shape, prep, conf)


def to_epsilon(model: SpamModel) -> EpsilonVector:
    lay = layout(model.shape)
    vals = np.concatenate(
        [model.prep[1:], model.confusion[lay.m_rows, lay.m_cols]]
    )
    return EpsilonVector(model.shape, vals)


def herald_acceptance(model: SpamModel) -> float:
    """Probability that the heralding measurement reports the all-zero outcome."""
    return float(model.confusion[0] @ model.prep)


def herald(model: SpamModel) -> SpamModel:
    """Post-select preparation on an initial readout of outcome 0.

    The readout is treated as classical: it conditions the diagonal state
    without further disturbance, and the confusion matrix is unchanged.
    """
    weights = model.confusion[0] * model.prep
    norm = weights.sum()
    if not norm > 0:
        raise HeraldImpossible("outcome 0 has zero probability; nothing survives")
    return SpamModel(model.shape, weights / norm, model.confusion)


def random_epsilon(shape: SystemShape, eps_scale: float, seed) -> EpsilonVector:
    if eps_scale < 0 or eps_scale > 0.1:
        raise ScaleTooLarge(f"eps_scale must lie in [0, 0.1], got {eps_scale}")
    if eps_scale * (shape.D - 1) >= 1:
        raise ScaleTooLarge(
            f"eps_scale={eps_scale} with D={shape.D} can violate normalization"
        )
    rng = np.random.default_rng(seed)
    return EpsilonVector(shape, rng.uniform(0.0, eps_scale, size=shape.num_params))


def random_model(shape: SystemShape, eps_scale: float, seed) -> SpamModel:
    """Every independent parameter drawn uniformly from [0, eps_scale]."""
    return from_epsilon(random_epsilon(shape, eps_scale, seed))


def qubit_restriction(model: SpamModel) -> SpamModel:
    """Two-level model carrying the qubit-subspace parameters of ``model``.

    Off-ideal entries with every index in {0,1}^n are copied; the ideal
    entries are refilled by normalization.
    """
    shape = model.shape
    if shape.d == 2:
        return model
    qshape = SystemShape(shape.n, 2)
    src = to_epsilon(model)
    vals = np.array([src[embed_label(lab, qshape, shape)] for lab in layout(qshape).labels])
    return from_epsilon(EpsilonVector(qshape, vals))


def embed_index(j: int, src: SystemShape, dst: SystemShape) -> int:
    return dst.index(src.digits(j))


def embed_label(label: Label, src: SystemShape, dst: SystemShape) -> Label:
    return (label[0],) + tuple(embed_index(x, src, dst) for x in label[1:])


def save_model(model: SpamModel, path) -> None:
    with open(path, "w") as fh:
        json.dump(model.to_dict(), fh, indent=1)


def load_model(path) -> SpamModel:
    with open(path) as fh:
        return SpamModel.from_dict(json.load(fh))


ModelOrEps = Union[SpamModel, EpsilonVector]
