"""Two-qubit Pauli-noise learning with SPAM-corrected intercept cycle benchmarking.

Pauli labels are strings over ``IXYZ`` with qubit 1 first.  Their support
masks use qubit 1 as the most significant bit, matching the basis-index
convention of :mod:`quditspam.model`.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .estimator import SpamEstimate
from .exceptions import DivisionUnstable, IncompleteSet, NonPositiveData
from .gauge import subsets, subset_mask
from .model import EpsilonVector, SpamModel, SystemShape, layout, qubit_restriction, to_epsilon

_LETTERS = "IXYZ"
_BY_XZ = "IXZY"  # indexed by x | z << 1
_XZ = {"I": (0, 0), "X": (1, 0), "Y": (1, 1), "Z": (0, 1)}


@dataclass(frozen=True, order=True)
class PauliLabel:
    """Hermitian Pauli i^{x.z} X^x Z^z stored as bit masks (qubit 1 = MSB)."""

    n: int
    x: int
    z: int

    @classmethod
    def from_string(cls, s: str) -> "PauliLabel":
        n = len(s)
        x = z = 0
        for i, ch in enumerate(s.upper()):
            if ch not in _XZ:
                raise ValueError(f"bad Pauli letter {ch!r} in {s!r}")
            xb, zb = _XZ[ch]
            x |= xb << (n - 1 - i)
            z |= zb << (n - 1 - i)
        return cls(n, x, z)

    def __str__(self) -> str:
        out = []
        for i in range(self.n):
            bit = self.n - 1 - i
            out.append(_BY_XZ[((self.x >> bit) & 1) | (((self.z >> bit) & 1) << 1)])
        return "".join(out)

    @property
    def support(self) -> int:
        return self.x | self.z

    def support_set(self) -> set[int]:
        return {i for i in range(1, self.n + 1) if self.support >> (self.n - i) & 1}

    @property
    def is_identity(self) -> bool:
        return self.x == 0 and self.z == 0


def all_labels(n: int, include_identity: bool = True) -> list[PauliLabel]:
    out = [PauliLabel.from_string("".join(t)) for t in itertools.product(_LETTERS, repeat=n)]
    return out if include_identity else [a for a in out if not a.is_identity]


def _as_label(a) -> PauliLabel:
    return a if isinstance(a, PauliLabel) else PauliLabel.from_string(a)


def _popcount(v: int) -> int:
    return bin(v).count("1")


def anticommutes(a: PauliLabel, b: PauliLabel) -> bool:
    return (_popcount(a.x & b.z) + _popcount(a.z & b.x)) % 2 == 1


# --- Clifford action ----------------------------------------------------------

def _mul(p, q):
    """Product of i^r X^x Z^z operators given as (r, x, z)."""
    r1, x1, z1 = p
    r2, x2, z2 = q
    return ((r1 + r2 + 2 * _popcount(z1 & x2)) % 4, x1 ^ x2, z1 ^ z2)


@dataclass(frozen=True)
class CliffordAction:
    """Conjugation table of a Clifford on the single-qubit X and Z generators."""

    n: int
    images: Mapping[str, tuple[int, str]]  # e.g. "XI" -> (+1, "XZ")
    name: str = "G"

    def __call__(self, a) -> tuple[PauliLabel, int]:
        a = _as_label(a)
        n = self.n
        # P_a = i^{x.z} X^x Z^z, ordered X_1..X_n Z_1..Z_n
        acc = (_popcount(a.x & a.z) % 4, 0, 0)
        for kind, mask in (("X", a.x), ("Z", a.z)):
            for i in range(n):
                if mask >> (n - 1 - i) & 1:
                    gen = "".join(kind if j == i else "I" for j in range(n))
                    sign, img = self.images[gen]
                    lab = PauliLabel.from_string(img)
                    phase = (_popcount(lab.x & lab.z) + (0 if sign > 0 else 2)) % 4
                    acc = _mul(acc, (phase, lab.x, lab.z))
        r, x, z = acc
        out = PauliLabel(n, x, z)
        rel = (r - _popcount(x & z)) % 4
        if rel % 2:
            raise ValueError("Clifford table maps a Hermitian Pauli to a non-Hermitian one")
        return out, (1 if rel == 0 else -1)


CZ = CliffordAction(
    n=2,
    images={"XI": (1, "XZ"), "IX": (1, "ZX"), "ZI": (1, "ZI"), "IZ": (1, "IZ")},
    name="CZ",
)


def cz_action(a) -> tuple[PauliLabel, int]:
    """Conjugate ``a`` by CZ; returns the image label and its sign."""
    a = _as_label(a)
    if a.n != 2:
        raise ValueError("CZ acts on two qubits")
    return CZ(a)


def is_identifiable(a, clifford_action: CliffordAction = CZ) -> bool:
    """A fidelity is SPAM-independent iff the Clifford keeps the Pauli's support."""
    a = _as_label(a)
    return clifford_action(a)[0].support == a.support


# --- Pauli channels -----------------------------------------------------------

@dataclass(frozen=True)
class PauliChannel:
    n: int
    eigenvalues: Mapping[str, float]

    def __post_init__(self):
        labels = [str(a) for a in all_labels(self.n)]
        ev = {str(_as_label(k)): float(v) for k, v in dict(self.eigenvalues).items()}
        missing = set(labels) - set(ev)
        if missing:
            raise IncompleteSet(f"missing eigenvalues for {sorted(missing)}")
        if abs(ev["I" * self.n] - 1.0) > 1e-12:
            raise ValueError("identity eigenvalue must be 1")
        if max(abs(v) for v in ev.values()) > 1 + 1e-12:
            raise ValueError("Pauli eigenvalues must satisfy |lambda| <= 1")
        object.__setattr__(self, "eigenvalues", {k: ev[k] for k in labels})
        rates = self.error_rates()
        if min(rates.values()) < -1e-12:
            raise ValueError("eigenvalues do not define a valid Pauli channel")

    def __getitem__(self, a) -> float:
        return self.eigenvalues[str(_as_label(a))]

    def error_rates(self) -> dict[str, float]:
        """Walsh transform p_a = 4^-n sum_b (-1)^<a,b> lambda_b."""
        labs = all_labels(self.n)
        lam = np.array([self.eigenvalues[str(b)] for b in labs])
        signs = _symplectic_signs(self.n)
        p = signs @ lam / 4**self.n
        return dict(zip(map(str, labs), map(float, p)))

    @classmethod
    def from_error_rates(cls, n: int, rates: Mapping[str, float]) -> "PauliChannel":
        labs = all_labels(n)
        p = np.array([float(rates.get(str(a), 0.0)) for a in labs])
        if p.min() < -1e-12 or abs(p.sum() - 1) > 1e-12:
            raise ValueError("error rates must form a probability distribution")
        lam = _symplectic_signs(n) @ p
        return cls(n, dict(zip(map(str, labs), map(float, lam))))

    @classmethod
    def identity(cls, n: int) -> "PauliChannel":
        return cls(n, {str(a): 1.0 for a in all_labels(n)})

    def to_dict(self) -> dict:
        return {"n": self.n, "eigenvalues": dict(self.eigenvalues)}


def _symplectic_signs(n: int) -> np.ndarray:
    labs = all_labels(n)
    return np.array([[-1.0 if anticommutes(a, b) else 1.0 for b in labs] for a in labs])


def random_pauli_channel(n: int, total_error: float, seed) -> PauliChannel:
    """Channel whose non-identity error rates are random and sum to ``total_error``."""
    rng = np.random.default_rng(seed)
    labs = all_labels(n)
    w = rng.uniform(0.2, 1.0, size=len(labs) - 1)
    rates = {str(labs[0]): 1.0 - total_error}
    rates.update({str(a): total_error * x / w.sum() for a, x in zip(labs[1:], w)})
    return PauliChannel.from_error_rates(n, rates)


# --- SPAM factors -------------------------------------------------------------

def _parity(v: int) -> int:
    return _popcount(v) & 1


def _qubit_eps(source) -> EpsilonVector:
    if isinstance(source, SpamModel):
        source = to_epsilon(qubit_restriction(source))
    elif isinstance(source, SpamEstimate):
        source = source.eps_hat
    if source.shape.d != 2:
        raise ValueError("SPAM factors need qubit-subspace parameters (d = 2)")
    return source


def spam_eigenvalue_functionals(shape: SystemShape):
    """Linear maps eps -> lambda^S_Omega - 1 and eps -> lambda^M_Omega - 1.

    Returns two dicts keyed by support mask.  For two-level parameters both
    maps are exact (the ideal entries follow from normalization):
    lambda^S_Omega = sum_j (-1)^{Omega.j} c_j and
    lambda^M_Omega = 2^-n sum_{l,k} (-1)^{Omega.l + Omega.k} s_{l,k}.
    """
    if shape.d != 2:
        raise ValueError("SPAM eigenvalues are defined on the qubit subspace")
    lay = layout(shape)
    n = shape.n
    S, M = {}, {}
    for mask in range(1, 2**n):
        f = np.zeros(shape.num_params)
        for j in lay.s_index:
            if _parity(mask & int(j)):
                f[lay.s_position(int(j))] = -2.0
        S[mask] = f
        g = np.zeros(shape.num_params)
        for l, k in zip(lay.m_rows, lay.m_cols):
            if _parity(mask & (int(l) ^ int(k))):
                g[lay.m_position(int(l), int(k))] = -2.0 / 2**n
        M[mask] = g
    return S, M


def spam_eigenvalues(source) -> tuple[dict[int, float], dict[int, float]]:
    """lambda^S and lambda^M for every support mask (mask 0 -> 1)."""
    eps = _qubit_eps(source)
    fs, fm = spam_eigenvalue_functionals(eps.shape)
    lam_s = {0: 1.0, **{m: 1.0 + float(f @ eps.values) for m, f in fs.items()}}
    lam_m = {0: 1.0, **{m: 1.0 + float(f @ eps.values) for m, f in fm.items()}}
    return lam_s, lam_m


def spam_pauli_factor(source, a, ga=None) -> float:
    """lambda^S_a * lambda^M_{G(a)} for a qubit SPAM model or anything holding its parameters."""
    a = _as_label(a)
    ga = cz_action(a)[0] if ga is None else _as_label(ga)
    lam_s, lam_m = spam_eigenvalues(source)
    return lam_s[a.support] * lam_m[ga.support]


@dataclass(frozen=True)
class FactorInterval:
    value: float
    lower: float
    upper: float
    stderr: float


def spam_factor_interval(est: SpamEstimate, a, ga=None) -> FactorInterval:
    """Range of lambda^S_a lambda^M_{G(a)} over the estimate's gauge ambiguity.

    Every gauge-equivalent point is the representative shifted by +u_P on
    preparation and -u_P on measurement parameters of pattern P, with each
    u_P confined to a range read off the reported intervals.  The factor is
    evaluated at every corner of that box.
    """
    a = _as_label(a)
    ga = cz_action(a)[0] if ga is None else _as_label(ga)
    eps = _qubit_eps(est)
    shape = eps.shape
    lay = layout(shape)
    rep = eps.values
    pats = [subset_mask(shape.n, o) for o in subsets(shape.n)]
    ranges = []
    for P in pats:
        e = int(np.flatnonzero((lay.classes == P) & (lay.signs > 0))[0])
        ranges.append((est.lower[e] - rep[e], est.upper[e] - rep[e]))
    fs, fm = spam_eigenvalue_functionals(shape)

    def factor(vals):
        ls = 1.0 + fs[a.support] @ vals if a.support else 1.0
        lm = 1.0 + fm[ga.support] @ vals if ga.support else 1.0
        return float(ls * lm)

    per_pattern = np.zeros(2**shape.n)
    corners = []
    for u in itertools.product(*ranges):
        per_pattern[pats] = u
        corners.append(factor(rep + lay.signs * per_pattern[lay.classes]))
    # first-order gradient for error propagation, parameters treated as independent
    grad = np.zeros(shape.num_params)
    if a.support:
        grad += fs[a.support]
    if ga.support:
        grad += fm[ga.support]
    se = float(np.sqrt(np.sum((grad * est.stderr) ** 2)))
    return FactorInterval(factor(rep), min(corners), max(corners), se)


# --- cycle benchmarking -------------------------------------------------------

@dataclass(frozen=True)
class CBTruth:
    """Ground truth for simulated cycle benchmarking of one Clifford cycle."""

    channel: PauliChannel
    spam_prep: Mapping[int, float]  # support mask -> lambda^S
    spam_meas: Mapping[int, float]  # support mask -> lambda^M
    action: CliffordAction = CZ

    @classmethod
    def from_spam(cls, channel: PauliChannel, spam, action: CliffordAction = CZ) -> "CBTruth":
        lam_s, lam_m = spam_eigenvalues(spam)
        return cls(channel, lam_s, lam_m, action)

    def decay_value(self, a, t: int) -> tuple[float, int]:
        """Sign-folded F_a(t) and the sign of the measured Pauli P_{G(a)}."""
        a = _as_label(a)
        ga, sign = self.action(a)
        la, lga = self.channel[a], self.channel[ga]
        f = self.spam_prep[a.support] * self.spam_meas[ga.support] * la * (la * lga) ** t
        return f, sign


@dataclass(frozen=True)
class DecayRecord:
    label: str
    depths: tuple[int, ...]
    F: tuple[float, ...]
    stderr: tuple[float, ...]
    shots: int | None
    sign: int = 1

    def __post_init__(self):
        depths = tuple(int(t) for t in self.depths)
        if any(b <= a for a, b in zip(depths, depths[1:])):
            raise ValueError("depths must be strictly increasing")
        if not (len(depths) == len(self.F) == len(self.stderr)):
            raise ValueError("depths, F and stderr lengths differ")
        object.__setattr__(self, "depths", depths)
        object.__setattr__(self, "F", tuple(float(x) for x in self.F))
        object.__setattr__(self, "stderr", tuple(float(x) for x in self.stderr))
        for f, se in zip(self.F, self.stderr):
            if abs(f) > 1 + 5 * se + 1e-12:
                raise ValueError(f"|F| = {abs(f):.4g} exceeds 1 by more than 5 stderr")

    def to_json(self) -> dict:
        return {
            "label": self.label,
            "depths": list(self.depths),
            "F": list(self.F),
            "stderr": list(self.stderr),
            "shots": self.shots,
            "sign": self.sign,
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "DecayRecord":
        return cls(data["label"], data["depths"], data["F"], data["stderr"],
                   data.get("shots"), int(data.get("sign", 1)))


def simulate_cb(truth: CBTruth, a, depths: Sequence[int], shots: int | None, seed) -> DecayRecord:
    """Sampled decay of <G(P_a)> after 2t+1 noisy cycles.

    The raw +-1 observable is P_{G(a)}; its expectation is ``sign * F_a(t)``.
    Each depth draws ``shots`` binomial outcomes and the sign is folded back
    before the record is returned.  ``shots=None`` gives exact values.
    """
    a = _as_label(a)
    if a.is_identity:
        raise ValueError("the identity Pauli has no decay")
    rng = np.random.default_rng(seed)
    F, se = [], []
    sign = 1
    for t in depths:
        f, sign = truth.decay_value(a, t)
        raw = sign * f
        if shots is None:
            F.append(f)
            se.append(0.0)
            continue
        k = rng.binomial(shots, (1.0 + raw) / 2.0)
        est = sign * (2.0 * k / shots - 1.0)
        F.append(est)
        se.append(math.sqrt(max(1.0 - est**2, 1.0 / shots) / shots))
    return DecayRecord(str(a), tuple(depths), tuple(F), tuple(se), shots, sign)


@dataclass(frozen=True)
class ExpFit:
    intercept: float
    rate: float
    covariance: np.ndarray  # of (intercept, rate)

    @property
    def intercept_stderr(self) -> float:
        return float(np.sqrt(self.covariance[0, 0]))

    @property
    def rate_stderr(self) -> float:
        return float(np.sqrt(self.covariance[1, 1]))


def fit_exponential(record: DecayRecord) -> ExpFit:
    """Weighted log-linear fit of F(t) = intercept * rate**t.

    Points with F <= 0 are dropped; fewer than three remaining points raise
    NonPositiveData.
    """
    t = np.array(record.depths, dtype=float)
    F = np.array(record.F)
    se = np.array(record.stderr)
    keep = F > 0
    if keep.sum() < 3:
        raise NonPositiveData(f"{record.label}: fewer than 3 positive points")
    t, F, se = t[keep], F[keep], se[keep]
    y = np.log(F)
    var = (se / F) ** 2
    if np.all(var == 0):
        w = np.ones_like(y)
        scale = 0.0
    else:
        floor = var[var > 0].min() if np.any(var > 0) else 1.0
        w = 1.0 / np.maximum(var, floor)
        scale = 1.0
    X = np.column_stack([np.ones_like(t), t])
    XtW = X.T * w
    cov_log = np.linalg.inv(XtW @ X)
    beta = cov_log @ XtW @ y
    intercept, rate = math.exp(beta[0]), math.exp(beta[1])
    J = np.diag([intercept, rate])
    return ExpFit(intercept, rate, scale * J @ cov_log @ J)


# --- SPAM-corrected eigenvalues ----------------------------------------------

@dataclass(frozen=True)
class EigenvalueBound:
    label: str
    identifiable: bool
    estimate: float
    lower: float
    upper: float
    stderr: float
    image: str = ""
    sign: int = 1

    def __post_init__(self):
        if self.lower > self.upper:
            raise ValueError("empty eigenvalue bound")
        if self.identifiable and self.width > 4 * self.stderr + 1e-15:
            raise ValueError("identifiable bound wider than 4 stderr")

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def to_json(self) -> dict:
        return {
            "label": self.label,
            "image": self.image,
            "sign": self.sign,
            "identifiable": self.identifiable,
            "estimate": self.estimate,
            "lower": self.lower,
            "upper": self.upper,
            "stderr": self.stderr,
        }


def corrected_eigenvalue(record: DecayRecord, spam: SpamEstimate, a=None,
                         action: CliffordAction = CZ, fit: ExpFit | None = None,
                         nsigma: float = 2.0) -> EigenvalueBound:
    """Divide the decay intercept by the estimated SPAM factor.

    Identifiable labels give a point estimate +- ``nsigma`` stderr.
    Otherwise the SPAM factor ranges over its gauge interval and the bound
    is [intercept / upper, intercept / lower], padded by ``nsigma`` stderr.
    """
    a = _as_label(a if a is not None else record.label)
    ga, sign = action(a)
    fit = fit or fit_exponential(record)
    fac = spam_factor_interval(spam, a, ga)
    if fac.lower <= 0.5:
        raise DivisionUnstable(f"{a}: SPAM factor interval reaches {fac.lower:.3g}")
    ident = ga.support == a.support
    lam = fit.intercept / fac.value
    se = math.sqrt((fit.intercept_stderr / fac.value) ** 2 + (lam * fac.stderr / fac.value) ** 2)
    pad = nsigma * se
    if ident:
        lo, hi = lam - pad, lam + pad
    else:
        lo = fit.intercept / fac.upper - pad
        hi = fit.intercept / fac.lower + pad
    return EigenvalueBound(str(a), ident, lam, lo, hi, se, str(ga), sign)


@dataclass(frozen=True)
class CERResult:
    pair: tuple[str, str]
    value: float
    stderr: float
    spam_corrected: float | None = None
    spam_corrected_stderr: float | None = None

    def to_json(self) -> dict:
        return {
            "pair": list(self.pair),
            "cer": self.value,
            "cer_stderr": self.stderr,
            "spam_corrected": self.spam_corrected,
            "spam_corrected_stderr": self.spam_corrected_stderr,
        }


def cer_combination(record_a: DecayRecord, record_ga: DecayRecord,
                    bound_a: EigenvalueBound | None = None,
                    bound_ga: EigenvalueBound | None = None) -> CERResult:
    """Decay-only estimate of sqrt(lambda_a lambda_G(a)).

    Both records decay at the same rate; their rates are combined by inverse
    variance.  With bounds, the geometric mean of the SPAM-corrected point
    estimates is reported alongside.
    """
    fits = [fit_exponential(record_a)]
    if record_ga is not record_a and record_ga.label != record_a.label:
        fits.append(fit_exponential(record_ga))
    rates = np.array([f.rate for f in fits])
    var = np.array([f.rate_stderr**2 for f in fits])
    if np.all(var > 0):
        w = 1 / var
        rate = float(w @ rates / w.sum())
        rate_var = float(1 / w.sum())
    else:
        rate = float(rates.mean())
        rate_var = 0.0
    value = math.sqrt(rate)
    se = math.sqrt(rate_var) / (2 * value)
    gm = gm_se = None
    if bound_a is not None and bound_ga is not None:
        gm = math.sqrt(bound_a.estimate * bound_ga.estimate)
        if bound_a.label == bound_ga.label:
            gm_se = bound_a.stderr
        else:
            gm_se = 0.5 * gm * math.hypot(bound_a.stderr / bound_a.estimate,
                                          bound_ga.stderr / bound_ga.estimate)
    return CERResult((record_a.label, record_ga.label), value, se, gm, gm_se)


@dataclass(frozen=True)
class FidelityInterval:
    value: float
    lower: float
    upper: float


def average_fidelity(bounds: Sequence[EigenvalueBound], n: int = 2) -> FidelityInterval:
    """Mean Pauli fidelity over all 4^n labels (identity counted as 1)."""
    by_label = {b.label: b for b in bounds}
    needed = {str(a) for a in all_labels(n, include_identity=False)}
    missing = needed - set(by_label)
    if missing:
        raise IncompleteSet(f"missing bounds for {sorted(missing)}")
    bs = [by_label[k] for k in sorted(needed)]
    N = 4**n
    return FidelityInterval(
        (1 + sum(b.estimate for b in bs)) / N,
        (1 + sum(b.lower for b in bs)) / N,
        (1 + sum(b.upper for b in bs)) / N,
    )


def save_decay(record: DecayRecord, path) -> None:
    with open(path, "w") as fh:
        json.dump(record.to_json(), fh, indent=1)


def load_decay(path) -> DecayRecord:
    with open(path) as fh:
        return DecayRecord.from_json(json.load(fh))
