"""First-order SPAM estimation with gauge representatives and ambiguity intervals."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .design import DesignMatrix, build_design
from .exceptions import EmptyCounts, RankDeficientDesign, WrongDimension
from .gauge import (
    AmbiguityInterval,
    clip_estimate,
    gauge_box,
    interval_table,
    learnable_projector,
    pattern_shift,
    subset_mask,
    subsets,
)
from .model import EpsilonVector, SystemShape, embed_label, layout, model_arrays
from .simulator import CountsRecord

GAUGE_CONVENTIONS = ("min_sp_error", "zero_residual_gauge", "fixed_values")
FD_STEP = 1e-7
REFINE_MAX_ITER = 50
REFINE_TOL = 1e-15


@dataclass(frozen=True, eq=False)
class SpamEstimate:
    """A gauge representative with per-parameter ambiguity intervals.

    ``eps_hat`` is the representative before clipping; ``feasible`` is its
    non-negative clip, from which the intervals are computed before being
    widened by ``clip``.
    """

    eps_hat: EpsilonVector
    gauge_convention: str
    lower: np.ndarray
    upper: np.ndarray
    stderr: np.ndarray
    feasible: EpsilonVector
    clip: float = 0.0
    metadata: Mapping = field(default_factory=dict)

    def __post_init__(self):
        for name in ("lower", "upper", "stderr"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def shape(self) -> SystemShape:
        return self.eps_hat.shape

    @property
    def labels(self) -> tuple[str, ...]:
        return self.eps_hat.label_strings

    @property
    def intervals(self) -> dict[str, AmbiguityInterval]:
        return {
            lab: AmbiguityInterval(lab, float(lo), float(hi))
            for lab, lo, hi in zip(self.labels, self.lower, self.upper)
        }

    @property
    def stderr_map(self) -> dict[str, float]:
        return dict(zip(self.labels, map(float, self.stderr)))

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    def to_dict(self) -> dict:
        params = [
            {
                "label": lab,
                "representative": float(r),
                "lower": float(lo),
                "upper": float(hi),
                "stderr": float(se),
            }
            for lab, r, lo, hi, se in zip(
                self.labels, self.eps_hat.values, self.lower, self.upper, self.stderr
            )
        ]
        return {
            "n": self.shape.n,
            "d": self.shape.d,
            "gauge": self.gauge_convention,
            "clip": float(self.clip),
            "parameters": params,
            "metadata": dict(self.metadata),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "SpamEstimate":
        shape = SystemShape(int(data["n"]), int(data["d"]))
        lay = layout(shape)
        by_label = {p["label"]: p for p in data["parameters"]}
        rows = [by_label[lab] for lab in lay.label_strings]
        rep = np.array([r["representative"] for r in rows])
        return cls(
            eps_hat=EpsilonVector(shape, rep),
            gauge_convention=data["gauge"],
            lower=[r["lower"] for r in rows],
            upper=[r["upper"] for r in rows],
            stderr=[r["stderr"] for r in rows],
            feasible=EpsilonVector(shape, np.maximum(rep, 0.0)),
            clip=float(data.get("clip", 0.0)),
            metadata=dict(data.get("metadata", {})),
        )


# --- point estimation --------------------------------------------------------

def _row_frequencies(freqs: Sequence[np.ndarray], design: DesignMatrix) -> np.ndarray:
    return np.array([freqs[ci][l] for ci, l in design.rows])


def _row_weights(y: np.ndarray, shots: np.ndarray | None) -> np.ndarray:
    """Inverse binomial variances with frequencies floored at 1/(4N)."""
    if shots is None:
        return np.ones_like(y)
    floor = 1.0 / (4.0 * shots)
    p = np.clip(y, floor, 1.0 - floor)
    return shots / (p * (1.0 - p))


def solve_learnable(design: DesignMatrix, y: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Minimum-norm weighted least squares.

    The design annihilates every gauge direction, so the minimum-norm
    solution already lies in the learnable subspace.
    """
    sw = np.sqrt(weights)
    A = design.matrix * sw[:, None]
    x, *_ = np.linalg.lstsq(A, (y - design.offsets) * sw, rcond=None)
    return x


def _fixed_pattern_positions(shape: SystemShape) -> np.ndarray:
    """Position of the preparation parameter c_P for each pattern P in {0,1}^n."""
    lay = layout(shape)
    out = []
    for omega in subsets(shape.n):
        mask = subset_mask(shape.n, omega)
        digits = [(mask >> (shape.n - i)) & 1 for i in range(1, shape.n + 1)]
        out.append(lay.s_position(shape.index(digits)))
    return np.array(out)


def choose_representative(x: np.ndarray, shape: SystemShape, gauge: str,
                          fixed_values=None) -> np.ndarray:
    """Move the learnable solution ``x`` along the gauge orbit.

    min_sp_error
        smallest total preparation error compatible with positivity: each
        pattern's smallest preparation parameter is set to zero.
    zero_residual_gauge
        centre of the positivity box, leaving equal slack on both sides.
    fixed_values
        c_P for every pattern P in {0,1}^n \\ {0} set to ``fixed_values``
        (zeros by default).

    When a pattern has no positive representative (shot noise), the point
    with the smallest violation is used for it.
    """
    lo, hi = gauge_box(x, shape)
    mid = 0.5 * (lo + hi)
    if gauge == "min_sp_error":
        u = np.where(lo <= hi, lo, mid)
    elif gauge == "zero_residual_gauge":
        u = mid
    elif gauge == "fixed_values":
        vals = np.zeros(shape.num_gauges) if fixed_values is None else np.asarray(fixed_values, float)
        if vals.shape != (shape.num_gauges,):
            raise ValueError(f"fixed_values needs {shape.num_gauges} entries")
        u = vals - x[_fixed_pattern_positions(shape)]
    else:
        raise ValueError(f"unknown gauge convention {gauge!r}; use one of {GAUGE_CONVENTIONS}")
    return pattern_shift(x, shape, u)


def exact_rows(values: np.ndarray, design: DesignMatrix) -> np.ndarray:
    """Exact outcome probabilities of every design row at parameter ``values``."""
    prep, conf = model_arrays(design.shape, values)
    dists = [conf[:, c.index_map] @ prep for c in design.circuits]
    return np.array([dists[ci][l] for ci, l in design.rows])


def refined_solution(design: DesignMatrix, y: np.ndarray, weights: np.ndarray, gauge: str,
                     fixed_values=None, iterations: int = REFINE_MAX_ITER) -> np.ndarray:
    """Gauge representative that fits the exact (not first-order) model.

    The exact probabilities differ from the linear rows by terms quadratic in
    the parameters.  Each pass subtracts those terms, evaluated at the
    current representative, from the data and solves the linear system
    again.  The map contracts at rate O(D eps), so a handful of passes
    reach machine precision.  ``iterations=0`` gives the plain first-order
    estimate.
    """
    shape = design.shape
    rep = choose_representative(solve_learnable(design, y, weights), shape, gauge, fixed_values)
    for _ in range(iterations):
        resid = exact_rows(rep, design) - design.predict(rep)
        x = solve_learnable(design, y - resid, weights)
        new = choose_representative(x, shape, gauge, fixed_values)
        step = np.abs(new - rep).max()
        rep = new
        if step < REFINE_TOL:
            break
    return rep


def _point(design: DesignMatrix, y: np.ndarray, weights: np.ndarray, gauge: str, fixed_values,
           refine: bool = True):
    shape = design.shape
    rep = refined_solution(design, y, weights, gauge, fixed_values,
                           REFINE_MAX_ITER if refine else 0)
    feasible, clip = clip_estimate(rep)
    lo, hi = interval_table(EpsilonVector(shape, feasible))
    return rep, feasible, clip, lo - clip, hi + clip


def _check_design(design: DesignMatrix):
    if design.rank != design.expected_rank:
        raise RankDeficientDesign(
            f"design rank {design.rank} < {design.expected_rank} learnable parameters"
        )


def _match_records(records: Sequence[CountsRecord], design: DesignMatrix | None) -> DesignMatrix:
    if not records:
        raise EmptyCounts("no counts records")
    if design is None:
        return build_design([r.circuit for r in records])
    if len(records) != len(design.circuits) or any(
        r.circuit != c for r, c in zip(records, design.circuits)
    ):
        raise ValueError("records do not match the design circuits")
    return design


def estimate(records: Sequence[CountsRecord], design: DesignMatrix | None = None,
             gauge: str = "min_sp_error", *, fixed_values=None, bootstrap: int = 0,
             seed: int = 0, refine: bool = True,
             metadata: Mapping | None = None) -> SpamEstimate:
    """Estimate every learnable parameter from sampled counts.

    Standard errors come from the delta method unless ``bootstrap`` replicas
    are requested.
    """
    design = _match_records(records, design)
    _check_design(design)
    if any(r.shots <= 0 for r in records):
        raise EmptyCounts("a record has no shots")
    freqs = [r.frequencies for r in records]
    shots = np.array([records[ci].shots for ci, _ in design.rows], dtype=float)
    if bootstrap:
        stderr = bootstrap_errors(records, design, gauge, bootstrap, seed,
                                  fixed_values=fixed_values, refine=refine)
        stderr = np.array([stderr[lab] for lab in layout(design.shape).label_strings])
    else:
        stderr = _analytic_errors(freqs, [r.shots for r in records], design, gauge, fixed_values,
                                  refine)
    meta = {
        "model_order": "exact" if refine else "first",
        "shots": int(records[0].shots) if len({r.shots for r in records}) == 1
        else [r.shots for r in records],
        "design": design.design_id,
        "rank": design.rank,
        "stderr_method": f"bootstrap({bootstrap})" if bootstrap else "delta",
    }
    meta.update(metadata or {})
    return _assemble(freqs, shots, design, gauge, fixed_values, stderr, meta, refine)


def estimate_from_distributions(dists: Sequence[np.ndarray], design: DesignMatrix,
                                gauge: str = "min_sp_error", *, fixed_values=None,
                                refine: bool = True,
                                metadata: Mapping | None = None) -> SpamEstimate:
    """Infinite-shot estimate from exact outcome distributions (zero stderr)."""
    _check_design(design)
    if len(dists) != len(design.circuits):
        raise ValueError("one distribution per design circuit required")
    meta = {"shots": None, "design": design.design_id, "rank": design.rank,
            "model_order": "exact" if refine else "first"}
    meta.update(metadata or {})
    stderr = np.zeros(design.shape.num_params)
    return _assemble(dists, None, design, gauge, fixed_values, stderr, meta, refine)


def _assemble(freqs, shots, design, gauge, fixed_values, stderr, meta, refine) -> SpamEstimate:
    y = _row_frequencies(freqs, design)
    w = _row_weights(y, shots)
    rep, feasible, clip, lo, hi = _point(design, y, w, gauge, fixed_values, refine)
    shape = design.shape
    return SpamEstimate(
        eps_hat=EpsilonVector(shape, rep),
        gauge_convention=gauge,
        lower=lo,
        upper=hi,
        stderr=stderr,
        feasible=EpsilonVector(shape, feasible),
        clip=clip,
        metadata=meta,
    )


# --- uncertainty -------------------------------------------------------------

def _stacked(design, y, w, gauge, fixed_values, refine=True) -> np.ndarray:
    rep, _, _, lo, hi = _point(design, y, w, gauge, fixed_values, refine)
    return np.stack([rep, lo, hi])


def _analytic_errors(freqs, shots, design, gauge, fixed_values, refine=True) -> np.ndarray:
    """Delta-method standard errors of representative and interval ends.

    The estimator is piecewise linear in the frequencies; its Jacobian is
    taken by central differences at fixed weights and pushed through the
    multinomial covariance of each circuit's frequencies.
    """
    y = _row_frequencies(freqs, design)
    row_shots = np.array([shots[ci] for ci, _ in design.rows], dtype=float)
    w = _row_weights(y, row_shots)
    cols = []
    for r in range(len(y)):
        e = np.zeros_like(y)
        e[r] = FD_STEP
        plus = _stacked(design, y + e, w, gauge, fixed_values, refine)
        minus = _stacked(design, y - e, w, gauge, fixed_values, refine)
        cols.append((plus - minus) / (2 * FD_STEP))
    J = np.stack(cols, axis=-1)  # (3, params, rows)
    ci = np.array([c for c, _ in design.rows])
    cov = np.where(ci[:, None] == ci[None, :], -np.outer(y, y), 0.0)
    cov[np.diag_indices_from(cov)] = y * (1 - y)
    cov /= row_shots[:, None]
    var = np.einsum("kpr,rs,kps->kp", J, cov, J)
    return np.sqrt(np.clip(var, 0.0, None)).max(axis=0)


def bootstrap_replicas(records: Sequence[CountsRecord], design: DesignMatrix, gauge: str,
                       B: int, seed: int, fixed_values=None, refine: bool = True) -> np.ndarray:
    """(B, 3, params) array of resampled (representative, lower, upper)."""
    if B < 50:
        raise ValueError("bootstrap needs B >= 50 replicas")
    design = _match_records(records, design)
    _check_design(design)
    probs = [r.frequencies for r in records]
    shots = np.array([records[ci].shots for ci, _ in design.rows], dtype=float)
    out = []
    for b in range(B):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(b,)))
        freqs = [rng.multinomial(r.shots, p) / r.shots for r, p in zip(records, probs)]
        y = _row_frequencies(freqs, design)
        out.append(_stacked(design, y, _row_weights(y, shots), gauge, fixed_values, refine))
    return np.array(out)


def bootstrap_errors(records: Sequence[CountsRecord], design: DesignMatrix, gauge: str,
                     B: int, seed: int, fixed_values=None,
                     refine: bool = True) -> dict[str, float]:
    """Parametric bootstrap standard errors.

    Counts are redrawn from the empirical frequencies ``B`` times.  Each
    label's error is the largest spread among its representative and its
    two interval ends.
    """
    design = _match_records(records, design)
    reps = bootstrap_replicas(records, design, gauge, B, seed, fixed_values, refine)
    se = reps.std(axis=0, ddof=1).max(axis=0)
    return dict(zip(layout(design.shape).label_strings, map(float, se)))


# --- qubit-subspace view -----------------------------------------------------

def qubit_positions(shape: SystemShape) -> np.ndarray:
    """Positions in ``shape``'s layout of every qubit-subspace parameter."""
    qshape = SystemShape(shape.n, 2)
    big = layout(shape)
    return np.array([big.positions[embed_label(lab, qshape, shape)]
                     for lab in layout(qshape).labels])


def qubit_subspace_summary(est: SpamEstimate) -> SpamEstimate:
    """Restrict a qudit estimate to labels with every index in {0,1}^n.

    Intervals keep the qudit positivity constraints, so they are never wider
    than what the two-level data alone would give.
    """
    shape = est.shape
    if shape.d < 3:
        raise WrongDimension(f"qubit-subspace summary needs d >= 3, got d={shape.d}")
    qshape = SystemShape(shape.n, 2)
    pos = qubit_positions(shape)
    meta = dict(est.metadata)
    meta["source_shape"] = {"n": shape.n, "d": shape.d}
    return SpamEstimate(
        eps_hat=EpsilonVector(qshape, est.eps_hat.values[pos]),
        gauge_convention=est.gauge_convention,
        lower=est.lower[pos],
        upper=est.upper[pos],
        stderr=est.stderr[pos],
        feasible=EpsilonVector(qshape, est.feasible.values[pos]),
        clip=est.clip,
        metadata=meta,
    )


def align_to(est_values: np.ndarray, truth_values: np.ndarray, shape: SystemShape) -> np.ndarray:
    """Gauge move of ``est_values`` closest (least squares) to ``truth_values``."""
    P = learnable_projector(shape)
    diff = np.asarray(est_values) - np.asarray(truth_values)
    return np.asarray(truth_values) + P @ diff
