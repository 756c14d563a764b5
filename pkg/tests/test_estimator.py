import numpy as np
import pytest

from conftest import eps_from_dict, qutrit_regime_model
from quditspam.design import build_design, proposition_design
from quditspam.estimator import (
    SpamEstimate,
    align_to,
    bootstrap_errors,
    estimate,
    estimate_from_distributions,
    exact_rows,
    qubit_subspace_summary,
)
from quditspam.exceptions import EmptyCounts, RankDeficientDesign, WrongDimension
from quditspam.gauge import learnable_projector
from quditspam.model import (
    SpamModel,
    SystemShape,
    from_epsilon,
    herald,
    qubit_restriction,
    random_model,
    to_epsilon,
)
from quditspam.simulator import CountsRecord, exact_records, run_design


def _infinite(model, **kw):
    circuits = proposition_design(model.shape)
    return estimate_from_distributions(exact_records(model, circuits), build_design(circuits), **kw)


def _aligned_error(est, model):
    truth = to_epsilon(model).values
    return np.abs(align_to(est.eps_hat.values, truth, model.shape) - truth).max()


@pytest.mark.parametrize("refine", [True, False])
def test_infinite_shot_single_qubit(refine):
    for seed in range(10):
        m = random_model(SystemShape(1, 2), 0.01, seed)
        est = _infinite(m, refine=refine)
        assert _aligned_error(est, m) <= 5 * (0.01 * 2) ** 2


@pytest.mark.parametrize("dn", [(3, 1), (2, 2), (3, 2)])
def test_refined_point_fits_exact_model(dn):
    d, n = dn
    m = random_model(SystemShape(n, d), 0.01, 4)
    circuits = proposition_design(m.shape)
    dm = build_design(circuits)
    est = estimate_from_distributions(exact_records(m, circuits), dm)
    y = np.array([exact_records(m, circuits)[ci][l] for ci, l in dm.rows])
    assert np.abs(exact_rows(est.eps_hat.values, dm) - y).max() <= 1e-13


def test_refinement_beats_first_order():
    # gauge orbits are curved beyond first order, so compare fitted probabilities
    m = random_model(SystemShape(2, 3), 0.01, 2)
    circuits = proposition_design(m.shape)
    dm = build_design(circuits)
    dists = exact_records(m, circuits)
    y = np.array([dists[ci][l] for ci, l in dm.rows])

    def resid(est):
        return np.abs(exact_rows(est.eps_hat.values, dm) - y).max()

    first = resid(estimate_from_distributions(dists, dm, refine=False))
    assert first > 1e-6
    assert resid(estimate_from_distributions(dists, dm)) < 1e-6 * first


def test_noiseless_counts_give_zero():
    shape = SystemShape(1, 3)
    recs = run_design(SpamModel.ideal(shape), proposition_design(shape), 1000, 0)
    est = estimate(recs)
    assert np.all(np.abs(est.eps_hat.values) <= 3 * est.stderr)
    assert not est.lower.any() and not est.upper.any()


def test_regime_truth_inside_intervals():
    m = qutrit_regime_model()
    est = estimate(run_design(m, proposition_design(m.shape), 10**5, 2024))
    truth = to_epsilon(m).values
    assert np.all(truth >= est.lower - 2 * est.stderr)
    assert np.all(truth <= est.upper + 2 * est.stderr)


def test_bootstrap_close_to_analytic():
    m = from_epsilon(eps_from_dict(SystemShape(1, 2),
                                   {"S(1)": 0.01, "M(1,0)": 0.02, "M(0,1)": 0.03}))
    recs = run_design(m, proposition_design(m.shape), 10**4, 1)
    analytic = estimate(recs)
    boot = bootstrap_errors(recs, None, "min_sp_error", 200, 5)
    for lab, se in analytic.stderr_map.items():
        assert boot[lab] == pytest.approx(se, rel=0.3)


def test_bootstrap_deterministic():
    m = random_model(SystemShape(1, 2), 0.02, 0)
    recs = run_design(m, proposition_design(m.shape), 10**4, 1)
    assert bootstrap_errors(recs, None, "min_sp_error", 60, 9) == \
        bootstrap_errors(recs, None, "min_sp_error", 60, 9)


def test_bootstrap_requires_enough_replicas():
    m = random_model(SystemShape(1, 2), 0.02, 0)
    recs = run_design(m, proposition_design(m.shape), 100, 1)
    with pytest.raises(ValueError):
        estimate(recs, bootstrap=10)


def test_stderr_vanishes_with_huge_shots():
    m = random_model(SystemShape(1, 2), 0.01, 3)
    circuits = proposition_design(m.shape)
    N = 10**14
    recs = []
    for c, p in zip(circuits, exact_records(m, circuits)):
        counts = np.floor(p * N).astype(np.int64)
        counts[np.argmax(counts)] += N - counts.sum()
        recs.append(CountsRecord(c, N, counts))
    assert estimate(recs).stderr.max() < 1e-6


def test_qubit_summary_wrong_dimension():
    m = random_model(SystemShape(1, 2), 0.01, 0)
    with pytest.raises(WrongDimension):
        qubit_subspace_summary(_infinite(m))


def test_qubit_summary_clean_level_two():
    m = from_epsilon(eps_from_dict(SystemShape(1, 3), {
        "S(1)": 0.01, "S(2)": 0.0, "M(0,1)": 0.02, "M(1,0)": 0.03, "M(0,2)": 0.004,
        "M(1,2)": 0.005, "M(2,0)": 0.006, "M(2,1)": 0.007}))
    q = qubit_subspace_summary(_infinite(m))
    s1 = q.intervals["S(1)"]
    assert s1.width <= 0.004 + 1e-12


def test_qubit_summary_regime_enhancement():
    m = qutrit_regime_model()
    q3 = qubit_subspace_summary(_infinite(m))
    q2 = _infinite(qubit_restriction(m))
    # first-order values; the exact model shifts them at second order
    np.testing.assert_allclose(q3.widths, 2.1e-3, rtol=2e-2)
    np.testing.assert_allclose(q2.widths, 3.0e-2, rtol=2e-2)
    assert q2.widths.min() >= 10 * q3.widths.max()


def test_heralded_summary_has_smaller_prep_error():
    m = qutrit_regime_model()
    circuits = proposition_design(m.shape)
    plain = qubit_subspace_summary(estimate(run_design(m, circuits, 10**5, 1)))
    held = qubit_subspace_summary(estimate(run_design(m, circuits, 10**5, 1, heralded=True)))
    # compare the gauge-invariant lower edges of the preparation intervals
    truth_plain = to_epsilon(qubit_restriction(m)).values[0]
    truth_held = to_epsilon(qubit_restriction(herald(m))).values[0]
    assert truth_held < truth_plain
    assert held.feasible.values[0] <= plain.feasible.values[0]


def test_conventions_agree_on_learnable_functionals():
    m = random_model(SystemShape(2, 3), 0.01, 6)
    circuits = proposition_design(m.shape)
    dm = build_design(circuits)
    recs = run_design(m, circuits, 10**5, 3)
    ests = [estimate(recs, dm, g) for g in ("min_sp_error", "zero_residual_gauge", "fixed_values")]
    base = dm.matrix @ ests[0].eps_hat.values
    se = np.sqrt((dm.matrix**2) @ ests[0].stderr**2)
    for other in ests[1:]:
        assert np.all(np.abs(dm.matrix @ other.eps_hat.values - base) <= 3 * se + 1e-12)


def test_fixed_values_convention_sets_pattern_preparations():
    m = random_model(SystemShape(2, 2), 0.01, 1)
    est = _infinite(m, gauge="fixed_values", fixed_values=[0.001, 0.002, 0.003])
    vals = dict(zip(est.labels, est.eps_hat.values))
    # subsets (1,), (2,), (1,2) -> preparation labels 10, 01, 11
    assert vals["S(10)"] == pytest.approx(0.001, abs=1e-15)
    assert vals["S(01)"] == pytest.approx(0.002, abs=1e-15)
    assert vals["S(11)"] == pytest.approx(0.003, abs=1e-15)


def test_min_sp_error_representative_feasible():
    for seed in range(5):
        m = random_model(SystemShape(2, 3), 0.01, seed)
        est = estimate(run_design(m, proposition_design(m.shape), 10**5, seed))
        assert est.eps_hat.values.min() >= -est.clip - 1e-10
        np.testing.assert_array_equal(est.feasible.values, np.clip(est.eps_hat.values, 0, None))


def test_error_scales_as_inverse_root_shots():
    m = random_model(SystemShape(1, 3), 0.01, 3)
    P = learnable_projector(m.shape)
    truth = to_epsilon(m).values
    circuits = proposition_design(m.shape)

    def rms(shots):
        errs = [P @ (estimate(run_design(m, circuits, shots, s)).eps_hat.values - truth)
                for s in range(40)]
        return np.sqrt(np.mean(np.square(errs)))

    ratio = rms(10**4 // 4) / rms(10**4)
    assert 1.6 <= ratio <= 2.5


def test_rank_deficient_design_rejected():
    m = random_model(SystemShape(1, 3), 0.01, 0)
    recs = run_design(m, proposition_design(m.shape)[:3], 100, 0)
    with pytest.raises(RankDeficientDesign):
        estimate(recs)


def test_empty_counts():
    with pytest.raises(EmptyCounts):
        estimate([])


def test_report_roundtrip():
    m = random_model(SystemShape(1, 3), 0.01, 0)
    est = estimate(run_design(m, proposition_design(m.shape), 1000, 0))
    back = SpamEstimate.from_dict(est.to_dict())
    np.testing.assert_array_equal(back.eps_hat.values, est.eps_hat.values)
    np.testing.assert_array_equal(back.lower, est.lower)
    np.testing.assert_array_equal(back.stderr, est.stderr)
    assert back.to_dict() == est.to_dict()
