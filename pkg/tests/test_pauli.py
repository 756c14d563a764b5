import dataclasses
import itertools

import numpy as np
import pytest

import oracles
from conftest import eps_from_dict
from quditspam.design import build_design, proposition_design
from quditspam.estimator import estimate, estimate_from_distributions
from quditspam.exceptions import DivisionUnstable, IncompleteSet, NonPositiveData
from quditspam.model import SpamModel, SystemShape, from_epsilon, random_model
from quditspam.pauli import (
    CZ,
    CBTruth,
    DecayRecord,
    EigenvalueBound,
    PauliChannel,
    PauliLabel,
    all_labels,
    average_fidelity,
    cer_combination,
    corrected_eigenvalue,
    cz_action,
    fit_exponential,
    is_identifiable,
    load_decay,
    random_pauli_channel,
    save_decay,
    simulate_cb,
    spam_eigenvalues,
    spam_pauli_factor,
)
from quditspam.simulator import exact_records, run_design

NONID = [str(a) for a in all_labels(2, include_identity=False)]


def _infinite(model):
    circuits = proposition_design(model.shape)
    return estimate_from_distributions(exact_records(model, circuits), build_design(circuits))


def _oracle_supports(lam):
    # mask with qubit 1 as MSB -> frozenset of 0-based positions
    return {frozenset(i for i in range(2) if m >> (1 - i) & 1): v for m, v in lam.items()}


# --- labels and the CZ action ----------------------------------------------------------

def test_label_roundtrip():
    for s in ("II", "XY", "ZX", "YY"):
        assert str(PauliLabel.from_string(s)) == s
    assert PauliLabel.from_string("XI").support_set() == {1}
    with pytest.raises(ValueError):
        PauliLabel.from_string("XQ")


@pytest.mark.parametrize("a,image,sign", [("ZI", "ZI", 1), ("XI", "XZ", 1), ("YX", "XY", -1),
                                          ("XX", "YY", 1)])
def test_cz_examples(a, image, sign):
    lab, s = cz_action(a)
    assert (str(lab), s) == (image, sign)


@pytest.mark.parametrize("a", oracles.LABELS2)
def test_cz_matches_brute_force(a):
    lab, s = cz_action(a)
    assert (str(lab), s) == oracles.conjugate(a)


def test_cz_involution():
    for a in all_labels(2):
        assert cz_action(cz_action(a)[0])[0] == a


def test_identifiable_partition():
    expected = {a for a in NONID
                if oracles.support(oracles.conjugate(a)[0]) == oracles.support(a)}
    got = {a for a in NONID if is_identifiable(a)}
    assert got == expected == {"ZI", "IZ", "ZZ", "XX", "YY", "XY", "YX"}
    assert is_identifiable("ZI") and not is_identifiable("XI") and is_identifiable("XX")


# --- channels -----------------------------------------------------------------------

def test_walsh_duality():
    for seed in range(5):
        ch = random_pauli_channel(2, 0.03, seed)
        back = PauliChannel.from_error_rates(2, ch.error_rates())
        for a in all_labels(2):
            assert back[a] == pytest.approx(ch[a], abs=1e-12)
        assert max(abs(v) for v in ch.eigenvalues.values()) <= 1


def test_channel_rates_sum():
    ch = random_pauli_channel(2, 0.02, 1)
    rates = ch.error_rates()
    assert sum(rates.values()) == pytest.approx(1.0, abs=1e-12)
    assert rates["II"] == pytest.approx(0.98, abs=1e-12)


def test_channel_validation():
    with pytest.raises(IncompleteSet):
        PauliChannel(1, {"I": 1.0, "X": 0.9})
    with pytest.raises(ValueError):
        PauliChannel(1, {"I": 1.0, "X": 0.5, "Y": 0.5, "Z": -0.9})


# --- SPAM eigenvalues -------------------------------------------------------------------

def test_single_qubit_spam_eigenvalues():
    m = from_epsilon(eps_from_dict(SystemShape(1, 2), {"S(1)": 0.01, "M(1,0)": 0.02,
                                                        "M(0,1)": 0.03}))
    lam_s, lam_m = spam_eigenvalues(m)
    assert lam_s[1] == pytest.approx(0.98, abs=1e-15)
    assert lam_m[1] == pytest.approx(0.95, abs=1e-15)


@pytest.mark.parametrize("seed", range(5))
def test_spam_eigenvalues_match_trace_oracle(seed):
    m = random_model(SystemShape(2, 2), 0.02, seed)
    want_s, want_m = oracles.spam_eigs(m.prep, m.confusion, 2)
    lam_s, lam_m = spam_eigenvalues(m)
    for sup, v in _oracle_supports(lam_s).items():
        assert v == pytest.approx(want_s[sup], abs=1e-14)
    for sup, v in _oracle_supports(lam_m).items():
        assert v == pytest.approx(want_m[sup], abs=1e-14)


def test_qutrit_model_uses_qubit_block():
    m = random_model(SystemShape(2, 3), 0.01, 0)
    from quditspam.model import qubit_restriction

    assert spam_eigenvalues(m) == spam_eigenvalues(qubit_restriction(m))


def test_noiseless_factor_is_one():
    ideal = SpamModel.ideal(SystemShape(2, 2))
    for a in NONID:
        assert spam_pauli_factor(ideal, a) == 1.0


# --- decays -----------------------------------------------------------------------------

def _truth(la=0.99, lga=0.98):
    eig = {a: 0.99 for a in oracles.LABELS2}
    eig["II"] = 1.0
    eig["XI"], eig["XZ"] = la, lga
    ch = PauliChannel(2, eig)
    return CBTruth(ch, {0: 1.0, 1: 0.98, 2: 0.98, 3: 0.98}, {0: 1.0, 1: 0.95, 2: 0.95, 3: 0.95})


def test_decay_example_value():
    f, sign = _truth().decay_value("XI", 0)
    assert sign == 1
    assert f == pytest.approx(0.921690, abs=1e-12)


def test_decay_ratio():
    rec = simulate_cb(_truth(), "XI", range(6), None, 0)
    ratios = np.array(rec.F[1:]) / np.array(rec.F[:-1])
    np.testing.assert_allclose(ratios, 0.9702, atol=1e-12)


def test_all_ones_decay_is_flat():
    truth = CBTruth.from_spam(PauliChannel.identity(2), SpamModel.ideal(SystemShape(2, 2)))
    for a in NONID:
        assert simulate_cb(truth, a, range(4), None, 0).F == (1.0,) * 4


@pytest.mark.parametrize("seed", range(3))
def test_decay_matches_transfer_matrix_oracle(seed):
    ch = random_pauli_channel(2, 0.05, seed)
    m = random_model(SystemShape(2, 2), 0.03, seed)
    truth = CBTruth.from_spam(ch, m)
    lam_s, lam_m = (_oracle_supports(x) for x in spam_eigenvalues(m))
    eigs = {a: ch[a] for a in oracles.LABELS2}
    for a, t in itertools.product(NONID, range(5)):
        f, _ = truth.decay_value(a, t)
        assert f == pytest.approx(oracles.cb_decay(eigs, lam_s, lam_m, a, t), abs=1e-10)


def test_simulate_deterministic():
    truth = _truth()
    assert simulate_cb(truth, "XI", range(5), 1000, 3) == simulate_cb(truth, "XI", range(5), 1000, 3)
    with pytest.raises(ValueError):
        simulate_cb(truth, "II", range(3), 100, 0)


def test_negative_sign_label_folded():
    truth = CBTruth.from_spam(random_pauli_channel(2, 0.01, 0), SpamModel.ideal(SystemShape(2, 2)))
    rec = simulate_cb(truth, "YX", range(4), 10**5, 1)
    assert rec.sign == -1
    assert min(rec.F) > 0.9


# --- fitting ------------------------------------------------------------------------------

def test_fit_exact():
    truth = _truth()
    fit = fit_exponential(simulate_cb(truth, "XI", range(9), None, 0))
    assert fit.intercept == pytest.approx(0.95 * 0.98 * 0.99, abs=1e-10)
    assert fit.rate == pytest.approx(0.99 * 0.98, abs=1e-10)


def test_fit_constant():
    rec = DecayRecord("XI", (0, 1, 2), (1.0, 1.0, 1.0), (0.0, 0.0, 0.0), None)
    fit = fit_exponential(rec)
    assert fit.intercept == pytest.approx(1.0, abs=1e-14)
    assert fit.rate == pytest.approx(1.0, abs=1e-14)


def test_fit_non_positive():
    rec = DecayRecord("XI", (0, 1, 2, 3), (0.5, 0.1, -0.01, 0.0), (0.01,) * 4, 100)
    with pytest.raises(NonPositiveData):
        fit_exponential(rec)


def test_fit_drops_non_positive_points():
    rec = DecayRecord("XI", (0, 1, 2, 3), (0.8, 0.4, 0.2, -0.01), (0.01,) * 4, 100)
    assert fit_exponential(rec).rate == pytest.approx(0.5, rel=1e-12)


def test_rate_stderr_at_realistic_shots():
    truth = CBTruth.from_spam(random_pauli_channel(2, 0.01, 2), random_model(SystemShape(2, 2),
                                                                            0.01, 2))
    for a in NONID:
        assert fit_exponential(simulate_cb(truth, a, range(9), 10**5, 4)).rate_stderr <= 2e-3


def test_decay_record_validation():
    with pytest.raises(ValueError):
        DecayRecord("XI", (0, 2, 1), (1, 1, 1), (0, 0, 0), None)
    with pytest.raises(ValueError):
        DecayRecord("XI", (0, 1), (1, 1, 1), (0, 0, 0), None)
    with pytest.raises(ValueError):
        DecayRecord("XI", (0, 1), (1.2, 1.0), (0.01, 0.01), 100)


def test_decay_json_roundtrip(tmp_path):
    rec = simulate_cb(_truth(), "YX", range(4), 1000, 0)
    data = rec.to_json()
    assert {"label", "depths", "F", "stderr", "shots"} <= set(data)
    save_decay(rec, tmp_path / "r.json")
    assert load_decay(tmp_path / "r.json") == rec


# --- corrected eigenvalues ------------------------------------------------------------------

def test_corrected_noiseless_spam_equals_intercept():
    spam = _infinite(SpamModel.ideal(SystemShape(2, 2)))
    truth = CBTruth.from_spam(random_pauli_channel(2, 0.01, 0), SpamModel.ideal(SystemShape(2, 2)))
    for a in NONID:
        rec = simulate_cb(truth, a, range(9), 10**5, 1)
        b = corrected_eigenvalue(rec, spam)
        assert b.estimate == fit_exponential(rec).intercept


def test_division_unstable():
    shape = SystemShape(2, 2)
    m = from_epsilon(eps_from_dict(shape, {"S(01)": 0.15, "S(10)": 0.15, "S(11)": 0.15}))
    spam = _infinite(m)
    rec = simulate_cb(CBTruth.from_spam(PauliChannel.identity(2), m), "ZI", range(4), None, 0)
    with pytest.raises(DivisionUnstable):
        corrected_eigenvalue(rec, spam)


def test_bound_identifiable_width_check():
    with pytest.raises(ValueError):
        EigenvalueBound("ZI", True, 0.99, 0.9, 1.0, 0.001)


def test_monotone_enhancement():
    m = random_model(SystemShape(2, 2), 0.01, 5)
    spam = estimate(run_design(m, proposition_design(m.shape), 10**5, 5))
    rep = spam.eps_hat.values
    truth = CBTruth.from_spam(random_pauli_channel(2, 0.01, 5), m)
    for a in NONID:
        rec = simulate_cb(truth, a, range(9), 10**5, 2)
        prev = corrected_eigenvalue(rec, spam).width
        for shrink in (0.7, 0.4, 0.1, 0.0):
            narrower = dataclasses.replace(spam, lower=rep + shrink * (spam.lower - rep),
                                           upper=rep + shrink * (spam.upper - rep))
            w = corrected_eigenvalue(rec, narrower).width
            assert w <= prev + 1e-15
            prev = w


def test_identifiable_coverage_frequency():
    # each identifiable label should sit within 2 stderr about 95% of the time
    hits = total = 0
    for seed in range(12):
        m = random_model(SystemShape(2, 2), 0.01, 100 + seed)
        spam = estimate(run_design(m, proposition_design(m.shape), 10**6, seed))
        ch = random_pauli_channel(2, 0.01, seed)
        truth = CBTruth.from_spam(ch, m)
        for i, a in enumerate(a for a in NONID if is_identifiable(a)):
            b = corrected_eigenvalue(simulate_cb(truth, a, range(9), 10**5, (seed, i)), spam)
            hits += b.lower <= ch[a] <= b.upper
            total += 1
    assert hits / total >= 0.9


# --- combinations -----------------------------------------------------------------------------

def test_cer_example():
    truth = _truth()
    ra = simulate_cb(truth, "XI", range(9), None, 0)
    rga = simulate_cb(truth, "XZ", range(9), None, 0)
    assert cer_combination(ra, rga).value == pytest.approx(np.sqrt(0.99 * 0.98), abs=1e-12)
    assert cer_combination(ra, rga).value == pytest.approx(0.984987, abs=1e-6)


def test_cer_all_ones():
    truth = CBTruth.from_spam(PauliChannel.identity(2), SpamModel.ideal(SystemShape(2, 2)))
    rec = simulate_cb(truth, "XI", range(5), None, 0)
    assert cer_combination(rec, simulate_cb(truth, "XZ", range(5), None, 0)).value == 1.0


def _bounds(value):
    return [EigenvalueBound(a, False, value, value - 0.001, value + 0.001, 0.0005) for a in NONID]


def test_average_fidelity():
    assert average_fidelity(_bounds(1.0)).value == pytest.approx(1.0)
    f = average_fidelity(_bounds(0.99))
    assert f.value == pytest.approx(0.990625, abs=1e-12)
    assert f.lower == pytest.approx(0.990625 - 15 * 0.001 / 16)


def test_average_fidelity_incomplete():
    with pytest.raises(IncompleteSet):
        average_fidelity(_bounds(0.99)[:-1])


def test_cz_action_table_is_pluggable():
    assert CZ.name == "CZ"
    assert CZ("ZZ") == (PauliLabel.from_string("ZZ"), 1)
