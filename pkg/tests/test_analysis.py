import itertools
import math
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from remdm import kernels as K
from remdm.analysis import (
    VerificationReport,
    check_constant_alpha,
    check_ddim,
    check_dfm_mapping,
    check_fb_mapping,
    compute_metrics,
    exact_inconsistency,
    exact_sample_distribution,
    mdlm_nelbo,
    nelbo,
    token_entropy,
    tv_between,
    verify_corrector_equivalences,
    verify_marginals,
)
from remdm.denoiser import ExactBayesDenoiser, JointDistribution, figure1_toy, random_joint
from remdm.exceptions import InvalidParameterError
from remdm.sampler import SamplerConfig
from remdm.schedules import LOG_LINEAR, GateSpec, RemaskPolicy, dfm_beta, sigma_max

import oracles


def three_sequence_joint():
    return JointDistribution.from_sequences(
        [("a", "b", "c"), ("a", "c", "b"), ("b", "b", "a")], [0.5, 0.3, 0.2], vocab=("a", "b", "c")
    )


def brute_force_nelbo(joint, sigmas, T):
    """Direct triple loop over x, t and mask patterns."""
    den = ExactBayesDenoiser(joint)
    total = 0.0
    for x, p in zip(joint.support, joint.probs):
        for i in range(1, T + 1):
            a_t, a_s = 1 - i / T, 1 - (i - 1) / T
            coef = ((1 - sigmas[i - 1]) * a_t - a_s) / (1 - a_t)
            for mask in itertools.product((0, 1), repeat=joint.L):
                q = math.prod((1 - a_t) if m else a_t for m in mask)
                if q == 0:
                    continue
                z = np.where(np.array(mask, bool), K.MASK, x)
                xt = den(z[None])[0]
                ll = sum(math.log(xt[l, x[l]]) for l in range(joint.L) if mask[l])
                total += p * q * coef * ll
    return total


def test_nelbo_zero_sigma_is_mdlm_exactly():
    joint = three_sequence_joint()
    for T in (1, 3, 8):
        a, b = nelbo(joint, LOG_LINEAR, None, T), mdlm_nelbo(joint, LOG_LINEAR, T)
        assert a.total == b.total and a.diffusion == b.diffusion
        np.testing.assert_array_equal(a.per_step, b.per_step)


def test_nelbo_matches_brute_force():
    joint = three_sequence_joint()
    T = 5
    sig = [0.0] + [0.3 * sigma_max(1 - (i - 1) / T, 1 - i / T) for i in range(2, T + 1)]
    res = nelbo(joint, LOG_LINEAR, sig, T)
    assert res.diffusion == pytest.approx(brute_force_nelbo(joint, sig, T), rel=1e-12)
    assert res.per_step.sum() == pytest.approx(res.diffusion, rel=1e-15)
    assert res.reconstruction == 0


def test_deterministic_joint_has_zero_nelbo():
    joint = JointDistribution.from_sequences([("a", "b", "a")], [1.0])
    res = nelbo(joint, LOG_LINEAR, RemaskPolicy("cap", eta_cap=0.5), 6)
    assert res.total == 0


def test_nelbo_monotone_in_sigma():
    joint = three_sequence_joint()
    T = 8
    smax = np.array([sigma_max(1 - (i - 1) / T, 1 - i / T) for i in range(1, T + 1)])
    values = [nelbo(joint, LOG_LINEAR, c * smax, T).diffusion for c in (0, 0.1, 0.2, 0.3, 0.4)]
    assert all(b > a for a, b in zip(values, values[1:]))
    assert values[0] > 0  # the oracle is imperfect on a multi-sequence joint


def test_nelbo_rejects_bad_sigma():
    joint = three_sequence_joint()
    with pytest.raises(InvalidParameterError):
        nelbo(joint, LOG_LINEAR, [0.0, 2.0], 2)
    with pytest.raises(InvalidParameterError):
        nelbo(joint, LOG_LINEAR, RemaskPolicy(gate=GateSpec("loop", n_phase1=1, n_phase2=1)), 4)


@pytest.mark.parametrize("T", [2, 4, 8, 16])
@pytest.mark.parametrize("policy", [
    RemaskPolicy("zero"), RemaskPolicy("cap", eta_cap=0.5), RemaskPolicy("rescale", eta_rescale=0.7),
    RemaskPolicy("fb"), RemaskPolicy("dfm", dfm_A=10),
])
def test_marginals_preserved(T, policy):
    assert verify_marginals(LOG_LINEAR, policy, T).deviation <= 1e-12
    assert verify_marginals(LOG_LINEAR, policy, T, exact=True).deviation == 0


def test_marginal_examples():
    assert verify_marginals(LOG_LINEAR, RemaskPolicy("zero"), 7).deviation == 0
    assert verify_marginals(LOG_LINEAR, None, 7).deviation == 0
    assert verify_marginals(LOG_LINEAR, RemaskPolicy("fb"), 8).passed


def test_marginal_chain_matches_oracle():
    # independent rational chain with a cap of 1/3
    T = 6
    chain = oracles.marginal_chain(T, lambda a_s, a_t: min(F(1, 3), (1 - a_s) / a_t) if a_t else F(0))
    for i, px in chain.items():
        assert px == 1 - F(i, T)


def test_corrector_equivalence_reports():
    reports = verify_corrector_equivalences()
    assert [r.check for r in reports] == [
        "predictor_corrector_compose", "fb_corrector_mapping",
        "dfm_corrector_mapping", "constant_alpha_degeneracy",
    ]
    assert all(r.passed for r in reports)
    assert reports[0].n_cells == 500


def test_fb_clamp_region_exercised_at_T2():
    cells = [("T=2", 1 - (i - 1) / 2, 1 - i / 2, i / 2) for i in (1, 2)]
    rep = check_fb_mapping(cells)
    assert rep.n_clamped >= 1 and rep.n_skipped == 2
    full = check_fb_mapping()
    assert full.n_cells > 0 and full.n_clamped > 0


def test_dfm_kernel_versus_time_t_corrector():
    """The DFM step agrees with the time-t corrector only on the unmasked branch."""
    a_s, a_t, t = 0.75, 0.7, 0.3
    beta = dfm_beta(t, 1.0)
    sig = beta * (a_s - a_t) / a_t
    x = [0.2, 0.8]
    np.testing.assert_allclose(
        K.dfm_step_kernel(0, x, a_s, a_t, beta), K.corrector_kernel_time_t(0, x, a_t, sig), atol=1e-15
    )
    dfm = K.dfm_step_kernel(K.MASK, x, a_s, a_t, beta)
    tt = K.corrector_kernel_time_t(K.MASK, x, a_t, sig)
    gap = (a_s - a_t) / (1 - a_t)  # (1 + beta) versus beta factor
    np.testing.assert_allclose(dfm[:2] - tt[:2], gap * np.array(x), atol=1e-15)
    np.testing.assert_allclose(dfm, K.remdm_posterior(K.MASK, x, a_s, a_t, sig), atol=1e-15)


def test_dfm_mapping_report():
    rep = check_dfm_mapping()
    assert rep.passed and rep.n_cells > 0 and rep.n_clamped > 0


def test_constant_alpha_report():
    rep = check_constant_alpha()
    assert rep.deviation <= 1e-12


def test_ddim_report():
    assert check_ddim().passed


def test_report_invariants():
    r = VerificationReport("c", "g", 0.5, 0.1)
    assert not r.passed
    assert VerificationReport("c", "g", 0.1, 0.1).passed
    with pytest.raises(InvalidParameterError):
        VerificationReport("c", "g", -1.0, 0.1)


def test_metrics_on_exact_draws():
    joint = random_joint(4, 6, 10, seed=0)
    rng = np.random.default_rng(0)
    n = 10**5
    samples = joint.support[rng.choice(len(joint.support), size=n, p=joint.probs)]
    m = compute_metrics(samples, joint)
    assert m.tv_distance <= 2 * math.sqrt(len(joint.support) / n)
    assert m.support_violations == 0 and m.inconsistency_rate == 0
    expected_nll = -np.dot(joint.probs, np.log(joint.probs)) / joint.L
    assert m.oracle_nll == pytest.approx(expected_nll, abs=0.01)


def test_metrics_repeated_sequence():
    joint = random_joint(3, 3, 5, seed=4)
    row = joint.support[2]
    m = compute_metrics(np.tile(row, (50, 1)), joint)
    assert m.sample_entropy == 0
    assert m.tv_distance == pytest.approx(1 - joint.probs[2], abs=1e-15)
    same = compute_metrics(np.zeros((10, 3), dtype=int), JointDistribution.from_sequences([(0, 0, 0)], [1.0], vocab=(0,)))
    assert same.token_entropy == 0 and same.tv_distance == 0


def test_metrics_out_of_support():
    toy = figure1_toy()
    samples = np.array([[0, 2], [1, 2], [1, 3], [0, 3]])
    m = compute_metrics(samples, toy)
    assert m.support_violations == 2 and m.inconsistency_rate == 0.5
    assert m.oracle_nll == pytest.approx(math.log(2) / 2)
    assert math.isinf(compute_metrics(samples[[1, 3]], toy).oracle_nll)


def test_token_entropy():
    assert token_entropy([1, 1, 2, 2]) == pytest.approx(math.log(2))
    np.testing.assert_allclose(token_entropy([[1, 1], [1, 2]]), [0, math.log(2)])


dists = st.dictionaries(st.integers(0, 5), st.floats(0.01, 1), min_size=1, max_size=6).map(
    lambda d: {(k,): v / sum(d.values()) for k, v in d.items()}
)


@given(dists, dists)
def test_tv_symmetric_and_bounded(p, q):
    assert tv_between(p, q) == pytest.approx(tv_between(q, p), abs=1e-15)
    assert 0 <= tv_between(p, q) <= 1 + 1e-12


def test_exact_chain_toy_mdlm():
    dist = exact_sample_distribution(SamplerConfig(T=1), figure1_toy())
    assert dist == {(0, 2): 0.25, (0, 3): 0.25, (1, 2): 0.25, (1, 3): 0.25}
    assert exact_inconsistency(SamplerConfig(T=1), figure1_toy()) == 0.5


def test_exact_chain_reaches_joint_in_many_steps():
    toy = figure1_toy()
    incons = [exact_inconsistency(SamplerConfig(T=T), toy) for T in (1, 2, 4, 8)]
    assert all(b < a for a, b in zip(incons, incons[1:]))
