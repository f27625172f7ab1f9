"""Exact checks of the remasking process and oracle-based sample metrics.

Everything here is computed by enumeration: mask patterns for the NELBO,
the two-state chain of a single token for marginal preservation, and the
full sampler Markov chain for small joints.
"""

import itertools
import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import kernels as K
from .denoiser import ExactBayesDenoiser, transform_decode_dist
from .exceptions import InvalidParameterError
from .schedules import (
    RemaskPolicy,
    alpha_at,
    dfm_beta,
    gate_active,
    sigma_for_step,
    sigma_max,
    step_info,
    _without_confidence,
)

DEFAULT_TOLERANCE = 1e-12


@dataclass
class VerificationReport:
    check: str
    grid: str
    deviation: float
    tolerance: float
    wall_time: float = 0.0
    n_cells: int = 0
    n_skipped: int = 0
    n_clamped: int = 0

    def __post_init__(self):
        self.deviation = float(self.deviation)
        if not self.deviation >= 0:
            raise InvalidParameterError("deviation must be non-negative")

    @property
    def passed(self):
        return self.deviation <= self.tolerance

    def summary(self):
        status = "PASS" if self.passed else "FAIL"
        extra = f" skipped={self.n_skipped} clamped={self.n_clamped}" if self.n_skipped else ""
        return (
            f"[{status}] {self.check:<28} {self.grid:<40} "
            f"dev={self.deviation:.3e} tol={self.tolerance:.1e} cells={self.n_cells}{extra}"
        )


# --------------------------------------------------------------------------
# NELBO


@dataclass
class NelboResult:
    reconstruction: float
    diffusion: float
    per_step: np.ndarray  # diffusion contribution of steps i = 1..T

    @property
    def total(self):
        return self.reconstruction + self.diffusion


def _grid_sigmas(sigma_schedule, schedule, T):
    """Sigma for steps ``i = 1..T`` on the plain grid ``t = i / T``."""
    if sigma_schedule is None:
        return np.zeros(T)
    if isinstance(sigma_schedule, RemaskPolicy):
        policy = _without_confidence(sigma_schedule)
        if policy.gate.mode == "loop":
            raise InvalidParameterError("the NELBO is defined on the plain grid; loop gates are not supported")
        out = np.zeros(T)
        for i in range(1, T + 1):
            t, s = i / T, (i - 1) / T
            if gate_active(policy.gate, t)[0]:
                out[i - 1] = sigma_for_step(
                    policy, alpha_at(schedule, s), alpha_at(schedule, t), t
                ).sigma
        return out
    sig = np.asarray(sigma_schedule, dtype=np.float64)
    if sig.shape != (T,):
        raise InvalidParameterError(f"need one sigma per step, got shape {sig.shape}")
    for i in range(1, T + 1):
        a_s, a_t = alpha_at(schedule, (i - 1) / T), alpha_at(schedule, i / T)
        if sig[i - 1] < -1e-12 or sig[i - 1] > sigma_max(a_s, a_t) + 1e-12:
            raise InvalidParameterError(f"sigma at step {i} outside [0, sigma_max]")
    return sig


class _MaskedLoglik:
    """``sum_l log x_theta(z)_l[x_l]`` over masked positions, for every support
    sequence ``x`` and every mask pattern."""

    def __init__(self, joint, denoiser):
        self.joint = joint
        L = joint.L
        if L > 16:
            raise InvalidParameterError("exact NELBO enumerates 2**L mask patterns; L <= 16 required")
        self.patterns = np.array(list(itertools.product((False, True), repeat=L)), dtype=bool)
        N, P = len(joint.support), len(self.patterns)
        z = np.repeat(joint.support[:, None, :], P, axis=1).copy()
        z[:, self.patterns] = K.MASK
        flat = z.reshape(N * P, L)
        probs = denoiser(flat).reshape(N, P, L, -1)
        picked = np.take_along_axis(probs, joint.support[:, None, :, None], axis=3)[..., 0]
        with np.errstate(divide="ignore"):
            logs = np.where(self.patterns[None], np.log(picked), 0.0)
        self.table = logs.sum(axis=2)  # (N, P)
        self.n_masked = self.patterns.sum(axis=1)

    def expected(self, alpha):
        """``E_x E_{z ~ q(z | x)}[masked log-likelihood]`` at masking level ``alpha``."""
        L = self.joint.L
        w = (1 - alpha) ** self.n_masked * alpha ** (L - self.n_masked)
        per_x = (self.table * w[None, :]).sum(axis=1)
        return float(np.dot(self.joint.probs, per_x))


def _reconstruction(table, schedule):
    return 0.0 - table.expected(alpha_at(schedule, 0.0))


def nelbo(joint, schedule, sigma_schedule, T, denoiser=None):
    """Exact NELBO of the remasking process averaged over the joint.

    ``sigma_schedule`` is a :class:`RemaskPolicy` (gated on the plain grid),
    an array of per-step sigma for ``i = 1..T``, or ``None`` for zero. The
    denoiser defaults to the exact Bayes oracle of ``joint``.
    """
    denoiser = ExactBayesDenoiser(joint) if denoiser is None else denoiser
    table = _MaskedLoglik(joint, denoiser)
    sig = _grid_sigmas(sigma_schedule, schedule, T)
    per_step = np.zeros(T)
    for i in range(1, T + 1):
        a_t, a_s = alpha_at(schedule, i / T), alpha_at(schedule, (i - 1) / T)
        coef = ((1 - sig[i - 1]) * a_t - a_s) / (1 - a_t)
        per_step[i - 1] = coef * table.expected(a_t)
    return NelboResult(_reconstruction(table, schedule), float(per_step.sum()), per_step)


def mdlm_nelbo(joint, schedule, T, denoiser=None):
    """NELBO of plain masked diffusion (no remasking)."""
    denoiser = ExactBayesDenoiser(joint) if denoiser is None else denoiser
    table = _MaskedLoglik(joint, denoiser)
    per_step = np.zeros(T)
    for i in range(1, T + 1):
        a_t, a_s = alpha_at(schedule, i / T), alpha_at(schedule, (i - 1) / T)
        per_step[i - 1] = (a_t - a_s) / (1 - a_t) * table.expected(a_t)
    return NelboResult(_reconstruction(table, schedule), float(per_step.sum()), per_step)


# --------------------------------------------------------------------------
# marginal preservation


def _exact_alpha(schedule, t, exact):
    a = alpha_at(schedule, t)
    if exact and not isinstance(a, Fraction):
        a = Fraction(a)
    return a


def verify_marginals(schedule, sigma_schedule, T, *, exact=False, tolerance=DEFAULT_TOLERANCE):
    """Propagate one token's state through the chain and compare with ``alpha_t``.

    Two chains are run: backwards from the all-mask state with the
    remasking posterior, and forwards from ``z_0`` with the non-Markovian
    forward step. The report carries the largest ``|P(z_t = x) - alpha_t|``
    over all grid points of both. ``exact=True`` uses rational arithmetic
    (noise levels on the grid ``i / T`` and the sigma values themselves are
    represented exactly).
    """
    start = time.perf_counter()
    policy = sigma_schedule if isinstance(sigma_schedule, RemaskPolicy) else None
    steps = []
    for i in range(1, T + 1):
        t = Fraction(i, T) if exact else i / T
        s = Fraction(i - 1, T) if exact else (i - 1) / T
        a_t, a_s = _exact_alpha(schedule, t, exact), _exact_alpha(schedule, s, exact)
        if policy is not None:
            if gate_active(policy.gate, float(t), i, T)[0] if policy.gate.mode != "loop" else True:
                sig = sigma_for_step(_without_confidence(policy), a_s, a_t, float(t)).sigma
            else:
                sig = 0 * a_s
        elif sigma_schedule is None:
            sig = 0 * a_s
        else:
            sig = sigma_schedule[i - 1]
        if exact and not isinstance(sig, Fraction):
            sig = Fraction(sig)
        steps.append((a_s, a_t, sig))

    x, V = 0, 1
    x_dist = [Fraction(1)] if exact else [1.0]
    worst = 0
    # backwards: z_1 ~ q(z_1 | x)
    p_x = _exact_alpha(schedule, Fraction(1) if exact else 1.0, exact)
    worst = max(worst, abs(p_x - steps[-1][1]))
    for a_s, a_t, sig in reversed(steps):
        from_x = K.remdm_posterior(x, x_dist, a_s, a_t, sig)[x] if p_x != 0 else 0
        from_m = K.remdm_posterior(K.MASK, x_dist, a_s, a_t, sig)[x] if p_x != 1 else 0
        p_x = p_x * from_x + (1 - p_x) * from_m
        worst = max(worst, abs(p_x - a_s))
    # forwards: z_0 ~ q(z_0 | x)
    p_x = steps[0][0]
    for a_s, a_t, sig in steps:
        from_x = K.forward_nonmarkov(x, x, a_s, a_t, sig, V)[x] if p_x != 0 else 0
        from_m = K.forward_nonmarkov(K.MASK, x, a_s, a_t, sig, V)[x] if p_x != 1 else 0
        p_x = p_x * from_x + (1 - p_x) * from_m
        worst = max(worst, abs(p_x - a_t))

    name = sigma_schedule.kind if policy is not None else "custom"
    return VerificationReport(
        "marginal_preservation",
        f"{schedule.kind} T={T} sigma={name}{' exact' if exact else ''}",
        float(worst),
        tolerance,
        time.perf_counter() - start,
        n_cells=2 * T,
    )


# --------------------------------------------------------------------------
# predictor-corrector equivalences


def _random_pairs(rng, n_t, n_s):
    """``n_t * n_s`` valid ``(alpha_s, alpha_t)`` pairs with ``0 < alpha_t <= alpha_s < 1``."""
    pairs = []
    for a_t in rng.uniform(0.02, 0.98, size=n_t):
        for a_s in rng.uniform(a_t, 0.99, size=n_s):
            pairs.append((float(a_s), float(a_t)))
    return pairs


def _max_dev(a, b):
    return float(np.max(np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))))


def check_composition(n_alpha_t=10, n_alpha_s=10, n_sigma=5, V=3, seed=0, tolerance=DEFAULT_TOLERANCE):
    """Predictor then corrector equals the one-step remasking posterior."""
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst, cells = 0.0, 0
    for a_s, a_t in _random_pairs(rng, n_alpha_t, n_alpha_s):
        # the corrector alone is a kernel only for sigma <= (1 - a_s) / a_s
        smax = min(sigma_max(a_s, a_t), (1 - a_s) / a_s)
        x_dist = rng.dirichlet(np.ones(V))
        for sig in rng.uniform(0, smax, size=n_sigma):
            for z in (K.MASK, int(rng.integers(V))):
                lhs = K.compose_predictor_corrector(z, x_dist, a_s, a_t, sig)
                rhs = K.remdm_posterior(z, x_dist, a_s, a_t, sig)
                worst = max(worst, _max_dev(lhs, rhs))
            cells += 1
    return VerificationReport(
        "predictor_corrector_compose",
        f"{n_alpha_t}x{n_alpha_s}x{n_sigma} random V={V}",
        worst, tolerance, time.perf_counter() - start, n_cells=cells,
    )


def _equivalence_cells(Ts=(2, 4, 8, 16), n_random=40, seed=1):
    """Log-linear grid steps for each ``T`` plus random ``(alpha_s, alpha_t, t)`` cells."""
    cells = []
    for T in Ts:
        for i in range(1, T + 1):
            cells.append((f"T={T}", 1 - (i - 1) / T, 1 - i / T, i / T))
    rng = np.random.default_rng(seed)
    for a_s, a_t in _random_pairs(rng, n_random, 1):
        cells.append(("random", a_s, a_t, 1 - a_t))
    return cells


def check_fb_mapping(cells=None, V=3, seed=2, tolerance=DEFAULT_TOLERANCE):
    """Forward-backward corrector equals the time-t corrector at its sigma."""
    start = time.perf_counter()
    cells = _equivalence_cells() if cells is None else cells
    rng = np.random.default_rng(seed)
    policy = RemaskPolicy("fb")
    worst, used, skipped, clamped = 0.0, 0, 0, 0
    for _, a_s, a_t, t in cells:
        res = sigma_for_step(policy, a_s, a_t, t)
        if res.clamped:
            clamped += 1
            skipped += 1
            continue
        if a_t == 0:
            skipped += 1
            continue
        x_dist = rng.dirichlet(np.ones(V))
        sig = (a_s - a_t) / a_t
        try:
            for z in (K.MASK, int(rng.integers(V))):
                lhs = K.fb_corrector_kernel(z, x_dist, a_s, a_t)
                rhs = K.corrector_kernel_time_t(z, x_dist, a_t, sig)
                worst = max(worst, _max_dev(lhs, rhs))
        except InvalidParameterError:
            skipped += 1
            continue
        used += 1
    return VerificationReport(
        "fb_corrector_mapping", "log-linear T=2,4,8,16 + random", worst, tolerance,
        time.perf_counter() - start, n_cells=used, n_skipped=skipped, n_clamped=clamped,
    )


def check_dfm_mapping(cells=None, A=10.0, exponents=(0.25, 0.25), V=3, seed=3,
                      tolerance=DEFAULT_TOLERANCE):
    """A discretised DFM step equals the remasking posterior at ``sigma = beta (a_s - a_t) / a_t``."""
    start = time.perf_counter()
    cells = _equivalence_cells() if cells is None else cells
    rng = np.random.default_rng(seed)
    policy = RemaskPolicy("dfm", dfm_A=A, dfm_exponents=exponents)
    worst, used, skipped, clamped = 0.0, 0, 0, 0
    for _, a_s, a_t, t in cells:
        res = sigma_for_step(policy, a_s, a_t, t)
        if res.clamped:
            clamped += 1
            skipped += 1
            continue
        if a_t == 0:
            skipped += 1
            continue
        beta = dfm_beta(t, A, exponents)
        sig = beta * (a_s - a_t) / a_t
        x_dist = rng.dirichlet(np.ones(V))
        try:
            for z in (K.MASK, int(rng.integers(V))):
                lhs = K.dfm_step_kernel(z, x_dist, a_s, a_t, beta)
                rhs = K.remdm_posterior(z, x_dist, a_s, a_t, sig)
                worst = max(worst, _max_dev(lhs, rhs))
        except InvalidParameterError:
            skipped += 1
            continue
        used += 1
    return VerificationReport(
        "dfm_corrector_mapping", f"log-linear T=2,4,8,16 + random A={A:g}", worst, tolerance,
        time.perf_counter() - start, n_cells=used, n_skipped=skipped, n_clamped=clamped,
    )


def check_constant_alpha(alpha=0.9, sigma=0.05, A=10.0, V=3, tolerance=DEFAULT_TOLERANCE):
    """At constant alpha the DFM step copies its input; remasking still moves mass.

    Deviation is the larger of the DFM kernel's distance from the copy
    kernel and ``|TV(remasking, copy) - sigma|`` on the unmasked branch.
    """
    start = time.perf_counter()
    x_dist = np.full(V, 1.0 / V)
    worst = 0.0
    beta = dfm_beta(0.5, A)
    dfm_sigma = sigma_for_step(RemaskPolicy("dfm", dfm_A=A), alpha, alpha, 0.5).sigma
    worst = max(worst, abs(dfm_sigma))
    for z in [K.MASK] + list(range(V)):
        copy = K.one_hot(z, V)
        worst = max(worst, K.total_variation(K.dfm_step_kernel(z, x_dist, alpha, alpha, beta), copy))
        worst = max(worst, K.total_variation(
            K.corrector_kernel_time_t(z, x_dist, alpha, dfm_sigma), copy))
        if z != K.MASK:
            tv = K.total_variation(K.remdm_posterior(z, x_dist, alpha, alpha, sigma), copy)
            worst = max(worst, abs(tv - sigma))
    return VerificationReport(
        "constant_alpha_degeneracy", f"alpha_s=alpha_t={alpha} sigma={sigma}", worst, tolerance,
        time.perf_counter() - start, n_cells=V + 1,
    )


def verify_corrector_equivalences(tolerance=DEFAULT_TOLERANCE, seed=0):
    """Run the four corrector checks and return their reports."""
    return [
        check_composition(seed=seed, tolerance=tolerance),
        check_fb_mapping(tolerance=tolerance),
        check_dfm_mapping(tolerance=tolerance),
        check_constant_alpha(tolerance=tolerance),
    ]


def check_ddim(n=100, V=3, seed=4, tolerance=DEFAULT_TOLERANCE):
    """Remasking posterior at the DDIM-mapped sigma equals the DDIM-style posterior."""
    from .schedules import ddim_sigma

    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst, used = 0.0, 0
    while used < n:
        a_t = rng.uniform(0.01, 0.99)
        a_s = rng.uniform(a_t, 0.999)
        smax = sigma_max(a_s, a_t)
        # sigma_ddim range whose image lands in [0, sigma_max]
        lo = (1 - a_s - smax) / (1 - a_t)
        hi = (1 - a_s) / (1 - a_t)
        s_ddim = rng.uniform(lo, hi)
        sig = ddim_sigma(a_s, a_t, s_ddim)
        x_dist = rng.dirichlet(np.ones(V))
        for z in (K.MASK, int(rng.integers(V))):
            lhs = K.remdm_posterior(z, x_dist, a_s, a_t, min(max(sig, 0.0), smax))
            rhs = K.ddim_posterior(z, x_dist, a_s, a_t, s_ddim)
            worst = max(worst, _max_dev(lhs, rhs))
        used += 1
    return VerificationReport(
        "ddim_reparameterization", f"{n} random triples V={V}", worst, tolerance,
        time.perf_counter() - start, n_cells=used,
    )


# --------------------------------------------------------------------------
# metrics


@dataclass
class MetricSet:
    n_samples: int
    tv_distance: float
    tv_stderr: float
    token_entropy: float
    sample_entropy: float
    oracle_nll: float
    support_violations: int
    inconsistency_rate: float

    def as_row(self):
        return {
            "n_samples": int(self.n_samples),
            "tv": float(self.tv_distance),
            "tv_stderr": float(self.tv_stderr),
            "token_entropy": float(self.token_entropy),
            "sample_entropy": float(self.sample_entropy),
            "oracle_nll": float(self.oracle_nll),
            "support_violations": int(self.support_violations),
            "inconsistency_rate": float(self.inconsistency_rate),
        }


def empirical_distribution(samples):
    samples = np.asarray(samples)
    uniq, counts = np.unique(samples, axis=0, return_counts=True)
    return {tuple(int(v) for v in row): c / len(samples) for row, c in zip(uniq, counts)}


def tv_between(p, q):
    """Total variation between two distributions given as ``{sequence: prob}``."""
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


def token_entropy(seqs):
    """Entropy (nats) of each sequence's token-frequency histogram.

    A single sequence gives a float, an ``(n, L)`` array gives ``n`` values.
    """
    seqs = np.asarray(seqs)
    single = seqs.ndim == 1
    seqs = np.atleast_2d(seqs)
    _, codes = np.unique(seqs, return_inverse=True)
    codes = codes.reshape(seqs.shape)
    counts = np.zeros((seqs.shape[0], codes.max() + 1))
    np.add.at(counts, (np.arange(seqs.shape[0])[:, None], codes), 1)
    f = counts / seqs.shape[1]
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -np.where(f > 0, f * np.log(f), 0.0).sum(axis=1)
    h = h + 0.0  # no negative zeros
    return float(h[0]) if single else h


def compute_metrics(samples, joint):
    """Oracle metrics of a sample set.

    ``oracle_nll`` is the mean of ``-log p(x) / L`` over in-support samples
    (``inf`` when none are in support); out-of-support samples are counted
    in ``support_violations`` and make up ``inconsistency_rate``.
    ``tv_stderr`` is the plug-in bound ``0.5 * sum_x sqrt(p_hat (1 - p_hat) / n)``
    on the Monte-Carlo standard deviation of the TV estimate.
    """
    samples = np.asarray(samples)
    n = len(samples)
    emp = empirical_distribution(samples)
    ref = joint.as_dict()
    tv = tv_between(emp, ref)
    p_hat = np.array(list(emp.values()))
    se = 0.5 * float(np.sum(np.sqrt(p_hat * (1 - p_hat) / n)))
    entropies = token_entropy(samples)
    sample_entropy = float(-(p_hat * np.log(p_hat)).sum())
    nll, inside, violations = 0.0, 0, 0
    for seq, f in emp.items():
        p = ref.get(seq)
        count = int(round(f * n))
        if p is None:
            violations += count
        else:
            nll += count * -math.log(p) / joint.L
            inside += count
    return MetricSet(
        n_samples=n,
        tv_distance=tv,
        tv_stderr=se,
        token_entropy=float(np.mean(entropies)),
        sample_entropy=sample_entropy,
        oracle_nll=nll / inside if inside else math.inf,
        support_violations=violations,
        inconsistency_rate=violations / n,
    )


# --------------------------------------------------------------------------
# exact enumeration of the sampler chain


def exact_sample_distribution(config, joint, max_states=200000):
    """Exact output distribution of the sampler by propagating its Markov chain.

    The chain state is the token sequence together with the confidence
    scores (only tracked when the policy uses them). Transitions factorise
    over positions given the denoiser output, so each step enumerates the
    product of the per-position categoricals.
    """
    denoiser = ExactBayesDenoiser(joint)
    policy = config.policy
    base_policy = _without_confidence(policy)
    L, V = joint.L, joint.V
    start = (tuple([K.MASK] * L), tuple([math.inf] * L) if policy.use_confidence else None)
    states: Dict[tuple, float] = {start: 1.0}
    for i in range(config.T, 0, -1):
        info = step_info(i, config.T, config.schedule, policy.gate)
        if info.active:
            sig_base = float(sigma_for_step(base_policy, info.alpha_s, info.alpha_t, info.t).sigma)
        else:
            sig_base = 0.0
        nxt: Dict[tuple, float] = {}
        for (tokens, psi), mass in states.items():
            x = denoiser(np.array([tokens]))[0]
            if policy.use_confidence and sig_base > 0:
                w = _softmax_neg(psi)
                sig = [wl * sig_base for wl in w]
            else:
                sig = [sig_base] * L
            per_pos = []
            for l in range(L):
                xl = x[l]
                if tokens[l] == K.MASK:
                    xl = transform_decode_dist(xl, config.temperature, config.top_p)
                probs = K.remdm_posterior(tokens[l], xl, info.alpha_s, info.alpha_t, sig[l])
                outcomes = []
                for k, p in enumerate(probs):
                    if p <= 0:
                        continue
                    tok = K.MASK if k == V else k
                    if psi is None:
                        new_psi = None
                    elif tokens[l] == K.MASK and tok != K.MASK:
                        new_psi = float(xl[tok])
                    elif tok == K.MASK:
                        new_psi = math.inf
                    else:
                        new_psi = psi[l]
                    outcomes.append((tok, new_psi, float(p)))
                per_pos.append(outcomes)
            for combo in itertools.product(*per_pos):
                p = mass
                for _, _, q in combo:
                    p *= q
                key = (
                    tuple(c[0] for c in combo),
                    tuple(c[1] for c in combo) if psi is not None else None,
                )
                nxt[key] = nxt.get(key, 0.0) + p
        if len(nxt) > max_states:
            raise InvalidParameterError(f"chain has more than {max_states} states")
        states = nxt
    out: Dict[tuple, float] = {}
    for (tokens, _), mass in states.items():
        out[tokens] = out.get(tokens, 0.0) + mass
    return out


def _softmax_neg(psi):
    finite = [p for p in psi if math.isfinite(p)]
    if not finite:
        return [0.0] * len(psi)
    lo = min(finite)
    e = [math.exp(-(p - lo)) if math.isfinite(p) else 0.0 for p in psi]
    total = sum(e)
    return [v / total for v in e]


def exact_inconsistency(config, joint):
    """Probability that the sampler emits a sequence outside the joint's support."""
    dist = exact_sample_distribution(config, joint)
    ref = joint.as_dict()
    return sum(p for seq, p in dist.items() if seq not in ref)


def exact_tv(config, joint):
    return tv_between(exact_sample_distribution(config, joint), joint.as_dict())


# --------------------------------------------------------------------------
# suite


def run_verification_suite(tolerance=DEFAULT_TOLERANCE, Ts=(2, 4, 8, 16)):
    """Marginal, equivalence, DDIM and NELBO-reduction checks."""
    from .denoiser import random_joint
    from .schedules import LOG_LINEAR

    reports: List[VerificationReport] = []
    policies = [
        RemaskPolicy("zero"),
        RemaskPolicy("cap", eta_cap=0.5),
        RemaskPolicy("rescale", eta_rescale=0.7),
        RemaskPolicy("fb"),
        RemaskPolicy("dfm", dfm_A=10.0),
    ]
    for T in Ts:
        for policy in policies:
            reports.append(verify_marginals(LOG_LINEAR, policy, T, tolerance=tolerance))
            reports.append(verify_marginals(LOG_LINEAR, policy, T, exact=True, tolerance=tolerance))
    reports.extend(verify_corrector_equivalences(tolerance=tolerance))
    reports.append(check_ddim(tolerance=tolerance))

    start = time.perf_counter()
    joint = random_joint(3, 3, 3, seed=0)
    for T in (4, 8):
        a = nelbo(joint, LOG_LINEAR, None, T)
        b = mdlm_nelbo(joint, LOG_LINEAR, T)
        reports.append(VerificationReport(
            "nelbo_mdlm_reduction", f"3-sequence joint T={T}",
            max(abs(a.total - b.total), abs(a.diffusion - b.diffusion)), tolerance,
            time.perf_counter() - start, n_cells=T,
        ))
    return reports
