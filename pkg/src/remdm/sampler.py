"""Reverse-time sampling with remasking.

One engine covers plain remasking, the ``switch`` gate and the three-phase
``loop`` gate; the differences live in :func:`remdm.schedules.step_info`.
A batch of ``n`` trajectories is advanced together. Each position draws its
next state by inverse CDF over the fixed order (vocabulary, then MASK) from a
counter-based uniform keyed by ``(seed, sample_id, position, step)``.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np

from ._validation import check_positive_int, check_unit_interval
from .exceptions import InvalidParameterError
from .kernels import MASK, remdm_posterior_batch
from .rng import counter_uniforms
from .schedules import (
    remap_loop_time,
    LOG_LINEAR,
    NoiseSchedule,
    RemaskPolicy,
    _without_confidence,
    sigma_for_step,
    step_info,
)
from .denoiser import transform_decode_dist


@dataclass(frozen=True)
class SamplerConfig:
    T: int
    policy: RemaskPolicy = field(default_factory=RemaskPolicy)
    schedule: NoiseSchedule = LOG_LINEAR
    top_p: float = 1.0
    temperature: float = 1.0
    seed: int = 0
    n_samples: int = 1

    def __post_init__(self):
        check_positive_int(self.T, "T")
        check_positive_int(self.n_samples, "n_samples")
        check_unit_interval(self.top_p, "top_p", low_open=True)
        if not self.temperature > 0:
            raise InvalidParameterError("temperature must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidParameterError("seed must be an unsigned 64-bit integer")
        self.policy.gate.check_budget(self.T)


@dataclass
class StepRecord:
    i: int
    t: float
    s: float
    alpha_t: float
    alpha_s: float
    phase: Optional[int]
    sigma: float
    clamped: bool
    n_remasked: int
    n_decoded: int


@dataclass
class SamplerState:
    """Batch of trajectories at reverse step ``i`` (``i = T`` before the first step).

    ``psi`` holds the decode probability of each unmasked token and ``inf``
    at masked positions.
    """

    tokens: np.ndarray
    psi: np.ndarray
    i: int
    sample_ids: np.ndarray
    phase: Optional[int] = None
    history: List[StepRecord] = field(default_factory=list)

    @classmethod
    def initial(cls, n, L, T, first_sample=0):
        return cls(
            tokens=np.full((n, L), MASK, dtype=np.int64),
            psi=np.full((n, L), np.inf),
            i=T,
            sample_ids=np.arange(first_sample, first_sample + n, dtype=np.int64),
        )


def confidence_weights(psi):
    """Per-position remasking weights ``softmax(-psi)`` over each row.

    Positions with ``psi = inf`` (masked) get weight 0; a row with no
    finite score gets all-zero weights.
    """
    psi = np.asarray(psi, dtype=np.float64)
    finite = np.isfinite(psi)
    shift = np.min(np.where(finite, psi, np.inf), axis=-1, keepdims=True)
    shift = np.where(np.isfinite(shift), shift, 0.0)
    with np.errstate(invalid="ignore", over="ignore"):
        e = np.where(finite, np.exp(-(np.where(finite, psi, 0.0) - shift)), 0.0)
    total = e.sum(axis=-1, keepdims=True)
    return np.divide(e, total, out=np.zeros_like(e), where=total > 0)


def _inverse_cdf(probs, u):
    cdf = np.cumsum(probs, axis=-1)
    above = cdf > u[..., None]
    idx = np.argmax(above, axis=-1)
    # rounding can leave the last cdf entry a hair below u
    missed = ~above[..., -1]
    if np.any(missed):
        last_pos = probs.shape[-1] - 1 - np.argmax((probs > 0)[..., ::-1], axis=-1)
        idx = np.where(missed, last_pos, idx)
    return idx


def sample_step(state, config, denoiser):
    """Advance every trajectory in ``state`` by one reverse step."""
    if state.i < 1:
        raise InvalidParameterError("no steps left: state.i is already 0")
    policy = config.policy
    info = step_info(state.i, config.T, config.schedule, policy.gate)
    tokens = state.tokens
    n, L = tokens.shape
    masked = tokens == MASK

    x = denoiser(tokens)
    if (config.temperature != 1.0 or config.top_p < 1.0) and np.any(masked):
        x = x.copy()
        x[masked] = transform_decode_dist(x[masked], config.temperature, config.top_p)

    if info.active:
        base = sigma_for_step(_without_confidence(policy), info.alpha_s, info.alpha_t, info.t)
        sigma_base, clamped = float(base.sigma), base.clamped
    else:
        sigma_base, clamped = 0.0, False
    if policy.use_confidence and sigma_base > 0:
        sigma = confidence_weights(state.psi) * sigma_base
    else:
        sigma = np.full((n, L), sigma_base)

    post = remdm_posterior_batch(tokens, x, info.alpha_s, info.alpha_t, sigma)
    u = counter_uniforms(config.seed, state.sample_ids, np.arange(L), state.i)
    drawn = _inverse_cdf(post, u)
    V = x.shape[-1]
    new_tokens = np.where(drawn == V, MASK, drawn)

    psi = state.psi.copy()
    decoded = masked & (new_tokens != MASK)
    remasked = ~masked & (new_tokens == MASK)
    rows, cols = np.nonzero(decoded)
    psi[rows, cols] = x[rows, cols, new_tokens[rows, cols]]
    psi[remasked] = np.inf

    record = StepRecord(
        state.i, info.t, info.s, info.alpha_t, info.alpha_s, info.phase,
        sigma_base, clamped, int(remasked.sum()), int(decoded.sum()),
    )
    return SamplerState(
        new_tokens, psi, state.i - 1, state.sample_ids, info.phase, state.history + [record]
    )


@dataclass
class SampleResult:
    """Sampled index sequences plus per-step diagnostics (ordered ``i = T..1``)."""

    tokens: np.ndarray
    steps: List[StepRecord]

    @property
    def remask_counts(self):
        return [r.n_remasked for r in self.steps]

    @property
    def clamp_flags(self):
        return [r.clamped for r in self.steps]

    @property
    def n_clamped_steps(self):
        return sum(self.clamp_flags)


def _run_batch(config, denoiser, L, first, n):
    state = SamplerState.initial(n, L, config.T, first_sample=first)
    while state.i > 0:
        state = sample_step(state, config, denoiser)
    return state


def run_sampler(config, denoiser, L=None, *, batch_size=20000, n_workers=1):
    """Draw ``config.n_samples`` sequences.

    Output depends only on ``config`` (including its seed): ``batch_size``
    and ``n_workers`` change how the work is split, not the samples.
    """
    if L is None:
        L = denoiser.joint.L
    n_total = config.n_samples
    batches = [(b, min(batch_size, n_total - b)) for b in range(0, n_total, batch_size)]
    if n_workers > 1 and len(batches) > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            states = list(pool.map(lambda fb: _run_batch(config, denoiser, L, *fb), batches))
    else:
        states = [_run_batch(config, denoiser, L, *fb) for fb in batches]
    tokens = np.concatenate([s.tokens for s in states], axis=0)
    steps = [replace(r) for r in states[0].history]
    for k, rec in enumerate(steps):
        rec.n_remasked = sum(s.history[k].n_remasked for s in states)
        rec.n_decoded = sum(s.history[k].n_decoded for s in states)
    return SampleResult(tokens, steps)
