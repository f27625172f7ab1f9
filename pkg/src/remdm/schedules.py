"""Time grids, noise schedules and remasking (sigma) schedules.

Times run from 0 (clean data) to 1 (fully masked). Reverse sampling walks
the grid from ``t = i / T`` to ``s = (i - 1) / T``. The noise schedule
``alpha(t)`` is the probability that a token is still unmasked at time
``t``; the remasking schedule ``sigma`` is the per-step probability of
sending an already decoded token back to MASK.
"""

from dataclasses import dataclass, field
from fractions import Fraction
from typing import NamedTuple, Optional, Sequence, Tuple

import numpy as np

from ._validation import (
    ATOL,
    check_alpha_pair,
    check_positive_int,
    check_unit_interval,
)
from .exceptions import InvalidParameterError

POLICY_KINDS = ("zero", "cap", "rescale", "fb", "dfm")
GATE_MODES = ("always", "switch", "loop")
SCHEDULE_KINDS = ("log_linear", "custom_table")


@dataclass(frozen=True)
class TimeGrid:
    T: int
    points: Tuple[float, ...]

    def __len__(self):
        return len(self.points)


def make_time_grid(T):
    """Uniform grid ``t(i) = i / T`` for ``i = 0..T``."""
    T = check_positive_int(T, "T")
    return TimeGrid(T, tuple(i / T for i in range(T + 1)))


@dataclass(frozen=True)
class NoiseSchedule:
    """Masking schedule ``alpha(t)``.

    ``log_linear`` is ``alpha(t) = 1 - t``. ``custom_table`` holds one alpha
    per point of a uniform grid over [0, 1] and is linearly interpolated in
    between, which lets the loop gate evaluate off-grid times.
    """

    kind: str = "log_linear"
    table: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise InvalidParameterError(f"unknown noise schedule {self.kind!r}")
        if self.kind == "custom_table":
            if self.table is None or len(self.table) < 2:
                raise InvalidParameterError("custom_table needs at least two alpha values")
            table = tuple(float(a) for a in self.table)
            for a in table:
                check_unit_interval(a, "alpha")
            if abs(table[0] - 1.0) > ATOL:
                raise InvalidParameterError("alpha(0) must equal 1")
            if any(b > a + ATOL for a, b in zip(table, table[1:])):
                raise InvalidParameterError("alpha must be non-increasing in t")
            object.__setattr__(self, "table", table)
        elif self.table is not None:
            raise InvalidParameterError("table is only accepted for kind='custom_table'")


LOG_LINEAR = NoiseSchedule()


def alpha_at(schedule, t):
    """Evaluate ``alpha(t)``; exact for :class:`fractions.Fraction` times on log-linear."""
    check_unit_interval(t, "t")
    if schedule.kind == "log_linear":
        return 1 - t
    table = schedule.table
    grid = np.linspace(0.0, 1.0, len(table))
    return float(np.interp(float(t), grid, table))


def sigma_max(alpha_s, alpha_t):
    """Largest admissible remasking probability ``min{1, (1 - alpha_s) / alpha_t}``.

    At ``alpha_t == 0`` the bound is undefined; every sequence is fully
    masked there, so any sigma in [0, 1] yields a valid kernel and 1 is
    returned, unless ``alpha_s == 1`` (a step straight to clean data), which
    never remasks.
    """
    check_alpha_pair(alpha_s, alpha_t)
    if alpha_s == 1:
        return 0 * alpha_s
    if alpha_t == 0:
        return 1 if not isinstance(alpha_s, Fraction) else Fraction(1)
    bound = (1 - alpha_s) / alpha_t
    return bound if bound < 1 else (Fraction(1) if isinstance(bound, Fraction) else 1.0)


def dfm_beta(t, A, exponents=(0.25, 0.25)):
    """Corrector schedule ``A * t**e1 * (1 - t)**e2``."""
    e1, e2 = exponents
    return A * float(t) ** e1 * (1.0 - float(t)) ** e2


@dataclass(frozen=True)
class GateSpec:
    """When remasking is switched on.

    ``switch`` enables remasking for ``0 < t <= t_switch``. ``loop`` runs
    ``n_phase1`` plain decoding steps down to ``t_on``, then ``n_phase2``
    steps at the constant level ``alpha_loop`` (default ``alpha(t_on)``)
    with remasking, then plain decoding from ``t_on`` to 0. ``t_off`` is
    carried for bookkeeping; the loop length is set by ``n_phase2``.
    """

    mode: str = "always"
    t_switch: float = 1.0
    t_on: float = 0.55
    t_off: float = 0.05
    n_phase1: int = 0
    n_phase2: int = 0
    alpha_loop: Optional[float] = None

    def __post_init__(self):
        if self.mode not in GATE_MODES:
            raise InvalidParameterError(f"unknown gate mode {self.mode!r}")
        if self.mode == "switch":
            check_unit_interval(self.t_switch, "t_switch", low_open=True)
        if self.mode == "loop":
            check_unit_interval(self.t_on, "t_on", low_open=True)
            check_unit_interval(self.t_off, "t_off", low_open=True)
            if not self.t_on > self.t_off:
                raise InvalidParameterError("t_on must be larger than t_off")
            check_positive_int(self.n_phase1, "n_phase1")
            check_positive_int(self.n_phase2, "n_phase2")
            if self.alpha_loop is not None:
                check_unit_interval(self.alpha_loop, "alpha_loop", high_open=True)

    def check_budget(self, T):
        if self.mode == "loop" and not self.n_phase1 + self.n_phase2 < T:
            raise InvalidParameterError(
                f"loop gate needs n_phase1 + n_phase2 < T, got "
                f"{self.n_phase1} + {self.n_phase2} >= {T}"
            )


def gate_active(gate, t, i=None, T=None):
    """Return ``(active, phase)`` for time ``t``.

    For ``loop`` the phase depends on the step index, so ``i`` and ``T``
    are required; ``phase`` is 1, 2 or 3 and remasking is active only in
    phase 2. Other modes report ``phase=None``.
    """
    if gate.mode == "always":
        return True, None
    if gate.mode == "switch":
        return (0 < t <= gate.t_switch), None
    if i is None or T is None:
        raise InvalidParameterError("loop gate needs the step index i and T")
    phase = loop_phase(i, T, gate)
    return phase == 2, phase


def loop_phase(i, T, gate):
    gate.check_budget(T)
    if i > T - gate.n_phase1:
        return 1
    if i > T - gate.n_phase1 - gate.n_phase2:
        return 2
    return 3


@dataclass(frozen=True)
class RemaskPolicy:
    """How sigma is produced at every step.

    ``cap`` is ``min{eta_cap, (1 - alpha_s) / alpha_t}``, ``rescale`` is
    ``eta_rescale * sigma_max``, ``fb`` and ``dfm`` are the sigma values that
    reproduce forward-backward and discrete-flow-matching correctors.
    ``use_confidence`` additionally scales sigma per position by a softmax of
    negative confidence scores (see :func:`remdm.sampler.confidence_weights`).
    """

    kind: str = "zero"
    eta_cap: float = 1.0
    eta_rescale: float = 1.0
    dfm_A: float = 10.0
    dfm_exponents: Tuple[float, float] = (0.25, 0.25)
    use_confidence: bool = False
    gate: GateSpec = field(default_factory=GateSpec)

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise InvalidParameterError(f"unknown remasking policy {self.kind!r}")
        check_unit_interval(self.eta_cap, "eta_cap")
        check_unit_interval(self.eta_rescale, "eta_rescale")
        if not self.dfm_A >= 0:
            raise InvalidParameterError("dfm_A must be non-negative")
        if len(self.dfm_exponents) != 2:
            raise InvalidParameterError("dfm_exponents must be a pair")
        object.__setattr__(self, "dfm_exponents", tuple(float(e) for e in self.dfm_exponents))


class SigmaResult(NamedTuple):
    sigma: object  # float, Fraction or per-position ndarray
    clamped: bool
    raw: object


def _base_sigma(policy, alpha_s, alpha_t, t):
    smax = sigma_max(alpha_s, alpha_t)
    kind = policy.kind
    if kind == "zero":
        return 0 * smax, smax
    if kind == "cap":
        eta = _like(policy.eta_cap, smax)
        if alpha_t == 0:
            return eta, smax
        return min(eta, (1 - alpha_s) / alpha_t), smax
    if kind == "rescale":
        return _like(policy.eta_rescale, smax) * smax, smax
    if alpha_t == 0:
        # sigma multiplies alpha_t everywhere it matters, so the value is moot
        return 0 * smax, smax
    ratio = (alpha_s - alpha_t) / alpha_t
    if kind == "fb":
        return ratio, smax
    if t is None:
        raise InvalidParameterError("dfm policy needs the current time t")
    beta = dfm_beta(t, policy.dfm_A, policy.dfm_exponents)
    return _like(beta, smax) * ratio, smax


def _like(value, reference):
    if isinstance(reference, Fraction):
        return Fraction(value) if not isinstance(value, float) else Fraction(str(value))
    return value


def sigma_for_step(policy, alpha_s, alpha_t, t=None, conf_weights=None):
    """Remasking probability for one reverse step ``t -> s``.

    Corrector-derived values (``fb``, ``dfm``) are clamped to ``sigma_max``
    and the clamp is reported in the result. With ``conf_weights`` the
    result is a per-position array ``weights * sigma``.
    """
    raw, smax = _base_sigma(policy, alpha_s, alpha_t, t)
    clamped = raw > smax + ATOL
    sigma = smax if clamped else min(max(raw, 0 * smax), smax)
    if policy.use_confidence:
        if conf_weights is None:
            raise InvalidParameterError("use_confidence requires conf_weights")
        sigma = np.asarray(conf_weights, dtype=np.float64) * float(sigma)
    elif conf_weights is not None:
        raise InvalidParameterError("conf_weights given but use_confidence is off")
    return SigmaResult(sigma, bool(clamped), raw)


def ddim_sigma(alpha_s, alpha_t, sigma_ddim):
    """Map a DDIM-style interpolation weight onto a remasking probability.

    ``sigma = 1 - alpha_s - (1 - alpha_t) * sigma_ddim``; the result must be
    an admissible sigma for the step.
    """
    smax = sigma_max(alpha_s, alpha_t)
    sigma = 1 - alpha_s - (1 - alpha_t) * sigma_ddim
    if sigma < -ATOL or sigma > smax + ATOL:
        raise InvalidParameterError(
            f"sigma_ddim={sigma_ddim!r} maps to sigma={float(sigma):.6g} "
            f"outside [0, {float(smax):.6g}]"
        )
    return sigma


def loop_alpha(schedule, gate):
    if gate.alpha_loop is not None:
        return gate.alpha_loop
    return alpha_at(schedule, gate.t_on)


def remap_loop_time(i, T, gate):
    """Times ``(t, s, phase)`` of step ``i`` under the three-phase loop.

    Phase 1 maps steps ``T - n_phase1 .. T`` affinely onto ``[t_on, 1]``.
    Phase 2 holds time at ``t_on`` (both ends of the step). Phase 3 maps
    steps ``0 .. T - n_phase1 - n_phase2`` onto ``[0, t_on]``.
    """
    phase = loop_phase(i, T, gate)
    n1, n2, t_on = gate.n_phase1, gate.n_phase2, gate.t_on
    if phase == 1:
        def remap(j):
            return (j / T) * (1 - t_on) * T / n1 + T * (t_on - 1) / n1 + 1
        return remap(i), remap(i - 1), 1
    if phase == 2:
        return t_on, t_on, 2
    k = T - n1 - n2
    return (i / T) * t_on * T / k, ((i - 1) / T) * t_on * T / k, 3


class StepInfo(NamedTuple):
    i: int
    t: float
    s: float
    alpha_t: float
    alpha_s: float
    active: bool
    phase: Optional[int]


def step_info(i, T, schedule, gate):
    """Resolve the times, alphas and gating of reverse step ``i``."""
    if gate.mode == "loop":
        t, s, phase = remap_loop_time(i, T, gate)
        if phase == 2:
            a = loop_alpha(schedule, gate)
            return StepInfo(i, t, s, a, a, True, 2)
        t, s = _clip01(t), _clip01(s)
        return StepInfo(i, t, s, alpha_at(schedule, t), alpha_at(schedule, s), False, phase)
    t, s = i / T, (i - 1) / T
    active, _ = gate_active(gate, t)
    return StepInfo(i, t, s, alpha_at(schedule, t), alpha_at(schedule, s), active, None)


def _clip01(x):
    # affine remaps can land a rounding error outside [0, 1]
    return min(max(x, 0.0), 1.0)


def policy_sigmas(policy, schedule, T, gate=None) -> Sequence[SigmaResult]:
    """Gated sigma for each step ``i = 1..T`` (index 0 of the list is step 1)."""
    gate = policy.gate if gate is None else gate
    out = []
    for i in range(1, T + 1):
        info = step_info(i, T, schedule, gate)
        if not info.active:
            out.append(SigmaResult(0.0, False, 0.0))
            continue
        res = sigma_for_step(
            _without_confidence(policy), info.alpha_s, info.alpha_t, info.t
        )
        out.append(res)
    return out


def _without_confidence(policy):
    if not policy.use_confidence:
        return policy
    return RemaskPolicy(
        policy.kind,
        policy.eta_cap,
        policy.eta_rescale,
        policy.dfm_A,
        policy.dfm_exponents,
        False,
        policy.gate,
    )
