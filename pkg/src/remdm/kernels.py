"""Transition kernels of absorbing-state diffusion with remasking.

Every kernel returns a categorical over ``V + 1`` outcomes: the ``V``
vocabulary tokens followed by MASK in the last slot. Tokens are integer
indices into the vocabulary and :data:`MASK` (``-1``) denotes the mask.

``x_dist`` arguments are distributions over the vocabulary only (length
``V``). In the reverse kernels they stand in for the clean token, which is
exact because every kernel is linear in it.

The scalar kernels accept :class:`fractions.Fraction` noise levels and then
return object arrays of fractions, so identities can be checked exactly.
"""

from fractions import Fraction

import numpy as np

from ._validation import ATOL, check_alpha_pair, check_coefficient
from .exceptions import DegenerateTimeError, InvalidParameterError
from .schedules import sigma_max

MASK = -1


def _as_x_dist(x_dist):
    if isinstance(x_dist, np.ndarray) and x_dist.dtype == object:
        return x_dist
    if any(isinstance(v, Fraction) for v in np.ravel(x_dist)):
        return np.asarray(x_dist, dtype=object)
    return np.asarray(x_dist, dtype=np.float64)


def _categorical(x_coef, x_dist, m_coef):
    out = np.empty(len(x_dist) + 1, dtype=x_dist.dtype if x_dist.dtype == object else None)
    if out.dtype != object and (isinstance(x_coef, Fraction) or isinstance(m_coef, Fraction)):
        out = out.astype(object)
        x_dist = x_dist.astype(object)
    out[:-1] = x_coef * x_dist
    out[-1] = m_coef
    return out


def _point(token, V, mass_token, mass_mask):
    like = mass_token if isinstance(mass_token, Fraction) else None
    out = np.zeros(V + 1, dtype=object if like is not None else np.float64)
    if like is not None:
        out[:] = Fraction(0)
    out[token] += mass_token
    out[-1] += mass_mask
    return out


def one_hot(token, V):
    """Point mass on ``token`` (or on MASK) as a length ``V + 1`` vector."""
    out = np.zeros(V + 1)
    out[token] = 1.0
    return out


def _check_token(z, V, name="z"):
    if z != MASK and not (0 <= z < V):
        raise InvalidParameterError(f"{name}={z!r} is not a token index in [0, {V})")


def _check_sigma(sigma, alpha_s, alpha_t):
    smax = sigma_max(alpha_s, alpha_t)
    if sigma < -ATOL or sigma > smax + ATOL:
        raise InvalidParameterError(
            f"sigma={float(sigma):.6g} outside [0, sigma_max={float(smax):.6g}]"
        )


def forward_marginal(x, alpha_t, V):
    """``q(z_t | x)``: mass ``alpha_t`` on ``x`` and the rest on MASK."""
    if x == MASK:
        raise InvalidParameterError("the clean token cannot be MASK")
    _check_token(x, V, "x")
    check_alpha_pair(1, alpha_t)
    return _point(x, V, alpha_t, 1 - alpha_t)


def mdlm_posterior(z_t, x_dist, alpha_s, alpha_t):
    """Reverse step without remasking: unmasked tokens are carried over."""
    return remdm_posterior(z_t, x_dist, alpha_s, alpha_t, 0 * alpha_s)


def remdm_posterior(z_t, x_dist, alpha_s, alpha_t, sigma):
    """Reverse step ``t -> s`` that remasks decoded tokens with probability ``sigma``.

    Unmasked ``z_t`` goes to ``(1 - sigma)`` on itself and ``sigma`` on MASK.
    A masked ``z_t`` is decoded with total mass
    ``(alpha_s - (1 - sigma) alpha_t) / (1 - alpha_t)`` spread by ``x_dist``.
    """
    x_dist = _as_x_dist(x_dist)
    V = len(x_dist)
    _check_token(z_t, V, "z_t")
    check_alpha_pair(alpha_s, alpha_t)
    _check_sigma(sigma, alpha_s, alpha_t)
    if z_t != MASK:
        return _point(z_t, V, 1 - sigma, sigma)
    if alpha_t == 1:
        raise DegenerateTimeError("reverse step from alpha_t = 1 is undefined for a masked token")
    x_coef = (alpha_s - (1 - sigma) * alpha_t) / (1 - alpha_t)
    m_coef = (1 - alpha_s - sigma * alpha_t) / (1 - alpha_t)
    return _categorical(x_coef, x_dist, m_coef)


def remdm_posterior_batch(tokens, x_dist, alpha_s, alpha_t, sigma):
    """Vectorised :func:`remdm_posterior` for arrays of positions.

    ``tokens`` has shape ``(...)``, ``x_dist`` shape ``(..., V)`` and
    ``sigma`` broadcasts against ``tokens``. Returns shape ``(..., V + 1)``.
    Unmasked positions use their own token (the carry-over value).
    """
    tokens = np.asarray(tokens)
    x_dist = np.asarray(x_dist, dtype=np.float64)
    sigma = np.broadcast_to(np.asarray(sigma, dtype=np.float64), tokens.shape)
    V = x_dist.shape[-1]
    masked = tokens == MASK
    out = np.zeros(tokens.shape + (V + 1,))
    if np.any(masked):
        if alpha_t >= 1:
            raise DegenerateTimeError("reverse step from alpha_t = 1 is undefined for a masked token")
        sig_m = sigma[masked]
        x_coef = (alpha_s - (1 - sig_m) * alpha_t) / (1 - alpha_t)
        out[masked, :V] = x_coef[:, None] * x_dist[masked]
        out[masked, V] = (1 - alpha_s - sig_m * alpha_t) / (1 - alpha_t)
    unmasked = ~masked
    idx = np.nonzero(unmasked)
    out[idx + (tokens[unmasked],)] = 1 - sigma[unmasked]
    out[unmasked, V] = sigma[unmasked]
    return out


def forward_nonmarkov(z_s, x, alpha_s, alpha_t, sigma, V):
    """``q_sigma(z_t | z_s, x)``: the forward step implied by the remasking posterior."""
    if x == MASK:
        raise InvalidParameterError("the clean token cannot be MASK")
    _check_token(x, V, "x")
    _check_token(z_s, V, "z_s")
    if z_s not in (x, MASK):
        raise InvalidParameterError("z_s must equal the clean token or MASK")
    check_alpha_pair(alpha_s, alpha_t)
    _check_sigma(sigma, alpha_s, alpha_t)
    if z_s != MASK:
        if alpha_s == 0:
            raise DegenerateTimeError("alpha_s = 0: an unmasked z_s has zero probability")
        stay = (1 - sigma) * alpha_t / alpha_s
        return _point(x, V, stay, (alpha_s - (1 - sigma) * alpha_t) / alpha_s)
    if alpha_s == 1:
        raise DegenerateTimeError("alpha_s = 1: a masked z_s has zero probability")
    unmask = sigma * alpha_t / (1 - alpha_s)
    return _point(x, V, unmask, (1 - alpha_s - sigma * alpha_t) / (1 - alpha_s))


def corrector_step(z_sp, x_dist, alpha_s, sigma):
    """Corrector that keeps the time-``s`` marginal fixed.

    Applied after an MDLM predictor step it reproduces
    :func:`remdm_posterior` (see :func:`compose_predictor_corrector`).
    """
    return _corrector(z_sp, x_dist, alpha_s, sigma)


def corrector_kernel_time_t(z, x_dist, alpha_t, sigma):
    """Same corrector family, written to keep the time-``t`` marginal fixed."""
    return _corrector(z, x_dist, alpha_t, sigma)


def _corrector(z, x_dist, alpha, sigma):
    x_dist = _as_x_dist(x_dist)
    V = len(x_dist)
    _check_token(z, V)
    check_coefficient(sigma, "sigma")
    if z != MASK:
        return _point(z, V, 1 - sigma, sigma)
    if alpha == 1:
        raise DegenerateTimeError("corrector undefined for a masked token at alpha = 1")
    x_coef = sigma * alpha / (1 - alpha)
    check_coefficient(x_coef, "unmask probability")
    return _categorical(x_coef, x_dist, (1 - (1 + sigma) * alpha) / (1 - alpha))


def fb_corrector_kernel(z_sp, x_dist, alpha_s, alpha_t):
    """Discretised forward-backward corrector for masked diffusion."""
    x_dist = _as_x_dist(x_dist)
    V = len(x_dist)
    _check_token(z_sp, V, "z_sp")
    check_alpha_pair(alpha_s, alpha_t)
    if z_sp != MASK:
        if alpha_t == 0:
            raise DegenerateTimeError("forward-backward corrector undefined at alpha_t = 0")
        keep = (2 * alpha_t - alpha_s) / alpha_t
        check_coefficient(keep, "keep probability")
        return _point(z_sp, V, keep, (alpha_s - alpha_t) / alpha_t)
    if alpha_t == 1:
        raise DegenerateTimeError("forward-backward corrector undefined at alpha_t = 1")
    x_coef = (alpha_s - alpha_t) / (1 - alpha_t)
    return _categorical(x_coef, x_dist, (1 - alpha_s) / (1 - alpha_t))


def dfm_step_kernel(z_t, x_dist, alpha_s, alpha_t, beta):
    """One discretised discrete-flow-matching predictor-corrector step.

    Built from the weighted forward/backward generating velocities with
    corrector weight ``beta``; raises when the step leaves the simplex.
    """
    x_dist = _as_x_dist(x_dist)
    V = len(x_dist)
    _check_token(z_t, V, "z_t")
    check_alpha_pair(alpha_s, alpha_t)
    if z_t != MASK:
        if alpha_t == 0:
            raise DegenerateTimeError("DFM step undefined at alpha_t = 0")
        remask = beta * (alpha_s - alpha_t) / alpha_t
        check_coefficient(remask, "remask probability")
        return _point(z_t, V, 1 + beta * (alpha_t - alpha_s) / alpha_t, remask)
    if alpha_t == 1:
        raise DegenerateTimeError("DFM step undefined at alpha_t = 1")
    x_coef = (1 + beta) * (alpha_s - alpha_t) / (1 - alpha_t)
    check_coefficient(x_coef, "unmask probability")
    return _categorical(x_coef, x_dist, 1 + (1 + beta) * (alpha_t - alpha_s) / (1 - alpha_t))


def compose_predictor_corrector(z_t, x_dist, alpha_s, alpha_t, sigma):
    """Marginalise an MDLM predictor step followed by :func:`corrector_step`.

    The intermediate state is either the carried-over token, MASK, or a
    freshly decoded token; the corrector acts on each and the results are
    mixed by the predictor probabilities.
    """
    x_dist = _as_x_dist(x_dist)
    V = len(x_dist)
    check_alpha_pair(alpha_s, alpha_t)
    _check_sigma(sigma, alpha_s, alpha_t)
    pred = mdlm_posterior(z_t, x_dist, alpha_s, alpha_t)
    out = pred * 0
    for state, weight in enumerate(pred):
        if weight == 0:
            continue
        z_sp = MASK if state == V else state
        out = out + weight * corrector_step(z_sp, x_dist, alpha_s, sigma)
    return out


def ddim_posterior(z_t, x_dist, alpha_s, alpha_t, sigma_ddim):
    """Absorbing-state analogue of the DDIM non-Markovian posterior.

    Parameterised by the interpolation weight ``sigma_ddim`` on ``z_t``
    rather than by a remasking probability.
    """
    x_dist = _as_x_dist(x_dist)
    V = len(x_dist)
    _check_token(z_t, V, "z_t")
    check_alpha_pair(alpha_s, alpha_t)
    if z_t != MASK:
        keep = alpha_s + sigma_ddim * (1 - alpha_t)
        check_coefficient(keep, "keep probability")
        return _point(z_t, V, keep, (1 - alpha_s) - (1 - alpha_t) * sigma_ddim)
    x_coef = alpha_s - sigma_ddim * alpha_t
    check_coefficient(x_coef, "unmask probability")
    return _categorical(x_coef, x_dist, 1 - alpha_s + alpha_t * sigma_ddim)


def total_variation(p, q):
    """Half the L1 distance between two probability vectors."""
    return 0.5 * float(np.sum(np.abs(np.asarray(p, dtype=float) - np.asarray(q, dtype=float))))
