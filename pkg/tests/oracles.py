"""Independent reference formulas in exact rational arithmetic.

Written directly from the kernel definitions, without importing the
package, so the package code is checked against a second implementation.
Distributions are dicts {"x": mass, "m": mass} for a point-mass clean
token.
"""

from fractions import Fraction as F


def posterior(z_masked, a_s, a_t, sigma):
    if not z_masked:
        return {"x": 1 - sigma, "m": sigma}
    return {"x": (a_s - (1 - sigma) * a_t) / (1 - a_t), "m": (1 - a_s - sigma * a_t) / (1 - a_t)}


def forward_step(z_s_masked, a_s, a_t, sigma):
    if not z_s_masked:
        return {"x": (1 - sigma) * a_t / a_s, "m": (a_s - (1 - sigma) * a_t) / a_s}
    return {"x": sigma * a_t / (1 - a_s), "m": (1 - a_s - sigma * a_t) / (1 - a_s)}


def corrector_s(z_masked, a_s, sigma):
    if not z_masked:
        return {"x": 1 - sigma, "m": sigma}
    return {"x": sigma * a_s / (1 - a_s), "m": (1 - (1 + sigma) * a_s) / (1 - a_s)}


def sigma_max(a_s, a_t):
    return min(F(1), (1 - a_s) / a_t)


def softmax_neg(psi):
    import math

    e = [0.0 if p == math.inf else math.exp(-p) for p in psi]
    tot = sum(e)
    return [v / tot for v in e]


def temperature(p, tau):
    w = [q ** (1 / tau) for q in p]
    return [v / sum(w) for v in w]


def marginal_chain(T, sigma_fn):
    """P(z_t = x) after running the reverse chain with exact log-linear alphas."""
    px = F(0)
    out = {T: px}
    for i in range(T, 0, -1):
        a_t, a_s = 1 - F(i, T), 1 - F(i - 1, T)
        sig = sigma_fn(a_s, a_t)
        keep = posterior(False, a_s, a_t, sig)["x"] if px else 0
        unm = posterior(True, a_s, a_t, sig)["x"] if px != 1 else 0
        px = px * keep + (1 - px) * unm
        out[i - 1] = px
    return out
