"""Exact Bayes denoiser over an enumerable joint, plus decode-time transforms.

Masking is independent of token values, so the optimal denoiser at a masked
position is the conditional of the data distribution given the observed
tokens. With an explicit list of support sequences that conditional is
computed exactly.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Tuple

import numpy as np

from .exceptions import InconsistentEvidenceError, InvalidParameterError, JointFormatError
from .kernels import MASK

MAX_SUPPORT = 10**6


@dataclass(frozen=True, eq=False)
class JointDistribution:
    """Explicit distribution over length-``L`` token sequences.

    ``support`` is an ``(N, L)`` integer array of token indices into
    ``vocab`` and ``probs`` the matching probabilities.
    """

    L: int
    vocab: Tuple[str, ...]
    support: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        support = np.asarray(self.support, dtype=np.int64)
        probs = np.asarray(self.probs, dtype=np.float64)
        vocab = tuple(str(v) for v in self.vocab)
        if len(set(vocab)) != len(vocab) or not vocab:
            raise InvalidParameterError("vocab must be a non-empty list of distinct tokens")
        if support.ndim != 2 or support.shape[1] != self.L or support.shape[0] == 0:
            raise InvalidParameterError(f"support must have shape (N, {self.L})")
        if support.shape[0] > MAX_SUPPORT:
            raise InvalidParameterError(f"support larger than {MAX_SUPPORT} sequences")
        if probs.shape != (support.shape[0],):
            raise InvalidParameterError("one probability per support sequence is required")
        if np.any(support < 0) or np.any(support >= len(vocab)):
            raise InvalidParameterError("support tokens must index into vocab")
        if np.any(probs <= 0):
            raise InvalidParameterError("support probabilities must be positive")
        if abs(probs.sum() - 1.0) > 1e-12:
            raise InvalidParameterError(f"probabilities sum to {probs.sum():.17g}, not 1")
        if len({tuple(row) for row in support.tolist()}) != len(support):
            raise InvalidParameterError("support sequences must be distinct")
        support.setflags(write=False)
        probs.setflags(write=False)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "vocab", vocab)

    @property
    def V(self):
        return len(self.vocab)

    @classmethod
    def from_sequences(cls, sequences, probs, vocab=None):
        """Build a joint from token sequences (strings or indices)."""
        sequences = [tuple(seq) for seq in sequences]
        if not sequences:
            raise InvalidParameterError("at least one sequence is required")
        if vocab is None:
            vocab = sorted({tok for seq in sequences for tok in seq}, key=str)
        vocab = tuple(vocab)
        index = {tok: k for k, tok in enumerate(vocab)}
        try:
            support = [[index[tok] for tok in seq] for seq in sequences]
        except KeyError as exc:
            raise InvalidParameterError(f"token {exc.args[0]!r} not in vocab") from None
        return cls(len(sequences[0]), vocab, np.array(support), np.asarray(probs, dtype=float))

    def probability_of(self, seq):
        """Probability of an index sequence (0 when outside the support)."""
        hits = np.all(self.support == np.asarray(seq), axis=1)
        return float(self.probs[hits].sum())

    def as_dict(self):
        return {tuple(row): float(p) for row, p in zip(self.support.tolist(), self.probs)}

    def decode(self, seq):
        return tuple("[MASK]" if k == MASK else self.vocab[k] for k in seq)


def figure1_toy():
    """Two-sequence toy joint: ``they sell`` or ``she sells``, each with mass 1/2."""
    return JointDistribution.from_sequences(
        [("they", "sell"), ("she", "sells")], [0.5, 0.5], vocab=("they", "she", "sell", "sells")
    )


def random_joint(L, V, n_support, seed=0):
    """Random joint with ``n_support`` distinct sequences and Dirichlet(1) masses."""
    rng = np.random.default_rng(seed)
    if n_support > V**L:
        raise InvalidParameterError("more support sequences requested than exist")
    chosen = set()
    rows = []
    while len(rows) < n_support:
        row = tuple(int(v) for v in rng.integers(0, V, size=L))
        if row not in chosen:
            chosen.add(row)
            rows.append(row)
    probs = rng.dirichlet(np.ones(n_support))
    probs = probs / probs.sum()
    vocab = tuple(f"t{k}" for k in range(V))
    return JointDistribution(L, vocab, np.array(rows), probs)


def load_joint(path):
    """Read a joint from the plain-text format.

    First line ``L=<int> V=<tok1,tok2,...>``, then one line per support
    sequence: ``L`` whitespace-separated tokens followed by a probability.
    Blank lines and ``#`` comments are ignored.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise JointFormatError(f"cannot read joint file {path}: {exc.strerror}") from exc
    lines = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines:
        raise JointFormatError(f"{path}: empty joint file")
    header = dict(part.split("=", 1) for part in lines[0].split() if "=" in part)
    try:
        L = int(header["L"])
        vocab = tuple(tok for tok in header["V"].split(",") if tok)
    except (KeyError, ValueError):
        raise JointFormatError(f"{path}: header must read 'L=<int> V=<tokens>'") from None
    seqs, probs = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        fields = line.split()
        if len(fields) != L + 1:
            raise JointFormatError(f"{path}:{lineno}: expected {L} tokens and a probability")
        try:
            probs.append(float(fields[-1]))
        except ValueError:
            raise JointFormatError(f"{path}:{lineno}: bad probability {fields[-1]!r}") from None
        seqs.append(tuple(fields[:-1]))
    try:
        return JointDistribution.from_sequences(seqs, probs, vocab=vocab)
    except InvalidParameterError as exc:
        raise JointFormatError(f"{path}: {exc}") from exc


def dump_joint(joint, path):
    lines = [f"L={joint.L} V={','.join(joint.vocab)}"]
    for row, p in zip(joint.support.tolist(), joint.probs):
        lines.append(" ".join(joint.vocab[k] for k in row) + f" {p:.17g}")
    Path(path).write_text("\n".join(lines) + "\n")


class ExactBayesDenoiser:
    """Callable mapping partially masked sequences to per-position posteriors.

    Input is an ``(n, L)`` integer array with :data:`~remdm.kernels.MASK`
    at masked positions; output has shape ``(n, L, V)``. Masked positions
    get ``P(x_l | observed tokens)``; unmasked positions are point masses on
    the observed token.

    Sequences with masked positions whose observed tokens match no support
    sequence raise :class:`InconsistentEvidenceError` unless
    ``fallback="nearest"``, which conditions instead on the support
    sequences agreeing with the most observed positions. Fully observed
    sequences never need the conditional and never raise.
    """

    FALLBACKS = (None, "nearest")

    def __init__(self, joint, fallback=None):
        if fallback not in self.FALLBACKS:
            raise InvalidParameterError(f"unknown fallback {fallback!r}")
        self.joint = joint
        self.fallback = fallback
        # (N, L * V) one-hot rows of the support sequences
        self._onehot = np.eye(joint.V)[joint.support].reshape(len(joint.support), -1)

    def __call__(self, tokens):
        joint = self.joint
        tokens = np.atleast_2d(np.asarray(tokens, dtype=np.int64))
        n, L = tokens.shape
        if L != joint.L:
            raise InvalidParameterError(f"sequences must have length {joint.L}")
        observed = tokens != MASK
        if np.any(tokens[observed] >= joint.V) or np.any(tokens[observed] < 0):
            raise InvalidParameterError("observed tokens must index into vocab")
        # (n, N, L): support token matches an observed position
        hits = (joint.support[None, :, :] == tokens[:, None, :]) & observed[:, None, :]
        n_hits = hits.sum(axis=2)
        agree = n_hits == observed.sum(axis=1)[:, None]
        needs = ~observed.all(axis=1)
        stuck = needs & ~agree.any(axis=1)
        if np.any(stuck):
            if self.fallback is None:
                bad = tokens[np.argmax(stuck)]
                raise InconsistentEvidenceError(
                    f"no support sequence agrees with {joint.decode(bad.tolist())}"
                )
            best = n_hits == n_hits.max(axis=1, keepdims=True)
            agree = np.where(stuck[:, None], best, agree)
        weights = agree * joint.probs[None, :]
        total = weights.sum(axis=1, keepdims=True)
        weights = np.divide(weights, total, out=np.zeros_like(weights), where=total > 0)
        out = (weights @ self._onehot).reshape(n, L, joint.V)
        rows, cols = np.nonzero(observed)
        out[rows, cols, :] = 0.0
        out[rows, cols, tokens[rows, cols]] = 1.0
        return out


def exact_bayes_denoiser(joint, z):
    """Posterior over clean tokens for a single partially masked sequence ``z``.

    Returns an ``(L, V)`` array whose rows are distributions over the
    vocabulary (never over MASK).
    """
    return ExactBayesDenoiser(joint)(np.asarray(z)[None, :])[0]


def apply_temperature(dist, tau):
    """Sharpen (``tau < 1``) or flatten (``tau > 1``) a distribution: ``p**(1/tau)``.

    Works on the last axis, so batches of distributions are accepted.
    """
    if not tau > 0:
        raise InvalidParameterError(f"temperature must be positive, got {tau!r}")
    p = np.asarray(dist, dtype=np.float64)
    if tau == 1:
        return p.copy()
    with np.errstate(divide="ignore"):
        logp = np.log(p) / tau
    logp -= np.max(logp, axis=-1, keepdims=True)
    out = np.exp(logp)
    return out / out.sum(axis=-1, keepdims=True)


def nucleus_filter(dist, top_p):
    """Keep the smallest high-probability set with cumulative mass >= ``top_p``.

    Ties are broken by token index (lower index first). Works on the last
    axis.
    """
    if not 0 < top_p <= 1:
        raise InvalidParameterError(f"top_p must lie in (0, 1], got {top_p!r}")
    p = np.asarray(dist, dtype=np.float64)
    if top_p == 1:
        return p.copy()
    order = np.argsort(-p, axis=-1, kind="stable")
    sorted_p = np.take_along_axis(p, order, axis=-1)
    cum = np.cumsum(sorted_p, axis=-1)
    # a token is kept when the mass strictly before it is still short of top_p
    before = cum - sorted_p
    keep_sorted = before < top_p - 1e-12
    keep = np.zeros_like(keep_sorted)
    np.put_along_axis(keep, order, keep_sorted, axis=-1)
    out = np.where(keep, p, 0.0)
    return out / out.sum(axis=-1, keepdims=True)


def transform_decode_dist(dist, temperature=1.0, top_p=1.0):
    """Temperature scaling followed by nucleus filtering."""
    out = dist
    if temperature != 1.0:
        out = apply_temperature(out, temperature)
    if top_p < 1.0:
        out = nucleus_filter(out, top_p)
    return out
