"""Estimator-style front end: fit a joint from sequences, then sample from it."""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .analysis import compute_metrics, nelbo
from .denoiser import ExactBayesDenoiser, JointDistribution
from .exceptions import InvalidParameterError
from .sampler import SamplerConfig, run_sampler
from .schedules import LOG_LINEAR, GateSpec, RemaskPolicy


def _empirical_joint(X, sample_weight=None, vocab=None):
    rows, inverse = np.unique(X, axis=0, return_inverse=True)
    w = np.ones(len(X)) if sample_weight is None else np.asarray(sample_weight, dtype=float)
    if w.shape != (len(X),) or np.any(w < 0) or not w.sum() > 0:
        raise InvalidParameterError("sample_weight must be non-negative with positive sum")
    mass = np.bincount(inverse.ravel(), weights=w, minlength=len(rows))
    keep = mass > 0
    mass = mass[keep] / mass[keep].sum()
    if vocab is None:
        vocab = tuple(f"t{k}" for k in range(int(X.max()) + 1))
    return JointDistribution(X.shape[1], vocab, rows[keep], mass)


class ReMDMSampler(BaseEstimator):
    """Remasking sampler driven by the exact Bayes denoiser of a fitted joint.

    Parameters
    ----------
    T : int
        Number of reverse steps.
    policy : {"zero", "cap", "rescale", "fb", "dfm"}
    eta : float
        ``eta_cap`` for ``cap``, ``eta_rescale`` for ``rescale``; ignored otherwise.
    dfm_A : float
        Scale of the DFM corrector schedule.
    use_confidence : bool
        Scale sigma per position by ``softmax(-psi)``.
    gate : {"always", "switch", "loop"}
    t_switch, t_on, n_phase1, n_phase2, alpha_loop
        Gate parameters, see :class:`remdm.schedules.GateSpec`.
    top_p, temperature : float
        Decode-time transforms applied at masked positions.
    random_state : int
        Seed of the counter-based generator.
    """

    def __init__(self, T=16, policy="zero", eta=1.0, dfm_A=10.0, use_confidence=False,
                 gate="always", t_switch=1.0, t_on=0.55, n_phase1=1, n_phase2=1,
                 alpha_loop=None, top_p=1.0, temperature=1.0, random_state=0):
        self.T = T
        self.policy = policy
        self.eta = eta
        self.dfm_A = dfm_A
        self.use_confidence = use_confidence
        self.gate = gate
        self.t_switch = t_switch
        self.t_on = t_on
        self.n_phase1 = n_phase1
        self.n_phase2 = n_phase2
        self.alpha_loop = alpha_loop
        self.top_p = top_p
        self.temperature = temperature
        self.random_state = random_state

    def _policy(self):
        gate = GateSpec(
            self.gate, t_switch=self.t_switch, t_on=self.t_on,
            n_phase1=self.n_phase1, n_phase2=self.n_phase2, alpha_loop=self.alpha_loop,
        ) if self.gate != "always" else GateSpec()
        return RemaskPolicy(
            self.policy,
            eta_cap=self.eta if self.policy == "cap" else 1.0,
            eta_rescale=self.eta if self.policy == "rescale" else 1.0,
            dfm_A=self.dfm_A,
            use_confidence=self.use_confidence,
            gate=gate,
        )

    def _config(self, n_samples):
        return SamplerConfig(
            T=self.T, policy=self._policy(), schedule=LOG_LINEAR, top_p=self.top_p,
            temperature=self.temperature, seed=int(self.random_state or 0), n_samples=n_samples,
        )

    def fit(self, X, y=None, sample_weight=None):
        """Fit the empirical joint of ``X`` (``(n, L)`` token indices) or take a
        :class:`JointDistribution` as is."""
        if isinstance(X, JointDistribution):
            joint = X
        else:
            X = check_array(X, dtype=np.int64)
            if np.any(X < 0):
                raise InvalidParameterError("token indices must be non-negative")
            joint = _empirical_joint(X, sample_weight)
        self._config(1)  # validate hyper-parameters early
        self.joint_ = joint
        self.denoiser_ = ExactBayesDenoiser(joint, fallback="nearest")
        self.n_features_in_ = joint.L
        return self

    def sample(self, n_samples=1):
        check_is_fitted(self, "joint_")
        result = run_sampler(self._config(n_samples), self.denoiser_)
        self.diagnostics_ = result.steps
        return result.tokens

    def score(self, X, y=None):
        """Negative NELBO of the empirical distribution of ``X`` (higher is better).

        Uses the plain-grid sigma of the configured policy; the loop gate has
        no plain-grid NELBO, so its score falls back to sigma = 0.
        """
        check_is_fitted(self, "joint_")
        X = check_array(X, dtype=np.int64)
        if X.shape[1] != self.n_features_in_:
            raise InvalidParameterError(f"expected sequences of length {self.n_features_in_}")
        data = _empirical_joint(X, vocab=self.joint_.vocab)
        policy = self._policy()
        sig = None if policy.gate.mode == "loop" else policy
        with np.errstate(divide="ignore", invalid="ignore"):
            res = nelbo(data, LOG_LINEAR, sig, self.T, denoiser=self.denoiser_)
        return -res.total

    def sample_metrics(self, n_samples):
        """Draw ``n_samples`` and score them against the fitted joint."""
        return compute_metrics(self.sample(n_samples), self.joint_)
