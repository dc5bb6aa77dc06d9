"""Bayesian-optimization proposer: GP surrogate with expected improvement.

Deliberately small: a Matérn-5/2 GP with an isotropic lengthscale fit by
grid search over the exact log marginal likelihood, and acquisition
maximized over a fixed set of random candidates. No gradients, no ARD.
Inputs live on the unit cube (log-scaled params are mapped through log
first); targets are standardized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.stats import norm

from hpokit.space import Config, SearchSpace, sample
from hpokit.proposers import History

__all__ = [
    "Normalizer",
    "GPModel",
    "AcquisitionConfig",
    "SingularKernel",
    "fit",
    "posterior",
    "expected_improvement",
    "bo_propose",
    "BOProposer",
    "LENGTHSCALE_GRID",
    "SIGNAL_VARIANCE_GRID",
]

LENGTHSCALE_GRID = (0.05, 0.1, 0.2, 0.5, 1.0, 2.0)
SIGNAL_VARIANCE_GRID = (0.5, 1.0, 2.0)
NOISE_VARIANCE = 1e-6
MAX_JITTER = 1e-2


class SingularKernel(Exception):
    """Cholesky failed even at the maximum jitter."""


class Normalizer:
    """Affine map (in log space where flagged) between a space and [0,1]^d."""

    def __init__(self, space: SearchSpace):
        self.space = space
        self._lo = np.array([math.log(p.lower) if p.log_scale else p.lower for p in space.params])
        hi = np.array([math.log(p.upper) if p.log_scale else p.upper for p in space.params])
        self._span = hi - self._lo
        self._log = np.array([p.log_scale for p in space.params])

    def to_unit(self, config: Config) -> np.ndarray:
        v = np.array([config[p.name] for p in self.space.params], dtype=float)
        v[self._log] = np.log(v[self._log])
        return (v - self._lo) / self._span

    def from_unit(self, u: np.ndarray) -> Config:
        return sample(self.space, np.clip(u, 0.0, 1.0))


def _matern52(X1: np.ndarray, X2: np.ndarray, lengthscale: float, signal_var: float) -> np.ndarray:
    d = np.sqrt(np.maximum(((X1[:, None, :] - X2[None, :, :]) ** 2).sum(-1), 0.0))
    r = math.sqrt(5.0) * d / lengthscale
    return signal_var * (1.0 + r + r * r / 3.0) * np.exp(-r)


@dataclass
class GPModel:
    X: np.ndarray  # (n, d), unit-cube coordinates
    y: np.ndarray  # (n,), standardized targets
    lengthscale: float
    signal_var: float
    noise_var: float
    jitter: float
    y_mean: float
    y_std: float
    _chol: np.ndarray = None
    _alpha: np.ndarray = None

    def __post_init__(self):
        K = _matern52(self.X, self.X, self.lengthscale, self.signal_var)
        K[np.diag_indices_from(K)] += self.noise_var + self.jitter
        self._chol = cholesky(K, lower=True)
        self._alpha = cho_solve((self._chol, True), self.y)

    def log_marginal_likelihood(self) -> float:
        n = len(self.y)
        return float(
            -0.5 * self.y @ self._alpha
            - np.log(np.diag(self._chol)).sum()
            - 0.5 * n * math.log(2.0 * math.pi)
        )


def fit(X: np.ndarray, y: np.ndarray) -> GPModel:
    """Pick (lengthscale, signal variance) by exact LML over a fixed grid.

    Duplicate or near-duplicate inputs make the kernel singular; the jitter
    escalates tenfold from the base noise floor up to MAX_JITTER before
    giving up.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or len(X) != len(y) or len(y) < 1:
        raise ValueError("need >= 1 observation with matching shapes")
    y_mean = float(y.mean())
    y_std = float(y.std())
    if y_std < 1e-12:
        y_std = 1.0
    ys = (y - y_mean) / y_std

    best: GPModel | None = None
    best_lml = -math.inf
    for ls in LENGTHSCALE_GRID:
        for sv in SIGNAL_VARIANCE_GRID:
            jitter = 0.0
            while True:
                try:
                    model = GPModel(
                        X=X, y=ys, lengthscale=ls, signal_var=sv,
                        noise_var=NOISE_VARIANCE, jitter=jitter,
                        y_mean=y_mean, y_std=y_std,
                    )
                    break
                except np.linalg.LinAlgError:
                    jitter = NOISE_VARIANCE * 10.0 if jitter == 0.0 else jitter * 10.0
                    if jitter > MAX_JITTER:
                        model = None
                        break
            if model is None:
                continue
            lml = model.log_marginal_likelihood()
            if lml > best_lml:
                best, best_lml = model, lml
    if best is None:
        raise SingularKernel(f"kernel not positive definite at any jitter <= {MAX_JITTER}")
    return best


def posterior(gp: GPModel, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Predictive mean and variance (de-standardized) at unit-cube points."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    k_star = _matern52(x, gp.X, gp.lengthscale, gp.signal_var)
    mu = k_star @ gp._alpha
    v = solve_triangular(gp._chol, k_star.T, lower=True)
    var = gp.signal_var - (v * v).sum(axis=0)
    var = np.maximum(var, 0.0)
    return mu * gp.y_std + gp.y_mean, var * gp.y_std**2


def expected_improvement(mu, sigma, best: float, xi: float = 0.0):
    """EI for minimization: E[max(best − f − xi, 0)] under N(mu, sigma²)."""
    scalar = np.ndim(mu) == 0 and np.ndim(sigma) == 0
    mu, sigma = np.broadcast_arrays(
        np.atleast_1d(np.asarray(mu, dtype=float)),
        np.atleast_1d(np.asarray(sigma, dtype=float)),
    )
    imp = best - mu - xi
    out = np.maximum(imp, 0.0)  # sigma == 0 limit
    pos = sigma > 0
    z = imp[pos] / sigma[pos]
    out[pos] = imp[pos] * norm.cdf(z) + sigma[pos] * norm.pdf(z)
    return float(out[0]) if scalar else out


@dataclass(frozen=True)
class AcquisitionConfig:
    xi: float = 0.01
    candidate_count: int = 2048
    initial_design_size: int = 3

    def __post_init__(self):
        if self.candidate_count < 1 or self.initial_design_size < 1:
            raise ValueError("candidate_count and initial_design_size must be >= 1")
        if self.xi < 0:
            raise ValueError("xi must be >= 0")


def bo_propose(
    space: SearchSpace,
    history: History,
    rng: np.random.Generator,
    acq: AcquisitionConfig = AcquisitionConfig(),
) -> Config:
    """Random configs for the initial design, then argmax-EI over M candidates."""
    if len(history) < acq.initial_design_size:
        return sample(space, rng.random(len(space.params)))
    normalizer = Normalizer(space)
    X = np.stack([normalizer.to_unit(t.config) for t in history])
    y = np.array(history.losses, dtype=float)
    gp = fit(X, y)
    cand = rng.random((acq.candidate_count, len(space.params)))
    mu, var = posterior(gp, cand)
    ei = expected_improvement(mu, np.sqrt(var), best=float(y.min()), xi=acq.xi)
    return normalizer.from_unit(cand[int(np.argmax(ei))])


class BOProposer:
    """Stateful Proposer wrapper; one rng stream per run."""

    def __init__(self, seed: int | np.random.Generator = 0, acq: AcquisitionConfig = AcquisitionConfig()):
        self.id = "bo"
        self.rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        self.acq = acq

    def propose(self, space: SearchSpace, history: History, budget: int, step: int) -> Config:
        return bo_propose(space, history, self.rng, self.acq)
