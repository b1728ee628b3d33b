"""Categorical, log-normal, von Mises mixture and Gaussian KDE distributions.

Every distribution is an immutable value with a ``fit`` constructor, a
``logpdf`` and a ``sample`` taking an explicit :class:`numpy.random.Generator`.
The module-level functions mirror those methods.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .scene import TWO_PI

SIGMA_MIN = 1e-3
KAPPA_MAX = 500.0
BANDWIDTH_MIN = 1e-3
EPS_P = 1e-6
_LOG_2PI = math.log(TWO_PI)


class FitError(ValueError):
    pass


# --- categorical --------------------------------------------------------------

@dataclass(frozen=True)
class Categorical:
    outcomes: tuple
    probs: tuple

    def __post_init__(self):
        object.__setattr__(self, "outcomes", tuple(self.outcomes))
        object.__setattr__(self, "probs", tuple(float(p) for p in self.probs))
        if len(self.outcomes) != len(self.probs):
            raise ValueError("outcomes and probs differ in length")
        if any(p < 0 for p in self.probs) or abs(math.fsum(self.probs) - 1.0) > 1e-9:
            raise ValueError(f"probabilities must be >= 0 and sum to 1, got {self.probs}")

    @classmethod
    def fit(cls, counts):
        items = sorted(counts.items(), key=lambda kv: (isinstance(kv[0], str), kv[0]))
        if any(c < 0 for _, c in items):
            raise FitError("counts must be non-negative")
        total = sum(c for _, c in items)
        if total <= 0:
            raise FitError("categorical fit needs at least one positive count")
        return cls(tuple(k for k, _ in items), tuple(c / total for _, c in items))

    def prob(self, outcome):
        try:
            return self.probs[self.outcomes.index(outcome)]
        except ValueError:
            return 0.0

    def logprob(self, outcome, floor=EPS_P):
        return math.log(max(self.prob(outcome), floor))

    def sample(self, rng):
        i = int(rng.choice(len(self.probs), p=np.asarray(self.probs)))
        return self.outcomes[i]


def categorical_fit(counts):
    return Categorical.fit(counts)


# --- log-normal ---------------------------------------------------------------

@dataclass(frozen=True)
class LogNormalDist:
    mu: float
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")

    @classmethod
    def fit(cls, samples, sigma_min=SIGMA_MIN):
        x = np.asarray(samples, dtype=float)
        if x.size < 2:
            raise FitError("log-normal fit needs at least two samples")
        if np.any(x <= 0):
            raise FitError("log-normal samples must be positive")
        logs = np.log(x)
        return cls(float(logs.mean()), max(float(logs.std()), sigma_min))

    def logpdf(self, x):
        if x <= 0:
            return -math.inf
        lx = math.log(x)
        z = (lx - self.mu) / self.sigma
        return -lx - math.log(self.sigma) - 0.5 * _LOG_2PI - 0.5 * z * z

    def sample(self, rng, size=None):
        return np.exp(self.mu + self.sigma * rng.standard_normal(size))


def lognormal_fit(samples):
    return LogNormalDist.fit(samples)


def lognormal_logpdf(dist, x):
    return dist.logpdf(x)


def lognormal_sample(dist, rng):
    return float(dist.sample(rng))


# --- von Mises ----------------------------------------------------------------

def bessel_i0(kappa):
    """Modified Bessel function of the first kind, order zero."""
    if kappa < 0:
        raise ValueError("kappa must be >= 0")
    return float(special.i0(kappa))


def log_i0(kappa):
    return math.log(special.i0e(kappa)) + kappa


def kappa_from_resultant(rbar):
    """Best & Fisher approximation to the inverse of A1(kappa) = I1/I0."""
    r = min(max(rbar, 0.0), 1.0)
    if r < 0.53:
        k = 2 * r + r ** 3 + 5 * r ** 5 / 6
    elif r < 0.85:
        k = -0.4 + 1.39 * r + 0.43 / (1 - r)
    else:
        denom = r ** 3 - 4 * r ** 2 + 3 * r
        k = 1.0 / denom if denom > 0 else KAPPA_MAX
    return min(k, KAPPA_MAX)


def _weighted_mean_direction(theta, w):
    c = float(np.dot(w, np.cos(theta)))
    s = float(np.dot(w, np.sin(theta)))
    tot = float(w.sum())
    if tot <= 0:
        return 0.0, 0.0
    mu = math.atan2(s, c) % TWO_PI
    return mu, math.hypot(c, s) / tot


def _vm_logpdf_array(theta, mu, kappa):
    return kappa * np.cos(theta - mu) - _LOG_2PI - log_i0(kappa)


@dataclass(frozen=True)
class VonMisesMixture:
    components: tuple   # of (weight, mu, kappa)

    def __post_init__(self):
        comps = tuple((float(w), float(m) % TWO_PI, float(k)) for w, m, k in self.components)
        object.__setattr__(self, "components", comps)
        if not comps:
            raise ValueError("mixture needs at least one component")
        if any(w < 0 for w, _, _ in comps) or abs(math.fsum(w for w, _, _ in comps) - 1) > 1e-9:
            raise ValueError("mixture weights must be >= 0 and sum to 1")
        if any(not (0 <= k < math.inf) for _, _, k in comps):
            raise ValueError("kappa must be finite and >= 0")

    @classmethod
    def fit(cls, angles, k_components=1, max_iter=200, tol=1e-8):
        theta = np.mod(np.asarray(angles, dtype=float), TWO_PI)
        n = theta.size
        if n == 0:
            raise FitError("von Mises fit needs angles")
        if n < 5 * k_components:
            raise FitError(f"{k_components} components need at least {5 * k_components} angles, got {n}")
        if k_components == 1:
            mu, rbar = _weighted_mean_direction(theta, np.ones(n))
            return cls(((1.0, mu, kappa_from_resultant(rbar)),))
        return cls(_vm_em(theta, k_components, max_iter, tol))

    def logpdf(self, theta):
        terms = [math.log(w) + k * math.cos(theta - m) - _LOG_2PI - log_i0(k)
                 for w, m, k in self.components if w > 0]
        top = max(terms)
        return top + math.log(math.fsum(math.exp(t - top) for t in terms))

    def logpdf_array(self, theta):
        theta = np.asarray(theta, dtype=float)
        terms = np.stack([math.log(w) + _vm_logpdf_array(theta, m, k)
                          for w, m, k in self.components if w > 0])
        return special.logsumexp(terms, axis=0)

    def sample(self, rng, size=None):
        n = 1 if size is None else int(size)
        w = np.array([c[0] for c in self.components])
        which = rng.choice(len(w), size=n, p=w / w.sum())
        out = np.empty(n)
        for j, (_, mu, kappa) in enumerate(self.components):
            idx = np.flatnonzero(which == j)
            if idx.size:
                out[idx] = _best_fisher(mu, kappa, idx.size, rng)
        return float(out[0]) if size is None else out


def _vm_em(theta, k, max_iter, tol):
    mu0, _ = _weighted_mean_direction(theta, np.ones(theta.size))
    mus = [(mu0 + j * TWO_PI / k) % TWO_PI for j in range(k)]
    kappas = [1.0] * k
    weights = [1.0 / k] * k
    prev = -math.inf
    for _ in range(max_iter):
        logp = np.stack([math.log(max(w, 1e-300)) + _vm_logpdf_array(theta, m, kk)
                         for w, m, kk in zip(weights, mus, kappas)])
        norm = special.logsumexp(logp, axis=0)
        ll = float(norm.sum())
        resp = np.exp(logp - norm)
        for j in range(k):
            rj = resp[j]
            tot = float(rj.sum())
            weights[j] = tot / theta.size
            if tot < 1e-9:
                kappas[j] = 0.0
                continue
            mus[j], rbar = _weighted_mean_direction(theta, rj)
            kappas[j] = kappa_from_resultant(rbar)
        if ll - prev < tol * max(1.0, abs(ll)):
            break
        prev = ll
    s = math.fsum(weights)
    return tuple((w / s, m, kk) for w, m, kk in zip(weights, mus, kappas))


def _best_fisher(mu, kappa, n, rng):
    """Best & Fisher (1979) rejection sampler, vectorised over ``n`` draws."""
    if kappa < 1e-8:
        return rng.uniform(0.0, TWO_PI, n)
    tau = 1.0 + math.sqrt(1.0 + 4.0 * kappa * kappa)
    rho = (tau - math.sqrt(2.0 * tau)) / (2.0 * kappa)
    r = (1.0 + rho * rho) / (2.0 * rho)
    out = np.empty(n)
    filled = 0
    while filled < n:
        m = n - filled
        u1, u2, u3 = rng.random(m), rng.random(m), rng.random(m)
        z = np.cos(math.pi * u1)
        f = (1.0 + r * z) / (r + z)
        c = kappa * (r - f)
        with np.errstate(divide="ignore"):
            ok = (c * (2.0 - c) - u2 > 0) | (np.log(c / u2) + 1.0 - c >= 0)
        th = np.sign(u3[ok] - 0.5) * np.arccos(np.clip(f[ok], -1.0, 1.0))
        out[filled:filled + th.size] = th
        filled += th.size
    return np.mod(mu + out, TWO_PI)


def vonmises_fit(angles, k_components=1):
    return VonMisesMixture.fit(angles, k_components)


def vonmises_logpdf(dist, theta):
    return dist.logpdf(theta)


def vonmises_sample(dist, rng):
    return float(dist.sample(rng))


# --- kernel density -----------------------------------------------------------

def silverman_bandwidth(samples):
    x = np.asarray(samples, dtype=float)
    n = x.shape[0]
    sd = x.std(axis=0, ddof=1) if n > 1 else np.zeros(x.shape[1])
    return np.maximum(1.06 * sd * n ** (-0.2), BANDWIDTH_MIN)


@dataclass(frozen=True)
class KDEDist:
    samples: tuple        # tuple of point tuples
    bandwidths: tuple

    def __post_init__(self):
        pts = tuple(tuple(float(v) for v in np.atleast_1d(p)) for p in self.samples)
        bw = tuple(float(b) for b in np.atleast_1d(self.bandwidths))
        if not pts:
            raise ValueError("KDE needs at least one sample")
        if any(len(p) != len(bw) for p in pts):
            raise ValueError("sample dimension does not match bandwidths")
        if any(not b > 0 for b in bw):
            raise ValueError("bandwidths must be positive")
        object.__setattr__(self, "samples", pts)
        object.__setattr__(self, "bandwidths", bw)
        object.__setattr__(self, "_arr", np.array(pts))
        object.__setattr__(self, "_bw", np.array(bw))
        object.__setattr__(self, "_log_norm", float(np.sum(np.log(bw)) + 0.5 * len(bw) * _LOG_2PI
                                                    + math.log(len(pts))))

    @classmethod
    def fit(cls, samples, bandwidth_rule="silverman"):
        x = np.asarray(samples, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.shape[0] < 1:
            raise FitError("KDE fit needs at least one sample")
        if bandwidth_rule == "silverman":
            bw = silverman_bandwidth(x)
        else:
            bw = np.broadcast_to(np.asarray(bandwidth_rule, dtype=float), (x.shape[1],))
        return cls(tuple(map(tuple, x)), tuple(bw))

    @property
    def dim(self):
        return len(self.bandwidths)

    def logpdf(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.shape[-1] != self.dim:
            raise ValueError(f"expected a {self.dim}-d point, got {x.shape[-1]}-d")
        z = (x - self._arr) / self._bw
        logk = -0.5 * np.einsum("ij,ij->i", z, z)
        top = logk.max()
        # plain max-shifted log-sum-exp; this sits on the sampler's hot path
        return float(top + math.log(np.exp(logk - top).sum()) - self._log_norm)

    def sample(self, rng):
        i = int(rng.integers(len(self.samples)))
        return self._arr[i] + self._bw * rng.standard_normal(self.dim)

    def __eq__(self, other):
        return (isinstance(other, KDEDist) and self.samples == other.samples
                and self.bandwidths == other.bandwidths)

    def __hash__(self):
        return hash((self.samples, self.bandwidths))


def kde_fit(samples, bandwidth_rule="silverman"):
    return KDEDist.fit(samples, bandwidth_rule)


def kde_logpdf(dist, x):
    return dist.logpdf(x)


def kde_sample(dist, rng):
    return dist.sample(rng)
