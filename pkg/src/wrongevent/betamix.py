"""Beta numerics and two-component beta mixtures.

The regularized incomplete beta function is evaluated with the classic
continued fraction (modified Lentz), switching to the symmetric tail
I_x(a, b) = 1 - I_{1-x}(b, a) where the fraction converges slowly.

Mixtures keep the low-mean component first: with wrong-event values as input,
component 1 is the clean distribution and component 2 the noisy one.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import betaln, digamma, polygamma

from .errors import DegenerateFitError, DomainError, FitError, ParameterError

SHAPE_MIN, SHAPE_MAX = 0.05, 100.0
VAR_FLOOR = 1e-6
MIN_VALUES = 10

_CF_MAX_ITER = 500
_CF_EPS = 1e-16
_CF_TINY = 1e-300


@dataclass(frozen=True)
class BetaComponent:
    alpha: float
    beta: float

    def __post_init__(self):
        a, b = float(self.alpha), float(self.beta)
        if not (np.isfinite(a) and np.isfinite(b) and a > 0 and b > 0):
            raise DomainError(f"beta shapes must be finite and positive, got ({a}, {b})")
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", b)

    @property
    def mean(self) -> float:
        return self.alpha / (self.alpha + self.beta)

    @property
    def var(self) -> float:
        s = self.alpha + self.beta
        return self.alpha * self.beta / (s * s * (s + 1.0))


@dataclass(frozen=True)
class BetaMixture:
    comps: tuple
    weights: tuple

    def __post_init__(self):
        if len(self.comps) != 2 or len(self.weights) != 2:
            raise ParameterError("a BetaMixture has exactly two components")
        m1, m2 = (float(w) for w in self.weights)
        if m1 < 0 or m2 < 0 or abs(m1 + m2 - 1.0) > 1e-10:
            raise ParameterError(f"mixing weights must be non-negative and sum to 1, got {self.weights}")
        object.__setattr__(self, "weights", (m1, m2))
        object.__setattr__(self, "comps", tuple(self.comps))

    @classmethod
    def default(cls) -> "BetaMixture":
        """Uninformative start: Beta(1,2) for clean, Beta(2,1) for noisy, equal weights."""
        return cls((BetaComponent(1.0, 2.0), BetaComponent(2.0, 1.0)), (0.5, 0.5))

    @property
    def means(self):
        return tuple(c.mean for c in self.comps)

    def ordered(self) -> "BetaMixture":
        if self.comps[0].mean <= self.comps[1].mean:
            return self
        return BetaMixture(self.comps[::-1], self.weights[::-1])

    def as_row(self):
        c1, c2 = self.comps
        return (self.weights[0], c1.alpha, c1.beta, c2.alpha, c2.beta)


def _check_open(x):
    x = np.asarray(x, dtype=np.float64)
    if np.any(~np.isfinite(x)) or np.any((x <= 0.0) | (x >= 1.0)):
        raise DomainError("values must lie strictly inside (0, 1)")
    return x


def beta_logpdf(x, c: BetaComponent):
    x = _check_open(x)
    return (c.alpha - 1.0) * np.log(x) + (c.beta - 1.0) * np.log1p(-x) - betaln(c.alpha, c.beta)


def beta_pdf(x, c: BetaComponent):
    out = np.exp(beta_logpdf(x, c))
    return float(out) if out.ndim == 0 else out


def _betacf(a, b, x):
    """Continued fraction for I_x(a, b), vectorised over x (modified Lentz)."""
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = np.ones_like(x)
    d = 1.0 - qab * x / qap
    d = np.where(np.abs(d) < _CF_TINY, _CF_TINY, d)
    d = 1.0 / d
    h = d.copy()
    done = np.zeros(x.shape, dtype=bool)
    for m in range(1, _CF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = np.where(np.abs(d) < _CF_TINY, _CF_TINY, d)
        c = 1.0 + aa / c
        c = np.where(np.abs(c) < _CF_TINY, _CF_TINY, c)
        d = 1.0 / d
        h = np.where(done, h, h * d * c)
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = np.where(np.abs(d) < _CF_TINY, _CF_TINY, d)
        c = 1.0 + aa / c
        c = np.where(np.abs(c) < _CF_TINY, _CF_TINY, c)
        d = 1.0 / d
        delta = d * c
        h = np.where(done, h, h * delta)
        done |= np.abs(delta - 1.0) < _CF_EPS
        if done.all():
            return h
    warnings.warn("incomplete beta continued fraction did not converge", RuntimeWarning)
    return h


def beta_cdf(x, c: BetaComponent):
    """Regularized incomplete beta I_x(alpha, beta) on the closed interval [0, 1]."""
    x = np.asarray(x, dtype=np.float64)
    if np.any(~np.isfinite(x)) or np.any((x < 0.0) | (x > 1.0)):
        raise DomainError("beta_cdf argument must lie in [0, 1]")
    a, b = c.alpha, c.beta
    flat = np.atleast_1d(x).ravel()
    out = np.empty_like(flat)
    out[flat == 0.0] = 0.0
    out[flat == 1.0] = 1.0
    inner = (flat > 0.0) & (flat < 1.0)
    if inner.any():
        xi = flat[inner]
        lbt = a * np.log(xi) + b * np.log1p(-xi) - betaln(a, b)
        front = np.exp(lbt)
        direct = xi < (a + 1.0) / (a + b + 2.0)
        res = np.empty_like(xi)
        if direct.any():
            xd = xi[direct]
            res[direct] = front[direct] * _betacf(a, b, xd) / a
        if (~direct).any():
            xs = 1.0 - xi[~direct]
            res[~direct] = 1.0 - front[~direct] * _betacf(b, a, xs) / b
        out[inner] = np.clip(res, 0.0, 1.0)
    out = out.reshape(np.shape(x))
    return float(out) if out.ndim == 0 else out


def _component_logpdfs(x, mix: BetaMixture):
    return np.stack([beta_logpdf(x, c) for c in mix.comps])


def log_likelihood(values, mix: BetaMixture) -> float:
    """Mean log-likelihood of the values under the mixture."""
    x = _check_open(values)
    lp = _component_logpdfs(x, mix)
    with np.errstate(divide="ignore"):
        lw = np.log(np.asarray(mix.weights))[:, None]
    return float(np.mean(np.logaddexp(lw[0] + lp[0], lw[1] + lp[1])))


def _responsibilities(x, mix: BetaMixture):
    lp = _component_logpdfs(x, mix)
    with np.errstate(divide="ignore"):
        lw = np.log(np.asarray(mix.weights))[:, None]
    joint = lw + lp
    norm = np.logaddexp(joint[0], joint[1])
    with np.errstate(invalid="ignore"):
        r = np.exp(joint - norm)
    bad = ~np.isfinite(norm)
    if bad.any():
        # both weighted densities underflow: nearest component mean wins
        m1, m2 = mix.means
        first = np.abs(x[bad] - m1) <= np.abs(x[bad] - m2)
        r[0, bad] = first
        r[1, bad] = ~first
    return r


def posterior(mix: BetaMixture, w):
    """Component posteriors (tau1, tau2) at w; tau1 is the clean probability."""
    x = _check_open(w)
    r = _responsibilities(np.atleast_1d(x).ravel(), mix)
    t1, t2 = r[0].reshape(np.shape(x)), r[1].reshape(np.shape(x))
    if t1.ndim == 0:
        return float(t1), float(t2)
    return t1, t2


def difficulty(mix: BetaMixture, w):
    """tau1 * F1(w) + tau2 * (1 - F2(w)), clamped to [0, 1]."""
    x = _check_open(w)
    t1, t2 = posterior(mix, x)
    lam1 = beta_cdf(x, mix.comps[0])
    lam2 = beta_cdf(x, mix.comps[1])
    eps = np.clip(np.asarray(t1) * lam1 + np.asarray(t2) * (1.0 - np.asarray(lam2)), 0.0, 1.0)
    return float(eps) if eps.ndim == 0 else eps


def _moment_match(x, r):
    tot = r.sum()
    if tot <= 0:
        return None
    mu = float(np.dot(r, x) / tot)
    var = float(np.dot(r, (x - mu) ** 2) / tot)
    var = max(var, VAR_FLOOR)
    mu = min(max(mu, 1e-6), 1.0 - 1e-6)
    common = mu * (1.0 - mu) / var - 1.0
    alpha = mu * common
    beta = alpha * (1.0 - mu) / mu
    alpha = float(np.clip(alpha, SHAPE_MIN, SHAPE_MAX))
    beta = float(np.clip(beta, SHAPE_MIN, SHAPE_MAX))
    return BetaComponent(alpha, beta)


def _component_objective(a, b, s1, s2):
    """Responsibility-weighted mean log-density of Beta(a, b), from its sufficient statistics."""
    return (a - 1.0) * s1 + (b - 1.0) * s2 - betaln(a, b)


def _weighted_mle(logx, log1mx, r, start: BetaComponent, max_steps=25):
    """Maximise the weighted beta log-likelihood over the clipped shape box.

    The objective is concave in (a, b) (log B is convex), so damped Newton from
    the moment-matching estimate converges in a handful of steps. Every accepted
    step, including the clip to [SHAPE_MIN, SHAPE_MAX], increases the objective.
    """
    tot = r.sum()
    s1 = float(np.dot(r, logx) / tot)
    s2 = float(np.dot(r, log1mx) / tot)
    ab = np.array([start.alpha, start.beta])
    f = _component_objective(*ab, s1, s2)
    for _ in range(max_steps):
        a, b = ab
        dab = digamma(a + b)
        g = np.array([s1 - digamma(a) + dab, s2 - digamma(b) + dab])
        t_ab = polygamma(1, a + b)
        # negative Hessian: positive definite
        H = np.array([[polygamma(1, a) - t_ab, -t_ab], [-t_ab, polygamma(1, b) - t_ab]])
        step = np.linalg.solve(H, g)
        t = 1.0
        while t > 1e-10:
            cand = np.clip(ab + t * step, SHAPE_MIN, SHAPE_MAX)
            fc = _component_objective(*cand, s1, s2)
            if fc >= f:
                break
            t *= 0.5
        else:
            break
        moved = np.max(np.abs(cand - ab))
        ab, f = cand, fc
        if moved < 1e-10:
            break
    return BetaComponent(float(ab[0]), float(ab[1]))


@dataclass
class FitTrace:
    log_likelihoods: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False


def fit_bmm(values, init: BetaMixture | None = None, max_iters=50, tol=1e-6, trace: FitTrace | None = None):
    """EM for a two-component beta mixture.

    E-step: posterior responsibilities. M-step: mixing weights from mean
    responsibility; shapes start from the weighted moment-matching estimate
    and are refined by Newton steps on the weighted beta likelihood, clipped
    to [SHAPE_MIN, SHAPE_MAX]. Moment matching alone is not a maximiser and
    can lower the likelihood or stall far from the optimum; with the
    refinement every iteration is a true M-step and the likelihood never drops.
    """
    x = np.asarray(values, dtype=np.float64).ravel()
    if np.any(~np.isfinite(x)):
        raise DomainError("values must be finite")
    if x.size < MIN_VALUES:
        raise FitError(f"need at least {MIN_VALUES} values, got {x.size}")
    _check_open(x)
    if x.var() < VAR_FLOOR:
        raise DegenerateFitError(f"value variance {x.var():.3g} below floor {VAR_FLOOR}")

    mix = (init or BetaMixture.default()).ordered()
    logx, log1mx = np.log(x), np.log1p(-x)
    ll = log_likelihood(x, mix)
    trace = trace if trace is not None else FitTrace()
    trace.log_likelihoods.append(ll)
    for it in range(max_iters):
        r = _responsibilities(x, mix)
        comps = []
        for k in range(2):
            start = _moment_match(x, r[k])
            comps.append(mix.comps[k] if start is None else _weighted_mle(logx, log1mx, r[k], start))
        m1 = float(r[0].mean())
        cand = BetaMixture(tuple(comps), (m1, 1.0 - m1))
        new_ll = log_likelihood(x, cand)
        trace.iterations = it + 1
        if new_ll < ll:
            # only reachable when the shape box binds; keep the better parameters
            trace.converged = True
            break
        delta = new_ll - ll
        mix, ll = cand, new_ll
        trace.log_likelihoods.append(ll)
        if delta < tol:
            trace.converged = True
            break
    return mix.ordered()


@dataclass(frozen=True)
class MixtureBank:
    per_class: tuple
    fallback: BetaMixture
    fallback_used: tuple
    notes: tuple = ()

    def __post_init__(self):
        if len(self.per_class) != len(self.fallback_used):
            raise ParameterError("per_class and fallback_used lengths differ")

    @property
    def n_classes(self) -> int:
        return len(self.per_class)

    def mixture_for(self, c) -> BetaMixture:
        if not 0 <= c < self.n_classes:
            raise ParameterError(f"class {c} outside [0, {self.n_classes})")
        return self.per_class[c]

    def rows(self):
        for c, (mix, fb) in enumerate(zip(self.per_class, self.fallback_used)):
            yield (c, *mix.as_row(), int(fb))


def fit_bank(values, labels, K, warm: MixtureBank | None = None, iters_warm=2, max_iters=50, tol=1e-6):
    """One mixture per class on that class's values.

    Cold start runs full EM from the default init; with ``warm`` each class
    resumes from its previous mixture for ``iters_warm`` iterations. Classes
    with too few or near-constant values share the global fallback fit.
    """
    x = np.asarray(values, dtype=np.float64).ravel()
    y = np.asarray(labels, dtype=np.int64).ravel()
    if x.size == 0:
        raise FitError("cannot fit a bank on an empty dataset")
    if x.shape != y.shape:
        raise ParameterError("values and labels must have equal length")
    if y.min() < 0 or y.max() >= K:
        raise ParameterError(f"labels outside [0, {K})")
    if warm is not None and warm.n_classes != K:
        raise ParameterError("warm bank has a different class count")

    notes = []
    budget = iters_warm if warm is not None else max_iters
    try:
        fallback = fit_bmm(x, warm.fallback if warm is not None else None, budget, tol)
    except FitError as exc:
        fallback = warm.fallback if warm is not None else BetaMixture.default()
        notes.append(f"global fit failed ({exc}); using {'previous' if warm else 'default'} mixture")

    if K == 1:
        return MixtureBank((fallback,), fallback, (False,), tuple(notes))

    per_class, used = [], []
    for c in range(K):
        xc = x[y == c]
        if xc.size < MIN_VALUES or xc.var() < VAR_FLOOR:
            per_class.append(fallback)
            used.append(True)
            continue
        init = warm.per_class[c] if warm is not None and not warm.fallback_used[c] else None
        if warm is not None and init is None:
            init = fallback
        try:
            per_class.append(fit_bmm(xc, init, budget, tol))
            used.append(False)
        except FitError as exc:
            notes.append(f"class {c}: {exc}")
            per_class.append(fallback)
            used.append(True)
    return MixtureBank(tuple(per_class), fallback, tuple(used), tuple(notes))
