"""Multi-task Gaussian process regression with an intrinsic coregionalization kernel.

The covariance between observations ``(x_i, t_i)`` and ``(x_j, t_j)`` is
``Kf[t_i, t_j] * kx(x_i, x_j)`` where ``kx`` is a unit-amplitude squared
exponential on inputs scaled to [0, 1] and ``Kf = L @ L.T`` is a learned
task covariance.  Each task carries its own observation-noise variance.

Hyperparameters are fitted by maximizing the log marginal likelihood plus a
weak quadratic log-space prior, with a multi-start compass search that
evaluates all polling candidates of all restarts as one batched Cholesky.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .errors import ConfigurationError, NumericalDegeneracyError, ParameterDomainError

LOG_2PI = math.log(2 * math.pi)
JITTERS = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6)


@dataclass
class Dataset:
    """Observations ``(X, y, t)``; ``x_bounds`` maps gear ratios onto [0, 1]."""

    X: list = field(default_factory=list)
    y: list = field(default_factory=list)
    t: list = field(default_factory=list)
    x_bounds: tuple = (16.0, 144.0)
    labels: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X, self.y, self.t = list(self.X), list(self.y), [int(k) for k in self.t]
        if not len(self.X) == len(self.y) == len(self.t):
            raise ParameterDomainError("X, y and t must have equal length")
        if any(k < 0 for k in self.t):
            raise ParameterDomainError("task indices must be non-negative")
        lo, hi = self.x_bounds
        if not lo < hi:
            raise ParameterDomainError("x_bounds must be increasing")

    def __len__(self):
        return len(self.X)

    @property
    def T(self):
        return len(self.X)

    @property
    def M(self):
        return max(self.t) + 1 if self.t else 0

    def append(self, x, y, t):
        if t < 0:
            raise ParameterDomainError("task index must be non-negative")
        self.X.append(float(x))
        self.y.append(float(y))
        self.t.append(int(t))

    def copy(self):
        return Dataset(list(self.X), list(self.y), list(self.t), self.x_bounds,
                       dict(self.labels))

    def with_y(self, y):
        return Dataset(list(self.X), list(y), list(self.t), self.x_bounds,
                       dict(self.labels))

    def normalized_x(self, x=None):
        lo, hi = self.x_bounds
        x = np.asarray(self.X if x is None else x, dtype=float)
        return (x - lo) / (hi - lo)

    def arrays(self):
        return (self.normalized_x(), np.asarray(self.y, dtype=float),
                np.asarray(self.t, dtype=int))


@dataclass(frozen=True)
class MtgpHyperparams:
    """Input length-scale, task-covariance Cholesky factor and per-task noise."""

    lengthscale: float
    chol: np.ndarray
    noise: np.ndarray

    def __post_init__(self):
        chol = np.tril(np.atleast_2d(np.asarray(self.chol, dtype=float)))
        noise = np.atleast_1d(np.asarray(self.noise, dtype=float))
        if self.lengthscale <= 0:
            raise ParameterDomainError("lengthscale must be positive")
        if chol.shape[0] != chol.shape[1] or chol.shape[0] != noise.size:
            raise ParameterDomainError("chol must be MxM and noise length M")
        if np.any(np.diag(chol) <= 0):
            raise ParameterDomainError("chol diagonal must be strictly positive")
        if np.any(noise <= 0):
            raise ParameterDomainError("noise variances must be positive")
        object.__setattr__(self, "chol", chol)
        object.__setattr__(self, "noise", noise)

    @property
    def M(self):
        return self.noise.size

    @property
    def task_cov(self):
        return self.chol @ self.chol.T

    @property
    def task_corr(self):
        kf = self.task_cov
        d = np.sqrt(np.diag(kf))
        corr = kf / np.outer(d, d)
        np.fill_diagonal(corr, 1.0)
        return np.clip(corr, -1.0, 1.0)

    @classmethod
    def from_task_cov(cls, lengthscale, task_cov, noise):
        return cls(lengthscale, np.linalg.cholesky(np.asarray(task_cov, dtype=float)),
                   noise)


@dataclass(frozen=True)
class HyperPrior:
    """Log-space box and quadratic pull for every free hyperparameter.

    Ranges are ``(low, high)`` in log space except ``offdiag``, which bounds
    the raw off-diagonal Cholesky entries.  The penalty is
    ``weight * sum(((theta - center) / half_width)**2)``; the center is the
    box midpoint except for ``offdiag_center``.
    """

    log_lengthscale: tuple = (math.log(0.05), math.log(2.0))
    log_diag: tuple = (math.log(0.1), math.log(10.0))
    offdiag: tuple = (-5.0, 5.0)
    offdiag_center: float = 0.5
    log_noise: tuple = (math.log(1e-3), math.log(1.0))
    weight: float = 1e-2

    def __post_init__(self):
        for name in ("log_lengthscale", "log_diag", "offdiag", "log_noise"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ConfigurationError(f"empty prior range for {name}")
        if not self.offdiag[0] <= self.offdiag_center <= self.offdiag[1]:
            raise ConfigurationError("offdiag_center outside its range")
        if self.weight < 0:
            raise ConfigurationError("prior weight must be non-negative")

    def box(self, M):
        """``(low, high, center)`` arrays over the packed parameter vector."""
        lo, hi, c = [], [], []

        def add(rng, center=None):
            lo.append(rng[0])
            hi.append(rng[1])
            c.append(0.5 * (rng[0] + rng[1]) if center is None else center)

        add(self.log_lengthscale)
        for i in range(M):
            for _ in range(i):
                add(self.offdiag, self.offdiag_center)
            add(self.log_diag)
        for _ in range(M):
            add(self.log_noise)
        return np.array(lo), np.array(hi), np.array(c)

    def penalty(self, theta, M):
        lo, hi, c = self.box(M)
        z = (np.asarray(theta) - c) / (0.5 * (hi - lo))
        return self.weight * np.sum(z * z, axis=-1)

    def default_params(self, M):
        return unpack(self.box(M)[2], M)


def n_params(M):
    return 1 + M * (M + 1) // 2 + M


def pack(h):
    """Flatten hyperparameters into the search space used by the fit."""
    theta = [math.log(h.lengthscale)]
    for i in range(h.M):
        theta.extend(h.chol[i, :i])
        theta.append(math.log(h.chol[i, i]))
    theta.extend(np.log(h.noise))
    return np.array(theta)


def _unpack_batch(theta, M):
    theta = np.atleast_2d(theta)
    B = theta.shape[0]
    ell = np.exp(theta[:, 0])
    chol = np.zeros((B, M, M))
    k = 1
    for i in range(M):
        chol[:, i, :i] = theta[:, k:k + i]
        chol[:, i, i] = np.exp(theta[:, k + i])
        k += i + 1
    noise = np.exp(theta[:, k:k + M])
    return ell, chol, noise


def unpack(theta, M):
    ell, chol, noise = _unpack_batch(theta, M)
    return MtgpHyperparams(float(ell[0]), chol[0], noise[0])


# --- kernel and Gram matrix -----------------------------------------------


def kernel_input(xa, xb, lengthscale):
    """Unit-amplitude squared exponential on normalized inputs."""
    if not lengthscale > 0:
        raise ParameterDomainError("lengthscale must be positive")
    d = np.subtract(xa, xb)
    return np.exp(-0.5 * d * d / lengthscale**2)


@dataclass(frozen=True)
class GramMatrix:
    K: np.ndarray
    chol: np.ndarray
    jitter: float
    data: Dataset


def _check_tasks(data, h):
    if data.M > h.M:
        raise ParameterDomainError(
            f"dataset uses task {data.M - 1} but hyperparameters cover {h.M} tasks")


def gram(data, h):
    """Noisy Gram matrix ``Kf[t_i,t_j] kx(x_i,x_j) + [i=j] noise[t_i]``."""
    _check_tasks(data, h)
    x, _, t = data.arrays()
    K = h.task_cov[np.ix_(t, t)] * kernel_input(x[:, None], x[None, :], h.lengthscale)
    K[np.diag_indices_from(K)] += h.noise[t]
    return K


def stable_cholesky(K):
    """Lower Cholesky factor, escalating diagonal jitter on failure."""
    eye = np.eye(K.shape[0])
    for jitter in JITTERS:
        try:
            return np.linalg.cholesky(K + jitter * eye), jitter
        except np.linalg.LinAlgError:
            continue
    cond = float(np.linalg.cond(K))
    raise NumericalDegeneracyError(
        f"Cholesky failed with jitter up to {JITTERS[-1]:g} (condition number {cond:.3g})",
        condition_number=cond)


def build_gram(data, h):
    K = gram(data, h)
    L, jitter = stable_cholesky(K)
    return GramMatrix(K, L, jitter, data)


def log_marginal_likelihood(data, h):
    if data.T == 0:
        raise ParameterDomainError("log marginal likelihood needs at least one point")
    g = build_gram(data, h)
    y = np.asarray(data.y, dtype=float)
    alpha = cho_solve((g.chol, True), y)
    return float(-0.5 * y @ alpha - np.sum(np.log(np.diag(g.chol)))
                 - 0.5 * data.T * LOG_2PI)


# --- posterior --------------------------------------------------------------


@dataclass(frozen=True)
class Posterior:
    mean: float
    var: float


class MultiTaskGP:
    """A multi-task GP conditioned on a dataset; immutable once built.

    ``y`` is used as given; :func:`condition` standardizes it first.
    """

    def __init__(self, data, h):
        _check_tasks(data, h)
        self.data = data.copy()
        self.h = h
        self._y = np.asarray(self.data.y, dtype=float)
        if self.data.T:
            self.gram = build_gram(self.data, h)
            self._alpha = cho_solve((self.gram.chol, True), self._y)
        else:
            self.gram = None
            self._alpha = np.empty(0)

    def cross_cov(self, x, task):
        """Covariances between queries ``x`` (gear ratios) of one task and the data."""
        if not 0 <= task < self.h.M:
            raise ParameterDomainError(f"unknown task index {task}")
        xq = self.data.normalized_x(np.atleast_1d(x))
        xd, _, t = self.data.arrays()
        return self.h.task_cov[task, t][None, :] * kernel_input(
            xq[:, None], xd[None, :], self.h.lengthscale)

    def predict(self, x, task):
        """Latent mean and variance at gear ratios ``x`` for ``task``."""
        if not 0 <= task < self.h.M:
            raise ParameterDomainError(f"unknown task index {task}")
        x = np.atleast_1d(np.asarray(x, dtype=float))
        prior = np.full(x.shape, self.h.task_cov[task, task])
        if self.gram is None:
            return np.zeros(x.shape), prior
        k = self.cross_cov(x, task)
        mean = k @ self._alpha
        v = solve_triangular(self.gram.chol, k.T, lower=True)
        var = prior - np.sum(v * v, axis=0)
        return mean, np.maximum(var, 0.0)

    def posterior(self, x, task):
        mean, var = self.predict([x], task)
        return Posterior(float(mean[0]), float(var[0]))


def posterior(data, h, x, task):
    return MultiTaskGP(data, h).posterior(x, task)


# --- output standardization -------------------------------------------------


@dataclass(frozen=True)
class Standardizer:
    mean: float = 0.0
    scale: float = 1.0

    @classmethod
    def fit(cls, y):
        y = np.asarray(y, dtype=float)
        if y.size < 2:
            return cls()
        scale = float(np.std(y))
        return cls(float(np.mean(y)), scale if scale > 0 else 1.0)

    def transform(self, y):
        return (np.asarray(y, dtype=float) - self.mean) / self.scale

    def inverse(self, z):
        return np.asarray(z, dtype=float) * self.scale + self.mean


# --- hyperparameter fitting -------------------------------------------------


def _batched_objective(theta, x, y, t, M, prior):
    """Penalized log marginal likelihood for each row of ``theta``.

    The Gram matrix is bordered with ``y`` so one batched Cholesky yields
    both ``log|K|`` and ``||L^-1 y||^2`` (the last row of the factor holds
    ``L^-1 y``).  Rows that stay indefinite after jitter score ``-inf``.
    """
    ell, chol, noise = _unpack_batch(theta, M)
    B, T = theta.shape[0], y.size
    kf = (chol @ np.swapaxes(chol, 1, 2)).reshape(B, M * M)
    d2 = (x[:, None] - x[None, :]) ** 2
    A = np.empty((B, T + 1, T + 1))
    K = A[:, :T, :T]
    np.multiply(np.take(kf, (t[:, None] * M + t[None, :]).ravel(), axis=1).reshape(B, T, T),
                np.exp(d2[None] * (-0.5 / ell**2)[:, None, None]), out=K)
    idx = np.arange(T)
    K[:, idx, idx] += noise[:, t]
    A[:, T, :T] = y
    A[:, :T, T] = y
    # strictly above y' K^-1 y, since K >= min(noise) * I
    A[:, T, T] = y @ y / noise.min(axis=1) + 1.0
    ok = np.ones(B, dtype=bool)
    try:
        La = np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        La = np.zeros_like(A)
        for b in range(B):
            try:
                La[b] = np.linalg.cholesky(A[b])
            except np.linalg.LinAlgError:
                try:
                    Lk = stable_cholesky(A[b, :T, :T])[0]
                except NumericalDegeneracyError:
                    ok[b] = False
                    La[b] = np.eye(T + 1)
                    continue
                La[b, :T, :T] = Lk
                La[b, T, :T] = solve_triangular(Lk, y, lower=True)
                La[b, T, T] = 1.0
    z = La[:, T, :T]
    logdet = np.sum(np.log(La[:, idx, idx]), axis=1)
    ll = -0.5 * np.sum(z * z, axis=1) - logdet - 0.5 * T * LOG_2PI
    out = ll - prior.penalty(theta, M)
    out[~ok] = -np.inf
    return np.where(np.isfinite(out), out, -np.inf)


@dataclass
class FitResult:
    params: MtgpHyperparams
    objective: float
    traces: list
    evaluations: int


def fit_hyperparameters_traced(data, prior=HyperPrior(), restarts=8, rng=None, *,
                               M=None, warm_start=None, max_iter=200, step=1.0,
                               warm_step=0.25, tol=0.05):
    """Multi-start compass search on the penalized log marginal likelihood.

    Each restart polls ``theta +/- step`` along every coordinate and also
    tries the combined move along all coordinates that improved.  It moves
    to the best strictly improving candidate and doubles its step, or halves
    the step when nothing improves; it stops once the step drops below ``tol``
    or after ``max_iter`` polls.  ``warm_start`` adds one extra restart that
    begins at the given hyperparameters with the smaller ``warm_step``.
    ``traces`` holds the accepted objective values of every restart.
    """
    M = max(data.M, 1) if M is None else M
    if M < data.M:
        raise ParameterDomainError("M smaller than the number of tasks in data")
    if data.T == 0:
        default = prior.default_params(M)
        return FitResult(default, float("nan"), [], 0)
    rng = np.random.default_rng(rng)
    x, y, t = data.arrays()
    lo, hi, center = prior.box(M)
    P = lo.size

    starts = [lo + (hi - lo) * rng.random(P) for _ in range(restarts)]
    steps = [step] * restarts
    if warm_start is not None:
        w = warm_start
        if w.M < M:
            w = _extend(w, M, prior)
        starts.insert(0, np.clip(pack(w), lo, hi))
        steps.insert(0, warm_step)
    if not starts:
        starts, steps = [center.copy()], [step]
    theta = np.array(starts)
    steps = np.array(steps, dtype=float)
    R = theta.shape[0]
    f = _batched_objective(theta, x, y, t, M, prior)
    evals = R
    traces = [[v] for v in f]

    directions = np.concatenate([np.eye(P), -np.eye(P)])
    active = np.isfinite(f) & (steps >= tol)
    for _ in range(max_iter):
        if not active.any():
            break
        ids = np.flatnonzero(active)
        n = ids.size
        cand = theta[ids, None, :] + steps[ids, None, None] * directions[None]
        cand = np.clip(cand, lo, hi)
        fc = _batched_objective(cand.reshape(-1, P), x, y, t, M, prior).reshape(n, 2 * P)
        # combined move along every coordinate whose better sign improved
        up = fc[:, :P] >= fc[:, P:]
        gain = np.where(up, fc[:, :P], fc[:, P:]) > f[ids, None]
        sign = np.where(up, 1.0, -1.0) * gain
        combo = np.clip(theta[ids] + steps[ids, None] * sign, lo, hi)
        multi = gain.sum(axis=1) > 1
        fcombo = np.full(n, -np.inf)
        if multi.any():
            fcombo[multi] = _batched_objective(combo[multi], x, y, t, M, prior)
        evals += cand.shape[0] * cand.shape[1] + int(multi.sum())
        best = np.argmax(fc, axis=1)
        for k, r in enumerate(ids):
            fb, xb = fc[k, best[k]], cand[k, best[k]]
            if fcombo[k] > fb:
                fb, xb = fcombo[k], combo[k]
            if fb > f[r]:
                theta[r], f[r] = xb, fb
                traces[r].append(fb)
                steps[r] = min(2 * steps[r], step)
            else:
                steps[r] *= 0.5
        active = steps >= tol

    if not np.isfinite(f).any():
        raise NumericalDegeneracyError("every restart failed to factorize the Gram matrix")
    r = int(np.argmax(f))
    return FitResult(unpack(theta[r], M), float(f[r]), traces, evals)


def fit_hyperparameters(data, prior=HyperPrior(), restarts=8, rng=None, **kw):
    return fit_hyperparameters_traced(data, prior, restarts, rng, **kw).params


def penalized_objective(data, h, prior=HyperPrior()):
    x, y, t = data.arrays()
    return float(_batched_objective(pack(h)[None], x, y, t, h.M, prior)[0])


def _extend(h, M, prior):
    """Grow hyperparameters to ``M`` tasks; new rows start at the prior center."""
    base = prior.default_params(M)
    chol = base.chol.copy()
    chol[:h.M, :h.M] = h.chol
    noise = base.noise.copy()
    noise[:h.M] = h.noise
    return MtgpHyperparams(h.lengthscale, chol, noise)


def fit_model(data, prior=HyperPrior(), restarts=8, rng=None, *, M=None,
              warm_start=None, **kw):
    """Standardize outputs, fit hyperparameters and condition the GP.

    Returns ``(model, standardizer, fit_result)``; the model works in
    standardized units.
    """
    std = Standardizer.fit(data.y)
    z = data.with_y(std.transform(data.y)) if data.T else data.copy()
    res = fit_hyperparameters_traced(z, prior, restarts, rng, M=M,
                                     warm_start=warm_start, **kw)
    return MultiTaskGP(z, res.params), std, res


def condition(data, h):
    """Re-standardize ``data`` and condition a GP with fixed hyperparameters."""
    std = Standardizer.fit(data.y)
    z = data.with_y(std.transform(data.y)) if data.T else data.copy()
    return MultiTaskGP(z, h), std


def hyperparams_dump(h, std=None):
    """Flat ``key = value`` lines for report embedding."""
    lines = [f"lengthscale = {h.lengthscale!r}"]
    for i in range(h.M):
        for j in range(h.M):
            lines.append(f"L_{i}_{j} = {float(h.chol[i, j])!r}")
    for i, s in enumerate(h.noise):
        lines.append(f"noise_{i} = {float(s)!r}")
    if std is not None:
        lines.append(f"y_mean = {std.mean!r}")
        lines.append(f"y_scale = {std.scale!r}")
    return "\n".join(lines) + "\n"
