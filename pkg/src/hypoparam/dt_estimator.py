"""NARMA(2, q) models: structures, conditional likelihood, fitting, simulation.

A model reads

    X_n = mu + a1 X_{n-1} + a2 X_{n-2} + sum_k b_k Q_k + sum_j c_j xi_{n-j} + xi_n

with structure-specific nonlinear regressors ``Q_k`` (see ``REGRESSORS``) and
i.i.d. ``xi_n ~ N(0, c0^2)``.  Residuals are reconstructed recursively from
data starting from zero shocks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy import optimize

from .errors import (
    DegenerateDataError,
    InstabilityError,
    InsufficientDataError,
    NumericOverflowError,
)
from .rng import as_generator
from .sde_sim import ObservationSeries

P_ORDER = 2
DIVERGENCE_GUARD = 1e10

REGRESSORS = {
    "ARMA": (),
    "M1": ("X2^3",),
    "M2": ("X1^3", "X2^2*(X1-X2)"),
    "M3": ("X1^3", "X2^2*(X1-X2)", "X2^3"),
    "M4": ("X1^3", "X2^2*X1", "X2^3", "X2^5", "X2^2*xi1"),
}
_CODES = {"ARMA": 0, "M1": 1, "M2": 2, "M3": 3, "M4": 4}


@dataclass(frozen=True)
class NarmaSpec:
    structure: str
    q: int = 0
    p: int = P_ORDER

    def __post_init__(self):
        if self.structure not in REGRESSORS:
            raise ValueError(f"unknown NARMA structure {self.structure!r}")
        if self.p != P_ORDER:
            raise ValueError("only p = 2 is supported")
        if self.q < 0:
            raise ValueError("q must be >= 0")
        if self.structure == "M4" and self.q < 1:
            raise ValueError("structure M4 requires q >= 1")

    @property
    def m(self) -> int:
        return max(self.p, self.q)

    @property
    def n_nonlinear(self) -> int:
        return len(REGRESSORS[self.structure])

    @property
    def dim(self) -> int:
        return self.p + self.n_nonlinear + self.q + 1

    @property
    def code(self) -> int:
        return _CODES[self.structure]


@dataclass(frozen=True)
class NarmaModel:
    spec: NarmaSpec
    a: tuple
    b: tuple
    c: tuple
    mu: float
    c0: float
    converged: bool = True
    nll: float | None = field(default=None, compare=False)

    def __post_init__(self):
        for name in ("a", "b", "c"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        if len(self.a) != self.spec.p:
            raise ValueError("need exactly p AR coefficients")
        if len(self.b) != self.spec.n_nonlinear:
            raise ValueError(f"{self.spec.structure} takes {self.spec.n_nonlinear} nonlinear coefficients")
        if len(self.c) != self.spec.q:
            raise ValueError("need exactly q MA coefficients")
        if not self.c0 >= 0:
            raise ValueError("c0 must be nonnegative")

    def _kernel_args(self):
        return (
            self.spec.code, self.a[0], self.a[1],
            np.array(self.b, dtype=float), np.array(self.c, dtype=float), float(self.mu),
        )

    def ma_roots(self) -> np.ndarray:
        """Roots of ``1 + c_1 z + ... + c_q z^q`` (diagnostic only)."""
        if not self.c:
            return np.array([])
        return np.roots(list(reversed(self.c)) + [1.0])

    def to_text(self) -> str:
        lines = [
            f"structure = {self.spec.structure}",
            f"p = {self.spec.p}",
            f"q = {self.spec.q}",
        ]
        lines += [f"a{i} = {v!r}" for i, v in enumerate(self.a, 1)]
        lines += [f"b{i} = {v!r}" for i, v in enumerate(self.b, 1)]
        lines += [f"c{i} = {v!r}" for i, v in enumerate(self.c, 1)]
        lines += [f"mu = {self.mu!r}", f"c0 = {self.c0!r}"]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "NarmaModel":
        kv = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            kv[key.strip()] = value.strip()
        spec = NarmaSpec(kv["structure"], q=int(kv["q"]), p=int(kv["p"]))

        def seq(prefix, n):
            return tuple(float(kv[f"{prefix}{i}"]) for i in range(1, n + 1))

        return cls(
            spec, seq("a", spec.p), seq("b", spec.n_nonlinear), seq("c", spec.q),
            float(kv["mu"]), float(kv["c0"]),
        )


@dataclass(frozen=True)
class ResidualTrace:
    xi: np.ndarray  # xi_n for n = m+1..N
    m: int


@dataclass(frozen=True)
class StabilityReport:
    stable: bool
    diverged_count: int
    n_realizations: int


# --------------------------------------------------------------------------
# Compiled recursions
# --------------------------------------------------------------------------


@numba.njit(cache=True)
def _nonlinear(code, x1, x2, xi1, b):
    if code == 1:
        return b[0] * x2 * x2 * x2
    if code == 2:
        return b[0] * x1 * x1 * x1 + b[1] * x2 * x2 * (x1 - x2)
    if code == 3:
        return b[0] * x1 * x1 * x1 + b[1] * x2 * x2 * (x1 - x2) + b[2] * x2 * x2 * x2
    if code == 4:
        x2sq = x2 * x2
        return (
            b[0] * x1 * x1 * x1 + b[1] * x2sq * x1 + b[2] * x2sq * x2
            + b[3] * x2sq * x2sq * x2 + b[4] * x2sq * xi1
        )
    return 0.0


@numba.njit(cache=True)
def _phi(t, xs, xis, code, a1, a2, b, c, mu):
    """Conditional mean of ``xs[t]`` given the history stored before ``t``."""
    x1 = xs[t - 1]
    x2 = xs[t - 2]
    val = mu + a1 * x1 + a2 * x2 + _nonlinear(code, x1, x2, xis[t - 1], b)
    for j in range(c.shape[0]):
        val += c[j] * xis[t - 1 - j]
    return val


@numba.njit(cache=True)
def _residuals(x, m, code, a1, a2, b, c, mu):
    n = x.shape[0]
    xis = np.zeros(n)
    for t in range(m, n):
        ph = _phi(t, x, xis, code, a1, a2, b, c, mu)
        if not np.isfinite(ph):
            return xis, t
        xis[t] = x[t] - ph
    return xis, -1


@numba.njit(cache=True)
def _residual_sum(x, m, code, a1, a2, b, c, mu):
    xis, bad = _residuals(x, m, code, a1, a2, b, c, mu)
    if bad >= 0:
        return np.inf
    s = 0.0
    for t in range(m, x.shape[0]):
        s += xis[t] * xis[t]
    return s


@numba.njit(cache=True)
def _run(xs, xis, start, code, a1, a2, b, c, mu, guard):
    """Fill ``xs[start:]`` forward; ``xis[start:]`` holds the fresh shocks.

    Returns the first index that diverged, or -1.
    """
    for t in range(start, xs.shape[0]):
        val = _phi(t, xs, xis, code, a1, a2, b, c, mu) + xis[t]
        if not (abs(val) <= guard):
            return t
        xs[t] = val
    return -1


@numba.njit(cache=True)
def _run_ensemble(window, window_xi, shocks, code, a1, a2, b, c, mu, guard, out, bad):
    """Members share ``window``; ``shocks`` has shape (members, n_new)."""
    members, n_new = shocks.shape
    m = window.shape[0]
    xs = np.empty(m + n_new)
    xis = np.empty(m + n_new)
    for j in range(members):
        xs[:m] = window
        xis[:m] = window_xi
        xis[m:] = shocks[j]
        bad[j] = _run(xs, xis, m, code, a1, a2, b, c, mu, guard)
        out[j] = xs[m:]


# --------------------------------------------------------------------------
# Likelihood
# --------------------------------------------------------------------------


def _series(obs) -> np.ndarray:
    return np.asarray(getattr(obs, "values", obs), dtype=float)


def compute_residuals(model: NarmaModel, obs) -> ResidualTrace:
    x = _series(obs)
    m = model.spec.m
    if x.size <= m:
        raise InsufficientDataError(f"need more than {m} observations")
    xis, bad = _residuals(x, m, *model._kernel_args())
    if bad >= 0:
        raise NumericOverflowError(bad)
    return ResidualTrace(xis[m:].copy(), m)


def conditional_nll(model: NarmaModel, obs) -> float:
    """Negative conditional log-likelihood given zero initial shocks."""
    x = _series(obs)
    trace = compute_residuals(model, x)
    c0sq = model.c0 ** 2
    s = float(np.dot(trace.xi, trace.xi))
    return s / (2.0 * c0sq) + 0.5 * (x.size - model.spec.q) * math.log(c0sq)


def _design(spec: NarmaSpec, x: np.ndarray, xi: np.ndarray | None, start: int) -> np.ndarray:
    """Regressor matrix for rows ``t = start..N-1``: AR, nonlinear, MA, intercept."""
    x1 = x[start - 1:-1]
    x2 = x[start - 2:-2]
    cols = [x1, x2]
    s = spec.structure
    if s == "M1":
        cols += [x2 ** 3]
    elif s in ("M2", "M3"):
        cols += [x1 ** 3, x2 ** 2 * (x1 - x2)]
        if s == "M3":
            cols += [x2 ** 3]
    elif s == "M4":
        xi1 = xi[start - 1:-1] if xi is not None else np.zeros_like(x1)
        cols += [x1 ** 3, x2 ** 2 * x1, x2 ** 3, x2 ** 5, x2 ** 2 * xi1]
    for j in range(1, spec.q + 1):
        cols.append(xi[start - j:x.size - j] if xi is not None else np.zeros_like(x1))
    cols.append(np.ones_like(x1))
    return np.column_stack(cols)


def _lstsq(design: np.ndarray, target: np.ndarray):
    rank = np.linalg.matrix_rank(design)
    if rank < design.shape[1]:
        raise DegenerateDataError(f"design matrix has rank {rank} < {design.shape[1]}")
    coef, *_ = np.linalg.lstsq(design, target, rcond=None)
    return coef


def least_squares_fit(spec: NarmaSpec, obs) -> np.ndarray:
    """Linear least squares on the observed-only regressors (no MA terms).

    Returns the coefficient vector in the order ``a, b, c, mu`` with ``c``
    (and any shock-dependent ``b``) set to zero.
    """
    x = _series(obs)
    m = spec.m
    full = _design(spec, x, None, m)
    keep = _observed_columns(spec)
    coef = np.zeros(spec.dim)
    coef[keep] = _lstsq(full[:, keep], x[m:])
    return coef


def _observed_columns(spec: NarmaSpec) -> np.ndarray:
    keep = np.ones(spec.dim, dtype=bool)
    r = spec.n_nonlinear
    if spec.structure == "M4":
        keep[spec.p + r - 1] = False
    keep[spec.p + r:spec.p + r + spec.q] = False
    return keep


def _unpack(spec: NarmaSpec, theta: np.ndarray):
    p, r, q = spec.p, spec.n_nonlinear, spec.q
    return theta[:p], theta[p:p + r], theta[p + r:p + r + q], theta[-1]


def _model_from(spec, theta, c0, converged=True, nll=None) -> NarmaModel:
    a, b, c, mu = _unpack(spec, theta)
    return NarmaModel(spec, tuple(a), tuple(b), tuple(c), float(mu), float(c0), converged, nll)


def _profiled_nll(rss: float, n: int, q: int) -> float:
    """Conditional NLL with ``c0^2 = rss / (N - q)`` substituted."""
    k = n - q
    return 0.5 * k * (1.0 + math.log(rss / k))


@dataclass
class FitDiagnostics:
    best_history: list
    converged: bool


def fit_narma(spec: NarmaSpec, obs, restarts: int = 5, rng=None, max_iter: int | None = None,
              diagnostics: FitDiagnostics | None = None) -> NarmaModel:
    """Conditional maximum-likelihood fit.

    ``q = 0`` is an exact least-squares solve.  ``q >= 1`` runs Nelder-Mead on
    the profiled likelihood from the least-squares start (MA terms zero) in
    coordinates whitened by a two-stage regression, keeping the best of
    ``restarts`` jittered runs.
    """
    x = _series(obs)
    n = x.size
    if n < 50 * spec.dim:
        raise InsufficientDataError(f"{spec.structure}(q={spec.q}) needs at least {50 * spec.dim} observations, got {n}")
    m = spec.m
    theta0 = least_squares_fit(spec, x)

    if spec.q == 0 and spec.structure != "M4":
        resid = x[m:] - _design(spec, x, None, m) @ theta0
        rss = float(np.dot(resid, resid))
        c0 = math.sqrt(rss / (n - spec.q))
        if diagnostics is not None:
            diagnostics.best_history = [_profiled_nll(rss, n, spec.q)]
            diagnostics.converged = True
        return _model_from(spec, theta0, c0, True, _profiled_nll(rss, n, spec.q))

    scale = _whitening(spec, x, theta0)
    code = spec.code

    def objective(u):
        theta = theta0 + scale @ u
        a, b, c, mu = _unpack(spec, theta)
        rss = _residual_sum(x, m, code, a[0], a[1], b, c, mu)
        if not np.isfinite(rss) or rss <= 0:
            return np.inf
        return _profiled_nll(rss, n, spec.q)

    rng = as_generator(0 if rng is None else rng)
    dim = spec.dim
    options = {"xatol": 1e-4, "fatol": 1e-7, "maxiter": max_iter or 600 * dim, "maxfev": 10 ** 9, "adaptive": dim > 4}
    best_u = np.zeros(dim)
    best_f = objective(best_u)
    converged = False
    history = []
    for k in range(max(1, restarts)):
        start = best_u if k == 0 else best_u + rng.standard_normal(dim)
        res = optimize.minimize(objective, start, method="Nelder-Mead", options=options)
        if res.fun <= best_f:
            best_u, best_f = res.x, float(res.fun)
            converged = bool(res.success)
        history.append(best_f)
    theta = theta0 + scale @ best_u
    a, b, c, mu = _unpack(spec, theta)
    rss = _residual_sum(x, m, code, a[0], a[1], b, c, mu)
    if diagnostics is not None:
        diagnostics.best_history = history
        diagnostics.converged = converged
    return _model_from(spec, theta, math.sqrt(rss / (n - spec.q)), converged, best_f)


def _whitening(spec: NarmaSpec, x: np.ndarray, theta0: np.ndarray) -> np.ndarray:
    """Cholesky factor of the two-stage regression covariance of all coefficients."""
    m = spec.m
    stage1 = np.zeros(x.size)
    stage1[m:] = x[m:] - _design(spec, x, None, m) @ theta0
    start = m + spec.q
    design = _design(spec, x, stage1, start)
    target = x[start:]
    coef = _lstsq(design, target)
    resid = target - design @ coef
    s2 = float(np.dot(resid, resid)) / max(1, target.size - design.shape[1])
    cov = s2 * np.linalg.inv(design.T @ design)
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        return np.diag(np.sqrt(np.abs(np.diag(cov))))


# --------------------------------------------------------------------------
# Simulation
# --------------------------------------------------------------------------


def simulate_narma(model: NarmaModel, n_steps: int, init, rng, init_shocks=None,
                   guard: float = DIVERGENCE_GUARD) -> np.ndarray:
    """Iterate the model ``n_steps`` times past the ``init`` window.

    ``init`` supplies at least ``p`` past values; ``init_shocks`` (default
    zeros) aligns with ``init``.  Returns only the new values.
    """
    init = np.asarray(init, dtype=float)
    if init.size < model.spec.p:
        raise ValueError(f"init window needs at least {model.spec.p} values")
    w = init.size
    xs = np.empty(w + n_steps)
    xs[:w] = init
    xis = np.zeros(w + n_steps)
    if init_shocks is not None:
        xis[:w] = np.asarray(init_shocks, dtype=float)
    xis[w:] = model.c0 * as_generator(rng).standard_normal(n_steps)
    bad = _run(xs, xis, w, *model._kernel_args(), guard)
    if bad >= 0:
        raise InstabilityError(bad - w)
    return xs[w:]


def window_shocks(model: NarmaModel, window: np.ndarray) -> np.ndarray:
    """Shocks over an initial window, reconstructed from zero start."""
    window = np.asarray(window, dtype=float)
    m = model.spec.m
    if window.size <= m:
        return np.zeros(window.size)
    xis, bad = _residuals(window, m, *model._kernel_args())
    if bad >= 0:
        raise NumericOverflowError(bad)
    return xis


def stability_probe(model: NarmaModel, horizon: int, n_realizations: int, rng) -> StabilityReport:
    if horizon < 10 ** 5:
        raise ValueError("stability probe horizon must be at least 1e5 steps")
    rng = as_generator(rng)
    diverged = 0
    init = np.zeros(model.spec.p)
    for _ in range(n_realizations):
        try:
            simulate_narma(model, horizon, init, rng)
        except InstabilityError:
            diverged += 1
    return StabilityReport(diverged == 0, diverged, n_realizations)
