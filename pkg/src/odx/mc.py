"""Euler-discretized diffusions, pathwise deflation, and statistical checks.

This is the continuous-time face of the library: drift is removed with the
pointwise solution rho = c^+ a of the structural condition, the numeraire
wealth accumulates through the discrete product form of its integral
equation, and martingale properties are asserted statistically.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .structure import psd_pinv_apply
from .tree import ModelError

DEFAULT_PATHS = 100_000
DEFAULT_STEPS = 256
ABORT_FRACTION_LIMIT = 0.01


def const_fn(value):
    value = np.asarray(value, dtype=np.float64)

    def f(t, x):
        return np.broadcast_to(value, x.shape[:-1] + value.shape).copy()

    return f


def linear_fn(intercept, slope):
    """Affine coefficient t, x -> intercept + x @ slope^T (slope acts on x)."""
    b = np.asarray(intercept, dtype=np.float64)
    A = np.asarray(slope, dtype=np.float64)

    def f(t, x):
        return b + x @ A.T

    return f


@dataclass(frozen=True)
class DiffusionSpec:
    """d-dimensional diffusion dX = a dt + sigma dW, Euler-discretized."""

    d: int
    drift: Callable  # (t, x[..., d]) -> a[..., d]
    sigma: Callable  # (t, x[..., d]) -> sigma[..., d, m]
    m: int
    T: float
    steps: int = DEFAULT_STEPS
    paths: int = DEFAULT_PATHS
    seed: int = 0
    x0: np.ndarray = field(default_factory=lambda: np.zeros(1))

    def __post_init__(self):
        if self.steps < 1 or self.paths < 1:
            raise ModelError("need steps >= 1 and paths >= 1")
        x0 = np.asarray(self.x0, dtype=np.float64).reshape(-1)
        if x0.shape[0] != self.d:
            raise ModelError("x0 dimension mismatch")
        object.__setattr__(self, "x0", x0)


def scalar_spec(a, sigma, T=1.0, steps=DEFAULT_STEPS, paths=DEFAULT_PATHS,
                seed=0, x0=0.0):
    """Constant-coefficient 1-dimensional spec (the workhorse test case)."""
    return DiffusionSpec(d=1, drift=const_fn([a]), sigma=const_fn([[sigma]]),
                         m=1, T=T, steps=steps, paths=paths, seed=seed,
                         x0=[x0])


@dataclass(frozen=True)
class PathEnsemble:
    spec: DiffusionSpec
    t: np.ndarray          # (steps+1,)
    X: np.ndarray          # (paths, steps+1, d)
    V_hat: np.ndarray | None = None  # (paths, steps+1)
    Y_hat: np.ndarray | None = None
    alive: np.ndarray | None = None  # paths surviving deflation
    abort_fraction: float = 0.0


def simulate(spec):
    """Euler scheme dX = a dt + sigma sqrt(dt) xi with counter-based,
    seeded draws; the full normal panel is generated up front so path i is
    identical no matter how the consuming loop is scheduled."""
    n, P, d, m = spec.steps, spec.paths, spec.d, spec.m
    dt = spec.T / n
    rng = np.random.Generator(np.random.Philox(key=spec.seed))
    xi = rng.standard_normal((n, P, m))
    X = np.empty((P, n + 1, d))
    X[:, 0, :] = spec.x0
    sqdt = np.sqrt(dt)
    t = np.linspace(0.0, spec.T, n + 1)
    for step in range(n):
        x = X[:, step, :]
        a = spec.drift(t[step], x)
        sig = spec.sigma(t[step], x)
        dX = a * dt + np.einsum("...ij,...j->...i",
                                np.broadcast_to(sig, (P, d, m)), xi[step]) * sqdt
        if not np.all(np.isfinite(dX)):
            bad = np.argwhere(~np.isfinite(dX))[0]
            raise FloatingPointError(
                f"non-finite increment at step {step}, path {int(bad[0])}")
        X[:, step + 1, :] = x + dX
    return PathEnsemble(spec=spec, t=t, X=X)


def structural_rho(spec, t, x):
    """Pointwise rho = c^+ a with c = sigma sigma^T, batched over paths."""
    a = spec.drift(t, x)
    sig = spec.sigma(t, x)
    sig = np.broadcast_to(sig, x.shape[:-1] + (spec.d, spec.m))
    c = np.einsum("...ik,...jk->...ij", sig, sig)
    if spec.d == 1:
        cc = c[..., 0, 0]
        with np.errstate(divide="ignore", invalid="ignore"):
            rho = np.where(cc > 0.0, a[..., 0] / np.where(cc > 0, cc, 1.0), 0.0)
        return rho[..., None]
    out = np.empty_like(a)
    flat_c = c.reshape(-1, spec.d, spec.d)
    flat_a = a.reshape(-1, spec.d)
    for i in range(flat_c.shape[0]):
        out.reshape(-1, spec.d)[i], _ = psd_pinv_apply(flat_c[i], flat_a[i])
    return out


def deflate_paths(ens):
    """Numeraire wealth V_hat via the discrete product of its integral
    equation, and Y_hat = 1/V_hat; paths whose wealth would hit zero or go
    negative are aborted (recorded, expected O(dt) fraction)."""
    spec = ens.spec
    P, n1, d = ens.X.shape
    n = n1 - 1
    V = np.ones((P, n1))
    alive = np.ones(P, dtype=bool)
    for step in range(n):
        x = ens.X[:, step, :]
        rho = structural_rho(spec, ens.t[step], x)
        dX = ens.X[:, step + 1, :] - x
        growth = 1.0 + np.einsum("pd,pd->p", rho, dX)
        dead = growth <= 0.0
        alive &= ~dead
        growth = np.where(dead, 1.0, growth)
        V[:, step + 1] = V[:, step] * growth
    frac = 1.0 - alive.mean()
    if frac > ABORT_FRACTION_LIMIT:
        raise ModelError(f"excessive deflation abort fraction {frac:.4f}")
    with np.errstate(divide="ignore"):
        Y = 1.0 / V
    return PathEnsemble(spec=spec, t=ens.t, X=ens.X, V_hat=V, Y_hat=Y,
                        alive=alive, abort_fraction=float(frac))


def martingale_test(Z, n_buckets=16, t_max=4.0):
    """t-statistics of mean increments per coarse time bucket.

    Z is (paths, steps+1); PASS iff every bucket |t| <= t_max.  Means are
    accumulated in extended precision (pairwise + math.fsum semantics via
    numpy double on double input; inputs are already float64 here).
    """
    Z = np.asarray(Z, dtype=np.float64)
    P, n1 = Z.shape
    n = n1 - 1
    n_buckets = min(n_buckets, n)
    edges = np.linspace(0, n, n_buckets + 1).astype(int)
    stats = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        D = Z[:, hi] - Z[:, lo]
        sd = D.std(ddof=1)
        t = 0.0 if sd == 0.0 else float(D.mean() / (sd / np.sqrt(P)))
        stats.append(t)
    stats = np.asarray(stats)
    return {"t_stats": stats, "max_abs_t": float(np.max(np.abs(stats))),
            "passed": bool(np.all(np.abs(stats) <= t_max))}


def kw_regress(U, dM):
    """Cross-sectional least-squares surrogate of the conditional
    projection: per step, regress dU on dM across paths (one global bin).

    U is (paths, steps+1); dM is (paths, steps, d).  Returns theta
    (steps, d), the cumulative drift B (steps+1,) with dB = -(mean
    residual), and the root-mean-square of the residual after drift
    removal (the statistical size of the orthogonal part)."""
    U = np.asarray(U, dtype=np.float64)
    dM = np.asarray(dM, dtype=np.float64)
    P, n1 = U.shape
    n = n1 - 1
    d = dM.shape[2]
    theta = np.zeros((n, d))
    dB = np.zeros(n)
    sq = 0.0
    for step in range(n):
        y = U[:, step + 1] - U[:, step]
        x = dM[:, step, :]
        xc = x - x.mean(axis=0)
        cov = xc.T @ xc / P
        cross = xc.T @ (y - y.mean()) / P
        th = np.linalg.pinv(cov, rcond=1e-12, hermitian=True) @ cross
        resid = y - x @ th
        theta[step] = th
        dB[step] = -resid.mean()
        centered = resid - resid.mean()
        sq += float(centered @ centered) / P
    B = np.concatenate([[0.0], np.cumsum(dB)])
    n_norm = float(np.sqrt(sq / n))
    return theta, B, n_norm
