"""Stochastic exponentials, the log-optimal numeraire, and deflator families.

On a tree the stochastic exponential is the running product of (1 + dZ).
The numeraire portfolio is solved exactly per node from the first-order
condition of log-wealth, which makes 1/V_hat and X_i/V_hat exact
martingales; product deflators (1/V_hat) * E(L) are generated from jump
martingales orthogonal (under the implied martingale measure) to the
martingale part of the market.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import null_space

from .tree import (AdaptedProcess, ArbitrageError, ModelError,
                   PredictableProcess, child_weighted_sums,
                   doob_decompose, path_cumprod)

NEWTON_TOL = 1e-15
NEWTON_MAXITER = 100
RHO_CAP = 1e8
DEFAULT_MARGIN = 0.1
DEFAULT_EXTRAS = 8


def stochastic_exponential(Z, strict=False):
    """E(Z) as the running product of (1 + dZ) along each path.

    Z must be scalar with Z(0) = 0.  The exponential absorbs at zero after
    a jump dZ = -1; with ``strict=True`` any jump dZ <= -1 is rejected so
    the result is strictly positive.
    """
    if Z.dim != 1:
        raise ModelError("stochastic exponential is defined for scalar Z")
    if abs(Z.values[0, 0]) > 0.0:
        raise ModelError("Z(0) must be 0")
    dZ = Z.increments()[:, 0]
    if strict and np.any(dZ <= -1.0):
        raise ModelError("jump dZ <= -1: exponential would not stay positive")
    if np.any(dZ < -1.0):
        raise ModelError("jump dZ < -1 is not supported on this backend")
    vals = path_cumprod(Z.tree, 1.0 + dZ)
    return AdaptedProcess(Z.tree, vals)


def _log_optimal_node(p, dX, tol=NEWTON_TOL, max_iter=NEWTON_MAXITER):
    """Damped Newton solve of sum_c p_c dX_c / (1 + <rho, dX_c>) = 0."""
    d = dX.shape[1]
    rho = np.zeros(d)
    scale = max(1.0, np.max(np.abs(dX)))
    best_rho, best_norm = rho, np.inf
    for _ in range(max_iter):
        w = 1.0 + dX @ rho
        grad = (p / w) @ dX
        g_norm = np.max(np.abs(grad))
        if g_norm < best_norm:
            best_rho, best_norm = rho, g_norm
        if g_norm <= tol * scale:
            return rho, grad
        hess = dX.T @ ((p / w**2)[:, None] * dX)
        step = np.linalg.pinv(hess, rcond=1e-13) @ grad
        # halve until wealth stays positive and log-wealth does not drop
        obj = p @ np.log(w)
        for _ in range(60):
            w_new = 1.0 + dX @ (rho + step)
            if np.min(w_new) > 1e-12 and p @ np.log(w_new) >= obj - 1e-13:
                break
            step *= 0.5
        if np.max(np.abs(step)) <= 1e-16 * max(1.0, np.max(np.abs(rho))):
            break  # stalled at the floating-point floor
        rho = rho + step
        if np.max(np.abs(rho)) > RHO_CAP:
            break
    w = 1.0 + dX @ best_rho
    grad = (p / w) @ dX
    return best_rho, grad


def numeraire_portfolio(X, tol=1e-10):
    """Growth-optimal portfolio rho_hat and its wealth V_hat (V_hat(0) = 1).

    Raises :class:`ArbitrageError` with the offending node when log-wealth
    is unbounded there (the node admits arbitrage).
    """
    tree = X.tree
    d = X.dim
    rho_vals = np.zeros((tree.n_nodes, d))
    factors = np.ones(tree.n_nodes)
    for node in tree.nonleaf_nodes:
        kids = tree.children(node)
        p = tree.p[kids]
        dX = X.values[kids] - X.values[node]
        rho, grad = _log_optimal_node(p, dX)
        scale = max(1.0, np.max(np.abs(dX)))
        if np.max(np.abs(grad)) > tol * scale or np.max(np.abs(rho)) > RHO_CAP:
            raise ArbitrageError(
                f"log-utility unbounded at node {node} (no numeraire portfolio)",
                node=int(node))
        rho_vals[node] = rho
        factors[kids] = 1.0 + dX @ rho
    V_hat = AdaptedProcess(tree, path_cumprod(tree, factors))
    if np.min(V_hat.values) <= 0.0:
        raise ArbitrageError("numeraire wealth not strictly positive")
    return PredictableProcess(tree, rho_vals), V_hat


def implied_measure(X, rho_hat, V_hat):
    """Branch weights of the martingale measure induced by the numeraire.

    Returns (n_nodes,) q with q[child] = p * Y_hat(child)/Y_hat(parent),
    renormalized within each sibling group (the renormalization removes
    the Newton residual, which is below 1e-12).
    """
    tree = X.tree
    q = np.ones(tree.n_nodes)
    for node in tree.nonleaf_nodes:
        kids = tree.children(node)
        raw = tree.p[kids] * V_hat.values[node, 0] / V_hat.values[kids, 0]
        q[kids] = raw / raw.sum()
    return q


@dataclass(frozen=True)
class DeflatorFamily:
    """The numeraire deflator Y_hat = 1/V_hat plus product deflators
    Y_hat * E(L) built from orthogonal jump martingales L."""

    X: AdaptedProcess
    rho_hat: PredictableProcess
    V_hat: AdaptedProcess
    Y_hat: AdaptedProcess
    q: np.ndarray  # implied branch weights, (n_nodes,)
    extras: tuple = field(default_factory=tuple)  # of (L, Y) pairs

    def all_deflators(self):
        return [self.Y_hat] + [Y for _, Y in self.extras]


def orthogonal_jump_martingale(tree, M, rng, weights=None, margin=DEFAULT_MARGIN,
                               n_samples=1):
    """Sample jump martingales L with dL orthogonal to the increments of M.

    At each non-leaf node, dL is drawn (seeded) from the affine subspace
    {sum w dL = 0, sum w dL dM^T = 0} and scaled to sup-norm 1 - margin,
    so 1 + dL >= margin > 0.  Binary nodes admit only dL = 0.  ``weights``
    defaults to the tree probabilities; pass the implied martingale-measure
    weights to make Y_hat * E(L) an exact deflator on drifting markets.

    Returns a list of ``n_samples`` scalar AdaptedProcess L with L(0) = 0.
    """
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    w_all = tree.p if weights is None else np.asarray(weights, dtype=np.float64)
    dL_all = np.zeros((n_samples, tree.n_nodes))
    for node in tree.nonleaf_nodes:
        kids = tree.children(node)
        k = kids.size
        w = w_all[kids]
        dM = M.values[kids] - M.values[node]
        cons = np.vstack([w[None, :], (w[:, None] * dM).T])
        basis = null_space(cons, rcond=1e-12)
        if basis.shape[1] == 0:
            continue
        coeff = rng.standard_normal((basis.shape[1], n_samples))
        dL = basis @ coeff  # (k, n_samples)
        sup = np.max(np.abs(dL), axis=0)
        nz = sup > 1e-14
        dL[:, nz] *= (1.0 - margin) / sup[nz]
        dL[:, ~nz] = 0.0
        dL_all[:, kids] = dL.T
    out = []
    for s in range(n_samples):
        L_vals = np.zeros(tree.n_nodes)
        for i in range(1, tree.n_nodes):
            L_vals[i] = L_vals[tree.parent[i]] + dL_all[s, i]
        out.append(AdaptedProcess(tree, L_vals))
    return out


def build_deflator_family(X, n_extras=DEFAULT_EXTRAS, seed=0,
                          margin=DEFAULT_MARGIN):
    """Numeraire deflator plus ``n_extras`` seeded product deflators."""
    tree = X.tree
    rho_hat, V_hat = numeraire_portfolio(X)
    Y_hat = AdaptedProcess(tree, 1.0 / V_hat.values[:, 0])
    q = implied_measure(X, rho_hat, V_hat)
    _, M = doob_decompose(X)
    rng = np.random.default_rng(seed)
    extras = []
    if n_extras > 0:
        Ls = orthogonal_jump_martingale(tree, M, rng, weights=q, margin=margin,
                                        n_samples=n_extras)
        for L in Ls:
            E = stochastic_exponential(L, strict=True)
            Y = AdaptedProcess(tree, Y_hat.values[:, 0] * E.values[:, 0])
            extras.append((L, Y))
    return DeflatorFamily(X=X, rho_hat=rho_hat, V_hat=V_hat, Y_hat=Y_hat,
                          q=q, extras=tuple(extras))


def verify_deflator(Y, X, tol=1e-10):
    """Exact martingale check of Y and Y * X_i at every non-leaf node.

    Returns a dict with the maximal conditional-mean defects and a
    ``passed`` flag (both defects <= tol).
    """
    if Y.dim != 1:
        raise ModelError("deflators are scalar processes")
    if np.min(Y.values) <= 0.0:
        raise ModelError("deflator must be strictly positive")
    if abs(Y.values[0, 0] - 1.0) > 1e-12:
        raise ModelError("deflator must start at 1")
    tree = X.tree
    y = Y.values[:, 0]
    dY = y - y[np.maximum(tree.parent, 0)]
    dY[0] = 0.0
    y_defect = np.abs(child_weighted_sums(tree, dY))
    yx = y[:, None] * X.values
    dYX = yx - yx[np.maximum(tree.parent, 0)]
    dYX[0] = 0.0
    yx_defect = np.abs(child_weighted_sums(tree, dYX))
    max_y = float(np.max(y_defect, initial=0.0))
    max_yx = float(np.max(yx_defect, initial=0.0))
    return {"max_Y_defect": max_y, "max_YX_defect": max_yx,
            "passed": max_y <= tol and max_yx <= tol}
