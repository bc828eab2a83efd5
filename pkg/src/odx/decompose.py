"""The decomposition theorem as code.

A process V passes the universal-supermartingale test when, at every
non-leaf node, the best expectation of its child values over the closed
polytope of one-step martingale measures does not exceed V at the node.
Passing processes split as V(0) + sum <H, dX> - C with C nondecreasing:
the LP route builds H per node as the minimum-norm superhedging vector,
the KW route mirrors the deflate / project / drift-removal proof and must
agree on complete nodes.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy.optimize import linprog

from .deflators import build_deflator_family
from .tree import (AdaptedProcess, ArbitrageError, ModelError,
                   PredictableProcess, doob_decompose, path_cumsum)

SUPERMART_TOL = 1e-10
FEAS_TOL = 1e-9
VERTEX_ENUM_MAX_BRANCHES = 8


# ---------------------------------------------------------------------------
# Martingale-measure polytopes, node by node
# ---------------------------------------------------------------------------

def _node_vertices(dX):
    """Vertices of {q >= 0, sum q = 1, sum q dX = 0} for dX of shape (k, d).

    Basic feasible solutions have at most rank + 1 positive weights, so we
    enumerate supports up to size d + 1 and keep exactly-solved ones.
    """
    k, d = dX.shape
    A = np.vstack([np.ones((1, k)), dX.T])  # (d+1, k)
    b = np.zeros(d + 1)
    b[0] = 1.0
    verts = []
    for size in range(1, min(k, d + 1) + 1):
        for S in combinations(range(k), size):
            As = A[:, S]
            q_s, *_ = np.linalg.lstsq(As, b, rcond=None)
            if np.min(q_s) < -1e-11:
                continue
            if np.max(np.abs(As @ q_s - b)) > FEAS_TOL:
                continue
            q = np.zeros(k)
            q[list(S)] = np.clip(q_s, 0.0, None)
            q /= q.sum()
            if not any(np.max(np.abs(q - v)) < 1e-10 for v in verts):
                verts.append(q)
    return verts


class MarketLP:
    """Per-node martingale-measure polytopes of a market process X.

    Nodes with at most :data:`VERTEX_ENUM_MAX_BRANCHES` children are
    handled by exact vertex enumeration; larger nodes fall back to a
    simplex solve.  An empty polytope at some node signals arbitrage.
    """

    def __init__(self, X):
        self.X = X
        self.tree = X.tree
        self._vertices = {}
        self._dX = {}
        for node in self.tree.nonleaf_nodes:
            kids = self.tree.children(node)
            dX = X.values[kids] - X.values[node]
            self._dX[int(node)] = dX
            if kids.size <= VERTEX_ENUM_MAX_BRANCHES:
                self._vertices[int(node)] = _node_vertices(dX)

    def node_max(self, node, child_values):
        """(max over polytope of q . child_values, attaining vertex q).

        Raises :class:`ArbitrageError` when the polytope is empty.
        """
        node = int(node)
        if node in self._vertices:
            verts = self._vertices[node]
            if not verts:
                raise ArbitrageError(
                    f"no martingale measure at node {node}", node=node)
            vals = [float(q @ child_values) for q in verts]
            i = int(np.argmax(vals))
            return vals[i], verts[i]
        dX = self._dX[node]
        k = dX.shape[0]
        A_eq = np.vstack([np.ones((1, k)), dX.T])
        b_eq = np.zeros(A_eq.shape[0])
        b_eq[0] = 1.0
        res = linprog(-np.asarray(child_values, dtype=float), A_eq=A_eq,
                      b_eq=b_eq, bounds=(0, None), method="highs")
        if res.status == 2:
            raise ArbitrageError(f"no martingale measure at node {node}",
                                 node=node)
        if not res.success:
            raise RuntimeError(f"LP failed at node {node}: {res.message}")
        return -res.fun, res.x


@dataclass(frozen=True)
class SupermartingaleCertificate:
    verdict: str  # "PASS" | "FAIL"
    witness: dict | None = None

    @property
    def passed(self):
        return self.verdict == "PASS"


def is_supermartingale_under_all(V, X, tol=SUPERMART_TOL, lp=None,
                                 deflators=None):
    """Test whether V is a supermartingale under every martingale measure.

    Per non-leaf node the closed-polytope LP max of the child values is
    compared against V at the node.  When a :class:`DeflatorFamily` is
    supplied, the product Y * V is additionally checked to be a
    supermartingale for every family deflator (a redundant confirmation;
    the LP check is the complete one).  FAIL carries the worst node and
    the maximizing vertex measure.
    """
    if V.dim != 1:
        raise ModelError("V must be scalar")
    if not np.all(np.isfinite(V.values)):
        raise ModelError("V must be finite (locally bounded below)")
    lp = lp if lp is not None else MarketLP(X)
    tree = X.tree
    worst = None
    for node in tree.nonleaf_nodes:
        kids = tree.children(node)
        best, q = lp.node_max(node, V.values[kids, 0])
        violation = best - V.values[node, 0]
        if violation > tol and (worst is None or violation > worst["violation"]):
            worst = {"node": int(node), "violation": float(violation),
                     "measure": np.asarray(q).tolist()}
    if worst is not None:
        return SupermartingaleCertificate("FAIL", worst)
    if deflators is not None:
        for Y in deflators.all_deflators():
            yv = Y.values[:, 0] * V.values[:, 0]
            d_yv = yv - yv[np.maximum(tree.parent, 0)]
            d_yv[0] = 0.0
            from .tree import child_weighted_sums
            drift = child_weighted_sums(tree, d_yv)
            bad = np.flatnonzero(drift > tol)
            if bad.size:
                i = int(bad[np.argmax(drift[bad])])
                node = int(tree.nonleaf_nodes[i])
                return SupermartingaleCertificate(
                    "FAIL", {"node": node, "violation": float(drift[bad].max()),
                             "deflator": "family"})
    return SupermartingaleCertificate("PASS", None)


# ---------------------------------------------------------------------------
# Minimum-norm superhedging vectors (LDP per node)
# ---------------------------------------------------------------------------

def _nnls(A, b, max_iter=None):
    """Lawson-Hanson active-set solve of min |A x - b| subject to x >= 0.

    The per-node systems here are tiny ((d+1) x branches), where the
    active-set method is exact and fast.
    """
    m, n = A.shape
    if max_iter is None:
        max_iter = 10 * max(m, n)
    x = np.zeros(n)
    active = np.zeros(n, dtype=bool)
    tol = 1e-13 * max(1.0, np.abs(A).max()) * max(1.0, np.abs(b).max())
    for _ in range(max_iter):
        w = A.T @ (b - A @ x)
        w[active] = -np.inf
        j = int(np.argmax(w))
        if w[j] <= tol:
            return x
        active[j] = True
        for _ in range(max_iter):
            s = np.zeros(n)
            s[active], *_ = np.linalg.lstsq(A[:, active], b, rcond=None)
            if np.min(s[active]) > 0.0:
                x = s
                break
            blocking = active & (s <= 0.0)
            ratios = x[blocking] / (x[blocking] - s[blocking])
            alpha = float(np.min(ratios))
            x = x + alpha * (s - x)
            x[x < 0.0] = 0.0
            active &= x > 1e-14 * max(1.0, float(x.max()))
            if not np.any(active):
                x[:] = 0.0
                break
    return x

def min_norm_superhedge(dX, dV, order=None):
    """Minimum-norm H with <H, dX_c> >= dV_c for every child c.

    dX is (k, d), dV is (k,).  Solved in closed form for d = 1 and via the
    Lawson-Hanson least-distance transformation (NNLS) otherwise.
    ``order`` optionally permutes the constraint rows; the minimizer is
    unique, so the permutation is a tie-break no-op kept for
    reproducibility experiments.
    """
    k, d = dX.shape
    if order is not None:
        dX, dV = dX[order], dV[order]
    if d == 1:
        x = dX[:, 0]
        lo, hi = -np.inf, np.inf
        pos, neg, zer = x > 0, x < 0, x == 0
        if np.any(dV[zer] > FEAS_TOL):
            return None
        if np.any(pos):
            lo = np.max(dV[pos] / x[pos])
        if np.any(neg):
            hi = np.min(dV[neg] / x[neg])
        if lo > hi + FEAS_TOL:
            return None
        lo = min(lo, hi)
        return np.array([np.clip(0.0, lo, hi)])
    # LDP: min |H| s.t. G H >= h, via the nonnegative least-squares
    # transformation on E = [G^T; h^T], f = e_{d+1}
    E = np.vstack([dX.T, dV[None, :]])
    f = np.zeros(d + 1)
    f[-1] = 1.0
    u = _nnls(E, f)
    r = E @ u - f
    if abs(r[-1]) < 1e-12:
        return None  # infeasible
    H = -r[:-1] / r[-1]
    scale = max(1.0, np.max(np.abs(dV), initial=0.0))
    # polish: re-solve the active equality system at minimum norm, which
    # recovers the exact minimizer once the active set is identified
    slack = dX @ H - dV
    active = slack <= 1e-7 * scale
    if np.any(active):
        H_ref, *_ = np.linalg.lstsq(dX[active], dV[active], rcond=None)
        if (np.min(dX @ H_ref - dV) >= -1e-11 * scale
                and H_ref @ H_ref <= H @ H * (1.0 + 1e-6) + 1e-9):
            H = H_ref
            slack = dX @ H - dV
    if np.min(slack) < -FEAS_TOL * scale:
        return None
    return H


@dataclass(frozen=True)
class Decomposition:
    """V = V0 + sum <H, dX> - C with C nondecreasing along every path."""

    V0: float
    H: PredictableProcess
    C: AdaptedProcess
    diagnostics: dict = field(default_factory=dict)

    @property
    def route(self):
        return self.diagnostics.get("route", "?")


def _assemble(tree, V0, H_vals, dC, diagnostics):
    dC = np.clip(dC, 0.0, None)
    dC[0] = 0.0
    C = AdaptedProcess(tree, path_cumsum(tree, dC))
    return Decomposition(V0=float(V0), H=PredictableProcess(tree, H_vals),
                         C=C, diagnostics=diagnostics)


def decompose_lp(V, X, lp=None, tie_break_seed=None):
    """Hedge/consumption split via per-node minimum-norm superhedging.

    Requires (and reproduces) the universal-supermartingale property; the
    per-child slack <H, dX> - dV becomes the consumption increment, so the
    reconstruction is exact by construction.
    """
    tree = X.tree
    d = X.dim
    lp = lp if lp is not None else MarketLP(X)
    rng = None if tie_break_seed is None else np.random.default_rng(tie_break_seed)
    H_vals = np.zeros((tree.n_nodes, d))
    dC = np.zeros(tree.n_nodes)
    gap = 0.0
    for node in tree.nonleaf_nodes:
        kids = tree.children(node)
        dX = X.values[kids] - X.values[node]
        dV = V.values[kids, 0] - V.values[node, 0]
        order = None if rng is None else rng.permutation(kids.size)
        H = min_norm_superhedge(dX, dV, order=order)
        if H is None:
            raise RuntimeError(
                f"superhedge LP infeasible at node {node}; "
                "run is_supermartingale_under_all first")
        H_vals[node] = H
        slack = dX @ H - dV
        if np.min(slack) < -1e-8:
            raise RuntimeError(f"negative consumption at node {node}")
        dC[kids] = slack
        best, _ = lp.node_max(node, V.values[kids, 0])
        gap = max(gap, V.values[node, 0] - best)
    diags = {"route": "LP", "duality_gap": float(gap)}
    return _assemble(tree, V.values[0, 0], H_vals, dC, diags)


def decompose_kw(V, X, deflators=None, defer_tol=1e-8, lp=None):
    """Hedge/consumption split along the proof route: deflate by the
    numeraire wealth, project the (compounded) deflated increments on the
    martingale part, remove the predictable drift, reassemble.

    The per-node regression uses the compounded increment
    (1 + <rho_hat, dX>) dU, which makes the reassembly exact on the tree;
    it reduces to the continuous-time projection as the step size shrinks.
    On nodes where the orthogonal residual N exceeds ``defer_tol`` the
    hedge is deferred to the LP construction (incomplete nodes: the
    continuous-time proof has no discrete counterpart there), and those
    nodes are reported in the diagnostics.
    """
    tree = X.tree
    d = X.dim
    fam = deflators if deflators is not None else build_deflator_family(X, n_extras=0)
    rho = fam.rho_hat.values
    Vh = fam.V_hat.values[:, 0]
    U = V.values[:, 0] / Vh
    _, M = doob_decompose(X)

    H_vals = np.zeros((tree.n_nodes, d))
    theta_vals = np.zeros((tree.n_nodes, d))
    dC = np.zeros(tree.n_nodes)
    dB_steps = np.zeros(tree.n_nodes)  # per-step drift, indexed by parent node
    n_sq = np.zeros(tree.n_nodes)      # conditional second moment of dN
    deferred = []
    for node in tree.nonleaf_nodes:
        kids = tree.children(node)
        p = tree.p[kids]
        dX = X.values[kids] - X.values[node]
        dM = M.values[kids] - M.values[node]
        dA = (p @ dX)  # predictable step drift of X
        r = dX @ rho[node]
        dU = U[kids] - U[node]
        W = (1.0 + r) * dU
        cov = dM.T @ (p[:, None] * dM)
        theta = np.linalg.pinv(cov, rcond=1e-12, hermitian=True) @ (dM.T @ (p * W))
        alpha = p @ (W - dM @ theta)
        dN = W - dM @ theta - alpha
        dB = float(theta @ dA - alpha)
        theta_vals[node] = theta
        dB_steps[node] = dB
        n_sq[node] = float(p @ dN**2)
        scale = max(1.0, np.max(np.abs(W), initial=0.0))
        if np.max(np.abs(dN), initial=0.0) > defer_tol * scale:
            deferred.append(int(node))
            dV = V.values[kids, 0] - V.values[node, 0]
            H = min_norm_superhedge(dX, dV)
            if H is None:
                raise RuntimeError(f"deferred LP infeasible at node {node}")
            H_vals[node] = H
            dC[kids] = dX @ H - dV
        else:
            H_vals[node] = Vh[node] * (U[node] * rho[node] + theta)
            dC[kids] = Vh[node] * (dB - dN)
    nonleaf = tree.nonleaf_nodes
    n_norm = float(np.sqrt(np.mean(n_sq[nonleaf]))) if nonleaf.size else 0.0
    dB_nodes = np.zeros(tree.n_nodes)
    for node in nonleaf:
        dB_nodes[tree.children(node)] = dB_steps[node]
    diags = {
        "route": "KW",
        "theta": PredictableProcess(tree, theta_vals),
        "B": AdaptedProcess(tree, path_cumsum(tree, dB_nodes)),
        "N_norm": n_norm,
        "node_N_norm": {int(n): float(np.sqrt(n_sq[n])) for n in nonleaf},
        "min_dB": float(np.min(dB_steps[nonleaf])) if nonleaf.size else 0.0,
        "deferred_nodes": tuple(deferred),
    }
    if lp is not None:
        gap = 0.0
        for node in nonleaf:
            best, _ = lp.node_max(node, V.values[tree.children(node), 0])
            gap = max(gap, V.values[node, 0] - best)
        diags["duality_gap"] = float(gap)
    return _assemble(tree, V.values[0, 0], H_vals, dC, diags)


def reconstruct(V0, H, C, X):
    """V(node) = V0 + sum over the path of <H(parent), dX> - C(node)."""
    tree = X.tree
    dX = X.increments()
    gains = np.einsum("nd,nd->n", dX, H.values[np.maximum(tree.parent, 0)])
    gains[0] = 0.0
    vals = float(V0) + path_cumsum(tree, gains) - C.values[:, 0]
    return AdaptedProcess(tree, vals)


def gains_process(H, X):
    """Running stochastic integral sum <H, dX> as an AdaptedProcess."""
    tree = X.tree
    dX = X.increments()
    g = np.einsum("nd,nd->n", dX, H.values[np.maximum(tree.parent, 0)])
    g[0] = 0.0
    return AdaptedProcess(tree, path_cumsum(tree, g))


def check_uniqueness(d1, d2, X, tol=1e-8):
    """Compare two decompositions of the same V in the theorem's sense:
    equal consumption and equal stochastic integrals (H itself may differ
    off the support of the increments)."""
    V1 = reconstruct(d1.V0, d1.H, d1.C, X)
    V2 = reconstruct(d2.V0, d2.H, d2.C, X)
    recon_gap = float(np.max(np.abs(V1.values - V2.values)))
    if recon_gap > 1e-7:
        raise ModelError("decompositions reconstruct different processes")
    c_gap = float(np.max(np.abs(d1.C.values - d2.C.values)))
    g_gap = float(np.max(np.abs(gains_process(d1.H, X).values
                                - gains_process(d2.H, X).values)))
    return {"C_gap": c_gap, "integral_gap": g_gap,
            "passed": c_gap <= tol and g_gap <= tol}
