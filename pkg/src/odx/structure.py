"""Per-step characteristics (a, c, dG) and the structural drift condition.

``solve_structure`` either produces a predictable ``rho`` with ``a = c rho``
(minimum-norm, via a PSD pseudoinverse) or an arbitrage certificate
``zeta`` living in the kernel of ``c`` with a strictly positive drift gain.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tree import (AdaptedProcess, ModelError, PredictableProcess,
                   conditional_moment, doob_decompose, path_cumsum)

SYM_TOL = 1e-12
EIG_TOL = 1e-10
PINV_RELTOL = 1e-10
DEFAULT_STRUCT_TOL = 1e-8
DEFAULT_MASS_THRESHOLD = 1e6


@dataclass(frozen=True)
class Characteristics:
    """Drift a, covariance c (flattened d x d) and clock increment dG per step."""

    a: PredictableProcess
    c: PredictableProcess  # (n_nodes, d*d) row-major
    dG: PredictableProcess  # positive scalar per step

    @property
    def d(self):
        return self.a.dim

    def c_matrix(self, node):
        d = self.d
        return self.c.values[node].reshape(d, d)

    def validate(self):
        tree = self.a.tree
        d = self.d
        for node in tree.nonleaf_nodes:
            C = self.c_matrix(node)
            if np.max(np.abs(C - C.T)) > SYM_TOL:
                raise ModelError(f"node {node}: covariance not symmetric")
            if np.min(np.linalg.eigvalsh(0.5 * (C + C.T))) < -EIG_TOL:
                raise ModelError(f"node {node}: covariance not PSD")
            if not self.dG.values[node, 0] > 0.0:
                raise ModelError(f"node {node}: dG must be positive")
        return self


@dataclass(frozen=True)
class StructureReport:
    status: str  # "SOLVABLE" | "ARBITRAGE"
    rho: PredictableProcess | None
    zeta: PredictableProcess | None
    mass: AdaptedProcess
    mass_flag: bool
    bad_nodes: tuple = field(default_factory=tuple)

    @property
    def solvable(self):
        return self.status == "SOLVABLE"


def extract_characteristics(X):
    """Per-step (a, c, dG) of a market process, with unit clock dG = 1."""
    tree = X.tree
    d = X.dim
    _, M = doob_decompose(X)
    a_vals = np.zeros((tree.n_nodes, d))
    c_vals = np.zeros((tree.n_nodes, d * d))
    dG_vals = np.zeros((tree.n_nodes, 1))
    for node in tree.nonleaf_nodes:
        a_vals[node] = conditional_moment(X, node, 1)
        c_vals[node] = conditional_moment(M, node, 2).ravel()
        dG_vals[node, 0] = 1.0
    return Characteristics(a=PredictableProcess(tree, a_vals),
                           c=PredictableProcess(tree, c_vals),
                           dG=PredictableProcess(tree, dG_vals))


def psd_pinv_apply(C, v, reltol=PINV_RELTOL):
    """Minimum-norm solution of C x = v for symmetric PSD C, plus the
    residual projection of v onto the kernel of C.

    Eigenvalues below ``reltol * lambda_max`` are treated as zero, so rank
    decisions are stable under uniform scaling of C.
    """
    C = 0.5 * (C + C.T)
    w, Q = np.linalg.eigh(C)
    lam_max = max(w.max(initial=0.0), 0.0)
    cutoff = reltol * lam_max
    keep = w > cutoff
    coeff = Q.T @ v
    inv = np.zeros_like(w)
    inv[keep] = 1.0 / w[keep]
    x = Q @ (inv * coeff)
    kernel_part = Q @ (np.where(keep, 0.0, 1.0) * coeff)
    return x, kernel_part


def solve_structure(ch, tol=DEFAULT_STRUCT_TOL,
                    mass_threshold=DEFAULT_MASS_THRESHOLD):
    """Solve a = c rho per step, or certify failure.

    When at some step the drift has a component in the kernel of the
    covariance, that kernel component is returned as ``zeta`` (zero on all
    other steps): it satisfies c zeta = 0 and <zeta, a> = |proj|^2 > 0,
    i.e. a conditionally riskless strictly positive gain.
    """
    ch.validate()
    tree = ch.a.tree
    d = ch.d
    rho_vals = np.zeros((tree.n_nodes, d))
    zeta_vals = np.zeros((tree.n_nodes, d))
    mass_terms = np.zeros(tree.n_nodes)
    bad = []
    for node in tree.nonleaf_nodes:
        C = ch.c_matrix(node)
        a = ch.a.values[node]
        dG = ch.dG.values[node, 0]
        rho, kernel_part = psd_pinv_apply(C, a)
        rho_vals[node] = rho
        resid = C @ rho - a
        if np.max(np.abs(resid)) > tol:
            zeta_vals[node] = kernel_part
            bad.append(int(node))
        # spread the step mass onto the children so it accumulates along paths
        kids = tree.children(node)
        mass_terms[kids] = float(rho @ (C @ rho)) * dG
    mass = AdaptedProcess(tree, path_cumsum(tree, mass_terms))
    mass_flag = bool(np.max(mass.values) > mass_threshold)
    if bad:
        return StructureReport(status="ARBITRAGE", rho=None,
                               zeta=PredictableProcess(tree, zeta_vals),
                               mass=mass, mass_flag=mass_flag,
                               bad_nodes=tuple(bad))
    return StructureReport(status="SOLVABLE",
                           rho=PredictableProcess(tree, rho_vals),
                           zeta=None, mass=mass, mass_flag=mass_flag)


def riskless_gain(X, zeta):
    """One-step gains <zeta, dX> of an arbitrage certificate, per node.

    Returns (n_nodes,) gains; at a flagged node the gains across children
    have zero conditional variance and strictly positive conditional mean.
    """
    dX = X.increments()
    gains = np.einsum("nd,nd->n", dX, zeta.values[np.maximum(X.tree.parent, 0)])
    gains[0] = 0.0
    return gains
