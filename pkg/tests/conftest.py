import numpy as np
import pytest

from odx.tree import AdaptedProcess, build_tree


@pytest.fixture
def b1():
    """One period, two branches, p = (0.6, 0.4), dX = (+0.1, -0.1)."""
    tree = build_tree([[0.6, 0.4]])
    X = AdaptedProcess(tree, np.array([0.0, 0.1, -0.1]))
    return tree, X


@pytest.fixture
def t1():
    """One period, three symmetric branches, dX = (+0.1, 0, -0.1)."""
    tree = build_tree([[1 / 3, 1 / 3, 1 / 3]])
    X = AdaptedProcess(tree, np.array([0.0, 0.1, 0.0, -0.1]))
    return tree, X


@pytest.fixture
def binomial2():
    """Two-period fair binomial with +-0.1 return increments."""
    tree = build_tree([[0.5, 0.5], [0.5, 0.5]])
    vals = np.array([0.0, 0.1, -0.1, 0.2, 0.0, 0.0, -0.2])
    return tree, AdaptedProcess(tree, vals)


@pytest.fixture
def a1():
    """One-step 2-asset model with drift outside the covariance range."""
    tree = build_tree([[0.5, 0.5]])
    X = AdaptedProcess(tree, np.array([[0.0, 0.0], [1.0, 1.0], [-1.0, 1.0]]))
    return tree, X


@pytest.fixture
def b1_claim(b1):
    """Replicable claim on B1: payoff 0.06 up / 0.24 down, value 0.15."""
    tree, X = b1
    V = AdaptedProcess(tree, np.array([0.15, 0.06, 0.24]))
    return tree, X, V
