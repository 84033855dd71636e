"""Shared fixtures: the reference model and cheap pre-solved objects.

Session scope keeps the expensive solves to one run each; everything here is
deterministic, so sharing cannot couple tests.
"""

import numpy as np
import pytest

import ergodic_games as eg

# Gauss-Hermite (n=160) values of E[x^2/(1+x^2)] under N(mu, 1)
E_BUMP_STANDARD = 0.344320457621876  # mu = 0
E_BUMP_SHIFTED = 0.41666490095557396  # mu = sqrt(2)/2


@pytest.fixture(scope="session")
def model():
    return eg.ou_model()


@pytest.fixture(scope="session")
def g0():
    return eg.quadratic_decoupled()


@pytest.fixture(scope="session")
def coarse_grid():
    return eg.Grid1D(-6.0, 6.0, 81)


@pytest.fixture(scope="session")
def mid_grid():
    return eg.Grid1D(-6.0, 6.0, 151)


@pytest.fixture(scope="session")
def g0_nash_coarse(model, g0, coarse_grid):
    nash = eg.picard_solve(model, g0, coarse_grid, tol=1e-4)
    assert nash.converged
    return nash


@pytest.fixture(scope="session")
def bump_solution_mid(model, mid_grid):
    driver = eg.make_driver({"name": "bump"})
    return eg.solve_ergodic(model, driver, mid_grid, tol=1e-8)


def policy_of_constant_control(spec, grid, index):
    """Joint policy playing one fixed control index at every node."""
    m = grid.m
    idx = np.full((m, spec.n_players), index, dtype=int)
    return eg.FeedbackPolicy(
        nodes=grid.nodes(), indices=idx, z_values=np.zeros((m, spec.n_players))
    )
