"""Shared fixtures: the running-example model solved once per session."""

import pytest

from thresholdmfg import (
    GameModel,
    UniformKernel,
    linear_cost,
    make_grid,
    solve_equilibrium,
    solve_sensitivities,
)

# the running example: R(x,z) = x(0.2 + z), gamma = 0.5, beta = 0.9
C, GAMMA, BETA = 0.2, 0.5, 0.9

# reference digits for the running example (equilibrium and sensitivities)
V0_REF, THETA_REF, Z_REF = 3.497854, 0.485162, 0.345854
W0_REF, THETA_G_REF, Z_G_REF = 4.563055, 1.162861, 0.336380


@pytest.fixture(scope="session")
def grid2000():
    return make_grid(2000)


@pytest.fixture(scope="session")
def ex_model(grid2000):
    return GameModel(
        kernel=UniformKernel(),
        cost=linear_cost(C, GAMMA, BETA),
        grid=grid2000,
    )


@pytest.fixture(scope="session")
def ex_solution(ex_model):
    return solve_equilibrium(ex_model)


@pytest.fixture(scope="session")
def ex_sensitivity(ex_model, ex_solution):
    return solve_sensitivities(ex_model, ex_solution)
