"""Tests for govern.plant."""

import numpy as np
import pytest

from govern.plant import (
    CombinedOutputPlant,
    DualOutputPendulum,
    EquilibriumError,
    InputInterval,
    LinearPlant,
    PendulumPlant,
    PlantDomainError,
    combine_curvature,
    equilibrium,
    plant_from_config,
    step,
)


def _numeric_jacobian(fun, z, h=1e-6):
    z = np.asarray(z, dtype=float)
    cols = []
    for k in range(z.size):
        e = np.zeros_like(z)
        e[k] = h
        cols.append((fun(z + e) - fun(z - e)) / (2 * h))
    return np.column_stack(cols)


def test_input_interval():
    interval = InputInterval(-1.0, 2.0)
    assert interval.width == 3.0
    assert interval.saturate(5.0) == 2.0
    assert interval.saturate(np.array([-4.0, 0.5])).tolist() == [-1.0, 0.5]
    assert interval.contains([0.0, 2.0])
    assert not interval.contains([0.0, 2.5])

    with pytest.raises(ValueError, match='Empty command interval'):
        InputInterval(1.0, 1.0)
    with pytest.raises(ValueError, match='finite'):
        InputInterval(-np.inf, 1.0)


def test_unstable_linear_plant():
    with pytest.raises(ValueError, match='stable'):
        LinearPlant(A=[[1.0]], B=[1.0], C=[[1.0]], D=[0.0])


def test_linear_plant_shapes():
    with pytest.raises(ValueError, match='square'):
        LinearPlant(A=[[0.5, 0.0]], B=[1.0], C=[[1.0]], D=[0.0])
    with pytest.raises(ValueError, match='one column per state'):
        LinearPlant(A=[[0.5]], B=[1.0], C=[[1.0, 0.0]], D=[0.0])


def test_non_finite_step(pendulum):
    with pytest.raises(PlantDomainError):
        step(pendulum, [np.nan, 0.0], 0.0)
    with pytest.raises(PlantDomainError):
        pendulum.output([np.inf, 0.0], 0.0)


@pytest.mark.parametrize('v', [-2.0, 0.0, 1.0, 2.2])
def test_pendulum_equilibrium(pendulum, v):
    x_eq = equilibrium(pendulum, v)
    np.testing.assert_allclose(x_eq, pendulum.analytic_equilibrium(v), atol=1e-6)
    np.testing.assert_allclose(step(pendulum, x_eq, v), x_eq, atol=1e-9)


def test_pendulum_converges_from_box(pendulum):
    """Long simulations from anywhere in the operating box settle at the rest state."""
    for x in ([0.8, 1.0], [-0.8, -1.0], [0.3, -1.0]):
        x = np.array(x)
        for _ in range(4000):
            x = pendulum.step(x, 1.5)
        np.testing.assert_allclose(x, pendulum.analytic_equilibrium(1.5), atol=1e-6)


def test_scalar_linear_plant():
    plant = LinearPlant(A=[[0.5]], B=[1.0], C=[[1.0]], D=[0.0])
    np.testing.assert_array_equal(step(plant, [2.0], 1.0), [2.0])
    np.testing.assert_allclose(equilibrium(plant, 2.0, tol=1e-10), [4.0], atol=1e-9)


def test_equilibrium_budget(pendulum):
    with pytest.raises(EquilibriumError):
        equilibrium(pendulum, 1.0, max_steps=3)


def test_linear_equilibrium(linear_plant):
    np.testing.assert_allclose(equilibrium(linear_plant, 0.7), [0.7, 0.0], atol=1e-7)
    np.testing.assert_allclose(linear_plant.output([0.7, 0.0], 0.7), [-0.3])


def test_admissible_command(pendulum):
    assert pendulum.admissible_command == pytest.approx(4.0 * np.sin(0.6))
    x_eq = pendulum.analytic_equilibrium(pendulum.admissible_command)
    assert pendulum.output(x_eq, pendulum.admissible_command)[0] == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize('plant_factory', [PendulumPlant, DualOutputPendulum])
def test_jacobians(plant_factory, rng):
    plant = plant_factory()
    for x in plant.sample_states(rng, 5):
        v = rng.uniform(-3, 3)
        np.testing.assert_allclose(
            plant.jac_f_x(x, v), _numeric_jacobian(lambda z: plant.step(z, v), x), atol=1e-8
        )
        np.testing.assert_allclose(
            plant.jac_f_v(x, v),
            _numeric_jacobian(lambda u: plant.step(x, u[0]), [v])[:, 0],
            atol=1e-8,
        )
        np.testing.assert_allclose(
            plant.jac_h_x(x, v), _numeric_jacobian(lambda z: plant.output(z, v), x), atol=1e-8
        )


def test_dual_output(dual_pendulum):
    np.testing.assert_allclose(dual_pendulum.output([0.1, -1.5], 0.0), [-0.5, 0.5])
    assert dual_pendulum.describe()['kind'] == 'dual_pendulum'


def test_combined_output(dual_pendulum):
    G = [[1.0, 1.0], [0.0, 2.0]]
    plant = CombinedOutputPlant(dual_pendulum, G, [0.5, 0.0])
    x = np.array([0.2, -0.4])
    np.testing.assert_allclose(
        plant.output(x, 1.0), np.asarray(G) @ dual_pendulum.output(x, 1.0) + [0.5, 0.0]
    )
    expected = np.asarray(G) @ dual_pendulum.jac_h_x(x, 1.0)
    np.testing.assert_allclose(plant.jac_h_x(x, 1.0), expected)
    np.testing.assert_allclose(plant.step(x, 1.0), dual_pendulum.step(x, 1.0))

    with pytest.raises(ValueError, match='columns'):
        CombinedOutputPlant(dual_pendulum, [[1.0, 0.0, 0.0]])


def test_combine_curvature():
    bound = combine_curvature([[1.0, -1.0], [0.0, 3.0]], [0.1, 0.2])
    np.testing.assert_allclose(bound, [0.3, 0.6])


def test_sample_states(pendulum, rng):
    states = pendulum.sample_states(rng, 50)
    assert states.shape == (50, 2)
    assert np.all(np.abs(states[:, 0]) <= 1.0)
    assert np.all(np.abs(states[:, 1]) <= 2.0)


def test_plant_from_config():
    plant = plant_from_config({'kind': 'pendulum', 'a': 5.0, 'v_max': 4.0})
    assert isinstance(plant, PendulumPlant)
    assert plant.a == 5.0
    assert plant.input_interval.hi == 4.0

    dual = plant_from_config({'kind': 'dual_pendulum', 'x2_max': 0.5})
    assert dual.n_y == 2
    assert dual.x2_max == 0.5

    combined = plant_from_config({'kind': 'dual_pendulum', 'combine': {'G': [[1.0, 1.0]]}})
    assert isinstance(combined, CombinedOutputPlant)
    assert combined.n_y == 1

    linear = plant_from_config(
        {'kind': 'linear', 'A': [[0.5]], 'B': [1.0], 'C': [[1.0]], 'D': [0.0]}
    )
    assert linear.n_x == linear.n_y == 1

    with pytest.raises(ValueError, match='requires matrices'):
        plant_from_config({'kind': 'linear', 'A': [[0.5]]})
    with pytest.raises(ValueError, match='Unknown plant kind'):
        plant_from_config({'kind': 'fuel_cell'})
