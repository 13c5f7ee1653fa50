import math

import numpy as np
import pytest
from scipy.optimize import brentq, minimize_scalar

from randcert.bell import (
    bell_value,
    chsh_expression,
    correlators_from_behavior,
    local_bound,
    validate_behavior,
)
from randcert.errors import StructuralError
from randcert.models import (
    ProjectiveMeasurement,
    StateVector,
    behavior_from_model,
    cglmp_behavior,
    cglmp_expression,
    cglmp_model,
    chsh_model,
    chsh_noise_behavior,
    i1beta_expression,
    i1beta_for_theta,
    partial_entangled_behavior,
    partial_entangled_correlators,
    partial_entangled_model,
    qubit_measurement,
)

Z = np.diag([1.0, -1.0])
X = np.array([[0.0, 1.0], [1.0, 0.0]])


def expectation(psi, op):
    return float(np.real(np.vdot(psi, op @ psi)))


def test_state_must_be_normalized():
    with pytest.raises(ValueError):
        StateVector([1, 1, 0, 0], 2, 2)
    with pytest.raises(StructuralError):
        StateVector([1, 0, 0], 2, 2)


def test_projector_checks():
    with pytest.raises(ValueError):
        ProjectiveMeasurement(((np.eye(2), np.eye(2)),))
    with pytest.raises(ValueError):
        ProjectiveMeasurement(((np.diag([1.0, 0.0]), np.diag([0.0, 0.5])),))
    m = qubit_measurement(0.3, 1.1)
    assert m.n_settings == 2 and m.n_outcomes == 2 and m.dim == 2


def test_qubit_measurement_is_plus_one_first():
    m = qubit_measurement(0.7)
    obs = m.projectors[0][0] - m.projectors[0][1]
    np.testing.assert_allclose(obs, math.cos(0.7) * Z + math.sin(0.7) * X, atol=1e-14)


@pytest.mark.parametrize("theta", [0.1, 0.3, 27 * math.pi / 200, 0.6, math.pi / 4])
def test_partial_model_matches_correlator_formula(theta):
    state, ma, mb = partial_entangled_model(theta)
    c = correlators_from_behavior(behavior_from_model(state, ma, mb))
    k = partial_entangled_correlators(theta)
    np.testing.assert_allclose(c.corr, k.corr, atol=1e-12)
    np.testing.assert_allclose(c.mean_a, k.mean_a, atol=1e-12)
    np.testing.assert_allclose(c.mean_b, k.mean_b, atol=1e-12)


@pytest.mark.parametrize("theta", [0.2, 27 * math.pi / 200, math.pi / 4])
def test_partial_model_by_direct_operator_algebra(theta):
    # correlators straight from Pauli operators on the state vector
    psi = np.array([math.cos(theta), 0, 0, math.sin(theta)])
    mu = math.atan(math.sin(2 * theta))
    b1 = math.cos(mu) * Z + math.sin(mu) * X
    p = partial_entangled_behavior(theta)
    c = correlators_from_behavior(p)
    assert c.corr[0, 0] == pytest.approx(expectation(psi, np.kron(Z, b1)), abs=1e-12)
    assert c.corr[1, 0] == pytest.approx(expectation(psi, np.kron(X, b1)), abs=1e-12)
    assert c.mean_a[0] == pytest.approx(expectation(psi, np.kron(Z, np.eye(2))), abs=1e-12)


@pytest.mark.parametrize("theta", [0.15, 0.35, 27 * math.pi / 200, 0.7])
def test_partial_model_maximally_violates_i1beta(theta):
    beta = i1beta_for_theta(theta)
    f = i1beta_expression(beta)
    assert local_bound(f) == pytest.approx(2 + beta)
    # known maximal quantum value sqrt(8 + 2 beta^2)
    assert bell_value(f, partial_entangled_behavior(theta)) == pytest.approx(math.sqrt(8 + 2 * beta ** 2), abs=1e-12)


def test_noise_scales_correlators():
    c1 = correlators_from_behavior(partial_entangled_behavior(0.4, 1.0))
    c2 = correlators_from_behavior(partial_entangled_behavior(0.4, 0.6))
    np.testing.assert_allclose(c2.corr, 0.6 * c1.corr, atol=1e-14)
    with pytest.raises(ValueError):
        partial_entangled_correlators(1.0)
    with pytest.raises(ValueError):
        partial_entangled_correlators(0.3, 1.2)


def test_chsh_model_reaches_tsirelson():
    p = behavior_from_model(*chsh_model())
    assert bell_value(chsh_expression(), p) == pytest.approx(2 * math.sqrt(2), abs=1e-12)
    np.testing.assert_allclose(p.p, chsh_noise_behavior(1.0).p, atol=1e-12)
    assert bell_value(chsh_expression(), chsh_noise_behavior(0.8)) == pytest.approx(0.8 * 2 * math.sqrt(2))


def test_cglmp_local_bound_and_validity():
    assert local_bound(cglmp_expression()) == pytest.approx(2.0)
    for alpha in (0.0, 0.3, 1 / math.sqrt(3), 0.7):
        assert validate_behavior(cglmp_behavior(alpha), tol=1e-12).passed


def test_cglmp_bases_are_orthonormal():
    _, ma, mb = cglmp_model(0.5)
    ma.check(1e-12)
    mb.check(1e-12)


def test_cglmp_maximally_entangled_value():
    # the well-known 2.8729 for maximally entangled qutrits
    assert bell_value(cglmp_expression(), cglmp_behavior(1 / math.sqrt(3))) == pytest.approx(2.87293, abs=1e-5)


def test_cglmp_maximum_and_threshold():
    f = cglmp_expression()
    val = lambda a: bell_value(f, cglmp_behavior(a))
    res = minimize_scalar(lambda a: -val(a), bounds=(0.45, 0.7), method="bounded", options={"xatol": 1e-7})
    assert res.x == pytest.approx(0.6169, abs=5e-4)
    assert -res.fun == pytest.approx(2.914854, abs=1e-5)
    cross = brentq(lambda a: val(a) - 2.0, 0.2, 0.5, xtol=1e-12)
    assert cross == pytest.approx(math.sqrt(3 / 22), abs=1e-8)


def test_cglmp_alpha_range():
    with pytest.raises(ValueError):
        cglmp_behavior(0.8)
