import math

import numpy as np
import pytest
from scipy.linalg import expm

from conftest import chain_reference
from topolattice.dynamics import (BiphotonState, ConstantPump, NonlinearSource,
                                  PropagationConfig, PumpField, certify, nonlinear_gamma,
                                  propagate_biphoton, propagate_biphoton_cn,
                                  propagate_exact_constant, propagate_pump,
                                  relative_distance, single_site_input)
from topolattice.errors import ConvergenceError, NumericalError, ValidationError

H = chain_reference([0.6, 1.2, 1.2, 0.6, 1.5, 0.6, 1.2, 1.2, 0.6, 1.5][::-1]
                    + [0.6, 1.2, 1.2, 0.6, 1.5, 0.6, 1.2, 1.2, 0.6, 1.5])
N = H.shape[0]


def test_gamma_formula():
    # 2 pi n2 / (lambda A_eff)
    g = nonlinear_gamma(6e-18, 1e-13, 1550e-9)
    assert g == pytest.approx(2 * math.pi * 6e-18 / (1550e-9 * 1e-13), rel=1e-12)
    with pytest.raises(ValidationError):
        nonlinear_gamma(-1, 1, 1)
    src = NonlinearSource.from_material(6e-18, 1e-13, 1550e-9, psi0=2.0)
    assert src.strength == pytest.approx(2 * g)
    with pytest.raises(ValidationError):
        NonlinearSource(-1.0)


def test_config_validation():
    with pytest.raises(ValidationError):
        PropagationConfig(0.0)
    with pytest.raises(ValidationError):
        PropagationConfig(1.0, samples=1)
    with pytest.raises(ValidationError):
        PropagationConfig(1.0, method="rk4")


def test_pump_matches_matrix_exponential():
    a0 = single_site_input(N, 0, 2.0)
    pump = PumpField(H, a0)
    for z in (0.3, 2.7):
        assert np.allclose(pump.at(z), expm(-1j * H * z) @ a0, atol=1e-12)
    _, tr = propagate_pump(H, a0, PropagationConfig(5.0, 6))
    assert np.allclose(tr.powers.sum(axis=1), 2.0, rtol=1e-12)


def test_single_site_input_labels():
    a = single_site_input(5, -2)
    assert a[0] == 1.0 and np.count_nonzero(a) == 1
    with pytest.raises(ValidationError):
        single_site_input(5, 3)


def test_split_step_against_closed_form():
    pump = PumpField(H, single_site_input(N))
    cfg = PropagationConfig(6.0, 7, local_tol=1e-9)
    tr = propagate_biphoton(H, H, pump, NonlinearSource(1.0), cfg)
    ex = propagate_exact_constant(H, H, pump, NonlinearSource(1.0), cfg.z)
    assert relative_distance(tr.psi, ex)[1:].max() < 1e-7
    assert np.allclose(tr.final.psi, tr.final.psi.T, atol=1e-12)


def test_split_step_with_different_signal_and_idler():
    Hs, Hi = 0.97 * H, 1.03 * H
    pump = PumpField(H, single_site_input(N, 1))
    cfg = PropagationConfig(4.0, 5)
    tr = propagate_biphoton(Hs, Hi, pump, NonlinearSource(0.5), cfg)
    ex = propagate_exact_constant(Hs, Hi, pump, NonlinearSource(0.5), cfg.z)
    assert relative_distance(tr.psi, ex)[1:].max() < 1e-6


def test_crank_nicolson_against_closed_form():
    pump = PumpField(H, single_site_input(N))
    cfg = PropagationConfig(6.0, 4, method="crank_nicolson")
    tr = propagate_biphoton_cn(H, H, pump, NonlinearSource(1.0), cfg)
    ex = propagate_exact_constant(H, H, pump, NonlinearSource(1.0), cfg.z)
    assert relative_distance(tr.psi, ex)[1:].max() < 2e-3
    assert tr.method == "crank_nicolson"


def test_constant_pump_oracle():
    pump = ConstantPump(single_site_input(N))
    cfg = PropagationConfig(3.0, 4)
    tr = propagate_biphoton(H, H, pump, NonlinearSource(1.0), cfg)
    ex = propagate_exact_constant(H, H, pump, NonlinearSource(1.0), cfg.z)
    assert relative_distance(tr.psi, ex)[1:].max() < 1e-7


def test_linearity_in_source_strength():
    pump = PumpField(H, single_site_input(N))
    cfg = PropagationConfig(2.0, 3)
    a = propagate_biphoton(H, H, pump, NonlinearSource(1.0), cfg).final.psi
    b = propagate_biphoton(H, H, pump, NonlinearSource(3.0), cfg).final.psi
    assert np.allclose(b, 3 * a, rtol=1e-6, atol=1e-12)
    z = propagate_biphoton(H, H, pump, NonlinearSource(0.0), cfg)
    assert not np.any(z.psi)


def test_certificate():
    pump = PumpField(H, single_site_input(N))
    c = certify(H, H, pump, NonlinearSource(1.0), PropagationConfig(5.0, 6))
    assert c.passed and c.max_relative_difference < 1e-6
    assert c.fine_tol == pytest.approx(c.coarse_tol / 100)


def test_step_budget():
    pump = PumpField(H, single_site_input(N))
    with pytest.raises(ConvergenceError) as err:
        propagate_biphoton(H, H, pump, NonlinearSource(1.0), PropagationConfig(50.0, 2, max_steps=5))
    assert isinstance(err.value, NumericalError)


def test_shape_and_symmetry_checks():
    pump = PumpField(H, single_site_input(N))
    with pytest.raises(ValidationError):
        propagate_biphoton(H[:-1, :-1], H[:-1, :-1], pump, NonlinearSource(1.0), PropagationConfig(1.0))
    bad = H.copy()
    bad[0, 1] += 0.1
    with pytest.raises(ValidationError):
        PumpField(bad, single_site_input(N))
    with pytest.raises(NumericalError):
        BiphotonState(np.array([[np.nan]]), 0.0)


def test_relative_distance():
    a = np.zeros((2, 2, 2))
    b = np.ones((2, 2, 2))
    assert relative_distance(b, b).tolist() == [0.0, 0.0]
    assert relative_distance(a, b).tolist() == [1.0, 1.0]
    assert math.isinf(relative_distance(b, a)[0])
