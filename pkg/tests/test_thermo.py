import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dissmhd.thermo import (
    DomainError,
    EosModel,
    TransportModel,
    entropy,
    gibbs_residual,
    hypothesis_report,
    internal_energy,
    pressure,
    temperature_from_energy,
)

EOS = EosModel()
IDEAL = EosModel(structural="ideal")
positive = st.floats(0.05, 20.0)


def test_ideal_gas_closed_forms():
    # P(Z) = Z gives p = rho theta + a theta^4 / 3 and e = 1.5 theta + a theta^4 / rho
    rho, theta = np.array([0.3, 1.0, 7.0]), np.array([0.5, 1.0, 2.5])
    np.testing.assert_allclose(pressure(rho, theta, IDEAL), rho * theta + theta**4 / 3, rtol=1e-14)
    np.testing.assert_allclose(internal_energy(rho, theta, IDEAL), 1.5 * theta + theta**4 / rho, rtol=1e-14)


def test_degenerate_pressure_formula():
    rho, theta = 2.0, 0.7
    z = rho / theta**1.5
    expected = theta**2.5 * z * (1 + z) ** (2 / 3) + theta**4 / 3
    assert pressure(rho, theta, EOS) == pytest.approx(expected, rel=1e-14)


def test_entropy_function_against_quadrature():
    # by hand: 5/3 P - P' Z = 2/3 Z (1+Z)^(-1/3), so S(Z) = int_Z^inf (1+t)^(-1/3) / t dt
    from scipy.integrate import quad

    for z in (0.01, 0.5, 3.0, 40.0, 1e4):
        val = quad(lambda t: (1 + t) ** (-1 / 3) / t, z, np.inf, limit=400, epsabs=1e-13, epsrel=1e-12)[0]
        assert EOS.S(np.array(z)) == pytest.approx(val, rel=1e-7)


def test_gibbs_residual_default_model():
    rng = np.random.default_rng(0)
    rho = 10 ** rng.uniform(0, 1, 25)
    theta = 10 ** rng.uniform(-0.3, 0.3, 25)
    r1, r2 = gibbs_residual(rho, theta, EOS, h=1e-4)
    assert max(r1.max(), r2.max()) < 1e-6


def test_gibbs_residual_radiation_only_scales_like_h2():
    rad = EosModel(P=lambda z: 0 * z, dP=lambda z: 0 * z, defect=lambda z: 0 * z)
    r_a = gibbs_residual(np.array([1.0]), np.array([1.0]), rad, h=1e-4)[0][0]
    r_b = gibbs_residual(np.array([1.0]), np.array([1.0]), rad, h=1e-5)[0][0]
    assert r_b < 1e-8
    # analytic truncation error 8 a theta h^2 / 3
    assert r_a == pytest.approx(8 / 3 * 1e-8, rel=1e-3)


def test_domain_errors():
    with pytest.raises(DomainError):
        pressure(1.0, 0.0, EOS)
    with pytest.raises(DomainError):
        internal_energy(0.0, 1.0, EOS)
    with pytest.raises(DomainError):
        entropy(-1.0, 1.0, EOS)


def test_pressure_allows_vacuum():
    assert pressure(0.0, 2.0, EOS) == pytest.approx(16 / 3)


def test_hypothesis_report_default_passes():
    rep = hypothesis_report(EOS, TransportModel())
    assert rep["passed"], [h for h in rep["hypotheses"] if not h["passed"]]
    assert all(h["margin"] > 0 for h in rep["hypotheses"])


def test_hypothesis_report_flags_ideal_gas_growth():
    rep = hypothesis_report(IDEAL, TransportModel())
    failed = {h["name"] for h in rep["hypotheses"] if not h["passed"]}
    assert any(name.startswith("growth") for name in failed)


def test_hypothesis_report_flags_small_beta():
    rep = hypothesis_report(EOS, TransportModel(beta=5.0))
    failed = {h["name"] for h in rep["hypotheses"] if not h["passed"]}
    assert "conductivity: beta > 6" in failed


def test_report_measures_equivalence_band():
    band = hypothesis_report(EOS, TransportModel())["measured"]["p_over_rhoe"]
    # gas part 2/3, radiation part 1/3
    assert 1 / 3 - 1e-6 <= band[0] <= band[1] <= 2 / 3 + 1e-6


@given(positive, positive)
def test_temperature_inversion_roundtrip(rho, theta):
    rhoe = EOS._rhoe(np.array([rho]), np.array([theta]))
    back = temperature_from_energy(np.array([rho]), rhoe, EOS)
    assert back[0] == pytest.approx(theta, rel=1e-10)


@given(positive, positive)
def test_entropy_decreases_in_density(rho, theta):
    assert entropy(rho * 1.01, theta, EOS) < entropy(rho, theta, EOS)


@given(positive, positive)
def test_energy_increases_in_temperature(rho, theta):
    assert internal_energy(rho, theta * 1.01, EOS) > internal_energy(rho, theta, EOS)


@given(st.floats(0.01, 100.0))
def test_transport_positive(theta):
    tr = TransportModel(eta0=0.3)
    for f in (tr.mu, tr.eta, tr.kappa, tr.zeta):
        assert f(theta) > 0
    assert tr.kappa(theta) >= tr.kappa0 * theta**tr.beta
