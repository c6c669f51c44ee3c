import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from levy_codebook import (JumpSpec, LevyTriplet, StripDomainError, SpecError, bns_gamma,
                           brownian_exponent, compose, eval_exponent, levy_exponent,
                           martingale_defect, pi_exponent, subordinator_exponent)

CP = JumpSpec("compound-poisson-exp", 1.0, 2.0)
ETA = subordinator_exponent(CP)


def test_exponent_vanishes_at_zero():
    for e in (brownian_exponent(0.3), ETA, pi_exponent(0.5, CP),
              levy_exponent(0.1, 0.2, JumpSpec("gamma", 3.0, shape=2.0))):
        assert eval_exponent(e, 0.0) == 0


def test_brownian_value():
    e = levy_exponent(-0.02, 0.04)
    assert abs(eval_exponent(e, 1.0) - (-0.02 - 0.02j)) < 1e-15


def test_compound_poisson_on_imaginary_axis():
    # rate * (theta / (theta - iz) - 1) with z = 0.5i
    assert abs(eval_exponent(ETA, 0.5j) - (-0.2)) < 1e-15


def test_jump_integral_against_quadrature():
    for z in (0.7, -1.3 + 0.4j, 2.0 - 0.9j):
        def f(x):
            return (np.exp((1j * z - 2) * x) - np.exp(-2 * x)) * 2

        re = quad(lambda x: f(x).real, 0, 80, limit=400)[0]
        im = quad(lambda x: f(x).imag, 0, 80, limit=400)[0]
        assert abs(eval_exponent(ETA, z) - (re + 1j * im)) < 1e-10


def test_gamma_measure_against_quadrature():
    g = JumpSpec("gamma", 3.0, shape=2.0)
    e = subordinator_exponent(g)
    z = 1.1 - 0.5j

    def f(x):
        return (np.exp((1j * z - 3.0) * x) - np.exp(-3.0 * x)) * 2.0 / x

    ref = quad(lambda x: f(x).real, 0, 60, limit=400)[0] + 1j * quad(
        lambda x: f(x).imag, 0, 60, limit=400)[0]
    assert abs(eval_exponent(e, z) - ref) < 1e-9


def test_pi_unit_diffusion():
    e = pi_exponent(1.0)
    u = np.linspace(-3, 3, 13)
    assert np.allclose(eval_exponent(e, u), -0.5 * (u * u + 1j * u), atol=1e-15)
    assert abs(eval_exponent(e, -1j)) < 1e-15


def test_pi_discrete_atom():
    e = pi_exponent(0.0, JumpSpec("compound-poisson-discrete", 1.0, atoms=((1.0, 1.0),)))
    ref = np.exp(1j) - 1 - 1j * (np.e - 1)
    assert abs(eval_exponent(e, 1.0) - ref) < 1e-14


def test_pi_rejects_heavy_right_tail():
    with pytest.raises(SpecError):
        pi_exponent(0.1, JumpSpec("compound-poisson-exp", 1.0, 0.8))


def test_strip_domain_is_enforced():
    with pytest.raises(StripDomainError):
        eval_exponent(ETA, -3j)  # Im z = -3 < -theta


def test_bns_gamma_examples():
    g = bns_gamma(ETA, -0.5)
    v = np.array([0.3, -1.2 + 0.1j])
    assert np.allclose(g(0.0, v), ETA(v))
    assert abs(g(1.0, 0.0) - (ETA(-0.5) + 0.2j)) < 1e-15
    g0 = bns_gamma(ETA, 0.0)
    assert np.allclose(g0(np.array([1.0, 2.5]), v), ETA(v))
    with pytest.raises(SpecError):
        bns_gamma(ETA, 0.1)


def test_martingale_defect_examples():
    assert martingale_defect(pi_exponent(0.3, CP)) < 1e-15
    assert abs(martingale_defect(levy_exponent(0.0, 0.04)) - 0.02) < 1e-15
    assert martingale_defect(levy_exponent(-0.02, 0.04)) < 1e-15
    real_only = levy_exponent(0.0, 0.1, JumpSpec("compound-poisson-exp", 1.0, 0.5))
    with pytest.raises(StripDomainError):
        martingale_defect(real_only)


def test_triplet_json_round_trip():
    t = LevyTriplet(0.1, 0.2, (CP, JumpSpec("gamma", 3.0, shape=2.0)))
    assert LevyTriplet.from_dict(t.to_dict()) == t
    d = LevyTriplet(0.0, 0.0, (CP,)).to_dict()
    assert set(d) == {"drift", "diffusion", "jumps"}
    assert set(d["jumps"]) <= {"kind", "rate", "theta", "atoms", "shape"}
    with pytest.raises(SpecError):
        JumpSpec.from_dict({"kind": "gamma", "rate": 1, "shape": 1, "scale": 2})


jump_specs = st.one_of(
    st.builds(lambda r, th: JumpSpec("compound-poisson-exp", r, th),
              st.floats(0.0, 5.0), st.floats(1.5, 10.0)),
    st.builds(lambda r, x, y: JumpSpec("compound-poisson-discrete", r,
                                       atoms=((x, 0.5), (y, 0.5))),
              st.floats(0.0, 3.0), st.floats(0.05, 1.5), st.floats(-2.0, -0.05)),
    st.builds(lambda r, a: JumpSpec("gamma", r, shape=a), st.floats(1.5, 8.0), st.floats(0.1, 4.0)),
)


@given(c=st.floats(0.0, 2.0), j=jump_specs, u=st.floats(-30.0, 30.0))
def test_pi_members_have_nonpositive_real_part(c, j, u):
    e = pi_exponent(c, j)
    assert eval_exponent(e, u).real <= 1e-12
    assert eval_exponent(e, 0.0) == 0
    assert martingale_defect(e) < 1e-10


@given(c1=st.floats(0.0, 1.0), c2=st.floats(0.0, 1.0), j=jump_specs,
       u=st.floats(-10.0, 10.0), b=st.floats(-1.0, 1.0))
def test_composition_is_additive(c1, c2, j, u, b):
    a = levy_exponent(b, c1, j)
    e = pi_exponent(c2)
    both = compose(a, e)
    assert abs(eval_exponent(both, u) - eval_exponent(a, u) - eval_exponent(e, u)) <= 1e-12 * max(
        1.0, abs(eval_exponent(both, u)))


@given(u=st.floats(-5.0, 5.0), v=st.floats(0.0, 3.0), w=st.floats(-0.9, 0.0),
       delta=st.floats(-1.0, 0.0))
def test_gamma_derivative_matches_finite_difference(u, v, w, delta):
    g = bns_gamma(ETA, delta)
    z = v + 1j * w
    h = 1e-6
    fd = (g(u, z + h) - g(u, z - h)) / (2 * h)
    an = g.dv(u, z)
    assert abs(fd - an) <= 1e-6 * max(1.0, abs(an))
