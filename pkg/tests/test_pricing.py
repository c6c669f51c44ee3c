import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import norm

from levy_codebook import (CodebookSurface, DataError, GridSpec, ModifiedPriceSlice,
                           PiViolationError, PriceSurface, black_scholes_codebook, bns_blocks,
                           codebook_to_modified, forward_transform, generator_cumulant,
                           modified_to_calls, modified_to_puts, price_from_cumulant,
                           price_surface, surface_to_codebook)

# 2 Phi(sigma sqrt(T) / 2) - 1 for sigma = 0.2, T = 1
ATM = 2 * norm.cdf(0.1) - 1


def bs_oracle(S, K, T, sigma):
    sv = sigma * np.sqrt(T)
    d1 = (np.log(S / K) + 0.5 * sv * sv) / sv
    return S * norm.cdf(d1) - K * norm.cdf(d1 - sv)


def bs_cum(sigma):
    return lambda u, T: -0.5 * (u * u + 1j * u) * sigma * sigma * T


def test_atm_constant_is_as_expected():
    assert abs(ATM - 0.0797) < 5e-5


@pytest.mark.parametrize("method", ["damped", "grid"])
def test_modified_at_the_money(small_grid, method):
    s = black_scholes_codebook(0.2, small_grid)
    o = codebook_to_modified(s, 0.0, 1.0, x=np.array([-0.5, 0.0, 0.5]), method=method)
    assert abs(o.values[1] - ATM) < 1e-9
    assert o.meta["route"] == method


def test_modified_trivial_maturity(small_grid):
    s = black_scholes_codebook(0.2, small_grid)
    o = codebook_to_modified(s, 0.4, 0.4)
    assert not np.any(o.values)


def test_modified_default_grid_decays(small_grid):
    s = black_scholes_codebook(0.2, small_grid)
    o = codebook_to_modified(s, 0.0, 1.0)
    assert o.x[0] <= -2 and o.x[-1] >= 2
    assert np.all(o.values[np.abs(o.x) >= 2] < 1e-4)
    assert o.meta["martingale_defect"] < 1e-12


def test_modified_rejects_non_pi_codebook(small_grid):
    s = CodebookSurface(small_grid, np.full(small_grid.shape, 0.5 + 0j))
    with pytest.raises(PiViolationError):
        codebook_to_modified(s, 0.0, 1.0)


def test_calls_from_zero_slice_are_intrinsic():
    o = ModifiedPriceSlice(1.0, np.linspace(-3, 3, 61), np.zeros(61))
    K = np.array([0.2, 0.9, 1.0, 1.3, 4.0])
    assert np.array_equal(modified_to_calls(o, 1.0, K), np.maximum(1.0 - K, 0.0))


def test_calls_atm_and_small_strike(small_grid):
    s = black_scholes_codebook(0.2, small_grid)
    o = codebook_to_modified(s, 0.0, 1.0, x=np.linspace(-8, 2, 1001))
    c = modified_to_calls(o, 1.0, np.array([np.exp(-8), 1.0]))
    assert abs(c[1] - ATM) < 1e-9
    assert abs(c[0] - 1.0) < 1e-3


def test_calls_do_not_extrapolate(small_grid):
    s = black_scholes_codebook(0.2, small_grid)
    o = codebook_to_modified(s, 0.0, 1.0, x=np.linspace(-1, 1, 201))
    with pytest.raises(ValueError):
        modified_to_calls(o, 1.0, np.array([3.0]))


def test_put_call_parity_on_slices(small_grid):
    s = black_scholes_codebook(0.2, small_grid)
    o = codebook_to_modified(s, 0.0, 0.5)
    K = np.linspace(0.6, 1.6, 11)
    assert np.allclose(modified_to_calls(o, 1.0, K) - modified_to_puts(o, 1.0, K), 1.0 - K,
                       atol=1e-14)


def test_price_from_zero_cumulant_is_intrinsic():
    K = np.linspace(0.5, 2, 7)
    c = price_from_cumulant(lambda u, T: 0 * u, 1.0, K, 1.0)
    assert np.allclose(c, np.maximum(1 - K, 0), atol=1e-12)


@pytest.mark.parametrize("method", ["fft", "direct"])
def test_price_from_cumulant_black_scholes(method):
    K = np.linspace(0.5, 2.0, 21)
    c = price_from_cumulant(bs_cum(0.2), 1.0, K, np.array([0.25, 1.0, 2.0]), method=method)
    ref = np.array([bs_oracle(1.0, K, T, 0.2) for T in (0.25, 1.0, 2.0)])
    big = ref > 1e-3
    assert np.max(np.abs(c - ref)[big] / ref[big]) < 1e-6
    assert np.max(np.abs(c - ref)[~big]) < 1e-9
    atm = price_from_cumulant(bs_cum(0.2), 1.0, np.array([1.0]), 1.0, method=method)
    assert abs(atm[0] - ATM) < 1e-9


def test_price_from_cumulant_put_call_parity(desk, bns_grid):
    bl = bns_blocks(desk, bns_grid)

    def cum(u, T):
        return generator_cumulant(bl.psi0, 0.0, T, u)

    K = np.linspace(0.6, 1.5, 10)
    c = price_from_cumulant(cum, 1.0, K, 1.0, method="direct")
    # reflected strikes give puts via the measure change; here parity is against the
    # put computed from the modified slice of the same codebook
    o = codebook_to_modified(bl.psi0, 0.0, 1.0)
    p = modified_to_puts(o, 1.0, K)
    assert np.allclose(c - p, 1.0 - K, atol=2e-6)


def test_forward_transform_black_scholes():
    v = 0.04
    x = np.arange(-400, 401) * 0.01
    o = np.maximum(0, 2 * norm.cdf(0) - 1) * 0 + _bs_modified_oracle(x, v)
    u = np.linspace(-20, 20, 161)
    F, v_fit = forward_transform(x, o, u)
    q = u * u + 1j * u
    nz = u != 0
    assert abs(v_fit - v) < 1e-12
    assert np.max(np.abs(F[nz] - (1 - np.exp(-0.5 * v * q[nz])) / q[nz])) < 1e-6


def _bs_modified_oracle(x, v):
    K = np.exp(x)
    return (bs_oracle(1.0, K, v, 1.0) - np.maximum(1 - K, 0)) / K


def test_forward_transform_bns(desk, bns_grid):
    bl = bns_blocks(desk, bns_grid)
    u = np.linspace(-10, 10, 81)
    q = u * u + 1j * u
    nz = u != 0
    for T in (0.5, 1.0):
        o = codebook_to_modified(bl.psi0, 0.0, T, x=np.arange(-1600, 1601) * 0.01)
        F, _ = forward_transform(o.x, o.values, u)
        k = generator_cumulant(bl.psi0, 0.0, T, u)
        assert np.max(np.abs(F[nz] - (1 - np.exp(k[nz])) / q[nz])) < 1e-6


def test_resolution_refinement_is_stable():
    K = np.linspace(0.5, 2.0, 21)
    coarse = GridSpec.uniform(2.0, 0.05, 40.0, 0.05)
    fine = GridSpec.uniform(2.0, 0.05, 40.0, 0.025)
    for T in (0.25, 1.0, 2.0):
        a = codebook_to_modified(CodebookSurface(coarse, black_scholes_codebook(0.2, coarse).values),
                                 0.0, T, x=np.arange(-200, 201) * 0.01)
        b = codebook_to_modified(CodebookSurface(fine, black_scholes_codebook(0.2, fine).values),
                                 0.0, T, x=np.arange(-400, 401) * 0.01)
        assert a.meta["route"] == b.meta["route"] == "grid"
        assert np.max(np.abs(modified_to_calls(a, 1.0, K) - modified_to_calls(b, 1.0, K))) < 1e-7


def test_round_trip_black_scholes():
    g = GridSpec.uniform(1.0, 0.05, 40.0, 0.05)
    s = black_scholes_codebook(0.2, g)
    K = np.exp(np.arange(-200, 201) * 0.01)
    p, _ = price_surface(s, 1.0, K, g.maturities[1:])
    back = surface_to_codebook(p, cf_floor=1e-4)
    ok = back.meta["resolved"]
    ok[[0, -1]] = False
    assert back.grid == g
    assert np.max(np.abs(back.values - s.values)[ok]) < 1e-3


def test_round_trip_of_intrinsic_surface_is_zero():
    K = np.exp(np.arange(-100, 101) * 0.01)
    T = np.array([0.1, 0.2, 0.3, 0.4])
    p = PriceSurface(1.0, K, T, np.tile(np.maximum(1 - K, 0.0), (4, 1)))
    back = surface_to_codebook(p, u_max=5.0, du=0.25)
    assert np.all(back.values == 0)


def test_round_trip_needs_three_maturities():
    K = np.exp(np.arange(-10, 11) * 0.1)
    p = PriceSurface(1.0, K, np.array([1.0]), [bs_oracle(1.0, K, 1.0, 0.2)])
    with pytest.raises(DataError):
        surface_to_codebook(p)


@given(sigma=st.floats(0.05, 0.8), T=st.floats(0.05, 3.0),
       K=st.lists(st.floats(0.3, 3.0), min_size=1, max_size=6))
def test_put_bounds_from_cumulant(sigma, T, K):
    K = np.unique(np.asarray(K))
    c = price_from_cumulant(bs_cum(sigma), 1.0, K, T)
    put = c - 1.0 + K
    assert np.all(put >= -1e-12)
    assert np.all(put <= K + 1e-12)
