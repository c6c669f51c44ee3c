import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from levy_codebook import (AlignmentError, CodebookSurface, GridSpec, OutOfRangeError,
                           black_scholes_codebook, from_musiela, integrate_maturity,
                           pi_necessary_check, seminorm, to_musiela)


def const_surface(grid, z, time=0.0):
    vals = np.full(grid.shape, z, dtype=complex)
    return CodebookSurface(grid, vals, time)


def test_grid_validation():
    with pytest.raises(ValueError):
        GridSpec(np.array([0.0, 0.1, 0.3]), np.array([-1.0, 0.0, 1.0]))
    with pytest.raises(ValueError):
        GridSpec(np.array([0.0, 0.1, 0.2]), np.array([0.0, 1.0]))
    g = GridSpec.uniform(1.0, 0.05, 40.0, 0.05)
    assert g.shape == (21, 1601)
    assert GridSpec.from_dict(g.to_dict()) == g
    with pytest.raises(OutOfRangeError):
        g.u_index(40.5)


def test_integrate_zero_and_constant(small_grid):
    assert integrate_maturity(CodebookSurface.zeros(small_grid), 0.2, 0.9, 1.0) == 0
    z = -0.3 + 0.7j
    s = const_surface(small_grid, z)
    assert abs(integrate_maturity(s, 0.15, 0.85, 0.5) - 0.7 * z) < 1e-15
    assert abs(integrate_maturity(s, 0.137, 0.5111, 2.0) - (0.5111 - 0.137) * z) < 1e-14


def test_integrate_black_scholes(small_grid):
    s = black_scholes_codebook(0.2, small_grid)
    assert abs(integrate_maturity(s, 0.0, 1.0, 1.0) - (-0.02 - 0.02j)) < 1e-15


def test_integrate_rejects_bad_bounds(small_grid):
    s = CodebookSurface.zeros(small_grid)
    with pytest.raises(OutOfRangeError):
        integrate_maturity(s, 0.5, 0.2, 1.0)
    with pytest.raises(OutOfRangeError):
        integrate_maturity(s, 0.0, 1.5, 1.0)


def test_seminorm_examples(small_grid):
    assert seminorm(CodebookSurface.zeros(small_grid), 1.0, 3.0) == 0
    z = 0.4 - 1.1j
    assert abs(seminorm(const_surface(small_grid, z), 0.75, 5.0) - 0.75 * abs(z)) < 1e-15
    s = black_scholes_codebook(0.2, small_grid)
    assert abs(seminorm(s, 1.0, 1.0) - 0.02 * np.sqrt(2)) < 1e-15


def test_musiela_identity_at_time_zero(small_grid):
    s = black_scholes_codebook(0.2, small_grid)
    m = to_musiela(s)
    assert np.array_equal(m.values, s.values)
    assert np.array_equal(from_musiela(m).values, s.values)


def test_musiela_shift_and_back(small_grid):
    rng = np.random.default_rng(1)
    vals = rng.normal(size=small_grid.shape) + 1j * rng.normal(size=small_grid.shape)
    s = CodebookSurface(small_grid, vals, 0.3)
    m = to_musiela(s)
    assert m.grid.maturities[0] == 0 and m.values.shape[0] == small_grid.shape[0] - 6
    back = from_musiela(m, small_grid)
    assert np.array_equal(back.values[6:], s.values[6:])
    # frozen rows carry the T = t row
    assert np.array_equal(back.values[:6], np.repeat(s.values[6:7], 6, axis=0))


def test_musiela_off_grid_time(small_grid):
    with pytest.raises(AlignmentError):
        to_musiela(CodebookSurface.zeros(small_grid, 0.33))


def test_pi_check_examples(small_grid):
    assert pi_necessary_check(black_scholes_codebook(0.2, small_grid), 0.0).ok
    assert pi_necessary_check(CodebookSurface.zeros(small_grid), 0.0).ok
    rep = pi_necessary_check(const_surface(small_grid, 1.0), 0.0)
    nT, nu = small_grid.shape
    # every (a < b, u != 0) triple fails; u = 0 is pinned to zero
    assert len(rep) == nT * (nT - 1) // 2 * (nu - 1)
    assert set(rep.kind) == {"re"}


def test_pi_check_skips_unresolved(small_grid):
    s = black_scholes_codebook(0.2, small_grid)
    s.values[3:5, 0] = np.nan
    rep = pi_necessary_check(s, 0.0)
    assert rep.ok and rep.skipped > 0


values = st.complex_numbers(max_magnitude=5.0, allow_nan=False, allow_infinity=False)


@given(a=st.floats(0.0, 1.0), b=st.floats(0.0, 1.0), c=st.floats(0.0, 1.0), seed=st.integers(0, 99))
def test_integral_is_additive(a, b, c, seed):
    a, b, c = sorted((a, b, c))
    g = GridSpec.uniform(1.0, 0.05, 2.0, 0.5)
    rng = np.random.default_rng(seed)
    s = CodebookSurface(g, rng.normal(size=g.shape) + 1j * rng.normal(size=g.shape))
    lhs = integrate_maturity(s, a, c, 1.0)
    rhs = integrate_maturity(s, a, b, 1.0) + integrate_maturity(s, b, c, 1.0)
    assert abs(lhs - rhs) < 1e-12


@given(seed=st.integers(0, 10_000), T=st.floats(0.0, 1.0), m=st.floats(0.0, 2.0))
def test_seminorm_triangle(seed, T, m):
    g = GridSpec.uniform(1.0, 0.1, 2.0, 0.5)
    rng = np.random.default_rng(seed)
    x = CodebookSurface(g, rng.normal(size=g.shape) + 1j * rng.normal(size=g.shape))
    y = CodebookSurface(g, rng.normal(size=g.shape) + 1j * rng.normal(size=g.shape))
    xy = CodebookSurface(g, x.values + y.values)
    assert seminorm(xy, T, m) <= seminorm(x, T, m) + seminorm(y, T, m) + 1e-12


@given(seed=st.integers(0, 10_000), j=st.integers(0, 8))
def test_musiela_round_trip(seed, j):
    g = GridSpec.uniform(1.0, 0.1, 2.0, 0.5)
    rng = np.random.default_rng(seed)
    s = CodebookSurface(g, rng.normal(size=g.shape) + 1j * rng.normal(size=g.shape),
                        g.maturities[j])
    m = to_musiela(s)
    again = to_musiela(from_musiela(m, g))
    assert np.array_equal(again.values, m.values)
