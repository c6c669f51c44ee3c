import numpy as np
import pytest
from scipy.integrate import quad

from levy_codebook import (BnsParams, CodebookSurface, ExpKernel, GridSpec, JumpSpec, SpecError,
                           ZeroKernel, affine_blocks, black_scholes_codebook, bns_blocks,
                           bns_closed_codebook, bns_gamma, bns_local_exponent, bns_phi,
                           bns_variance_path, drift_a, evolve_picard, generator_cumulant,
                           min_compatible_codebook, pi_exponent, pi_necessary_check,
                           simulate_subordinator, subordinator_exponent, truncate_b, zero_gamma)


def test_black_scholes_codebook(small_grid):
    s = black_scholes_codebook(0.2, small_grid)
    k1 = small_grid.u_index(1.0)
    assert np.all(np.abs(s.values[:, k1] - (-0.02 - 0.02j)) < 1e-16)
    assert not np.any(s.values[:, small_grid.zero_index])
    assert abs(generator_cumulant(s, 0.0, 1.0, np.array([-1j]))[0]) < 1e-15
    with pytest.raises(SpecError):
        black_scholes_codebook(0.0, small_grid)


def test_minimal_codebook_limits(desk, small_grid):
    vol = ExpKernel(bns_phi, 1.0)
    assert not np.any(min_compatible_codebook(vol, zero_gamma(), small_grid).values)
    g = bns_gamma(desk.eta, desk.delta)
    flat = min_compatible_codebook(ZeroKernel(), g, small_grid)
    u = small_grid.frequencies.astype(complex)
    assert np.allclose(flat.values, np.broadcast_to(g(u, 0.0), small_grid.shape), atol=1e-15)


def test_minimal_codebook_bns_formula(desk, small_grid):
    g = bns_gamma(desk.eta, desk.delta)
    mu = min_compatible_codebook(ExpKernel(bns_phi, desk.lam), g, small_grid)
    u = small_grid.frequencies[None, :]
    T = small_grid.maturities[:, None]
    z = desk.delta * u - 1j * truncate_b(bns_phi(u)) * (-np.expm1(-desk.lam * T)) / desk.lam
    shift = 2 / (2 + 0.5) - 1  # eta(-delta i) = eta(0.5i) for Exp(2) jumps at rate 1
    ref = (2 / (2 - 1j * z) - 1) - 1j * u * shift
    assert np.max(np.abs(mu.values - ref)) < 1e-14
    assert pi_necessary_check(mu, 0.0).ok


def test_bns_cumulant_against_quadrature(desk, small_grid):
    bl = bns_blocks(desk, small_grid)
    for u in (0.7, -2.0, 3.5):
        phi = -0.5 * (u * u + 1j * u)

        def f(s, T=1.0):
            z = desk.delta * u - 1j * phi * (-np.expm1(-(T - s)))
            return 2 / (2 - 1j * z) - 1

        integ = quad(lambda s: f(s).real, 0, 1)[0] + 1j * quad(lambda s: f(s).imag, 0, 1)[0]
        ref = -0.5 * 0.01 * (u * u + 1j * u) - 1j * u * (-0.2) + integ
        assert abs(generator_cumulant(bl.psi0, 0.0, 1.0, np.array([u]))[0] - ref) < 1e-12


def test_bns_without_leverage_or_jumps_is_pii(small_grid):
    p = BnsParams(1.0, 0.0, subordinator_exponent(), pi_exponent(0.04))
    bl = bns_blocks(p, small_grid)
    assert np.allclose(bl.psi0.values, black_scholes_codebook(0.2, small_grid).values, atol=1e-16)


def test_bns_fast_reversion_limit(small_grid):
    eta = subordinator_exponent(JumpSpec("compound-poisson-exp", 1.0, 2.0))
    p = BnsParams(1e6, -0.5, eta, pi_exponent(0.01))
    bl = bns_blocks(p, small_grid)
    u = small_grid.frequencies.astype(complex)
    lim = p.psiL(u) + eta(-0.5 * u) - 1j * u * eta(0.5j)
    assert np.max(np.abs(bl.psi0.values[1:] - lim[None, :])) < 1e-5
    assert not np.any(bl.psi0.values[:, small_grid.zero_index])


def test_bns_initial_codebook_starts_at_local_exponent(desk, small_grid):
    bl = bns_blocks(desk, small_grid)
    u = small_grid.frequencies
    assert np.allclose(bl.psi0.values[0], bns_local_exponent(desk, u, 0.0), atol=1e-15)


def test_closed_codebook_examples(desk, small_grid):
    bl = bns_blocks(desk, small_grid)
    assert np.allclose(bns_closed_codebook(bl, 0.0, 0.0).values, bl.psi0.values, atol=1e-15)
    t, z = 0.35, 0.8
    s = bns_closed_codebook(bl, t, z)
    u = small_grid.frequencies
    j = small_grid.t_index(t)
    assert np.max(np.abs(s.values[j] - bns_local_exponent(desk, u, z))) < 1e-10
    assert not np.any(s.values[:, small_grid.zero_index])
    with pytest.raises(SpecError):
        bns_closed_codebook(bl, t, -1.0)


def test_trajectory_diagonal_matches_local_exponent(desk, bns_grid):
    bl = bns_blocks(desk, bns_grid)
    path = simulate_subordinator(desk.eta, 2.0, 11)
    tr = evolve_picard(bl, path, 2.0)
    u = bns_grid.frequencies
    for t, s in zip(tr.times, tr.surfaces):
        k = np.nonzero(np.abs(bns_grid.maturities - t) < 1e-9)[0]
        if k.size:
            z = float(bns_variance_path(desk, path, t))
            assert np.max(np.abs(s.values[k[0]] - bns_local_exponent(desk, u, z))) < 1e-8


def test_drift_condition_by_finite_differences(desk):
    grid = GridSpec.uniform(2.0, 0.1, 5.0, 0.25)
    bl = bns_blocks(desk, grid)
    g = bl.gamma
    t = 0.0
    rows = np.arange(1, 21)
    cols = grid.frequencies.size // 2 + np.arange(-10, 10)
    a = drift_a(bl, t, bl.psi0)
    h = 1e-5
    phi = truncate_b(bns_phi(grid.frequencies))

    def minus_gamma(T, k):
        integ = phi[k] * (-np.expm1(-desk.lam * (T - t))) / desk.lam
        return -g(grid.frequencies[k], -1j * integ)

    worst = 0.0
    for j in rows:
        T = grid.maturities[j]
        for k in cols:
            fd = (minus_gamma(T + h, k) - minus_gamma(T - h, k)) / (2 * h)
            if abs(a[j, k]) > 0:
                worst = max(worst, abs(fd - a[j, k]) / abs(a[j, k]))
    assert worst < 1e-6


def test_affine_blocks_match_bns(desk, small_grid):
    aff = affine_blocks(desk.psiL, bns_phi, desk.lam, desk.eta, desk.delta, small_grid)
    bl = bns_blocks(desk, small_grid)
    assert np.max(np.abs(aff.psi0.values - bl.psi0.values)) < 1e-14
    assert aff.psi0.generator is None


def test_params_validation():
    eta = subordinator_exponent(JumpSpec("compound-poisson-exp", 1.0, 2.0))
    with pytest.raises(SpecError):
        BnsParams(1.0, 0.5, eta, pi_exponent(0.01))
    with pytest.raises(SpecError):
        BnsParams(0.0, -0.5, eta, pi_exponent(0.01))
    with pytest.raises(SpecError):
        BnsParams(1.0, -0.5, pi_exponent(0.01), pi_exponent(0.01))
