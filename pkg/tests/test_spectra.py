"""Random-phase data generation and exact expectation rules."""

import numpy as np
import pytest

from wavekin.lattice import TorusSpec, mode_count, modes
from wavekin.spectra import Profile, SeedPlan, phase_expectation, sample_initial

SPEC = TorusSpec(d=2, L=4, beta=(1.3, 1.7))


def test_modulus_law_exact():
    phi = Profile.gaussian().on_spec(SPEC)
    f = sample_initial(SPEC, Profile.gaussian(), SeedPlan(123), 0)
    assert np.max(np.abs(np.abs(f.amps) ** 2 - phi)) < 1e-15


def test_zero_profile_modes_are_zero():
    # bump supported strictly inside the cutoff ball leaves outer modes empty
    prof = Profile.bump(radius=0.5)
    phi = prof.on_spec(SPEC)
    assert np.any(phi == 0.0)
    f = sample_initial(SPEC, prof, SeedPlan(5), 3)
    assert np.all(f.amps[phi == 0.0] == 0.0)


def test_reproducibility_bit_identical():
    a = sample_initial(SPEC, Profile.gaussian(), SeedPlan(99), 17)
    b = sample_initial(SPEC, Profile.gaussian(), SeedPlan(99), 17)
    assert np.array_equal(a.amps, b.amps)
    c = sample_initial(SPEC, Profile.gaussian(), SeedPlan(99), 18)
    assert not np.array_equal(a.amps, c.amps)


def test_sample_mean_vanishes():
    # E a_k = 0: over M draws, |mean| <= 4 sqrt(phi/M) for >= 99% of modes
    spec = TorusSpec(d=1, L=8, beta=(1.5,))
    prof = Profile.gaussian()
    phi = prof.on_spec(spec)
    plan = SeedPlan(2024)
    M = 10_000
    acc = np.zeros(mode_count(spec), dtype=np.complex128)
    for i in range(M):
        acc += sample_initial(spec, prof, plan, i).amps
    mean = np.abs(acc) / M
    bound = 4.0 * np.sqrt(phi / M)
    ok = mean <= np.maximum(bound, 1e-300)
    assert np.mean(ok) >= 0.99


def test_phase_expectation_trivial_cases():
    assert phase_expectation({}) == 1.0
    assert phase_expectation({(0, 0): 1}) == 0.0
    assert phase_expectation({(0, 0): 0, (1, 0): 0}) == 1.0


def test_phase_expectation_fourth_moment_uniform_vs_gaussian():
    # a_k^2 conj(a_k)^2 has net exponent zero: uniform phases give phi^2 ...
    assert phase_expectation({(0, 0): 2 - 2}) == 1.0
    # ... whereas complex Gaussians give 2 phi^2 (Wick pairing count)
    assert phase_expectation({(0, 0): (2, 2)}, model="gaussian") == 2.0
    assert phase_expectation({(0, 0): (2, 1)}, model="gaussian") == 0.0


def test_phase_expectation_matches_monte_carlo_fourth_moment():
    spec = TorusSpec(d=1, L=2, beta=(1.0,))
    prof = Profile.gaussian()
    plan = SeedPlan(7)
    phi = prof.on_spec(spec)
    j = 2  # the K = 0 mode on this lattice
    M = 20_000
    vals = np.empty(M)
    for i in range(M):
        a = sample_initial(spec, prof, plan, i).amps[j]
        vals[i] = np.abs(a) ** 4
    # uniform phases: E|a|^4 = phi^2 exactly (zero variance in fact)
    assert np.mean(vals) == pytest.approx(phi[j] ** 2, rel=1e-12)
    vals_g = np.empty(M)
    for i in range(M):
        a = sample_initial(spec, prof, plan, i, randomization="gaussian").amps[j]
        vals_g[i] = np.abs(a) ** 4
    se = np.std(vals_g) / np.sqrt(M)
    assert abs(np.mean(vals_g) - 2.0 * phi[j] ** 2) < 4 * se


def test_phase_expectation_multiplicative_over_disjoint_supports():
    rng = np.random.default_rng(1)
    for _ in range(50):
        e1 = {(0, i): int(rng.integers(-2, 3)) for i in range(3)}
        e2 = {(1, i): int(rng.integers(-2, 3)) for i in range(3)}
        merged = {**e1, **e2}
        assert phase_expectation(merged) == phase_expectation(e1) * phase_expectation(e2)


def test_profile_even_symmetry():
    prof = Profile.gaussian(width=0.8)
    k = np.random.default_rng(2).normal(size=(40, 3))
    assert np.allclose(prof.value(k), prof.value(-k))
    b = Profile.bump(radius=1.0)
    assert np.allclose(b.value(k), b.value(-k))
    assert b.value(np.zeros(3)) == pytest.approx(1.0)


def test_profile_truncation_and_json():
    prof = Profile.gaussian()
    phi = prof.on_spec(SPEC)
    K = modes(SPEC)
    assert np.all(phi[~np.asarray(SPEC.contains(K))] == 0.0) if np.any(~SPEC.contains(K)) else True
    back = Profile.from_json(prof.to_json())
    assert back == prof
    tab = Profile.table(phi)
    assert np.array_equal(tab.on_spec(SPEC), phi)
    back_tab = Profile.from_json(tab.to_json())
    assert np.array_equal(back_tab.on_spec(SPEC), phi)


def test_negative_table_rejected():
    with pytest.raises(ValueError):
        Profile.table(np.array([-1.0, 0.5]))
