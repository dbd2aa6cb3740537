import numpy as np
import pytest
import scipy.fft as sfft
from scipy.linalg import expm

from fermikin.disorder import DisorderField, SeedSpec, sample_disorder
from fermikin.lattice import (
    ComplexField,
    PairPotential,
    ScalarField,
    convolve,
    cosine_bump_vhat,
    dispersion,
    make_grid,
)
from fermikin.micro import (
    EvolutionConfig,
    KappaTrajectory,
    evolve_sample,
    init_columns,
    initial_occupation,
    kinetic_scaling_experiment,
    pairwise_sum,
    self_consistent_evolve,
    stationarity_experiment,
    step_split,
    _measure,
)


def bump_potential(grid, amp=1.0):
    return PairPotential.from_vhat(grid, cosine_bump_vhat(grid, amp), sigma=0.5)


def dense_hamiltonian(grid, omega_vals, kappa_vals, eta, lam):
    n = grid.total_points
    e = dispersion(grid).values
    eye = np.eye(n).reshape(grid.shape + (n,))
    fmat = sfft.fftn(eye, axes=(0, 1, 2)).reshape(n, n)
    finv = np.conj(fmat.T) / n
    return np.diag((e - lam * kappa_vals).ravel()) + eta * (fmat @ np.diag(omega_vals.ravel()) @ finv)


def test_initial_occupation_kinds():
    g = make_grid(8)
    fd = initial_occupation(g, "fermi_dirac", beta=np.inf, mu_chem=0.0)
    e = dispersion(g).values
    assert np.array_equal(fd.values, (e < 0).astype(float))
    fd1 = initial_occupation(g, "fermi_dirac", beta=1.0, mu_chem=0.0)
    assert fd1.values[2, 2, 2] == pytest.approx(0.5, abs=1e-12)  # E((1/4,1/4,1/4)) = 0
    const = initial_occupation(g, "constant", value=0.3)
    assert np.all(const.values == 0.3)
    with pytest.raises(ValueError):
        initial_occupation(g, "constant", value=1.3)
    with pytest.raises(ValueError):
        initial_occupation(g, "cosine_bump", amplitude=0.6, offset=0.5)
    with pytest.raises(ValueError):
        initial_occupation(g, "nope", value=1.0)


def test_step_split_free_evolution():
    # eta=0, lambda=0: column p only picks up the phase e^{-i t E(p)}
    g = make_grid(4)
    cols = init_columns(g)
    psi0 = cols.psi.copy()
    omega = DisorderField(g, np.zeros(g.shape))
    zero_kappa = ScalarField(g, np.zeros(g.shape))
    dt, nsteps = 0.02, 25
    for _ in range(nsteps):
        step_split(cols, zero_kappa, omega, 0.0, 0.0, dt)
    e = dispersion(g).values.ravel()
    n = g.total_points
    expected = psi0.reshape(n, n) * np.exp(-1j * dt * nsteps * e)[None, :]
    assert np.abs(cols.psi.reshape(n, n) - expected).max() < 1e-12
    j = initial_occupation(g, "constant", value=0.4)
    mu = _measure(cols.psi, j.values.ravel(), n)
    assert np.abs(mu - 0.4).max() < 1e-13


def test_step_split_uniform_disorder_and_exchange_phase(rng):
    g = make_grid(4)
    n = g.total_points
    j = ScalarField(g, rng.random(g.shape))
    # uniform omega: pure global phase per step, occupations untouched
    cols = init_columns(g)
    omega = DisorderField(g, np.full(g.shape, 0.8))
    kappa = ScalarField(g, rng.standard_normal(g.shape))
    for _ in range(10):
        step_split(cols, kappa, omega, 0.9, 0.7, 0.03)
    mu = _measure(cols.psi, j.values.ravel(), n)
    assert np.abs(mu - j.values.ravel()).max() < 1e-12
    # eta=0, lambda>0: exchange phase alone cannot move occupations
    cols = init_columns(g)
    omega0 = DisorderField(g, rng.standard_normal(g.shape))
    for _ in range(10):
        step_split(cols, kappa, omega0, 0.0, 0.7, 0.03)
    mu = _measure(cols.psi, j.values.ravel(), n)
    assert np.abs(mu - j.values.ravel()).max() < 1e-12


def test_evolve_sample_constant_j_and_t0(rng):
    g = make_grid(4)
    pot = bump_potential(g)
    omega = sample_disorder(g, SeedSpec(1, 0))
    j = initial_occupation(g, "constant", value=0.25)
    cfg = EvolutionConfig(eta=0.5, lam=0.2, t_macro=0.1, dt=0.02, n_samples=1)
    hz = cfg.horizon()
    ktraj = KappaTrajectory.constant(convolve(pot.vhat, j), hz.n_steps, cfg.dt)
    out = evolve_sample(j, omega, ktraj, cfg)
    assert np.abs(out.checkpoint_mu[-1].values - 0.25).max() < 1e-13

    cfg0 = EvolutionConfig(eta=0.5, lam=0.2, t_macro=0.0, dt=0.02)
    j2 = ScalarField(g, rng.random(g.shape))
    out0 = evolve_sample(j2, omega, KappaTrajectory.constant(convolve(pot.vhat, j2), 1, cfg0.dt), cfg0)
    assert np.array_equal(out0.checkpoint_mu[-1].values, j2.values)


def test_evolve_sample_horizon_mismatch():
    g = make_grid(4)
    pot = bump_potential(g)
    j = initial_occupation(g, "constant", value=0.25)
    cfg = EvolutionConfig(eta=0.5, lam=0.0, t_macro=0.5, dt=0.05)
    short = KappaTrajectory.constant(convolve(pot.vhat, j), 3, cfg.dt)
    with pytest.raises(ValueError):
        evolve_sample(j, sample_disorder(g, SeedSpec(0, 0)), short, cfg)


def test_split_step_matches_dense_exponential():
    # frozen kappa, eta=0.5: occupations match expm(-i t H) columns
    g = make_grid(8)
    n = g.total_points
    pot = bump_potential(g)
    j = initial_occupation(g, "cosine_bump", amplitude=0.3, offset=0.5)
    omega = sample_disorder(g, SeedSpec(3, 0))
    eta, lam = 0.5, 0.25
    kappa = convolve(pot.vhat, j)
    t_micro, dt = 0.8, 2e-3  # T=0.2 macro at eta^2 scaling
    nsteps = round(t_micro / dt)
    cfg = EvolutionConfig(eta=eta, lam=lam, t_macro=0.2, dt=dt)
    assert cfg.horizon().n_steps == nsteps
    ktraj = KappaTrajectory.constant(kappa, nsteps, dt)
    out = evolve_sample(j, omega, ktraj, cfg)
    h = dense_hamiltonian(g, omega.omega, kappa.values, eta, lam)
    u_exact = expm(-1j * t_micro * h)
    mu_exact = (np.abs(u_exact) ** 2) @ j.values.ravel()
    assert np.abs(out.checkpoint_mu[-1].values.ravel() - mu_exact).max() < 1e-6
    assert out.norm_drift < 1e-10


def test_unitarity_drift_1000_steps():
    g = make_grid(8)
    pot = bump_potential(g)
    j = initial_occupation(g, "constant", value=0.5)
    omega = sample_disorder(g, SeedSpec(9, 0))
    dt, nsteps = 0.01, 1000
    cfg = EvolutionConfig(eta=0.5, lam=0.25, t_macro=dt * nsteps * 0.25, scaling="lambda", dt=dt)
    hz = cfg.horizon()
    assert hz.n_steps == nsteps
    ktraj = KappaTrajectory.constant(convolve(pot.vhat, j), nsteps, dt)
    out = evolve_sample(j, omega, ktraj, cfg)
    assert out.norm_drift < 1e-10


def test_mass_conservation_and_bounds(rng):
    g = make_grid(8)
    pot = bump_potential(g)
    j = initial_occupation(g, "cosine_bump", amplitude=0.4, offset=0.5)
    cfg = EvolutionConfig(eta=0.6, lam=0.36, t_macro=0.3, dt=0.05, n_samples=3, checkpoints=(0.15, 0.3))
    traj, ktraj, report, _ = self_consistent_evolve(j, cfg, pot, master_seed=5)
    for mu in traj.mu:
        rel = abs(np.mean(mu.values) - np.mean(j.values)) / np.mean(j.values)
        assert rel < 1e-10
        assert mu.values.min() >= 0.0 and mu.values.max() <= 1.0 + 1e-9
    assert ktraj.sup_norm() <= pot.kappa_sup_bound() + 1e-12


def test_picard_lambda0_single_iteration(rng):
    g = make_grid(8)
    pot = bump_potential(g)
    j = initial_occupation(g, "cosine_bump", amplitude=0.3, offset=0.5)
    cfg = EvolutionConfig(eta=0.5, lam=0.0, t_macro=0.2, dt=0.05, n_samples=2)
    traj, ktraj, report, _ = self_consistent_evolve(j, cfg, pot, master_seed=2)
    assert report.iterations == 1
    assert report.residual == 0.0
    assert report.converged
    # kappa trajectory follows the measured occupation
    assert ktraj.n_steps == cfg.horizon().n_steps


def test_picard_eta0_converges_immediately():
    g = make_grid(8)
    pot = bump_potential(g)
    j = initial_occupation(g, "cosine_bump", amplitude=0.3, offset=0.5)
    cfg = EvolutionConfig(eta=0.0, lam=0.3, t_macro=0.5, scaling="lambda", dt=0.05, n_samples=1)
    traj, ktraj, report, _ = self_consistent_evolve(j, cfg, pot, master_seed=2)
    assert np.abs(traj.mu[-1].values - j.values).max() < 1e-12
    assert report.iterations == 1 and report.converged
    assert report.residual < 1e-12


def test_picard_contraction():
    g = make_grid(8)
    pot = bump_potential(g)
    j = initial_occupation(g, "cosine_bump", amplitude=0.3, offset=0.5)
    cfg = EvolutionConfig(
        eta=0.5, lam=0.25, t_macro=0.2, dt=0.02, n_samples=2, picard_tol=1e-4, picard_max_iter=6
    )
    traj, ktraj, report, _ = self_consistent_evolve(j, cfg, pot, master_seed=3)
    assert report.converged and report.iterations <= 5
    hist = report.residual_history
    assert all(hist[i + 1] < hist[i] for i in range(len(hist) - 1))


def test_determinism_across_worker_counts():
    g = make_grid(8)
    pot = bump_potential(g)
    j = initial_occupation(g, "cosine_bump", amplitude=0.3, offset=0.5)
    cfg = EvolutionConfig(eta=0.5, lam=0.25, t_macro=0.1, dt=0.05, n_samples=10)
    t1, k1, r1, w1 = self_consistent_evolve(j, cfg, pot, master_seed=11, n_workers=1)
    t2, k2, r2, w2 = self_consistent_evolve(j, cfg, pot, master_seed=11, n_workers=2)
    for a, b in zip(t1.mu, t2.mu):
        assert np.array_equal(a.values, b.values)
    for a, b in zip(t1.se, t2.se):
        assert np.array_equal(a.values, b.values)
    assert np.array_equal(k1.values, k2.values)
    assert r1.residual == r2.residual


def test_pairwise_sum_fixed_shape():
    arrays = [np.full(3, float(i)) for i in range(7)]
    assert np.array_equal(pairwise_sum(arrays), np.full(3, 21.0))
    with pytest.raises(ValueError):
        pairwise_sum([])


def test_kinetic_experiment_trivial_t0_and_mass():
    g = make_grid(8)
    pot = bump_potential(g)
    j = initial_occupation(g, "cosine_bump", amplitude=0.3, offset=0.5)
    one = ScalarField(g, np.ones(g.shape))
    pairs = {"one:one": (one, one)}
    rows = kinetic_scaling_experiment(
        j, pot, [0.5], T=0.0, dt=0.05, n_samples=2, test_pairs=pairs, boltz_delta=0.5, master_seed=1
    )
    err, se = rows[0].weak_errors["one:one"]
    assert err < 1e-12 and rows[0].sup_error < 1e-12

    rows = kinetic_scaling_experiment(
        j, pot, [0.6], T=0.2, dt=0.05, n_samples=2, test_pairs=pairs, boltz_delta=0.5, master_seed=1
    )
    err, se = rows[0].weak_errors["one:one"]
    assert err < 1e-10  # both sides conserve mass


def test_kinetic_experiment_budget_guard():
    g = make_grid(4)
    pot = bump_potential(g)
    j = initial_occupation(g, "constant", value=0.5)
    one = ScalarField(g, np.ones(g.shape))
    with pytest.raises(ValueError):
        kinetic_scaling_experiment(
            j, pot, [0.01], T=1.0, dt=0.05, n_samples=1, test_pairs={"one:one": (one, one)},
            boltz_delta=1.0, max_steps=1000,
        )


def test_stationarity_experiment_eta0_row():
    g = make_grid(8)
    pot = bump_potential(g)
    j = initial_occupation(g, "cosine_bump", amplitude=0.3, offset=0.5)
    rows = stationarity_experiment(
        j, pot, [], delta_exponent=1.0, T=0.3, dt=0.05, n_samples=1,
        control_rows=[(0.3, 0.0)], master_seed=4,
    )
    assert len(rows) == 1
    assert rows[0].deviation < 1e-12
    assert not rows[0].in_regime  # eta=0 is not lambda^1


def test_config_validation():
    with pytest.raises(ValueError):
        EvolutionConfig(eta=0.5, lam=0.0, t_macro=1.0, dt=0.2)
    with pytest.raises(ValueError):
        EvolutionConfig(eta=0.5, lam=0.0, t_macro=1.0, scaling="bogus")
    with pytest.raises(ValueError):
        EvolutionConfig(eta=0.0, lam=0.0, t_macro=1.0, scaling="eta2")
    with pytest.raises(ValueError):
        EvolutionConfig(eta=0.5, lam=0.0, t_macro=1.0, scaling="lambda")
    cfg = EvolutionConfig(eta=0.3, lam=0.09, t_macro=0.5, dt=0.05)
    hz = cfg.horizon()
    assert hz.n_steps == round(0.5 / 0.09 / 0.05)
    assert hz.checkpoint_steps == (hz.n_steps,)
