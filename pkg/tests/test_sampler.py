import numpy as np
import pytest
from scipy import stats

from spinspec.sampler import (
    ResponseEstimate,
    SamplingError,
    SamplingScheme,
    default_time_grid,
    estimand_distribution,
    estimand_moments,
    initial_distribution,
    run_shots,
    sample_initial,
    spectrum_from_estimate,
    transition_matrix,
    variance_oracle,
)
from spinspec.spincore import (
    ResponseSeries,
    SpinParams,
    eigensystem,
    response_exact,
    spectrum_exact,
)

TWO_PI = 2.0 * np.pi

UNIFORM = SamplingScheme("uniform")
IMPORTANCE = SamplingScheme("importance")


def random_params(rng, n=4, shift_scale=20.0, j_scale=5.0, gamma=3.0):
    J = rng.normal(0.0, j_scale, (n, n))
    J = 0.5 * (J + J.T)
    np.fill_diagonal(J, 0.0)
    return SpinParams(n, rng.normal(0.0, shift_scale, n), J, gamma)


@pytest.fixture(scope="module")
def eig4():
    return eigensystem(random_params(np.random.default_rng(101)))


class TestScheme:
    def test_thermal_requires_beta(self):
        with pytest.raises(SamplingError):
            SamplingScheme("thermal")
        with pytest.raises(SamplingError):
            SamplingScheme("thermal", beta=-1.0)

    def test_beta_rejected_elsewhere(self):
        with pytest.raises(SamplingError):
            SamplingScheme("uniform", beta=0.3)

    def test_unknown_kind(self):
        with pytest.raises(SamplingError):
            SamplingScheme("magic")


class TestTransitionMatrix:
    def test_identity_at_t0(self, eig4):
        assert np.max(np.abs(transition_matrix(eig4, 0.0) - np.eye(16))) < 1e-12

    def test_doubly_stochastic_and_symmetric(self, eig4):
        for t in (0.013, 0.12, 1.7):
            P = transition_matrix(eig4, t)
            assert np.max(np.abs(P.sum(axis=0) - 1.0)) < 1e-10
            assert np.max(np.abs(P.sum(axis=1) - 1.0)) < 1e-10
            assert np.max(np.abs(P - P.T)) < 1e-10
            assert P.min() >= -1e-15

    def test_single_spin_rabi_oracle(self):
        # For H = 2 pi h Sx the survival probability is cos^2(pi h t).
        h = 10.0
        eig = eigensystem(SpinParams(1, np.array([h]), np.zeros((1, 1)), 1.0))
        for t in (0.0, 0.01, 0.025, 0.05, 0.171):
            P = transition_matrix(eig, t)
            assert P[0, 0] == pytest.approx(np.cos(np.pi * h * t) ** 2, abs=1e-12)
        # full flip when 2 pi h t = pi
        P = transition_matrix(eig, 0.05)
        assert P[0, 0] == pytest.approx(0.0, abs=1e-12)
        assert P[1, 0] == pytest.approx(1.0, abs=1e-12)


class TestInitialDistributions:
    def test_importance_normalization(self):
        # sum_j (4/N) m_j^2 / 2^N = 1 because Tr[(Sz)^2]/2^N = N/4
        for n in (1, 2, 3, 4, 6):
            eig = eigensystem(SpinParams(n, np.zeros(n), np.zeros((n, n)), 1.0))
            q = initial_distribution(IMPORTANCE, eig.magnetizations)
            assert q.sum() == pytest.approx(1.0, abs=1e-12)
            assert np.all(q[eig.magnetizations == 0.0] == 0.0)

    def test_importance_sector_frequencies(self, eig4):
        # Sector weights m^2 * C(4, 2+m) over m in {-2,-1,1,2} are all equal
        # (4, 4, 4, 4)/16, chi-squared test at 1e5 draws.
        rng = np.random.default_rng(7)
        j = sample_initial(IMPORTANCE, 4, rng, size=100_000)
        m = eig4.magnetizations[j]
        counts = np.array([(m == v).sum() for v in (-2.0, -1.0, 1.0, 2.0)])
        assert counts.sum() == 100_000
        chi2 = ((counts - 25_000.0) ** 2 / 25_000.0).sum()
        assert chi2 < stats.chi2.ppf(0.999, df=3)

    def test_thermal_small_beta_near_uniform(self):
        rng = np.random.default_rng(11)
        j = sample_initial(SamplingScheme("thermal", beta=1e-4), 3, rng, size=40_000)
        counts = np.bincount(j, minlength=8)
        chi2 = ((counts - 5000.0) ** 2 / 5000.0).sum()
        assert chi2 < stats.chi2.ppf(0.999, df=7)

    def test_sampled_frequencies_match_exact_q0(self, eig4):
        rng = np.random.default_rng(13)
        for scheme in (UNIFORM, SamplingScheme("thermal", beta=0.4), IMPORTANCE,
                       SamplingScheme("abs-magnetization")):
            q = initial_distribution(scheme, eig4.magnetizations)
            j = sample_initial(scheme, 4, rng, size=50_000)
            counts = np.bincount(j, minlength=16)
            support = q > 0
            assert np.all(counts[~support] == 0)
            chi2 = ((counts[support] - 50_000 * q[support]) ** 2 / (50_000 * q[support])).sum()
            assert chi2 < stats.chi2.ppf(0.999, df=support.sum() - 1)


class TestVarianceOracles:
    def test_uniform_t0_closed_form(self, eig4):
        # var[m_i m_j] at t=0 equals Tr[(Sz)^4]/2^N - (N/4)^2 = N(N-1)/8
        assert variance_oracle(eig4, UNIFORM, 0.0) == pytest.approx(1.5, abs=1e-12)

    def test_uniform_bound(self, eig4):
        # var <= 3 (N/4)^2 at every time
        for t in np.linspace(0.0, 2.0, 9):
            assert variance_oracle(eig4, UNIFORM, t) <= 3.0 * (4.0 / 4.0) ** 2 + 1e-12

    def test_importance_identity(self, eig4):
        # Enumeration equals (N/4)^2 - S(t)^2 exactly, at 10 random times
        rng = np.random.default_rng(3)
        for t in rng.uniform(0.0, 2.0, 10):
            st = response_exact(eig4, np.array([0.0, float(t)])).values.real[1]
            var = variance_oracle(eig4, IMPORTANCE, float(t))
            assert var == pytest.approx(1.0 - st**2, abs=1e-10)

    def test_importance_zero_variance_at_t0(self, eig4):
        assert variance_oracle(eig4, IMPORTANCE, 0.0) == pytest.approx(0.0, abs=1e-12)

    def test_variance_ordering(self):
        rng = np.random.default_rng(17)
        for _ in range(5):
            eig = eigensystem(random_params(rng))
            for t in np.linspace(0.0, 1.5, 7):
                assert variance_oracle(eig, IMPORTANCE, t) <= variance_oracle(
                    eig, UNIFORM, t
                ) + 1e-10

    def test_estimand_mean_is_exact_response(self, eig4):
        times = np.linspace(0.0, 1.0, 6)
        s = response_exact(eig4, times).values.real
        for scheme in (UNIFORM, IMPORTANCE, SamplingScheme("abs-magnetization")):
            for t, st in zip(times, s):
                mean = estimand_moments(eig4, scheme, float(t))["mean"]
                assert mean == pytest.approx(st, abs=1e-10)


class TestRunShots:
    def test_importance_t0_constant_estimand(self, eig4):
        est = run_shots(eig4, IMPORTANCE, np.array([0.0]), 500, seed=5)
        assert est.values[0] == pytest.approx(1.0, abs=1e-14)  # N/4 exactly
        assert est.variances[0] == pytest.approx(0.0, abs=1e-14)

    def test_uniform_t0_empirical_variance(self, eig4):
        # Empirical var must agree with the exact 1.5 within a 3-sigma band
        # whose width uses the enumerated fourth moment.
        M = 100_000
        est = run_shots(eig4, UNIFORM, np.array([0.0]), M, seed=21)
        mom = estimand_moments(eig4, UNIFORM, 0.0)
        band = 3.0 * np.sqrt((mom["m4"] - mom["var"] ** 2) / M)
        assert abs(est.variances[0] - 1.5) < band

    def test_unbiasedness_three_sigma(self):
        rng = np.random.default_rng(29)
        M = 3000
        for _ in range(3):
            eig = eigensystem(random_params(rng))
            times = np.linspace(0.0, 0.8, 5)
            exact = response_exact(eig, times).values.real
            for scheme in (UNIFORM, IMPORTANCE):
                est = run_shots(eig, scheme, times, M, seed=int(rng.integers(2**31)))
                for k, t in enumerate(times):
                    sigma = np.sqrt(variance_oracle(eig, scheme, float(t)) / M)
                    assert abs(est.values[k] - exact[k]) <= 4.0 * sigma + 1e-12

    def test_thermal_closed_form_single_spin(self):
        # Oracle: E[S_hat] = tanh(beta/2)/(2 beta) = 0.2497917 at beta = 0.1
        beta = 0.1
        eig = eigensystem(SpinParams(1, np.array([10.0]), np.zeros((1, 1)), 1.0))
        mom = estimand_moments(eig, SamplingScheme("thermal", beta=beta), 0.0)
        oracle = np.tanh(beta / 2.0) / (2.0 * beta)
        assert oracle == pytest.approx(0.2497917, abs=1e-6)
        assert mom["mean"] == pytest.approx(oracle, abs=1e-12)

    def test_thermal_bias_quadratic_in_beta(self, eig4):
        # Exact-expectation bias at t=0 fits a power law with exponent 2.
        betas = np.array([0.02, 0.05, 0.1, 0.2, 0.3])
        bias = []
        for b in betas:
            mom = estimand_moments(eig4, SamplingScheme("thermal", beta=b), 0.0)
            bias.append(abs(mom["mean"] - 1.0))
        slope = np.polyfit(np.log(betas), np.log(bias), 1)[0]
        assert slope == pytest.approx(2.0, abs=0.1)

    def test_thermal_guidance_warning(self, eig4):
        with pytest.warns(RuntimeWarning, match="beta"):
            run_shots(eig4, SamplingScheme("thermal", beta=0.5), np.array([0.0]), 10, seed=1)

    def test_deterministic_under_seed(self, eig4):
        times = np.linspace(0.0, 0.3, 4)
        a = run_shots(eig4, UNIFORM, times, 200, seed=9)
        b = run_shots(eig4, UNIFORM, times, 200, seed=9)
        assert np.array_equal(a.values, b.values)
        assert np.array_equal(a.variances, b.variances)

    def test_worker_split_merges_to_same_estimate(self, eig4):
        # Per-time child streams: a worker that processes only its share of
        # the time indices reproduces the single-run estimate exactly.
        times = np.linspace(0.0, 0.3, 4)
        whole = run_shots(eig4, UNIFORM, times, 300, seed=33)
        merged = np.empty(4)
        for k in range(0, 4, 2):  # worker A: even indices
            merged[k] = _single_time(eig4, times, k, seed=33)
        for k in range(1, 4, 2):  # worker B: odd indices
            merged[k] = _single_time(eig4, times, k, seed=33)
        assert np.allclose(merged, whole.values)

    def test_records(self, eig4):
        est = run_shots(eig4, IMPORTANCE, np.array([0.0, 0.1]), 50, seed=2, keep_records=True)
        assert len(est.records) == 2
        rec = est.records[1]
        m = eig4.magnetizations
        assert np.array_equal(rec.initial_magnetization, m[rec.initial_state])
        assert np.array_equal(rec.final_magnetization, m[rec.final_state])
        assert np.all(np.isfinite(rec.estimand))
        assert np.all(np.abs(rec.initial_magnetization) >= 0.5)  # m=0 never drawn


def _single_time(eig, times, k, seed):
    """Emulate a worker that only processes time index k of the grid."""
    from spinspec.sampler import sample_initial as si, transition_matrix as tm

    rng = np.random.default_rng([seed, k])
    j = si(SamplingScheme("uniform"), eig.n_spins, rng, size=300)
    probs = tm(eig, float(times[k]))
    out = np.empty(j.size, dtype=np.int64)
    for jj in np.unique(j):
        where = np.nonzero(j == jj)[0]
        p = np.clip(probs[:, jj], 0.0, None)
        p /= p.sum()
        out[where] = rng.choice(eig.dim, size=where.size, p=p)
    m = eig.magnetizations
    return (m[out] * m[j]).mean()


class TestSpectrumFromEstimate:
    def test_exact_input_matches_exact_spectrum(self):
        rng = np.random.default_rng(41)
        p = random_params(rng, shift_scale=10.0, j_scale=4.0, gamma=2.0)
        eig = eigensystem(p)
        times = default_time_grid(eig, p.gamma)
        series = response_exact(eig, times)
        # compare inside the time-sampling Nyquist window only
        nyquist = np.pi / (times[1] - times[0])
        full = spectrum_exact(eig, p.gamma)
        window = np.abs(full.omega) <= 0.98 * nyquist
        grid = full.omega[window]
        exact_vals = full.values[window]
        w_max = float(eig.energies[-1] - eig.energies[0])
        ft = spectrum_from_estimate(
            series, p.gamma, omega_grid=grid, max_transition_frequency=w_max
        )
        peaks = exact_vals > 0.25 * exact_vals.max()
        rel = np.abs(ft.values[peaks] - exact_vals[peaks]) / exact_vals[peaks]
        assert np.max(rel) < 0.02
        # peak locations align to within one grid step
        assert abs(grid[np.argmax(exact_vals)] - ft.omega[np.argmax(ft.values)]) \
            <= full.grid_step + 1e-12
        assert ft.mass() == pytest.approx(1.0, rel=0.05)

    def test_zero_signal_zero_spectrum(self):
        times = np.linspace(0.0, 1.0, 101)
        series = ResponseSeries(times=times, values=np.zeros(101))
        spec = spectrum_from_estimate(series, 2.0)
        assert np.all(spec.values == 0.0)

    def test_aliasing_warning(self):
        times = np.linspace(0.0, 1.0, 11)
        series = ResponseSeries(times=times, values=np.ones(11))
        with pytest.warns(RuntimeWarning, match="Nyquist"):
            spectrum_from_estimate(series, 1.0, max_transition_frequency=100.0)

    def test_shot_noise_tv_scaling(self):
        # TV to the exact spectrum decreases ~ M^{-1/2}; slope fitted over
        # M in {100, ..., 100000} with averaging over repeats.
        from spinspec.metrics import normalize, total_variation

        rng = np.random.default_rng(47)
        p = random_params(rng, shift_scale=8.0, j_scale=4.0, gamma=6.0)
        eig = eigensystem(p)
        times = default_time_grid(eig, p.gamma)
        w_max = float(eig.energies[-1] - eig.energies[0])
        full = spectrum_exact(eig, p.gamma)
        window = np.abs(full.omega) <= 0.98 * np.pi / (times[1] - times[0])
        grid = full.omega[window]
        from spinspec.spincore import SpectralDensity

        ref = normalize(SpectralDensity(grid, full.values[window]))
        budgets = [100, 1000, 10_000, 100_000]
        tvs = []
        for M in budgets:
            reps = []
            for rep in range(3):
                est = run_shots(eig, IMPORTANCE, times, M, seed=1000 + rep)
                spec = spectrum_from_estimate(
                    est, p.gamma, omega_grid=grid, max_transition_frequency=w_max
                )
                reps.append(total_variation(normalize(spec), ref))
            tvs.append(np.mean(reps))
        slope = np.polyfit(np.log(budgets), np.log(tvs), 1)[0]
        assert slope == pytest.approx(-0.5, abs=0.1)
