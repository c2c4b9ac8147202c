"""Engine step laws, scheme limits, determinism, and configuration guards."""

import math

import numpy as np
import pytest

from sabrmc.cev import CevParams, cev_sample, cev_survival
from sabrmc.engine import (
    CHUNK_PATHS,
    ConfigError,
    PathState,
    SabrParams,
    cond_mean,
    sabr_step_cev,
    sabr_step_euler,
    sabr_step_islah,
    sabr_step_lognormal,
    simulate_terminal,
    vol_step,
)
from sabrmc.sampling import RngStream


def black_call(f0, k, sigma, t):
    from scipy.stats import norm

    v = sigma * math.sqrt(t)
    d1 = math.log(f0 / k) / v + 0.5 * v
    return f0 * norm.cdf(d1) - k * norm.cdf(d1 - v)


CASE1 = SabrParams(1.0, 0.25, 0.3, 0.3, -0.8)
CASE5 = SabrParams(1.1, 0.3, 0.5, 0.4, -0.8)


class TestSabrParams:
    def test_validation(self):
        for bad in [dict(f0=0.0), dict(sigma0=-1.0), dict(vov=-0.1), dict(beta=1.2), dict(rho=-2.0)]:
            kw = dict(f0=1.0, sigma0=0.25, vov=0.3, beta=0.3, rho=-0.8)
            kw.update(bad)
            with pytest.raises(ValueError):
                SabrParams(**kw)

    def test_derived(self):
        p = SabrParams(1.0, 0.2, 0.3, 0.3, -0.8)
        assert p.beta_star == 0.7
        assert p.rho_star == pytest.approx(0.6, rel=1e-15)


class TestVolStep:
    def test_zero_vov(self):
        sig, _ = vol_step(RngStream(1), np.full(100, 0.25), 0.0, 1.0)
        assert np.all(sig == 0.25)

    def test_martingale(self):
        n = 1_000_000
        sig, _ = vol_step(RngStream(2), np.full(n, 0.25), 0.5, 1.0)
        se = sig.std() / math.sqrt(n)
        assert abs(sig.mean() - 0.25) < 3.0 * se

    def test_log_variance(self):
        n = 1_000_000
        nu, h = 0.4, 0.5
        sig, _ = vol_step(RngStream(3), np.full(n, 0.3), nu, h)
        lv = np.log(sig / 0.3).var()
        se = nu * nu * h * math.sqrt(2.0 / n)
        assert abs(lv - nu * nu * h) < 3.0 * se


class TestCondMean:
    def test_rho_zero_identity(self):
        p = SabrParams(1.0, 0.25, 0.3, 0.3, 0.0)
        f = np.array([0.5, 1.0, 2.0])
        out = cond_mean(p, f, 0.25, np.array([0.3, 0.2, 0.25]), np.array([1.1, 0.9, 1.0]), 1.0)
        np.testing.assert_array_equal(out, f)

    def test_beta_one_reduces_to_lognormal_form(self):
        p = SabrParams(1.0, 0.25, 0.3, 1.0, -0.5)
        f, st, sn, av, h = 1.3, 0.25, 0.29, 1.05, 0.5
        ours = float(cond_mean(p, np.array([f]), st, np.array([sn]), np.array([av]), h)[0])
        ref = f * math.exp(p.rho / p.vov * (sn - st) - 0.5 * p.rho**2 * st**2 * h * av)
        assert ours == pytest.approx(ref, rel=1e-14)

    @pytest.mark.parametrize("beta,allowance", [(1.0, 0.0), (0.3, 2e-4)])
    def test_total_expectation(self, beta, allowance):
        # E[cond_mean] over the sampled joint (sigma_next, I) returns F_t,
        # exactly under the true law; sampling I from the SLN fit leaves a
        # documented model-error allowance at beta < 1
        p = SabrParams(1.0, 0.25, 0.3, beta, -0.8)
        n = 10_000_000
        state = PathState.initial(p, n)
        if beta == 1.0:
            stream = RngStream(11)
            sigma_next, z_hat = vol_step(stream, state.sigma, p.vov, 1.0)
            from sabrmc.engine import _draw_avg_var, _get_table, _mu_v2

            mu, v2 = _mu_v2(0.3, z_hat, sigma_next / state.sigma, _get_table(p, 1.0))
            avg_var = _draw_avg_var(stream, mu, v2)
            fbar = cond_mean(p, state.f, state.sigma, sigma_next, avg_var, 1.0)
        else:
            _, diag = sabr_step_cev(RngStream(11), p, state, 1.0, with_diagnostics=True)
            fbar = diag.cond_mean
        se = fbar.std() / math.sqrt(n)
        assert abs(fbar.mean() - p.f0) < 3.0 * se + allowance * p.f0


class TestConditionalSteps:
    def test_single_step_matches_simulate(self):
        state = PathState.initial(CASE1, 40_000)
        out = sabr_step_cev(RngStream(42, 0), CASE1, state, 1.0)
        via_engine = simulate_terminal("cev", CASE1, 1.0, 1.0, 40_000, 42)
        assert np.array_equal(out.f, via_engine)

    def test_absorption_flags(self):
        p = SabrParams(0.05, 0.4, 0.6, 0.3, 0.0)
        state = PathState.initial(p, 50_000)
        out = sabr_step_cev(RngStream(1), p, state, 1.0)
        assert np.array_equal(out.absorbed, out.f == 0.0)
        assert 0.5 < out.absorbed.mean() < 0.95

    def test_rho_one_returns_cond_mean(self):
        p = SabrParams(1.0, 0.25, 0.3, 0.3, -1.0)
        state = PathState.initial(p, 10_000)
        out, diag = sabr_step_cev(RngStream(2), p, state, 1.0, with_diagnostics=True)
        np.testing.assert_array_equal(out.f, diag.cond_mean)

    def test_islah_requires_correlation_bounds(self):
        state = PathState.initial(SabrParams(1.0, 0.25, 0.3, 0.3, -1.0), 10)
        with pytest.raises(ConfigError):
            sabr_step_islah(RngStream(1), SabrParams(1.0, 0.25, 0.3, 0.3, -1.0), state, 1.0)

    def test_islah_supermartingale_direction(self):
        n = 400_000
        ft = simulate_terminal("islah", CASE5, 10.0, 1.0, n, 7)
        se = ft.std() / math.sqrt(n)
        assert ft.mean() - CASE5.f0 > 3.0 * se

    def test_islah_drift_shrinks_with_h(self):
        n = 400_000
        d1 = abs(simulate_terminal("islah", CASE5, 10.0, 1.0, n, 8).mean() - CASE5.f0)
        d2 = abs(simulate_terminal("islah", CASE5, 10.0, 0.5, n, 8).mean() - CASE5.f0)
        assert d2 < d1

    def test_cev_multistep_martingale_rho0(self):
        p = SabrParams(0.05, 0.4, 0.6, 0.3, 0.0)
        n = 1_000_000
        ft = simulate_terminal("cev", p, 1.0, 0.25, n, 5)
        se = ft.std() / math.sqrt(n)
        assert abs(ft.mean() - p.f0) < 3.0 * se

    def test_tiny_vov_single_step_is_cev(self):
        # at rho = 0 the conditional draw is an exact CEV given I, and I -> 1
        # with the vol-of-vol, so one step to T reproduces CEV(F0, sigma0^2 T)
        p = SabrParams(1.0, 0.25, 1e-8, 0.3, 0.0)
        n = 400_000
        ft = np.sort(simulate_terminal("cev", p, 10.0, 10.0, n, 6))
        cev = CevParams(0.3, 1.0, 0.25**2 * 10.0)
        worst = 0.0
        for y in np.linspace(0.05, 3.0, 80):
            emp = 1.0 - np.searchsorted(ft, y, side="right") / n
            worst = max(worst, abs(emp - cev_survival(float(y), cev)))
        assert worst < 0.004

    def test_tiny_vov_correlated_stays_martingale(self):
        # with correlation the single-step mixture is only approximate in
        # shape (exactness needs h -> 0), but the mean is preserved exactly
        # by the conditional-mean construction
        p = SabrParams(1.0, 0.25, 1e-8, 0.3, -0.8)
        n = 400_000
        ft = simulate_terminal("cev", p, 10.0, 10.0, n, 6)
        se = ft.std() / math.sqrt(n)
        assert abs(ft.mean() - 1.0) < 3.0 * se

    def test_zero_vov_exact_cev(self):
        p = SabrParams(1.0, 0.25, 0.0, 0.3, -0.8)
        ft = simulate_terminal("cev", p, 10.0, 1.0, 100_000, 3)
        cev = CevParams(0.3, 1.0, 0.625)
        x = np.sort(ft)
        for y in (0.5, 1.0, 2.0):
            emp = 1.0 - np.searchsorted(x, y, side="right") / x.size
            assert emp == pytest.approx(cev_survival(y, cev), abs=0.005)


class TestLognormalBranch:
    def test_requires_beta_one(self):
        with pytest.raises(ConfigError):
            simulate_terminal("lognormal", CASE1, 1.0, 1.0, 100, 1)

    def test_rho_one_deterministic_conditional(self):
        p = SabrParams(1.0, 0.25, 0.3, 1.0, 1.0)
        state = PathState.initial(p, 200_000)
        out = sabr_step_lognormal(RngStream(4), p, state, 1.0)
        # F equals the conditional mean; its average is F0 (exact martingale)
        se = out.f.std() / math.sqrt(out.f.size)
        assert abs(out.f.mean() - 1.0) < 3.0 * se

    def test_terminal_martingale(self):
        p = SabrParams(1.0, 0.25, 0.3, 1.0, -0.5)
        n = 1_000_000
        ft = simulate_terminal("lognormal", p, 2.0, 0.5, n, 5)
        se = ft.std() / math.sqrt(n)
        assert abs(ft.mean() - 1.0) < 3.0 * se

    def test_zero_vov_black_limit(self):
        p = SabrParams(1.0, 0.25, 0.0, 1.0, -0.5)
        n = 500_000
        ft = simulate_terminal("lognormal", p, 4.0, 1.0, n, 6)
        lv = np.log(ft).var()
        assert lv == pytest.approx(0.25**2 * 4.0, rel=0.01)


class TestEulerBaseline:
    def test_black_convergence(self):
        p = SabrParams(1.0, 0.25, 0.0, 1.0, 0.0)
        n = 400_000
        ft = simulate_terminal("euler", p, 1.0, 1.0 / 256, n, 7)
        price = np.maximum(ft - 1.0, 0.0).mean()
        ref = black_call(1.0, 1.0, 0.25, 1.0)
        se = np.maximum(ft - 1.0, 0.0).std() / math.sqrt(n)
        assert abs(price - ref) < 3.0 * se + 3e-4  # order-h weak bias allowance

    def test_absorption_permanence(self):
        p = SabrParams(0.05, 0.4, 0.6, 0.3, 0.0)
        state = PathState.initial(p, 50_000)
        stream = RngStream(8)
        absorbed_seen = np.zeros(50_000, dtype=bool)
        for _ in range(40):
            state = sabr_step_euler(stream, p, state, 1.0 / 40)
            assert np.all(state.f[absorbed_seen] == 0.0)
            absorbed_seen |= state.absorbed
        assert absorbed_seen.mean() > 0.2


class TestSimulateTerminal:
    def test_determinism(self):
        a = simulate_terminal("cev", CASE1, 2.0, 0.5, 3000, 11)
        b = simulate_terminal("cev", CASE1, 2.0, 0.5, 3000, 11)
        assert np.array_equal(a, b)

    def test_worker_count_invariance(self):
        n = CHUNK_PATHS + 5000
        a = simulate_terminal("cev", CASE1, 2.0, 0.5, n, 12, n_jobs=1)
        b = simulate_terminal("cev", CASE1, 2.0, 0.5, n, 12, n_jobs=2)
        assert np.array_equal(a, b)

    def test_chunk_prefix_stability(self):
        # growing the path count extends, never reshuffles, earlier chunks
        a = simulate_terminal("cev", CASE1, 1.0, 0.5, CHUNK_PATHS, 13)
        b = simulate_terminal("cev", CASE1, 1.0, 0.5, CHUNK_PATHS + 100, 13)
        assert np.array_equal(a, b[:CHUNK_PATHS])

    def test_rho_zero_scheme_collapse_bitwise(self):
        p = SabrParams(1.1, 0.3, 0.5, 0.4, 0.0)
        a = simulate_terminal("cev", p, 3.0, 0.5, 50_000, 14)
        b = simulate_terminal("islah", p, 3.0, 0.5, 50_000, 14)
        assert np.array_equal(a, b)

    def test_step_count_validation(self):
        with pytest.raises(ConfigError):
            simulate_terminal("cev", CASE1, 1.0, 0.3, 100, 1)
        with pytest.raises(ConfigError):
            simulate_terminal("unknown", CASE1, 1.0, 0.5, 100, 1)
        with pytest.raises(ConfigError):
            simulate_terminal("islah", SabrParams(1.0, 0.2, 0.0, 0.3, 0.0), 1.0, 0.5, 100, 1)

    def test_beta_one_continuity(self):
        # conditional-CEV scheme at beta just below one vs the exact
        # lognormal branch at beta = 1
        n = 400_000
        p999 = SabrParams(1.0, 0.25, 0.3, 0.999, -0.5)
        p1 = SabrParams(1.0, 0.25, 0.3, 1.0, -0.5)
        a = simulate_terminal("cev", p999, 2.0, 0.5, n, 15)
        b = simulate_terminal("lognormal", p1, 2.0, 0.5, n, 16)
        pa = np.maximum(a - 1.0, 0.0)
        pb = np.maximum(b - 1.0, 0.0)
        se = math.hypot(pa.std(), pb.std()) / math.sqrt(n)
        assert abs(pa.mean() - pb.mean()) < 5.0 * se
