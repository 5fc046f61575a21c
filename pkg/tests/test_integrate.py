"""Integrator checks against closed forms and scipy's solve_ivp oracle."""

import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from rabisqueeze import integrate as ig


def run(rhs, y0, t_end, samples, rtol=1e-8, atol=1e-10, h_max=np.inf, **kw):
    ys, stats = ig.integrate_adaptive(rhs, 0.0, np.asarray(y0, complex), t_end,
                                      np.asarray(samples, float), rtol, atol,
                                      h_max, **kw)
    stats.raise_on_failure()
    return ys, stats


class TestAgainstClosedForms:
    def test_exponential_decay(self):
        samples = np.linspace(0.0, 5.0, 21)
        ys, _ = run(lambda t, y: -y, [1.0], 5.0, samples)
        exact = np.exp(-samples)
        assert np.max(np.abs(ys[:, 0] - exact)) < 1e-7

    def test_complex_rotation_phase(self):
        omega = 3.0
        samples = np.linspace(0.0, 50.0, 101)
        ys, _ = run(lambda t, y: 1j * omega * y, [1.0], 50.0, samples, rtol=1e-10, atol=1e-12)
        exact = np.exp(1j * omega * samples)
        assert np.max(np.abs(ys[:, 0] - exact)) < 2e-7

    def test_driven_oscillator_dense_output(self):
        # y' = i y + e^{2it}: exact y = (e^{2it} - e^{it})/i with y(0) = 0;
        # samples intentionally incommensurate with any step pattern
        samples = np.sort(np.random.default_rng(3).uniform(0.0, 10.0, 37))
        samples = np.concatenate(([0.0], samples, [10.0]))
        ys, _ = run(lambda t, y: 1j * y + np.exp(2j * t), [0.0], 10.0, samples,
                    rtol=1e-9, atol=1e-12)
        exact = (np.exp(2j * samples) - np.exp(1j * samples)) / 1j
        assert np.max(np.abs(ys[:, 0] - exact)) < 5e-8

    def test_two_by_two_linear_system(self):
        # Hermitian generator: norm preserved, compare against expm oracle
        h = np.array([[1.0, 0.3 - 0.2j], [0.3 + 0.2j, -0.5]])
        from scipy.linalg import expm
        t_end = 7.0
        samples = np.array([0.0, 1.7, 3.9, 7.0])
        y0 = np.array([1.0, 0.0], complex)
        ys, _ = run(lambda t, y: -1j * (h @ y), y0, t_end, samples, rtol=1e-10, atol=1e-12)
        for i, t in enumerate(samples):
            exact = expm(-1j * h * t) @ y0
            assert np.max(np.abs(ys[i] - exact)) < 1e-8


class TestAgainstScipy:
    def test_nonlinear_complex_ode(self):
        def rhs(t, y):
            return np.array([-0.5 * y[0] + 0.2j * y[0] * abs(y[0]) ** 2 + 0.1 * math.sin(t)])

        samples = np.linspace(0.0, 8.0, 33)
        ys, _ = run(rhs, [1.0 + 0.5j], 8.0, samples, rtol=1e-9, atol=1e-12)

        sol = solve_ivp(rhs, (0.0, 8.0), np.array([1.0 + 0.5j]), method="RK45",
                        t_eval=samples, rtol=1e-11, atol=1e-13)
        assert np.max(np.abs(ys[:, 0] - sol.y[0])) < 1e-7

    def test_stiffish_decay_matches(self):
        def rhs(t, y):
            return -40.0 * (y - np.cos(t))

        samples = np.linspace(0.0, 4.0, 17)
        ys, stats = run(rhs, [0.0], 4.0, samples, rtol=1e-8, atol=1e-10)
        sol = solve_ivp(rhs, (0.0, 4.0), np.array([0.0 + 0.0j]), method="RK45",
                        t_eval=samples, rtol=1e-11, atol=1e-13)
        assert np.max(np.abs(ys[:, 0] - sol.y[0])) < 1e-6
        assert stats.rejected < stats.accepted  # sanity on the controller


class TestStepControl:
    def test_convergence_with_rtol(self):
        samples = np.array([0.0, 5.0])
        errs = []
        for rtol in (1e-5, 1e-7, 1e-9):
            ys, _ = run(lambda t, y: 1j * 2.0 * y, [1.0], 5.0, samples,
                        rtol=rtol, atol=1e-14)
            errs.append(abs(ys[-1, 0] - np.exp(10j)))
        assert errs[1] < errs[0] and errs[2] < errs[1]

    def test_h_max_respected(self):
        samples = np.array([0.0, 1.0])
        _, stats = run(lambda t, y: -y, [1.0], 1.0, samples, h_max=0.01)
        assert stats.accepted >= 100

    def test_renorm_keeps_unit_norm(self):
        # sampled states carry interpolation error at the rtol scale; the
        # step-endpoint states are renormalized exactly, so sampling at the
        # final time (always a step endpoint) must be clean
        h = np.array([[0.0, 1.0], [1.0, 0.0]], complex)
        samples = np.linspace(0.0, 20.0, 11)
        ys, _ = run(lambda t, y: -1j * (h @ y), np.array([1.0, 0.0], complex),
                    20.0, samples, rtol=1e-6, atol=1e-9, renorm=True)
        norms = np.linalg.norm(ys, axis=1)
        assert np.max(np.abs(norms - 1.0)) < 1e-6
        assert abs(norms[-1] - 1.0) < 1e-12

    def test_without_renorm_drift_is_larger(self):
        h = np.array([[0.0, 1.0], [1.0, 0.0]], complex)
        samples = np.array([0.0, 200.0])
        kw = dict(rtol=1e-6, atol=1e-9)
        ys_r, _ = run(lambda t, y: -1j * (h @ y), np.array([1.0, 0.0], complex),
                      200.0, samples, renorm=True, **kw)
        ys_n, _ = run(lambda t, y: -1j * (h @ y), np.array([1.0, 0.0], complex),
                      200.0, samples, renorm=False, **kw)
        drift_r = abs(np.linalg.norm(ys_r[-1]) - 1.0)
        drift_n = abs(np.linalg.norm(ys_n[-1]) - 1.0)
        assert drift_r < 1e-12
        assert drift_r <= drift_n

    def test_step_budget_failure_raises(self):
        samples = np.array([0.0, 1.0])
        ys, stats = ig.integrate_adaptive(lambda t, y: -y, 0.0,
                                          np.array([1.0], complex), 1.0,
                                          samples, 1e-12, 1e-14, 1e-4,
                                          max_steps=5)
        assert stats.status == ig.STATUS_MAX_STEPS
        with pytest.raises(ig.IntegrationFailure, match="budget"):
            stats.raise_on_failure()


class TestSamplingEdges:
    def test_zero_span_returns_initial(self):
        ys, _ = run(lambda t, y: -y, [2.0], 0.0, [0.0])
        assert ys[0, 0] == 2.0

    def test_sample_grid_endpoints(self):
        g = ig.sample_grid(0.0, 10.0, 0.3)
        assert g[0] == 0.0
        assert abs(g[-1] - 10.0) < 1e-12
        assert np.all(np.diff(g) > 0)

    def test_samples_outside_window_rejected(self):
        with pytest.raises(ValueError, match="outside"):
            ig.integrate_adaptive(lambda t, y: -y, 0.0, np.array([1.0], complex),
                                  1.0, np.array([2.0]), 1e-8, 1e-10, np.inf)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            ig.IntegratorConfig(rtol=0.0)
        with pytest.raises(ValueError):
            ig.IntegratorConfig(max_step=-1.0)
        with pytest.raises(ValueError):
            ig.IntegratorConfig(sample_dt=0.0)
        cfg = ig.IntegratorConfig()
        assert cfg.rtol == 1e-8 and cfg.atol == 1e-10
        assert abs(cfg.absolute_max_step(2000.0) - 5e-5) < 1e-18
