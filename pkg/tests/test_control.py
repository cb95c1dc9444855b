from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from invdelay.config import load_fixture
from invdelay.control import (
    MODEL_FREE_IP,
    SMITH_P,
    ControllerParams,
    ControllerState,
    Reference,
    control_model_free_ip,
    control_smith_p,
    estimate_F,
    increment_weights,
    predict_output,
)
from invdelay.estimation import EstimatorConfig, TrendEstimate
from invdelay.scenarios import ORACLE, DemandProgram, run_scenario
from invdelay.timeseries import TimeSeries

IP = ControllerParams(MODEL_FREE_IP, alpha=1.0, gain_Kp=0.1)


def state_with(controls, dt=1.0, W=3):
    st_ = ControllerState(dt, dt * len(controls), EstimatorConfig(W))
    for u in controls:
        st_.commit(u)
    return st_


class TestParams:
    @pytest.mark.parametrize("kw", [
        {"variant": "pid"}, {"k_model": 0.0}, {"alpha": -1.0},
        {"sigma_model": -0.1}, {"gain_Kp": -1.0},
    ])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            ControllerParams(**kw)

    def test_ip_ignores_believed_decay(self):
        assert ControllerParams(MODEL_FREE_IP, sigma_model=0.5).believed_decay == 0.0


class TestReference:
    def test_piecewise_linear(self):
        ref = Reference(((0, 0), (25, 0), (45, 100)))
        assert ref(10) == (0.0, 0.0)
        assert ref(35) == (50.0, 5.0)
        assert ref(100) == (100.0, 0.0)
        assert ref(-5) == (0.0, 0.0)
        assert ref.amplitude == 100.0

    def test_right_derivative_at_knot(self):
        assert Reference(((0, 0), (10, 10), (20, 10)))(10) == (10.0, 0.0)

    def test_rejects_unsorted(self):
        with pytest.raises(ValueError):
            Reference(((5, 0), (1, 1)))


class TestPredictor:
    def test_hand_euler(self):
        s = state_with([3.0, 4.0])
        assert predict_output(s, 50.0, ControllerParams(k_model=1.0), [2.0, 2.0]) == 53.0

    def test_no_flux(self):
        s = state_with([0.0, 0.0, 0.0])
        assert predict_output(s, 12.5, ControllerParams(), np.zeros(3)) == 12.5

    def test_path_length_checked(self):
        with pytest.raises(ValueError):
            predict_output(state_with([1.0, 1.0]), 0.0, ControllerParams(), [1.0])

    def test_replays_plant(self):
        # Exact model and known demand: y_hat(t) equals the realized y(t + L).
        cfg = load_fixture("S1").with_overrides(forecast_mode=ORACLE)
        r = run_scenario(cfg)
        D = cfg.plant.delay_steps
        np.testing.assert_allclose(
            r.series["y_hat"].values[:-D], r.series["y"].values[D:], rtol=0, atol=1e-9
        )

    def test_replays_perishable_plant(self):
        base = load_fixture("S1")
        cfg = base.with_overrides(
            plant=replace(base.plant, decay_sigma=0.08, dt=0.5),
            controller=replace(base.controller, sigma_model=0.08),
            forecast_mode=ORACLE,
        )
        r = run_scenario(cfg)
        D = cfg.plant.delay_steps
        np.testing.assert_allclose(
            r.series["y_hat"].values[:-D], r.series["y"].values[D:], rtol=1e-12, atol=1e-9
        )


class TestSmithP:
    def test_law_example(self):
        s = state_with([0.0])
        p = ControllerParams(SMITH_P, k_model=0.95, gain_Kp=0.1)
        u = control_smith_p(5.0, Reference.constant(0.0), 0.0, s, p, None, demand_path=[0.0, 10.0])
        assert u == pytest.approx(10.0, rel=1e-12)

    def test_pure_feedforward(self):
        s = state_with([2.0, 2.0])
        p = ControllerParams(SMITH_P, k_model=0.8, gain_Kp=0.5)
        # y_hat = 10 + 0.8 * 4 - 3.2 = 10 = y*.
        u = control_smith_p(10.0, Reference.constant(10.0), 0.0, s, p, None,
                            demand_path=[1.6, 1.6, 7.0])
        assert u == pytest.approx(7.0 / 0.8, rel=1e-12)

    def test_warmup_is_feedforward(self):
        s = ControllerState(1.0, 5.0)
        p = ControllerParams(SMITH_P, k_model=1.0, gain_Kp=1.0)
        est = TrendEstimate(6.0, 0.0, 0.0, warmup=True)
        u = control_smith_p(0.0, Reference.constant(100.0), 0.0, s, p, est)
        assert u == 6.0 and s.last_warmup

    def test_negative_forecast_clamped(self):
        s = state_with([0.0, 0.0])
        p = ControllerParams(SMITH_P, gain_Kp=0.0)
        est = TrendEstimate(1.0, -1.0, 0.0)
        u = control_smith_p(0.0, Reference.constant(0.0), 0.0, s, p, est)
        assert s.last_forecast == -1.0 and u == 0.0

    def test_clamp_u(self):
        s = state_with([0.0])
        p = ControllerParams(SMITH_P, gain_Kp=1.0)
        assert control_smith_p(50.0, Reference.constant(0.0), 0.0, s, p, None,
                               demand_path=[0.0, 0.0]) == 0.0
        s = state_with([0.0])
        p = replace(p, clamp_u=False)
        assert control_smith_p(50.0, Reference.constant(0.0), 0.0, s, p, None,
                               demand_path=[0.0, 0.0]) == -50.0

    def test_wrong_variant(self):
        with pytest.raises(ValueError):
            control_smith_p(0.0, Reference.constant(0.0), 0.0, state_with([0.0]), IP, None)

    def test_scenario_one_fixed_point(self):
        cfg = load_fixture("S1")
        cfg = cfg.with_overrides(demand=DemandProgram(((0.0, 20.0),)), duration=300.0)
        r = run_scenario(cfg)
        assert r.series["u"].values[-1] == pytest.approx(20 / 0.95, rel=1e-6)
        assert r.series["y"].values[-1] == pytest.approx(100.0, abs=1e-4)


class TestEstimateF:
    def test_rearrangement(self):
        s = ControllerState(1.0, 1.0, EstimatorConfig(3), fill=10.0)
        for _ in range(4):
            s.commit(10.0)
        y = TimeSeries(0.0, 1.0, np.arange(5.0))
        assert estimate_F(s, y, IP, 4.0) == pytest.approx(9.0, rel=1e-12)
        assert s.f_values == [pytest.approx(9.0)] and s.f_warmup == [False]

    def test_static(self):
        s = state_with([0.0] * 4)
        assert estimate_F(s, TimeSeries(0.0, 1.0, np.full(6, 3.0)), IP, 5.0) == pytest.approx(0.0)

    def test_warmup(self):
        s = ControllerState(1.0, 2.0, EstimatorConfig(5), fill=4.0)
        assert estimate_F(s, TimeSeries(0.0, 1.0, np.array([7.0])), IP, 0.0) == 4.0
        assert s.f_warmup == [True]

    def test_perishable_identity(self):
        # F = alpha u(t-L) - dy/dt and the plant gives dy/dt = -sigma y + u(t-L) - d,
        # so F is the kernel-weighted mean of sigma y + d over the window.
        cfg = load_fixture("S4").with_overrides(demand=DemandProgram(((0.0, 3.0), (60.0, 6.0))))
        plant = replace(cfg.plant, y0=50.0, pipeline_fill=0.08 * 50 + 3, clamp_inventory=False)
        cfg = cfg.with_overrides(plant=plant)
        r = run_scenario(cfg)
        sigma, W = 0.08, cfg.estimator.window_samples
        y, d = r.series["y"].values, r.series["d"].values
        h = increment_weights(W, cfg.plant.dt, 2)
        truth = sigma * y + d
        F = self._replay_F(cfg)
        for k in range(W, len(y)):
            assert F[k] == pytest.approx(h @ truth[k - W + 1 : k], abs=1e-9)
        # Against the instantaneous value, the gap is the window lag only.
        smooth = np.abs(np.diff(d, prepend=d[0])) == 0
        gap = np.abs(F - truth)[W:][smooth[W:]]
        assert np.median(gap) < 0.05

    @staticmethod
    def _replay_F(cfg):
        from invdelay.plant import PlantState, plant_step

        n = cfg.n_samples
        dt = cfg.plant.dt
        d = cfg.demand.sample(0.0, dt, n, cfg.seed).values
        ps = PlantState.initial(cfg.plant)
        cs = ControllerState(dt, cfg.plant.lead_time_L, cfg.estimator, fill=cfg.plant.pipeline_fill)
        y = np.empty(n)
        F = np.empty(n)
        for k in range(n):
            y[k] = ps.y
            F[k] = estimate_F(cs, TimeSeries(0.0, dt, y[: k + 1]), cfg.controller, k * dt)
            u = control_model_free_ip(y[k], cfg.reference, k * dt, cs, cfg.controller)
            plant_step(ps, cfg.plant, u, d[k])
        return F


class TestModelFreeIP:
    def test_law_example(self):
        s = ControllerState(1.0, 1.0, EstimatorConfig(3))
        s.commit(0.0)
        s.f_values, s.f_warmup = [2.0] * 3, [False] * 3
        # y_hat = y + (alpha * 0 - 2) = -3 against y* = 0.
        u = control_model_free_ip(-1.0, Reference.constant(0.0), 3.0, s, IP)
        assert u == pytest.approx(2.3, rel=1e-12)

    def test_needs_f_estimate(self):
        with pytest.raises(ValueError):
            control_model_free_ip(0.0, Reference.constant(0.0), 0.0, ControllerState(1.0, 1.0), IP)

    def test_wrong_variant(self):
        s = state_with([0.0])
        s.f_values, s.f_warmup = [0.0], [False]
        with pytest.raises(ValueError):
            control_model_free_ip(0.0, Reference.constant(0.0), 0.0, s, ControllerParams())

    def test_perishable_fixed_point(self):
        cfg = load_fixture("S4").with_overrides(demand=DemandProgram(((0.0, 5.0),)), duration=300.0)
        cfg = cfg.with_overrides(plant=replace(cfg.plant, pipeline_fill=5.0))
        r = run_scenario(cfg)
        assert r.series["u"].values[-1] == pytest.approx(0.08 * 100 + 5, rel=1e-4)
        assert r.series["y"].values[-1] == pytest.approx(100.0, abs=1e-3)

    def test_scenario_three_static_error_vanishes(self):
        r = run_scenario(load_fixture("S3"))
        # Noise-limited: well under 1% of the 100-item reference step.
        assert abs(r.metrics.steady_state_error) < 1.0

    def test_yield_insensitivity(self):
        s1, s3 = load_fixture("S1"), load_fixture("S3")
        offsets = {}
        for k in (0.8, 0.9, 1.0, 1.1, 1.2):
            plant = replace(s3.plant, yield_k=k, pipeline_fill=20 / k)
            ip = run_scenario(s3.with_overrides(plant=plant)).metrics
            sp = run_scenario(s1.with_overrides(plant=plant)).metrics
            assert abs(ip.steady_state_error) < 1.0
            offsets[k] = abs(sp.steady_state_error)
        assert offsets[0.8] > offsets[0.9] > 1.0
        assert offsets[1.2] > offsets[1.1] > offsets[1.0] > 1.0

    def test_alpha_scaling_steady_state(self):
        s3 = load_fixture("S3").with_overrides(duration=400.0)
        sse = []
        for alpha in (0.8, 1.0, 1.25, 1.5, 2.0):
            r = run_scenario(s3.with_overrides(controller=replace(s3.controller, alpha=alpha)))
            sse.append(r.metrics.steady_state_error)
            assert abs(sse[-1]) < 1.0
        assert np.ptp(sse) < 0.5

    @settings(max_examples=15, deadline=None)
    @given(
        kp=st.floats(0.0, 2.0), level=st.floats(0.0, 40.0),
        noise=st.floats(0.0, 15.0), seed=st.integers(0, 1000),
        variant=st.sampled_from([SMITH_P, MODEL_FREE_IP]),
    )
    def test_clamp_safety(self, kp, level, noise, seed, variant):
        base = load_fixture("S1")
        cfg = base.with_overrides(
            controller=ControllerParams(variant, k_model=0.95, gain_Kp=kp),
            demand=DemandProgram(((0.0, level),), "gaussian", 0.0, noise),
            seed=seed, duration=60.0,
        )
        assert np.all(run_scenario(cfg).series["u"].values >= 0.0)
