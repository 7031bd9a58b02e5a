import math

import numpy as np
import pytest

from metameans.model import ConfigError, Scenario, Signal, TrialSet, draw_signal, gen_trials, signal_from_signs
from metameans.rng import RandomStream


class TestScenario:
    def test_null_requires_zero_rho(self):
        with pytest.raises(ConfigError):
            Scenario(2, 30, 20, 0.5, "null")

    @pytest.mark.parametrize("field", ["d", "n", "m"])
    def test_positive_integers(self, field):
        kwargs = dict(d=2, n=30, m=20)
        kwargs[field] = 0
        with pytest.raises(ConfigError):
            Scenario(**kwargs)

    def test_fixed_norm_checked(self):
        with pytest.raises(ConfigError):
            Scenario(2, 30, 20, 1.0, "fixed", f=(1.0, 1e-5))
        s = Scenario(2, 30, 20, 1.0, "fixed", f=(0.6, 0.8))
        assert s.f == (0.6, 0.8)

    def test_unknown_law(self):
        with pytest.raises(ConfigError):
            Scenario(2, 30, 20, 1.0, "gaussian")

    def test_helpers(self):
        s = Scenario(3, 30, 20, 0.5)
        assert s.null().signal_law == "null"
        assert s.with_rho(0.25).rho == 0.25
        probe = s.worst_case_probe()
        assert probe.f == (0.5, 0.0, 0.0)
        assert s.as_dict()["rho"] == 0.5


class TestDrawSignal:
    def test_null(self, stream):
        f = draw_signal(Scenario(3, 30, 20), stream)
        assert np.array_equal(draw_signal(Scenario(3, 30, 20).null(), stream).f, np.zeros(3))
        assert f.f.shape == (3,)

    def test_rademacher_scaled(self, stream):
        sig = draw_signal(Scenario(4, 30, 20, 1.0), stream.derive("s"))
        assert np.allclose(np.abs(sig.f), 0.5)
        assert sig.norm == pytest.approx(1.0, abs=1e-15)

    def test_figure_setting(self, stream):
        rho2 = math.sqrt(2) / (4 * 30)
        assert rho2 == pytest.approx(0.011785, abs=1e-6)
        sig = draw_signal(Scenario(2, 30, 20, math.sqrt(rho2)), stream.derive("fig"))
        assert sig.norm**2 == pytest.approx(rho2, rel=1e-12)

    def test_fixed(self, stream):
        s = Scenario(2, 30, 20, 1.0, "fixed", f=(0.6, -0.8))
        assert np.array_equal(draw_signal(s, stream).f, [0.6, -0.8])

    def test_signs_shared_across_rho(self, stream):
        a = draw_signal(Scenario(6, 30, 5, 0.2), stream.derive("x")).f
        b = draw_signal(Scenario(6, 30, 5, 0.7), stream.derive("x")).f
        assert np.array_equal(np.sign(a), np.sign(b))

    def test_signal_from_signs(self):
        assert np.allclose(signal_from_signs([1, -1, 1, -1], 2.0), [1, -1, 1, -1])


class TestGenTrials:
    def test_null_variance(self, stream):
        s = Scenario(50, 30, 20_000)
        t = gen_trials(Signal(np.zeros(50)), s, stream.derive("t"))
        assert t.x.shape == (20_000, 50)
        assert abs(t.x.var() * 30 - 1) < 0.01

    def test_column_means(self, stream):
        f = np.array([0.3, -0.1, 0.0])
        s = Scenario(3, 30, 100_000, float(np.linalg.norm(f)), "fixed", f=tuple(f))
        t = gen_trials(draw_signal(s, stream), s, stream.derive("t"))
        band = 3 / math.sqrt(100_000 * 30)
        assert np.all(np.abs(t.x.mean(axis=0) - f) < band)

    def test_replay(self):
        s = Scenario(4, 10, 6, 1.0)
        st = RandomStream(5)
        a = gen_trials(draw_signal(s, st.derive("f")), s, st.derive("z"))
        b = gen_trials(draw_signal(s, st.derive("f")), s, st.derive("z"))
        assert np.array_equal(a.x, b.x)

    def test_shape_checked(self):
        with pytest.raises(ValueError):
            TrialSet(np.zeros((3, 3)), Scenario(2, 30, 3))
        with pytest.raises(ValueError):
            gen_trials(np.zeros(3), Scenario(2, 30, 3), RandomStream(0))
