import numpy as np
import pytest

from psdkit.methods import (
    FREQ_DOMAIN_METHODS,
    SNN_METHODS,
    STATISTICAL_METHODS,
    TIME_DOMAIN_METHODS,
    FactorSeries,
    MethodError,
    MethodParams,
    build_context,
    factor_series,
)
from psdkit.pipeline import PreprocessOptions, preprocess_dataset
from psdkit.pulse import Dataset, SynthParams, synthesize_dataset


@pytest.fixture(scope="module")
def bench_data():
    p_n = SynthParams(tail_ratio=0.35, noise_sigma=0.01, length=256, seed=101)
    p_g = SynthParams(tail_ratio=0.10, noise_sigma=0.01, length=256, seed=102)
    raw = synthesize_dataset(120, 120, p_n, p_g)
    clean, _ = preprocess_dataset(raw, PreprocessOptions())
    return clean


@pytest.fixture(scope="module")
def ctx(bench_data):
    return build_context(bench_data, MethodParams(), seed=42)


class TestRegistry:
    def test_method_lists(self):
        assert len(TIME_DOMAIN_METHODS) == 10
        assert len(FREQ_DOMAIN_METHODS) == 7
        assert len(SNN_METHODS) == 4
        assert len(STATISTICAL_METHODS) == 21
        assert len(set(STATISTICAL_METHODS)) == 21

    def test_unknown_method(self, bench_data, ctx):
        with pytest.raises(MethodError, match="unknown"):
            factor_series("cnn", bench_data, ctx)

    @pytest.mark.parametrize("method", STATISTICAL_METHODS)
    def test_all_methods_produce_finite_factors(self, bench_data, ctx, method):
        series = factor_series(method, bench_data, ctx)
        assert isinstance(series, FactorSeries)
        assert len(series) == len(bench_data)
        finite = np.isfinite(series.values)
        assert finite.mean() > 0.95, f"{method}: too many failed pulses"

    @pytest.mark.parametrize("method", ["cc", "ci", "lmt", "sdcc", "pcnn", "lg"])
    def test_determinism(self, bench_data, method):
        a = factor_series(method, bench_data, build_context(bench_data, MethodParams(), seed=3))
        b = factor_series(method, bench_data, build_context(bench_data, MethodParams(), seed=3))
        assert np.array_equal(a.values, b.values, equal_nan=True)

    def test_cc_ci_identical_with_matched_gates(self, bench_data, ctx):
        # default gates satisfy t_short == t_total - t_delay and
        # t_long == t_total, the digital-equivalence configuration
        cc = factor_series("cc", bench_data, ctx).values
        ci = factor_series("ci", bench_data, ctx).values
        r = np.corrcoef(cc, ci)[0, 1]
        assert r > 0.99

    @pytest.mark.parametrize("method", ["cc", "ci", "lmt", "pcnn", "scm", "lg"])
    def test_classes_separate(self, bench_data, ctx, method):
        series = factor_series(method, bench_data, ctx)
        values = series.values
        labels = bench_data.labels
        finite = np.isfinite(values)
        v_n = values[finite & (labels == "neutron")]
        v_g = values[finite & (labels == "gamma")]
        gap = abs(v_n.mean() - v_g.mean())
        spread = v_n.std() + v_g.std() + 1e-12
        assert gap / spread > 1.0, f"{method}: classes overlap"

    def test_pseudo_labels_on_unlabeled_data(self, bench_data):
        unlabeled = Dataset(bench_data.samples, dt=bench_data.dt)
        ctx2 = build_context(unlabeled, MethodParams(), seed=1)
        for method in ("gp", "llr", "sd"):
            series = factor_series(method, unlabeled, ctx2)
            assert np.isfinite(series.values).mean() > 0.95

    def test_snn_seed_flows_from_context(self, bench_data):
        a = factor_series("rcnn", bench_data, build_context(bench_data, MethodParams(), seed=1))
        b = factor_series("rcnn", bench_data, build_context(bench_data, MethodParams(), seed=2))
        assert not np.array_equal(a.values, b.values)

    def test_gates_too_large_is_method_error(self, ctx):
        tiny = Dataset(np.tile(np.exp(-np.arange(16.0) / 3.0), (4, 1)))
        with pytest.raises(MethodError, match="no pulse"):
            factor_series("cc", tiny, build_context(tiny, MethodParams(), seed=0))


class TestMethodParams:
    def test_from_config_defaults(self):
        params = MethodParams.from_config({})
        assert params.gates.t_long == 160
        assert params.snn.iterations == 40
        assert params.qcscm_step == 0.25

    def test_from_config_overrides(self):
        sections = {
            "gates": {"t_long": "80", "t_delay": "60", "t_total": "80"},
            "methods": {"pga_delta": "12", "fs_b": "2.5"},
            "snn": {"iterations": "25", "lg_m": "2"},
        }
        params = MethodParams.from_config(sections)
        assert params.gates.t_long == 80
        assert params.pga_delta == 12
        assert params.fs_b == 2.5
        assert params.snn.iterations == 25
        assert params.lg_m == 2

    def test_cwt_scales(self):
        params = MethodParams(cwt_scale_min=2.0, cwt_scale_max=32.0, cwt_n_scales=10)
        scales = params.cwt_scales()
        assert scales.size == 10
        assert scales[0] == pytest.approx(2.0)
        assert scales[-1] == pytest.approx(32.0)

    def test_snn_config_step_rules(self):
        params = MethodParams()
        assert params.snn_config("qcscm").step == 0.25
        assert params.snn_config("pcnn").step == 1.0
        assert params.snn_config("rcnn", seed=5).rng_seed != params.snn_config("rcnn", seed=6).rng_seed
