import math
import warnings

import pytest
from hypothesis import given
from hypothesis import strategies as st

from coopnet.errors import (
    AlphaOutOfRange,
    ApertureOutOfRange,
    ConfigParseError,
    CorrelationMagnitudeExceedsOne,
    NonPositiveParameter,
    ProbabilityOutOfRange,
    UnsupportedCorrelation,
    ValidationError,
)
from coopnet.netmodel import (
    DensityAssumptionWarning,
    NetworkParams,
    contention_constant,
    derive_scalars,
    find_violations,
    params_from_mapping,
    parse_config,
    parse_number,
    require_zero_rho,
    sir_threshold,
    validate_params,
)
from conftest import reference_params


class TestDerivedScalars:
    def test_reference_values(self, params):
        sc = derive_scalars(params)
        assert sc.threshold_T == pytest.approx(math.sqrt(2.0) - 1.0, rel=1e-15)
        # C = pi^2 / 2 at alpha = 4
        assert sc.constant_C == pytest.approx(math.pi**2 / 2.0, rel=1e-14)
        assert sc.delta == pytest.approx(3.17601, rel=1e-5)
        assert sc.nu == pytest.approx(0.0317601, rel=1e-5)
        assert sc.sigma_in == pytest.approx(1.0)
        assert sc.s_param == pytest.approx(0.1)

    @pytest.mark.parametrize("p_r", [0.0, 0.3, 1.0])
    def test_big_delta_scales_with_activation(self, params, p_r):
        sc = derive_scalars(params, p_r)
        assert sc.big_delta == pytest.approx(sc.delta * (1.0 + p_r / 2.0))
        assert sc.big_delta_at(p_r, params.alpha) == pytest.approx(sc.big_delta)

    def test_contention_constant_alpha3(self):
        # Gamma(2/3) Gamma(1/3) = 2 pi / sqrt(3)
        assert contention_constant(3.0) == pytest.approx(2 * math.pi / 3 * 2 * math.pi / math.sqrt(3))

    def test_threshold_small_rate_is_accurate(self):
        assert sir_threshold(1e-12) == pytest.approx(1e-12 * math.log(2.0), rel=1e-9)

    @given(st.floats(min_value=1e-3, max_value=1e3))
    def test_sigma_roundtrip(self, sigma):
        p = reference_params().replace(sigma_in=sigma)
        assert p.sigma_in == pytest.approx(sigma, rel=1e-12)


class TestValidation:
    def test_valid_params_pass_through(self, params):
        assert validate_params(params) is params

    @pytest.mark.parametrize(
        "change, kind",
        [
            ({"alpha": 2.0}, AlphaOutOfRange),
            ({"lambda_s": 0.0}, NonPositiveParameter),
            ({"lambda_in": -1.0}, NonPositiveParameter),
            ({"dest_distance": 0.0}, NonPositiveParameter),
            ({"rate": 0.0}, NonPositiveParameter),
            ({"phi0": 0.0}, ApertureOutOfRange),
            ({"phi0": 7.0}, ApertureOutOfRange),
            ({"p_r": 1.5}, ProbabilityOutOfRange),
            ({"tau": -0.1}, ProbabilityOutOfRange),
            ({"rho": 0.8 + 0.8j}, CorrelationMagnitudeExceedsOne),
        ],
    )
    def test_single_violation(self, params, change, kind):
        with pytest.raises(ValidationError) as info:
            validate_params(params.replace(**change))
        assert len(info.value.violations) == 1
        assert isinstance(info.value.violations[0], kind)

    def test_all_violations_are_collected(self, params):
        bad = params.replace(alpha=1.5, lambda_s=-1.0, p_r=2.0)
        fields = [v.field for v in find_violations(bad)]
        assert fields == ["alpha", "lambda_s", "p_r"]

    def test_dense_sources_warn(self, params):
        with pytest.warns(DensityAssumptionWarning):
            validate_params(params.replace(lambda_s=0.1))

    def test_sparse_sources_do_not_warn(self, params):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            validate_params(params)

    def test_rho_guard(self, params):
        require_zero_rho(params)
        with pytest.raises(UnsupportedCorrelation):
            require_zero_rho(params.replace(rho=0.5))


class TestConfig:
    @pytest.mark.parametrize(
        "text, value",
        [("1e-4", 1e-4), ("2*pi", 2 * math.pi), ("pi/2", math.pi / 2), ("-3", -3.0), ("2**-1", 0.5)],
    )
    def test_parse_number(self, text, value):
        assert parse_number(text) == pytest.approx(value)

    @pytest.mark.parametrize("text", ["abc", "__import__('os')", "1/0", ""])
    def test_parse_number_rejects(self, text):
        with pytest.raises(ConfigParseError):
            parse_number(text)

    def test_parse_config_skips_comments(self):
        text = "# scenario\nalpha = 4  # path loss\n\nrate=0.5\n"
        assert parse_config(text) == {"alpha": "4", "rate": "0.5"}

    def test_parse_config_rejects_garbage(self):
        with pytest.raises(ConfigParseError, match="line 2"):
            parse_config("alpha = 4\nnonsense\n")

    def test_mapping_with_sigma_alias(self):
        p = params_from_mapping(
            {"lambda_s": "1e-4", "sigma_in": "2", "alpha": "4", "rate": "0.5", "dest_distance": "10",
             "phi0": "pi", "unrelated": "x"}
        )
        assert p.sigma_in == pytest.approx(2.0)
        assert p.phi0 == pytest.approx(math.pi)

    def test_mapping_missing_required(self):
        with pytest.raises(ConfigParseError, match="dest_distance"):
            params_from_mapping({"lambda_s": 1e-4, "lambda_in": 1.0, "alpha": 4, "rate": 0.5})

    def test_mapping_conflicting_density(self):
        with pytest.raises(ConfigParseError):
            params_from_mapping({"lambda_in": "1", "sigma_in": "1"}, base=reference_params())

    def test_mapping_overrides_base(self, params):
        p = params_from_mapping({"alpha": "3"}, base=params)
        assert p == NetworkParams(**{**params.__dict__, "alpha": 3.0})
