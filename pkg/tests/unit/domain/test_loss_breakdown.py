"""
LossWeights / LossBreakdown の単体テスト
"""

import pytest

from src.domain.loss_breakdown import AblationMode, LossBreakdown, LossWeights
from src.utils.exceptions import ConfigurationError


class TestLossWeights:
    """LossWeightsのテスト"""

    def test_defaults(self):
        """既定値 α=0.9, β=0.3, γ=0.01, τ=0.1"""
        weights = LossWeights()
        assert (weights.alpha, weights.beta, weights.gamma, weights.temperature) == (0.9, 0.3, 0.01, 0.1)

    @pytest.mark.parametrize("field_name", ["alpha", "beta", "gamma"])
    def test_negative_weight_rejected(self, field_name):
        with pytest.raises(ConfigurationError) as exc_info:
            LossWeights(**{field_name: -0.1})
        assert exc_info.value.key == f"loss.{field_name}"

    @pytest.mark.parametrize("temperature", [0.0, -1.0, float('inf')])
    def test_invalid_temperature_rejected(self, temperature):
        with pytest.raises(ConfigurationError) as exc_info:
            LossWeights(temperature=temperature)
        assert exc_info.value.key == "loss.temperature"

    def test_for_mode_only_rim(self):
        """only_rim は α と γ を0にする"""
        weights = LossWeights().for_mode(AblationMode.ONLY_RIM)
        assert (weights.alpha, weights.beta, weights.gamma) == (0.0, 0.3, 0.0)
        assert weights.temperature == 0.1

    def test_for_mode_cbs(self):
        """cbs は γ だけを0にする"""
        weights = LossWeights().for_mode(AblationMode.CBS)
        assert (weights.alpha, weights.beta, weights.gamma) == (0.9, 0.3, 0.0)

    def test_for_mode_cbswr(self):
        """cbswr は変更なし"""
        weights = LossWeights()
        assert weights.for_mode(AblationMode.CBSWR) == weights

    def test_for_mode_unknown(self):
        with pytest.raises(ConfigurationError):
            LossWeights().for_mode("bogus")


class TestLossBreakdown:
    """LossBreakdownのテスト"""

    def test_to_dict(self):
        breakdown = LossBreakdown(l_m=1.0, l_rim=2.0, l_rec=3.0, total=4.0)
        assert breakdown.to_dict() == {'l_m': 1.0, 'l_rim': 2.0, 'l_rec': 3.0, 'total': 4.0}
