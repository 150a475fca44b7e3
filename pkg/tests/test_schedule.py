import numpy as np
import pytest

from residiff.errors import InvalidRangeError, StepRangeError
from residiff.schedule import (
    Schedule,
    ScheduleConfig,
    build_schedule,
    dump_csv,
    schedule_from_betas,
    sigma_n,
)

# Frozen oracle: cumulative product of the default scaled-linear betas,
# computed by an independent loop in 50-digit decimal arithmetic.
DEFAULT_ABAR_FINAL = 0.00466009851307724
DEFAULT_ABAR_200 = 0.7552383611581203
DEFAULT_ABAR_500 = 0.2776696504564678


@pytest.fixture(scope="module")
def default_schedule() -> Schedule:
    return build_schedule(ScheduleConfig())


class TestBuildSchedule:
    def test_constant_closed_form(self):
        s = build_schedule(ScheduleConfig("constant", 3, 0.5, 0.5))
        np.testing.assert_array_equal(s.betas, [0.5, 0.5, 0.5])
        np.testing.assert_allclose(s.alpha_bars, [1.0, 0.5, 0.25, 0.125], rtol=0)

    def test_single_step_linear(self):
        s = build_schedule(ScheduleConfig("linear", 1, 0.1, 0.1))
        np.testing.assert_array_equal(s.betas, [0.1])
        np.testing.assert_allclose(s.alpha_bars, [1.0, 0.9], atol=1e-15)

    def test_scaled_linear_matches_product_oracle(self, default_schedule):
        assert default_schedule.alpha_bars[1000] == pytest.approx(
            DEFAULT_ABAR_FINAL, rel=1e-12
        )
        assert default_schedule.alpha_bars[200] == pytest.approx(
            DEFAULT_ABAR_200, rel=1e-12
        )
        assert default_schedule.alpha_bars[500] == pytest.approx(
            DEFAULT_ABAR_500, rel=1e-12
        )

    def test_alpha_bar_zero_is_exactly_one(self, default_schedule):
        assert default_schedule.alpha_bars[0] == 1.0

    @pytest.mark.parametrize("kind", ["constant", "linear", "scaled_linear", "cosine"])
    def test_invariants_all_kinds(self, kind):
        s = build_schedule(ScheduleConfig(kind, 100, 0.001, 0.02))
        assert len(s.betas) == 100 and len(s.alpha_bars) == 101
        assert np.all((s.betas > 0) & (s.betas < 1))
        assert np.all(np.diff(s.alpha_bars) < 0), "alpha_bar not strictly decreasing"
        assert np.all((s.alpha_bars[1:] > 0) & (s.alpha_bars[1:] < 1))

    @pytest.mark.parametrize(
        "kind,t,b0,b1",
        [
            ("linear", 0, 0.1, 0.2),
            ("linear", 10, 0.0, 0.2),
            ("linear", 10, 0.3, 0.2),
            ("linear", 10, 0.1, 1.0),
            ("bogus", 10, 0.1, 0.2),
        ],
    )
    def test_rejects_invalid_config(self, kind, t, b0, b1):
        with pytest.raises(InvalidRangeError):
            build_schedule(ScheduleConfig(kind, t, b0, b1))

    def test_rebuild_from_own_betas_is_bitwise_identical(self, default_schedule):
        rebuilt = schedule_from_betas(default_schedule.kind, default_schedule.betas)
        np.testing.assert_array_equal(rebuilt.alpha_bars, default_schedule.alpha_bars)

    def test_arrays_are_immutable(self, default_schedule):
        with pytest.raises(ValueError):
            default_schedule.betas[0] = 0.5

    def test_step_accessors_bounds(self, default_schedule):
        with pytest.raises(StepRangeError):
            default_schedule.alpha_bar(1001)
        with pytest.raises(StepRangeError):
            default_schedule.beta(0)


class TestSigma:
    def test_eta_zero_is_zero_everywhere(self, default_schedule):
        for n in (1, 17, 500, 1000):
            assert sigma_n(default_schedule, n, 0.0) == 0.0

    def test_hand_evaluated_value(self):
        # abar_1 = 0.8, abar_2 = 0.6 via betas (0.2, 0.25); frozen hand oracle.
        s = schedule_from_betas("constant", np.array([0.2, 0.25]))
        np.testing.assert_allclose(s.alpha_bars, [1.0, 0.8, 0.6], atol=1e-15)
        assert sigma_n(s, 2, 1.0) == pytest.approx(0.35355339059327384, abs=1e-15)

    def test_first_step_is_zero(self, default_schedule):
        assert sigma_n(default_schedule, 1, 1.0) == 0.0

    def test_linear_in_eta(self, default_schedule):
        rng = np.random.default_rng(7)
        for n in rng.integers(2, 1001, size=20):
            one = sigma_n(default_schedule, int(n), 1.0)
            assert sigma_n(default_schedule, int(n), 2.0) == pytest.approx(
                2.0 * one, rel=1e-15
            )

    def test_rejects_bad_args(self, default_schedule):
        with pytest.raises(StepRangeError):
            sigma_n(default_schedule, 0, 1.0)
        with pytest.raises(StepRangeError):
            sigma_n(default_schedule, 1001, 1.0)
        with pytest.raises(InvalidRangeError):
            sigma_n(default_schedule, 5, -0.5)


def test_dump_csv_round_trips_values(default_schedule):
    text = dump_csv(default_schedule)
    lines = text.strip().split("\n")
    assert lines[0] == "n,beta,alpha_bar"
    assert len(lines) == 1001
    n, beta, abar = lines[1000].split(",")
    assert int(n) == 1000
    assert float(beta) == default_schedule.betas[999]
    assert float(abar) == default_schedule.alpha_bars[1000]
