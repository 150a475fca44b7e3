import math

import numpy as np
import pytest

from residiff.denoisers import GaussianAnalyticDenoiser, PerturbedDenoiser
from residiff.errors import InvalidRangeError
from residiff.rdeval import (
    CSV_HEADER,
    RDCurve,
    RDPoint,
    RDSurface,
    bd_rate,
    curve_from_csv,
    kl_rate_gaussian,
    peak_projection,
    points_to_csv,
    surface_to_csv,
    surface_to_svg,
    sweep,
)
from residiff.schedule import ScheduleConfig, build_schedule


def curve(pairs) -> RDCurve:
    return RDCurve(
        tuple(RDPoint(bpp=b, distortion=d, endpoint_step=1, quant_step=1.0) for b, d in pairs)
    )


@pytest.fixture(scope="module")
def sched():
    return build_schedule(ScheduleConfig())


def make_surface(quant_steps, endpoints, fn):
    rows = []
    for i, (q, bpp) in enumerate(quant_steps):
        rows.append(
            tuple(
                RDPoint(bpp=bpp, distortion=fn(i, j), endpoint_step=n, quant_step=q)
                for j, n in enumerate(endpoints)
            )
        )
    return RDSurface(
        quant_steps=tuple(q for q, _ in quant_steps),
        endpoint_steps=tuple(endpoints),
        points=tuple(rows),
    )


class TestPeakProjection:
    def test_constant_surface_ties_to_smallest_endpoint(self):
        surf = make_surface([(1.0, 2.0), (2.0, 1.0)], [10, 20, 30], lambda i, j: 5.0)
        assert peak_projection(surf) == [(1.0, 10), (2.0, 10)]

    def test_planted_argmins_recovered(self):
        planted = {0: 2, 1: 0, 2: 1}
        surf = make_surface(
            [(1.0, 3.0), (2.0, 2.0), (4.0, 1.0)],
            [10, 20, 30],
            lambda i, j: 1.0 + (j - planted[i]) ** 2,
        )
        got = dict(peak_projection(surf))
        assert got == {3.0: 30, 2.0: 10, 1.0: 20}

    def test_invariant_under_monotone_distortion_transform(self):
        rng = np.random.default_rng(0)
        vals = rng.uniform(1, 2, size=(3, 4))
        base = make_surface(
            [(1.0, 3.0), (2.0, 2.0), (4.0, 1.0)], [5, 6, 7, 8], lambda i, j: vals[i, j]
        )
        warped = make_surface(
            [(1.0, 3.0), (2.0, 2.0), (4.0, 1.0)],
            [5, 6, 7, 8],
            lambda i, j: math.exp(3 * vals[i, j]) + 1,
        )
        assert peak_projection(base) == peak_projection(warped)


class TestSweep:
    def test_single_cell_matches_direct_computation(self, sched):
        rng = np.random.default_rng(1)
        data = rng.standard_normal((64, 8))

        def factory(step, endpoint):
            return GaussianAnalyticDenoiser(0.0, 1.0, step**2 / 12, sched, endpoint, 0.0)

        surf = sweep([0.5], [100], data, sched, factory, eta=0.0, num_steps=4, seed=3)
        assert len(surf.points) == 1 and len(surf.points[0]) == 1
        p = surf.points[0][0]
        again = sweep([0.5], [100], data, sched, factory, eta=0.0, num_steps=4, seed=3)
        assert again.points[0][0] == p

    def test_perfect_compression_prefers_smallest_endpoint(self, sched):
        # zc = z0 exactly, scored with a deployed predictor (fixed assumed
        # compression-noise level): nothing to repair, so the shortest run
        # cannot lose to the longest.
        rng = np.random.default_rng(8)
        z0 = rng.standard_normal((2048, 16))
        from residiff.diffusion import make_step_list, sample

        dist = {}
        for endpoint in (40, 800):
            inner = GaussianAnalyticDenoiser(0.0, 1.0, 0.02, sched, endpoint, 0.0)
            den = PerturbedDenoiser(inner, 0.1, np.random.default_rng([6, endpoint]))
            out = sample(
                den, z0, endpoint, make_step_list(endpoint, 4), 0.0, sched,
                np.random.default_rng([2, endpoint]),
            )
            dist[endpoint] = float(np.mean((out - z0) ** 2))
        assert dist[40] <= dist[800]

    def test_high_rate_column_prefers_short_runs(self, sched):
        # With small compression error, a long denoising run mostly adds
        # prediction-error exposure: the best endpoint sits low in the grid.
        rng = np.random.default_rng(2)
        data = rng.standard_normal((2048, 16))

        def factory(step, endpoint):
            inner = GaussianAnalyticDenoiser(0.0, 1.0, step**2 / 12, sched, endpoint, 0.0)
            return PerturbedDenoiser(
                inner, 0.1, np.random.default_rng([5, int(step * 1000), endpoint])
            )

        grid = [40, 80, 160, 240, 320, 480, 640, 800]
        surf = sweep([0.25], grid, data, sched, factory, 0.0, seed=4)
        dist = [p.distortion for p in surf.points[0]]
        assert int(np.argmin(dist)) < len(grid) // 2
        assert dist[0] < dist[-1]

    def test_interior_optimum_exists_at_mid_rate(self, sched):
        rng = np.random.default_rng(5)
        data = rng.standard_normal((2048, 16))

        def factory(step, endpoint):
            inner = GaussianAnalyticDenoiser(0.0, 1.0, step**2 / 12, sched, endpoint, 0.0)
            return PerturbedDenoiser(
                inner, 0.1, np.random.default_rng([9, int(step * 1000), endpoint])
            )

        surf = sweep(
            [0.5], [40, 80, 160, 240, 320, 480, 640, 800], data, sched, factory, 0.0, seed=7
        )
        dist = [p.distortion for p in surf.points[0]]
        best = int(np.argmin(dist))
        assert 0 < best < len(dist) - 1

    def test_rejects_bad_inputs(self, sched):
        with pytest.raises(InvalidRangeError):
            sweep([], [10], np.zeros((4, 2)), sched, None, 0.0)
        with pytest.raises(InvalidRangeError):
            sweep([1.0], [10], np.zeros((0, 2)), sched, None, 0.0)


class TestBdRate:
    def test_identical_curves_zero(self):
        c = curve([(0.1, 4.0), (0.2, 3.0), (0.4, 2.0), (0.8, 1.0)])
        assert bd_rate(c, c) == pytest.approx(0.0, abs=1e-12)

    def test_doubled_rate_is_plus_hundred(self):
        a = curve([(0.1, 4.0), (0.2, 3.0), (0.4, 2.0), (0.8, 1.0)])
        t = curve([(0.2, 4.0), (0.4, 3.0), (0.8, 2.0), (1.6, 1.0)])
        assert bd_rate(a, t) == pytest.approx(100.0, abs=1e-9)
        assert bd_rate(t, a) == pytest.approx(-50.0, abs=1e-9)

    def test_matches_fine_integration_oracle(self):
        # Two hand-built 4-point curves; the oracle re-evaluates the same
        # cubic fits at 10^4 quality samples and averages the log-rate gap.
        a = curve([(0.10, 5.0), (0.22, 3.6), (0.45, 2.1), (0.90, 1.2)])
        t = curve([(0.13, 4.8), (0.25, 3.3), (0.52, 2.2), (1.10, 1.1)])
        got = bd_rate(a, t)

        qa, qt = -a.distortion, -t.distortion
        lo = max(qa.min(), qt.min())
        hi = min(qa.max(), qt.max())
        fit_a = np.polyfit((qa - lo) / (hi - lo), np.log2(a.bpp), 3)
        fit_t = np.polyfit((qt - lo) / (hi - lo), np.log2(t.bpp), 3)
        u = np.linspace(0.0, 1.0, 10_000)
        mean_gap = np.trapezoid(np.polyval(fit_t, u) - np.polyval(fit_a, u), u)
        oracle = 100.0 * (2.0**mean_gap - 1.0)
        assert got == pytest.approx(oracle, abs=abs(oracle) * 1e-4 + 1e-6)

    def test_antisymmetric_in_log_domain(self):
        rng = np.random.default_rng(3)
        a = curve([(b, d) for b, d in zip([0.1, 0.2, 0.4, 0.8], sorted(rng.uniform(1, 5, 4))[::-1])])
        t = curve([(b, d) for b, d in zip([0.12, 0.23, 0.5, 0.9], sorted(rng.uniform(1, 5, 4))[::-1])])
        f = bd_rate(a, t)
        r = bd_rate(t, a)
        assert (1 + f / 100) * (1 + r / 100) == pytest.approx(1.0, abs=1e-6)

    def test_invariant_to_affine_distortion_rescale(self):
        a = curve([(0.10, 5.0), (0.22, 3.6), (0.45, 2.1), (0.90, 1.2)])
        t = curve([(0.13, 4.8), (0.25, 3.3), (0.52, 2.2), (1.10, 1.1)])
        base = bd_rate(a, t)
        a2 = curve([(p.bpp, 7.0 * p.distortion - 3.0) for p in a.points])
        t2 = curve([(p.bpp, 7.0 * p.distortion - 3.0) for p in t.points])
        assert bd_rate(a2, t2) == pytest.approx(base, abs=1e-9)

    def test_errors_on_short_or_disjoint_curves(self):
        short = curve([(0.1, 2.0), (0.2, 1.0), (0.3, 0.5)])
        full = curve([(0.1, 4.0), (0.2, 3.0), (0.4, 2.0), (0.8, 1.0)])
        with pytest.raises(InvalidRangeError):
            bd_rate(short, full)
        disjoint = curve([(0.1, 40.0), (0.2, 30.0), (0.4, 20.0), (0.8, 10.0)])
        with pytest.raises(InvalidRangeError):
            bd_rate(disjoint, full)

    def test_curve_requires_increasing_bpp(self):
        with pytest.raises(InvalidRangeError):
            curve([(0.2, 1.0), (0.1, 2.0)])


class TestKlRate:
    def test_identical_distributions(self):
        assert kl_rate_gaussian((0.3, 1.7), (0.3, 1.7)) == 0.0

    def test_unit_shift_half_nat(self):
        assert kl_rate_gaussian((0.0, 1.0), (1.0, 1.0)) == pytest.approx(0.5, abs=1e-15)

    def test_dimension_scaling(self):
        one = kl_rate_gaussian((0.0, 2.0), (0.5, 1.0))
        assert kl_rate_gaussian((0.0, 2.0), (0.5, 1.0), dim=16) == pytest.approx(16 * one)

    def test_rejects_bad_variance(self):
        with pytest.raises(InvalidRangeError):
            kl_rate_gaussian((0.0, 0.0), (0.0, 1.0))

    def test_per_step_information_decreases_along_schedule(self, sched):
        # Unit-variance clean latent; model predicts the clean value from the
        # noisy one by posterior mean. The posterior-vs-model KL, evaluated
        # through kl_rate_gaussian at the typical estimation error, shrinks
        # as the step index grows: late steps carry less information.
        kls = []
        for n in range(2, sched.total_steps + 1, 97):
            a_prev = sched.alpha_bar(n - 1)
            a_n = sched.alpha_bar(n)
            beta_n = sched.beta(n)
            coef_clean = math.sqrt(a_prev) * beta_n / (1 - a_n)
            post_var = (1 - a_prev) / (1 - a_n) * beta_n
            est_var = 1 - a_n  # posterior variance of the clean latent given z_n
            mean_gap = coef_clean * math.sqrt(est_var)
            kls.append(kl_rate_gaussian((mean_gap, post_var), (0.0, post_var)))
        assert all(b < a for a, b in zip(kls, kls[1:]))


class TestCsvAndSvg:
    def test_curve_csv_round_trip(self):
        pts = [
            RDPoint(0.1, 4.0, 800, 4.0),
            RDPoint(0.4, 2.0, 400, 1.0),
            RDPoint(0.9, 1.0, 100, 0.5),
            RDPoint(1.5, 0.5, 50, 0.25),
        ]
        text = points_to_csv(pts)
        assert text.splitlines()[0] == CSV_HEADER
        back = curve_from_csv(text)
        assert [p.bpp for p in back.points] == [0.1, 0.4, 0.9, 1.5]
        assert [p.endpoint_step for p in back.points] == [800, 400, 100, 50]

    def test_curve_csv_rejects_wrong_header(self):
        with pytest.raises(InvalidRangeError):
            curve_from_csv("a,b,c\n1,2,3\n")

    def test_surface_csv_and_svg(self):
        surf = make_surface(
            [(1.0, 2.0), (2.0, 1.0)], [10, 20], lambda i, j: 1.0 + i + j
        )
        text = surface_to_csv(surf)
        assert len(text.strip().splitlines()) == 5
        svg = surface_to_svg(surf)
        assert svg.startswith("<svg") and svg.endswith("</svg>")
        assert svg.count("<polyline") == 2
