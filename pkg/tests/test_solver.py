import numpy as np
import pytest

from skelfuse.solver import (
    REASON_COST_DELTA,
    REASON_GRADIENT,
    REASON_ITERATION_CAP,
    SolverSettings,
    minimize,
)


def quadratic(center):
    center = np.asarray(center, dtype=np.float64)

    def fg(x):
        d = x - center
        return float(d @ d), 2.0 * d

    return fg


def rosenbrock(x):
    f = 100.0 * (x[1] - x[0] ** 2) ** 2 + (1.0 - x[0]) ** 2
    g = np.array([
        -400.0 * x[0] * (x[1] - x[0] ** 2) - 2.0 * (1.0 - x[0]),
        200.0 * (x[1] - x[0] ** 2),
    ])
    return f, g


class TestConvexSanity:
    def test_quadratic_converges_fast(self):
        a = np.array([1.0, -2.0, 3.0, 0.5, -0.7])
        x, report = minimize(quadratic(a), np.zeros(5), SolverSettings())
        assert np.linalg.norm(x - a) < 1e-8
        assert report.iterations <= 20
        assert report.reason in (REASON_GRADIENT, REASON_COST_DELTA)

    def test_already_at_minimum(self):
        a = np.array([2.0, 2.0])
        x, report = minimize(quadratic(a), a.copy(), SolverSettings())
        assert report.iterations == 0
        assert report.reason == REASON_GRADIENT
        assert np.array_equal(x, a)


class TestRosenbrock:
    def test_reaches_standard_minimum(self):
        settings = SolverSettings(max_iterations=200, gradient_tolerance=1e-12,
                                  cost_tolerance=1e-16)
        x, report = minimize(rosenbrock, np.array([-1.2, 1.0]), settings)
        assert report.final_cost < 1e-8
        assert report.iterations <= 200
        assert np.allclose(x, [1.0, 1.0], atol=1e-3)


class TestGuarantees:
    def test_final_never_exceeds_initial(self, rng):
        for _ in range(20):
            a = rng.normal(0, 3, 6)
            x0 = rng.normal(0, 3, 6)

            def fg(x):
                d = x - a
                # mildly nonconvex bowl
                return float(d @ d + 0.1 * np.sum(np.sin(3 * d))), \
                    2.0 * d + 0.3 * np.cos(3 * d)

            _, report = minimize(fg, x0, SolverSettings(max_iterations=40))
            assert report.final_cost <= report.initial_cost + 1e-12

    def test_iteration_cap_reason(self):
        settings = SolverSettings(max_iterations=2, gradient_tolerance=1e-15,
                                  cost_tolerance=1e-16)
        _, report = minimize(rosenbrock, np.array([-1.2, 1.0]), settings)
        assert report.reason == REASON_ITERATION_CAP
        assert report.iterations == 2

    def test_non_finite_initial_raises(self):
        def fg(x):
            return float("nan"), np.zeros_like(x)

        with pytest.raises(ValueError):
            minimize(fg, np.zeros(2), SolverSettings())

    def test_settings_validation(self):
        with pytest.raises(ValueError):
            SolverSettings(max_iterations=0)
        with pytest.raises(ValueError):
            SolverSettings(wolfe_c1=0.9, wolfe_c2=0.1)


class TestBounds:
    def test_projected_solution_on_box(self):
        a = np.array([1.0, -2.0, 3.0, 0.5])
        bounds = (np.full(4, -1.0), np.full(4, 1.0))
        x, report = minimize(quadratic(a), np.zeros(4),
                             SolverSettings(bounds=bounds))
        assert np.allclose(x, [1.0, -1.0, 1.0, 0.5], atol=1e-8)
        assert report.reason == REASON_GRADIENT

    def test_start_outside_box_is_projected(self):
        a = np.zeros(3)
        bounds = (np.full(3, -0.5), np.full(3, 0.5))
        x, _ = minimize(quadratic(a), np.full(3, 5.0), SolverSettings(bounds=bounds))
        assert np.all(x <= 0.5 + 1e-12) and np.all(x >= -0.5 - 1e-12)
        assert np.allclose(x, 0.0, atol=1e-8)
