import numpy as np
import pytest
from scipy.optimize import minimize as scipy_minimize

from boxverify.optimizer import Objective, OptConfig, OptStatus, fd_gradient, minimize, projected_gradient
from boxverify.vnnlib import Box


def rosenbrock(p):
    return (1 - p[0]) ** 2 + 100 * (p[1] - p[0] ** 2) ** 2


# (function, analytic gradient, dimension)
POLYNOMIALS = {
    "quadratic": (lambda x: 3 * x[0] ** 2 - x[0] * x[1] + 0.5 * x[1] ** 2 + 2 * x[1],
                  lambda x: np.array([6 * x[0] - x[1], -x[0] + x[1] + 2]), 2),
    "cubic": (lambda x: x[0] ** 3 - 2 * x[0] * x[1] ** 2 + x[2],
              lambda x: np.array([3 * x[0] ** 2 - 2 * x[1] ** 2, -4 * x[0] * x[1], 1.0]), 3),
    "quartic": (lambda x: np.sum(x ** 4) - np.sum(x ** 2),
                lambda x: 4 * x ** 3 - 2 * x, 4),
    "product": (lambda x: x[0] * x[1] * x[2] + x[1] ** 2,
                lambda x: np.array([x[1] * x[2], x[0] * x[2] + 2 * x[1], x[0] * x[1]]), 3),
    "quintic": (lambda x: (x[0] + x[1]) ** 5 / 50 - x[0],
                lambda x: np.array([(x[0] + x[1]) ** 4 / 10 - 1, (x[0] + x[1]) ** 4 / 10]), 2),
}


def grad_rel_error(fd, exact):
    return np.max(np.abs(fd - exact) / np.maximum(np.abs(exact), 1.0))


def test_fd_examples():
    box = Box((0.0,), (10.0,))
    assert fd_gradient(lambda x: x[0] ** 2, np.array([3.0]), box, 1e-6)[0] == pytest.approx(6, abs=1e-5)
    assert np.all(fd_gradient(lambda x: 4.0, np.array([1.0, 2.0]), Box((0.0, 0.0), (3.0, 3.0))) == 0)
    at_lo = fd_gradient(lambda x: x[0], np.array([0.0]), Box((0.0,), (1.0,)))
    assert at_lo[0] == pytest.approx(1.0, abs=1e-8)
    at_hi = fd_gradient(lambda x: x[0] ** 2, np.array([1.0]), Box((0.0,), (1.0,)))
    assert at_hi[0] == pytest.approx(2.0, abs=1e-6)


def test_fd_degenerate_and_narrow_dims():
    f = lambda x: x[0] * 5 + x[1] * 7
    g = fd_gradient(f, np.array([1.0, 2.0]), Box((1.0, 2.0), (1.0, 2.0 + 1e-8)))
    assert g[0] == 0.0
    assert g[1] == pytest.approx(7.0, rel=1e-5)


def test_fd_stays_in_box():
    box = Box((0.0, -1.0), (1.0, 1.0))
    f = Objective(lambda x: np.sum(x ** 2), box)
    for x in ([0.0, -1.0], [1.0, 1.0], [0.5, 0.0], [1e-7, 1 - 1e-7]):
        fd_gradient(f, np.array(x), box)


@pytest.mark.parametrize("name", sorted(POLYNOMIALS))
def test_fd_matches_analytic(name):
    f, grad, d = POLYNOMIALS[name]
    box = Box((-3.0,) * d, (3.0,) * d)
    rng = np.random.default_rng(len(name))
    for _ in range(100):
        x = rng.uniform(-3, 3, d)
        assert grad_rel_error(fd_gradient(f, x, box, 1e-6), grad(x)) <= 1e-4


def test_minimize_interior():
    r = minimize(Objective(lambda x: (x[0] - 3) ** 2), [0.0], Box((0.0,), (10.0,)))
    assert abs(r.x_best[0] - 3) < 1e-6 and r.status is OptStatus.CONVERGED


def test_minimize_active_bound():
    box = Box((0.0,), (2.0,))
    r = minimize(Objective(lambda x: (x[0] - 3) ** 2), [0.0], box)
    assert r.x_best[0] == 2.0
    g = fd_gradient(lambda x: (x[0] - 3) ** 2, r.x_best, box)
    assert projected_gradient(r.x_best, g, box)[0] == 0.0


def grid_then_descent_oracle():
    """Dense grid on [-2, 2]^2 then plain projected gradient descent with
    exact gradients: shares nothing with the quasi-Newton code path."""
    xs = np.linspace(-2, 2, 401)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    F = (1 - X) ** 2 + 100 * (Y - X ** 2) ** 2
    i, j = np.unravel_index(np.argmin(F), F.shape)
    p = np.array([xs[i], xs[j]])
    for _ in range(200000):
        g = np.array([-2 * (1 - p[0]) - 400 * p[0] * (p[1] - p[0] ** 2), 200 * (p[1] - p[0] ** 2)])
        p = np.clip(p - 1e-3 * g, -2, 2)
    return p, rosenbrock(p)


def test_rosenbrock():
    oracle_x, oracle_f = grid_then_descent_oracle()
    assert np.allclose(oracle_x, [1, 1], atol=1e-4) and oracle_f < 1e-8

    r = minimize(Objective(rosenbrock), [-1.2, 1.0], Box((-2.0, -2.0), (2.0, 2.0)))
    assert np.allclose(r.x_best, oracle_x, atol=1e-4)
    assert r.f_best <= 1e-8

    ref = scipy_minimize(rosenbrock, [-1.2, 1.0], method="L-BFGS-B", bounds=[(-2, 2)] * 2)
    assert np.allclose(r.x_best, ref.x, atol=1e-3)


def test_separable_quadratic_clamp():
    rng = np.random.default_rng(123)
    for _ in range(50):
        d = int(rng.integers(1, 8))
        c = rng.uniform(-3, 3, d)
        lo = rng.uniform(-2, 0.5, d)
        hi = lo + rng.uniform(0, 3, d)
        box = Box.from_arrays(lo, hi)
        x0 = lo + (hi - lo) * rng.random(d)
        r = minimize(Objective(lambda x: np.sum((x - c) ** 2), box), x0, box)
        assert np.max(np.abs(r.x_best - np.clip(c, lo, hi))) <= 1e-6


def test_feasibility_monotonicity_and_descent():
    rng = np.random.default_rng(8)
    funcs = [rosenbrock, lambda p: np.sin(3 * p[0]) * np.cos(2 * p[1]) + 0.1 * p[0] ** 2,
             lambda p: np.abs(p[0] - 0.3) + (p[1] + 0.2) ** 2]
    for f in funcs:
        for _ in range(10):
            lo = rng.uniform(-2, 0, 2)
            box = Box.from_arrays(lo, lo + rng.uniform(0.1, 3, 2))
            x0 = np.asarray(box.lo) + rng.random(2) * (np.asarray(box.hi) - np.asarray(box.lo))
            obj = Objective(f, box)  # asserts every evaluation is inside the box
            r = minimize(obj, x0, box)
            assert np.all(np.diff(r.history) <= 0)
            assert r.f_best <= f(x0)
            assert r.f_best == f(r.x_best)
            assert box.contains(r.x_best)


def test_degenerate_dimension_is_frozen():
    box = Box((0.5, -1.0), (0.5, 1.0))
    r = minimize(Objective(lambda x: (x[0] - 2) ** 2 + (x[1] - 0.25) ** 2, box), [0.5, 0.9], box)
    assert r.x_best[0] == 0.5 and abs(r.x_best[1] - 0.25) < 1e-6


def test_max_iterations_status():
    r = minimize(Objective(rosenbrock), [-1.2, 1.0], Box((-2.0, -2.0), (2.0, 2.0)),
                 OptConfig(max_iterations=2))
    assert r.status is OptStatus.MAX_ITERATIONS and r.iterations == 2


def test_line_search_failure_returns_best():
    # a spike at the forward stencil point fakes a steep descent direction that
    # no actual step can realize
    spike = 0.4 + 1e-6
    f = Objective(lambda x: -1.0 if x[0] == spike else 10 * abs(x[0] - 0.4))
    r = minimize(f, [0.4], Box((0.0,), (1.0,)))
    assert r.status is OptStatus.LINE_SEARCH_FAILURE
    assert r.x_best[0] == 0.4 and r.f_best == 0.0


def test_config_validation():
    with pytest.raises(ValueError):
        OptConfig(memory=0)
    with pytest.raises(ValueError):
        OptConfig(grad_tolerance=0)
