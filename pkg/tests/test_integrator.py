import numpy as np
import pytest
from scipy.integrate import solve_ivp

from eyeblink.diagnostics import l2_relative_error
from eyeblink.experiments import build_model, initial_state, make_problem, preset, sample_times
from eyeblink.integrator import (
    DaeOptions,
    DaeProblem,
    InconsistentInitialDataError,
    JacobianEvaluationError,
    StagnationError,
    fd_jacobian,
    make_consistent,
    solve_dae,
)


def ode_problem(rhs, y0, t_end, schedule=()):
    y0 = np.atleast_1d(np.asarray(y0, float))
    return DaeProblem(lambda t, y, yp: yp - rhs(t, y), np.ones_like(y0), y0, (0.0, t_end), schedule)


def linear_dae(schedule=(1.0,), y0=(1.0, 1.0)):
    def residual(t, y, yp):
        r = np.empty(np.broadcast_shapes(np.shape(y), np.shape(yp)))
        r[..., 0] = yp[..., 0] + y[..., 0]
        r[..., 1] = y[..., 1] - y[..., 0]
        return r

    return DaeProblem(residual, [1, 0], list(y0), (0.0, 1.0), schedule)


class TestOptions:
    @pytest.mark.parametrize(
        "kw", [dict(rtol=0), dict(atol=-1), dict(max_order=0), dict(max_order=6), dict(jac_refresh_policy="never")]
    )
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            DaeOptions(**kw)

    def test_problem_validation(self):
        with pytest.raises(ValueError):
            DaeProblem(lambda t, y, yp: y, [1, 0.5], [0, 0], (0, 1))
        with pytest.raises(ValueError):
            DaeProblem(lambda t, y, yp: y, [1], [0, 0], (0, 1))
        p = linear_dae()
        np.testing.assert_array_equal(p.algebraic, [False, True])


class TestScalar:
    def test_exponential_decay(self):
        sol = solve_dae(ode_problem(lambda t, y: -y, 1.0, 1.0, [1.0]), DaeOptions(rtol=1e-9, atol=1e-9))
        assert abs(sol.y[-1, 0] - np.exp(-1)) < 1e-8
        assert sol.t_reached == 1.0

    def test_against_scipy_on_stiff_system(self):
        A = np.array([[-1000.0, 1.0], [0.0, -0.5]])
        prob = ode_problem(lambda t, y: y @ A.T + np.array([np.sin(t), 0.0]), [1.0, 2.0], 2.0, [0.5, 1.0, 2.0])
        sol = solve_dae(prob, DaeOptions(rtol=1e-9, atol=1e-9))
        ref = solve_ivp(lambda t, y: A @ y + [np.sin(t), 0.0], (0, 2), [1.0, 2.0], method="Radau",
                        rtol=1e-12, atol=1e-12, t_eval=[0.5, 1.0, 2.0])
        np.testing.assert_allclose(sol.y, ref.y.T, atol=1e-7)

    def test_observer_sees_schedule(self):
        seen = []
        sched = [0.0, 0.25, 0.5, 1.0]
        solve_dae(ode_problem(lambda t, y: -y, 1.0, 1.0, sched), DaeOptions(), observer=lambda t, y: seen.append(t))
        assert seen == sched

    def test_schedule_outside_span(self):
        with pytest.raises(ValueError):
            solve_dae(ode_problem(lambda t, y: -y, 1.0, 1.0, [2.0]), DaeOptions())


class TestDae:
    def test_algebraic_tracks(self):
        seen = []
        prob = linear_dae(schedule=list(np.linspace(0, 1, 21)))
        sol = solve_dae(prob, DaeOptions(rtol=1e-8, atol=1e-8), observer=lambda t, y: seen.append(y))
        Y = np.array(seen)
        assert np.max(np.abs(Y[:, 1] - Y[:, 0])) < 1e-8
        np.testing.assert_allclose(Y[:, 0], np.exp(-np.linspace(0, 1, 21)), atol=1e-7)
        assert sol.stats.nsteps > 0 and sol.stats.nlu > 0

    def test_make_consistent_projects_algebraic(self):
        prob = linear_dae(y0=(1.0, 5.0))
        y = make_consistent(prob.y0, 0.0, prob, DaeOptions(atol=1e-12))
        np.testing.assert_allclose(y, [1.0, 1.0], atol=1e-12)

    def test_make_consistent_failure(self):
        def residual(t, y, yp):
            r = np.zeros(np.shape(y))
            r[..., 1] = y[..., 1] ** 2 + 1.0  # no real root
            r[..., 0] = yp[..., 0]
            return r

        prob = DaeProblem(residual, [1, 0], [0.0, 0.3], (0, 1))
        with pytest.raises(InconsistentInitialDataError):
            make_consistent(prob.y0, 0.0, prob, DaeOptions())

    def test_stagnation_on_blowup(self):
        # y' = y^2 from y(0)=1 blows up at t=1
        prob = ode_problem(lambda t, y: y**2, 1.0, 2.0, [2.0])
        with pytest.raises(StagnationError) as info:
            solve_dae(prob, DaeOptions(rtol=1e-8, atol=1e-8))
        assert 0.99 < info.value.t_last <= 1.0

    def test_step_budget(self):
        prob = ode_problem(lambda t, y: -y, 1.0, 1.0, [1.0])
        with pytest.raises(StagnationError):
            solve_dae(prob, DaeOptions(rtol=1e-12, atol=1e-12, max_steps=5))


class TestJacobian:
    def test_linear_exact(self):
        A = np.random.default_rng(0).standard_normal((6, 6))

        def residual(t, y, yp):
            return y @ A.T + 0.0 * yp

        J = fd_jacobian(residual, np.linspace(-1, 1, 6), np.zeros(6), 0.0, chunk=4)
        np.testing.assert_allclose(J, A, atol=1e-7)

    def test_nonlinear_against_analytic(self):
        def residual(t, y, yp):
            return np.sin(y) * y[..., ::-1]

        y = np.array([0.3, -1.2, 2.0])
        J = fd_jacobian(residual, y, np.zeros(3), 0.0)
        exact = np.diag(np.cos(y) * y[::-1])
        for i in range(3):
            exact[i, 2 - i] += np.sin(y[i])
        np.testing.assert_allclose(J, exact, atol=1e-6)

    def test_nonfinite(self):
        def residual(t, y, yp):
            return np.where(y > 1.0, np.nan, y)

        with pytest.raises(JacobianEvaluationError):
            fd_jacobian(residual, np.array([1.0 - 1e-12, 0.0]), np.zeros(2), 0.0)

    def test_heat_interior_spectrum_is_stable(self):
        cfg = preset("heat51", nx=8, ny=8)
        m = build_model(cfg)
        p = make_problem(m, initial_state(cfg, m), 1.0, [])
        J = fd_jacobian(p.residual, p.y0, np.zeros_like(p.y0), 0.0)
        inner = np.flatnonzero(p.mass)
        ev = np.linalg.eigvals(-J[np.ix_(inner, inner)])
        assert ev.real.max() <= 1e-6


def heat_run(opts, **overrides):
    cfg = preset("heat51", **overrides)
    m = build_model(cfg)
    sched = list(sample_times(cfg))
    p = make_problem(m, initial_state(cfg, m), cfg.t_end, sched)
    sol = solve_dae(p, opts)
    errs = []
    for t, y in zip(sol.t, sol.y):
        mg = m.mapped_grid(t)
        W = m.bc.exact(t, mg.x, mg.y)
        errs.append(l2_relative_error(y.reshape(m.shape), W, mg, m.gx, m.gy))
    return sol, np.array(errs)


@pytest.mark.slow
class TestHeatProblem:
    TOLS = (1e-6, 1e-8, 1e-10)

    @staticmethod
    @pytest.fixture(scope="class")
    def runs():
        return {tol: heat_run(DaeOptions(rtol=tol, atol=tol)) for tol in TestHeatProblem.TOLS}

    def test_tolerance_monotone(self, runs):
        final = [runs[tol][1][-1] for tol in self.TOLS]
        assert final[0] >= final[1] >= final[2]

    def test_forced_stops_match_interpolation(self, runs):
        tol = 1e-6
        forced, _ = heat_run(DaeOptions(rtol=tol, atol=tol, force_stops=True))
        free = runs[tol][0]
        np.testing.assert_array_equal(forced.t, free.t)
        assert set(np.round(forced.t, 12)) <= set(np.round(forced.step_times, 12))
        w = tol + tol * np.abs(forced.y)
        assert np.max(np.abs(free.y - forced.y) / w) <= 10.0

    def test_bdf1_fallback(self):
        _, errs = heat_run(DaeOptions(rtol=1e-6, atol=1e-6, max_order=1))
        assert errs.max() <= 1e-3


def test_every_step_policy():
    kw = dict(nx=10, ny=8, t_end=0.01, snapshots=(0.01,))
    lazy, _ = heat_run(DaeOptions(rtol=1e-8, atol=1e-8), **kw)
    eager, _ = heat_run(DaeOptions(rtol=1e-8, atol=1e-8, jac_refresh_policy="every-step"), **kw)
    assert eager.stats.njev >= eager.stats.nsteps > 0
    assert lazy.stats.njev < lazy.stats.nsteps
    assert np.max(np.abs(eager.y - lazy.y)) < 1e-6
