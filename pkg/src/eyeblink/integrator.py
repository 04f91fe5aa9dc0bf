"""Variable-order, variable-step BDF integrator for ``M y' = f(t, y)``.

``M`` is a diagonal 0/1 mass pattern: rows with a one are differential, rows
with a zero are algebraic constraints (index 1).  The problem is supplied as a
residual ``F(t, y, yp)`` that is affine in ``yp`` with coefficient ``M``, so
``f(t, y) = -F(t, y, 0)``.

The scheme is the quasi-constant step size BDF of orders 1-5 written in
backward-difference form, as used by MATLAB's ode15s (without the NDF
modification).  Each step is solved by modified Newton iteration with a dense
LU factorisation of ``M - c J``, where ``J`` is a forward-difference Jacobian
that is reused until Newton fails to converge.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.linalg import lu_factor, lu_solve

log = logging.getLogger(__name__)

MAX_ORDER = 5
NEWTON_MAXITER = 4
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0
MIN_GROWTH = 1.2
EPS = np.finfo(float).eps

# BDF coefficients in backward-difference form
_GAMMA = np.hstack((0.0, np.cumsum(1.0 / np.arange(1, MAX_ORDER + 1))))
_ERROR_CONST = 1.0 / np.arange(1, MAX_ORDER + 2)


class IntegratorError(RuntimeError):
    pass


class StagnationError(IntegratorError):
    """Step size collapsed; ``t_last`` is the last time successfully reached."""

    def __init__(self, message, t_last, stats=None):
        super().__init__(message)
        self.t_last = t_last
        self.stats = stats


class NonlinearSolverError(IntegratorError):
    pass


class InconsistentInitialDataError(IntegratorError):
    pass


class JacobianEvaluationError(IntegratorError):
    pass


@dataclass(frozen=True)
class DaeOptions:
    rtol: float = 1e-6
    atol: float = 1e-6
    h_init: Optional[float] = None
    h_max: float = np.inf
    max_order: int = 5
    jac_refresh_policy: str = "on-convergence-failure"
    max_steps: int = 200_000
    force_stops: bool = False
    jac_chunk: int = 128

    def __post_init__(self):
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError("rtol and atol must be positive")
        if not 1 <= self.max_order <= MAX_ORDER:
            raise ValueError(f"max_order must be in 1..{MAX_ORDER}")
        if self.jac_refresh_policy not in ("every-step", "on-convergence-failure"):
            raise ValueError(f"unknown Jacobian policy {self.jac_refresh_policy!r}")


@dataclass
class DaeProblem:
    """Residual ``F(t, y, yp)`` over flat state vectors.

    ``residual`` must accept ``y`` and ``yp`` with extra leading batch
    dimensions.  ``schedule`` lists output times inside ``t_span``.
    """

    residual: Callable
    mass: np.ndarray
    y0: np.ndarray
    t_span: tuple
    schedule: Sequence[float] = ()

    def __post_init__(self):
        self.mass = np.asarray(self.mass, dtype=float).ravel()
        self.y0 = np.asarray(self.y0, dtype=float).ravel()
        if self.mass.shape != self.y0.shape:
            raise ValueError("mass pattern and initial state differ in size")
        if not np.all((self.mass == 0) | (self.mass == 1)):
            raise ValueError("mass pattern must be 0/1")

    def f(self, t, y):
        return -self.residual(t, y, np.zeros_like(y))

    @property
    def algebraic(self):
        return self.mass == 0


@dataclass
class SolverStats:
    nsteps: int = 0
    nfailed: int = 0
    nfev: int = 0
    njev: int = 0
    nlu: int = 0
    newton_iters: int = 0


@dataclass
class DaeSolution:
    t: np.ndarray
    y: np.ndarray
    stats: SolverStats
    t_reached: float
    step_times: list = field(default_factory=list)


def fd_jacobian(residual, y, yp, t, typical=1.0, chunk=128, f0=None):
    """Dense forward-difference Jacobian ``dF/dy`` at ``(t, y, yp)``.

    Column ``j`` uses the increment ``sqrt(eps) * max(|y_j|, typical)``.
    Columns are perturbed in vectorised batches of ``chunk``.
    """
    y = np.asarray(y, dtype=float)
    n = y.size
    if f0 is None:
        f0 = residual(t, y, yp)
    if not np.all(np.isfinite(f0)):
        raise JacobianEvaluationError("residual is not finite at the base point")
    delta = np.sqrt(EPS) * np.maximum(np.abs(y), typical)
    # make the increment exactly representable
    delta = (y + delta) - y
    J = np.empty((n, n))
    for start in range(0, n, chunk):
        cols = np.arange(start, min(start + chunk, n))
        Y = np.repeat(y[None, :], cols.size, axis=0)
        Y[np.arange(cols.size), cols] += delta[cols]
        try:
            Fp = residual(t, Y, np.broadcast_to(yp, Y.shape))
        except ArithmeticError as exc:
            raise JacobianEvaluationError(str(exc)) from exc
        if not np.all(np.isfinite(Fp)):
            raise JacobianEvaluationError("residual is not finite at a perturbed point")
        J[:, cols] = ((Fp - f0) / delta[cols, None]).T
    return J


def _norm(x):
    return np.max(np.abs(x)) if x.size else 0.0


def _compute_R(order, factor):
    I = np.arange(1, order + 1)[:, None]
    J = np.arange(1, order + 1)
    M = np.zeros((order + 1, order + 1))
    M[1:, 1:] = (I - 1 - factor * J) / I
    M[0] = 1.0
    return np.cumprod(M, axis=0)


def _rescale_differences(D, order, factor):
    """Rewrite the difference table for a step size multiplied by ``factor``."""
    RU = _compute_R(order, factor) @ _compute_R(order, 1.0)
    D[: order + 1] = RU.T @ D[: order + 1]


def _interpolate(t_eval, t_new, h, order, D):
    """Evaluate the step's interpolating polynomial at ``t_eval``."""
    if order == 0:
        return D[0].copy()
    j = np.arange(order)
    x = (t_eval - (t_new - h * j)) / (h * (1 + j))
    p = np.cumprod(x)
    return D[0] + p @ D[1 : order + 1]


def make_consistent(y0, t0, problem: DaeProblem, opts: DaeOptions, max_iter=10, typical=1.0):
    """Newton-project the algebraic components of ``y0`` onto the constraints."""
    y = np.array(y0, dtype=float).ravel()
    alg = np.flatnonzero(problem.algebraic)
    if alg.size == 0:
        return y
    yp = np.zeros_like(y)

    def g(ya):
        z = np.array(y)
        z[alg] = ya
        return problem.residual(t0, z, yp)[alg]

    def g_batch(t, Ya, _yp):
        Z = np.repeat(y[None, :], Ya.shape[0], axis=0) if Ya.ndim == 2 else np.array(y)
        Z[..., alg] = Ya
        return problem.residual(t, Z, np.zeros_like(Z))[..., alg]

    ya = y[alg].copy()
    for it in range(max_iter + 1):
        try:
            r = g(ya)
        except ArithmeticError as exc:
            raise InconsistentInitialDataError(str(exc)) from exc
        if not np.all(np.isfinite(r)):
            raise InconsistentInitialDataError("constraint residual is not finite")
        if _norm(r) < opts.atol:
            y[alg] = ya
            log.debug("consistent after %d Newton steps", it)
            return y
        if it == max_iter:
            break
        Jaa = fd_jacobian(g_batch, ya, None, t0, typical=typical, f0=r)
        try:
            ya = ya - np.linalg.solve(Jaa, r)
        except np.linalg.LinAlgError as exc:
            raise InconsistentInitialDataError("singular constraint Jacobian") from exc
    raise InconsistentInitialDataError(
        f"constraint residual {_norm(r):.3e} still above atol after {max_iter} Newton steps"
    )


class BdfDaeSolver:
    """Stateful stepper; use :func:`solve_dae` for the common case."""

    def __init__(self, problem: DaeProblem, opts: DaeOptions, typical=1.0):
        self.problem = problem
        self.opts = opts
        self.typical = typical
        self.mass = problem.mass
        self.n = problem.y0.size
        self.stats = SolverStats()
        t0, t1 = map(float, problem.t_span)
        if not t1 > t0:
            raise ValueError("t_span must be increasing")
        self.t0, self.t_end = t0, t1
        self.t = t0
        self.y = problem.y0.copy()
        self.max_order = opts.max_order
        self.newton_tol = max(10 * EPS / opts.rtol, min(0.03, opts.rtol**0.5))

    # residual plumbing -------------------------------------------------
    def _f(self, t, y):
        self.stats.nfev += 1
        return self.problem.f(t, y)

    def _jac(self, t, y):
        self.stats.njev += 1
        yp = np.zeros(self.n)
        f0 = self.problem.residual(t, y, yp)
        J = fd_jacobian(self.problem.residual, y, yp, t, typical=self.typical,
                        chunk=self.opts.jac_chunk, f0=f0)
        self.stats.nfev += 1 + self.n
        return -J

    def _lu(self, c, J):
        self.stats.nlu += 1
        return lu_factor(np.diag(self.mass) - c * J, check_finite=False)

    def _scale(self, y):
        return self.opts.atol + self.opts.rtol * np.abs(y)

    def _initial_slope(self, J, f0):
        """Derivative consistent with the constraints: ``d/dt g(t, y) = 0``."""
        yp = np.where(self.mass == 1, f0, 0.0)
        alg = self.problem.algebraic
        if not alg.any():
            return yp
        dt = np.sqrt(EPS) * max(abs(self.t), 1.0)
        ft = (self._f(self.t + dt, self.y) - f0) / dt
        rhs = -(ft[alg] + J[np.ix_(alg, ~alg)] @ yp[~alg])
        try:
            yp[alg] = np.linalg.solve(J[np.ix_(alg, alg)], rhs)
        except np.linalg.LinAlgError:
            pass
        return yp

    def _initial_step(self, yp):
        opts = self.opts
        span = self.t_end - self.t0
        if opts.h_init is not None:
            return min(opts.h_init, opts.h_max, span)
        rh = 1.25 * _norm(yp / self._scale(self.y)) / np.sqrt(opts.rtol)
        h = min(opts.h_max, span)
        if h * rh > 1:
            h = 1.0 / rh
        return max(h, 1e-10 * span)

    def _newton(self, t_new, y_pred, c, psi, lu, scale):
        d = np.zeros(self.n)
        y = y_pred.copy()
        dy_norm_old = None
        for k in range(NEWTON_MAXITER):
            try:
                f = self._f(t_new, y)
            except ArithmeticError:
                return False, k + 1, y, d
            if not np.all(np.isfinite(f)):
                return False, k + 1, y, d
            dy = lu_solve(lu, c * f - self.mass * (psi + d), check_finite=False)
            dy_norm = _norm(dy / scale)
            rate = None if dy_norm_old is None else dy_norm / dy_norm_old
            if rate is not None and (
                rate >= 1 or rate ** (NEWTON_MAXITER - k) / (1 - rate) * dy_norm > self.newton_tol
            ):
                return False, k + 1, y, d
            y = y + dy
            d = d + dy
            if dy_norm == 0 or (rate is not None and rate / (1 - rate) * dy_norm < self.newton_tol):
                return True, k + 1, y, d
            dy_norm_old = dy_norm
        return False, NEWTON_MAXITER, y, d

    def run(self, schedule=(), observer=None):
        opts = self.opts
        span = self.t_end - self.t0
        h_min = 1e-14 * span
        schedule = np.sort(np.asarray(schedule, dtype=float))
        if schedule.size and (schedule[0] < self.t0 - 1e-12 * span or schedule[-1] > self.t_end + 1e-12 * span):
            raise ValueError("schedule times must lie inside t_span")
        out_t, out_y = [], []
        k_out = 0

        def emit(tq, yq):
            out_t.append(tq)
            out_y.append(yq)
            if observer is not None:
                observer(tq, yq)

        while k_out < schedule.size and schedule[k_out] <= self.t0:
            emit(float(schedule[k_out]), self.y.copy())
            k_out += 1

        try:
            f0 = self._f(self.t, self.y)
        except ArithmeticError as exc:
            raise NonlinearSolverError(f"residual fails at the initial state: {exc}") from exc
        J = self._jac(self.t, self.y)
        yp0 = self._initial_slope(J, f0)
        h = self._initial_step(yp0)

        D = np.zeros((MAX_ORDER + 3, self.n))
        D[0] = self.y
        D[1] = yp0 * h
        order = 1
        n_equal_steps = 0
        jac_current = True
        lu = None
        step_times = [self.t]

        stops = schedule[schedule > self.t0] if opts.force_stops else np.array([])

        while self.t < self.t_end:
            if self.stats.nsteps >= opts.max_steps:
                raise StagnationError(
                    f"step budget of {opts.max_steps} exhausted at t={self.t:.6g}", self.t, self.stats)
            # step size limits: h_max, end of span, forced output stops
            h_target = min(h, opts.h_max)
            t_limit = self.t_end
            nxt = stops[stops > self.t + 1e-12 * span]
            if nxt.size:
                t_limit = min(t_limit, nxt[0])
            if self.t + h_target > t_limit or (t_limit - self.t - h_target) < 1e-10 * span:
                h_target = t_limit - self.t
            if h_target != h:
                _rescale_differences(D, order, h_target / h)
                n_equal_steps = 0
                lu = None
                h = h_target

            step_accepted = False
            while not step_accepted:
                if h < h_min:
                    raise StagnationError(
                        f"step size {h:.3e} underflowed at t={self.t:.6g}", self.t, self.stats)
                t_new = self.t + h
                if abs(t_new - t_limit) <= 1e-12 * span:
                    t_new = t_limit
                y_pred = D[: order + 1].sum(axis=0)
                scale = self._scale(y_pred)
                psi = (D[1 : order + 1].T @ _GAMMA[1 : order + 1]) / _GAMMA[order]
                c = h / _GAMMA[order]

                converged = False
                while not converged:
                    if lu is None:
                        lu = self._lu(c, J)
                    converged, n_iter, y_new, d = self._newton(t_new, y_pred, c, psi, lu, scale)
                    self.stats.newton_iters += n_iter
                    if not converged:
                        if jac_current:
                            break
                        try:
                            J = self._jac(self.t, self.y)
                        except JacobianEvaluationError:
                            break
                        jac_current = True
                        lu = None

                if not converged:
                    factor = 0.5
                    _rescale_differences(D, order, factor)
                    h *= factor
                    n_equal_steps = 0
                    lu = None
                    self.stats.nfailed += 1
                    continue

                safety = 0.9 * (2 * NEWTON_MAXITER + 1) / (2 * NEWTON_MAXITER + n_iter)
                scale = self._scale(y_new)
                error_norm = _norm(_ERROR_CONST[order] * d / scale)
                if error_norm > 1:
                    factor = max(MIN_FACTOR, safety * error_norm ** (-1 / (order + 1)))
                    _rescale_differences(D, order, factor)
                    h *= factor
                    n_equal_steps = 0
                    lu = None
                    self.stats.nfailed += 1
                else:
                    step_accepted = True

            self.stats.nsteps += 1
            n_equal_steps += 1
            t_old = self.t
            self.t = t_new
            self.y = y_new
            step_times.append(t_new)

            D[order + 2] = d - D[order + 1]
            D[order + 1] = d
            for i in reversed(range(order + 1)):
                D[i] += D[i + 1]

            while k_out < schedule.size and schedule[k_out] <= t_new + 1e-13 * span:
                tq = float(schedule[k_out])
                yq = y_new.copy() if abs(tq - t_new) <= 1e-13 * span else _interpolate(tq, t_new, h, order, D)
                emit(tq, yq)
                k_out += 1

            if opts.jac_refresh_policy == "every-step":
                J = self._jac(self.t, self.y)
                jac_current = True
                lu = None
            else:
                jac_current = False

            if n_equal_steps < order + 1:
                continue

            error_m_norm = (
                _norm(_ERROR_CONST[order - 1] * D[order] / scale) if order > 1 else np.inf
            )
            error_p_norm = (
                _norm(_ERROR_CONST[order + 1] * D[order + 2] / scale)
                if order < self.max_order else np.inf
            )
            norms = np.array([error_m_norm, error_norm, error_p_norm])
            with np.errstate(divide="ignore"):
                factors = norms ** (-1.0 / np.arange(order, order + 3))
            delta_order = int(np.argmax(factors)) - 1
            factor = min(MAX_FACTOR, safety * np.max(factors))
            if delta_order == 0 and 1.0 <= factor < MIN_GROWTH:
                # not worth a refactorisation; keep the current step
                continue
            order += delta_order
            _rescale_differences(D, order, factor)
            h *= factor
            n_equal_steps = 0
            lu = None
            log.debug("t=%.6g order=%d h=%.3e", t_old, order, h)

        return DaeSolution(
            t=np.array(out_t), y=np.array(out_y).reshape(len(out_t), self.n),
            stats=self.stats, t_reached=self.t, step_times=step_times,
        )


def solve_dae(problem: DaeProblem, opts: DaeOptions, observer=None, typical=1.0) -> DaeSolution:
    """Integrate ``problem`` over its span, reporting states at its schedule.

    ``observer(t, y)`` is called at each schedule time with the interpolated
    state.  Raises :class:`StagnationError` when the step size collapses.
    """
    solver = BdfDaeSolver(problem, opts, typical=typical)
    return solver.run(problem.schedule, observer)
