"""Variable-order, variable-step NDF integration of ``M y' = f(y)``.

The multistep formulas are the numerical differentiation formulas (NDF) in
backward-difference form with quasi-constant step size: the difference array
``D`` is rescaled whenever the step changes, so the formula of order ``k`` is
always applied on an equidistant grid.  Setting ``variant="bdf"`` switches
all kappa coefficients to zero, which recovers the BDF family.

``M`` may be singular (index-1 DAE): rows without mass are algebraic
constraints solved to Newton tolerance at every step.

The system object must provide ``mass`` (sparse, square), ``residual(y,
tau)``, ``jacobian(y, tau)`` and ``commit(y, tau)``.  ``tau`` is the current
step, passed through for constitutive updates that depend on it; internal
variables are frozen within a step and committed once per accepted step.
"""
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import NewtonFailure, SiseiError

MAX_ORDER = 5
NDF_KAPPA = np.array([0.0, -0.1850, -1.0 / 9.0, -0.0823, -0.0415, 0.0])
MIN_FACTOR = 0.2
MAX_FACTOR = 2.0
REJECT_FACTOR = 0.5


def rms_norm(x):
    return float(np.linalg.norm(x) / np.sqrt(x.size)) if x.size else 0.0


def ndf_coefficients(variant="ndf"):
    """``(kappa, gamma, alpha, error_const)`` indexed by order 0..5."""
    if variant == "ndf":
        kappa = NDF_KAPPA.copy()
    elif variant == "bdf":
        kappa = np.zeros(MAX_ORDER + 1)
    else:
        raise ValueError(f"unknown multistep variant {variant!r}")
    gamma = np.hstack((0.0, np.cumsum(1.0 / np.arange(1, MAX_ORDER + 1))))
    alpha = (1.0 - kappa) * gamma
    error_const = kappa * gamma + 1.0 / np.arange(1, MAX_ORDER + 2)
    return kappa, gamma, alpha, error_const


def _compute_R(order, factor):
    I = np.arange(1, order + 1)[:, None]
    J = np.arange(1, order + 1)
    M = np.zeros((order + 1, order + 1))
    M[1:, 1:] = (I - 1 - factor * J) / I
    M[0] = 1.0
    return np.cumprod(M, axis=0)


def change_D(D, order, factor):
    """Rescale backward differences for a step multiplied by ``factor``."""
    RU = _compute_R(order, factor) @ _compute_R(order, 1.0)
    D[:order + 1] = RU.T @ D[:order + 1]


# ----------------------------------------------------------------- Newton
@dataclass
class NewtonResult:
    y: np.ndarray
    iterations: int
    correction_norm: float


def _as_solver(J):
    if callable(J):
        return J
    if sp.issparse(J):
        lu = splu(sp.csc_matrix(J))
        return lu.solve
    J = np.atleast_2d(np.asarray(J, dtype=float))
    return lambda r: np.linalg.solve(J, r)


def _safe_residual(residual_fn, y):
    try:
        r = np.asarray(residual_fn(y), dtype=float)
    except (SiseiError, FloatingPointError):
        return None
    return r if np.all(np.isfinite(r)) else None


def newton_solve(residual_fn, jacobian_fn, y_guess, *, atol=1e-8, rtol=1e-5, tol=1.0,
                 scale=None, max_iter=12, max_backtrack=5, residual0=None,
                 check_residual=True, update_jacobian=False):
    """Newton--Raphson for ``residual_fn(y) = 0``.

    With ``w = atol + rtol |y|`` (or ``w = scale``), convergence is declared
    when the scaled residual ``r / w`` has RMS norm ``<= tol`` (only if
    ``check_residual``), or when the scaled correction ``dy / w`` does,
    either directly or as predicted from the observed contraction rate.  A trial
    point whose residual is non-finite or larger in 2-norm than the current
    one is pulled back by halving, at most ``max_backtrack`` times.

    ``jacobian_fn(y)`` may return a dense or sparse matrix, or a callable
    ``solve(r)`` applying the inverse Jacobian.  It is called once, at
    ``y_guess`` (simplified Newton), unless ``update_jacobian`` is set, in
    which case it is re-evaluated at every iterate (full Newton).

    Raises
    ------
    NewtonFailure
        With reason ``"non-finite"``, ``"max-iterations"``,
        ``"backtrack-exhausted"`` or ``"diverging"``.
    """
    y = np.array(y_guess, dtype=float, copy=True)
    if not np.all(np.isfinite(y)):
        raise NewtonFailure("non-finite", 0, "initial guess")
    r = residual0 if residual0 is not None else _safe_residual(residual_fn, y)
    if r is None:
        raise NewtonFailure("non-finite", 0, "residual at initial guess")
    fixed_scale = scale

    def weights(y):
        return fixed_scale if fixed_scale is not None else atol + rtol * np.abs(y)

    if check_residual and rms_norm(r / weights(y)) <= tol:
        return NewtonResult(y, 0, 0.0)
    solve = _as_solver(jacobian_fn(y))
    norm_old = None
    for it in range(1, max_iter + 1):
        if update_jacobian and it > 1:
            solve = _as_solver(jacobian_fn(y))
        dy = -np.asarray(solve(r), dtype=float)
        if not np.all(np.isfinite(dy)):
            raise NewtonFailure("non-finite", it, "linear solve")
        norm = rms_norm(dy / weights(y))
        rate = None if norm_old is None or norm_old == 0.0 else norm / norm_old
        if rate is not None and rate >= 1.0:
            raise NewtonFailure("diverging", it, f"contraction rate {rate:.3g}")
        if norm <= tol or (rate is not None and rate / (1.0 - rate) * norm <= tol):
            y += dy
            return NewtonResult(y, it, norm)
        r_norm = np.linalg.norm(r)
        step = 1.0
        for _ in range(max_backtrack + 1):
            y_try = y + step * dy
            r_try = _safe_residual(residual_fn, y_try)
            if r_try is not None and np.linalg.norm(r_try) <= r_norm:
                break
            step *= 0.5
        else:
            raise NewtonFailure("backtrack-exhausted", it, f"residual norm {r_norm:.3g}")
        y, r = y_try, r_try
        if check_residual and rms_norm(r / weights(y)) <= tol:
            return NewtonResult(y, it, norm * step)
        norm_old = norm * step
    raise NewtonFailure("max-iterations", max_iter)


# ------------------------------------------------------------ controller
@dataclass
class TimeController:
    """Order/step state, tolerances and event log of an NDF run.

    ``fixed_order`` pins the order; ``fixed_step`` disables all step-size
    adaptation (every converged step is accepted).  Times are in the
    system's time unit.
    """
    rtol: float = 1e-5
    atol: float = 1e-8
    tau_init: float = 1e-8
    tau_min: float = 1e-12
    tau_max: float = 1e-3
    max_order: int = MAX_ORDER
    variant: str = "ndf"
    fixed_order: int | None = None
    fixed_step: bool = False
    newton_tol: float | None = None
    newton_max_iter: int = 12
    max_failures_at_min: int = 3
    order: int = 1
    tau: float = 0.0
    n_equal_steps: int = 0
    failures_at_min: int = 0
    events: list = field(default_factory=list)

    def __post_init__(self):
        if not 0.0 < self.tau_min <= self.tau_init <= self.tau_max:
            raise ValueError("need 0 < tau_min <= tau_init <= tau_max")
        if not 1 <= self.max_order <= MAX_ORDER:
            raise ValueError(f"max_order must lie in 1..{MAX_ORDER}")
        if self.fixed_order is not None and not 1 <= self.fixed_order <= MAX_ORDER:
            raise ValueError(f"fixed_order must lie in 1..{MAX_ORDER}")
        self.kappa, self.gamma, self.alpha, self.error_const = ndf_coefficients(self.variant)
        if self.newton_tol is None:
            self.newton_tol = max(10.0 * np.finfo(float).eps / self.rtol, min(0.03, self.rtol ** 0.5))
        self.order = self.fixed_order or 1
        self.tau = self.tau or self.tau_init

    def log(self, kind, **data):
        entry = {"type": kind}
        entry.update(data)
        self.events.append(entry)
        return entry


@dataclass(frozen=True)
class Decision:
    kind: str                  # "accept", "retry" or "abort"
    tau: float
    order: int


@dataclass
class StepInfo:
    t: float
    y: np.ndarray
    tau: float
    order: int
    newton_iters: int
    error_norm: float
    commit_info: object = None


@dataclass
class TrajectorySummary:
    t: float
    y: np.ndarray
    n_accepted: int
    n_rejected: int


@dataclass
class AbortedRun:
    t: float
    y: np.ndarray
    diagnostics: dict
    soc: float | None = None


class LinearSystem:
    """``M y' = A y + b``; test problem with the integrator's system interface."""

    def __init__(self, A, b=None, mass=None):
        self.A = sp.csc_matrix(np.atleast_2d(A))
        n = self.A.shape[0]
        self.b = np.zeros(n) if b is None else np.asarray(b, dtype=float)
        self.mass = sp.identity(n, format="csc") if mass is None else sp.csc_matrix(mass)

    def residual(self, y, tau=0.0):
        return self.A @ y + self.b

    def jacobian(self, y, tau=0.0):
        return self.A

    def commit(self, y, tau):
        return None


class NdfIntegrator:
    """Adaptive NDF integrator with Newton corrector and event log.

    Parameters
    ----------
    system : object
        Provides ``mass``, ``residual``, ``jacobian`` and ``commit``.
    controller : TimeController, optional
    """

    def __init__(self, system, controller=None):
        self.system = system
        self.ctl = controller or TimeController()
        self.mass = sp.csc_matrix(system.mass)
        self.n = self.mass.shape[0]
        self.algebraic = np.asarray(abs(self.mass).sum(axis=1)).ravel() == 0.0
        self.t = 0.0
        self.D = None
        self._J = None
        self._J_current = False
        self._J_version = 0
        self._lu = None
        self._lu_key = None
        self.n_accepted = 0
        self.n_rejected = 0
        self.n_jacobians = 0
        self.n_factorizations = 0

    # ------------------------------------------------------------ setup
    @property
    def y(self):
        return self.D[0].copy()

    def _jacobian(self, y, tau):
        J = self.system.jacobian(y, tau)
        self.n_jacobians += 1
        self._J = sp.csc_matrix(J)
        self._J_version += 1
        self._J_current = True
        self._lu_key = None
        return self._J

    def consistent_initial_state(self, y0, tau=0.0, tol=1e-3):
        """Solve the algebraic equations for the algebraic unknowns, differential ones fixed."""
        alg = self.algebraic
        if not alg.any():
            return np.array(y0, dtype=float)
        y = np.array(y0, dtype=float)

        def residual(ya):
            y[alg] = ya
            return self.system.residual(y, tau)[alg]

        def jacobian(ya):
            y[alg] = ya
            return self.system.jacobian(y, tau)[alg][:, alg]

        result = newton_solve(residual, jacobian, y[alg], atol=self.ctl.atol * 1e-3,
                              rtol=self.ctl.rtol * 1e-3, tol=tol, max_iter=50,
                              check_residual=False, update_jacobian=True)
        y[alg] = result.y
        return y

    def initial_slope(self, y, tau=0.0):
        """``y'`` from ``M y' = f`` with the differentiated algebraic equations."""
        f = self.system.residual(y, tau)
        J = sp.csc_matrix(self.system.jacobian(y, tau))
        P = sp.diags(self.algebraic.astype(float))
        A = (self.mass + P @ J).tocsc()
        rhs = np.where(self.algebraic, 0.0, f)
        return splu(A).solve(rhs)

    def start(self, t0, y0, yp0=None, tau=None):
        """(Re)start at order 1 with step ``tau`` (default ``tau_init``)."""
        ctl = self.ctl
        y0 = np.asarray(y0, dtype=float)
        tau = ctl.tau_init if tau is None else tau
        if yp0 is None:
            yp0 = self.initial_slope(y0, tau)
        self.t = float(t0)
        self.D = np.zeros((MAX_ORDER + 3, self.n))
        self.D[0] = y0
        self.D[1] = tau * yp0
        ctl.tau = tau
        ctl.order = 1
        ctl.n_equal_steps = 0
        ctl.failures_at_min = 0
        self._J_current = False
        self._lu_key = None
        ctl.log("start", t=self.t, tau=tau)

    def initialize_history(self, t0, history, tau, order):
        """Start from equidistant past values ``history[j] = y(t0 - j tau)``."""
        history = np.atleast_2d(np.asarray(history, dtype=float))
        if history.shape[0] < order + 1:
            raise ValueError(f"order {order} needs {order + 1} past values")
        self.t = float(t0)
        self.D = np.zeros((MAX_ORDER + 3, history.shape[1]))
        diffs = history[:order + 1].copy()
        for j in range(order + 1):
            self.D[j] = diffs[0]
            diffs = diffs[:-1] - diffs[1:]
        self.ctl.tau = tau
        self.ctl.order = order
        self.ctl.n_equal_steps = 0
        self._J_current = False
        self._lu_key = None

    # ------------------------------------------------------------ stepping
    def _set_tau(self, tau):
        ctl = self.ctl
        if tau != ctl.tau:
            change_D(self.D, ctl.order, tau / ctl.tau)
            ctl.tau = tau
            ctl.n_equal_steps = 0

    def _solver(self, c):
        key = (c, self._J_version)
        if self._lu_key != key:
            self._lu = splu((c * self._J - self.mass).tocsc())
            self._lu_key = key
            self.n_factorizations += 1
        return self._lu.solve

    def ndf_step(self):
        """Attempt one step of size ``ctl.tau`` from ``self.t``.

        Returns ``(y_new, d, error_norm, newton_iters)``; raises
        :class:`NewtonFailure` if the corrector fails even with a fresh
        Jacobian.
        """
        ctl = self.ctl
        order, h = ctl.order, ctl.tau
        D = self.D
        y_pred = D[:order + 1].sum(axis=0)
        scale = ctl.atol + ctl.rtol * np.abs(y_pred)
        psi = D[1:order + 1].T @ ctl.gamma[1:order + 1] / ctl.alpha[order]
        c = h / ctl.alpha[order]
        mass = self.mass

        def residual(y):
            return c * self.system.residual(y, h) - mass @ (psi + y - y_pred)

        r0 = _safe_residual(residual, y_pred)
        if r0 is None:
            raise NewtonFailure("non-finite", 0, "residual at predictor")
        if self._J is None:
            self._jacobian(y_pred, h)
        iters = 0
        while True:
            try:
                result = newton_solve(residual, lambda _y: self._solver(c), y_pred,
                                      tol=ctl.newton_tol, scale=scale,
                                      max_iter=ctl.newton_max_iter if self._J_current else 4,
                                      residual0=r0, check_residual=False)
                break
            except NewtonFailure as exc:
                iters += exc.iterations
                if self._J_current:
                    exc.iterations = iters
                    raise
                self._jacobian(y_pred, h)
        iters += result.iterations
        y_new = result.y
        d = y_new - y_pred
        if ctl.fixed_step:
            return y_new, d, 0.0, iters
        scale_new = ctl.atol + ctl.rtol * np.abs(y_new)
        error_norm = rms_norm(ctl.error_const[order] * d / scale_new)
        return y_new, d, error_norm, iters

    def step_order_control(self, error_norm, failure=None, newton_iters=0):
        """Accept/reject decision and the next step size and order.

        Rejections (error norm above one or a Newton failure) halve the step
        at least and lower the order by one.  Three rejections at ``tau_min``
        abort.
        """
        ctl = self.ctl
        order, h = ctl.order, ctl.tau
        if failure is None and (ctl.fixed_step or error_norm <= 1.0):
            return Decision("accept", h, order)
        if ctl.fixed_step:
            return Decision("abort", h, order)
        if h <= ctl.tau_min * (1.0 + 1e-9):
            ctl.failures_at_min += 1
            if ctl.failures_at_min >= ctl.max_failures_at_min:
                return Decision("abort", h, order)
        if failure is not None:
            factor = REJECT_FACTOR
        else:
            safety = 0.9 * (2 * ctl.newton_max_iter + 1) / (2 * ctl.newton_max_iter + newton_iters)
            factor = min(REJECT_FACTOR, max(MIN_FACTOR, safety * error_norm ** (-1.0 / (order + 1))))
        new_order = order if ctl.fixed_order else max(1, order - 1)
        return Decision("retry", max(h * factor, ctl.tau_min), new_order)

    def _adapt_after_accept(self, d, error_norm, newton_iters):
        ctl = self.ctl
        order = ctl.order
        D = self.D
        D[order + 2] = d - D[order + 1]
        D[order + 1] = d
        for i in reversed(range(order + 1)):
            D[i] += D[i + 1]
        ctl.n_equal_steps += 1
        if ctl.fixed_step or ctl.n_equal_steps < order + 1:
            return
        y = D[0]
        scale = ctl.atol + ctl.rtol * np.abs(y)
        if ctl.fixed_order:
            candidates = [np.inf, error_norm, np.inf]
        else:
            err_m = rms_norm(ctl.error_const[order - 1] * D[order] / scale) if order > 1 else np.inf
            err_p = (rms_norm(ctl.error_const[order + 1] * D[order + 2] / scale)
                     if order < ctl.max_order else np.inf)
            candidates = [err_m, error_norm, err_p]
        with np.errstate(divide="ignore"):
            factors = np.asarray(candidates) ** (-1.0 / np.arange(order, order + 3))
        delta = int(np.argmax(factors)) - 1
        safety = 0.9 * (2 * ctl.newton_max_iter + 1) / (2 * ctl.newton_max_iter + newton_iters)
        factor = min(MAX_FACTOR, safety * float(np.max(factors)))
        new_tau = min(ctl.tau * factor, ctl.tau_max)
        if new_tau < ctl.tau:
            return
        ctl.order = order + delta
        change_D(D, ctl.order, new_tau / ctl.tau)
        ctl.tau = new_tau
        ctl.n_equal_steps = 0

    def step(self, t_bound=np.inf):
        """Take one accepted step, not passing ``t_bound``.

        Returns :class:`StepInfo` or :class:`AbortedRun`.
        """
        ctl = self.ctl
        if not t_bound > self.t:
            raise ValueError(f"t_bound={t_bound} must exceed t={self.t}")
        while True:
            remaining = t_bound - self.t
            tau = min(ctl.tau, ctl.tau_max)
            if not ctl.fixed_step and tau > remaining:
                tau = remaining
            self._set_tau(tau)
            failure = None
            try:
                y_new, d, error_norm, iters = self.ndf_step()
            except NewtonFailure as exc:
                failure, error_norm, iters = exc, np.inf, exc.iterations
            decision = self.step_order_control(error_norm, failure, iters)
            if decision.kind == "accept":
                break
            self.n_rejected += 1
            reason = failure.reason if failure is not None else "error"
            ctl.log("reject", t=self.t, tau=ctl.tau, order=ctl.order, reason=reason,
                    error_norm=None if failure is not None else error_norm)
            if decision.kind == "abort":
                diagnostics = {"tau": ctl.tau, "order": ctl.order, "reason": reason,
                               "newton_iters": iters,
                               "detail": getattr(failure, "detail", "")}
                ctl.log("abort", t=self.t, **diagnostics)
                return AbortedRun(self.t, self.y, diagnostics)
            if decision.order != ctl.order:
                ctl.order = decision.order
            self._set_tau(decision.tau)
            if failure is not None:
                self._J = None
        h = ctl.tau
        order = ctl.order
        commit_info = self.system.commit(y_new, h)
        self.t = self.t + h if remaining != h else t_bound
        self.n_accepted += 1
        ctl.failures_at_min = 0
        self._J_current = False
        self._adapt_after_accept(d, error_norm, iters)
        return StepInfo(self.t, y_new, h, order, iters, error_norm, commit_info)

    def advance_to(self, t_target, hook=None):
        """Integrate to exactly ``t_target``; ``hook(info)`` sees every accepted step."""
        if not t_target > self.t:
            raise ValueError(f"t_target={t_target} must exceed t={self.t}")
        while self.t < t_target:
            info = self.step(t_target)
            if isinstance(info, AbortedRun):
                return info
            if hook is not None:
                hook(info)
        return TrajectorySummary(self.t, self.y, self.n_accepted, self.n_rejected)
