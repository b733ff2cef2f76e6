"""Steppers built from discretization maps, plus the linear-control toolbox.

The generic first-order stepper solves, for a step of size h along a
field X, the implicit relation "map-inverse of the step pair equals h
times X at the recovered base point".  The second-order stepper does the
same on a tangent-lifted map, with the control sampled at the recovered
base state, which is what makes the feedback-linearizable closed loop
conjugate to a linear one-step update.

The toolbox side carries single-input pole placement, the Cayley
one-step map for linear closed loops, the closed-loop stepper on the
rotation group, a reference integrator, and the order-study harness.
"""

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .discretization import DiscretizationMap, lift_by_diffeo, tangent_lift
from .errors import (
    DimensionMismatch,
    MultiInputUnsupported,
    NoConvergence,
    NotLinearityPreserving,
    SingularStep,
    StepUnderflow,
    Uncontrollable,
)
from .geometry import CoordState, Rotation, float_array, so3_exp, so3_log
from .mechanics import (
    LinearMechanicalSystem,
    MechanicalSystem,
    SystemBundle,
    apply_feedback,
    sode_field_stacked,
)

NEWTON_TOL = 1e-12
NEWTON_MAX_ITER = 50


@dataclass
class StepResult:
    """State after one implicit step plus solver diagnostics."""

    state: np.ndarray
    iterations: int
    residual: float


@dataclass
class Trajectory:
    """Uniform-grid trajectory with recorded controls."""

    t: np.ndarray
    states: np.ndarray
    u: np.ndarray | None = None
    utilde: np.ndarray | None = None

    def __post_init__(self):
        self.t = np.asarray(self.t, float)
        self.states = np.asarray(self.states, float)
        dt = np.diff(self.t)
        if self.t.size > 1 and not (np.all(dt > 0)
                                    and np.allclose(dt, dt[0], rtol=1e-9, atol=0)):
            raise ValueError("time grid must be uniform and strictly increasing")
        if self.states.shape[0] != self.t.size:
            raise DimensionMismatch("one state row per grid point required")


def _component_scaled_jacobian(residual, q, fd_step):
    """Central-difference Jacobian with per-component relative steps."""
    cols = []
    for j in range(q.size):
        e = np.zeros_like(q)
        e[j] = fd_step * (1.0 + abs(q[j]))
        cols.append((residual(q + e) - residual(q - e)) / (2.0 * e[j]))
    return np.column_stack(cols)


def _damped_newton(residual, guess, scale=1.0, tol=NEWTON_TOL,
                   max_iter=NEWTON_MAX_ITER, fd_step=1e-7):
    """Damped Newton iteration with a polish phase.

    Iterates until the residual drops below ``tol * scale``, then keeps
    going while full steps still reduce it, returning the best iterate
    seen.  That polish costs a couple of extra evaluations and buys the
    last few digits, which the conjugacy checks need.
    """
    q = np.asarray(guess, float)
    r = residual(q)
    best_q, best_norm = q.copy(), float(np.linalg.norm(r))
    converged = best_norm < tol * scale
    for it in range(1, max_iter + 1):
        jac = _component_scaled_jacobian(residual, q, fd_step)
        try:
            dq = np.linalg.solve(jac, r)
        except np.linalg.LinAlgError:
            break
        # once converged, deep damping searches cannot pay for themselves
        lam_floor = 0.2 if converged else 1e-8
        lam, accepted = 1.0, False
        while lam > lam_floor:
            q_try = q - lam * dq
            r_try = residual(q_try)
            norm_try = float(np.linalg.norm(r_try))
            if norm_try < best_norm:
                q, r = q_try, r_try
                best_q, best_norm = q.copy(), norm_try
                accepted = True
                break
            lam /= 2.0
        if not accepted:
            break
        if best_norm < tol * scale:
            converged = True
        if best_norm == 0.0:
            break
    if not converged:
        raise NoConvergence(it, best_norm)
    return best_q, it, best_norm


def step_first_order(dmap: DiscretizationMap, x_field, x_k, h) -> StepResult:
    """One step of the scheme a map induces on a first-order field.

    Solves for ``x_next`` such that, with (z, v) the map inverse of
    (x_k, x_next), v = h * X(z).  The forward-Euler map yields the
    explicit update in closed form; other maps go through damped Newton
    seeded with the explicit predictor.
    """
    x_k = np.asarray(x_k, float)
    if h <= 0:
        raise ValueError("step size must be positive")
    fx = np.asarray(x_field(x_k), float)
    if dmap.kind == "explicit-euler":
        return StepResult(x_k + h * fx, 0, 0.0)

    def residual(x_next):
        z, v = dmap.inverse(x_k, x_next)
        return v - h * np.asarray(x_field(z), float)

    guess = x_k + h * fx
    scale = 1.0 + max(float(np.abs(x_k).max()), float(np.abs(guess).max()))
    state, iters, res = _damped_newton(residual, guess, scale=scale)
    return StepResult(state, iters, res)


def step_sode(lifted_map: DiscretizationMap, sys: MechanicalSystem,
              u_supplier, s_k, h) -> StepResult:
    """One step of the second-order scheme on the tangent chart.

    ``lifted_map`` acts on the packed 2n chart; ``u_supplier`` is called
    with the recovered base state (xbar, ybar) and must return the
    m-vector control applied over the step.
    """
    if isinstance(s_k, CoordState):
        s_k = s_k.stacked()
    s_k = np.asarray(s_k, float)
    n = sys.n
    if s_k.size != 2 * n or lifted_map.dim != 2 * n:
        raise DimensionMismatch("state/map dimensions do not match the system")
    if h <= 0:
        raise ValueError("step size must be positive")

    def field(base):
        u = np.atleast_1d(float_array(u_supplier(base[:n], base[n:])))
        return sode_field_stacked(sys, base, u)

    def residual(s_next):
        z, v = lifted_map.inverse(s_k, s_next)
        return v - h * field(z)

    guess = s_k + h * field(s_k)
    scale = 1.0 + max(float(np.abs(s_k).max()), float(np.abs(guess).max()))
    state, iters, res = _damped_newton(residual, guess, scale=scale)
    state, res = _refine_step(residual, s_k, state, h, field, lifted_map, res)
    return StepResult(state, iters, res)


def _refine_step(residual, s_k, state, h, field, lifted_map, res):
    """Iterative refinement with an extended-precision residual.

    Double-precision Newton stalls when the residual's rounding floor is
    reached; two refinement sweeps against a longdouble residual recover
    the remaining digits, which the step-conjugacy guarantees need.  On
    platforms where longdouble is float64 this is a harmless no-op pass.
    """
    try:
        jac = _component_scaled_jacobian(residual, state, 1e-7)
        s_k_ld = s_k.astype(np.longdouble)
        q = state.astype(np.longdouble)
        best_q, best_norm = q, res
        for _ in range(2):
            z, v = lifted_map.inverse(s_k_ld, q)
            r = v - np.longdouble(h) * field(z)
            norm = float(np.linalg.norm(r.astype(float)))
            if norm < best_norm:
                best_q, best_norm = q, norm
            try:
                dq = np.linalg.solve(jac, r.astype(float))
            except np.linalg.LinAlgError:
                break
            q = q - dq.astype(np.longdouble)
        z, v = lifted_map.inverse(s_k_ld, q)
        norm = float(np.linalg.norm((v - np.longdouble(h) * field(z)).astype(float)))
        if norm < best_norm:
            best_q, best_norm = q, norm
        return best_q.astype(float), best_norm
    except TypeError:
        # user-supplied maps need not accept extended-precision inputs
        return state, res


def fl_discretize(bundle: SystemBundle, base_map: DiscretizationMap, s0, h, steps,
                  gains=None, utilde=None) -> Trajectory:
    """Feedback-linearizable discretization of a mechanical system.

    Builds the tangent lift of the diffeomorphism-lifted base map and
    steps the system's second-order field with the physical control
    evaluated at the recovered base state.  Either closed-loop ``gains``
    (utilde = -K ztilde at the base state) or an open-loop ``utilde``
    sequence must be given.

    The defining property, used by the tests: pushing each step through
    the tangent-lifted chart change reproduces, step by step, the linear
    one-step update the base map induces on the linear target system.
    """
    if (gains is None) == (utilde is None):
        raise ValueError("provide exactly one of gains / utilde sequence")
    sys, transform, linear = bundle.system, bundle.transform, bundle.linear
    lifted = tangent_lift(lift_by_diffeo(base_map, transform.phi))

    if isinstance(s0, CoordState):
        s0 = s0.stacked()
    s0 = np.asarray(s0, float)
    n, m = sys.n, sys.m

    if gains is not None:
        K = np.atleast_2d(np.asarray(gains, float))
    else:
        utilde = np.atleast_2d(np.asarray(utilde, float).reshape(steps, m))

    def utilde_at(k, x, y):
        if gains is not None:
            return np.atleast_1d(-K @ transform.push_state(x, y))
        return utilde[k]

    states = np.empty((steps + 1, 2 * n))
    states[0] = s0
    u_log = np.empty((steps, m))
    ut_log = np.empty((steps, m))

    for k in range(steps):
        def supplier(x, y, k=k):
            return apply_feedback(transform, x, y, utilde_at(k, x, y))

        result = step_sode(lifted, sys, supplier, states[k], h)
        states[k + 1] = result.state
        # log the controls at the converged base state of the step
        base, _ = lifted.inverse(states[k], states[k + 1])
        xb, yb = base[:n], base[n:]
        ut_log[k] = utilde_at(k, xb, yb)
        u_log[k] = apply_feedback(transform, xb, yb, ut_log[k])

    t = h * np.arange(steps + 1)
    return Trajectory(t, states, u_log, ut_log)


def linear_one_step(lms: LinearMechanicalSystem, dmap: DiscretizationMap, h,
                    gains=None):
    """Matrices (M, N) of the one-step update z+ = M z + N utilde.

    The update is the second-order scheme of ``dmap`` applied to the
    (optionally closed-loop) linear system, recovered column by column;
    probing verifies it is affine and raises ``NotLinearityPreserving``
    otherwise.
    """
    n, m = lms.n, lms.m
    sys = lms.as_mechanical_system()
    lifted = tangent_lift(dmap)

    if gains is not None:
        K = np.atleast_2d(np.asarray(gains, float))

    def advance(z, ut):
        def supplier(x, y):
            base = np.concatenate([x, y])
            if gains is not None:
                return ut - K @ base
            return ut

        return step_sode(lifted, sys, supplier, z, h).state

    zero = advance(np.zeros(2 * n), np.zeros(m))
    M = np.column_stack([advance(e, np.zeros(m)) - zero for e in np.eye(2 * n)])
    N = np.column_stack([advance(np.zeros(2 * n), e) - zero for e in np.eye(m)])

    rng = np.random.default_rng(7)
    for _ in range(3):
        z = rng.normal(size=2 * n)
        ut = rng.normal(size=m)
        lin = M @ z + N @ ut + zero
        defect = np.abs(advance(z, ut) - lin).max()
        if defect > 1e-8 * (1.0 + np.abs(lin).max()):
            raise NotLinearityPreserving(
                f"one-step update deviates from affine by {defect:.3e}"
            )
    return M, N, zero


@dataclass
class TwoStepRecurrence:
    """Position-only recurrence x+2 = A2 x_k + B2 x_{k+1} + P0 u_k + P1 u_{k+1}."""

    A2: np.ndarray
    B2: np.ndarray
    P0: np.ndarray
    P1: np.ndarray

    def iterate(self, x0, x1, u_seq):
        """Run the recurrence; returns positions including the two seeds."""
        u_seq = np.atleast_2d(np.asarray(u_seq, float))
        out = [np.asarray(x0, float), np.asarray(x1, float)]
        for k in range(len(u_seq) - 1):
            out.append(self.A2 @ out[k] + self.B2 @ out[k + 1]
                       + self.P0 @ u_seq[k] + self.P1 @ u_seq[k + 1])
        return np.array(out)


def linear_two_step(lms: LinearMechanicalSystem, dmap: DiscretizationMap,
                    h) -> TwoStepRecurrence:
    """Eliminate the velocity from the one-step linear update.

    With the one-step blocks z+ = [[M11, M12], [M21, M22]] z + [N1; N2] u,
    solving the first row for the velocity yields the two-step position
    recurrence; the returned coefficients reproduce the one-step
    simulation exactly.
    """
    n = lms.n
    M, N, _ = linear_one_step(lms, dmap, h)
    M11, M12 = M[:n, :n], M[:n, n:]
    M21, M22 = M[n:, :n], M[n:, n:]
    N1, N2 = N[:n], N[n:]
    try:
        M12_inv = np.linalg.inv(M12)
    except np.linalg.LinAlgError as exc:
        raise SingularStep("velocity block of the one-step update is singular") from exc
    B2 = M11 + M12 @ M22 @ M12_inv
    A2 = M12 @ M21 - M12 @ M22 @ M12_inv @ M11
    P0 = M12 @ N2 - M12 @ M22 @ M12_inv @ N1
    P1 = N1
    return TwoStepRecurrence(A2, B2, P0, P1)


def pole_place(lms: LinearMechanicalSystem, poles) -> np.ndarray:
    """Single-input state feedback by Ackermann's formula.

    Places the eigenvalues of the stacked closed-loop matrix A - B K at
    ``poles``; the result is validated against an eigensolver to 1e-6
    relative.
    """
    if lms.m != 1:
        raise MultiInputUnsupported("pole placement implemented for m = 1 only")
    poles = np.atleast_1d(np.asarray(poles, complex))
    A, B = lms.stacked()
    dim = A.shape[0]
    if poles.size != dim:
        raise DimensionMismatch(f"need {dim} poles, got {poles.size}")
    if not np.allclose(np.sort_complex(poles), np.sort_complex(poles.conj())):
        raise ValueError("pole set must be closed under conjugation")

    ctrb = np.column_stack([np.linalg.matrix_power(A, i) @ B for i in range(dim)])
    sv = np.linalg.svd(ctrb, compute_uv=False)
    if sv[0] == 0.0 or sv[-1] < 1e-12 * sv[0]:
        ratio = 0.0 if sv[0] == 0.0 else sv[-1] / sv[0]
        raise Uncontrollable(f"controllability matrix near-singular (ratio {ratio:.1e})")

    coeffs = np.real(np.poly(poles))
    pa = np.zeros_like(A)
    for c in coeffs:
        pa = pa @ A + c * np.eye(dim)
    last_row = np.zeros(dim)
    last_row[-1] = 1.0
    try:
        K = (np.linalg.solve(ctrb.T, last_row) @ pa)[None, :]
    except np.linalg.LinAlgError as exc:
        raise Uncontrollable("controllability matrix is singular") from exc

    achieved = np.linalg.eigvals(A - B @ K)
    want = np.sort_complex(poles)
    got = np.sort_complex(achieved)
    if np.abs(got - want).max() > 1e-6 * max(1.0, np.abs(want).max()):
        raise Uncontrollable("placed eigenvalues failed validation")
    return K


def cayley_step(a_cl, x_k, h) -> np.ndarray:
    """One Cayley step x+ = (I - h/2 A)^-1 (I + h/2 A) x_k."""
    a_cl = np.atleast_2d(np.asarray(a_cl, float))
    x_k = np.asarray(x_k, float)
    hp = h / 2.0
    lhs = np.eye(a_cl.shape[0]) - hp * a_cl
    try:
        out = np.linalg.solve(lhs, x_k + hp * (a_cl @ x_k))
    except np.linalg.LinAlgError as exc:
        raise SingularStep("resolvent I - h/2 A is singular") from exc
    if not np.all(np.isfinite(out)):
        raise SingularStep("resolvent solve produced non-finite values")
    return out


def cayley_matrix(a_cl, h) -> np.ndarray:
    """The full one-step matrix of :func:`cayley_step`."""
    a_cl = np.atleast_2d(np.asarray(a_cl, float))
    hp = h / 2.0
    eye = np.eye(a_cl.shape[0])
    try:
        return np.linalg.solve(eye - hp * a_cl, eye + hp * a_cl)
    except np.linalg.LinAlgError as exc:
        raise SingularStep("resolvent I - h/2 A is singular") from exc


def so3_closed_loop_step(rotation, omega, k1, k2, h):
    """Proportional-derivative attitude step on the rotation group.

    R+ = R exp(h hat(Omega)); Omega+ = Omega - h K1 log(R) - h K2 Omega.
    The rotation update is a group product, so orthogonality is
    preserved to roundoff regardless of step size.
    """
    R = rotation if isinstance(rotation, Rotation) else Rotation(np.asarray(rotation, float))
    omega = np.asarray(omega, float)
    k1 = np.asarray(k1, float) * np.eye(3) if np.ndim(k1) == 0 else np.asarray(k1, float)
    k2 = np.asarray(k2, float) * np.eye(3) if np.ndim(k2) == 0 else np.asarray(k2, float)
    xi = so3_log(R)
    r_next = Rotation(R.r @ so3_exp(h * omega).r)
    omega_next = omega - h * (k1 @ xi) - h * (k2 @ omega)
    return r_next, omega_next


def reference_integrate(x_field, s0, t_final, tol, t_eval=None) -> Trajectory:
    """High-order adaptive reference solution sampled on a uniform grid.

    Wraps an embedded Runge-Kutta 5(4) pair with dense output; ``tol``
    controls both relative and absolute local error and must lie in
    [1e-12, 1e-6].
    """
    if not (1e-12 <= tol <= 1e-6):
        raise ValueError("tol must lie in [1e-12, 1e-6]")
    s0 = np.asarray(s0, float)
    if t_eval is None:
        t_eval = np.linspace(0.0, t_final, 101)
    t_eval = np.asarray(t_eval, float)
    sol = solve_ivp(lambda t, y: np.asarray(x_field(y), float), (0.0, t_final), s0,
                    method="RK45", rtol=tol, atol=tol, t_eval=t_eval,
                    dense_output=False)
    if not sol.success:
        if "step size" in sol.message.lower():
            raise StepUnderflow(sol.message)
        raise NoConvergence(0, np.nan, sol.message)
    return Trajectory(sol.t, sol.y.T)


@dataclass
class OrderStudy:
    """Log-log fit of global error against step size."""

    h: np.ndarray
    errors: np.ndarray
    slope: float | None
    fit_residual: float | None
    floored: bool
    floor: float = 1e-10

    def __repr__(self):
        if self.slope is None:
            return f"OrderStudy(no fit, errors {self.errors})"
        tag = " [floor]" if self.floored else ""
        return f"OrderStudy(slope {self.slope:.3f}{tag})"


def order_study(stepper, reference_state, s0, t_final, h_list,
                floor=1e-10) -> OrderStudy:
    """Estimate the global convergence order of a stepper.

    ``stepper(s0, h, steps)`` must return the state at t_final = h * steps;
    ``reference_state`` is the accurate terminal state the errors are
    measured against.  Errors at or below ``floor`` flag the fit as
    floored (self-comparison / interpolation noise).
    """
    h_list = np.asarray(h_list, float)
    reference_state = np.asarray(reference_state, float)
    errors = []
    for h in h_list:
        steps = int(round(t_final / h))
        if abs(steps * h - t_final) > 1e-9 * t_final:
            raise ValueError(f"t_final is not an integer multiple of h = {h}")
        final = np.asarray(stepper(s0, h, steps), float)
        errors.append(float(np.linalg.norm(final - reference_state)))
    errors = np.asarray(errors)

    floored = bool(np.max(errors) < floor)
    if h_list.size < 2 or np.any(errors == 0.0) or floored:
        return OrderStudy(h_list, errors, None, None, floored, floor)
    logs_h, logs_e = np.log(h_list), np.log(errors)
    slope, intercept = np.polyfit(logs_h, logs_e, 1)
    resid = float(np.sqrt(np.mean((logs_e - (slope * logs_h + intercept)) ** 2)))
    return OrderStudy(h_list, errors, float(slope), resid, floored, floor)
