"""Implicit time stepping of the heterogeneous wave equation in a coarse space.

The trial functions are continuous and piecewise linear in time, and the
velocity is the left limit at each step.  Substituting
``u_{n+1} = u_n + dt * w_{n+1}`` into the interval integral of the stiffness
term gives, per step,

    (M_H + dt^2 / 2 A_H) w_{n+1} = M_H w_n - dt A_H u_n + dt f_bar

with ``f_bar`` the time-averaged coarse load.
"""
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import InvalidArgument
from .homog import CoarseSystem, assemble_coarse, spd_solver

__all__ = ['WaveState', 'WaveRun', 'wave_init', 'wave_step', 'step_operator',
           'wave_trajectory', 'wave_run', 'fine_system', 'step_count',
           'initial_velocity']


def initial_velocity(x1, x2):
    return np.sin(2 * np.pi * x1) * np.sin(2 * np.pi * x2)


@dataclass
class WaveState:
    u: np.ndarray
    w: np.ndarray
    t: float = 0.0


@dataclass(eq=False)
class WaveRun:
    dt: float
    T: float
    steps: int
    times: np.ndarray
    states: list
    rel_error: float = float('nan')
    abs_error: float = float('nan')
    rel_error_at_t: np.ndarray = None
    energy: np.ndarray = None
    reference_energy: np.ndarray = None
    extra: dict = field(default_factory=dict)


def step_count(dt, T):
    """Integer number of steps ``M`` with ``M * dt == T`` up to round-off."""
    if dt <= 0 or T <= 0:
        raise InvalidArgument('dt and T must be positive')
    M = int(round(T / dt))
    if M < 1 or abs(M * dt - T) > 1e-9 * T:
        raise InvalidArgument(f'T = {T} is not an integer multiple of dt = {dt}')
    return M


def _mul(K, x):
    return K @ x


def _project(sys, M_fine, fn, h):
    if fn is None:
        return np.zeros(sys.N)
    vals = h.interpolate(fn)
    rhs = sys.basis @ (M_fine @ vals)
    return spd_solver(sys.M_H).solve(rhs)


def wave_init(u0, v0, sys, M_fine, h):
    """Coarse L2 projections of the initial displacement and velocity."""
    return WaveState(_project(sys, M_fine, u0, h), _project(sys, M_fine, v0, h), 0.0)


def step_operator(sys, dt):
    """Factorised ``M_H + dt^2 / 2 A_H``."""
    return spd_solver(sys.M_H + 0.5 * dt * dt * sys.A_H)


def wave_step(state, sys, dt, f=None, solver=None):
    """One implicit step.  ``f`` is a time-averaged coarse load vector, a
    callable ``f(t0, t1)`` returning one, or None for a free wave."""
    if dt <= 0:
        raise InvalidArgument(f'dt must be positive, got {dt}')
    solver = solver or step_operator(sys, dt)
    rhs = _mul(sys.M_H, state.w) - dt * _mul(sys.A_H, state.u)
    if f is not None:
        fbar = f(state.t, state.t + dt) if callable(f) else np.asarray(f, dtype=float)
        rhs = rhs + dt * fbar
    w = solver.solve(rhs)
    u = state.u + dt * w
    return WaveState(u, w, state.t + dt)


def discrete_energy(sys, state):
    return 0.5 * state.w @ _mul(sys.M_H, state.w) + 0.5 * state.u @ _mul(sys.A_H, state.u)


def wave_trajectory(state, sys, dt, T, f=None):
    M = step_count(dt, T)
    dt = T / M
    solver = step_operator(sys, dt)
    states = [state]
    for n in range(M):
        s = wave_step(states[-1], sys, dt, f, solver)
        s.t = (n + 1) * dt
        states.append(s)
    return states


def fine_system(op):
    """Coarse-system view of the full fine space (identity basis)."""
    n = op.n
    return CoarseSystem(op.A.full, op.M.full, np.zeros(n), sp.identity(n, format='csr'))


def _trapezoid(y, t):
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(t)))


def wave_run(sys, op, h, dt=1 / 200, T=1.0, u0=None, v0=initial_velocity, f=None,
             reference=None):
    """Coarse run plus fine reference run with the same scheme.

    ``reference`` may carry a previously computed fine :class:`WaveRun` for
    the same mesh and data.  The space-time error uses the H^1_0 seminorm and
    the trapezoid rule over the step endpoints.
    """
    M = step_count(dt, T)
    dt = T / M
    if reference is None:
        fsys = fine_system(op)
        fstate = wave_init(u0, v0, fsys, op.M.full, h)
        fstates = wave_trajectory(fstate, fsys, dt, T)
        reference = WaveRun(dt, T, M, np.array([s.t for s in fstates]), fstates)
        reference.energy = np.array([discrete_energy(fsys, s) for s in fstates])
    state = wave_init(u0, v0, sys, op.M.full, h)
    states = wave_trajectory(state, sys, dt, T, f)
    times = np.array([s.t for s in states])

    A1 = op.A1.full
    err2 = np.empty(M + 1)
    ref2 = np.empty(M + 1)
    for n, (s, r) in enumerate(zip(states, reference.states)):
        e = r.u - sys.expand(s.u)
        err2[n] = e @ (A1 @ e)
        ref2[n] = r.u @ (A1 @ r.u)
    abs_err = math.sqrt(max(_trapezoid(err2, times), 0.0))
    ref_norm = math.sqrt(max(_trapezoid(ref2, times), 0.0))
    with np.errstate(divide='ignore', invalid='ignore'):
        at_t = np.where(ref2 > 0, np.sqrt(err2 / ref2), 0.0)
    run = WaveRun(dt, T, M, times, states,
                  rel_error=abs_err / ref_norm if ref_norm > 0 else 0.0,
                  abs_error=abs_err, rel_error_at_t=at_t,
                  energy=np.array([discrete_energy(sys, s) for s in states]),
                  reference_energy=reference.energy)
    run.extra['reference'] = reference
    return run


def coarse_wave_system(op, basis):
    """Coarse stiffness and mass for the wave problem."""
    return assemble_coarse(op.A, op.M, None, basis)
