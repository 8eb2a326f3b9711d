r"""

Time integrators: the coarse propagator G (forward Euler) and the fine propagator F (classical Runge-Kutta-4)

AUTHORS:

- The parastencil developers

"""

# ****************************************************************************
#       Copyright (C) 2026 The parastencil developers
#
# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 2 of the License, or
# (at your option) any later version.
#                  https://www.gnu.org/licenses/
# ****************************************************************************

import time

from .grid import Field3, lincomb
from .problem import initial_condition
from .stencils import StencilCoeffs, rhs_coarse, rhs_fine

propagator_kinds = ('coarse_euler', 'fine_rk4')


class SliceInterval(object):
    r"""
    A time slice [t_start, t_end] traversed in ``n_steps`` equal steps.

    EXAMPLES::

        >>> from parastencil.integrators import SliceInterval
        >>> iv = SliceInterval(0.0, 0.1, 4)
        >>> iv
        Time slice [0.0, 0.1] in 4 steps
        >>> iv.step() == 0.1 / 4
        True
        >>> SliceInterval(0.1, 0.1, 4)
        Traceback (most recent call last):
        ...
        ValueError: Empty time slice
    """

    def __init__(self, t_start, t_end, n_steps):
        n_steps = int(n_steps)
        if not t_end > t_start:
            raise ValueError('Empty time slice')
        if n_steps < 1:
            raise ValueError('A time slice needs at least one step')
        self.__t_start = float(t_start)
        self.__t_end = float(t_end)
        self.__n_steps = n_steps

    def __repr__(self):
        return 'Time slice [%s, %s] in %d steps' % (self.__t_start, self.__t_end, self.__n_steps)

    def t_start(self):
        return self.__t_start

    def t_end(self):
        return self.__t_end

    def n_steps(self):
        return self.__n_steps

    def step(self):
        return (self.__t_end - self.__t_start) / self.__n_steps

    def time(self, j):
        r"""
        Start time of step j.
        """
        return self.__t_start + j * self.step()


class Propagator(object):
    r"""
    A coarse or fine propagator for a ProblemSpec.

    A Propagator owns its scratch fields (no allocation per step) and runs its stencil sweeps on
    ``threads`` numba threads. It is meant to be used by one worker at a time; ``close()`` releases the
    scratch fields.

    INPUT:

    - ``kind`` -- 'coarse_euler' (forward Euler, upwind + 7-point stencils) or 'fine_rk4'
      (classical Runge-Kutta-4, fourth order centered stencils)

    - ``problem`` -- a ProblemSpec

    - ``threads`` -- (default 1) number of threads for the stencil sweeps

    - ``verbose`` -- (default False) if True then report a possibly unstable step size

    EXAMPLES::

        >>> from parastencil.grid import Field3
        >>> from parastencil.integrators import Propagator, SliceInterval
        >>> from parastencil.problem import ProblemSpec
        >>> with Propagator('fine_rk4', ProblemSpec(8)) as F:
        ...     F
        Runge-Kutta-4 propagator with 4th order stencils on 8^3 points
        >>> Propagator('backward_euler', ProblemSpec(8))
        Traceback (most recent call last):
        ...
        ValueError: Unknown propagator 'backward_euler'
        >>> G = Propagator('coarse_euler', ProblemSpec(8))
        >>> G.close()
        >>> G.propagate(Field3(G.problem().grid()), SliceInterval(0.0, 0.1, 1))
        Traceback (most recent call last):
        ...
        ValueError: The propagator is closed
    """

    def __init__(self, kind, problem, threads=1, verbose=False):
        if kind not in propagator_kinds:
            raise ValueError('Unknown propagator %r' % kind)
        threads = int(threads)
        if threads < 1:
            raise ValueError('The number of threads must be positive')
        grid = problem.grid()
        self.__kind = kind
        self.__problem = problem
        self.__threads = threads
        if kind == 'coarse_euler':
            self.__rhs = rhs_coarse
            self.__scratch = [Field3(grid)]
        else:
            self.__rhs = rhs_fine
            self.__scratch = [Field3(grid) for _ in range(5)]
        self.__steps = 0
        self.__seconds = 0.0
        if verbose and self.cfl_number() > 1:
            print('Warning: the %s step size exceeds the explicit stability estimate (CFL number %.3f).' % (kind, self.cfl_number()))

    def __repr__(self):
        n = self.__problem.grid().nx()
        if self.__kind == 'coarse_euler':
            return 'Forward Euler propagator with upwind/2nd order stencils on %d^3 points' % n
        return 'Runge-Kutta-4 propagator with 4th order stencils on %d^3 points' % n

    def __enter__(self):
        return self

    def __exit__(self, *args):
        self.close()

    def close(self):
        self.__scratch = None

    def kind(self):
        return self.__kind

    def problem(self):
        return self.__problem

    def threads(self):
        return self.__threads

    def step_size(self):
        if self.__kind == 'coarse_euler':
            return self.__problem.dt_coarse()
        return self.__problem.dt_fine()

    def cfl_number(self):
        r"""
        The estimate dt (|c|_1 / dx + 6 nu_max / dx^2) for the step size of this propagator.
        """
        p = self.__problem
        dx = p.grid().dx()
        return self.step_size() * (sum(abs(x) for x in p.c()) / dx + 6.0 * p.nu_max() / (dx * dx))

    ## timing

    def steps_taken(self):
        return self.__steps

    def seconds(self):
        return self.__seconds

    def seconds_per_step(self):
        r"""
        Mean wall time per step over all calls of ``propagate`` so far.
        """
        if not self.__steps:
            raise ValueError('No steps have been taken yet')
        return self.__seconds / self.__steps

    def reset_timing(self):
        self.__steps = 0
        self.__seconds = 0.0

    ## stepping

    def _coeffs(self, t):
        p = self.__problem
        return StencilCoeffs(p.c(), p.nu(t), p.grid().dx())

    def _rhs(self, u, t, out):
        return self.__rhs(u, self._coeffs(t), out=out, threads=self.__threads)

    def _lincomb(self, out, coefficients, fields):
        return lincomb(out, coefficients, fields, threads=self.__threads)

    def _euler_step(self, u, t, h):
        r = self._rhs(u, t, self.__scratch[0])
        self._lincomb(u, (1.0, h), (u, r))

    def _rk4_step(self, u, t, h):
        k1, k2, k3, k4, tmp = self.__scratch
        half = 0.5 * h
        self._rhs(u, t, k1)
        self._lincomb(tmp, (1.0, half), (u, k1))
        self._rhs(tmp, t + half, k2)
        self._lincomb(tmp, (1.0, half), (u, k2))
        self._rhs(tmp, t + half, k3)
        self._lincomb(tmp, (1.0, h), (u, k3))
        self._rhs(tmp, t + h, k4)
        self._lincomb(u, (1.0, h / 6.0, h / 3.0, h / 3.0, h / 6.0), (u, k1, k2, k3, k4))

    def propagate(self, u, interval):
        r"""
        Advance ``u`` across ``interval``; the input field is not modified.

        nu(t) is sampled at the start of each Euler step, and at the stage times t, t + h/2, t + h/2, t + h
        of each Runge-Kutta step.

        INPUT:

        - ``u`` -- a Field3 on the problem's grid

        - ``interval`` -- a SliceInterval

        OUTPUT: a new Field3
        """
        if self.__scratch is None:
            raise ValueError('The propagator is closed')
        if u.spec() != self.__problem.grid():
            raise ValueError('Incompatible grids')
        step = self._euler_step if self.__kind == 'coarse_euler' else self._rk4_step
        u = u.copy()
        h = interval.step()
        start = time.perf_counter()
        for j in range(interval.n_steps()):
            step(u, interval.time(j), h)
        self.__seconds += time.perf_counter() - start
        self.__steps += interval.n_steps()
        return u.halo_exchange()


def propagate_coarse(u, iv, p, threads=1):
    r"""
    Coarse propagator G: ``iv.n_steps()`` forward Euler steps with the fused upwind/Laplacian right-hand side.

    EXAMPLES::

        >>> import math
        >>> from parastencil.grid import Field3, field_from_interior, mean, random_field, shift_field
        >>> from parastencil.integrators import SliceInterval, propagate_coarse
        >>> from parastencil.problem import ProblemSpec
        >>> p = ProblemSpec(8, omega=100, T=0.1, n_fine=64, n_coarse=8)
        >>> g, iv = p.grid(), SliceInterval(0.0, 0.1, 8)
        >>> propagate_coarse(Field3(g), iv, p).inf_norm()
        0.0
        >>> propagate_coarse(field_from_interior(g, 2.5), iv, p) == field_from_interior(g, 2.5)
        True

    A single step on a unit spike, with dt nu / dx^2 = 0.1::

        >>> q = ProblemSpec(8, c=(0, 0, 0), nu0=0.1, T=1 / 64, n_fine=1, n_coarse=1)
        >>> u = Field3(q.grid())
        >>> u[4, 4, 4] = 1.0
        >>> v = propagate_coarse(u, SliceInterval(0.0, 1 / 64, 1), q)
        >>> abs(v[4, 4, 4] - 0.4) < 1e-15, abs(v[5, 4, 4] - 0.1) < 1e-15, u[4, 4, 4]
        (True, True, 1.0)

    Each step conserves the mean::

        >>> u = random_field(g, seed=9)
        >>> abs(mean(propagate_coarse(u, SliceInterval(0.0, 0.0125, 1), p)) - mean(u)) < 1e-13 * abs(mean(u))
        True

    Linearity and translation equivariance::

        >>> v = random_field(g, seed=13)
        >>> lhs = propagate_coarse(3.0 * u - v, iv, p)
        >>> (lhs - (3.0 * propagate_coarse(u, iv, p) - propagate_coarse(v, iv, p))).inf_norm() < 1e-12 * lhs.inf_norm()
        True
        >>> shift_field(propagate_coarse(shift_field(u, 0, 2, -1), iv, p), 0, -2, 1) == propagate_coarse(u, iv, p)
        True

    First order in time, measured against the exact time factor of the semi-discrete problem::

        >>> from parastencil.problem import initial_condition, semidiscrete_amplitude
        >>> q = ProblemSpec(8, c=(0, 0, 0), omega=100, n_coarse=64, n_fine=128)
        >>> def error(n):
        ...     v = propagate_coarse(initial_condition(q.grid()), SliceInterval(0.0, 0.1, n), q)
        ...     a = semidiscrete_amplitude(0.1, q, 'coarse')
        ...     return (v - a * initial_condition(q.grid())).inf_norm() / a
        >>> 0.8 <= math.log2(error(64) / error(128)) <= 1.2
        True

    With advection on, the step-halving differences shrink at the same rate::

        >>> q = ProblemSpec(8, omega=100)
        >>> def difference(n):
        ...     u0 = initial_condition(q.grid())
        ...     return (propagate_coarse(u0, SliceInterval(0.0, 0.1, n), q) - propagate_coarse(u0, SliceInterval(0.0, 0.1, 2 * n), q)).inf_norm()
        >>> 0.8 <= math.log2(difference(64) / difference(128)) <= 1.2
        True
    """
    with Propagator('coarse_euler', p, threads=threads) as G:
        return G.propagate(u, iv)


def propagate_fine(u, iv, p, threads=1):
    r"""
    Fine propagator F: ``iv.n_steps()`` classical Runge-Kutta-4 steps with fourth order stencils.

    EXAMPLES::

        >>> import math
        >>> from parastencil.grid import Field3, field_from_interior, mean, random_field, shift_field
        >>> from parastencil.integrators import SliceInterval, propagate_fine
        >>> from parastencil.problem import ProblemSpec
        >>> p = ProblemSpec(8, omega=100, T=0.1, n_fine=64, n_coarse=8)
        >>> g, iv = p.grid(), SliceInterval(0.0, 0.025, 16)
        >>> propagate_fine(Field3(g), iv, p).inf_norm()
        0.0
        >>> propagate_fine(field_from_interior(g, 2.5), iv, p) == field_from_interior(g, 2.5)
        True

    Conservation, linearity and translation equivariance::

        >>> u, v = random_field(g, seed=10), random_field(g, seed=11)
        >>> abs(mean(propagate_fine(u, SliceInterval(0.0, 0.1 / 64, 1), p)) - mean(u)) < 1e-13 * abs(mean(u))
        True
        >>> lhs = propagate_fine(3.0 * u - v, iv, p)
        >>> rhs = 3.0 * propagate_fine(u, iv, p) - propagate_fine(v, iv, p)
        >>> (lhs - rhs).inf_norm() < 1e-12 * lhs.inf_norm()
        True
        >>> shift_field(propagate_fine(shift_field(u, 1, 0, 0), iv, p), -1, 0, 0) == propagate_fine(u, iv, p)
        True

    The result does not depend on the number of threads::

        >>> propagate_fine(u, iv, p, threads=3) == propagate_fine(u, iv, p, threads=1)
        True

    Fourth order in time, measured against the exact time factor of the semi-discrete problem::

        >>> from parastencil.problem import initial_condition, semidiscrete_amplitude
        >>> q = ProblemSpec(8, c=(0, 0, 0), omega=100)
        >>> def error(n):
        ...     v = propagate_fine(initial_condition(q.grid()), SliceInterval(0.0, 0.1, n), q)
        ...     a = semidiscrete_amplitude(0.1, q, 'fine')
        ...     return (v - a * initial_condition(q.grid())).inf_norm() / a
        >>> 3.5 <= math.log2(error(64) / error(128)) <= 4.3
        True

    With advection on::

        >>> q = ProblemSpec(8, omega=100)
        >>> def difference(n):
        ...     u0 = initial_condition(q.grid())
        ...     return (propagate_fine(u0, SliceInterval(0.0, 0.1, n), q) - propagate_fine(u0, SliceInterval(0.0, 0.1, 2 * n), q)).inf_norm()
        >>> 3.5 <= math.log2(difference(32) / difference(64)) <= 4.5
        True
    """
    with Propagator('fine_rk4', p, threads=threads) as F:
        return F.propagate(u, iv)


def measure_step_time(kind, problem, threads=1, n_steps=4, repetitions=3):
    r"""
    Seconds per step of one propagator on a single worker, best of ``repetitions`` timed runs.

    This is the tau_f / tau_c microbenchmark.

    EXAMPLES::

        >>> from parastencil.integrators import measure_step_time
        >>> from parastencil.problem import ProblemSpec
        >>> measure_step_time('coarse_euler', ProblemSpec(8), n_steps=2, repetitions=2) > 0
        True
    """
    if repetitions < 1:
        raise ValueError('At least one repetition is needed')
    u = initial_condition(problem.grid())
    if kind == 'coarse_euler':
        h = problem.dt_coarse()
    else:
        h = problem.dt_fine()
    iv = SliceInterval(0.0, n_steps * h, n_steps)
    best = None
    with Propagator(kind, problem, threads=threads) as P:
        P.propagate(u, SliceInterval(0.0, h, 1))
        for _ in range(repetitions):
            P.reset_timing()
            P.propagate(u, iv)
            t = P.seconds_per_step()
            if best is None or t < best:
                best = t
    return best
