r"""

The advection-diffusion benchmark u_t + c . grad(u) = nu(t) Lap(u) on the periodic unit cube

with u(x, 0) = sin(2 pi x) sin(2 pi y) sin(2 pi z) and nu(t) = nu0 + (nu0 / 2) sin(omega t). The exact
solution is a(t) u0(x - c t) with a(t) = exp(-12 pi^2 int_0^t nu(s) ds).

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

import math

import numpy as np
from scipy.integrate import solve_ivp

from .grid import GridSpec, field_from_interior
from .stencils import stencil_radius

two_pi = 2.0 * math.pi
twelve_pi_squared = 12.0 * math.pi ** 2


class ProblemSpec(object):
    r"""
    The ProblemSpec class collects the coefficients, domain and step sizes of one benchmark run.

    INPUT:

    A ProblemSpec is constructed by calling ProblemSpec(grid, **kwargs), where

    - ``grid`` -- a cubic GridSpec, or an integer n (then GridSpec(n) is used)

    - ``c`` -- (default (1, 1, 1)) advection velocity

    - ``nu0`` -- (default 0.1) base diffusion coefficient, positive

    - ``omega`` -- (default 0) frequency of the oscillation of nu

    - ``T`` -- (default 0.1) end time

    - ``n_fine`` -- (default 2048) total number of fine steps, N_t

    - ``n_coarse`` -- (default 128) total number of coarse steps

    - ``dt_fine``, ``dt_coarse`` -- (optional) step sizes; these replace ``n_fine`` and ``n_coarse`` and must divide ``T``

    EXAMPLES::

        >>> from parastencil.problem import ProblemSpec
        >>> p = ProblemSpec(32, omega=100)
        >>> p
        Advection-diffusion problem with c = (1.0, 1.0, 1.0), nu0 = 0.1, omega = 100.0, T = 0.1 on 32^3 points, 2048 fine / 128 coarse steps
        >>> p.dt_fine() == 0.1 / 2048
        True
        >>> ProblemSpec(8, T=0.1, dt_fine=0.1 / 64, dt_coarse=0.1 / 4).n_coarse()
        4
        >>> ProblemSpec(8, dt_fine=0.03)
        Traceback (most recent call last):
        ...
        ValueError: The fine step does not divide the time interval
        >>> ProblemSpec(8, nu0=0)
        Traceback (most recent call last):
        ...
        ValueError: nu0 must be positive
        >>> from parastencil.grid import GridSpec
        >>> ProblemSpec(GridSpec(8, halo_width=1))
        Traceback (most recent call last):
        ...
        ValueError: The halo must be at least 2 wide
    """

    def __init__(self, grid, c=(1.0, 1.0, 1.0), nu0=0.1, omega=0.0, T=0.1, n_fine=2048, n_coarse=128, dt_fine=None, dt_coarse=None):
        if not isinstance(grid, GridSpec):
            grid = GridSpec(grid)
        if not grid.is_cubic():
            raise NotImplementedError('The benchmark needs the same number of points along every axis')
        if grid.halo_width() < stencil_radius('fine'):
            raise ValueError('The halo must be at least %d wide' % stencil_radius('fine'))
        c = tuple(float(x) for x in c)
        if len(c) != 3:
            raise ValueError('The velocity must have three components')
        if nu0 <= 0:
            raise ValueError('nu0 must be positive')
        if T <= 0:
            raise ValueError('The end time must be positive')
        T = float(T)
        if dt_fine is not None:
            n_fine = _step_count(T, dt_fine, 'fine')
        if dt_coarse is not None:
            n_coarse = _step_count(T, dt_coarse, 'coarse')
        n_fine, n_coarse = int(n_fine), int(n_coarse)
        if min(n_fine, n_coarse) < 1:
            raise ValueError('Step counts must be positive')
        if n_coarse > n_fine:
            raise ValueError('The coarse step must not be smaller than the fine step')
        self.__grid = grid
        self.__c = c
        self.__nu0 = float(nu0)
        self.__omega = float(omega)
        self.__T = T
        self.__n_fine = n_fine
        self.__n_coarse = n_coarse

    def __repr__(self):
        return 'Advection-diffusion problem with c = %s, nu0 = %s, omega = %s, T = %s on %d^3 points, %d fine / %d coarse steps' % (self.__c, self.__nu0, self.__omega, self.__T, self.__grid.nx(), self.__n_fine, self.__n_coarse)

    def __eq__(self, other):
        try:
            return self.parameters() == other.parameters()
        except AttributeError:
            return False

    def __hash__(self):
        return hash(tuple(sorted(self.parameters().items())))

    def parameters(self):
        r"""
        A flat dictionary of the defining parameters (the configuration schema of the harness uses the same keys).
        """
        return {'nx': self.__grid.nx(), 'c': self.__c, 'nu0': self.__nu0, 'omega': self.__omega, 'T': self.__T, 'n_fine': self.__n_fine, 'n_coarse': self.__n_coarse}

    def grid(self):
        return self.__grid

    def c(self):
        return self.__c

    def nu0(self):
        return self.__nu0

    def omega(self):
        return self.__omega

    def T(self):
        return self.__T

    def n_fine(self):
        return self.__n_fine

    def n_coarse(self):
        return self.__n_coarse

    def dt_fine(self):
        return self.__T / self.__n_fine

    def dt_coarse(self):
        return self.__T / self.__n_coarse

    def nu(self, t):
        r"""
        The diffusion coefficient nu(t) = nu0 + (nu0 / 2) sin(omega t).
        """
        return self.__nu0 + 0.5 * self.__nu0 * math.sin(self.__omega * t)

    def nu_max(self):
        if self.__omega:
            return 1.5 * self.__nu0
        return self.__nu0

    def with_changes(self, **kwargs):
        r"""
        A copy of self with some parameters replaced.

        EXAMPLES::

            >>> from parastencil.problem import ProblemSpec
            >>> ProblemSpec(8).with_changes(nx=16, n_fine=256).grid().nx()
            16
        """
        d = self.parameters()
        d.update(kwargs)
        nx = d.pop('nx')
        return ProblemSpec(GridSpec(nx, halo_width=self.__grid.halo_width()), **d)


def _step_count(T, dt, name):
    n = round(T / dt)
    if n < 1 or abs(n * dt - T) > 1e-12 * T:
        raise ValueError('The %s step does not divide the time interval' % name)
    return int(n)


def initial_condition(grid):
    r"""
    Sample u0(x) = sin(2 pi x) sin(2 pi y) sin(2 pi z) at the vertex-centered points x_i = i dx.

    EXAMPLES::

        >>> from parastencil.grid import GridSpec
        >>> from parastencil.problem import initial_condition
        >>> u = initial_condition(GridSpec(8))
        >>> u[0, 3, 1], u[2, 2, 2]
        (0.0, 1.0)
        >>> u.inf_norm()
        1.0
    """
    return _sample(grid, 1.0, (0.0, 0.0, 0.0))


def _sample(grid, a, shift):
    sines = []
    for axis in range(3):
        x = np.mod(grid.coordinates(axis) - shift[axis], 1.0)
        sines.append(np.sin(two_pi * x))
    values = a * sines[0][:, None, None] * sines[1][None, :, None] * sines[2][None, None, :]
    return field_from_interior(grid, values)


def nu_integral(t, nu0, omega):
    r"""
    int_0^t nu(s) ds = nu0 t + (nu0 / (2 omega)) (1 - cos(omega t)), with the exact limit nu0 t at omega = 0.
    """
    if omega == 0:
        return nu0 * t
    return nu0 * t + nu0 / (2.0 * omega) * (1.0 - math.cos(omega * t))


def amplitude(t, nu0, omega):
    r"""
    The time factor a(t) = exp(-12 pi^2 int_0^t nu(s) ds) of the exact solution.

    INPUT:

    - ``t`` -- time, nonnegative

    - ``nu0``, ``omega`` -- parameters of nu(t)

    OUTPUT: a float

    EXAMPLES::

        >>> import math
        >>> from parastencil.problem import amplitude, amplitude_ode
        >>> amplitude(0, 0.1, 100)
        1.0
        >>> amplitude(0.1, 0.1, 0) == math.exp(-12 * math.pi ** 2 * (0.1 * 0.1))
        True

    The closed form agrees with a high-accuracy integration of a' = -12 pi^2 nu(t) a::

        >>> all(abs(amplitude(t, 0.1, w) / amplitude_ode(t, 0.1, w) - 1) < 1e-10 for w in (0, 100) for t in (0.005 * j for j in range(1, 21)))
        True
    """
    if t < 0:
        raise ValueError('Time must be nonnegative')
    return math.exp(-twelve_pi_squared * nu_integral(t, nu0, omega))


def amplitude_ode(t, nu0, omega, rtol=1e-13):
    r"""
    a(t) from integrating a'(t) = -12 pi^2 nu(t) a(t), a(0) = 1 with an eighth order Runge-Kutta method.

    This is an oracle for ``amplitude``.
    """
    if t == 0:
        return 1.0
    nu = lambda s: nu0 + 0.5 * nu0 * math.sin(omega * s)
    sol = solve_ivp(lambda s, a: -twelve_pi_squared * nu(s) * a, (0.0, t), [1.0], method='DOP853', rtol=rtol, atol=1e-16)
    if not sol.success:
        raise RuntimeError('The amplitude oracle failed: %s' % sol.message)
    return float(sol.y[0, -1])


def exact_solution(grid, t, p):
    r"""
    Sample the exact solution a(t) u0(x - c t); the shifted coordinate is wrapped into [0, 1).

    EXAMPLES::

        >>> import numpy as np
        >>> from parastencil.grid import GridSpec
        >>> from parastencil.problem import ProblemSpec, amplitude, exact_solution, initial_condition
        >>> g = GridSpec(8)
        >>> p = ProblemSpec(g)
        >>> exact_solution(g, 0, p) == initial_condition(g)
        True
        >>> u = exact_solution(g, 1.0, p)
        >>> np.allclose(u.interior(), amplitude(1.0, 0.1, 0) * initial_condition(g).interior(), rtol=1e-14, atol=0)
        True

    Pure advection by a quarter period::

        >>> p = ProblemSpec(g, c=(1, 0, 0), nu0=1e-300)
        >>> u = exact_solution(g, 0.25, p)
        >>> u[0, 2, 2], u[2, 2, 2]
        (-1.0, 0.0)
    """
    a = amplitude(t, p.nu0(), p.omega())
    return _sample(grid, a, tuple(ci * t for ci in p.c()))


def relative_error(u, t, p):
    r"""
    Relative inf-norm error of ``u`` against the exact solution at time ``t``.

    EXAMPLES::

        >>> from parastencil.problem import ProblemSpec, exact_solution, relative_error
        >>> p = ProblemSpec(8)
        >>> u = exact_solution(p.grid(), 0.05, p)
        >>> relative_error(u, 0.05, p)
        0.0
        >>> relative_error(2.0 * u, 0.05, p)
        1.0

    The fine propagator converges to the exact solution under grid refinement::

        >>> from parastencil.integrators import SliceInterval, propagate_fine
        >>> from parastencil.problem import initial_condition
        >>> def fine_error(n):
        ...     q = ProblemSpec(n, omega=100, T=0.01, n_fine=16, n_coarse=1)
        ...     return relative_error(propagate_fine(initial_condition(q.grid()), SliceInterval(0.0, 0.01, 16), q), 0.01, q)
        >>> fine_error(16) < fine_error(8) / 8
        True
    """
    exact = exact_solution(u.spec(), t, p)
    norm = exact.inf_norm()
    if not norm:
        raise ValueError('The exact solution vanishes')
    return (u - exact).inf_norm() / norm


def semidiscrete_amplitude(t, p, kind):
    r"""
    Time factor of the spatially discretized problem with c = 0.

    u0 is an eigenvector of both discrete Laplacians, so the semi-discrete solution is
    exp(lambda int_0^t nu(s) ds) u0 with the discrete eigenvalue lambda. Comparing a time integrator
    with this factor isolates its temporal error.

    INPUT:

    - ``t`` -- time

    - ``p`` -- a ProblemSpec

    - ``kind`` -- 'coarse' (7-point Laplacian) or 'fine' (fourth order Laplacian)

    EXAMPLES::

        >>> from parastencil.problem import ProblemSpec, amplitude, semidiscrete_amplitude
        >>> p = ProblemSpec(64)
        >>> a = amplitude(0.1, 0.1, 0)
        >>> abs(semidiscrete_amplitude(0.1, p, 'fine') / a - 1) < abs(semidiscrete_amplitude(0.1, p, 'coarse') / a - 1)
        True
    """
    theta = two_pi * p.grid().dx()
    dx2 = p.grid().dx() ** 2
    if kind == 'coarse':
        symbol = (2.0 * math.cos(theta) - 2.0) / dx2
    elif kind == 'fine':
        symbol = (-2.0 * math.cos(2.0 * theta) + 32.0 * math.cos(theta) - 30.0) / (12.0 * dx2)
    else:
        raise ValueError('Unknown stencil kind %r' % kind)
    return math.exp(3.0 * symbol * nu_integral(t, p.nu0(), p.omega()))


class ConvergenceReport(object):
    r"""
    Defects and discretization errors of a Parareal run.

    INPUT:

    - ``defects`` -- the sequence d^0, ..., d^K

    - ``eps_fine``, ``eps_coarse``, ``eps_parareal`` -- relative errors against the exact solution

    - ``fine_to_exact`` -- (default 1) the ratio ||u_fine|| / ||u_exact||

    EXAMPLES::

        >>> from parastencil.problem import ConvergenceReport
        >>> r = ConvergenceReport([0.04, 3e-3, 2e-5, 1e-7], 4.8e-6, 0.045, 4.81e-6)
        >>> r
        Convergence report: 3 iterations, eps_fine = 4.8e-06, eps_coarse = 0.045, eps_parareal = 4.81e-06
        >>> r.iterations_to_fine_accuracy()
        3
        >>> r.satisfies_bound()
        True
    """

    def __init__(self, defects, eps_fine, eps_coarse, eps_parareal, fine_to_exact=1.0):
        defects = [float(d) for d in defects]
        if min(defects + [eps_fine, eps_coarse, eps_parareal]) < 0:
            raise ValueError('Errors and defects are nonnegative')
        self.__defects = defects
        self.__eps_fine = float(eps_fine)
        self.__eps_coarse = float(eps_coarse)
        self.__eps_parareal = float(eps_parareal)
        self.__fine_to_exact = float(fine_to_exact)

    def __repr__(self):
        return 'Convergence report: %d iterations, eps_fine = %.3g, eps_coarse = %.3g, eps_parareal = %.3g' % (len(self.__defects) - 1, self.__eps_fine, self.__eps_coarse, self.__eps_parareal)

    def defects(self):
        return self.__defects

    def eps_fine(self):
        return self.__eps_fine

    def eps_coarse(self):
        return self.__eps_coarse

    def eps_parareal(self):
        return self.__eps_parareal

    def iterations_to_fine_accuracy(self):
        r"""
        The first k with d^k below eps_fine, or None if no iterate gets there.
        """
        for k, d in enumerate(self.__defects):
            if d <= self.__eps_fine:
                return k
        return None

    def satisfies_bound(self, rtol=1e-12):
        r"""
        Test eps_parareal <= d^K ||u_fine|| / ||u_exact|| + eps_fine (triangle inequality).
        """
        bound = self.__defects[-1] * self.__fine_to_exact + self.__eps_fine
        return self.__eps_parareal <= bound * (1 + rtol) + rtol
