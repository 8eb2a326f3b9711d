r"""

Finite-difference stencils for the advection-diffusion right-hand side

Coarse: first order upwind advection and the second order 7-point Laplacian, fused into one sweep.
Fine: fourth order centered differences (5 points per axis) for both advection and diffusion.

The kernels are compiled with numba and run through ``grid.apply_parallel``. Every ``rhs_*`` function
refreshes the halo of its input before the sweep, so callers never see stale halos.

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

import numba

from .grid import Field3, apply_parallel, interior_shape


def stencil_radius(kind):
    r"""
    Number of halo layers a right-hand side reads.

    EXAMPLES::

        >>> from parastencil.stencils import stencil_radius
        >>> stencil_radius('coarse'), stencil_radius('fine')
        (1, 2)
    """
    try:
        return {'coarse': 1, 'fine': 2}[kind]
    except KeyError:
        raise ValueError('Unknown stencil kind %r' % kind) from None


class StencilCoeffs(object):
    r"""
    Coefficients of one right-hand side evaluation.

    INPUT:

    - ``c`` -- advection velocity, a sequence of three floats

    - ``nu`` -- diffusion coefficient at the evaluation time (nonnegative)

    - ``dx`` -- grid spacing (positive)

    EXAMPLES::

        >>> from parastencil.stencils import StencilCoeffs
        >>> StencilCoeffs((1, 1, 1), 0.1, 0.25)
        Stencil coefficients c = (1.0, 1.0, 1.0), nu = 0.1, dx = 0.25
        >>> StencilCoeffs((1, 1, 1), -0.1, 0.25)
        Traceback (most recent call last):
        ...
        ValueError: The diffusion coefficient must be nonnegative
    """

    def __init__(self, c, nu, dx):
        c = tuple(float(x) for x in c)
        if len(c) != 3:
            raise ValueError('The velocity must have three components')
        if nu < 0:
            raise ValueError('The diffusion coefficient must be nonnegative')
        if dx <= 0:
            raise ValueError('The grid spacing must be positive')
        self.__c = c
        self.__nu = float(nu)
        self.__dx = float(dx)

    def __repr__(self):
        return 'Stencil coefficients c = %s, nu = %s, dx = %s' % (self.__c, self.__nu, self.__dx)

    def c(self):
        return self.__c

    def nu(self):
        return self.__nu

    def dx(self):
        return self.__dx

    def kernel_args(self):
        r"""
        The scalars (nu, c_x, c_y, c_z, dx) in the order the fused kernels take them.
        """
        return (self.__nu,) + self.__c + (self.__dx,)


## pointwise formulas, inlined into the kernels

@numba.njit(inline='always', cache=True)
def _lap2_sum(u, i, j, k):
    return u[i + 1, j, k] + u[i - 1, j, k] + u[i, j + 1, k] + u[i, j - 1, k] + u[i, j, k + 1] + u[i, j, k - 1] - 6.0 * u[i, j, k]


@numba.njit(inline='always', cache=True)
def _upwind_sum(u, i, j, k, cx, cy, cz, dx):
    centre = u[i, j, k]
    if cx > 0:
        ax = cx * (centre - u[i - 1, j, k]) / dx
    else:
        ax = cx * (u[i + 1, j, k] - centre) / dx
    if cy > 0:
        ay = cy * (centre - u[i, j - 1, k]) / dx
    else:
        ay = cy * (u[i, j + 1, k] - centre) / dx
    if cz > 0:
        az = cz * (centre - u[i, j, k - 1]) / dx
    else:
        az = cz * (u[i, j, k + 1] - centre) / dx
    return ax + ay + az


@numba.njit(inline='always', cache=True)
def _lap4_sum(u, i, j, k):
    centre = 30.0 * u[i, j, k]
    x = -u[i + 2, j, k] + 16.0 * u[i + 1, j, k] - centre + 16.0 * u[i - 1, j, k] - u[i - 2, j, k]
    y = -u[i, j + 2, k] + 16.0 * u[i, j + 1, k] - centre + 16.0 * u[i, j - 1, k] - u[i, j - 2, k]
    z = -u[i, j, k + 2] + 16.0 * u[i, j, k + 1] - centre + 16.0 * u[i, j, k - 1] - u[i, j, k - 2]
    return x + y + z


@numba.njit(inline='always', cache=True)
def _grad4_sum(u, i, j, k, cx, cy, cz):
    x = cx * (-u[i + 2, j, k] + 8.0 * u[i + 1, j, k] - 8.0 * u[i - 1, j, k] + u[i - 2, j, k])
    y = cy * (-u[i, j + 2, k] + 8.0 * u[i, j + 1, k] - 8.0 * u[i, j - 1, k] + u[i, j - 2, k])
    z = cz * (-u[i, j, k + 2] + 8.0 * u[i, j, k + 1] - 8.0 * u[i, j, k - 1] + u[i, j, k - 2])
    return x + y + z


## kernels for apply_parallel: kernel(out, u, h, *args)

@numba.njit(parallel=True, cache=True)
def laplacian2(out, u, h, dx):
    r"""
    Second order 7-point Laplacian.

    EXAMPLES::

        >>> import math
        >>> import numpy as np
        >>> from parastencil.grid import Field3, GridSpec, apply_parallel, field_from_interior
        >>> from parastencil.stencils import laplacian2
        >>> def error(n):
        ...     g = GridSpec(n, 1, 1)
        ...     x = g.coordinates().reshape(n, 1, 1)
        ...     r = apply_parallel(laplacian2, Field3(g), field_from_interior(g, np.sin(2 * np.pi * x)), args=(g.dx(),))
        ...     return float(np.abs(r.interior() + 4 * np.pi ** 2 * np.sin(2 * np.pi * x)).max())
        >>> 1.8 <= math.log2(error(32) / error(64)) <= 2.2
        True
    """
    nx, ny, nz = interior_shape(out, h)
    for i in numba.prange(h, h + nx):
        for j in range(h, h + ny):
            for k in range(h, h + nz):
                out[i, j, k] = _lap2_sum(u, i, j, k) / (dx * dx)


@numba.njit(parallel=True, cache=True)
def upwind1(out, u, h, cx, cy, cz, dx):
    r"""
    First order upwind approximation of c . grad(u).

    The backward difference is used along an axis whose velocity component is strictly positive,
    the forward difference otherwise.

    Reversing a velocity component and mirroring the field along that axis mirrors the result::

        >>> import numpy as np
        >>> from parastencil.grid import Field3, GridSpec, apply_parallel, field_from_interior, random_field
        >>> from parastencil.stencils import upwind1
        >>> g = GridSpec(8)
        >>> u = random_field(g, seed=12)
        >>> def mirror(f):
        ...     return field_from_interior(g, np.roll(f.interior()[::-1], 1, axis=0))
        >>> forward = apply_parallel(upwind1, Field3(g), u, args=(1.0, 0.5, -2.0, g.dx()))
        >>> backward = apply_parallel(upwind1, Field3(g), mirror(u), args=(-1.0, 0.5, -2.0, g.dx()))
        >>> backward == mirror(forward)
        True
    """
    nx, ny, nz = interior_shape(out, h)
    for i in numba.prange(h, h + nx):
        for j in range(h, h + ny):
            for k in range(h, h + nz):
                out[i, j, k] = _upwind_sum(u, i, j, k, cx, cy, cz, dx)


@numba.njit(parallel=True, cache=True)
def laplacian4(out, u, h, dx):
    r"""
    Fourth order centered Laplacian, (-u[+2] + 16 u[+1] - 30 u + 16 u[-1] - u[-2]) / (12 dx^2) summed over the axes.
    """
    nx, ny, nz = interior_shape(out, h)
    for i in numba.prange(h, h + nx):
        for j in range(h, h + ny):
            for k in range(h, h + nz):
                out[i, j, k] = _lap4_sum(u, i, j, k) / (12.0 * dx * dx)


@numba.njit(parallel=True, cache=True)
def gradient4(out, u, h, cx, cy, cz, dx):
    r"""
    Fourth order centered approximation of c . grad(u), (-u[+2] + 8 u[+1] - 8 u[-1] + u[-2]) / (12 dx) per axis.
    """
    nx, ny, nz = interior_shape(out, h)
    for i in numba.prange(h, h + nx):
        for j in range(h, h + ny):
            for k in range(h, h + nz):
                out[i, j, k] = _grad4_sum(u, i, j, k, cx, cy, cz) / (12.0 * dx)


@numba.njit(parallel=True, cache=True)
def _rhs_coarse_kernel(out, u, h, nu, cx, cy, cz, dx):
    nx, ny, nz = interior_shape(out, h)
    for i in numba.prange(h, h + nx):
        for j in range(h, h + ny):
            for k in range(h, h + nz):
                out[i, j, k] = nu * (_lap2_sum(u, i, j, k) / (dx * dx)) - _upwind_sum(u, i, j, k, cx, cy, cz, dx)


@numba.njit(parallel=True, cache=True)
def _rhs_fine_kernel(out, u, h, nu, cx, cy, cz, dx):
    nx, ny, nz = interior_shape(out, h)
    for i in numba.prange(h, h + nx):
        for j in range(h, h + ny):
            for k in range(h, h + nz):
                out[i, j, k] = nu * (_lap4_sum(u, i, j, k) / (12.0 * dx * dx)) - _grad4_sum(u, i, j, k, cx, cy, cz) / (12.0 * dx)


def _check_halo(u, kind):
    if u.spec().halo_width() < stencil_radius(kind):
        raise ValueError('The halo is too narrow for the %s stencil' % kind)


def rhs_coarse(u, s, out=None, threads=1):
    r"""
    Coarse right-hand side nu * Lap2(u) - upwind1(c, u), fused into one sweep.

    INPUT:

    - ``u`` -- a Field3 (its halo is refreshed here)

    - ``s`` -- StencilCoeffs

    - ``out`` -- (optional) Field3 to write into, not aliased with ``u``

    - ``threads`` -- (default 1) threads for the sweep

    OUTPUT: a Field3

    EXAMPLES::

        >>> from parastencil.grid import Field3, GridSpec, field_from_interior, mean, random_field
        >>> from parastencil.stencils import StencilCoeffs, rhs_coarse
        >>> g = GridSpec(5)
        >>> rhs_coarse(field_from_interior(g, 3.0), StencilCoeffs((1, -2, 0.5), 0.7, g.dx())).inf_norm()
        0.0

    A unit spike shows the weights of the 7-point Laplacian::

        >>> u = Field3(g)
        >>> u[2, 2, 2] = 1.0
        >>> r = rhs_coarse(u, StencilCoeffs((0, 0, 0), 1.0, 1.0))
        >>> r[2, 2, 2], r[1, 2, 2], r[2, 3, 2], r[2, 2, 1], r[1, 1, 2]
        (-6.0, 1.0, 1.0, 1.0, 0.0)

    Upwinding along a positive velocity uses the backward difference::

        >>> import numpy as np
        >>> g = GridSpec(8)
        >>> u = field_from_interior(g, g.coordinates().reshape(8, 1, 1))
        >>> r = rhs_coarse(u, StencilCoeffs((1, 0, 0), 0.0, g.dx()))
        >>> r[3, 0, 0], r[0, 0, 0]
        (-1.0, 7.0)
        >>> r = rhs_coarse(u, StencilCoeffs((-1, 0, 0), 0.0, g.dx()))
        >>> r[3, 0, 0], r[7, 0, 0]
        (1.0, -7.0)

    The discrete operator telescopes over the periodic grid, so its mean vanishes::

        >>> u = random_field(g, seed=5)
        >>> s = StencilCoeffs((1, 0.5, -2), 0.1, g.dx())
        >>> r = rhs_coarse(u, s)
        >>> abs(mean(r)) < 1e-13 * r.inf_norm()
        True

    Linearity, and independence of the number of threads::

        >>> v = random_field(g, seed=15)
        >>> lhs = rhs_coarse(2.0 * u - 3.0 * v, s)
        >>> (lhs - (2.0 * rhs_coarse(u, s) - 3.0 * rhs_coarse(v, s))).inf_norm() < 1e-13 * lhs.inf_norm()
        True
        >>> rhs_coarse(u, s, threads=4) == r
        True
    """
    _check_halo(u, 'coarse')
    u.halo_exchange()
    if out is None:
        out = Field3(u.spec())
    return apply_parallel(_rhs_coarse_kernel, out, u, args=s.kernel_args(), threads=threads)


def rhs_fine(u, s, out=None, threads=1):
    r"""
    Fine right-hand side nu * Lap4(u) - c . Grad4(u) with fourth order centered differences.

    INPUT: as for ``rhs_coarse``; the halo of ``u`` must be at least 2 wide

    OUTPUT: a Field3

    EXAMPLES::

        >>> import math
        >>> import numpy as np
        >>> from parastencil.grid import GridSpec, field_from_interior, mean, random_field
        >>> from parastencil.stencils import StencilCoeffs, rhs_fine
        >>> g = GridSpec(16)
        >>> rhs_fine(field_from_interior(g, -1.25), StencilCoeffs((1, 1, 1), 0.1, g.dx())).inf_norm()
        0.0

    The second derivative stencil is exact on quadratics (away from the periodic wrap)::

        >>> x = g.coordinates().reshape(16, 1, 1)
        >>> r = rhs_fine(field_from_interior(g, x * x), StencilCoeffs((0, 0, 0), 1.0, g.dx()))
        >>> r[8, 3, 3]
        2.0

    Fourth order accuracy of the advection stencil on sin(2 pi x)::

        >>> def advection_error(n):
        ...     g = GridSpec(n, 1, 1)
        ...     x = g.coordinates().reshape(n, 1, 1)
        ...     r = rhs_fine(field_from_interior(g, np.sin(2 * np.pi * x)), StencilCoeffs((1, 0, 0), 0.0, g.dx()))
        ...     return float(np.abs(r.interior() + 2 * np.pi * np.cos(2 * np.pi * x)).max())
        >>> 3.7 <= math.log2(advection_error(32) / advection_error(64)) <= 4.3
        True

    Conservation and linearity::

        >>> s = StencilCoeffs((1, 0.5, -2), 0.1, g.dx())
        >>> u, v = random_field(g, seed=6), random_field(g, seed=7)
        >>> abs(mean(rhs_fine(u, s))) < 1e-13 * rhs_fine(u, s).inf_norm()
        True
        >>> lhs = rhs_fine(2.0 * u - 3.0 * v, s)
        >>> (lhs - (2.0 * rhs_fine(u, s) - 3.0 * rhs_fine(v, s))).inf_norm() < 1e-13 * lhs.inf_norm()
        True
        >>> rhs_fine(field_from_interior(GridSpec(4, halo_width=1), 1.0), s)
        Traceback (most recent call last):
        ...
        ValueError: The halo is too narrow for the fine stencil
    """
    _check_halo(u, 'fine')
    u.halo_exchange()
    if out is None:
        out = Field3(u.spec())
    return apply_parallel(_rhs_fine_kernel, out, u, args=s.kernel_args(), threads=threads)


def apply_parallel_laplacian(u, out=None, threads=1):
    r"""
    The 7-point Laplacian through ``apply_parallel`` on its own; agrees with the diffusion part of ``rhs_coarse``.

    EXAMPLES::

        >>> import numpy as np
        >>> from parastencil.grid import GridSpec, random_field
        >>> from parastencil.stencils import StencilCoeffs, apply_parallel_laplacian, rhs_coarse
        >>> g = GridSpec(6)
        >>> u = random_field(g, seed=8)
        >>> bool(np.array_equal(apply_parallel_laplacian(u, threads=3).interior(), rhs_coarse(u, StencilCoeffs((0, 0, 0), 1.0, g.dx())).interior()))
        True
    """
    _check_halo(u, 'coarse')
    u.halo_exchange()
    if out is None:
        out = Field3(u.spec())
    return apply_parallel(laplacian2, out, u, args=(u.spec().dx(),), threads=threads)
