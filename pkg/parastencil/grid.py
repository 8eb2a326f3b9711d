r"""

Periodic three-dimensional structured grids and scalar fields with halo cells

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
import threading

import numba
import numpy as np


class GridSpec(object):
    r"""
    The GridSpec class describes a periodic grid on the unit cube [0,1]^3.

    INPUT:

    A GridSpec instance is constructed by calling GridSpec(nx, ny, nz, halo_width), where

    - ``nx`` -- number of interior points along the first axis

    - ``ny``, ``nz`` -- (default ``nx``) interior points along the other axes

    - ``halo_width`` -- (default 2) number of halo layers on every face

    The spacing is derived from ``nx`` and is the same along all axes.

    EXAMPLES::

        >>> from parastencil.grid import GridSpec
        >>> g = GridSpec(4)
        >>> g
        Periodic grid with 4 x 4 x 4 interior points and halo width 2
        >>> g.dx() * g.nx()
        1.0
        >>> g.shape()
        (8, 8, 8)
        >>> GridSpec(0)
        Traceback (most recent call last):
        ...
        ValueError: Grid sizes must be positive
    """

    def __init__(self, nx, ny=None, nz=None, halo_width=2):
        if ny is None:
            ny = nx
        if nz is None:
            nz = nx
        nx, ny, nz, halo_width = int(nx), int(ny), int(nz), int(halo_width)
        if min(nx, ny, nz) < 1:
            raise ValueError('Grid sizes must be positive')
        if halo_width < 1:
            raise ValueError('The halo width must be at least 1')
        self.__sizes = (nx, ny, nz)
        self.__halo_width = halo_width

    def __repr__(self):
        return 'Periodic grid with %d x %d x %d interior points and halo width %d' % (self.__sizes + (self.__halo_width,))

    def __eq__(self, other):
        try:
            return self.sizes() == other.sizes() and self.halo_width() == other.halo_width()
        except AttributeError:
            return False

    def __hash__(self):
        return hash(self.__sizes + (self.__halo_width,))

    ## basic attributes

    def nx(self):
        return self.__sizes[0]

    def ny(self):
        return self.__sizes[1]

    def nz(self):
        return self.__sizes[2]

    def sizes(self):
        return self.__sizes

    def halo_width(self):
        return self.__halo_width

    def dx(self):
        r"""
        Grid spacing 1/nx. This is never stored independently of nx.
        """
        return 1.0 / self.__sizes[0]

    def npoints(self):
        r"""
        Number of interior points.
        """
        nx, ny, nz = self.__sizes
        return nx * ny * nz

    def shape(self):
        r"""
        Shape of the padded storage array, interior plus halo on both sides of every axis.
        """
        h = 2 * self.__halo_width
        return tuple(n + h for n in self.__sizes)

    def is_cubic(self):
        nx, ny, nz = self.__sizes
        return nx == ny == nz

    def coordinates(self, axis=0):
        r"""
        Vertex-centered coordinates x_i = i * dx, i = 0, ..., n - 1 along the given axis.
        """
        return np.arange(self.__sizes[axis], dtype=np.float64) * self.dx()


class Field3(object):
    r"""
    A scalar field on a periodic grid, stored in one contiguous float64 array that includes halo cells.

    Storage is C-ordered with the first index outermost. Python code reaches the points through
    ``shifted()``; compiled kernels receive the padded array ``data()`` and the halo width.

    INPUT:

    - ``spec`` -- a GridSpec

    - ``data`` -- (optional) an array of shape ``spec.shape()``; if omitted then the field is zero

    EXAMPLES::

        >>> from parastencil.grid import Field3, GridSpec
        >>> f = Field3(GridSpec(4))
        >>> f
        Scalar field on Periodic grid with 4 x 4 x 4 interior points and halo width 2
        >>> f[1, 2, 3] = 5.0
        >>> f[1, 2, 3], f.inf_norm()
        (5.0, 5.0)
    """

    def __init__(self, spec, data=None):
        self.__spec = spec
        if data is None:
            data = np.zeros(spec.shape(), dtype=np.float64)
        else:
            data = np.ascontiguousarray(data, dtype=np.float64)
            if data.shape != spec.shape():
                raise ValueError('Incompatible array shape')
        self.__data = data

    def __repr__(self):
        return 'Scalar field on %s' % self.__spec

    def spec(self):
        return self.__spec

    def data(self):
        r"""
        The padded storage array (a reference, not a copy).
        """
        return self.__data

    def interior(self):
        r"""
        A view of the interior points.
        """
        return self.shifted(0, 0, 0)

    def shifted(self, di, dj, dk):
        r"""
        View of the field shifted by (di, dj, dk) cells over the interior index set.

        Entry (i, j, k) of the result is the field value at (i + di, j + dj, k + dk), which may be a
        halo cell.

        EXAMPLES::

            >>> import numpy as np
            >>> from parastencil.grid import GridSpec, field_from_interior
            >>> g = GridSpec(4, 1, 1, halo_width=1)
            >>> f = field_from_interior(g, np.arange(4.0).reshape(4, 1, 1))
            >>> f.halo_exchange()
            Scalar field on Periodic grid with 4 x 1 x 1 interior points and halo width 1
            >>> f.shifted(-1, 0, 0).ravel().tolist()
            [3.0, 0.0, 1.0, 2.0]
            >>> f.shifted(1, 0, 0).ravel().tolist()
            [1.0, 2.0, 3.0, 0.0]
        """
        h = self.__spec.halo_width()
        if max(abs(di), abs(dj), abs(dk)) > h:
            raise ValueError('Shift exceeds the halo width')
        nx, ny, nz = self.__spec.sizes()
        return self.__data[h + di: h + nx + di, h + dj: h + ny + dj, h + dk: h + nz + dk]

    def __getitem__(self, index):
        i, j, k = index
        h = self.__spec.halo_width()
        return float(self.__data[h + i, h + j, h + k])

    def __setitem__(self, index, value):
        i, j, k = index
        h = self.__spec.halo_width()
        self.__data[h + i, h + j, h + k] = value

    def copy(self):
        return Field3(self.__spec, self.__data.copy())

    ## periodic halo

    def halo_exchange(self):
        r"""
        Fill every halo cell with the periodic image of an interior cell.

        The exchange runs axis by axis (x, then y, then z); later passes copy whole padded slabs,
        so edge and corner halos come out right as well. Returns self.

        EXAMPLES::

            >>> import numpy as np
            >>> from parastencil.grid import GridSpec, field_from_interior
            >>> g = GridSpec(2, 1, 1, halo_width=1)
            >>> f = field_from_interior(g, np.array([1.0, 2.0]).reshape(2, 1, 1))
            >>> f.halo_exchange().data()[:, 1, 1].tolist()
            [2.0, 1.0, 2.0, 1.0]

        Wider halos than the grid itself wrap around more than once::

            >>> g = GridSpec(1, 1, 1, halo_width=2)
            >>> f = field_from_interior(g, np.full((1, 1, 1), 3.0)).halo_exchange()
            >>> bool((f.data() == 3.0).all())
            True
        """
        h = self.__spec.halo_width()
        for axis, n in enumerate(self.__spec.sizes()):
            a = np.moveaxis(self.__data, axis, 0)
            if h <= n:
                a[:h] = a[n: n + h]
                a[n + h:] = a[h: 2 * h]
            else:
                a[:] = a.take((np.arange(n + 2 * h) - h) % n + h, axis=0)
        return self

    ## reductions

    def inf_norm(self):
        r"""
        Maximum absolute value over the interior.
        """
        return float(np.max(np.abs(self.interior())))

    def mean(self):
        r"""
        Arithmetic mean over the interior.

        The sum is exactly rounded (``math.fsum``), hence independent of the order of the points.
        """
        return math.fsum(self.interior().ravel().tolist()) / self.__spec.npoints()

    ## arithmetic

    def _check_compatible(self, other):
        if self.__spec != other.spec():
            raise ValueError('Incompatible grids')

    def __add__(self, other):
        return axpy3(1.0, self, 1.0, other, 0.0, other)

    def __sub__(self, other):
        return axpy3(1.0, self, -1.0, other, 0.0, other)

    def __mul__(self, other):
        other = float(other)
        return lincomb(Field3(self.__spec), (other,), (self,))
    __rmul__ = __mul__

    def __neg__(self):
        return self.__mul__(-1.0)

    def __eq__(self, other):
        try:
            return self.__spec == other.spec() and np.array_equal(self.interior(), other.interior())
        except AttributeError:
            return False

    __hash__ = None


def field_from_interior(spec, values):
    r"""
    Construct a Field3 whose interior holds ``values`` (halos are filled by a halo exchange).

    INPUT:

    - ``spec`` -- a GridSpec

    - ``values`` -- an array of shape ``spec.sizes()``, or anything that broadcasts to it

    OUTPUT: a Field3
    """
    f = Field3(spec)
    f.interior()[...] = values
    return f.halo_exchange()


def random_field(spec, seed=0):
    r"""
    A field with uniformly distributed values in [0, 1), reproducible from ``seed``.
    """
    rng = np.random.default_rng(seed)
    return field_from_interior(spec, rng.random(spec.sizes()))


def shift_field(f, si=0, sj=0, sk=0):
    r"""
    Periodic index shift: the result at (i, j, k) is ``f`` at (i - si, j - sj, k - sk), indices mod n.

    EXAMPLES::

        >>> import numpy as np
        >>> from parastencil.grid import GridSpec, field_from_interior, shift_field
        >>> g = GridSpec(4, 1, 1)
        >>> f = field_from_interior(g, np.arange(4.0).reshape(4, 1, 1))
        >>> shift_field(f, 1).interior().ravel().tolist()
        [3.0, 0.0, 1.0, 2.0]
        >>> shift_field(shift_field(f, 1), -1) == f
        True
    """
    return field_from_interior(f.spec(), np.roll(f.interior(), (si, sj, sk), axis=(0, 1, 2)))


def halo_exchange(f):
    r"""
    Periodic halo exchange; see Field3.halo_exchange.

    EXAMPLES::

        >>> import numpy as np
        >>> from parastencil.grid import GridSpec, field_from_interior, halo_exchange
        >>> g = GridSpec(4)
        >>> i = np.arange(4.0).reshape(4, 1, 1)
        >>> f = halo_exchange(field_from_interior(g, i + 0.0 * np.zeros((4, 4, 4))))
        >>> f[-1, 0, 0], f[-2, 0, 0], f[4, 3, 3], f[5, -2, 5]
        (3.0, 2.0, 0.0, 1.0)

    Halo cells agree with a brute-force modular index oracle, corners included::

        >>> from parastencil.grid import random_field
        >>> f = random_field(GridSpec(3, 4, 5), seed=1)
        >>> all(f[i, j, k] == f[i % 3, j % 4, k % 5] for i in range(-2, 5) for j in range(-2, 6) for k in range(-2, 7))
        True
    """
    return f.halo_exchange()


def inf_norm(f):
    r"""
    Maximum absolute value over the interior; halos are excluded.

    EXAMPLES::

        >>> import numpy as np
        >>> from parastencil.grid import Field3, GridSpec, field_from_interior, inf_norm
        >>> g = GridSpec(8)
        >>> inf_norm(Field3(g))
        0.0
        >>> f = Field3(g)
        >>> f[3, 4, 5] = -7.5
        >>> inf_norm(f)
        7.5
        >>> f = field_from_interior(g, np.sin(2 * np.pi * g.coordinates()).reshape(8, 1, 1))
        >>> inf_norm(f)
        1.0

    The norm is absolutely homogeneous, exactly so for powers of two::

        >>> from parastencil.grid import random_field
        >>> f = random_field(g, seed=3)
        >>> inf_norm(-4.0 * f) == 4.0 * inf_norm(f)
        True
    """
    return f.inf_norm()


def mean(f):
    r"""
    Arithmetic mean over the interior, computed with an exactly rounded sum so that the result is
    independent of summation order (and therefore of any periodic shift of the field).

    EXAMPLES::

        >>> import numpy as np
        >>> from parastencil.grid import GridSpec, field_from_interior, mean, random_field, shift_field
        >>> mean(field_from_interior(GridSpec(3), 5.0))
        5.0
        >>> mean(field_from_interior(GridSpec(2), np.array([0.0] * 7 + [8.0]).reshape(2, 2, 2)))
        1.0
        >>> mean(field_from_interior(GridSpec(4, 1, 1), np.arange(4.0).reshape(4, 1, 1)))
        1.5
        >>> f = random_field(GridSpec(6), seed=2)
        >>> mean(shift_field(f, 1, 2, 3)) == mean(f)
        True
    """
    return f.mean()


## compiled sweeps

## the default workqueue threading layer of numba rejects parallel launches from several threads at once
_launch_lock = threading.Lock()


@numba.njit(inline='always', cache=True)
def interior_shape(a, h):
    r"""
    Interior sizes (nx, ny, nz) of a padded array with halo width ``h``; usable inside compiled kernels.
    """
    return a.shape[0] - 2 * h, a.shape[1] - 2 * h, a.shape[2] - 2 * h


def launch(kernel, threads, *args):
    r"""
    Call the compiled parallel ``kernel(*args)`` on ``threads`` threads.

    The thread count is capped at ``numba.config.NUMBA_NUM_THREADS``.
    """
    threads = int(threads)
    if threads < 1:
        raise ValueError('The number of threads must be positive')
    with _launch_lock:
        numba.set_num_threads(min(threads, numba.config.NUMBA_NUM_THREADS))
        return kernel(*args)


def apply_parallel(kernel, out, *ins, args=(), threads=1):
    r"""
    Apply a compiled stencil kernel at every interior point of ``out``.

    The kernel loops over the interior rows with ``numba.prange``, so the rows are shared among
    ``threads`` threads. Every point is computed by the same arithmetic whatever the partition
    (kernels are compiled without fastmath), hence the result is bitwise independent of ``threads``.

    INPUT:

    - ``kernel`` -- a ``numba.njit(parallel=True)`` function ``kernel(out, *ins, h, *args)`` of padded
      float64 arrays and the halo width ``h``; it writes the interior of ``out`` and reads ``ins`` at
      most ``h`` cells beyond the interior

    - ``out`` -- a Field3; it must not share memory with any of ``ins`` (checked)

    - ``ins`` -- one or more Field3 instances on the same grid as ``out``, with up-to-date halos

    - ``args`` -- (default ()) further scalar arguments of ``kernel``

    - ``threads`` -- (default 1) number of threads

    OUTPUT: ``out``, whose halos are left untouched

    EXAMPLES::

        >>> import numba
        >>> import numpy as np
        >>> from parastencil.grid import Field3, GridSpec, apply_parallel, interior_shape, random_field
        >>> @numba.njit(parallel=True)
        ... def second_difference(out, u, h):
        ...     nx, ny, nz = interior_shape(out, h)
        ...     for i in numba.prange(h, h + nx):
        ...         for j in range(h, h + ny):
        ...             for k in range(h, h + nz):
        ...                 out[i, j, k] = u[i + 1, j, k] + u[i - 1, j, k] - 2.0 * u[i, j, k]
        >>> g = GridSpec(8)
        >>> u = random_field(g, seed=4)
        >>> a = apply_parallel(second_difference, Field3(g), u, threads=1)
        >>> a == apply_parallel(second_difference, Field3(g), u, threads=4)
        True
        >>> bool(np.array_equal(a.interior(), u.shifted(1, 0, 0) + u.shifted(-1, 0, 0) - 2.0 * u.interior()))
        True
        >>> apply_parallel(second_difference, u, u)
        Traceback (most recent call last):
        ...
        ValueError: The output field must not alias an input field
    """
    for f in ins:
        out._check_compatible(f)
        if np.shares_memory(out.data(), f.data()):
            raise ValueError('The output field must not alias an input field')
    h = out.spec().halo_width()
    launch(kernel, threads, out.data(), *[f.data() for f in ins], h, *args)
    return out


@numba.njit(parallel=True, cache=True)
def _lincomb_kernel(out, coefficients, fields, h):
    nx, ny, nz = interior_shape(out, h)
    m = len(fields)
    for i in numba.prange(h, h + nx):
        for j in range(h, h + ny):
            for k in range(h, h + nz):
                acc = coefficients[0] * fields[0][i, j, k]
                for q in range(1, m):
                    acc = acc + coefficients[q] * fields[q][i, j, k]
                out[i, j, k] = acc


def lincomb(out, coefficients, fields, threads=1):
    r"""
    Fixed-order linear combination: out = ((c0 * f0 + c1 * f1) + c2 * f2) + ... over the interior.

    This is a pointwise sweep, so ``out`` may be one of ``fields``.

    EXAMPLES::

        >>> from parastencil.grid import Field3, GridSpec, field_from_interior, lincomb, random_field
        >>> g = GridSpec(2)
        >>> x = field_from_interior(g, 1.0)
        >>> lincomb(x, (0.5, 2.0), (x, x))[0, 0, 0]
        2.5
        >>> u, v = random_field(GridSpec(5), seed=1), random_field(GridSpec(5), seed=2)
        >>> lincomb(Field3(u.spec()), (0.1, 0.7), (u, v), threads=3) == lincomb(Field3(u.spec()), (0.1, 0.7), (u, v))
        True
        >>> lincomb(x, (1.0,), (x, x))
        Traceback (most recent call last):
        ...
        ValueError: Incompatible numbers of coefficients and fields
    """
    if len(coefficients) != len(fields) or not fields:
        raise ValueError('Incompatible numbers of coefficients and fields')
    for f in fields:
        out._check_compatible(f)
    coefficients = np.array([float(c) for c in coefficients], dtype=np.float64)
    launch(_lincomb_kernel, threads, out.data(), coefficients, tuple(f.data() for f in fields), out.spec().halo_width())
    return out


def axpy3(a, x, b, y, c, z, out=None, threads=1):
    r"""
    Pointwise a * x + b * y + c * z over the interior (summed left to right).

    This is the Parareal correction, a sum of three fields. The result is bitwise equal to the direct
    per-point evaluation of (a * x + b * y) + c * z. Halos of the result are unspecified until the
    next halo exchange.

    INPUT:

    - ``a``, ``b``, ``c`` -- scalars

    - ``x``, ``y``, ``z`` -- Field3 instances on one grid

    - ``out`` -- (optional) Field3 to write into

    - ``threads`` -- (default 1) number of threads

    OUTPUT: a Field3

    EXAMPLES::

        >>> import numpy as np
        >>> from parastencil.grid import GridSpec, axpy3, field_from_interior, random_field
        >>> g = GridSpec(4)
        >>> x = field_from_interior(g, np.arange(64.0).reshape(4, 4, 4))
        >>> y = field_from_interior(g, 0.5 * np.arange(64.0)[::-1].reshape(4, 4, 4))
        >>> axpy3(1, x, 1, y, -1, y) == x
        True
        >>> u, v = random_field(g, seed=0), random_field(g, seed=1)
        >>> w = axpy3(1, u, 1, v, -1, v)
        >>> bool(np.array_equal(w.interior(), u.interior() + v.interior() - v.interior()))
        True
        >>> axpy3(1, u, 0, u, 0, u) == u
        True
        >>> one = field_from_interior(g, 1.0)
        >>> float(axpy3(2, one, 3, one, -1, one).interior().max())
        4.0
        >>> axpy3(1, x, 1, x, 1, random_field(GridSpec(5)))
        Traceback (most recent call last):
        ...
        ValueError: Incompatible grids
    """
    if out is None:
        out = Field3(x.spec())
    return lincomb(out, (a, b, c), (x, y, z), threads=threads)
