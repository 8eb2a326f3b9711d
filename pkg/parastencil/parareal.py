r"""

The pipelined Parareal driver

One worker (rank) per time slice. Rank p starts from a coarse guess computed on its own, then in every
iteration k

- propagates its previous initial value with the fine method,

- receives the new initial value from rank p - 1 (rank 0 keeps u0),

- propagates that value with the coarse method,

- corrects u_{p+1}^{k+1} = G(u_p^{k+1}) + F(u_p^k) - G(u_p^k),

- and sends the result on to rank p + 1 (the last rank does not send).

Workers share no mutable state; they only talk through a Transport. The in-process transport runs the
ranks as threads connected by FIFO queues, the multi-process transport runs them as processes
connected by socket pairs that carry a small binary message format.

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

import multiprocessing
import queue
import struct
import threading
import time
import traceback
from multiprocessing.connection import wait

import numpy as np

from .grid import GridSpec, axpy3, field_from_interior
from .integrators import Propagator, SliceInterval
from .problem import initial_condition

transports = ('in_process', 'multi_process')

default_process_timeout = 60.0

_header = struct.Struct('<8s4iB7x')
_magic = b'PSTFIELD'


class PararealAbort(RuntimeError):
    r"""
    Raised when a Parareal run fails. No partial result is returned.

    EXAMPLES::

        >>> from parastencil.parareal import PararealAbort
        >>> PararealAbort(2, 1, 'Timed out')
        PararealAbort('rank 2 failed in iteration 1: Timed out')
        >>> PararealAbort(0, None, 'Boom').iteration is None
        True
    """

    def __init__(self, rank, iteration, message):
        self.rank = rank
        self.iteration = iteration
        if iteration is None:
            where = 'during initialization'
        else:
            where = 'in iteration %d' % iteration
        super().__init__('rank %d failed %s: %s' % (rank, where, message))


class TransportError(RuntimeError):
    pass


class PararealConfig(object):
    r"""
    A Parareal run: the problem, the number of time slices N_p and the number of iterations K.

    INPUT:

    - ``problem`` -- a ProblemSpec; its fine and coarse step counts must be divisible by ``n_slices``

    - ``n_slices`` -- the number N_p of time slices (and workers)

    - ``k_max`` -- the number K of iterations

    - ``transport`` -- (default 'in_process') either 'in_process' or 'multi_process'

    - ``threads`` -- (default 1) threads per worker for the stencil sweeps

    - ``same_propagators`` -- (default False) if True then the coarse propagator is replaced by the fine one

    - ``tolerance`` -- (default None) if given, a rank stops once its predecessor has stopped and its
      successive iterates differ by at most ``tolerance`` (relative to the inf-norm)

    - ``timeout`` -- (default None) seconds a blocking receive waits; None means forever in-process and
      60 seconds across processes

    EXAMPLES::

        >>> from parastencil.parareal import PararealConfig
        >>> from parastencil.problem import ProblemSpec
        >>> cfg = PararealConfig(ProblemSpec(8, n_fine=256, n_coarse=16), 4, 3)
        >>> cfg
        Parareal configuration with 4 time slices and 3 iterations (in_process transport)
        >>> cfg.n_fine_per_slice(), cfg.n_coarse_per_slice()
        (64, 4)
        >>> cfg.fine_interval(1)
        Time slice [0.025, 0.05] in 64 steps
        >>> cfg.timeout(), cfg.with_changes(transport='multi_process').timeout()
        (None, 60.0)
        >>> PararealConfig(ProblemSpec(8, n_fine=256, n_coarse=16), 3, 3)
        Traceback (most recent call last):
        ...
        ValueError: The number of fine steps (256) is not divisible by the number of time slices (3)
    """

    def __init__(self, problem, n_slices, k_max, transport='in_process', threads=1, same_propagators=False, tolerance=None, timeout=None):
        n_slices, k_max, threads = int(n_slices), int(k_max), int(threads)
        if n_slices < 1:
            raise ValueError('The number of time slices must be positive')
        if k_max < 1:
            raise ValueError('The number of iterations must be positive')
        if threads < 1:
            raise ValueError('The number of threads must be positive')
        if transport not in transports:
            raise ValueError('Unknown transport %r' % transport)
        if tolerance is not None and tolerance < 0:
            raise ValueError('The tolerance must be nonnegative')
        if timeout is not None and timeout <= 0:
            raise ValueError('The timeout must be positive')
        for name, n in (('fine', problem.n_fine()), ('coarse', problem.n_coarse())):
            if n % n_slices:
                raise ValueError('The number of %s steps (%d) is not divisible by the number of time slices (%d)' % (name, n, n_slices))
        self.__problem = problem
        self.__n_slices = n_slices
        self.__k_max = k_max
        self.__transport = transport
        self.__threads = threads
        self.__same_propagators = bool(same_propagators)
        self.__tolerance = tolerance
        self.__timeout = timeout

    def __repr__(self):
        return 'Parareal configuration with %d time slices and %d iterations (%s transport)' % (self.__n_slices, self.__k_max, self.__transport)

    def problem(self):
        return self.__problem

    def n_slices(self):
        return self.__n_slices

    def k_max(self):
        return self.__k_max

    def transport(self):
        return self.__transport

    def threads(self):
        return self.__threads

    def same_propagators(self):
        return self.__same_propagators

    def tolerance(self):
        return self.__tolerance

    def timeout(self):
        if self.__timeout is None and self.__transport == 'multi_process':
            return default_process_timeout
        return self.__timeout

    def n_fine_per_slice(self):
        return self.__problem.n_fine() // self.__n_slices

    def n_coarse_per_slice(self):
        if self.__same_propagators:
            return self.n_fine_per_slice()
        return self.__problem.n_coarse() // self.__n_slices

    def coarse_kind(self):
        return 'fine_rk4' if self.__same_propagators else 'coarse_euler'

    def slice_time(self, p):
        r"""
        The start time t_p = T p / N_p of slice p.
        """
        return self.__problem.T() * p / self.__n_slices

    def fine_interval(self, p):
        return SliceInterval(self.slice_time(p), self.slice_time(p + 1), self.n_fine_per_slice())

    def coarse_interval(self, p):
        return SliceInterval(self.slice_time(p), self.slice_time(p + 1), self.n_coarse_per_slice())

    def with_changes(self, **kwargs):
        d = dict(problem=self.__problem, n_slices=self.__n_slices, k_max=self.__k_max, transport=self.__transport, threads=self.__threads, same_propagators=self.__same_propagators, tolerance=self.__tolerance, timeout=self.__timeout)
        d.update(kwargs)
        return PararealConfig(**d)


## serial reference runs

def _run_serial(cfg, kind, intervals, u0, verbose):
    problem = cfg.problem()
    u = initial_condition(problem.grid()) if u0 is None else u0
    with Propagator(kind, problem, threads=cfg.threads(), verbose=verbose) as P:
        start = time.perf_counter()
        for p in range(cfg.n_slices()):
            u = P.propagate(u, intervals(p))
        seconds = time.perf_counter() - start
    if verbose:
        print('I ran the %s propagator over %d time slices in %.3f seconds.' % (kind, cfg.n_slices(), seconds))
    return u, seconds


def run_serial_fine(cfg, u0=None, verbose=False):
    r"""
    The fine propagator run step by step over all time slices.

    This is the reference for defects and for the measured speedup.

    OUTPUT: a tuple (u_fine, seconds)

    EXAMPLES::

        >>> from parastencil.grid import Field3
        >>> from parastencil.parareal import PararealConfig, run_serial_fine
        >>> from parastencil.problem import ProblemSpec
        >>> cfg = PararealConfig(ProblemSpec(4, n_fine=48, n_coarse=12), 4, 2)
        >>> run_serial_fine(cfg, u0=Field3(cfg.problem().grid()))[0].inf_norm()
        0.0
        >>> run_serial_fine(cfg)[1] > 0
        True
    """
    return _run_serial(cfg, 'fine_rk4', cfg.fine_interval, u0, verbose)


def run_serial_coarse(cfg, u0=None, verbose=False):
    r"""
    The coarse propagator G run over all time slices; this is the Parareal initial guess on the last slice.

    OUTPUT: a tuple (u_coarse, seconds)
    """
    return _run_serial(cfg, cfg.coarse_kind(), cfg.coarse_interval, u0, verbose)


def defect(u_parareal, u_fine):
    r"""
    The relative defect ||u_parareal - u_fine||_inf / ||u_fine||_inf.

    EXAMPLES::

        >>> from parastencil.grid import Field3, GridSpec, random_field
        >>> from parastencil.parareal import defect
        >>> u = random_field(GridSpec(4), seed=3)
        >>> defect(u, u), abs(defect(1.5 * u, u) - 0.5) < 1e-15
        (0.0, True)
        >>> defect(u, Field3(GridSpec(4)))
        Traceback (most recent call last):
        ...
        ValueError: The reference solution vanishes
    """
    norm = u_fine.inf_norm()
    if not norm:
        raise ValueError('The reference solution vanishes')
    return (u_parareal - u_fine).inf_norm() / norm


## wire format

def encode_field(field, tag, stop=False):
    r"""
    Serialize the interior of ``field`` for the multi-process transport.

    The message is a 32 byte header (magic, nx, ny, nz, tag, stop flag) followed by the interior points
    as little-endian 64-bit floats in C order.

    EXAMPLES::

        >>> from parastencil.grid import GridSpec, random_field
        >>> from parastencil.parareal import decode_field, encode_field
        >>> g = GridSpec(3, 4, 5)
        >>> f = random_field(g, seed=1)
        >>> data = encode_field(f, 7)
        >>> len(data) == 32 + 8 * 60
        True
        >>> h, tag, stop = decode_field(data)
        >>> h == f, tag, stop, h.spec() == g
        (True, 7, False, True)
        >>> decode_field(encode_field(f, 2, stop=True), GridSpec(3, 4, 5))[1:]
        (2, True)
        >>> decode_field(data, GridSpec(4))
        Traceback (most recent call last):
        ...
        ValueError: The message does not match the grid
        >>> decode_field(b'garbage!' * 8)
        Traceback (most recent call last):
        ...
        ValueError: Malformed field message
    """
    nx, ny, nz = field.spec().sizes()
    header = _header.pack(_magic, nx, ny, nz, int(tag), 1 if stop else 0)
    return header + np.ascontiguousarray(field.interior(), dtype='<f8').tobytes()


def decode_field(data, grid=None):
    r"""
    Inverse of ``encode_field``.

    OUTPUT: a tuple (field, tag, stop)
    """
    if len(data) < _header.size:
        raise ValueError('Malformed field message')
    magic, nx, ny, nz, tag, stop = _header.unpack_from(data)
    if magic != _magic or min(nx, ny, nz) < 1 or len(data) != _header.size + 8 * nx * ny * nz:
        raise ValueError('Malformed field message')
    if grid is None:
        grid = GridSpec(nx, ny, nz)
    elif grid.sizes() != (nx, ny, nz):
        raise ValueError('The message does not match the grid')
    values = np.frombuffer(data, dtype='<f8', offset=_header.size).reshape(nx, ny, nz)
    return field_from_interior(grid, values), tag, bool(stop)


## transports

class Transport(object):
    r"""
    Blocking point-to-point messages between ranks, FIFO for every ordered pair (src, dest).
    """

    def send(self, dest, field, tag, stop=False):
        raise NotImplementedError

    def recv_message(self, src, tag):
        r"""
        Receive the next message from ``src`` and check its tag.

        OUTPUT: a tuple (field, stop)
        """
        raise NotImplementedError

    def recv(self, src, tag):
        return self.recv_message(src, tag)[0]

    def abort(self):
        pass


def _check_tag(src, tag, received):
    if received != tag:
        raise TransportError('Expected tag %d from rank %d but received tag %d' % (tag, src, received))


class ChannelTransport(Transport):
    r"""
    In-process channels: one FIFO queue per ordered pair of ranks.

    Messages are copies, so sender and receiver never share a field. ``abort`` poisons every channel
    so that blocked receivers wake up and fail.

    EXAMPLES::

        >>> from parastencil.grid import GridSpec, random_field
        >>> from parastencil.parareal import ChannelTransport
        >>> t = ChannelTransport(2)
        >>> f = random_field(GridSpec(4), seed=2)
        >>> t.send(1, f, 1, src=0)
        >>> t.send(1, 2.0 * f, 2, src=0)
        >>> t.recv(0, 1, dest=1) == f, t.recv_message(0, 2, dest=1)[1]
        (True, False)
        >>> t.send(1, f, 3, src=0)
        >>> t.recv(0, 4, dest=1)
        Traceback (most recent call last):
        ...
        parastencil.parareal.TransportError: Expected tag 4 from rank 0 but received tag 3
        >>> ChannelTransport(2, timeout=0.01).recv(0, 1, dest=1)
        Traceback (most recent call last):
        ...
        parastencil.parareal.TransportError: Timed out waiting for rank 0
    """

    def __init__(self, n_ranks, timeout=None):
        self.__n_ranks = n_ranks
        self.__timeout = timeout
        self.__queues = {}
        self.__lock = threading.Lock()
        self.__aborted = False

    def _queue(self, src, dest):
        if not (0 <= src < self.__n_ranks and 0 <= dest < self.__n_ranks):
            raise ValueError('Rank out of range')
        with self.__lock:
            try:
                return self.__queues[src, dest]
            except KeyError:
                q = queue.Queue()
                self.__queues[src, dest] = q
                return q

    def endpoint(self, rank):
        r"""
        The view of this transport from one rank.
        """
        return _ChannelEndpoint(self, rank)

    def send(self, dest, field, tag, stop=False, src=None):
        if self.__aborted:
            raise TransportError('The run was aborted')
        self._queue(src, dest).put((tag, stop, field.copy()))

    def recv_message(self, src, tag, dest=None):
        if self.__aborted:
            raise TransportError('The run was aborted')
        try:
            item = self._queue(src, dest).get(timeout=self.__timeout)
        except queue.Empty:
            raise TransportError('Timed out waiting for rank %d' % src) from None
        if item is None:
            raise TransportError('The run was aborted')
        received, stop, field = item
        _check_tag(src, tag, received)
        return field, stop

    def recv(self, src, tag, dest=None):
        return self.recv_message(src, tag, dest=dest)[0]

    def abort(self):
        self.__aborted = True
        with self.__lock:
            for src in range(self.__n_ranks):
                for dest in range(self.__n_ranks):
                    self.__queues.setdefault((src, dest), queue.Queue()).put(None)


class _ChannelEndpoint(Transport):
    def __init__(self, channels, rank):
        self.__channels = channels
        self.__rank = rank

    def send(self, dest, field, tag, stop=False):
        self.__channels.send(dest, field, tag, stop=stop, src=self.__rank)

    def recv_message(self, src, tag):
        return self.__channels.recv_message(src, tag, dest=self.__rank)

    def abort(self):
        self.__channels.abort()


class PipeTransport(Transport):
    r"""
    The endpoint of one rank in the multi-process transport.

    INPUT:

    - ``grid`` -- the GridSpec of every message

    - ``send_connections``, ``recv_connections`` -- dicts from rank to multiprocessing connection

    - ``timeout`` -- seconds to wait in ``recv``, or None

    EXAMPLES::

        >>> from multiprocessing import Pipe
        >>> from parastencil.grid import GridSpec, random_field
        >>> from parastencil.parareal import PipeTransport
        >>> g = GridSpec(4)
        >>> a, b = Pipe()
        >>> sender, receiver = PipeTransport(g, {1: a}, {}), PipeTransport(g, {}, {0: b}, timeout=5)
        >>> f = random_field(g, seed=4)
        >>> sender.send(1, f, 1, stop=True)
        >>> receiver.recv_message(0, 1) == (f, True)
        True
    """

    def __init__(self, grid, send_connections, recv_connections, timeout=None):
        self.__grid = grid
        self.__send = send_connections
        self.__recv = recv_connections
        self.__timeout = timeout

    def send(self, dest, field, tag, stop=False):
        try:
            self.__send[dest].send_bytes(encode_field(field, tag, stop))
        except (OSError, KeyError) as e:
            raise TransportError('Cannot send to rank %d (%s)' % (dest, e)) from None

    def recv_message(self, src, tag):
        try:
            conn = self.__recv[src]
        except KeyError:
            raise TransportError('No connection from rank %d' % src) from None
        if not conn.poll(self.__timeout):
            raise TransportError('Timed out waiting for rank %d' % src)
        try:
            data = conn.recv_bytes()
        except (EOFError, OSError):
            raise TransportError('Lost the connection to rank %d' % src) from None
        try:
            field, received, stop = decode_field(data, self.__grid)
        except ValueError as e:
            raise TransportError(str(e)) from None
        _check_tag(src, tag, received)
        return field, stop

    def close(self):
        for conn in list(self.__send.values()) + list(self.__recv.values()):
            conn.close()


## workers

class SliceWorker(object):
    r"""
    The state machine of one rank.

    After ``initialize``, ``u_out()`` is the coarse guess; after ``iterate(k)`` it is u_{p+1}^{k+1}, equal
    to ``u_coarse_prev() + u_fine() - (the coarse value of the previous iteration)``.

    INPUT:

    - ``rank`` -- the slice index p

    - ``config`` -- a PararealConfig

    - ``u0`` -- the initial value at t = 0

    - ``transport`` -- a Transport as seen from this rank (not needed if there is one slice)

    - ``record_history`` -- (default False) keep every u_out

    EXAMPLES::

        >>> from parastencil.parareal import PararealConfig, SliceWorker, residual_monitor
        >>> from parastencil.problem import ProblemSpec, initial_condition
        >>> p = ProblemSpec(4, n_fine=48, n_coarse=12)
        >>> cfg = PararealConfig(p, 1, 2)
        >>> with SliceWorker(0, cfg, initial_condition(p.grid())) as w:
        ...     w.initialize()
        ...     coarse = w.u_coarse_prev()
        ...     w.iterate(0) == w.u_coarse_prev() + w.u_fine() - coarse
        ...     (w.iterate(1) - w.u_fine()).inf_norm() < 1e-15
        ...     residual_monitor(w, 1) < 1e-15, w.monitors()['difference'][1]
        True
        True
        (True, 0.0)
    """

    def __init__(self, rank, config, u0, transport=None, record_history=False, verbose=False):
        if not 0 <= rank < config.n_slices():
            raise ValueError('Rank out of range')
        problem = config.problem()
        self.__rank = rank
        self.__config = config
        self.__u0 = u0
        self.__transport = transport
        self.__verbose = verbose
        self.__G = Propagator(config.coarse_kind(), problem, threads=config.threads())
        self.__F = Propagator('fine_rk4', problem, threads=config.threads())
        self.__history = [] if record_history else None
        self.__residuals = []
        self.__differences = []
        self.__iteration = None
        self.__iterations_done = 0
        self.__predecessor_stopped = rank == 0
        self.__stopped = False
        self.__u_in_prev = self.__u_coarse_prev = self.__u_fine = self.__u_out = None

    def __repr__(self):
        return 'Parareal worker on time slice %d of %d' % (self.__rank, self.__config.n_slices())

    def __enter__(self):
        return self

    def __exit__(self, *args):
        self.close()

    def close(self):
        self.__G.close()
        self.__F.close()

    def rank(self):
        return self.__rank

    def iteration(self):
        r"""
        The iteration in progress, or None during initialization.
        """
        return self.__iteration

    def iterations_done(self):
        return self.__iterations_done

    def stopped(self):
        return self.__stopped

    def u_in_prev(self):
        return self.__u_in_prev

    def u_coarse_prev(self):
        return self.__u_coarse_prev

    def u_fine(self):
        return self.__u_fine

    def u_out(self):
        return self.__u_out

    def history(self):
        return self.__history

    def monitors(self):
        r"""
        Per-iteration residuals ||F(u_p^k) - u_{p+1}^k|| and iterate differences ||u_{p+1}^{k+1} - u_{p+1}^k||.
        """
        return {'residual': list(self.__residuals), 'difference': list(self.__differences)}

    def initialize(self):
        r"""
        Run the coarse propagator over slices 0, ..., p - 1 for u_p^0, then once more for the guess on slice p.
        """
        cfg = self.__config
        u = self.__u0
        for q in range(self.__rank):
            u = self.__G.propagate(u, cfg.coarse_interval(q))
        self.__u_in_prev = u
        self.__u_coarse_prev = self.__G.propagate(u, cfg.coarse_interval(self.__rank))
        self.__u_out = self.__u_coarse_prev
        if self.__history is not None:
            self.__history.append(self.__u_out)

    def iterate(self, k):
        r"""
        One Parareal iteration: fine, receive, coarse, correct, send.

        OUTPUT: u_{p+1}^{k+1}
        """
        cfg = self.__config
        rank = self.__rank
        self.__iteration = k
        u_fine = self.__F.propagate(self.__u_in_prev, cfg.fine_interval(rank))
        self.__residuals.append((u_fine - self.__u_out).inf_norm())
        if rank == 0:
            u_in = self.__u0
        elif self.__predecessor_stopped:
            u_in = self.__u_in_prev
        else:
            u_in, stop = self.__transport.recv_message(rank - 1, k + 1)
            self.__predecessor_stopped = stop
        u_coarse = self.__G.propagate(u_in, cfg.coarse_interval(rank))
        u_out = axpy3(1.0, u_coarse, 1.0, u_fine, -1.0, self.__u_coarse_prev, threads=cfg.threads())
        difference = (u_out - self.__u_out).inf_norm()
        self.__differences.append(difference)
        tol = cfg.tolerance()
        stop = tol is not None and self.__predecessor_stopped and difference <= tol * u_out.inf_norm()
        if rank < cfg.n_slices() - 1:
            self.__transport.send(rank + 1, u_out, k + 1, stop=stop)
        self.__u_in_prev = u_in
        self.__u_coarse_prev = u_coarse
        self.__u_fine = u_fine
        self.__u_out = u_out
        if self.__history is not None:
            self.__history.append(u_out)
        self.__iterations_done = k + 1
        self.__stopped = stop
        if self.__verbose:
            print('I finished iteration %d on rank %d (residual %.3e, iterate difference %.3e).' % (k, rank, self.__residuals[-1], difference))
        return u_out

    def run(self):
        r"""
        Initialize, then iterate until K iterations are done or the rank has stopped.
        """
        self.initialize()
        for k in range(self.__config.k_max()):
            self.iterate(k)
            if self.__stopped:
                if self.__verbose:
                    print('I stopped rank %d after %d iterations.' % (self.__rank, k + 1))
                break
        return self.__u_out


def residual_monitor(worker, k):
    r"""
    The residual ||F(u_p^k) - u_{p+1}^k||_inf of ``worker`` in iteration ``k``.

    The successive iterate difference is ``worker.monitors()['difference'][k]``.
    """
    return worker.monitors()['residual'][k]


class PararealResult(object):
    r"""
    The outcome of ``run_parareal``.
    """

    def __init__(self, config, iterates, monitors, wall_time):
        self.__config = config
        self.__iterates = iterates
        self.__monitors = monitors
        self.__wall_time = wall_time

    def __repr__(self):
        return 'Parareal result after %d iterations on %d time slices (%.3f seconds)' % (self.iterations(), self.__config.n_slices(), self.__wall_time)

    def config(self):
        return self.__config

    def final_field(self):
        return self.__iterates[-1]

    def iterates(self):
        r"""
        The values on the last slice at T: the coarse guess, then one field per iteration.
        """
        return self.__iterates

    def iterations(self):
        return len(self.__iterates) - 1

    def monitors(self):
        r"""
        A list with the ``monitors()`` dict of every rank.
        """
        return self.__monitors

    def wall_time(self):
        return self.__wall_time

    def defects(self, u_fine):
        r"""
        The defects d^0, ..., d^K against the serial fine solution.
        """
        return [defect(u, u_fine) for u in self.__iterates]


## drivers

def _thread_worker(rank, cfg, u0, channels, barrier, results, errors, verbose):
    try:
        worker = SliceWorker(rank, cfg, u0, channels.endpoint(rank), record_history=rank == cfg.n_slices() - 1, verbose=verbose)
    except Exception as e:
        errors.append((rank, None, '%s: %s' % (type(e).__name__, e), False))
        channels.abort()
        barrier.abort()
        return
    with worker:
        try:
            barrier.wait()
            start = time.perf_counter()
            worker.run()
            results[rank] = (time.perf_counter() - start, worker.monitors(), worker.history())
        except threading.BrokenBarrierError:
            pass
        except Exception as e:
            secondary = isinstance(e, TransportError) and str(e) == 'The run was aborted'
            errors.append((rank, worker.iteration(), str(e) if isinstance(e, TransportError) else '%s: %s' % (type(e).__name__, e), secondary))
            channels.abort()


def _run_threads(cfg, u0, verbose, channels):
    n = cfg.n_slices()
    if channels is None:
        channels = ChannelTransport(n, timeout=cfg.timeout())
    barrier = threading.Barrier(n)
    results, errors = {}, []
    threads = [threading.Thread(target=_thread_worker, args=(rank, cfg, u0, channels, barrier, results, errors, verbose), name='parareal-rank-%d' % rank) for rank in range(n)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if errors:
        errors.sort(key=lambda e: e[3])
        rank, iteration, message, _ = errors[0]
        raise PararealAbort(rank, iteration, message)
    return results


def _process_worker(rank, cfg, u0, send_connections, recv_connections, result_connection, barrier, verbose):
    transport = PipeTransport(cfg.problem().grid(), send_connections, recv_connections, timeout=cfg.timeout())
    worker = None
    try:
        worker = SliceWorker(rank, cfg, u0, transport, record_history=rank == cfg.n_slices() - 1, verbose=verbose)
        barrier.wait(cfg.timeout())
        start = time.perf_counter()
        worker.run()
        result_connection.send(('ok', rank, (time.perf_counter() - start, worker.monitors(), worker.history())))
    except Exception as e:
        iteration = None if worker is None else worker.iteration()
        message = str(e) if isinstance(e, TransportError) else '%s: %s' % (type(e).__name__, e)
        if verbose:
            traceback.print_exc()
        result_connection.send(('error', rank, (iteration, message)))
    finally:
        if worker is not None:
            worker.close()
        transport.close()
        result_connection.close()


def _run_processes(cfg, u0, verbose):
    n = cfg.n_slices()
    ctx = multiprocessing.get_context('spawn')
    send_connections = [{} for _ in range(n)]
    recv_connections = [{} for _ in range(n)]
    for rank in range(n - 1):
        a, b = ctx.Pipe()
        send_connections[rank][rank + 1] = a
        recv_connections[rank + 1][rank] = b
    barrier = ctx.Barrier(n)
    processes, result_connections = [], {}
    for rank in range(n):
        parent, child = ctx.Pipe(duplex=False)
        proc = ctx.Process(target=_process_worker, args=(rank, cfg, u0, send_connections[rank], recv_connections[rank], child, barrier, verbose), name='parareal-rank-%d' % rank)
        proc.start()
        child.close()
        processes.append(proc)
        result_connections[parent] = rank
    for conns in send_connections + recv_connections:
        for conn in conns.values():
            conn.close()
    results = {}
    failure = None
    deadline = cfg.timeout() * (cfg.k_max() + n + 1)
    try:
        pending = dict(result_connections)
        while pending and failure is None:
            ready = wait(list(pending), timeout=deadline)
            if not ready:
                rank = min(pending.values())
                failure = (rank, None, 'Timed out waiting for the result of rank %d' % rank)
                break
            for conn in ready:
                rank = pending.pop(conn)
                try:
                    status, _, payload = conn.recv()
                except (EOFError, OSError):
                    failure = (rank, None, 'The worker process of rank %d died' % rank)
                    break
                if status == 'error':
                    failure = (rank,) + payload
                    break
                results[rank] = payload
    finally:
        for proc in processes:
            if failure is not None and proc.is_alive():
                proc.terminate()
            proc.join()
        for conn in result_connections:
            conn.close()
    if failure is not None:
        raise PararealAbort(*failure)
    return results


def run_parareal(cfg, u0=None, verbose=False, transport=None):
    r"""
    Run Parareal with one concurrent worker per time slice.

    INPUT:

    - ``cfg`` -- a PararealConfig

    - ``u0`` -- (optional) the initial value; by default the benchmark initial condition

    - ``verbose`` -- (default False) if True then every rank reports its iterations

    - ``transport`` -- (optional) a ChannelTransport to use instead of a fresh one (in-process runs only)

    OUTPUT: a PararealResult

    If a worker fails, every other worker is stopped and PararealAbort is raised.

    EXAMPLES::

        >>> from parastencil.parareal import PararealConfig, defect, run_parareal, run_serial_coarse, run_serial_fine
        >>> from parastencil.problem import ProblemSpec
        >>> p = ProblemSpec(8, omega=100, n_fine=256, n_coarse=16)
        >>> cfg = PararealConfig(p, 4, 4)
        >>> u_fine, _ = run_serial_fine(cfg)
        >>> result = run_parareal(cfg)
        >>> result.iterations(), len(result.monitors())
        (4, 4)
        >>> d = result.defects(u_fine)
        >>> len(d), d[1] < d[0], d[-1] <= 1e-10
        (5, True, True)

    The initial guess on the last slice is the serial coarse run::

        >>> d[0] == defect(run_serial_coarse(cfg)[0], u_fine)
        True

    With the fine propagator in place of the coarse one every iterate is exact::

        >>> run_parareal(cfg.with_changes(k_max=2, same_propagators=True)).defects(u_fine)
        [0.0, 0.0, 0.0]
        >>> c1 = PararealConfig(p, 1, 1, same_propagators=True)
        >>> run_parareal(c1).final_field() == run_serial_fine(c1)[0]
        True

    Runs are deterministic, whatever the number of threads::

        >>> cfg = PararealConfig(p, 4, 2)
        >>> run_parareal(cfg).final_field() == run_parareal(cfg.with_changes(threads=2)).final_field()
        True

    Every combination of slices and iterations completes::

        >>> q = ProblemSpec(4, n_fine=48, n_coarse=12)
        >>> all(run_parareal(PararealConfig(q, n, k)).iterations() == k for n in range(1, 5) for k in range(1, 5))
        True
        >>> r = run_parareal(PararealConfig(q, 2, 2, transport='multi_process'))
        >>> r.final_field() == run_parareal(PararealConfig(q, 2, 2)).final_field()
        True

    With a tolerance, ranks stop once their iterates no longer change::

        >>> r = run_parareal(PararealConfig(p, 4, 6, tolerance=1e-12))
        >>> r.iterations() < 6, r.defects(u_fine)[-1] <= 1e-10
        (True, True)
        >>> len(r.monitors()), r.monitors()[0]['difference'][-1]
        (4, 0.0)

    A failing link aborts the whole run::

        >>> from parastencil.parareal import ChannelTransport, TransportError
        >>> class BrokenLink(ChannelTransport):
        ...     def send(self, dest, field, tag, stop=False, src=None):
        ...         raise TransportError('link down')
        >>> run_parareal(PararealConfig(q, 3, 2), transport=BrokenLink(3))
        Traceback (most recent call last):
        ...
        parastencil.parareal.PararealAbort: rank 0 failed in iteration 0: link down
    """
    problem = cfg.problem()
    if u0 is None:
        u0 = initial_condition(problem.grid())
    elif u0.spec() != problem.grid():
        raise ValueError('Incompatible grids')
    if verbose:
        print('I am starting %s.' % cfg)
    if cfg.transport() == 'in_process':
        results = _run_threads(cfg, u0, verbose, transport)
    else:
        if transport is not None:
            raise ValueError('A transport can only be given for in-process runs')
        results = _run_processes(cfg, u0, verbose)
    n = cfg.n_slices()
    wall_time = max(results[rank][0] for rank in range(n))
    monitors = [results[rank][1] for rank in range(n)]
    iterates = results[n - 1][2]
    if verbose:
        print('I finished %d iterations in %.3f seconds.' % (len(iterates) - 1, wall_time))
    return PararealResult(cfg, iterates, monitors, wall_time)
