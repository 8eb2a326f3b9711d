r"""

Runtime, speedup, efficiency and energy models for Parareal

All quantities here are closed-form; times are in seconds, powers in watts, energies in joules.

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

## reference measurements on 4 ... 128 nodes with K = 3 and 2^11 coarse / 2^15 fine steps:
## N_p -> (S_bound, S_measured, E_bound in percent, E_measured in percent)
reference_speedups_cpu = {4: (1.3, 1.3, 32.6, 32.3), 8: (2.6, 2.6, 32.2, 32.2), 16: (5.0, 5.0, 31.4, 31.1), 32: (9.5, 9.5, 29.8, 29.8), 64: (17.4, 17.6, 27.3, 27.5), 128: (29.8, 29.7, 23.3, 23.2)}
reference_speedups_gpu = {4: (1.3, 1.3, 32.5, 32.4), 8: (2.6, 2.6, 32.0, 32.0), 16: (5.0, 5.0, 31.0, 31.0), 32: (9.4, 9.3, 29.4, 29.2), 64: (16.8, 16.6, 26.3, 25.9), 128: (28.0, 26.3, 21.9, 20.5)}
reference_iterations = 3
reference_step_ratio = 2 ** 11 / 2 ** 15

## power per node in watts
node_power = {'cpu': {'node': 133.0, 'network': 25.0, 'blower': 14.0, 'device': 0.0},
              'gpu': {'node': 70.0, 'network': 25.0, 'blower': 14.0, 'device': 135.0}}


def percent(x):
    r"""
    Format a fraction as a percentage with one decimal.

    EXAMPLES::

        >>> from parastencil.perfmodel import percent
        >>> percent(0.29688)
        '29.7'
    """
    return '%.1f' % (100.0 * x)


class PerfParams(object):
    r"""
    Parameters of the Parareal cost model.

    INPUT:

    - ``n_p`` -- number of time slices N_p

    - ``k`` -- number of iterations K

    - ``n_f``, ``n_c`` -- fine and coarse steps per time slice

    - ``tau_f``, ``tau_c`` -- seconds per fine and per coarse step

    - ``tau_f_min``, ``tau_f_max`` -- (optional) the range of tau_f between saturated strong scaling and a
      single core

    EXAMPLES::

        >>> from parastencil.perfmodel import PerfParams
        >>> PerfParams(4, 3, 16, 1, 1.0, 0.2)
        Cost model parameters N_p = 4, K = 3, N_f = 16, N_c = 1, tau_f = 1.0, tau_c = 0.2
        >>> PerfParams(4, 3, 16, 1, 1.0, 0.2, tau_f_min=2.0)
        Traceback (most recent call last):
        ...
        ValueError: tau_f is outside [tau_f_min, tau_f_max]
    """

    def __init__(self, n_p, k, n_f, n_c, tau_f, tau_c, tau_f_min=None, tau_f_max=None):
        if min(n_p, k, n_f, n_c) < 1:
            raise ValueError('Counts must be positive')
        if tau_f <= 0 or tau_c < 0:
            raise ValueError('Step times must be positive')
        if (tau_f_min is not None and tau_f < tau_f_min) or (tau_f_max is not None and tau_f > tau_f_max):
            raise ValueError('tau_f is outside [tau_f_min, tau_f_max]')
        self.__n_p = int(n_p)
        self.__k = int(k)
        self.__n_f = int(n_f)
        self.__n_c = int(n_c)
        self.__tau_f = float(tau_f)
        self.__tau_c = float(tau_c)
        self.__tau_f_min = tau_f_min
        self.__tau_f_max = tau_f_max

    def __repr__(self):
        return 'Cost model parameters N_p = %d, K = %d, N_f = %d, N_c = %d, tau_f = %s, tau_c = %s' % (self.__n_p, self.__k, self.__n_f, self.__n_c, self.__tau_f, self.__tau_c)

    def n_p(self):
        return self.__n_p

    def k(self):
        return self.__k

    def n_f(self):
        return self.__n_f

    def n_c(self):
        return self.__n_c

    def tau_f(self):
        return self.__tau_f

    def tau_c(self):
        return self.__tau_c

    def tau_f_min(self):
        return self.__tau_f_min

    def tau_f_max(self):
        return self.__tau_f_max

    def ratio(self):
        r"""
        tau_c / tau_f
        """
        return self.__tau_c / self.__tau_f

    def with_changes(self, **kwargs):
        r"""
        A copy of self with some parameters replaced.

        EXAMPLES::

            >>> from parastencil.perfmodel import PerfParams
            >>> PerfParams(4, 3, 16, 1, 1.0, 0.2).with_changes(n_p=8).n_p()
            8
        """
        d = dict(n_p=self.__n_p, k=self.__k, n_f=self.__n_f, n_c=self.__n_c, tau_f=self.__tau_f, tau_c=self.__tau_c, tau_f_min=self.__tau_f_min, tau_f_max=self.__tau_f_max)
        d.update(kwargs)
        return PerfParams(**d)


def cost_serial(p):
    r"""
    Runtime N_p N_f tau_f of the fine method run serially.

    EXAMPLES::

        >>> from parastencil.perfmodel import PerfParams, cost_serial
        >>> cost_serial(PerfParams(1, 1, 1, 1, 1.0, 0.0)), cost_serial(PerfParams(4, 1, 10, 1, 0.5, 0.0))
        (1.0, 20.0)
    """
    return p.n_p() * p.n_f() * p.tau_f()


def cost_serial_range(p):
    r"""
    The serial runtime for tau_f_min and tau_f_max (None where a bound is not given).
    """
    n_t = p.n_p() * p.n_f()
    return tuple(None if t is None else n_t * t for t in (p.tau_f_min(), p.tau_f_max()))


def cost_parareal(p):
    r"""
    Runtime (N_p + K) N_c tau_c + K N_f tau_f of pipelined Parareal, ignoring communication.

    EXAMPLES::

        >>> from parastencil.perfmodel import PerfParams, cost_parareal
        >>> cost_parareal(PerfParams(4, 3, 8, 2, 1.0, 1.0))
        38.0
        >>> cost_parareal(PerfParams(4, 3, 8, 2, 1.0, 0.0))
        24.0
    """
    return (p.n_p() + p.k()) * p.n_c() * p.tau_c() + p.k() * p.n_f() * p.tau_f()


def speedup_bound(p):
    r"""
    The speedup bound S_bound = C_f / C_p with its two corollary bounds.

    OUTPUT: a tuple (S_bound, N_p / K, (N_f / N_c) (tau_f / tau_c)); the last entry is infinite for tau_c = 0

    EXAMPLES::

        >>> from parastencil.perfmodel import PerfParams, speedup_bound
        >>> speedup_bound(PerfParams(8, 2, 16, 1, 1.0, 0.0))
        (4.0, 4.0, inf)

    S_bound is C_f / C_p and lies below both corollary bounds::

        >>> import numpy as np
        >>> from parastencil.perfmodel import cost_parareal, cost_serial
        >>> rng = np.random.default_rng(0)
        >>> ok = True
        >>> for _ in range(1000):
        ...     n_p, k, n_c = (int(x) for x in rng.integers(1, 129, size=3))
        ...     p = PerfParams(n_p, k, n_c * int(rng.integers(1, 65)), n_c, float(rng.uniform(0.1, 2)), float(rng.uniform(0, 2)))
        ...     s, b1, b2 = speedup_bound(p)
        ...     ok = ok and abs(s - cost_serial(p) / cost_parareal(p)) <= 1e-12 * s and s <= min(b1, b2) * (1 + 1e-12)
        >>> ok
        True
        >>> [round(speedup_bound(PerfParams(n, 3, 16, 1, 1.0, 0.1))[0], 2) for n in (4, 8, 16)]
        [1.31, 2.61, 5.13]
    """
    k_over_n = p.k() / p.n_p()
    s = 1.0 / ((1.0 + k_over_n) * (p.n_c() / p.n_f()) * p.ratio() + k_over_n)
    if p.tau_c():
        second = (p.n_f() / p.n_c()) / p.ratio()
    else:
        second = math.inf
    return s, p.n_p() / p.k(), second


def efficiencies(p, s_measured):
    r"""
    The efficiencies E_bound = S_bound / N_p and E_measured = S_measured / N_p, as fractions.

    EXAMPLES::

        >>> from parastencil.perfmodel import PerfParams, efficiencies, percent
        >>> p = PerfParams(32, 3, 16, 1, 1.0, 0.1)
        >>> efficiencies(p, 32)[1]
        1.0
        >>> percent(efficiencies(p, 9.5)[1])
        '29.7'
    """
    if s_measured < 0:
        raise ValueError('The measured speedup must be nonnegative')
    return speedup_bound(p)[0] / p.n_p(), s_measured / p.n_p()


def back_solve_ratio(s_bound, n_p, k, step_ratio):
    r"""
    The ratio tau_c / tau_f for which S_bound(n_p) equals ``s_bound``.

    INPUT:

    - ``s_bound`` -- a reported speedup bound

    - ``n_p``, ``k`` -- slices and iterations

    - ``step_ratio`` -- N_c / N_f

    EXAMPLES::

        >>> from parastencil.perfmodel import PerfParams, back_solve_ratio, speedup_bound
        >>> r = back_solve_ratio(2.5, 8, 3, 1 / 16)
        >>> abs(speedup_bound(PerfParams(8, 3, 16, 1, 1.0, r))[0] - 2.5) < 1e-12
        True
        >>> back_solve_ratio(3.0, 8, 3, 1 / 16)
        Traceback (most recent call last):
        ...
        ValueError: A speedup bound of 3.0 is not attainable with N_p = 8 and K = 3
    """
    k_over_n = k / n_p
    r = (1.0 / s_bound - k_over_n) / ((1.0 + k_over_n) * step_ratio)
    if r < 0:
        raise ValueError('A speedup bound of %s is not attainable with N_p = %d and K = %d' % (s_bound, n_p, k))
    return r


def reference_ratio(backend='cpu'):
    r"""
    tau_c / tau_f back-solved from the four node row of the reference measurements.

    The efficiency column carries one more digit than the speedup column, so S_bound = N_p E_bound is used.

    EXAMPLES::

        >>> from parastencil.perfmodel import PerfParams, speedup_bound, reference_speedups_cpu, reference_ratio
        >>> r = reference_ratio()
        >>> round(r, 4)
        0.1543
        >>> def model(n):
        ...     return speedup_bound(PerfParams(n, 3, 16, 1, 1.0, r))[0]
        >>> all(abs(model(n) - row[0]) <= 0.3 and abs(100 * model(n) / n - row[2]) <= 0.6 for n, row in reference_speedups_cpu.items())
        True
        >>> round(model(128), 1)
        30.0
    """
    table = {'cpu': reference_speedups_cpu, 'gpu': reference_speedups_gpu}[backend]
    e_bound = table[4][2] / 100.0
    return back_solve_ratio(4 * e_bound, 4, reference_iterations, reference_step_ratio)


class EnergyParams(object):
    r"""
    Per-node powers and runtimes of a serial and a parallel run.

    INPUT:

    - ``power_node``, ``power_network``, ``power_blower``, ``power_device`` -- watts per node;
      ``power_device`` = 0 describes a CPU-only run

    - ``t_serial``, ``t_parallel`` -- runtimes in seconds

    - ``n_p`` -- number of nodes of the parallel run

    EXAMPLES::

        >>> from parastencil.perfmodel import EnergyParams
        >>> EnergyParams.from_table('gpu', 10.0, 1.0, 32).power_total()
        244.0
    """

    def __init__(self, power_node, power_network, power_blower, power_device=0.0, t_serial=0.0, t_parallel=0.0, n_p=1):
        if min(power_node, power_network, power_blower, power_device, t_serial, t_parallel) < 0:
            raise ValueError('Powers and times must be nonnegative')
        if n_p < 1:
            raise ValueError('The number of nodes must be positive')
        self.__power_node = float(power_node)
        self.__power_network = float(power_network)
        self.__power_blower = float(power_blower)
        self.__power_device = float(power_device)
        self.__t_serial = float(t_serial)
        self.__t_parallel = float(t_parallel)
        self.__n_p = int(n_p)

    @classmethod
    def from_table(cls, backend, t_serial, t_parallel, n_p):
        try:
            w = node_power[backend]
        except KeyError:
            raise ValueError('Unknown backend %r' % backend) from None
        return cls(w['node'], w['network'], w['blower'], w['device'], t_serial, t_parallel, n_p)

    def __repr__(self):
        return 'Energy parameters %s W per node on %d nodes, T_s = %s, T_p = %s' % (self.power_total(), self.__n_p, self.__t_serial, self.__t_parallel)

    def t_serial(self):
        return self.__t_serial

    def t_parallel(self):
        return self.__t_parallel

    def n_p(self):
        return self.__n_p

    def components(self):
        r"""
        The per-node powers by component.

        EXAMPLES::

            >>> from parastencil.perfmodel import EnergyParams
            >>> EnergyParams.from_table('cpu', 1.0, 1.0, 4).components()
            {'node': 133.0, 'network': 25.0, 'blower': 14.0, 'device': 0.0}
        """
        return {'node': self.__power_node, 'network': self.__power_network, 'blower': self.__power_blower, 'device': self.__power_device}

    def power_total(self):
        return self.__power_node + self.__power_network + self.__power_blower + self.__power_device


class EnergyReport(object):
    r"""
    Energies and overhead ratios computed by ``energy_model``.
    """

    def __init__(self, power_per_node, q_serial, q_parallel, stack, gamma_measured, gamma_ideal, gamma_bound):
        self.__power_per_node = power_per_node
        self.__q_serial = q_serial
        self.__q_parallel = q_parallel
        self.__stack = dict(stack)
        self.__gamma_measured = gamma_measured
        self.__gamma_ideal = gamma_ideal
        self.__gamma_bound = gamma_bound

    def __repr__(self):
        return 'Energy report: %s W per node, Q_s = %.4g J, Q_p = %.4g J, gamma = %.4g' % (self.__power_per_node, self.__q_serial, self.__q_parallel, self.__gamma_measured)

    def power_per_node(self):
        return self.__power_per_node

    def q_serial(self):
        return self.__q_serial

    def q_parallel(self):
        return self.__q_parallel

    def stack(self):
        r"""
        Energy of the parallel run per power component, in joules.
        """
        return dict(self.__stack)

    def gamma_measured(self):
        return self.__gamma_measured

    def gamma_ideal(self):
        return self.__gamma_ideal

    def gamma_bound(self):
        return self.__gamma_bound


def energy_model(e, baseline=None, s_bound=None):
    r"""
    Energy to solution of a serial and a parallel run and the overhead ratios.

    INPUT:

    - ``e`` -- EnergyParams of the parallel run

    - ``baseline`` -- (optional) EnergyParams of the serial run on one node; by default the powers of ``e``

    - ``s_bound`` -- (optional) the speedup bound; needed for gamma_bound = N_p / S_bound

    OUTPUT: an EnergyReport with Q_s = P_s T_s, Q_p = N_p P_p T_p, the per-component energies of the
    parallel run, gamma_measured = Q_p / Q_s, gamma_ideal = N_p / S_p (S_p = T_s / T_p) and gamma_bound

    EXAMPLES::

        >>> from parastencil.perfmodel import EnergyParams, energy_model
        >>> cpu = energy_model(EnergyParams.from_table('cpu', 100.0, 10.0, 32), s_bound=9.5)
        >>> cpu.power_per_node(), cpu.q_serial(), cpu.q_parallel()
        (172.0, 17200.0, 55040.0)
        >>> cpu.gamma_measured(), cpu.gamma_ideal(), abs(cpu.gamma_bound() * 9.5 - 32) < 1e-12
        (3.2, 3.2, True)
        >>> abs(energy_model(EnergyParams.from_table('gpu', 1.0, 1.0, 1)).power_per_node() - 245) <= 1
        True
        >>> energy_model(EnergyParams.from_table('cpu', 8.0, 1.0, 8)).gamma_ideal()
        1.0
        >>> energy_model(EnergyParams.from_table('cpu', 0.0, 1.0, 8))
        Traceback (most recent call last):
        ...
        ValueError: The serial run used no energy
    """
    if baseline is None:
        baseline = e
    p_parallel = e.power_total()
    q_serial = baseline.power_total() * baseline.t_serial()
    if not q_serial:
        raise ValueError('The serial run used no energy')
    n_p, t_parallel = e.n_p(), e.t_parallel()
    q_parallel = n_p * p_parallel * t_parallel
    stack = {name: n_p * w * t_parallel for name, w in e.components().items()}
    if t_parallel:
        gamma_ideal = n_p / (baseline.t_serial() / t_parallel)
    else:
        gamma_ideal = 0.0
    gamma_bound = None if s_bound is None else n_p / s_bound
    return EnergyReport(p_parallel, q_serial, q_parallel, stack, q_parallel / q_serial, gamma_ideal, gamma_bound)
