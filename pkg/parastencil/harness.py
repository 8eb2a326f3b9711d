r"""

Command line interface and experiment orchestration

The subcommands are

- ``run`` -- one serial fine, serial coarse or Parareal run

- ``convergence`` -- defects d^k for a sweep over the number of slices and omega

- ``speedup`` -- measured speedup and efficiency next to the model bounds

- ``threads`` -- speedup of the stencil sweeps over the number of threads per worker

- ``energy`` -- modeled energy to solution from the records of a speedup study

- ``selftest`` -- the acceptance checks at desk scale

Every subcommand writes a CSV file of RunRecords (``--output``) and its resolved configuration beside it.
The configuration comes from the defaults in ``CONFIG_KEYS``, then a flat JSON file (``--config`` or the
environment variable PARASTENCIL_CONFIG), then the command line.

Exit codes: 0 success, 2 configuration error, 3 failure of a worker or the transport, 4 failed acceptance check.

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

import argparse
import csv
import json
import os
import sys

import numpy as np

from .grid import GridSpec, field_from_interior, mean, random_field
from .integrators import Propagator, SliceInterval, measure_step_time, propagate_coarse, propagate_fine
from .parareal import PararealAbort, PararealConfig, defect, run_parareal, run_serial_coarse, run_serial_fine
from .perfmodel import EnergyParams, PerfParams, efficiencies, energy_model, percent, speedup_bound, reference_speedups_cpu, reference_ratio, node_power
from .problem import ConvergenceReport, ProblemSpec, amplitude, amplitude_ode, exact_solution, initial_condition, relative_error, semidiscrete_amplitude
from .stencils import StencilCoeffs, rhs_coarse, rhs_fine

config_environment_variable = 'PARASTENCIL_CONFIG'

## key -> (default, help)
CONFIG_KEYS = {
    'mode': ('parareal', 'one of %s' % ', '.join(('serial_fine', 'serial_coarse', 'parareal', 'convergence_study', 'speedup_study', 'thread_sweep', 'energy_report', 'selftest'))),
    'nx': (32, 'grid points per axis'),
    'n_fine': (2048, 'total number of fine steps N_t'),
    'n_coarse': (128, 'total number of coarse steps'),
    'T': (0.1, 'end time'),
    'nu0': (0.1, 'base diffusion coefficient'),
    'omega': (100.0, 'frequency of the diffusion coefficient'),
    'c': ([1.0, 1.0, 1.0], 'advection velocity'),
    'n_slices': (8, 'time slices N_p of a single Parareal run'),
    'k_max': (3, 'Parareal iterations K'),
    'transport': (None, "'in_process' or 'multi_process'; by default multi_process for timing studies"),
    'threads': (1, 'threads per worker'),
    'same_propagators': (False, 'use the fine propagator as coarse propagator'),
    'tolerance': (None, 'stop ranks early once iterates change by less than this'),
    'timeout': (None, 'seconds a blocking receive may wait'),
    'repetitions': (3, 'timed repetitions of the step time microbenchmark'),
    'slice_counts': ([4, 8], 'values of N_p in sweeps'),
    'omegas': ([0.0, 100.0], 'values of omega in the convergence study'),
    'thread_counts': ([1, 2, 4], 'threads per worker in the thread sweep'),
    'tau_ratio': (None, 'tau_c / tau_f for the model instead of a measurement'),
    'backend': ('cpu', "power table for the energy model, 'cpu' or 'gpu'"),
    'speedup_csv': (None, 'records of a speedup study for the energy report'),
    'output': ('parastencil_results.csv', 'CSV file for the records'),
}

modes = ('serial_fine', 'serial_coarse', 'parareal', 'convergence_study', 'speedup_study', 'thread_sweep', 'energy_report', 'selftest')

timing_modes = ('speedup_study', 'thread_sweep')


class ExperimentConfig(object):
    r"""
    The resolved configuration of one experiment.

    Keyword arguments are the keys of ``CONFIG_KEYS``; missing keys take their default.

    EXAMPLES::

        >>> from parastencil.harness import ExperimentConfig
        >>> cfg = ExperimentConfig(nx=8, n_fine=256, n_coarse=16, n_slices=4)
        >>> cfg.problem(omega=0)
        Advection-diffusion problem with c = (1.0, 1.0, 1.0), nu0 = 0.1, omega = 0.0, T = 0.1 on 8^3 points, 256 fine / 16 coarse steps
        >>> cfg.parareal()
        Parareal configuration with 4 time slices and 3 iterations (in_process transport)
        >>> ExperimentConfig(mode='speedup_study').transport()
        'multi_process'
        >>> ExperimentConfig(colour='red')
        Traceback (most recent call last):
        ...
        ValueError: Unknown configuration key 'colour'
        >>> ExperimentConfig(repetitions=0)
        Traceback (most recent call last):
        ...
        ValueError: repetitions must be at least 1
    """

    def __init__(self, **kwargs):
        for key in kwargs:
            if key not in CONFIG_KEYS:
                raise ValueError('Unknown configuration key %r' % key)
        values = {key: default for key, (default, _) in CONFIG_KEYS.items()}
        values.update({key: value for key, value in kwargs.items() if value is not None})
        if values['mode'] not in modes:
            raise ValueError('Unknown mode %r' % values['mode'])
        for key in ('nx', 'n_fine', 'n_coarse', 'n_slices', 'k_max', 'threads', 'repetitions'):
            values[key] = int(values[key])
        if values['repetitions'] < 1:
            raise ValueError('repetitions must be at least 1')
        for key in ('slice_counts', 'thread_counts'):
            values[key] = [int(x) for x in values[key]]
        values['omegas'] = [float(x) for x in values['omegas']]
        values['c'] = [float(x) for x in values['c']]
        if values['backend'] not in node_power:
            raise ValueError('Unknown backend %r' % values['backend'])
        self.__values = values
        ## validate the sub-configurations now
        self.parareal()

    def __repr__(self):
        return 'Experiment configuration for mode %s' % self.__values['mode']

    def __getitem__(self, key):
        return self.__values[key]

    def mode(self):
        return self.__values['mode']

    def output(self):
        return self.__values['output']

    def to_dict(self):
        return dict(self.__values)

    def with_changes(self, **kwargs):
        d = self.to_dict()
        d.update(kwargs)
        return ExperimentConfig(**d)

    def transport(self):
        t = self.__values['transport']
        if t is None:
            return 'multi_process' if self.__values['mode'] in timing_modes else 'in_process'
        return t

    def problem(self, omega=None):
        v = self.__values
        if omega is None:
            omega = v['omega']
        return ProblemSpec(GridSpec(v['nx']), c=v['c'], nu0=v['nu0'], omega=omega, T=v['T'], n_fine=v['n_fine'], n_coarse=v['n_coarse'])

    def parareal(self, n_slices=None, omega=None, **kwargs):
        v = self.__values
        d = dict(transport=self.transport(), threads=v['threads'], same_propagators=v['same_propagators'], tolerance=v['tolerance'], timeout=v['timeout'])
        d.update(kwargs)
        return PararealConfig(self.problem(omega), v['n_slices'] if n_slices is None else n_slices, v['k_max'], **d)

    @classmethod
    def from_json(cls, path, **overrides):
        r"""
        Read a flat JSON object of configuration keys; ``overrides`` (if not None) replace file values.
        """
        with open(path) as f:
            values = json.load(f)
        if not isinstance(values, dict):
            raise ValueError('The configuration file must hold a JSON object')
        values.update({key: value for key, value in overrides.items() if value is not None})
        return cls(**values)

    def write(self, path):
        with open(path, 'w') as f:
            json.dump(self.__values, f, indent=2, sort_keys=True)


class RunRecord(object):
    r"""
    One row of results; fields are read with ``r[key]``.

    EXAMPLES::

        >>> from parastencil.harness import RunRecord
        >>> r = RunRecord('parareal', n_p=4, k=2, threads=1, wall_seconds=0.25, defect_series=[0.04, 1e-3, 2.5e-06], eps_fine=1e-5)
        >>> r
        Record of a parareal run with N_p = 4, K = 2
        >>> r.mode(), r['k'], r['speedup']
        ('parareal', 2, None)
        >>> row = r.to_row()
        >>> row['defect_series'], row['speedup']
        ('0.04;0.001;2.5e-06', '')
        >>> RunRecord.from_row(row) == r
        True
        >>> r['defect_series'].append(1.0)
        >>> len(r['defect_series'])
        3
        >>> RunRecord('parareal', n_p=4, k=3, defect_series=[0.1])
        Traceback (most recent call last):
        ...
        ValueError: The defect series must have K + 1 entries
        >>> RunRecord('parareal', wall_seconds=-1.0)
        Traceback (most recent call last):
        ...
        ValueError: wall_seconds must be nonnegative
    """

    ints = ('n_p', 'k', 'threads')
    floats = ('omega', 'wall_seconds', 'serial_seconds', 'tau_f', 'tau_c', 'eps_fine', 'speedup', 's_bound', 'efficiency', 'e_bound',
              'energy_joules', 'energy_node', 'energy_network', 'energy_blower', 'energy_device', 'gamma', 'gamma_bound')
    fields = ('mode', 'transport') + ints + floats + ('defect_series', 'oversubscribed')

    def __init__(self, mode, transport=None, defect_series=(), oversubscribed=False, **kwargs):
        for key in kwargs:
            if key not in self.ints + self.floats:
                raise ValueError('Unknown record field %r' % key)
        values = {'mode': mode, 'transport': transport}
        for key in self.ints:
            value = kwargs.get(key)
            values[key] = None if value is None else int(value)
        for key in self.floats:
            value = kwargs.get(key)
            values[key] = None if value is None else float(value)
        for key in self.ints + self.floats:
            if values[key] is not None and values[key] < 0:
                raise ValueError('%s must be nonnegative' % key)
        values['defect_series'] = tuple(float(d) for d in defect_series)
        if values['defect_series'] and values['k'] is not None and len(values['defect_series']) != values['k'] + 1:
            raise ValueError('The defect series must have K + 1 entries')
        values['oversubscribed'] = bool(oversubscribed)
        self.__values = values

    def __repr__(self):
        s = 'Record of a %s run' % self.mode()
        if self['n_p'] is not None:
            s += ' with N_p = %d' % self['n_p']
        if self['k'] is not None:
            s += ', K = %d' % self['k']
        return s

    def __eq__(self, other):
        try:
            return all(self[key] == other[key] for key in self.fields)
        except (KeyError, TypeError):
            return False

    __hash__ = None

    def __getitem__(self, key):
        value = self.__values[key]
        if key == 'defect_series':
            return list(value)
        return value

    def mode(self):
        return self.__values['mode']

    def to_row(self):
        r"""
        The record as a dict of strings; floats are written with ``repr`` so that rows read back exactly.
        """
        row = {'mode': self.mode(), 'transport': self['transport'] or ''}
        for key in self.ints + self.floats:
            value = self[key]
            row[key] = '' if value is None else repr(value)
        row['defect_series'] = ';'.join(repr(d) for d in self['defect_series'])
        row['oversubscribed'] = '1' if self['oversubscribed'] else '0'
        return row

    @classmethod
    def from_row(cls, row):
        kwargs = {}
        for key in cls.ints:
            if row.get(key):
                kwargs[key] = int(row[key])
        for key in cls.floats:
            if row.get(key):
                kwargs[key] = float(row[key])
        series = [float(x) for x in row['defect_series'].split(';')] if row.get('defect_series') else []
        return cls(row['mode'], transport=row.get('transport') or None, defect_series=series, oversubscribed=row.get('oversubscribed') == '1', **kwargs)

    def to_dict(self):
        return {key: self[key] for key in self.fields}


def write_records(records, path):
    with open(path, 'w', newline='') as f:
        writer = csv.DictWriter(f, fieldnames=RunRecord.fields)
        writer.writeheader()
        for r in records:
            writer.writerow(r.to_row())


def read_records(path):
    with open(path, newline='') as f:
        return [RunRecord.from_row(row) for row in csv.DictReader(f)]


def _write_table(path, header, rows):
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(rows)


def defect_table(records):
    r"""
    Rows (n_p, omega, k, defect) of all records with a defect series.

    EXAMPLES::

        >>> from parastencil.harness import RunRecord, defect_table
        >>> defect_table([RunRecord('convergence_study', n_p=4, k=1, omega=0, defect_series=[0.5, 0.25])])
        [(4, 0.0, 0, 0.5), (4, 0.0, 1, 0.25)]
    """
    return [(r['n_p'], r['omega'], k, d) for r in records for k, d in enumerate(r['defect_series'])]


def _stem(path):
    return os.path.splitext(path)[0]


def _oversubscribed(n_p, threads):
    return n_p * threads > (os.cpu_count() or 1)


## studies

def cmd_run(cfg, verbose=False):
    r"""
    One run in the mode of ``cfg``: 'serial_fine', 'serial_coarse' or 'parareal'.

    A Parareal run is compared with a serial fine run for the defects and the measured speedup.

    EXAMPLES::

        >>> from parastencil.harness import ExperimentConfig, cmd_run
        >>> cfg = ExperimentConfig(mode='parareal', nx=4, n_fine=48, n_coarse=12, n_slices=4, k_max=4)
        >>> [r] = cmd_run(cfg)
        >>> r['k'], len(r['defect_series']), r['defect_series'][-1] <= 1e-10
        (4, 5, True)
        >>> [r] = cmd_run(cfg.with_changes(mode='serial_coarse'))
        >>> r['eps_fine'] > 0
        True
    """
    mode = cfg.mode()
    pcfg = cfg.parareal()
    problem = pcfg.problem()
    if mode == 'serial_fine':
        u, seconds = run_serial_fine(pcfg, verbose=verbose)
    elif mode == 'serial_coarse':
        u, seconds = run_serial_coarse(pcfg, verbose=verbose)
    elif mode == 'parareal':
        u_fine, serial_seconds = run_serial_fine(pcfg, verbose=verbose)
        result = run_parareal(pcfg, verbose=verbose)
        s = serial_seconds / result.wall_time() if result.wall_time() else None
        return [RunRecord(mode, transport=pcfg.transport(), n_p=pcfg.n_slices(), k=result.iterations(), threads=pcfg.threads(), omega=problem.omega(),
                          wall_seconds=result.wall_time(), serial_seconds=serial_seconds, defect_series=result.defects(u_fine),
                          eps_fine=relative_error(u_fine, problem.T(), problem), speedup=s, oversubscribed=_oversubscribed(pcfg.n_slices(), pcfg.threads()))]
    else:
        raise ValueError('The run command does not handle mode %r' % mode)
    return [RunRecord(mode, n_p=pcfg.n_slices(), threads=pcfg.threads(), omega=problem.omega(), wall_seconds=seconds, eps_fine=relative_error(u, problem.T(), problem))]


def cmd_convergence(cfg, verbose=False):
    r"""
    The defects d^0, ..., d^K for every combination of ``slice_counts`` and ``omegas``.

    The record field ``eps_fine`` is the relative error of the serial fine run against the exact solution.

    EXAMPLES::

        >>> from parastencil.harness import ExperimentConfig, cmd_convergence
        >>> cfg = ExperimentConfig(nx=8, n_fine=256, n_coarse=16, k_max=4, slice_counts=[2, 4], omegas=[0, 100])
        >>> records = cmd_convergence(cfg)
        >>> [(r['n_p'], r['omega']) for r in records]
        [(2, 0.0), (2, 100.0), (4, 0.0), (4, 100.0)]
        >>> all(r['defect_series'][1] < r['defect_series'][0] for r in records)
        True
        >>> records[-1]['defect_series'][-1] <= 1e-10
        True
    """
    records = []
    for n_p in cfg['slice_counts']:
        for omega in cfg['omegas']:
            pcfg = cfg.parareal(n_slices=n_p, omega=omega)
            problem = pcfg.problem()
            u_fine, _ = run_serial_fine(pcfg)
            u_coarse, _ = run_serial_coarse(pcfg)
            eps_fine = relative_error(u_fine, problem.T(), problem)
            result = run_parareal(pcfg, verbose=verbose)
            defects = result.defects(u_fine)
            exact_norm = exact_solution(problem.grid(), problem.T(), problem).inf_norm()
            report = ConvergenceReport(defects, eps_fine, relative_error(u_coarse, problem.T(), problem), relative_error(result.final_field(), problem.T(), problem),
                                       fine_to_exact=u_fine.inf_norm() / exact_norm)
            if verbose:
                print('N_p = %d, omega = %s: defects %s, fine accuracy after %s iterations.' % (n_p, omega, ', '.join('%.2e' % d for d in defects), report.iterations_to_fine_accuracy()))
                if not report.satisfies_bound(rtol=1e-8):
                    print('Warning: the Parareal error exceeds d^K + eps_fine for N_p = %d, omega = %s.' % (n_p, omega))
            records.append(RunRecord('convergence_study', transport=pcfg.transport(), n_p=n_p, k=result.iterations(), threads=pcfg.threads(), omega=omega,
                                     wall_seconds=result.wall_time(), defect_series=defects, eps_fine=eps_fine))
    return records


def measure_ratio(cfg, problem=None):
    r"""
    The step times (tau_f, tau_c) on one worker with the configured number of threads.

    If ``tau_ratio`` is configured then tau_c is tau_ratio * tau_f.
    """
    if problem is None:
        problem = cfg.problem()
    tau_f = measure_step_time('fine_rk4', problem, threads=cfg['threads'], repetitions=cfg['repetitions'])
    if cfg['tau_ratio'] is not None:
        return tau_f, cfg['tau_ratio'] * tau_f
    kind = 'fine_rk4' if cfg['same_propagators'] else 'coarse_euler'
    return tau_f, measure_step_time(kind, problem, threads=cfg['threads'], repetitions=cfg['repetitions'])


def cmd_speedup(cfg, verbose=False):
    r"""
    Measured speedup and efficiency of Parareal with K = ``k_max`` next to the model bounds, for every N_p in ``slice_counts``.

    The serial reference is one worker with the same number of threads. Runs with more lanes than cores
    are marked ``oversubscribed``.
    """
    problem = cfg.problem()
    tau_f, tau_c = measure_ratio(cfg, problem)
    records = []
    serial_seconds = None
    for n_p in cfg['slice_counts']:
        pcfg = cfg.parareal(n_slices=n_p)
        if serial_seconds is None:
            u_fine, serial_seconds = run_serial_fine(pcfg, verbose=verbose)
        result = run_parareal(pcfg, verbose=verbose)
        s = serial_seconds / result.wall_time()
        p = PerfParams(n_p, cfg['k_max'], pcfg.n_fine_per_slice(), pcfg.n_coarse_per_slice(), tau_f, tau_c)
        s_bound = speedup_bound(p)[0]
        e_bound, e_measured = efficiencies(p, s)
        over = _oversubscribed(n_p, pcfg.threads())
        if over:
            print('Warning: N_p = %d with %d threads per worker oversubscribes %d cores.' % (n_p, pcfg.threads(), os.cpu_count() or 1))
        records.append(RunRecord('speedup_study', transport=pcfg.transport(), n_p=n_p, k=result.iterations(), threads=pcfg.threads(), omega=problem.omega(),
                                 wall_seconds=result.wall_time(), serial_seconds=serial_seconds, tau_f=tau_f, tau_c=tau_c,
                                 defect_series=result.defects(u_fine), speedup=s, s_bound=s_bound, efficiency=e_measured, e_bound=e_bound, oversubscribed=over))
    if verbose:
        print(speedup_table(records))
    return records


def speedup_table(records):
    r"""
    A text table with the columns # Nodes, S_bound, S_measured, E_bound, E_measured (percent).

    EXAMPLES::

        >>> from parastencil.harness import RunRecord, speedup_table
        >>> print(speedup_table([RunRecord('speedup_study', n_p=4, s_bound=1.304, speedup=1.29, e_bound=0.326, efficiency=0.323)]))
        N_p  S_bound  S_measured  E_bound  E_measured
          4      1.3         1.3     32.6        32.3
    """
    lines = ['N_p  S_bound  S_measured  E_bound  E_measured']
    for r in records:
        lines.append('%3d  %7.1f  %10.1f  %7s  %10s' % (r['n_p'], r['s_bound'], r['speedup'], percent(r['e_bound']), percent(r['efficiency'])))
    return '\n'.join(lines)


def cmd_thread_sweep(cfg, verbose=False):
    r"""
    Parareal wall time over ``thread_counts`` threads per worker, for every N_p in ``slice_counts``.

    The record field ``speedup`` is the spatial speedup against one thread per worker. The solution must not
    depend on the number of threads.

    EXAMPLES::

        >>> from parastencil.harness import ExperimentConfig, cmd_thread_sweep
        >>> cfg = ExperimentConfig(mode='thread_sweep', transport='in_process', nx=8, n_fine=64, n_coarse=16, k_max=2, slice_counts=[2], thread_counts=[1, 2])
        >>> [(r['threads'], r['speedup'] > 0) for r in cmd_thread_sweep(cfg)]
        [(1, True), (2, True)]
    """
    records = []
    curves = {}
    for n_p in cfg['slice_counts']:
        base_seconds = None
        reference = None
        previous = None
        for threads in cfg['thread_counts']:
            pcfg = cfg.parareal(n_slices=n_p, threads=threads)
            result = run_parareal(pcfg)
            if reference is None:
                reference = result.final_field()
                base_seconds = result.wall_time()
            elif result.final_field() != reference:
                print('Warning: the solution for %d threads differs from the solution for %d threads.' % (threads, cfg['thread_counts'][0]))
            s = base_seconds / result.wall_time()
            if verbose and previous is not None and s < previous:
                print('Warning: the speedup with %d threads per worker (N_p = %d) is below the speedup with fewer threads.' % (threads, n_p))
            previous = s
            curves.setdefault(n_p, []).append(s)
            records.append(RunRecord('thread_sweep', transport=pcfg.transport(), n_p=n_p, k=result.iterations(), threads=threads, omega=pcfg.problem().omega(),
                                     wall_seconds=result.wall_time(), speedup=s, oversubscribed=_oversubscribed(n_p, threads)))
            if verbose:
                print('N_p = %d, %d threads per worker: %.3f seconds, speedup %.2f.' % (n_p, threads, result.wall_time(), s))
    if verbose and len(curves) > 1:
        spread = max(max(c) - min(c) for c in zip(*curves.values()))
        print('The speedup curves for N_p = %s differ by at most %.2f.' % (', '.join(str(n) for n in curves), spread))
    return records


def cmd_energy(cfg, records=None, verbose=False):
    r"""
    Modeled energy to solution for the records of a speedup study.

    INPUT:

    - ``cfg`` -- an ExperimentConfig; ``backend`` selects the power table and ``speedup_csv`` the records to read

    - ``records`` -- (optional) RunRecords of a speedup study, instead of ``speedup_csv``

    EXAMPLES::

        >>> from parastencil.harness import ExperimentConfig, RunRecord, cmd_energy
        >>> runs = [RunRecord('speedup_study', n_p=8, wall_seconds=10.0, serial_seconds=80.0, speedup=8.0, s_bound=8.0)]
        >>> [e] = cmd_energy(ExperimentConfig(mode='energy_report'), records=runs)
        >>> e['energy_joules'], e['gamma'], e['gamma_bound']
        (13760.0, 1.0, 1.0)
        >>> cmd_energy(ExperimentConfig(mode='energy_report'))
        Traceback (most recent call last):
        ...
        ValueError: No timing records: run the speedup study first (parastencil speedup) and pass its CSV as speedup_csv
    """
    if records is None:
        path = cfg['speedup_csv']
        if path is None or not os.path.exists(path):
            raise ValueError('No timing records: run the speedup study first (parastencil speedup) and pass its CSV as speedup_csv')
        records = read_records(path)
    records = [r for r in records if r.mode() == 'speedup_study' and r['wall_seconds'] and r['serial_seconds']]
    if not records:
        raise ValueError('No timing records: run the speedup study first (parastencil speedup) and pass its CSV as speedup_csv')
    backend = cfg['backend']
    result = []
    for r in records:
        e = EnergyParams.from_table(backend, r['serial_seconds'], r['wall_seconds'], r['n_p'])
        report = energy_model(e, s_bound=r['s_bound'])
        stack = report.stack()
        result.append(RunRecord('energy_report', transport=r['transport'], n_p=r['n_p'], k=r['k'], threads=r['threads'], omega=r['omega'],
                                wall_seconds=r['wall_seconds'], serial_seconds=r['serial_seconds'], speedup=r['speedup'], s_bound=r['s_bound'],
                                energy_joules=report.q_parallel(), energy_node=stack['node'], energy_network=stack['network'],
                                energy_blower=stack['blower'], energy_device=stack['device'], gamma=report.gamma_measured(),
                                gamma_bound=report.gamma_bound(), oversubscribed=r['oversubscribed']))
        if verbose:
            print('N_p = %d: %.4g J on %d nodes at %s W per node, gamma = %.3f (bound %s).' % (r['n_p'], report.q_parallel(), r['n_p'], report.power_per_node(), report.gamma_measured(), 'n/a' if report.gamma_bound() is None else '%.3f' % report.gamma_bound()))
    return result


## acceptance checks

def _order(error, a, b):
    return float(np.log2(error(a) / error(b)))


def _temporal_error(kind, n):
    q = ProblemSpec(8, c=(0, 0, 0), omega=100, n_fine=128, n_coarse=64)
    u0 = initial_condition(q.grid())
    if kind == 'fine':
        v = propagate_fine(u0, SliceInterval(0.0, 0.1, n), q)
    else:
        v = propagate_coarse(u0, SliceInterval(0.0, 0.1, n), q)
    a = semidiscrete_amplitude(0.1, q, kind)
    return (v - a * u0).inf_norm() / a


def _spatial_error(kind, n):
    g = GridSpec(n, 1, 1)
    x = g.coordinates().reshape(n, 1, 1)
    u = field_from_interior(g, np.sin(2 * np.pi * x))
    if kind == 'fine':
        r = rhs_fine(u, StencilCoeffs((1, 0, 0), 0.1, g.dx()))
        exact = -0.4 * np.pi ** 2 * np.sin(2 * np.pi * x) - 2 * np.pi * np.cos(2 * np.pi * x)
    else:
        r = rhs_coarse(u, StencilCoeffs((1, 0, 0), 0.0, g.dx()))
        exact = -2 * np.pi * np.cos(2 * np.pi * x)
    return float(np.abs(r.interior() - exact).max())


def cmd_selftest(cfg, strict_timing=False, verbose=False):
    r"""
    Evaluate the acceptance checks on the configured desk problem.

    The timing check (measured speedup against the bound) is reported, and only counts as a failure with ``strict_timing``.

    OUTPUT: a list of dicts with the keys 'criterion', 'name', 'passed', 'detail'
    """
    checks = []

    def check(number, name, passed, detail, enforced=True):
        passed = bool(passed)
        checks.append({'criterion': number, 'name': name, 'passed': passed or not enforced, 'detail': detail})
        status = 'PASS' if passed else ('FAIL' if enforced else 'INFO')
        print('%s %2d %s: %s' % (status, number, name, detail))

    problem = cfg.problem(omega=100.0)

    ## 1
    pcfg = PararealConfig(problem, 8, 8, threads=cfg["threads"])
    u_fine, _ = run_serial_fine(pcfg)
    d = defect(run_parareal(pcfg, verbose=verbose).final_field(), u_fine)
    check(1, 'finite-step exactness', d <= 1e-10, 'd^8 = %.3e with N_p = 8' % d)

    ## 2
    its = {}
    monotone = True
    below = True
    details = []
    for n_p in (4, 8):
        for omega in (0.0, 100.0):
            q = problem.with_changes(omega=omega)
            pc = PararealConfig(q, n_p, 6, threads=cfg['threads'])
            uf, _ = run_serial_fine(pc)
            eps_fine = relative_error(uf, q.T(), q)
            ds = run_parareal(pc).defects(uf)
            report = ConvergenceReport(ds, eps_fine, 0.0, 0.0)
            its[n_p, omega] = report.iterations_to_fine_accuracy()
            monotone = monotone and all(ds[k + 1] < ds[k] for k in range(3))
            below = below and ds[3] <= eps_fine
            details.append('N_p=%d omega=%g: d^3 = %.2e, eps_fine = %.2e' % (n_p, omega, ds[3], eps_fine))
    counts = list(its.values())
    spread_ok = None not in counts and max(counts) - min(counts) <= 1
    check(2, 'rapid convergence', monotone and below and spread_ok, '; '.join(details) + '; iterations to fine accuracy %s' % counts)

    ## 3
    orders = {'fine temporal': (_order(lambda n: _temporal_error('fine', n), 64, 128), 3.5, 4.3),
              'fine spatial': (_order(lambda n: _spatial_error('fine', n), 32, 64), 3.7, 4.3),
              'coarse temporal': (_order(lambda n: _temporal_error('coarse', n), 64, 128), 0.8, 1.2),
              'coarse spatial': (_order(lambda n: _spatial_error('coarse', n), 32, 64), 0.9, 1.1)}
    check(3, 'discretization orders', all(lo <= o <= hi for o, lo, hi in orders.values()), ', '.join('%s %.2f' % (name, o) for name, (o, _, _) in orders.items()))

    ## 4
    g = GridSpec(16)
    u = random_field(g, seed=2026)
    worst = 0.0
    for kind in ('coarse_euler', 'fine_rk4'):
        with Propagator(kind, problem.with_changes(nx=16)) as P:
            v = P.propagate(u, SliceInterval(0.0, P.step_size(), 1))
        worst = max(worst, abs(mean(v) - mean(u)) / abs(mean(u)))
    check(4, 'conservation', worst <= 1e-13, 'relative change of the mean %.2e' % worst)

    ## 5
    worst = 0.0
    for omega in (0.0, 100.0):
        for t in np.linspace(0.0, 0.1, 20):
            a = amplitude(float(t), 0.1, omega)
            worst = max(worst, abs(a - amplitude_ode(float(t), 0.1, omega)) / a)
    check(5, 'analytic amplitude', worst <= 1e-10, 'largest relative deviation from the ODE oracle %.2e' % worst)

    ## 6
    r = reference_ratio()
    worst_s = worst_e = 0.0
    for n, row in reference_speedups_cpu.items():
        s = speedup_bound(PerfParams(n, 3, 16, 1, 1.0, r))[0]
        worst_s = max(worst_s, abs(s - row[0]))
        worst_e = max(worst_e, abs(100 * s / n - row[2]))
    check(6, 'speedup model', worst_s <= 0.3 and worst_e <= 0.6, 'tau_c/tau_f = %.4f, max |dS| = %.2f, max |dE| = %.2f points' % (r, worst_s, worst_e))

    ## 7
    cpu = EnergyParams.from_table('cpu', 1.0, 1.0, 1).power_total()
    gpu = EnergyParams.from_table('gpu', 1.0, 1.0, 1).power_total()
    s_bound = speedup_bound(PerfParams(32, 3, 16, 1, 1.0, r))[0]
    gamma = energy_model(EnergyParams.from_table('cpu', 10.0, 1.0, 32), s_bound=s_bound).gamma_bound()
    ideal = energy_model(EnergyParams.from_table('cpu', 8.0, 1.0, 8)).gamma_ideal()
    ok = abs(cpu - 172) <= 1 and abs(gpu - 245) <= 1 and abs(gamma * s_bound - 32) <= 1e-12 * 32 and ideal == 1.0
    check(7, 'energy model', ok, 'CPU %s W, GPU %s W per node' % (cpu, gpu))

    ## 8
    pc = PararealConfig(problem, 4, 3)
    first = run_parareal(pc)
    fields = [first.final_field()]
    series = [first.iterates()]
    for threads in (1, 2, 4):
        res = run_parareal(pc.with_changes(threads=threads))
        fields.append(res.final_field())
        series.append(res.iterates())
    ok = all(f == fields[0] for f in fields) and all(all(a == b for a, b in zip(s, series[0])) for s in series)
    check(8, 'determinism', ok, 'repeated runs with 1, 2 and 4 threads per worker')

    ## 9
    ok = True
    for n_p in range(1, 9):
        tiny = ProblemSpec(4, T=0.001, n_fine=2 * n_p, n_coarse=n_p)
        for k in range(1, 9):
            a = run_parareal(PararealConfig(tiny, n_p, k))
            b = run_parareal(PararealConfig(tiny, n_p, k, transport='multi_process'))
            ok = ok and a.iterations() == b.iterations() == k and a.final_field() == b.final_field()
    check(9, 'pipelining liveness', ok, 'all (N_p, K) in {1..8}^2 with both transports')

    ## 10
    tau_f, tau_c = measure_ratio(cfg, problem)
    u_fine, serial_seconds = run_serial_fine(PararealConfig(problem, 8, 3))
    measured = {}
    bounds = {}
    for n_p in (4, 8):
        pc = PararealConfig(problem, n_p, 3, transport='multi_process')
        measured[n_p] = serial_seconds / run_parareal(pc).wall_time()
        bounds[n_p] = speedup_bound(PerfParams(n_p, 3, pc.n_fine_per_slice(), pc.n_coarse_per_slice(), tau_f, tau_c))[0]
    over = _oversubscribed(8, 1)
    ok = measured[8] >= 0.6 * bounds[8] and measured[8] > measured[4]
    check(10, 'measured speedup', ok, 'S(4) = %.2f, S(8) = %.2f, S_bound(8) = %.2f%s' % (measured[4], measured[8], bounds[8], ', oversubscribed' if over else ''), enforced=strict_timing and not over)
    return checks


## command line

def _list_of(kind):
    def parse(text):
        try:
            return [kind(x) for x in text.split(',') if x]
        except ValueError:
            raise argparse.ArgumentTypeError('expected a comma separated list, got %r' % text) from None
    return parse


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='flat JSON configuration file (default: $%s)' % config_environment_variable)
    common.add_argument('--output', help=CONFIG_KEYS['output'][1])
    common.add_argument('--json', action='store_true', help='print a JSON summary to stdout')
    common.add_argument('-v', '--verbose', action='store_true', help='report progress')
    common.add_argument('--nx', type=int, help=CONFIG_KEYS['nx'][1])
    common.add_argument('--n-fine', type=int, help=CONFIG_KEYS['n_fine'][1])
    common.add_argument('--n-coarse', type=int, help=CONFIG_KEYS['n_coarse'][1])
    common.add_argument('--T', type=float, help=CONFIG_KEYS['T'][1])
    common.add_argument('--nu0', type=float, help=CONFIG_KEYS['nu0'][1])
    common.add_argument('--omega', type=float, help=CONFIG_KEYS['omega'][1])
    common.add_argument('--c', type=float, nargs=3, help=CONFIG_KEYS['c'][1])
    common.add_argument('--slices', dest='n_slices', type=int, help=CONFIG_KEYS['n_slices'][1])
    common.add_argument('--iterations', dest='k_max', type=int, help=CONFIG_KEYS['k_max'][1])
    common.add_argument('--transport', choices=('in_process', 'multi_process'), help=CONFIG_KEYS['transport'][1])
    common.add_argument('--threads', type=int, help=CONFIG_KEYS['threads'][1])
    common.add_argument('--same-propagators', action='store_const', const=True, help=CONFIG_KEYS['same_propagators'][1])
    common.add_argument('--tolerance', type=float, help=CONFIG_KEYS['tolerance'][1])
    common.add_argument('--timeout', type=float, help=CONFIG_KEYS['timeout'][1])
    common.add_argument('--repetitions', type=int, help=CONFIG_KEYS['repetitions'][1])
    common.add_argument('--slice-counts', type=_list_of(int), help=CONFIG_KEYS['slice_counts'][1])
    common.add_argument('--omegas', type=_list_of(float), help=CONFIG_KEYS['omegas'][1])
    common.add_argument('--thread-counts', type=_list_of(int), help=CONFIG_KEYS['thread_counts'][1])
    common.add_argument('--tau-ratio', type=float, help=CONFIG_KEYS['tau_ratio'][1])
    common.add_argument('--backend', choices=tuple(node_power), help=CONFIG_KEYS['backend'][1])
    common.add_argument('--speedup-csv', help=CONFIG_KEYS['speedup_csv'][1])

    parser = argparse.ArgumentParser(prog='parastencil', description='Parareal for three-dimensional advection-diffusion with stencil propagators')
    sub = parser.add_subparsers(dest='command', required=True)
    run = sub.add_parser('run', parents=[common], help='a single serial or Parareal run')
    run.add_argument('--mode', choices=('serial_fine', 'serial_coarse', 'parareal'))
    sub.add_parser('convergence', parents=[common], help='defects over the iterations')
    sub.add_parser('speedup', parents=[common], help='measured and modeled speedup')
    sub.add_parser('threads', parents=[common], help='speedup over threads per worker')
    sub.add_parser('energy', parents=[common], help='energy to solution from a speedup study')
    selftest = sub.add_parser('selftest', parents=[common], help='acceptance checks')
    selftest.add_argument('--strict-timing', action='store_true', help='fail if the measured speedup misses the bound')
    selftest.add_argument('--quick', action='store_true', help='use a 16^3 grid with 512 fine steps')
    return parser


command_modes = {'convergence': 'convergence_study', 'speedup': 'speedup_study', 'threads': 'thread_sweep', 'energy': 'energy_report', 'selftest': 'selftest'}


def resolve_config(args):
    r"""
    Combine the defaults, the configuration file and the command line flags.
    """
    overrides = {key: getattr(args, key, None) for key in CONFIG_KEYS if key != 'mode'}
    if args.command == 'run':
        overrides['mode'] = args.mode
    else:
        overrides['mode'] = command_modes[args.command]
    if getattr(args, 'quick', False):
        for key, value in (('nx', 16), ('n_fine', 512), ('n_coarse', 32)):
            if overrides[key] is None:
                overrides[key] = value
    path = args.config or os.environ.get(config_environment_variable)
    if path:
        cfg = ExperimentConfig.from_json(path, **overrides)
    else:
        cfg = ExperimentConfig(**overrides)
    if args.command == 'run' and cfg.mode() not in ('serial_fine', 'serial_coarse', 'parareal'):
        cfg = cfg.with_changes(mode='parareal')
    return cfg


def main(argv=None):
    r"""
    Run the command line interface; returns the exit code.

    EXAMPLES::

        >>> import os, tempfile
        >>> from parastencil.harness import main, read_records
        >>> d = tempfile.mkdtemp()
        >>> out = os.path.join(d, 'run.csv')
        >>> main(['run', '--nx', '4', '--n-fine', '48', '--n-coarse', '12', '--slices', '4', '--iterations', '4', '--output', out])
        Wrote 1 records to ...run.csv
        0
        >>> sorted(os.listdir(d))
        ['run.config.json', 'run.csv']
        >>> read_records(out)[0]['k']
        4
        >>> main(['run', '--nx', '4', '--slices', '3', '--output', out])
        2
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
    except (ValueError, NotImplementedError, OSError) as e:
        print('Error: %s' % e, file=sys.stderr)
        return 2
    verbose = args.verbose
    try:
        if args.command == 'selftest':
            checks = cmd_selftest(cfg, strict_timing=args.strict_timing, verbose=verbose)
            if args.json:
                print(json.dumps(checks, indent=2))
            return 0 if all(c['passed'] for c in checks) else 4
        commands = {'run': cmd_run, 'convergence': cmd_convergence, 'speedup': cmd_speedup, 'threads': cmd_thread_sweep, 'energy': cmd_energy}
        records = commands[args.command](cfg, verbose=verbose)
    except PararealAbort as e:
        print('Error: %s' % e, file=sys.stderr)
        return 3
    except (ValueError, NotImplementedError, OSError) as e:
        print('Error: %s' % e, file=sys.stderr)
        return 2
    output = cfg.output()
    write_records(records, output)
    cfg.write(_stem(output) + '.config.json')
    if args.command == 'convergence':
        _write_table(_stem(output) + '.defects.csv', ('n_p', 'omega', 'k', 'defect'), [(n, w, k, repr(d)) for n, w, k, d in defect_table(records)])
    elif args.command == 'speedup':
        print(speedup_table(records))
    elif args.command == 'energy':
        _write_table(_stem(output) + '.energy.csv', ('n_p', 'node', 'network', 'blower', 'device', 'total', 'gamma_measured', 'gamma_bound'),
                     [(r['n_p'], r['energy_node'], r['energy_network'], r['energy_blower'], r['energy_device'], r['energy_joules'], r['gamma'], r['gamma_bound']) for r in records])
    print('Wrote %d records to %s' % (len(records), output))
    if args.json:
        print(json.dumps([r.to_dict() for r in records], indent=2))
    return 0
