# --------------------------------------------------------
# command line: state / sweep / fit / ree / tomo
# --------------------------------------------------------
# exit codes: 0 success, 1 usage error, 2 numerical failure (non-converged REE, violated identities)
import sys
import argparse

import numpy as np

from decohere.states import make_named_state, as_density, is_ppt, QUBIT_LABELS
from decohere.channels import DephasingSpec, apply_dephasing
from decohere.measures import all_measures
from decohere.ree import ReeOptions, ree
from decohere.tomo import sample_counts, reconstruct, bootstrap_measures, DEFAULT_SHOTS, DEFAULT_RESAMPLES
from decohere.harness import (SweepConfig, TomoOptions, REFERENCE_GAMMA, DEFAULT_GRID, ONE_QUBIT_GRID, run_sweep,
                              write_sweep, read_sweep, check_sweep, asymptote_record, fit_all, write_rates,
                              verify_ordering, reference_rates)
from decohere.utils.misc import NumericalError, default_seed, nats_to_bits, set_print_with_timestamp, read_config_file

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2
_TRUE = ('1', 'true', 'yes', 'on')


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f'{self.prog}: error: {message}')


def _common_parser():
    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument('--config', type=str, default=None, help='flat `key = value` file of default options')
    parser.add_argument('--seed', type=int, default=default_seed(), help='random seed (CLI > env:DECOHERE_SEED > 0)')
    parser.add_argument('--bits', action='store_true', default=False, help='display entropies in bits')
    parser.add_argument('--silent', action='store_true', default=False)
    return parser


def _add_ree_args(parser):
    parser.add_argument('--m', type=int, default=None, help='separable ensemble size (default 4 * 2^n)')
    parser.add_argument('--restarts', type=int, default=24)
    parser.add_argument('--max_iters', type=int, default=2000)
    parser.add_argument('--tol', type=float, default=1e-8, help='stop once the objective decreases by less')
    parser.add_argument('--zero_floor', type=float, default=1e-6, help='REE values below are reported as 0')


def _add_dephasing_args(parser, gamma=0., ell=0.):
    parser.add_argument('--gamma', type=float, default=gamma, help='dephasing rate (lambda0^-2)')
    parser.add_argument('--ell', type=float, default=ell, help='quartz thickness (lambda0)')
    parser.add_argument('--targets', type=str, default='all', help="dephased qubits: 'all', 'A', 'BC', '0,2', ...")


def get_args_parser():
    parser = _Parser(prog='decohere', description='dephasing fragility of multipartite quantum properties')
    common = _common_parser()
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('state', parents=[common], help="print a named state's matrix and measures")
    p.add_argument('--name', type=str, required=True, help='wwbar, w, wbar, star, bell, ghz:n, dicke:n:k, ket:bits')
    p.add_argument('--skip_ree', action='store_true', default=False, help='do not compute E')
    _add_dephasing_args(p)
    _add_ree_args(p)

    p = sub.add_parser('sweep', parents=[common], help='measures along a dephasing sweep, written as CSV')
    p.add_argument('--state', type=str, default='wwbar')
    p.add_argument('--gamma', type=float, default=None, help='dephasing rate (default: experimental value)')
    p.add_argument('--targets', type=str, default='all')
    p.add_argument('--ell', type=str, default=None,
                   help=f'grid start:stop:count (default {DEFAULT_GRID}, {ONE_QUBIT_GRID} for partial targets)')
    p.add_argument('--out', type=str, required=True)
    p.add_argument('--skip_ree', action='store_true', default=False)
    p.add_argument('--tomo', action='store_true', default=False, help='evaluate on simulated tomography')
    p.add_argument('--shots', type=int, default=DEFAULT_SHOTS)
    p.add_argument('--resamples', type=int, default=DEFAULT_RESAMPLES)
    p.add_argument('--exact', action='store_true', default=False, help='noiseless tomography counts')
    p.add_argument('--workers', type=int, default=1)
    _add_ree_args(p)

    p = sub.add_parser('fit', parents=[common], help='decay rates and ordering from a sweep CSV')
    p.add_argument('--in', dest='inp', type=str, required=True)
    p.add_argument('--out', type=str, required=True)
    p.add_argument('--state', type=str, default=None, help='needed when the sweep has no .json sidecar')
    p.add_argument('--targets', type=str, default=None)
    _add_ree_args(p)

    p = sub.add_parser('ree', parents=[common], help='relative entropy of entanglement with diagnostics')
    p.add_argument('--name', type=str, required=True)
    _add_dephasing_args(p)
    _add_ree_args(p)

    p = sub.add_parser('tomo', parents=[common], help='simulate counts, reconstruct, report fidelity')
    p.add_argument('--name', type=str, required=True)
    p.add_argument('--shots', type=int, default=DEFAULT_SHOTS)
    p.add_argument('--exact', action='store_true', default=False)
    p.add_argument('--resamples', type=int, default=0, help='>= 2 adds bootstrap error bars on every measure')
    p.add_argument('--counts_out', type=str, default=None, help='write the count table as CSV')
    p.add_argument('--skip_ree', action='store_true', default=False)
    _add_dephasing_args(p)
    _add_ree_args(p)
    return parser


def apply_config(parser, command, path):
    """ file values become sub-parser defaults, so explicit flags still win """
    (subparsers,) = [a for a in parser._actions if isinstance(a, argparse._SubParsersAction)]
    subparser = subparsers.choices[command]
    actions = {a.dest: a for a in subparser._actions}
    defaults = {}
    for key, value in read_config_file(path).items():
        if key not in actions or key in ('help', 'config'):
            raise UsageError(f'{path}: unknown option {key!r} for `{command}`')
        if isinstance(actions[key], argparse._StoreTrueAction):
            value = value.lower() in _TRUE
        defaults[key] = value
    subparser.set_defaults(**defaults)


def parse_args(argv=None):
    parser = get_args_parser()
    args = parser.parse_args(argv)
    if args.config is not None:
        apply_config(parser, args.command, args.config)
        args = parser.parse_args(argv)
    return args


# ---- handlers ----

def ree_options(args, verbose=False):
    return ReeOptions(m=args.m, restarts=args.restarts, max_iters=args.max_iters, tol=args.tol, seed=args.seed,
                      zero_floor=args.zero_floor, verbose=verbose)


def _unit(args):
    return (nats_to_bits, 'bits') if args.bits else ((lambda x: x), 'nats')


def _dephased_state(args):
    rho = as_density(make_named_state(args.name))
    targets = None if args.targets.lower() == 'all' else args.targets
    if args.gamma > 0 and args.ell > 0:
        rho = apply_dephasing(rho, DephasingSpec(args.gamma, args.ell, targets=targets))
    return rho


def cmd_state(args):
    rho = _dephased_state(args)
    with np.printoptions(precision=4, suppress=True, linewidth=160):
        print(f'{args.name} ({rho.n_qubits} qubits):\n{rho.elements}')
    for q in range(rho.n_qubits if rho.n_qubits > 1 else 0):
        rest = ''.join(QUBIT_LABELS[i] for i in range(rho.n_qubits) if i != q)
        print(f'PPT across {QUBIT_LABELS[q]}|{rest}: {is_ppt(rho, (q,))}')
    # the separable-state solver handles 2 or 3 qubits
    rec = all_measures(rho, ree_options(args), with_entanglement=not args.skip_ree and rho.n_qubits in (2, 3))
    print(rec.format(args.bits))
    if rec.flagged:
        print('REE did not converge: E is an unconverged upper bound', file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_ree(args):
    rho = _dephased_state(args)
    res = ree(rho, ree_options(args, verbose=not args.silent))
    conv, unit = _unit(args)
    print(f'E <= {conv(res.value):.10f} {unit} (reported {conv(res.entanglement):.10f})')
    print(f'iterations={res.iterations} restarts={res.restarts_used} spread={conv(res.spread):.3e} '
          f'converged={res.converged}')
    return EXIT_OK if res.converged else EXIT_NUMERICAL


def cmd_tomo(args):
    rho = _dephased_state(args)
    table = sample_counts(rho, args.shots, args.seed, args.exact)
    if args.counts_out:
        table.to_csv(args.counts_out)
        print(f'saved count table to {args.counts_out}')
    res = reconstruct(table, rho)
    print(f'fidelity = {res.fidelity_vs_target:.6f}, clipped eigenvalue mass = {res.eigen_clip_mass:.3e}')
    if args.resamples < 2:
        return EXIT_OK
    boot = bootstrap_measures(rho, args.shots, args.resamples, args.seed, args.exact, ree_options(args),
                              not args.skip_ree, verbose=not args.silent)
    print(f'bootstrap ({args.resamples} resamples): fidelity = {boot.fidelity:.6f} +- {boot.fidelity_err:.6f}')
    print(boot.record.format(args.bits))
    return EXIT_NUMERICAL if boot.flagged else EXIT_OK


def cmd_sweep(args):
    tomo = TomoOptions(args.shots, args.resamples, args.seed, args.exact) if args.tomo else None
    gamma = args.gamma if args.gamma is not None else REFERENCE_GAMMA.get(args.state.lower(), REFERENCE_GAMMA['wwbar'])
    config = SweepConfig(state=args.state, gamma=gamma, targets=args.targets, ell=args.ell, ree=ree_options(args),
                         tomo=tomo, out=args.out, with_entanglement=not args.skip_ree, workers=args.workers,
                         verbose=not args.silent)
    result = run_sweep(config)
    write_sweep(result, args.out)
    print(f'saved {len(result.rows)} rows to {args.out}')
    conv, unit = _unit(args)
    for q in ('E', 'C', 'T', 'K'):
        col = result.column(q)
        print(f'  {q}: {conv(col[0]):.6f} -> {conv(col[-1]):.6f} {unit} (asymptote {conv(result.asymptote.as_dict()[q]):.6f})')
    violations = check_sweep(result.rows)
    for v in violations:
        print(f'violation: {v}', file=sys.stderr)
    if result.flagged:
        print(f'REE did not converge at ell = {result.flagged}', file=sys.stderr)
    return EXIT_NUMERICAL if violations or result.flagged else EXIT_OK


def cmd_fit(args):
    rows, meta = read_sweep(args.inp)
    if meta is not None:
        state, targets = meta['config']['state'], meta['config']['targets']
        asymptote = meta['asymptote']
    else:
        if args.state is None or args.targets is None:
            raise UsageError(f'{args.inp} has no .json sidecar: pass --state and --targets')
        state, targets = args.state, args.targets
        asymptote = asymptote_record(SweepConfig(state=state, targets=targets, ree=ree_options(args))).as_dict()
    fits = fit_all(rows, asymptote)
    write_rates(fits, args.out)
    print(f'saved decay rates to {args.out}')
    for f in fits.values():
        if not f.ok:
            print(f'  {f.quantity}: no fit ({f.points_used} usable points)')
    all_qubits = str(targets).lower() == 'all'
    report = verify_ordering(fits, check=all_qubits, reference=reference_rates(state, targets))
    print(report.format())
    return EXIT_OK


COMMANDS = dict(state=cmd_state, sweep=cmd_sweep, fit=cmd_fit, ree=cmd_ree, tomo=cmd_tomo)


def main(argv=None):
    try:
        args = parse_args(argv)
        if not args.silent:
            set_print_with_timestamp()
        return COMMANDS[args.command](args)
    except (UsageError, ValueError) as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as e:
        print(f'numerical failure: {e}', file=sys.stderr)
        return EXIT_NUMERICAL
