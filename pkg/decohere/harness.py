# --------------------------------------------------------
# dephasing sweeps, semilog decay fits and rate ordering
# --------------------------------------------------------
import os
import csv
import json
import math
from dataclasses import dataclass, field, asdict
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from tqdm import tqdm

from decohere.states import make_named_state, as_density, qubit_set
from decohere.channels import DephasingSpec, apply_dephasing, full_dephasing
from decohere.measures import QUANTITIES, MeasureRecord, all_measures
from decohere.ree import ReeOptions
from decohere.tomo import bootstrap_measures, DEFAULT_SHOTS, DEFAULT_RESAMPLES
from decohere.utils.misc import mkdir_for

DEFAULT_GRID = '0:250:26'
# one-qubit dephasing saturates far later: the star central-qubit sweep only reaches E ~ 0 beyond ell ~ 500
ONE_QUBIT_GRID = '0:1500:26'
ORDERING = ('E', 'CG', 'C', 'CL', 'T', 'K')
ENT_TOL = 1e-6
# T - T_inf equals C_G - C_G_inf exactly (K is left untouched by dephasing), so T is fitted on ln T itself
RAW_FITS = ('T',)
K_SPREAD_TOL = 1e-12

# experimental decay rates, in 1e-5 lambda0^-2, shown beside the fitted ones (never asserted)
REFERENCE_RATES = {
    ('wwbar', 'all'): dict(E=10.9, CG=6.6, C=6.1, CL=5.6, T=4.0),
    ('star', 'all'): dict(E=9.2, CG=5.2, C=4.8, CL=3.9, T=3.0),
    ('wwbar', 'one'): dict(CG=2.2, C=1.8, T=1.7, E=1.7, CL=1.3),
    ('star', 'central'): dict(E=3.6, CG=2.0, C=1.3, T=1.3, CL=0.2),
}
# channel rates used for the experimental runs
REFERENCE_GAMMA = {'wwbar': 2.21e-5, 'star': 2.06e-5}


def parse_grid(text):
    """ 'start:stop:count' -> (start, stop, count) """
    try:
        start, stop, count = str(text).split(':')
        start, stop, count = float(start), float(stop), int(count)
    except ValueError:
        raise ValueError(f'bad ell grid {text!r}, expected start:stop:count')
    if count < 4 or not stop > start >= 0:
        raise ValueError(f'bad ell grid {text!r}: need count >= 4 and stop > start >= 0')
    return start, stop, count


@dataclass
class TomoOptions:
    shots: int = DEFAULT_SHOTS
    resamples: int = DEFAULT_RESAMPLES
    seed: int = 0
    exact: bool = False


@dataclass
class SweepConfig:
    state: str = 'wwbar'
    gamma: float = REFERENCE_GAMMA['wwbar']
    targets: str = 'all'
    ell: str = None  # None: DEFAULT_GRID, or ONE_QUBIT_GRID when only some qubits dephase
    ree: ReeOptions = field(default_factory=ReeOptions)
    tomo: TomoOptions = None
    out: str = None
    with_entanglement: bool = True
    workers: int = 1
    verbose: bool = False

    def __post_init__(self):
        if self.ell is None:
            self.ell = DEFAULT_GRID if str(self.targets).lower() == 'all' else ONE_QUBIT_GRID
        parse_grid(self.ell)
        if self.gamma < 0:
            raise ValueError(f'dephasing rate must be >= 0, got {self.gamma=}')
        self.resolve_targets()

    def grid(self):
        return np.linspace(*parse_grid(self.ell))

    def ideal_state(self):
        return as_density(make_named_state(self.state))

    def resolve_targets(self):
        """ None for every qubit, otherwise a tuple of qubit indices """
        if str(self.targets).lower() == 'all':
            return None
        return qubit_set(self.targets, self.ideal_state().n_qubits)

    def dephasing(self, ell):
        return DephasingSpec(self.gamma, ell, targets=self.resolve_targets())

    def to_dict(self):
        d = asdict(self)
        d.pop('out'), d.pop('verbose'), d.pop('workers')
        return d


@dataclass
class SweepRow:
    ell: float
    values: dict
    errors: dict = None
    flagged: bool = False

    @property
    def ell_sq(self):
        return self.ell ** 2


@dataclass
class SweepResult:
    config: SweepConfig
    rows: list
    asymptote: MeasureRecord

    def column(self, quantity):
        return np.array([r.values[quantity] for r in self.rows])

    @property
    def flagged(self):
        return [r.ell for r in self.rows if r.flagged]


def asymptote_record(config):
    """ measures of the p = 1/2 channel output on the ideal state """
    rho = apply_dephasing(config.ideal_state(), full_dephasing(config.resolve_targets()))
    return all_measures(rho, config.ree, config.with_entanglement)


def sweep_point(config, rho0, ell):
    rho = apply_dephasing(rho0, config.dephasing(ell))
    if config.tomo is None:
        rec = all_measures(rho, config.ree, config.with_entanglement)
        return SweepRow(float(ell), rec.as_dict(), None, rec.flagged)
    t = config.tomo
    boot = bootstrap_measures(rho, t.shots, t.resamples, t.seed, t.exact, config.ree, config.with_entanglement)
    return SweepRow(float(ell), boot.record.as_dict(), boot.record.errors(), boot.flagged > 0)


def run_sweep(config):
    rho0 = config.ideal_state()
    grid = config.grid()
    if config.verbose:
        print(f' >> sweeping {config.state} (targets={config.targets}, gamma={config.gamma:g}) over {len(grid)} points')
    with ThreadPoolExecutor(max(1, config.workers)) as pool:
        rows = list(tqdm(pool.map(lambda ell: sweep_point(config, rho0, ell), grid), total=len(grid),
                         disable=not config.verbose))
    result = SweepResult(config, rows, asymptote_record(config))
    if config.verbose and result.flagged:
        print(f' >> REE did not converge at ell = {result.flagged}')
    return result


def check_sweep(rows, tol=1e-9, ent_tol=ENT_TOL):
    """ per-row record invariants plus K constancy along the sweep """
    violations = []
    for r in rows:
        rec = MeasureRecord(**r.values)
        violations += [f'ell={r.ell:g}: {v}' for v in rec.violations(tol, ent_tol)]
    K = np.array([r.values['K'] for r in rows])
    if len(K) and K.max() - K.min() > K_SPREAD_TOL:
        violations.append(f'K varies by {K.max() - K.min():.3e} along the sweep')
    return violations


# ---- files ----

def _fmt(x):
    return format(float(x), '.17g')


def sweep_header(with_errors):
    header = ['ell', 'ell_sq'] + list(QUANTITIES)
    return header + ['d' + q for q in QUANTITIES] if with_errors else header


def write_sweep(result, path):
    """ CSV of the rows plus a JSON sidecar holding the configuration and the asymptote record """
    with_errors = any(r.errors is not None for r in result.rows)
    with open(mkdir_for(path), 'w', newline='') as fid:
        writer = csv.writer(fid, lineterminator='\n')
        writer.writerow(sweep_header(with_errors))
        for r in result.rows:
            line = [r.ell, r.ell_sq] + [r.values[q] for q in QUANTITIES]
            if with_errors:
                line += [r.errors[q] for q in QUANTITIES]
            writer.writerow([_fmt(x) for x in line])
    meta = dict(config=result.config.to_dict(), asymptote=result.asymptote.as_dict(), flagged=result.flagged)
    with open(path + '.json', 'w') as fid:
        json.dump(meta, fid, indent=2)
    return path


def read_sweep(path):
    """ rows of a sweep CSV, and the sidecar metadata when it exists (else None) """
    rows = []
    with open(path, 'r', newline='') as fid:
        reader = csv.DictReader(fid)
        if reader.fieldnames not in (sweep_header(False), sweep_header(True)):
            raise ValueError(f'{path}: not a sweep table, header = {reader.fieldnames}')
        with_errors = len(reader.fieldnames) > len(sweep_header(False))
        for line in reader:
            values = {q: float(line[q]) for q in QUANTITIES}
            errors = {q: float(line['d' + q]) for q in QUANTITIES} if with_errors else None
            rows.append(SweepRow(float(line['ell']), values, errors))
    meta = None
    if os.path.isfile(path + '.json'):
        with open(path + '.json', 'r') as fid:
            meta = json.load(fid)
        flagged = set(meta.get('flagged', []))
        for r in rows:
            r.flagged = r.ell in flagged
    return rows, meta


# ---- fits ----

@dataclass
class DecayFit:
    quantity: str
    gamma_fit: float
    intercept: float
    asymptote: float
    points_used: int
    residual_rms: float
    status: str = 'ok'

    @property
    def ok(self):
        return self.status == 'ok'


def fit_decay(rows, quantity, asymptote):
    """ least squares of ln(Q - Q_inf) against ell^2 over the points above the saturation floor """
    rows = sorted(rows, key=lambda r: r.ell)
    ell_sq = np.array([r.ell_sq for r in rows])
    excess = np.array([r.values[quantity] for r in rows]) - asymptote
    eps = max(1e-4 * excess[0], 1e-7) if len(excess) and np.isfinite(excess[0]) else 1e-7
    use = np.isfinite(excess) & (excess > eps)
    n_used = int(use.sum())
    if n_used < 3:
        return DecayFit(quantity, math.nan, math.nan, asymptote, n_used, math.nan, status='insufficient')
    slope, intercept = np.polyfit(ell_sq[use], np.log(excess[use]), 1)
    residual = np.log(excess[use]) - (slope * ell_sq[use] + intercept)
    return DecayFit(quantity, float(-slope), float(intercept), float(asymptote), n_used,
                    float(np.sqrt(np.mean(residual ** 2))))


def fit_all(rows, asymptote):
    """ asymptote: MeasureRecord or dict of Q_inf per quantity. Quantities in RAW_FITS are fitted with Q_inf = 0. """
    asym = asymptote.as_dict() if isinstance(asymptote, MeasureRecord) else asymptote
    return {q: fit_decay(rows, q, 0. if q in RAW_FITS else asym[q]) for q in QUANTITIES}


def write_rates(fits, path):
    with open(mkdir_for(path), 'w', newline='') as fid:
        writer = csv.writer(fid, lineterminator='\n')
        writer.writerow(['quantity', 'gamma_fit', 'intercept', 'asymptote', 'points_used', 'residual_rms'])
        for f in fits.values():
            writer.writerow([f.quantity, _fmt(f.gamma_fit), _fmt(f.intercept), _fmt(f.asymptote),
                             f.points_used, _fmt(f.residual_rms)])
    return path


@dataclass
class OrderingReport:
    ranking: list  # (quantity, rate) in decreasing rate order
    passed: bool = None  # None: ranking only
    violations: list = field(default_factory=list)
    reference: dict = None

    def format(self):
        lines = []
        for q, rate in self.ranking:
            ref = self.reference.get(q) if self.reference else None
            lines.append(f'  Gamma({q:>2}) = {rate:.4e}' + (f'   (experiment: {ref:.1f}e-05)' if ref else ''))
        if self.passed is None:
            lines.append('ordering: ' + ' > '.join(q for q, _ in self.ranking))
        elif self.passed:
            lines.append('ordering PASS: ' + ' > '.join(ORDERING))
        else:
            lines.append('ordering FAIL: ' + ', '.join(f'Gamma({a}) <= Gamma({b})' for a, b in self.violations))
        return '\n'.join(lines)


def reference_rates(state, targets, n_qubits=3):
    state = str(state).lower().replace('_', '')
    if str(targets).lower() == 'all':
        return REFERENCE_RATES.get((state, 'all'))
    if state == 'star':
        return REFERENCE_RATES.get(('star', 'central')) if qubit_set(targets, n_qubits) == (2,) else None
    return REFERENCE_RATES.get((state, 'one'))


def verify_ordering(fits, check=True, reference=None):
    """ strict chain Gamma(E) > Gamma(CG) > Gamma(C) > Gamma(CL) > Gamma(T) > Gamma(K), with Gamma(K) := 0.
        check=False only ranks the rates (one-qubit sweeps have a state-dependent order).
    """
    rates = {q: (fits[q].gamma_fit if q in fits and fits[q].ok else math.nan) for q in ORDERING}
    rates['K'] = 0.
    ranking = sorted(((q, r) for q, r in rates.items() if np.isfinite(r)), key=lambda x: -x[1])
    if not check:
        return OrderingReport(ranking, None, [], reference)
    violations = [(a, b) for a, b in zip(ORDERING[:-1], ORDERING[1:]) if not rates[a] > rates[b]]
    return OrderingReport(ranking, not violations, violations, reference)
