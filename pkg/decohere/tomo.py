# --------------------------------------------------------
# simulated Pauli tomography: counts, linear inversion, PSD projection and bootstrap error bars
# --------------------------------------------------------
# Every qubit is measured in X, Y or Z. Outcome bit 0 is the +1 eigenvalue of the measured Pauli.
import csv
import math
import itertools
from functools import reduce
from collections import namedtuple
from dataclasses import dataclass
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import scipy.linalg
from tqdm import tqdm

from decohere.states import DensityMatrix, as_density, bit_table, eig_hermitian, clamp_spectrum
from decohere.measures import QUANTITIES, MeasureRecord, all_measures
from decohere.utils.misc import mkdir_for

PAULIS = {
    'I': np.eye(2, dtype=np.complex128),
    'X': np.array([[0, 1], [1, 0]], dtype=np.complex128),
    'Y': np.array([[0, -1j], [1j, 0]], dtype=np.complex128),
    'Z': np.diag([1., -1.]).astype(np.complex128),
}
_H = np.array([[1, 1], [1, -1]], dtype=np.complex128) / np.sqrt(2)
_S_DAG = np.diag([1, -1j])
# unitary mapping the +1/-1 eigenbasis of each Pauli onto |0>/|1>
ROTATIONS = {'X': _H, 'Y': _H @ _S_DAG, 'Z': np.eye(2, dtype=np.complex128)}

DEFAULT_SHOTS = 100_000
DEFAULT_RESAMPLES = 100
FIDELITY_FLOOR = 1e-12

TomoResult = namedtuple('TomoResult', 'rho_hat fidelity_vs_target eigen_clip_mass')


def pauli_settings(n_qubits):
    return [''.join(s) for s in itertools.product('XYZ', repeat=n_qubits)]


def _check_setting(setting, n_qubits):
    if len(setting) != n_qubits or set(setting) - set('XYZ'):
        raise ValueError(f'Unknown measurement {setting=} for {n_qubits} qubits')


def born_probabilities(rho, setting):
    rho = as_density(rho)
    setting = str(setting).upper()
    _check_setting(setting, rho.n_qubits)
    U = reduce(np.kron, [ROTATIONS[s] for s in setting])
    p = np.clip(np.diag(U @ rho.elements @ U.conj().T).real, 0, None)
    return p / p.sum()


def _largest_remainder(p, shots):
    raw = p * shots
    counts = np.floor(raw).astype(np.int64)
    missing = shots - counts.sum()
    if missing > 0:
        counts[np.argsort(-(raw - counts), kind='stable')[:missing]] += 1
    return counts


@dataclass(eq=False)
class CountTable:
    """ counts[i] holds the 2^n outcome counts of settings[i].
        In exact mode, `probabilities` keeps the Born probabilities the counts were rounded from.
    """
    settings: tuple
    counts: np.ndarray
    shots: int
    exact: bool = False
    probabilities: np.ndarray = None

    def __post_init__(self):
        self.settings = tuple(self.settings)
        self.counts = np.asarray(self.counts, dtype=np.int64)
        n = len(self.settings[0]) if self.settings else 0
        if not n or sorted(self.settings) != sorted(pauli_settings(n)):
            raise ValueError(f'incomplete tomography table: expected the {3**n} Pauli settings exactly once')
        if self.counts.shape != (3 ** n, 2 ** n):
            raise ValueError(f'expected counts of shape {(3**n, 2**n)}, got {self.counts.shape}')
        if self.shots < 1 or self.counts.min() < 0 or np.any(self.counts.sum(axis=1) != self.shots):
            raise ValueError(f'every setting must hold {self.shots} non-negative counts')

    @property
    def n_qubits(self):
        return len(self.settings[0])

    def frequencies(self):
        if self.probabilities is not None:
            return self.probabilities
        return self.counts / self.shots

    def to_csv(self, path):
        n = self.n_qubits
        with open(mkdir_for(path), 'w', newline='') as fid:
            writer = csv.writer(fid, lineterminator='\n')
            writer.writerow(['setting', 'outcome_bits', 'count'])
            for setting, row in zip(self.settings, self.counts):
                for outcome, count in enumerate(row):
                    writer.writerow([setting, format(outcome, f'0{n}b'), int(count)])

    @classmethod
    def from_csv(cls, path):
        """ exact-mode probabilities are not serialized: a table read back is always in sampled mode """
        rows = {}
        with open(path, 'r', newline='') as fid:
            reader = csv.DictReader(fid)
            if reader.fieldnames != ['setting', 'outcome_bits', 'count']:
                raise ValueError(f'{path}: expected header setting,outcome_bits,count, got {reader.fieldnames}')
            for row in reader:
                rows.setdefault(row['setting'], {})[int(row['outcome_bits'], 2)] = int(row['count'])
        if not rows:
            raise ValueError(f'{path}: empty count table')
        settings = sorted(rows)
        n = len(settings[0])
        counts = np.zeros((len(settings), 2 ** n), dtype=np.int64)
        for i, s in enumerate(settings):
            for outcome, count in rows[s].items():
                counts[i, outcome] = count
        shots = int(counts[0].sum())
        return cls(settings, counts, shots)


def sample_counts(rho, shots, seed=None, exact=False):
    """ multinomial photon counts for every Pauli setting (exact: rounded expectations, no noise) """
    if shots < 1:
        raise ValueError(f'need at least one shot per setting, got {shots=}')
    rho = as_density(rho)
    settings = pauli_settings(rho.n_qubits)
    probs = np.stack([born_probabilities(rho, s) for s in settings])
    if exact:
        counts = np.stack([_largest_remainder(p, shots) for p in probs])
        return CountTable(settings, counts, shots, exact=True, probabilities=probs)
    rng = np.random.default_rng(seed)
    counts = np.stack([rng.multinomial(shots, p) for p in probs])
    return CountTable(settings, counts, shots)


def pauli_expectations(table):
    """ <P> for every Pauli string over IXYZ, averaged over all settings that measure it """
    n = table.n_qubits
    freqs = table.frequencies()
    bits = bit_table(n)
    out = {'I' * n: 1.}
    for P in itertools.product('IXYZ', repeat=n):
        P = ''.join(P)
        if P == 'I' * n:
            continue
        support = np.array([c != 'I' for c in P])
        signs = (-1.) ** bits[:, support].sum(axis=1)
        compatible = [i for i, s in enumerate(table.settings) if all(c in ('I', sc) for c, sc in zip(P, s))]
        out[P] = float(np.mean([freqs[i] @ signs for i in compatible]))
    return out


def linear_inversion(table):
    """ rho = 2^-n sum_P <P> P; Hermitian with unit trace but not necessarily positive """
    n = table.n_qubits
    rho = np.zeros((2 ** n, 2 ** n), dtype=np.complex128)
    for P, value in pauli_expectations(table).items():
        rho += value * reduce(np.kron, [PAULIS[c] for c in P])
    rho /= 2 ** n
    return (rho + rho.conj().T) / 2


def project_psd(matrix):
    """ closest unit-trace PSD matrix in Frobenius norm: negative eigenvalues are clipped and their mass is
        taken uniformly from the remaining ones, smallest first.
        returns (DensityMatrix, clipped negative mass)
    """
    mu, V = eig_hermitian(matrix)
    mu = mu / mu.sum()
    clip_mass = float(np.clip(-mu, 0, None).sum())
    order = np.argsort(mu)[::-1]
    lam = mu[order].copy()
    acc = 0.
    i = len(lam)
    while i > 0 and lam[i - 1] + acc / i < 0:
        acc += lam[i - 1]
        lam[i - 1] = 0
        i -= 1
    lam[:i] += acc / i
    mu = np.empty_like(lam)
    mu[order] = clamp_spectrum(lam)
    rho = (V * mu) @ V.conj().T
    rho = (rho + rho.conj().T) / 2
    return DensityMatrix.from_array(rho / np.trace(rho).real), clip_mass


def _floored(ev, rel=FIDELITY_FLOOR):
    """ round-off eigenvalues (below rel * max) set to 0 before a square root """
    ev = np.clip(ev, 0, None)
    return np.where(ev > rel * ev.max(initial=0), ev, 0)


def fidelity(rho, sigma):
    """ Uhlmann fidelity (Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2, clipped to [0, 1] """
    rho, sigma = as_density(rho), as_density(sigma)
    mu, V = scipy.linalg.eigh(rho.elements)
    sqrt_rho = (V * np.sqrt(_floored(mu))) @ V.conj().T
    inner = sqrt_rho @ sigma.elements @ sqrt_rho
    ev = scipy.linalg.eigvalsh((inner + inner.conj().T) / 2)
    return float(np.clip(np.sqrt(_floored(ev)).sum() ** 2, 0, 1))


def reconstruct(table, target=None):
    rho_hat, clip_mass = project_psd(linear_inversion(table))
    fid = math.nan if target is None else fidelity(target, rho_hat)
    return TomoResult(rho_hat, fid, clip_mass)


# ---- bootstrap ----

BootstrapResult = namedtuple('BootstrapResult', 'record fidelity fidelity_err flagged records')


def bootstrap_measures(target, shots=DEFAULT_SHOTS, resamples=DEFAULT_RESAMPLES, seed=0, exact=False,
                       ree_options=None, with_entanglement=True, workers=1, verbose=False):
    """ Monte Carlo of the photon statistics: each resample b draws counts with seed + b, reconstructs and
        evaluates all measures. Central values are the resample means, uncertainties their sample std.
    """
    if resamples < 2:
        raise ValueError(f'bootstrap needs at least 2 resamples, got {resamples=}')
    target = as_density(target)

    def one(b):
        res = reconstruct(sample_counts(target, shots, seed + b, exact), target)
        return res, all_measures(res.rho_hat, ree_options, with_entanglement)

    with ThreadPoolExecutor(max(1, workers)) as pool:
        results = list(tqdm(pool.map(one, range(resamples)), total=resamples, disable=not verbose))

    records = [rec for _, rec in results]
    values = np.array([[rec.as_dict()[q] for q in QUANTITIES] for rec in records])
    mean, err = values.mean(axis=0), values.std(axis=0, ddof=1)
    fids = np.array([res.fidelity_vs_target for res, _ in results])
    record = MeasureRecord(**dict(zip(QUANTITIES, mean.tolist())), uncertainties=dict(zip(QUANTITIES, err.tolist())))
    flagged = sum(rec.flagged for rec in records)
    if verbose:
        print(f' >> bootstrap over {resamples} resamples of {shots} shots: F = {fids.mean():.5f} +- {fids.std(ddof=1):.5f}')
    return BootstrapResult(record, float(fids.mean()), float(fids.std(ddof=1)), flagged, records)
