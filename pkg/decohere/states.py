# --------------------------------------------------------
# qubit registers: named states and structure maps
# --------------------------------------------------------
# Basis convention: index i of a 2^n vector / matrix encodes the bitstring of qubits (0, ..., n-1),
# qubit 0 (label A) being the most significant bit. |100> is therefore index 4.
import re
import math
from functools import reduce
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from decohere.utils.misc import NumericalError

MAX_QUBITS = 10
QUBIT_LABELS = 'ABCDEFGHIJ'

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
PSD_TOL = 1e-10
NORM_TOL = 1e-12


def _check_n_qubits(n):
    if not isinstance(n, (int, np.integer)) or not 1 <= n <= MAX_QUBITS:
        raise ValueError(f'number of qubits must be an integer in [1, {MAX_QUBITS}], got {n=}')
    return int(n)


def _n_qubits_of_dim(dim):
    n = int(round(math.log2(dim))) if dim > 0 else 0
    if 2 ** n != dim:
        raise ValueError(f'dimension {dim} is not a power of 2')
    return _check_n_qubits(n)


@dataclass(frozen=True, eq=False)
class PureState:
    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        n = _check_n_qubits(self.n_qubits)
        amps = np.array(self.amplitudes, dtype=np.complex128).ravel()
        if len(amps) != 2 ** n:
            raise ValueError(f'expected {2**n} amplitudes for {n} qubits, got {len(amps)}')
        norm = np.vdot(amps, amps).real
        if abs(norm - 1) > NORM_TOL:
            raise NumericalError(f'state is not normalized: |psi|^2 = {norm!r}')
        amps.flags.writeable = False
        object.__setattr__(self, 'amplitudes', amps)

    @classmethod
    def from_amplitudes(cls, amplitudes, normalize=True):
        amps = np.asarray(amplitudes, dtype=np.complex128).ravel()
        if normalize:
            norm = np.linalg.norm(amps)
            if norm <= NORM_TOL:
                raise NumericalError('cannot normalize a zero vector')
            amps = amps / norm
        return cls(_n_qubits_of_dim(len(amps)), amps)

    @property
    def dim(self):
        return 2 ** self.n_qubits


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    n_qubits: int
    elements: np.ndarray

    def __post_init__(self):
        n = _check_n_qubits(self.n_qubits)
        rho = np.array(self.elements, dtype=np.complex128)
        if rho.shape != (2 ** n, 2 ** n):
            raise ValueError(f'expected a {2**n}x{2**n} matrix for {n} qubits, got {rho.shape}')
        rho.flags.writeable = False
        object.__setattr__(self, 'elements', rho)
        self.validate()

    @classmethod
    def from_array(cls, elements):
        elements = np.asarray(elements, dtype=np.complex128)
        return cls(_n_qubits_of_dim(elements.shape[0]), elements)

    @property
    def dim(self):
        return 2 ** self.n_qubits

    def validate(self):
        rho = self.elements
        herm = np.abs(rho - rho.conj().T).max()
        if herm > HERMITIAN_TOL:
            raise NumericalError(f'matrix is not Hermitian: max|rho - rho^H| = {herm:.3e}')
        trace = np.trace(rho).real
        if abs(trace - 1) > TRACE_TOL:
            raise NumericalError(f'matrix does not have unit trace: Tr = {trace!r}')
        lmin = np.linalg.eigvalsh(rho).min()
        if lmin < -PSD_TOL:
            raise NumericalError(f'matrix is not positive semidefinite: min eigenvalue = {lmin:.3e}')
        return self

    def spectrum(self):
        """ eigenvalues in ascending order, clamped to [0, inf) """
        return clamp_spectrum(scipy.linalg.eigvalsh(self.elements))

    def is_diagonal(self):
        rho = self.elements
        return not np.any(rho - np.diag(np.diag(rho)))


def as_density(obj):
    """ accepts DensityMatrix, PureState or a square array """
    if isinstance(obj, DensityMatrix):
        return obj
    if isinstance(obj, PureState):
        return density_from_pure(obj)
    arr = np.asarray(obj)
    if arr.ndim == 1:
        return density_from_pure(PureState.from_amplitudes(arr, normalize=False))
    return DensityMatrix.from_array(arr)


def qubit_set(labels, n_qubits):
    """ validated, ascending tuple of qubit indices. Accepts ints, letters ('A' == 0) or 'all'. """
    if isinstance(labels, str):
        if labels.lower() == 'all':
            return tuple(range(n_qubits))
        labels = [c for c in labels.replace(',', '') if not c.isspace()]
    elif isinstance(labels, (int, np.integer)):
        labels = [labels]
    qubits = []
    for q in labels:
        if isinstance(q, str):
            if q.isdigit():
                q = int(q)
            elif len(q) == 1 and q.upper() in QUBIT_LABELS:
                q = QUBIT_LABELS.index(q.upper())
            else:
                raise ValueError(f'Unknown qubit label {q=}')
        q = int(q)
        if not 0 <= q < n_qubits:
            raise ValueError(f'qubit {q} out of range for a {n_qubits}-qubit register')
        qubits.append(q)
    if len(set(qubits)) != len(qubits):
        raise ValueError(f'duplicate qubit labels in {labels}')
    return tuple(sorted(qubits))


def bit_table(n_qubits):
    """ (2^n, n) array of the bits of every basis index, qubit 0 first """
    idx = np.arange(2 ** n_qubits)
    return (idx[:, None] >> (n_qubits - 1 - np.arange(n_qubits))[None, :]) & 1


# ---- named states ----

def _weight_superposition(n, weights):
    popcount = bit_table(n).sum(axis=1)
    amps = np.isin(popcount, weights).astype(np.complex128)
    return PureState.from_amplitudes(amps)


def basis_ket(bits):
    bits = str(bits)
    if not bits or set(bits) - {'0', '1'}:
        raise ValueError(f'basis ket must be a non-empty bitstring, got {bits=}')
    n = _check_n_qubits(len(bits))
    amps = np.zeros(2 ** n, dtype=np.complex128)
    amps[int(bits, 2)] = 1
    return PureState(n, amps)


def ghz_state(n):
    n = _check_n_qubits(n)
    amps = np.zeros(2 ** n, dtype=np.complex128)
    amps[0] = amps[-1] = 1
    return PureState.from_amplitudes(amps)


def dicke_state(n, k):
    n = _check_n_qubits(n)
    if not 0 <= k <= n:
        raise ValueError(f'invalid Dicke excitation number {k=} for {n=}')
    return _weight_superposition(n, [k])


def star_state():
    amps = np.zeros(8, dtype=np.complex128)
    amps[[0b000, 0b100, 0b101, 0b111]] = 1
    return PureState.from_amplitudes(amps)


_NAMED = {
    'w': lambda: _weight_superposition(3, [1]),
    'wbar': lambda: _weight_superposition(3, [2]),
    'wwbar': lambda: _weight_superposition(3, [1, 2]),
    'star': star_state,
    'bell': lambda: ghz_state(2),
}
_ALIASES = {'w_bar': 'wbar', 'w_wbar': 'wwbar', 'wbarw': 'wwbar', 's': 'star'}
_PARAMETRIC = re.compile(r'^(ghz|dicke|ket|basisket)\s*[:(]\s*([^)]*?)\s*\)?$')


def make_named_state(name):
    """ Build a named pure state.
        Plain names: W, Wbar, WWbar, Star, Bell (case-insensitive).
        Parametric: GHZ(n) or ghz:n, Dicke(n,k) or dicke:n:k, BasisKet(bits) or ket:bits.
    """
    key = str(name).strip().lower()
    key = _ALIASES.get(key, key)
    if key in _NAMED:
        return _NAMED[key]()
    match = _PARAMETRIC.match(key)
    if match is None:
        raise ValueError(f'Unknown state {name=}')
    kind, args = match.groups()
    args = [a for a in re.split(r'[,:\s]+', args) if a]
    try:
        if kind == 'ghz' and len(args) == 1:
            return ghz_state(int(args[0]))
        if kind == 'dicke' and len(args) == 2:
            return dicke_state(int(args[0]), int(args[1]))
    except ValueError as e:
        raise ValueError(f'invalid parameters for state {name=}: {e}') from e
    if kind in ('ket', 'basisket') and len(args) == 1:
        return basis_ket(args[0])
    raise ValueError(f'invalid parameters for state {name=}')


def density_from_pure(psi):
    amps = psi.amplitudes
    return DensityMatrix(psi.n_qubits, np.outer(amps, amps.conj()))


def project_qubit_plus(psi, q):
    """ project qubit q onto (|0> + |1>)/sqrt(2), drop it and renormalize """
    n = psi.n_qubits
    if n < 2:
        raise ValueError('projection needs at least 2 qubits')
    (q,) = qubit_set([q], n)
    amps = psi.amplitudes.reshape((2,) * n)
    projected = (np.take(amps, 0, axis=q) + np.take(amps, 1, axis=q)) / np.sqrt(2)
    norm = np.linalg.norm(projected)
    if norm <= NORM_TOL:
        raise NumericalError(f'state is orthogonal to |+> on qubit {q}: zero-norm projection')
    return PureState(n - 1, projected.ravel() / norm)


def product_ket(factors):
    """ tensor product of single-qubit kets, first factor = qubit 0 """
    kets = [np.asarray(f, dtype=np.complex128) for f in factors]
    return PureState.from_amplitudes(reduce(np.kron, kets))


def random_pure_state(n_qubits, rng=None):
    rng = np.random.default_rng(rng)
    d = 2 ** _check_n_qubits(n_qubits)
    return PureState.from_amplitudes(rng.normal(size=d) + 1j * rng.normal(size=d))


def random_density_matrix(n_qubits, rank=None, rng=None):
    """ Ginibre ensemble: G G^H / Tr with G of shape (d, rank) """
    rng = np.random.default_rng(rng)
    d = 2 ** _check_n_qubits(n_qubits)
    rank = d if rank is None else rank
    assert 1 <= rank <= d, f'bad {rank=}'
    G = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    rho = G @ G.conj().T
    rho = (rho + rho.conj().T) / 2
    return DensityMatrix.from_array(rho / np.trace(rho).real)


# ---- structure maps ----

def tensor(rho1, rho2):
    return DensityMatrix(rho1.n_qubits + rho2.n_qubits, np.kron(rho1.elements, rho2.elements))


def partial_trace(rho, keep):
    n = rho.n_qubits
    keep = qubit_set(keep, n)
    if not keep:
        raise ValueError('partial trace needs a non-empty set of kept qubits')
    t = rho.elements.reshape((2,) * (2 * n))
    rows = list(range(n))
    cols = [n + q if q in keep else q for q in range(n)]  # traced qubits share their row index
    out = list(keep) + [n + q for q in keep]
    reduced = np.einsum(t, rows + cols, out)
    k = len(keep)
    return DensityMatrix(k, reduced.reshape(2 ** k, 2 ** k))


def permute_qubits(rho, perm):
    """ new qubit i is old qubit perm[i] """
    n = rho.n_qubits
    perm = list(perm)
    assert sorted(perm) == list(range(n)), f'bad permutation {perm=}'
    t = rho.elements.reshape((2,) * (2 * n)).transpose(perm + [n + p for p in perm])
    return DensityMatrix(n, t.reshape(2 ** n, 2 ** n))


def dephased_diagonal(rho):
    return DensityMatrix(rho.n_qubits, np.diag(np.diag(rho.elements)))


def marginals(rho):
    return [partial_trace(rho, [q]) for q in range(rho.n_qubits)]


def product_of_marginals(rho):
    return reduce(tensor, marginals(rho))


def partial_transpose(rho, qubits):
    n = rho.n_qubits
    qubits = qubit_set(qubits, n)
    axes = list(range(2 * n))
    for q in qubits:
        axes[q], axes[n + q] = axes[n + q], axes[q]
    t = rho.elements.reshape((2,) * (2 * n)).transpose(axes)
    return t.reshape(2 ** n, 2 ** n)


def is_ppt(rho, qubits=(0,), tol=1e-12):
    """ positive partial transpose w.r.t. `qubits` """
    return scipy.linalg.eigvalsh(partial_transpose(rho, qubits)).min() >= -tol


def trace_distance(rho, sigma):
    diff = rho.elements - sigma.elements
    return 0.5 * np.abs(scipy.linalg.eigvalsh((diff + diff.conj().T) / 2)).sum()


# ---- hermitian eigensolver ----

def eig_hermitian(H, tol=1e-10):
    """ eigenvalues (ascending) and orthonormal eigenvectors (columns) of a Hermitian matrix """
    H = np.asarray(H.elements if isinstance(H, DensityMatrix) else H, dtype=np.complex128)
    assert H.ndim == 2 and H.shape[0] == H.shape[1], f'expected a square matrix, got {H.shape=}'
    herm = np.abs(H - H.conj().T).max() if H.size else 0.
    if herm > tol:
        raise NumericalError(f'eig_hermitian: input is not Hermitian (max|H - H^H| = {herm:.3e})')
    return scipy.linalg.eigh((H + H.conj().T) / 2)


def clamp_spectrum(eigenvalues, tol=PSD_TOL):
    """ eigenvalues in [-tol, 0) are set to 0, anything more negative is an error """
    eigenvalues = np.asarray(eigenvalues, dtype=float)
    if eigenvalues.size and eigenvalues.min() < -tol:
        raise NumericalError(f'negative eigenvalue {eigenvalues.min():.3e} below tolerance {-tol:.0e}')
    return np.clip(eigenvalues, 0, None)
