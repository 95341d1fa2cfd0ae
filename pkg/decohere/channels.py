# --------------------------------------------------------
# per-qubit dephasing channel with the quartz-thickness law
# --------------------------------------------------------
# rho -> (1 - p) rho + p Z rho Z on every target qubit, with p(ell) = [1 - exp(-gamma ell^2)] / 2.
# gamma is in lambda0^-2 and ell in lambda0 units (lambda0 = 780 nm), so gamma * ell^2 is dimensionless.
from dataclasses import dataclass, field

import numpy as np

from decohere.states import DensityMatrix, qubit_set, bit_table

LAMBDA0_NM = 780.

PAULI_I = np.eye(2, dtype=np.complex128)
PAULI_Z = np.diag([1., -1.]).astype(np.complex128)


def dephase_prob(gamma, ell):
    if gamma < 0 or ell < 0:
        raise ValueError(f'dephasing needs gamma >= 0 and ell >= 0, got {gamma=}, {ell=}')
    return min(-np.expm1(-gamma * ell ** 2) / 2, 0.5)


@dataclass(frozen=True)
class DephasingSpec:
    """ targets=None dephases every qubit of the register.
        prob, when given, replaces the (gamma, ell) law by a direct probability.
        gamma_overrides maps a qubit index to its own dephasing rate.
    """
    gamma: float = 0.
    ell: float = 0.
    targets: tuple = None
    prob: float = None
    gamma_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.gamma < 0 or self.ell < 0:
            raise ValueError(f'dephasing needs gamma >= 0 and ell >= 0, got {self.gamma=}, {self.ell=}')
        if self.prob is not None and not 0 <= self.prob <= 0.5:
            raise ValueError(f'dephasing probability must lie in [0, 1/2], got {self.prob=}')
        if any(g < 0 for g in self.gamma_overrides.values()):
            raise ValueError(f'negative rate in {self.gamma_overrides=}')

    @classmethod
    def from_prob(cls, p, targets=None):
        return cls(targets=targets, prob=p)

    def resolve_targets(self, n_qubits):
        if self.targets is None:
            return tuple(range(n_qubits))
        targets = qubit_set(self.targets, n_qubits)
        extra = set(qubit_set(list(self.gamma_overrides), n_qubits)) - set(targets)
        if extra:
            raise ValueError(f'rate overrides given for non-target qubits {sorted(extra)}')
        return targets

    def gamma_of(self, q):
        return self.gamma_overrides.get(q, self.gamma)

    def probability(self, q):
        if self.prob is not None:
            return self.prob
        return dephase_prob(self.gamma_of(q), self.ell)

    def coherence_factor(self, q):
        """ factor 1 - 2p = exp(-gamma ell^2) applied to coherences that flip qubit q """
        if self.prob is not None:
            return 1 - 2 * self.prob
        return np.exp(-self.gamma_of(q) * self.ell ** 2)


def full_dephasing(targets=None):
    return DephasingSpec.from_prob(0.5, targets)


def coherence_scaling(n_qubits, spec):
    """ (2^n, 2^n) matrix of the factors multiplying each element of rho """
    bits = bit_table(n_qubits)
    scale = np.ones((2 ** n_qubits, 2 ** n_qubits))
    for q in spec.resolve_targets(n_qubits):
        flips = bits[:, q, None] != bits[None, :, q]
        scale[flips] *= spec.coherence_factor(q)
    return scale


def apply_dephasing(rho, spec):
    scaled = rho.elements * coherence_scaling(rho.n_qubits, spec)
    return DensityMatrix(rho.n_qubits, scaled)


def kraus_operators(p):
    return [np.sqrt(1 - p) * PAULI_I, np.sqrt(p) * PAULI_Z]


def _embed(op, q, n_qubits):
    ops = [PAULI_I] * n_qubits
    ops[q] = op
    out = ops[0]
    for o in ops[1:]:
        out = np.kron(out, o)
    return out


def apply_dephasing_kraus(rho, spec):
    """ reference implementation in operator form, for cross-checks """
    n = rho.n_qubits
    out = rho.elements
    for q in spec.resolve_targets(n):
        kraus = [_embed(k, q, n) for k in kraus_operators(spec.probability(q))]
        out = sum(k @ out @ k.conj().T for k in kraus)
    return DensityMatrix(n, (out + out.conj().T) / 2)
