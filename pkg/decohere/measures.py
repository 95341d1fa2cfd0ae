# --------------------------------------------------------
# relative-entropy measures of coherence and correlations
# --------------------------------------------------------
# All values are in nats. The incoherent basis is the computational basis, no basis optimization.
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.special

from decohere.states import as_density, marginals, eig_hermitian, clamp_spectrum
from decohere.utils.misc import NumericalError, nats_to_bits

QUANTITIES = ('E', 'C', 'CG', 'CL', 'T', 'K', 'M')
RECORD_TOL = 1e-9
SUPPORT_TOL = 1e-12
EIG_FLOOR = 1e-14


def _shannon(p):
    return scipy.special.entr(np.clip(p, 0, None)).sum()


def _diagonal(rho):
    return np.diag(rho.elements).real


def von_neumann_entropy(rho):
    rho = as_density(rho)
    return _shannon(rho.spectrum())


def relative_entropy(rho, sigma):
    """ S(rho || sigma) = Tr(rho ln rho - rho ln sigma), math.inf when supp(rho) is not inside supp(sigma) """
    rho, sigma = as_density(rho), as_density(sigma)
    assert rho.n_qubits == sigma.n_qubits, f'register mismatch {rho.n_qubits=} {sigma.n_qubits=}'
    if sigma.is_diagonal():
        # diagonal reference: -S(rho) - sum_j rho_jj ln sigma_jj
        weights, mu = _diagonal(rho), _diagonal(sigma)
    else:
        mu, V = eig_hermitian(sigma.elements)
        mu = clamp_spectrum(mu)
        weights = np.einsum('ji,jk,ki->i', V.conj(), rho.elements, V).real
    outside = mu <= EIG_FLOOR
    if np.any(weights[outside] > SUPPORT_TOL):
        return math.inf
    inside = ~outside
    value = -von_neumann_entropy(rho) - np.dot(weights[inside], np.log(mu[inside]))
    return max(value, 0.)


def _marginal_entropies(rho):
    """ (S(rho_q), H(diag rho_q)) for every single-qubit marginal """
    ms = marginals(rho)
    return np.array([_shannon(m.spectrum()) for m in ms]), np.array([_shannon(_diagonal(m)) for m in ms])


def total_coherence(rho):
    rho = as_density(rho)
    return max(_shannon(_diagonal(rho)) - von_neumann_entropy(rho), 0.)


def local_coherence(rho):
    """ S(pi(rho) || pi_d(rho)); both references are products, so the entropies add over qubits """
    rho = as_density(rho)
    s, h = _marginal_entropies(rho)
    return max(h.sum() - s.sum(), 0.)


def global_coherence(rho):
    return total_coherence(rho) - local_coherence(rho)


def mutual_information(rho):
    rho = as_density(rho)
    s, _ = _marginal_entropies(rho)
    return max(s.sum() - von_neumann_entropy(rho), 0.)


def classical_correlations(rho):
    """ S(rho_d || pi(rho_d)). Only the diagonal of rho enters, so dephasing leaves it untouched """
    rho = as_density(rho)
    _, h = _marginal_entropies(rho)
    return max(h.sum() - _shannon(_diagonal(rho)), 0.)


def hookup_routes(rho):
    rho = as_density(rho)
    return (total_coherence(rho) + classical_correlations(rho),
            mutual_information(rho) + local_coherence(rho))


def hookup(rho, tol=RECORD_TOL):
    via_coherence, via_correlations = hookup_routes(rho)
    if abs(via_coherence - via_correlations) > tol:
        raise NumericalError(f'hookup routes disagree: C+K = {via_coherence!r}, T+C_L = {via_correlations!r}')
    return (via_coherence + via_correlations) / 2


@dataclass
class MeasureRecord:
    E: float
    C: float
    CG: float
    CL: float
    T: float
    K: float
    M: float
    uncertainties: dict = None
    ree_result: object = field(default=None, repr=False, compare=False)

    def as_dict(self):
        return {q: getattr(self, q) for q in QUANTITIES}

    def errors(self):
        if self.uncertainties is None:
            return None
        return {q: self.uncertainties.get(q, math.nan) for q in QUANTITIES}

    @property
    def flagged(self):
        return self.ree_result is not None and not self.ree_result.converged

    def to_bits(self):
        values = {q: nats_to_bits(v) for q, v in self.as_dict().items()}
        errors = self.errors()
        if errors is not None:
            errors = {q: nats_to_bits(v) for q, v in errors.items()}
        return MeasureRecord(**values, uncertainties=errors, ree_result=self.ree_result)

    def violations(self, tol=RECORD_TOL, ent_tol=RECORD_TOL):
        out = []
        if abs(self.C - self.CG - self.CL) > tol:
            out.append(f'C != C_G + C_L ({self.C!r} vs {self.CG + self.CL!r})')
        if abs(self.M - (self.C + self.K)) > tol or abs(self.M - (self.T + self.CL)) > tol:
            out.append(f'M != C + K = T + C_L ({self.M!r}, {self.C + self.K!r}, {self.T + self.CL!r})')
        if not math.isnan(self.E) and self.E > self.C + ent_tol:
            out.append(f'E > C ({self.E!r} > {self.C!r})')
        return out

    def check(self, tol=RECORD_TOL, ent_tol=RECORD_TOL):
        violations = self.violations(tol, ent_tol)
        if violations:
            raise NumericalError('; '.join(violations))
        return self

    def format(self, bits=False):
        rec = self.to_bits() if bits else self
        unit = 'bits' if bits else 'nats'
        errors = rec.errors()
        parts = []
        for q, v in rec.as_dict().items():
            parts.append(f'{q}={v:.6f}' + (f'+-{errors[q]:.6f}' if errors is not None else ''))
        return ' '.join(parts) + f' [{unit}]'


def all_measures(rho, ree_options=None, with_entanglement=True):
    """ fills the seven scalars. E comes from the separable-state solver (upper bound), or is nan when
        with_entanglement is False.
    """
    from decohere.ree import ree  # noqa (ree imports this module)

    rho = as_density(rho)
    C = total_coherence(rho)
    CL = local_coherence(rho)
    T = mutual_information(rho)
    K = classical_correlations(rho)
    M = hookup(rho)
    ree_result = None
    E = math.nan
    if with_entanglement:
        ree_result = ree(rho, ree_options)
        E = ree_result.entanglement
    return MeasureRecord(E=E, C=C, CG=C - CL, CL=CL, T=T, K=K, M=M, ree_result=ree_result)
