import math

import numpy as np
import pytest

from decohere.states import (make_named_state, as_density, basis_ket, product_ket, dephased_diagonal,
                             random_density_matrix)
from decohere.channels import DephasingSpec, apply_dephasing
from decohere.measures import (von_neumann_entropy, relative_entropy, total_coherence, local_coherence,
                               global_coherence, mutual_information, classical_correlations, hookup, hookup_routes,
                               all_measures, MeasureRecord, QUANTITIES)
from decohere.utils.misc import NumericalError

from oracle import WWBAR, STAR, H_WWBAR, closed_form_measures


def test_entropy():
    assert von_neumann_entropy(basis_ket('010')) < 1e-12
    assert abs(von_neumann_entropy(np.eye(8) / 8) - 3 * math.log(2)) < 1e-12
    assert abs(von_neumann_entropy(np.array([[1 / 2, 1 / 3], [1 / 3, 1 / 2]])) - H_WWBAR) < 1e-12
    assert abs(H_WWBAR - 0.45056) < 1e-5


def test_relative_entropy(wwbar, rng):
    rho = random_density_matrix(2, rng=rng)
    assert relative_entropy(rho, rho) < 1e-12
    assert abs(relative_entropy(wwbar, dephased_diagonal(wwbar)) - math.log(6)) < 1e-12
    assert relative_entropy(np.diag([1., 0.]), np.diag([0., 1.])) == math.inf
    # general (non-diagonal) reference
    sigma = random_density_matrix(2, rng=rng)
    assert relative_entropy(rho, sigma) > 0
    assert relative_entropy(basis_ket('00'), np.eye(4) / 4) == pytest.approx(2 * math.log(2), abs=1e-12)


@pytest.mark.parametrize('name, expected', [('wwbar', WWBAR), ('star', STAR)])
def test_closed_form_values(name, expected):
    rho = as_density(make_named_state(name))
    assert abs(total_coherence(rho) - expected['C']) < 1e-9
    assert abs(local_coherence(rho) - expected['CL']) < 1e-9
    assert abs(global_coherence(rho) - (expected['C'] - expected['CL'])) < 1e-9
    assert abs(mutual_information(rho) - expected['T']) < 1e-9
    assert abs(classical_correlations(rho) - expected['K']) < 1e-9
    assert abs(hookup(rho) - (expected['C'] + expected['K'])) < 1e-9


def test_numeric_values(wwbar, star):
    # values published to five decimals; the closed forms above are the exact references
    assert abs(global_coherence(wwbar) - 1.06399) < 1e-4
    assert abs(mutual_information(wwbar) - 1.35168) < 1e-4
    assert abs(local_coherence(star) - 0.42249) < 1e-4
    assert abs(global_coherence(star) - 0.96380) < 1e-4
    assert abs(mutual_information(star) - 1.39534) < 1e-4
    assert abs(classical_correlations(star) - 0.43154) < 1e-4
    assert abs(hookup(wwbar) - 2.07944) < 1e-4
    assert abs(hookup(star) - 1.81783) < 1e-4


def test_measures_against_oracle(rng):
    for _ in range(10):
        rho = random_density_matrix(3, rank=int(rng.integers(1, 9)), rng=rng)
        expected = closed_form_measures(rho.elements, 3)
        assert abs(total_coherence(rho) - expected['C']) < 1e-9
        assert abs(local_coherence(rho) - expected['CL']) < 1e-9
        assert abs(mutual_information(rho) - expected['T']) < 1e-9
        assert abs(classical_correlations(rho) - expected['K']) < 1e-9
        via_coherence, via_correlations = hookup_routes(rho)
        assert abs(via_coherence - via_correlations) < 1e-9


def test_trivial_zeros(rng):
    assert total_coherence(dephased_diagonal(random_density_matrix(3, rng=rng))) < 1e-12
    assert local_coherence(make_named_state('ghz:3')) < 1e-12
    product = product_ket([[0.6, 0.8], [1, 1j], [0.8, -0.6j]])
    assert abs(global_coherence(product)) < 1e-9
    assert mutual_information(product) < 1e-9
    assert classical_correlations(basis_ket('101')) == 0
    assert hookup(basis_ket('101')) == 0


def test_classical_correlations_survive_dephasing(star, rng):
    K = classical_correlations(star)
    for ell in np.linspace(0, 400, 9):
        for targets in (None, 'A', 'C', 'BC'):
            rho = apply_dephasing(star, DephasingSpec(2.06e-5, ell, targets=targets))
            assert abs(classical_correlations(rho) - K) <= 1e-12


def test_monotone_under_dephasing(wwbar):
    values = {q: [] for q in ('C', 'CG', 'CL', 'T')}
    for ell in np.linspace(0, 500, 26):
        rho = apply_dephasing(wwbar, DephasingSpec(2.21e-5, ell))
        values['C'].append(total_coherence(rho))
        values['CG'].append(global_coherence(rho))
        values['CL'].append(local_coherence(rho))
        values['T'].append(mutual_information(rho))
    for q, v in values.items():
        assert all(b <= a + 1e-12 for a, b in zip(v, v[1:])), q


def test_all_measures_classical_state(wwbar):
    rec = all_measures(dephased_diagonal(wwbar))
    assert rec.E == 0 and rec.ree_result.converged
    assert rec.C < 1e-12 and abs(rec.CG) < 1e-12 and rec.CL < 1e-12
    assert abs(rec.T - math.log(4 / 3)) < 1e-9 and abs(rec.K - math.log(4 / 3)) < 1e-9
    rec.check()


def test_all_measures_product_ket():
    rec = all_measures(product_ket([[1, 0], [0, 1], [1, 0]]))
    for q, v in rec.as_dict().items():
        assert v == pytest.approx(0, abs=1e-12), q


def test_all_measures_wwbar(wwbar, fast_ree):
    rec = all_measures(wwbar, fast_ree)
    for q in ('C', 'CL', 'T', 'K'):
        assert abs(getattr(rec, q) - WWBAR[q]) < 1e-9
    assert 0 < rec.E < rec.C
    assert rec.check() is rec


def test_all_measures_without_entanglement(star):
    rec = all_measures(star, with_entanglement=False)
    assert math.isnan(rec.E) and rec.ree_result is None
    assert rec.violations() == []


def test_record_helpers():
    values = dict(E=0.5, C=2., CG=1.2, CL=0.8, T=1.7, K=0.5, M=2.5)
    rec = MeasureRecord(**values, uncertainties={q: 0.01 for q in QUANTITIES})
    assert list(rec.as_dict()) == list(QUANTITIES)
    bits = rec.to_bits()
    assert abs(bits.C - 2 / math.log(2)) < 1e-15
    assert abs(bits.errors()['K'] - 0.01 / math.log(2)) < 1e-15
    assert 'bits' in rec.format(bits=True) and '+-' in rec.format()
    assert rec.violations() == []

    broken = MeasureRecord(**dict(values, CG=1.0, E=3.))
    violations = broken.violations()
    assert len(violations) == 2
    assert any('C_G' in v for v in violations) and any('E > C' in v for v in violations)
    with pytest.raises(NumericalError):
        broken.check()


def test_invalid_input():
    with pytest.raises(NumericalError):
        total_coherence(np.array([[0.5, 0.6], [0.6, 0.5]]))
