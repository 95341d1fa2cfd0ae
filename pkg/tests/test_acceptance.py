# --------------------------------------------------------
# full dephasing sweeps with the default entanglement solver (pytest -m slow)
# --------------------------------------------------------
import math
import time

import numpy as np
import pytest

from decohere.states import make_named_state, as_density, dephased_diagonal, product_ket, DensityMatrix
from decohere.channels import DephasingSpec, apply_dephasing, full_dephasing
from decohere.measures import all_measures, hookup_routes
from decohere.ree import ree, ReeOptions
from decohere.tomo import sample_counts, reconstruct, bootstrap_measures
from decohere.harness import (SweepConfig, REFERENCE_GAMMA, run_sweep, check_sweep, fit_all, verify_ordering,
                              parse_grid, ONE_QUBIT_GRID)

from oracle import closed_form_measures, random_separable

pytestmark = pytest.mark.slow

NAMED = ['wwbar', 'w', 'wbar', 'star', 'bell', 'ghz:3']
SWEEP_SECONDS = 300


@pytest.fixture(scope='module', params=['wwbar', 'star'])
def timed_sweep(request):
    state = request.param
    start = time.perf_counter()
    result = run_sweep(SweepConfig(state=state, gamma=REFERENCE_GAMMA[state]))
    return result, time.perf_counter() - start


@pytest.fixture
def ideal_sweep(timed_sweep):
    return timed_sweep[0]


def test_sweep_runtime(timed_sweep):
    assert timed_sweep[1] <= SWEEP_SECONDS


def test_rate_ordering(ideal_sweep):
    fits = fit_all(ideal_sweep.rows, ideal_sweep.asymptote)
    report = verify_ordering(fits)
    assert report.passed, report.format()


def test_sweep_invariants(ideal_sweep):
    assert check_sweep(ideal_sweep.rows) == []
    assert ideal_sweep.flagged == []
    E, C = ideal_sweep.column('E'), ideal_sweep.column('C')
    assert np.all(E <= C + 1e-6)
    assert np.all(np.diff(E) <= 1e-3)


@pytest.mark.parametrize('state', ['wwbar', 'star'])
@pytest.mark.parametrize('targets', [None, (0,), (1,), (2,)])
def test_hookup_along_sweeps(state, targets):
    rho0 = as_density(make_named_state(state))
    K0 = closed_form_measures(rho0.elements, 3)['K']
    for ell in np.linspace(*parse_grid('0:250:26')):
        rho = apply_dephasing(rho0, DephasingSpec(REFERENCE_GAMMA[state], ell, targets=targets))
        via_coherence, via_correlations = hookup_routes(rho)
        assert abs(via_coherence - via_correlations) <= 1e-9
        assert abs(closed_form_measures(rho.elements, 3)['K'] - K0) <= 1e-12


@pytest.mark.parametrize('state', ['wwbar', 'star'])
def test_full_dephasing_limit(state):
    rho0 = as_density(make_named_state(state))
    rec = all_measures(apply_dephasing(rho0, full_dephasing()))
    assert max(rec.C, abs(rec.CG), rec.CL) <= 1e-9
    assert rec.E <= 1e-6
    assert abs(rec.T - rec.K) <= 1e-9
    assert abs(rec.T - closed_form_measures(dephased_diagonal(rho0).elements, 3)['T']) <= 1e-9
    if state == 'wwbar':
        assert abs(rec.T - math.log(4 / 3)) <= 1e-9


@pytest.mark.parametrize('state, target', [('star', 'A'), ('wwbar', 'A')])
def test_one_qubit_dephasing_keeps_entanglement(state, target):
    rho = apply_dephasing(as_density(make_named_state(state)),
                          DephasingSpec(REFERENCE_GAMMA[state], 1500., targets=target))
    assert ree(rho).value >= 0.05


def test_star_central_qubit_sweep():
    result = run_sweep(SweepConfig(state='star', gamma=REFERENCE_GAMMA['star'], targets='C'))
    assert result.config.ell == ONE_QUBIT_GRID
    E = result.column('E')
    assert E[0] >= 0.05 and E[-1] < 1e-4
    assert np.all(np.diff(E) <= 1e-3)


@pytest.mark.parametrize('target', ['A', 'B'])
def test_star_peripheral_qubit_sweep(target):
    result = run_sweep(SweepConfig(state='star', gamma=REFERENCE_GAMMA['star'], targets=target))
    assert result.column('E').min() >= 0.05
    assert result.flagged == []


def test_one_qubit_sweeps_are_target_independent():
    tables = []
    for target in 'ABC':
        result = run_sweep(SweepConfig(state='wwbar', targets=target, ell='0:1500:6'))
        tables.append(np.array([list(r.values.values()) for r in result.rows]))
    np.testing.assert_allclose(tables[0], tables[1], atol=1e-12)
    np.testing.assert_allclose(tables[0], tables[2], atol=1e-12)
    assert tables[0][-1, 0] >= 0.05


def test_solver_oracles():
    options = ReeOptions()
    res = ree(product_ket([[0.6, 0.8j], [1, -1j], [0.28, 0.96]]), options)
    assert res.value <= 1e-6 and res.spread <= 1e-4
    bell = np.zeros((8, 8))
    bell[np.ix_([0, 6], [0, 6])] = 0.5  # (|00> + |11>) / sqrt2 on AB, C in |0>
    for rho in (DensityMatrix.from_array(bell), as_density(make_named_state('ghz:3'))):
        res = ree(rho, options)
        assert abs(res.value - math.log(2)) <= 1e-3 and res.spread <= 1e-4


def test_separable_mixtures():
    rng = np.random.default_rng(2024)
    for _ in range(20):
        res = ree(DensityMatrix.from_array(random_separable(3, int(rng.integers(2, 9)), rng)))
        assert res.value <= 1e-4 and res.spread <= 1e-4


@pytest.mark.parametrize('name', NAMED)
def test_exact_tomography_is_identity(name):
    rho0 = as_density(make_named_state(name))
    for rho in (rho0, apply_dephasing(rho0, DephasingSpec(2.21e-5, 150.))):
        rho_hat = reconstruct(sample_counts(rho, 100_000, exact=True)).rho_hat
        diff = np.linalg.eigvalsh(rho_hat.elements - rho.elements)
        assert 0.5 * np.abs(diff).sum() <= 1e-9


@pytest.mark.parametrize('name', ['wwbar', 'star'])
def test_tomography_fidelity_over_seeds(name):
    rho = as_density(make_named_state(name))
    fids = [reconstruct(sample_counts(rho, 100_000, seed=s), rho).fidelity_vs_target for s in range(20)]
    assert np.median(fids) >= 0.99


def test_bootstrap_uncertainty_scaling(wwbar):
    rho = DensityMatrix.from_array(0.8 * wwbar.elements + 0.2 * np.eye(8) / 8)
    low = bootstrap_measures(rho, 10_000, resamples=20, seed=1, with_entanglement=False, workers=4)
    high = bootstrap_measures(rho, 1_000_000, resamples=20, seed=1, with_entanglement=False, workers=4)
    for q in ('C', 'CG', 'CL', 'T', 'M'):
        assert 5 <= low.record.errors()[q] / high.record.errors()[q] <= 20, q
