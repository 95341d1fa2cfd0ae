import math

import numpy as np
import pytest

from decohere.states import random_density_matrix, dephased_diagonal, DensityMatrix
from decohere.channels import (dephase_prob, DephasingSpec, apply_dephasing, apply_dephasing_kraus, full_dephasing,
                               kraus_operators, coherence_scaling)

from oracle import bits_of


def test_dephase_prob():
    assert dephase_prob(2.21e-5, 0) == 0
    assert abs(dephase_prob(2.21e-5, 100) - (1 - math.exp(-0.221)) / 2) < 1e-15
    assert round(dephase_prob(2.21e-5, 100), 4) == 0.0991
    gamma = 2.21e-5
    assert abs(dephase_prob(gamma, math.sqrt(40 / gamma)) - 0.5) < 1e-12
    ps = [dephase_prob(gamma, ell) for ell in np.linspace(0, 2000, 50)]
    assert all(b >= a for a, b in zip(ps, ps[1:]))
    with pytest.raises(ValueError):
        dephase_prob(-1e-5, 10)
    with pytest.raises(ValueError):
        dephase_prob(1e-5, -10)


def test_spec_validation():
    with pytest.raises(ValueError):
        DephasingSpec(gamma=-1)
    with pytest.raises(ValueError):
        DephasingSpec.from_prob(0.7)
    with pytest.raises(ValueError):
        DephasingSpec(1e-5, 10, targets=(0,), gamma_overrides={1: 2e-5}).resolve_targets(3)
    with pytest.raises(ValueError):
        DephasingSpec(1e-5, 10, targets=(3,)).resolve_targets(3)


def test_kraus_operators_are_trace_preserving():
    for p in (0., 0.1, 0.5):
        total = sum(k.conj().T @ k for k in kraus_operators(p))
        np.testing.assert_allclose(total, np.eye(2), atol=1e-15)


def test_identity_and_full_dephasing(rng):
    rho = random_density_matrix(3, rng=rng)
    np.testing.assert_array_equal(apply_dephasing(rho, DephasingSpec(2e-5, 0.)).elements, rho.elements)
    np.testing.assert_array_equal(apply_dephasing(rho, full_dephasing()).elements, dephased_diagonal(rho).elements)


def test_wwbar_element_scaling(wwbar):
    out = apply_dephasing(wwbar, DephasingSpec(2.21e-5, 100.)).elements
    for i in range(8):
        for j in range(8):
            k = sum(a != b for a, b in zip(bits_of(i, 3), bits_of(j, 3)))
            assert abs(out[i, j] - wwbar.elements[i, j] * math.exp(-k * 0.221)) < 1e-15


def test_matches_kraus_form(rng):
    for _ in range(50):
        rho = random_density_matrix(3, rank=int(rng.integers(1, 9)), rng=rng)
        targets = tuple(np.flatnonzero(rng.random(3) < 0.5)) or (int(rng.integers(3)),)
        spec = DephasingSpec(float(rng.uniform(0, 1e-4)), float(rng.uniform(0, 300)), targets=targets)
        np.testing.assert_allclose(apply_dephasing(rho, spec).elements, apply_dephasing_kraus(rho, spec).elements,
                                   atol=1e-14)


def test_composition_law(rng):
    rho = random_density_matrix(3, rng=rng)
    gamma, l1, l2 = 2.21e-5, 120., 170.
    twice = apply_dephasing(apply_dephasing(rho, DephasingSpec(gamma, l1)), DephasingSpec(gamma, l2))
    once = apply_dephasing(rho, DephasingSpec(gamma, math.hypot(l1, l2)))
    np.testing.assert_allclose(twice.elements, once.elements, atol=1e-12)


def test_diagonal_invariance_and_order(rng):
    rho = random_density_matrix(3, rng=rng)
    out = apply_dephasing(rho, DephasingSpec(3e-5, 250., targets='AC'))
    np.testing.assert_array_equal(np.diag(out.elements), np.diag(rho.elements))

    a, b = DephasingSpec(2e-5, 90., targets='A'), DephasingSpec(2e-5, 90., targets='B')
    ab = apply_dephasing(apply_dephasing(rho, a), b)
    ba = apply_dephasing(apply_dephasing(rho, b), a)
    np.testing.assert_allclose(ab.elements, ba.elements, atol=1e-14)


def test_channel_output_is_valid_state(rng):
    for p in np.linspace(0, 0.5, 7):
        rho = random_density_matrix(3, rank=2, rng=rng)
        out = apply_dephasing_kraus(rho, DephasingSpec.from_prob(p, targets=[0, 2]))
        assert isinstance(out.validate(), DensityMatrix)


def test_gamma_overrides():
    spec = DephasingSpec(1e-5, 100., targets=(0, 1), gamma_overrides={1: 3e-5})
    scale = coherence_scaling(2, spec)
    # |00><01| flips qubit 1 only, |00><11| flips both
    assert abs(scale[0, 1] - math.exp(-0.3)) < 1e-15
    assert abs(scale[0, 2] - math.exp(-0.1)) < 1e-15
    assert abs(scale[0, 3] - math.exp(-0.4)) < 1e-15
    assert spec.probability(1) == dephase_prob(3e-5, 100.)
