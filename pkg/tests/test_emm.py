import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from viscobeam.emm import (
    hankel_determinant_check,
    hankel_matrix,
    magic_formula_residual,
    recover_batch,
    recover_parameters,
)
from viscobeam.errors import ArgumentError, IdentifiabilityError, NonRealSpectrumError
from viscobeam.media import emm_moments


def test_single_component():
    fit = recover_parameters([2.0, -2.0], 1)
    np.testing.assert_allclose(fit.alphas, [-1.0])
    np.testing.assert_allclose(fit.betas, [2.0])


def test_three_components():
    fit = recover_parameters([6, -14, 36, -98, 276, -794], 3)
    np.testing.assert_allclose(fit.alphas, [-3.0, -2.0, -1.0], atol=1e-10)
    np.testing.assert_allclose(fit.betas, [3.0, 2.0, 1.0], atol=1e-10)


def test_vanishing_beta_is_not_identifiable():
    with pytest.raises(IdentifiabilityError):
        recover_parameters([1, -1, 1, -1], 2)


def test_complex_roots_rejected():
    # moments of beta e^{+-i t}: m = (2, 0, -2, 0) gives p(y) = y^2 + 1
    with pytest.raises(NonRealSpectrumError):
        recover_parameters([2.0, 0.0, -2.0, 0.0], 2)


def test_moment_count_checked():
    with pytest.raises(ArgumentError):
        recover_parameters([1.0, 2.0, 3.0])
    with pytest.raises(ArgumentError):
        recover_parameters([1.0, 2.0, 3.0, 4.0], 1)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(0, 10_000))
def test_round_trip(n, seed):
    rng = np.random.default_rng(seed)
    alphas = -np.sort(rng.choice(np.arange(1, 9), size=n, replace=False)) * 0.5
    betas = rng.uniform(0.5, 2.0, size=n)
    fit = recover_parameters(emm_moments(alphas, betas, 2 * n), n)
    order = np.argsort(alphas)
    np.testing.assert_allclose(fit.alphas, alphas[order], atol=1e-6)
    np.testing.assert_allclose(fit.betas, betas[order], atol=1e-6)


@settings(max_examples=20, deadline=None)
@given(st.permutations([0, 1, 2]))
def test_permutation_invariance(perm):
    a = np.array([-0.7, -1.9, -3.2])
    b = np.array([0.4, 1.1, 0.8])
    base = recover_parameters(emm_moments(a, b, 6))
    other = recover_parameters(emm_moments(a[list(perm)], b[list(perm)], 6))
    np.testing.assert_allclose(other.alphas, base.alphas, atol=1e-12)
    np.testing.assert_allclose(other.betas, base.betas, atol=1e-12)


def test_hankel_matrix_two_by_two():
    M = hankel_matrix(emm_moments([1, 2], [1, 1], 3), 2)
    np.testing.assert_array_equal(M, [[2, 3], [3, 5]])
    num, formula = hankel_determinant_check([1, 2], [1, 1])
    assert num == pytest.approx(1.0)
    assert formula == 1.0


def test_determinant_degenerate_cases():
    num, formula = hankel_determinant_check([-1, -2, -3], [1, 0, 2])
    assert formula == 0 and abs(num) <= 1e-12
    num, formula = hankel_determinant_check([-1, -1, -3], [1, 2, 2])
    assert formula == 0 and abs(num) <= 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 5), st.integers(0, 10_000))
def test_determinant_identity(n, seed):
    rng = np.random.default_rng(seed)
    a = -rng.permutation(np.linspace(0.5, 3.0, 6))[:n]
    b = rng.uniform(0.5, 2.0, n)
    num, formula = hankel_determinant_check(a, b)
    assert num == pytest.approx(formula, rel=1e-7, abs=1e-12)


def test_magic_formula_hand_example():
    # p(y) = y^2 - 3y + 2: m_2 = 5 = -(m_0 p(0) + m_1 p'(0)) = -(2*2 - 3*3)
    assert magic_formula_residual([1, 2], [1, 1], 0) == 0.0
    assert magic_formula_residual([-1, -2], [0, 0], 2) == 0.0


def test_magic_formula_random_instances():
    rng = np.random.default_rng(11)
    for _ in range(100):
        n = int(rng.integers(1, 5))
        a = rng.uniform(-5.0, -0.5, n)
        b = rng.uniform(0.5, 2.0, n)
        k = int(rng.integers(0, 4))
        assert magic_formula_residual(a, b, k) <= 1e-10


def test_batch_file(tmp_path):
    src = tmp_path / "moments.csv"
    with open(src, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "m0", "m1", "m2", "m3"])
        w.writerow([0.0, 0.5, *emm_moments([-1, -2], [1, 2], 4)])
        w.writerow([1.0, 0.5, 1, -1, 1, -1])
    out = tmp_path / "params.csv"
    failed = recover_batch(src, out, 2, header="# test\n")
    assert failed == 1
    rows = [r for r in csv.reader(l for l in open(out) if not l.startswith("#"))]
    assert rows[0] == ["x", "y", "alpha1", "alpha2", "beta1", "beta2", "cond"]
    good = [float(v) for v in rows[1]]
    np.testing.assert_allclose(good[2:6], [-2, -1, 2, 1], atol=1e-10)
    bad = [float(v) for v in rows[2]]
    assert math.isnan(bad[2]) and math.isinf(bad[-1])
