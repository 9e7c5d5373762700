import numpy as np
import pytest

from rbfib.rbf import (IllPosedSiteSet, OperatorCache, build_operator_matrix, build_system,
                       interpolate, load_operator, phs_kernel, save_operator)
from rbfib.sphere import DERIVATIVE_KINDS, HarmonicBasis, bauer_spiral, eval_harmonics, sphere_embed


@pytest.fixture(scope="module")
def system625():
    return build_system(bauer_spiral(625), 7, 5)


def test_small_saddle_matrix():
    s = build_system(bauer_spiral(8), 1, 0)
    assert s.saddle.shape == (9, 9)
    np.testing.assert_array_equal(s.saddle, s.saddle.T)
    assert np.linalg.matrix_rank(s.saddle) == 9


def test_duplicate_sites_are_rejected():
    sites = np.vstack([bauer_spiral(40), bauer_spiral(40)[:1]])
    with pytest.raises(IllPosedSiteSet):
        build_system(sites, 3, 1)


@pytest.mark.parametrize("k", [0, 2, 4.5])
def test_kernel_exponent_must_be_odd(k):
    with pytest.raises(ValueError):
        build_system(bauer_spiral(40), k, 1)


def test_too_few_sites_for_degree():
    with pytest.raises(ValueError):
        build_system(bauer_spiral(30), 7, 5)


def test_zero_samples_give_zero_coefficients(system625):
    coef = interpolate(system625, np.zeros(625))
    assert not coef.c.any() and not coef.d.any()


def test_harmonic_samples_are_reproduced_by_polynomial_part(system625):
    Y = eval_harmonics(HarmonicBasis(5), bauer_spiral(625))
    coef = interpolate(system625, Y[:, 7])
    assert np.abs(coef.c).max() < 1e-10
    expected = np.zeros(36)
    expected[7] = 1.0
    np.testing.assert_allclose(coef.d, expected, atol=1e-10)


def test_constant_is_reproduced(system625):
    coef = interpolate(system625, np.full(625, 2.5))
    np.testing.assert_allclose(coef.evaluate(system625, bauer_spiral(999)), 2.5, atol=1e-11)


def test_x_coordinate_at_held_out_sites(system625):
    sd, held = bauer_spiral(625), bauer_spiral(2500) * np.array([1.0, 0.999])
    coef = interpolate(system625, np.cos(sd[:, 0]) * np.cos(sd[:, 1]))
    exact = np.cos(held[:, 0]) * np.cos(held[:, 1])
    assert np.abs(coef.evaluate(system625, held) - exact).max() < 1e-8


def test_sphere_reconstruction_has_unit_norm(system625):
    coef = interpolate(system625, sphere_embed(bauer_spiral(625)))
    X = coef.evaluate(system625, bauer_spiral(1500) * np.array([1.0, 0.99]))
    assert np.abs(np.linalg.norm(X, axis=1) - 1).max() < 1e-8


def test_evaluate_at_data_sites_is_identity(system625):
    # the saddle matrix has condition ~1e10 here, which bounds the forward error
    op = build_operator_matrix(system625, "evaluate", bauer_spiral(625))
    np.testing.assert_allclose(op.entries, np.eye(625), atol=5e-7)


def test_refinement_keeps_residual_small(system625):
    rng = np.random.default_rng(0)
    b = rng.normal(size=(661, 3))
    x = system625.solve(b)
    assert np.abs(system625.saddle @ x - b).max() < 1e-10 * np.abs(b).max() * 1e3


def test_theta_derivative(system625):
    sd, t = bauer_spiral(625), bauer_spiral(1000) * np.array([1.0, 0.98])
    op = build_operator_matrix(system625, "theta", t)
    got = op @ (np.sin(sd[:, 0]) * np.cos(sd[:, 1]))
    assert np.abs(got - np.cos(t[:, 0]) * np.cos(t[:, 1])).max() < 1e-6


@pytest.mark.parametrize("kind", DERIVATIVE_KINDS)
def test_derivatives_annihilate_constants(system625, kind):
    op = build_operator_matrix(system625, kind, bauer_spiral(300))
    assert np.abs(op @ np.ones(625)).max() < 1e-10


def test_embedding_tangents(system625):
    sd, t = bauer_spiral(625), bauer_spiral(800) * np.array([1.0, 0.98])
    X = sphere_embed(sd)
    th, ph = t[:, 0], t[:, 1]
    X_theta = np.column_stack([-np.sin(th) * np.cos(ph), np.cos(th) * np.cos(ph), 0 * th])
    X_phi = np.column_stack([-np.cos(th) * np.sin(ph), -np.sin(th) * np.sin(ph), np.cos(ph)])
    assert np.abs(build_operator_matrix(system625, "theta", t) @ X - X_theta).max() < 1e-6
    assert np.abs(build_operator_matrix(system625, "phi", t) @ X - X_phi).max() < 1e-6


@pytest.mark.parametrize("kind", DERIVATIVE_KINDS)
def test_kernel_derivatives_match_differences(kind):
    src = bauer_spiral(40)
    tgt = bauer_spiral(25) * np.array([0.97, 0.9]) + 0.01
    e = 1e-5
    step = {"theta": np.array([e, 0]), "phi": np.array([0, e])}
    if kind in step:
        fd = (phs_kernel(tgt + step[kind], src, 7) - phs_kernel(tgt - step[kind], src, 7)) / (2 * e)
    else:
        a, b = kind.split("_")
        fd = (phs_kernel(tgt + step[b], src, 7, a) - phs_kernel(tgt - step[b], src, 7, a)) / (2 * e)
    np.testing.assert_allclose(phs_kernel(tgt, src, 7, kind), fd, atol=1e-6)


def test_operator_cache_roundtrip(tmp_path, system625):
    t = bauer_spiral(100)
    cache = OperatorCache(tmp_path)
    first = cache.get(system625, "phi_phi", t)
    second = cache.get(system625, "phi_phi", t)
    np.testing.assert_array_equal(first.entries, second.entries)
    path = cache.path_for(system625, "phi_phi", 100)
    assert load_operator(path, system625, "theta", t) is None  # different kind is stale


def test_cache_ignores_corrupt_files(tmp_path, system625):
    t = bauer_spiral(50)
    op = build_operator_matrix(system625, "theta", t)
    p = tmp_path / "op.bin"
    save_operator(p, op, system625)
    p.write_bytes(p.read_bytes()[:100])
    assert load_operator(p, system625, "theta", t) is None
