import numpy as np
import pytest
from conftest import gradient_mismatch

from rbfib.cells import UM, rbc_reference, rotation_about
from rbfib.membrane import (CollapsedArea, MaterialParams, bending_energy, bending_force_density,
                            compute_geometry, dissipation_power_density, dissipative_force_density,
                            get_law, laplace_beltrami, spring_force_density, strain_state,
                            tension_energy, tension_force_density,
                            total_energy)
from rbfib.sphere import HarmonicBasis, eval_harmonics, sphere_embed

SKALAK = MaterialParams(E=2.5e-3, G=2.5e-1)
BEND = MaterialParams(kappa=2e-12)
VISC = MaterialParams(nu=2.5e-7)


def sphere(surface, radius=1.0):
    return radius * sphere_embed(surface.data_sites)


def rbc(surface):
    return UM * rbc_reference(surface.data_sites)


def smooth_field(surface, seed=0):
    """A smooth vector perturbation at data and sample sites."""
    rng = np.random.default_rng(seed)
    A, B, c = rng.normal(size=(3, 3)), rng.normal(size=(3, 3)), rng.normal(size=3)

    def f(s):
        x = sphere_embed(s)
        return np.sin(x @ A + c) + 0.3 * np.cos(2 * x @ B)

    return f(surface.data_sites), f(surface.sample_sites)


def test_unit_sphere_geometry(surface625):
    g = compute_geometry(surface625.ops_sample, sphere(surface625))
    phi = surface625.sample_sites[:, 1]
    np.testing.assert_allclose(g.g[:, 0, 0], np.cos(phi) ** 2, atol=1e-7)
    np.testing.assert_allclose(g.g[:, 1, 1], 1.0, atol=1e-7)
    np.testing.assert_allclose(g.g[:, 0, 1], 0.0, atol=1e-7)
    np.testing.assert_allclose(g.n, sphere_embed(surface625.sample_sites), atol=1e-6)
    np.testing.assert_allclose(g.H, -1.0, atol=1e-5)
    np.testing.assert_allclose(g.K, 1.0, atol=1e-5)


def test_scaled_sphere_curvatures(surface625):
    g = compute_geometry(surface625.ops_sample, sphere(surface625, 2.5))
    np.testing.assert_allclose(g.H, -1 / 2.5, atol=1e-5)
    np.testing.assert_allclose(g.K, 1 / 2.5 ** 2, atol=1e-5)


def test_rigid_rotation_preserves_intrinsic_geometry(surface625):
    X = rbc(surface625)
    R = rotation_about(1, 0.7) @ rotation_about(2, -1.1)
    a = compute_geometry(surface625.ops_sample, X)
    b = compute_geometry(surface625.ops_sample, X @ R.T + 3e-4)
    np.testing.assert_allclose(b.g, a.g, atol=1e-9 * np.abs(a.g).max())
    np.testing.assert_allclose(b.H, a.H, atol=1e-9 * np.abs(a.H).max())
    np.testing.assert_allclose(b.K, a.K, atol=1e-9 * np.abs(a.K).max())


def test_strain_invariants_of_inflation(surface625):
    ref = compute_geometry(surface625.ops_sample, sphere(surface625))
    cur = compute_geometry(surface625.ops_sample, sphere(surface625, 1.05))
    st = strain_state(cur, ref)
    np.testing.assert_allclose(st.I1, 0.205, atol=1e-8)
    np.testing.assert_allclose(st.I2, 1.05 ** 4 - 1, atol=1e-8)
    same = strain_state(ref, ref)
    np.testing.assert_allclose([same.I1, same.I2], 0.0, atol=1e-12)


def test_skalak_energy_value():
    law = get_law("skalak")
    I1, I2 = np.array([2 * 1.1 ** 2 - 2]), np.array([1.1 ** 4 - 1])
    assert law.energy(I1, I2, SKALAK)[0] == pytest.approx(1.3517e-2, rel=1e-4)
    assert law.energy(np.zeros(1), np.zeros(1), SKALAK)[0] == 0.0


def test_neohookean_area_preserving_shear():
    law = get_law("neo-hookean")
    lam = 1.3
    I1, I2 = np.array([lam ** 2 + lam ** -2 - 2]), np.array([0.0])
    p = MaterialParams(E=1.0, G=0.0)
    assert law.energy(I1, I2, p)[0] > 0
    assert law.energy(I1, I2, MaterialParams(E=0.0, G=1.0))[0] == 0.0


def test_neohookean_rejects_collapsed_area():
    with pytest.raises(CollapsedArea):
        get_law("neohookean").energy(np.zeros(1), np.array([-1.0]), SKALAK)


@pytest.mark.parametrize("name", ["skalak", "neohookean"])
def test_law_derivatives_match_differences(name, rng):
    law = get_law(name)
    I1, I2 = rng.uniform(-0.2, 0.4, 20), rng.uniform(-0.3, 0.4, 20)
    p = MaterialParams(E=1.3, G=2.1)
    e = 1e-6
    W1, W2 = law.first(I1, I2, p)
    np.testing.assert_allclose(W1, (law.energy(I1 + e, I2, p) - law.energy(I1 - e, I2, p)) / (2 * e), atol=1e-8)
    np.testing.assert_allclose(W2, (law.energy(I1, I2 + e, p) - law.energy(I1, I2 - e, p)) / (2 * e), atol=1e-8)
    W11, W12, W22 = law.second(I1, I2, p)
    f = lambda a, b: np.array(law.first(a, b, p))
    np.testing.assert_allclose(np.array([W11, W12]), (f(I1 + e, I2) - f(I1 - e, I2)) / (2 * e), atol=1e-7)
    np.testing.assert_allclose(W22, (f(I1, I2 + e)[1] - f(I1, I2 - e)[1]) / (2 * e), atol=1e-7)


def test_unknown_law():
    with pytest.raises(ValueError):
        get_law("mooney")


def test_negative_material_parameters_rejected():
    with pytest.raises(ValueError):
        MaterialParams(E=-1.0)


def test_tension_vanishes_in_reference(surface625):
    ref = compute_geometry(surface625.ops_sample, rbc(surface625))
    F = tension_force_density(ref, ref, "skalak", SKALAK)
    assert np.abs(F).max() <= 1e-6 * SKALAK.E


def test_inflated_sphere_tension_is_radial(surface625):
    ref = compute_geometry(surface625.ops_sample, sphere(surface625))
    cur = compute_geometry(surface625.ops_sample, sphere(surface625, 1.05))
    F = tension_force_density(cur, ref, "skalak", SKALAK)
    radial = np.einsum("ni,ni->n", F, cur.n)
    tangential = F - radial[:, None] * cur.n
    assert np.all(radial < 0)  # pulls inward
    assert np.abs(tangential).max() <= 1e-4 * np.abs(radial).max()


def test_tension_invariant_under_translation(surface625):
    X = rbc(surface625) @ np.diag([1 / 1.1, 1.0, 1.1])
    ref = compute_geometry(surface625.ops_sample, rbc(surface625))
    a = tension_force_density(compute_geometry(surface625.ops_sample, X), ref, "skalak", SKALAK)
    b = tension_force_density(compute_geometry(surface625.ops_sample, X + 5e-4), ref, "skalak", SKALAK)
    np.testing.assert_allclose(a, b, atol=1e-9 * np.abs(a).max())


FLAT = rotation_about(0, -np.pi / 2)
STRETCH = np.diag([1 / 1.1, 1.0, 1.1])
EPS = 1e-6 * 7.82e-4  # relative to the cell diameter


@pytest.mark.parametrize("law", ["skalak", "neohookean"])
@pytest.mark.parametrize("seed", range(4))
def test_tension_is_energy_gradient(surface625, law, seed):
    s = surface625
    Xref = rbc(s) @ FLAT.T
    ref = compute_geometry(s.ops_sample, Xref)
    w_ref = s.weights.sigma * ref.sqrt_g
    X = Xref @ STRETCH.T
    dd, ds = smooth_field(s, seed)
    F = tension_force_density(compute_geometry(s.ops_sample, X), ref, law, SKALAK)
    energy = lambda Y: tension_energy(compute_geometry(s.ops_sample, Y), ref, w_ref, law, SKALAK)
    _, err = gradient_mismatch(energy, X, dd, F, ds, w_ref, EPS)
    assert err < 1e-5


def test_bending_vanishes_on_sphere(surface625):
    X = sphere(surface625, 3e-4)
    g = compute_geometry(surface625.ops_sample, X)
    gd = compute_geometry(surface625.ops_data, X)
    F = bending_force_density(g, gd.H, surface625.ops_sample, BEND)
    scale = BEND.kappa / (3e-4) ** 3
    assert np.abs(F).max() < 1e-5 * scale


def test_bending_vanishes_at_spontaneous_curvature(surface625):
    X = rbc(surface625)
    g = compute_geometry(surface625.ops_sample, X)
    gd = compute_geometry(surface625.ops_data, X)
    F = bending_force_density(g, gd.H, surface625.ops_sample, BEND, gd.H, g.H)
    assert np.abs(F).max() == 0.0 or np.abs(F).max() < 1e-12


@pytest.mark.parametrize("stretch", [1.0, 1.1])
@pytest.mark.parametrize("seed", range(4))
def test_bending_is_energy_gradient(surface625, stretch, seed):
    s = surface625
    X = rbc(s) @ FLAT.T @ np.diag([1 / stretch, 1.0, stretch])
    dd, ds = smooth_field(s, seed)
    g = compute_geometry(s.ops_sample, X)
    gd = compute_geometry(s.ops_data, X)
    F = bending_force_density(g, gd.H, s.ops_sample, BEND)

    def energy(Y):
        gy = compute_geometry(s.ops_sample, Y)
        return bending_energy(gy, s.weights.sigma * gy.sqrt_g, BEND)

    # the force takes mean curvature from the data sites, so it matches the
    # energy gradient up to interpolation error rather than to roundoff
    _, err = gradient_mismatch(energy, X, dd, F, ds, s.weights.sigma * g.sqrt_g, EPS)
    assert err < 1e-3


def test_laplace_beltrami_eigenfunctions(surface625):
    s = surface625
    g = compute_geometry(s.ops_sample, sphere(s))
    Yd = eval_harmonics(HarmonicBasis(3), s.data_sites)
    Ys = eval_harmonics(HarmonicBasis(3), s.sample_sites)
    for col, (l, _) in enumerate(HarmonicBasis(3).degrees_orders()):
        lap = laplace_beltrami(g, Yd[:, col], s.ops_sample)
        assert np.abs(lap + l * (l + 1) * Ys[:, col]).max() <= 1e-3


def test_laplace_beltrami_scales_with_radius(surface625):
    s = surface625
    g = compute_geometry(s.ops_sample, sphere(s, 2.0))
    z_d = 2 * np.sin(s.data_sites[:, 1])
    z_s = 2 * np.sin(s.sample_sites[:, 1])
    np.testing.assert_allclose(laplace_beltrami(g, z_d, s.ops_sample), -2 * z_s / 4, atol=1e-4)
    assert np.abs(laplace_beltrami(g, np.ones(len(z_d)), s.ops_sample)).max() < 1e-8


def test_dissipation_vanishes_for_rigid_motion(surface625):
    s = surface625
    X = rbc(s)
    g = compute_geometry(s.ops_sample, X)
    omega = np.array([0.3, -1.2, 0.5])
    U = np.cross(omega, X) + np.array([1.0, 2.0, 3.0])
    F = dissipative_force_density(g, U, s.ops_sample, VISC)
    # a dilation with the same peak speed sets the scale of a genuine strain rate
    dilation = dissipative_force_density(g, X * np.abs(U).max() / np.abs(X).max(), s.ops_sample, VISC)
    assert np.abs(F).max() < 1e-6 * np.abs(dilation).max()
    assert not dissipative_force_density(g, np.zeros_like(X), s.ops_sample, VISC).any()


def test_dissipation_is_power_gradient(surface625):
    s = surface625
    g = compute_geometry(s.ops_sample, sphere(s))
    U = sphere(s)  # uniform dilation, gdot = 2 g
    _, u1, _ = s.ops_sample.derivatives(U)
    np.testing.assert_allclose(dissipation_power_density(g, u1, VISC), VISC.nu, rtol=1e-6)
    dd, ds = smooth_field(s, 2)
    w = s.weights.sigma * g.sqrt_g

    def power(V):
        _, v1, _ = s.ops_sample.derivatives(V)
        return np.dot(w, dissipation_power_density(g, v1, VISC))

    F = dissipative_force_density(g, U, s.ops_sample, VISC)
    _, err = gradient_mismatch(power, U, dd, F, ds, w, 1e-6)
    assert err < 1e-3


def test_spring_force():
    p = MaterialParams(k_spring=2.5)
    F = spring_force_density([[1e-4, 0, 0]], [[0, 0, 0]], None, None, p)
    np.testing.assert_allclose(F, [[-2.5e-4, 0, 0]])
    assert not spring_force_density([[1, 2, 3]], [[1, 2, 3]], [[0, 0, 0]], [[0, 0, 0]],
                                    MaterialParams(k_spring=2.5, eta_spring=1.0)).any()


def test_energy_of_stretched_rbc(surface625):
    s = surface625
    Xref = rbc(s) @ rotation_about(0, -np.pi / 2).T
    ref = compute_geometry(s.ops_sample, Xref)
    X = Xref @ np.diag([1 / 1.1, 1.0, 1.1])
    g = compute_geometry(s.ops_sample, X)
    E = total_energy(g, ref, s.weights.sigma, "skalak", SKALAK)
    assert E == pytest.approx(4.847e-10, rel=0.05)
    R = rotation_about(2, 0.4) @ rotation_about(1, 1.3)
    E_rot = total_energy(compute_geometry(s.ops_sample, X @ R.T), ref, s.weights.sigma, "skalak", SKALAK)
    assert E_rot == pytest.approx(E, rel=1e-10)
    assert abs(total_energy(ref, ref, s.weights.sigma, "skalak", SKALAK)) < 1e-12 * E
