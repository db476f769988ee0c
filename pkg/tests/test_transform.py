import numpy as np
import pytest
import scipy.linalg

from kklio import (Box, InverseConfig, PlantModel, SystemConstants, TargetSystem,
                   derived_constants, estimate_forward_lipschitz, estimate_injectivity,
                   eval_T, eval_T_poly, eval_T_series, gamma_star, invert_T,
                   load_coefficients, make_polynomial_transform, make_series_transform,
                   save_coefficients, solve_poly_T, transform_residual)
from kklio.presets import (POLY_BASIS, build_oscillator, make_oscillator_plant)


def unit_consts(m=(1,)):
    return SystemConstants(c_f=1.0, c_h=1.0, c_o=1.0, c_c=1.0, m=m)


def single_block_target(lam=0.5, gamma=0.5):
    return TargetSystem(blocks=((np.array([[lam]]), np.array([1.0])),), gamma=gamma)


def linear_plant(f_mat, h_mat, lo=-2.0, hi=2.0, enlarge=1.0):
    f_mat = np.asarray(f_mat, dtype=float)
    h_mat = np.atleast_2d(np.asarray(h_mat, dtype=float))
    f_inv_mat = np.linalg.inv(f_mat)
    n = f_mat.shape[0]
    return PlantModel(
        n_x=n, n_y=h_mat.shape[0],
        f=lambda x: np.asarray(x, float) @ f_mat.T,
        f_inv=lambda x: np.asarray(x, float) @ f_inv_mat.T,
        h=lambda x: np.asarray(x, float) @ h_mat.T,
        box_x=Box([lo] * n, [hi] * n),
        box_x0=Box([lo] * n, [hi] * n),
        box_x_enlarged=Box([lo * enlarge] * n, [hi * enlarge] * n),
    )


# --- gamma_star / derived_constants -----------------------------------------


def test_gamma_star_hand_case():
    # min{1/0.5, 1/0.5, 1/(0.5 + 0.5)} = 1, already at the cap
    assert gamma_star(unit_consts(), single_block_target()) == pytest.approx(1.0)


def test_gamma_star_capped_at_one():
    rng = np.random.default_rng(0)
    for _ in range(20):
        c = SystemConstants(c_f=rng.uniform(0.1, 3), c_h=rng.uniform(0.1, 3),
                            c_o=rng.uniform(0.1, 3), c_c=rng.uniform(0.1, 3),
                            m=(2,))
        t = TargetSystem(blocks=((np.diag([0.3, 0.6]), np.array([1.0, 0.5])),), gamma=0.5)
        assert 0.0 < gamma_star(c, t) <= 1.0


def test_gamma_star_oscillator_regression():
    b = build_oscillator(gamma=1.0)
    assert b.gamma_star_raw == pytest.approx(7.97303902279075e-07, rel=1e-9)
    assert 0.0 < gamma_star(b.consts, b.target) < 1.0


def test_derived_constants_hand_case():
    c_L, c_I, c = derived_constants(unit_consts(), single_block_target(), gamma=0.5)
    assert c_L == pytest.approx(4.0 / 3.0)
    assert c_I == pytest.approx(2.0 / 3.0)
    assert c == pytest.approx(1.5)


def test_derived_constants_small_gamma_limit():
    _, c_I, _ = derived_constants(unit_consts(), single_block_target(), gamma=1e-12)
    assert c_I == pytest.approx(1.0, rel=1e-9)  # -> c_N * c_c * c_o


def test_derived_constants_rejects_large_gamma():
    consts = SystemConstants(c_f=2.0, c_h=2.0, c_o=0.1, c_c=0.1, m=(1,))
    with pytest.raises(ValueError, match="injectivity"):
        derived_constants(consts, single_block_target(lam=0.9, gamma=0.9), gamma=0.9)


# --- polynomial mode ---------------------------------------------------------


def test_solve_poly_identity_dynamics():
    plant = PlantModel(
        n_x=1, n_y=1,
        f=lambda x: np.asarray(x, float),
        f_inv=lambda x: np.asarray(x, float),
        h=lambda x: np.asarray(x, float),
        box_x=Box([-1.0], [1.0]), box_x0=Box([-1.0], [1.0]),
        box_x_enlarged=Box([-1.0], [1.0]),
    )
    target = single_block_target(lam=0.5, gamma=1.0)
    coeffs = solve_poly_T(plant, target, basis=((1,),))
    # T = lam*T + x  =>  T(x) = 2x
    np.testing.assert_allclose(coeffs, [[2.0]], rtol=1e-14)


def test_solve_poly_resonance_errors():
    plant = PlantModel(
        n_x=1, n_y=1,
        f=lambda x: 0.5 * np.asarray(x, float),
        f_inv=lambda x: 2.0 * np.asarray(x, float),
        h=lambda x: np.asarray(x, float),
        box_x=Box([-1.0], [1.0]), box_x0=Box([-1.0], [1.0]),
        box_x_enlarged=Box([-1.0], [1.0]),
    )
    target = single_block_target(lam=0.5, gamma=1.0)
    with pytest.raises(ValueError, match="resonant"):
        solve_poly_T(plant, target, basis=((1,),))


def test_solve_poly_basis_not_closed():
    plant = make_oscillator_plant()
    target = build_oscillator(gamma=1.0).target
    with pytest.raises(ValueError, match="not closed"):
        solve_poly_T(plant, target, basis=((2, 0), (1, 0), (0, 1)))


def test_solve_poly_output_not_in_basis():
    plant = make_oscillator_plant()
    target = build_oscillator(gamma=1.0).target
    with pytest.raises(ValueError, match="spanned"):
        solve_poly_T(plant, target, basis=((1, 0), (0, 1)))


def test_oscillator_coefficients_regression():
    b = build_oscillator(gamma=1.0)
    pinned_row0 = [1.0689320507622944, -1.0933795255469965, 0.48894949569405183,
                   0.97410604192355044, 1.2330456226880395]
    pinned_row3 = [1.5163847217789126, -1.5693158846685811, 1.0586232577933845,
                   1.3461538461538451, 1.9230769230769231]
    np.testing.assert_allclose(b.transform.poly_coeffs[0], pinned_row0, rtol=1e-12)
    np.testing.assert_allclose(b.transform.poly_coeffs[3], pinned_row3, rtol=1e-12)


def test_solve_poly_nondiagonal_block():
    # companion-form block couples the rows; the block solve must still
    # produce an exact solution of the linear-in-target identity
    plant = make_oscillator_plant()
    a_block = np.array([[0.0, 1.0], [-0.08, 0.6]])  # eigenvalues 0.2, 0.4
    target = TargetSystem(blocks=((a_block, np.array([0.0, 1.0])),), gamma=0.9)
    t = make_polynomial_transform(plant, target, POLY_BASIS)
    pts = plant.box_x.sample(np.random.default_rng(8), 500)
    assert transform_residual(t, pts) <= 1e-10


def test_solve_poly_two_output_channels():
    f_mat = np.array([[1.0, -0.1], [0.1, 0.99]])
    plant = linear_plant(f_mat, np.eye(2), enlarge=1.5)
    target = TargetSystem(
        blocks=(
            (np.array([[0.3]]), np.array([1.0])),
            (np.diag([0.2, 0.5]), np.array([1.0, 1.0])),
        ),
        gamma=1.0,
    )
    t = make_polynomial_transform(plant, target, basis=((1, 0), (0, 1)))
    assert t.poly_coeffs.shape == (3, 2)
    pts = plant.box_x.sample(np.random.default_rng(9), 500)
    assert transform_residual(t, pts) <= 1e-10


def test_poly_residual_on_grid():
    b = build_oscillator(gamma=1.0)
    pts = b.plant.box_x.sample(np.random.default_rng(0), 1000)
    assert transform_residual(b.transform, pts) <= 1e-10


# --- series mode -------------------------------------------------------------


def test_series_zero_output_map():
    plant = linear_plant(np.array([[0.9, -0.2], [0.2, 0.9]]), [[0.0, 0.0]])
    target = single_block_target(lam=0.5, gamma=1.0)
    t = make_series_transform(plant, target)
    for x in plant.box_x.sample(np.random.default_rng(1), 20):
        np.testing.assert_array_equal(eval_T_series(t, x), np.zeros(1))


def test_series_matches_sylvester_oracle():
    # expanding linear dynamics: backward iterates contract, so saturation
    # never activates and the series must match the exact linear solution
    ang = 0.4
    f_mat = 1.25 * np.array([[np.cos(ang), -np.sin(ang)], [np.sin(ang), np.cos(ang)]])
    h_mat = np.array([[1.0, 0.5]])
    plant = linear_plant(f_mat, h_mat, enlarge=1.5)
    target = TargetSystem(blocks=((np.diag([0.3, 0.5]), np.array([1.0, 1.0])),), gamma=1.0)
    tol = 1e-9
    t = make_series_transform(plant, target, series_tol=tol)
    p_mat = scipy.linalg.solve_sylvester(target.A, -f_mat, -target.B @ h_mat)
    pts = plant.box_x.sample(np.random.default_rng(2), 200)
    series = eval_T_series(t, pts)
    assert np.max(np.abs(series - pts @ p_mat.T)) <= tol


def test_series_matches_polynomial_oscillator():
    b = build_oscillator(gamma=1.0)
    t_series = make_series_transform(b.plant, b.target, series_tol=1e-9)
    pts = b.plant.box_x.grid(32)
    gap = np.abs(eval_T_series(t_series, pts) - eval_T_poly(b.transform, pts))
    assert np.max(gap) <= 1e-6


def test_series_mode_residual_within_tolerance():
    b = build_oscillator(gamma=1.0)
    tol = 1e-9
    t_series = make_series_transform(b.plant, b.target, series_tol=tol)
    pts = b.plant.box_x.sample(np.random.default_rng(6), 300)
    assert transform_residual(t_series, pts) <= tol


def test_series_rejects_noncontractive_scaled_matrix():
    plant = linear_plant(np.array([[2.0, 0.0], [0.0, 2.0]]), [[1.0, 0.0]])
    # Schur block (eigenvalues 0.5) whose max-norm is 1.25: the scaled target
    # matrix is not a contraction, so the tail bound cannot be applied
    a_block = np.array([[0.5, 0.75], [0.0, 0.5]])
    target = TargetSystem(blocks=((a_block, np.array([0.0, 1.0])),), gamma=1.0)
    t = make_series_transform(plant, target)
    with pytest.raises(ValueError, match="series"):
        eval_T_series(t, np.zeros(2))


# --- inversion ---------------------------------------------------------------


@pytest.fixture(scope="module")
def osc():
    return build_oscillator(gamma=1.0)


def test_invert_roundtrip(osc):
    cfg = InverseConfig(box=osc.plant.box_x_enlarged)
    pts = osc.plant.box_x.sample(np.random.default_rng(10), 100)
    for x_true in pts:
        x, resid = invert_T(osc.transform, eval_T(osc.transform, x_true), cfg)
        assert np.max(np.abs(x - x_true)) <= 1e-4
        assert resid <= 1e-8


def test_invert_center_residual(osc):
    cfg = InverseConfig(box=osc.plant.box_x_enlarged)
    z = eval_T(osc.transform, osc.plant.box_x.center)
    _, resid = invert_T(osc.transform, z, cfg)
    assert resid <= 1e-8


def test_invert_far_outside_clamps(osc):
    cfg = InverseConfig(box=osc.plant.box_x_enlarged)
    z = eval_T(osc.transform, np.array([1.0, 0.5])) + 50.0
    x, resid = invert_T(osc.transform, z, cfg)
    assert osc.plant.box_x_enlarged.contains(x)
    assert resid > 1.0


def test_invert_deterministic(osc):
    cfg = InverseConfig(box=osc.plant.box_x_enlarged)
    z = eval_T(osc.transform, np.array([0.3, -0.7])) + np.array([0.2, -0.1, 0.15, 0.05])
    x1, r1 = invert_T(osc.transform, z, cfg)
    x2, r2 = invert_T(osc.transform, z, cfg)
    assert np.array_equal(x1, x2) and r1 == r2


def test_invert_warm_start_used(osc):
    cfg = InverseConfig(box=osc.plant.box_x_enlarged)
    x_true = np.array([0.4, 0.2])
    z = eval_T(osc.transform, x_true)
    warm = cfg.with_warm_start(x_true + 1e-3)
    x, resid = invert_T(osc.transform, z, warm)
    assert np.max(np.abs(x - x_true)) <= 1e-6
    assert resid <= 1e-8


def test_invert_respects_start_cap(osc):
    cfg = InverseConfig(box=osc.plant.box_x_enlarged, starts=1, lattice_per_axis=3)
    assert cfg.start_points().shape == (1, 2)


# --- sampled constants -------------------------------------------------------


def test_lipschitz_sandwich(osc):
    c = osc.consts
    rng = np.random.default_rng(77)
    a = osc.plant.box_x.sample(rng, 10000)
    b = osc.plant.box_x.sample(rng, 10000)
    dx = np.max(np.abs(a - b), axis=1)
    mask = dx > 1e-12
    dt = np.max(np.abs(eval_T(osc.transform, a) - eval_T(osc.transform, b)), axis=1)
    gamma = osc.target.gamma
    lower = c.c_I * gamma ** (c.m_bar - 1) * dx[mask]
    upper = c.c_L * dx[mask]
    assert np.all(dt[mask] >= lower)
    assert np.all(dt[mask] <= upper)


def test_estimated_constants_positive(osc):
    assert estimate_forward_lipschitz(osc.transform, samples=20000, seed=1) > 0
    assert estimate_injectivity(osc.transform, samples=20000, seed=2) > 0


# --- coefficient tables ------------------------------------------------------


def test_coefficients_roundtrip(tmp_path, osc):
    path = tmp_path / "coeffs.txt"
    save_coefficients(osc.transform, path)
    coeffs, basis = load_coefficients(path)
    assert basis == POLY_BASIS
    np.testing.assert_array_equal(coeffs, osc.transform.poly_coeffs)
    rebuilt = make_polynomial_transform(osc.plant, osc.target, basis, coeffs=coeffs)
    pts = osc.plant.box_x.sample(np.random.default_rng(3), 50)
    np.testing.assert_array_equal(eval_T(rebuilt, pts), eval_T(osc.transform, pts))


def test_target_system_validation():
    with pytest.raises(ValueError, match="Schur"):
        TargetSystem(blocks=((np.array([[1.0]]), np.array([1.0])),), gamma=0.5)
    with pytest.raises(ValueError, match="controllable"):
        TargetSystem(blocks=((np.diag([0.5, 0.5]), np.array([0.0, 0.0])),), gamma=0.5)
    with pytest.raises(ValueError, match="gamma"):
        TargetSystem(blocks=((np.array([[0.5]]), np.array([1.0])),), gamma=1.5)


def test_target_c_c_vandermonde():
    t = TargetSystem(blocks=((np.diag([0.1, 0.2, 0.3, 0.4]), np.ones(4)),), gamma=1.0)
    ctrb = np.vander(np.array([0.1, 0.2, 0.3, 0.4]), 4, increasing=True)
    oracle = 1.0 / np.max(np.abs(np.linalg.inv(ctrb)).sum(axis=1))
    assert t.c_c() == pytest.approx(oracle, rel=1e-12)
