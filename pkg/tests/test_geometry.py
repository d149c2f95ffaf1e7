import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from simdoa.geometry import (
    SimGeometry,
    build_propagation_matrices,
    check_feasibility,
    dft_matrix,
    grid_to_linear,
    input_to_first_distance,
    intra_sim_distance,
    linear_to_grid,
    rs_coefficient,
    steering_vector,
)

LAM = 0.005


def make_geom(**kw):
    base = dict(
        wavelength=LAM,
        n_x=2, n_y=2, d_x=LAM / 2, d_y=LAM / 2,
        m_x=3, m_y=3, s_x=LAM / 2, s_y=LAM / 2,
        layers=3, thickness=0.015,
    )
    base.update(kw)
    return SimGeometry(**base)


# ---------------------------------------------------------------- index maps

def test_linear_to_grid_first_element():
    assert linear_to_grid(1, 4) == (1, 1)


def test_linear_to_grid_wraps_to_second_row():
    assert linear_to_grid(5, 4) == (1, 2)


def test_linear_to_grid_third_row():
    # ceil(7/3) = 3, 7 - 2*3 = 1
    assert linear_to_grid(7, 3) == (1, 3)


def test_linear_to_grid_rejects_out_of_range():
    with pytest.raises(ValueError):
        linear_to_grid(0, 4)
    with pytest.raises(ValueError):
        linear_to_grid(13, 4, 3)


@given(st.integers(1, 12), st.integers(1, 12), st.integers(1, 144))
def test_grid_round_trip(width, height, idx):
    if idx > width * height:
        idx = ((idx - 1) % (width * height)) + 1
    ix, iy = linear_to_grid(idx, width, height)
    assert 1 <= ix <= width and 1 <= iy <= height
    assert grid_to_linear(ix, iy, width) == idx


# ----------------------------------------------------------------- distances

def test_intra_distance_same_atom_is_layer_gap():
    geom = make_geom()
    assert intra_sim_distance(5, 5, geom) == pytest.approx(geom.s_layer)


def test_intra_distance_adjacent_atom_unit_diagonal():
    geom = make_geom(s_x=0.005, thickness=0.015)  # s_x = s_layer = 5 mm
    assert intra_sim_distance(1, 2, geom) == pytest.approx(math.sqrt(2) * geom.s_layer)


def test_intra_distance_corner_to_corner():
    geom = make_geom()
    expect = math.sqrt(8 * geom.s_x**2 + geom.s_layer**2)
    assert intra_sim_distance(1, 9, geom) == pytest.approx(expect, rel=1e-15)


def test_input_distance_collapsed_grids():
    geom = make_geom(n_x=1, n_y=1, m_x=1, m_y=1)
    assert input_to_first_distance(1, 1, geom) == pytest.approx(geom.s_layer)


def test_input_distance_center_atom_over_single_source():
    geom = make_geom(n_x=1, n_y=1, m_x=3, m_y=3)
    assert input_to_first_distance(5, 1, geom) == pytest.approx(geom.s_layer)


def test_input_distance_scalar_oracle():
    # m=1 on 3x3 at s=lam/2 sits at (-s, -s); n=1 on 2x2 at d=lam/2 sits
    # at (-d/2, -d/2); offset per axis is -s + d/2 = -1.25 mm
    geom = make_geom()
    off = -geom.s_x + geom.d_x / 2.0
    expect = math.sqrt(2 * off**2 + geom.s_layer**2)
    assert input_to_first_distance(1, 1, geom) == pytest.approx(expect, rel=1e-15)


# -------------------------------------------------------------- coefficients

def test_rs_coefficient_modulus_identity():
    geom = make_geom()
    d, area = 0.004, (LAM / 2) ** 2
    w = rs_coefficient(d, area, geom)
    expect = area * geom.s_layer / (2 * math.pi * d**3) * math.sqrt(1 + (geom.kappa * d) ** 2)
    assert abs(w) == pytest.approx(expect, rel=1e-14)


def test_rs_coefficient_linear_in_area():
    geom = make_geom()
    w1 = rs_coefficient(0.003, 1e-6, geom)
    w2 = rs_coefficient(0.003, 2e-6, geom)
    assert w2 == pytest.approx(2 * w1, rel=1e-14)
    assert cmath.phase(w2) == pytest.approx(cmath.phase(w1))


def test_rs_coefficient_one_wavelength_oracle():
    # d = s_layer = lam, A = (lam/2)^2: amp = A*lam/(2*pi*lam^3), kd = 2*pi
    geom = make_geom(layers=1, thickness=LAM)
    w = rs_coefficient(LAM, (LAM / 2) ** 2, geom)
    amp = (LAM / 2) ** 2 * LAM / (2 * math.pi * LAM**3)
    expect = amp * (1 - 2j * math.pi) * cmath.exp(2j * math.pi)
    assert w == pytest.approx(expect, rel=1e-12)


def test_rs_coefficient_magnitude_decreasing_far_field():
    geom = make_geom()
    dists = np.linspace(2 * LAM, 40 * LAM, 50)
    mags = [abs(rs_coefficient(d, 1e-6, geom)) for d in dists]
    assert all(a > b for a, b in zip(mags, mags[1:]))


def test_rs_coefficient_rejects_nonpositive():
    geom = make_geom()
    with pytest.raises(ValueError):
        rs_coefficient(0.0, 1e-6, geom)
    with pytest.raises(ValueError):
        rs_coefficient(0.003, -1e-6, geom)


# ---------------------------------------------------------------- matrix set

def test_propagation_isomorphic_receiver_transpose():
    props = build_propagation_matrices(make_geom())
    assert np.array_equal(props.w_last, props.w0.T)


def test_propagation_single_layer_has_no_inner():
    props = build_propagation_matrices(make_geom(layers=1, thickness=0.005))
    assert props.w_inner == ()
    assert props.w0.shape == (9, 4)
    assert props.w_last.shape == (4, 9)


def test_propagation_entries_match_scalar_oracle():
    geom = make_geom(layers=2, thickness=0.010)
    props = build_propagation_matrices(geom)
    for m in range(1, geom.m + 1):
        for n in range(1, geom.n + 1):
            expect = rs_coefficient(
                input_to_first_distance(m, n, geom), geom.d_x * geom.d_y, geom)
            assert props.w0[m - 1, n - 1] == pytest.approx(expect, rel=1e-13)
    for m in range(1, geom.m + 1):
        for b in range(1, geom.m + 1):
            expect = rs_coefficient(
                intra_sim_distance(m, b, geom), geom.s_x * geom.s_y, geom)
            assert props.w_inner[0][m - 1, b - 1] == pytest.approx(expect, rel=1e-13)


def test_propagation_rotated_receiver_differs():
    straight = build_propagation_matrices(make_geom())
    rotated = build_propagation_matrices(make_geom(rotation=math.pi / 6))
    assert not np.allclose(straight.w_last, rotated.w_last)
    # full-turn rotation comes back to the transpose
    full = build_propagation_matrices(make_geom(rotation=2 * math.pi))
    assert np.allclose(full.w_last, straight.w_last, rtol=1e-9)


def test_geometry_validation():
    with pytest.raises(ValueError):
        make_geom(n_x=0)
    with pytest.raises(ValueError):
        make_geom(s_x=-0.001)
    with pytest.raises(ValueError):
        make_geom(thickness=0.0)


# ------------------------------------------------------------------ steering

def test_steering_zero_angles_all_ones():
    sv = steering_vector(0.0, 0.0, 3, 2)
    assert np.array_equal(sv.entries, np.ones(6))


def test_steering_endfire_alternates():
    sv = steering_vector(math.pi, 0.0, 2, 1)
    assert sv.entries == pytest.approx([1.0, -1.0])


def test_steering_kronecker_oracle():
    px, py = 0.48 * math.pi, 0.23 * math.pi
    ax = np.array([1.0, cmath.exp(1j * px)])
    ay = np.array([1.0, cmath.exp(1j * py)])
    sv = steering_vector(px, py, 2, 2)
    assert sv.entries == pytest.approx(np.kron(ay, ax), rel=1e-15)


@given(st.floats(-10, 10), st.floats(-10, 10))
@settings(max_examples=50)
def test_steering_unit_modulus(px, py):
    sv = steering_vector(px, py, 4, 3)
    assert np.max(np.abs(np.abs(sv.entries) - 1.0)) < 1e-14
    assert sv.entries[0] == 1.0


# ----------------------------------------------------------------- dft target

def test_dft_single_point():
    assert np.array_equal(dft_matrix(1, 1).matrix, [[1.0]])


def test_dft_two_point():
    assert np.allclose(dft_matrix(2, 1).matrix, [[1, 1], [1, -1]], atol=1e-15)


def test_dft_2x2_kron_oracle():
    f2 = np.array([[1, 1], [1, -1]], dtype=complex)
    assert np.allclose(dft_matrix(2, 2).matrix, np.kron(f2, f2), atol=1e-15)


@pytest.mark.parametrize("nx,ny", [(1, 1), (2, 2), (4, 4), (8, 8), (8, 4)])
def test_dft_scaled_unitary(nx, ny):
    f = dft_matrix(nx, ny).matrix
    n = nx * ny
    assert np.linalg.norm(f @ f.conj().T - n * np.eye(n)) <= 1e-12 * n
    assert np.linalg.norm(f, "fro") ** 2 == pytest.approx(n * n)


def test_dft_structure():
    f = dft_matrix(4, 4).matrix
    assert np.allclose(np.abs(f), 1.0)
    assert np.allclose(f[0], 1.0) and np.allclose(f[:, 0], 1.0)
    assert np.allclose(f, f.T)


# --------------------------------------------------------------- feasibility

def test_feasibility_reference_design():
    rep = check_feasibility(make_geom(m_x=11, m_y=11, layers=7, thickness=0.045))
    assert rep.feasible and rep.m == 121 and rep.n == 4


def test_feasibility_rank_limited():
    rep = check_feasibility(make_geom(m_x=3, m_y=1))
    assert not rep.feasible
    assert "rank" in rep.message


def test_feasibility_boundary_equal():
    rep = check_feasibility(make_geom(m_x=2, m_y=2))
    assert rep.feasible


# ------------------------------------------------------------------ misc api

def test_derived_quantities():
    geom = make_geom(layers=7, thickness=0.045)
    assert geom.s_layer == pytest.approx(0.045 / 7)
    assert geom.kappa == pytest.approx(2 * math.pi / LAM)
    assert geom.n == 4 and geom.m == 9 and geom.r == 4
    assert geom.receiver_isomorphic
    assert not make_geom(u_x=LAM).receiver_isomorphic
    assert not make_geom(rotation=0.1).receiver_isomorphic
