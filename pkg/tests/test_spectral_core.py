import math

import numpy as np
import pytest

import b4nls as b
from b4nls.spectral import (
    band_cutoff,
    band_mode_mask,
    coeffs_to_grid,
    mode_coefficient,
    smoothing_multiplier,
)

PI = math.pi


def rand_field(spec, seed, decay=2.0):
    return b.random_field(spec, np.random.default_rng(seed), decay=decay)


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------

def test_make_torus_1d():
    spec = b.make_torus(1, 64, 1.0)
    assert spec.n_modes == 64
    assert spec.k1d[0] == -32 and spec.k1d[-1] == 31


def test_make_torus_2d_multiplier():
    spec = b.make_torus(2, 16, 0.0)
    assert spec.n_modes == 256
    assert np.allclose(spec.dispersion, spec.k_sq**2)


def test_make_torus_rejects_odd_n():
    with pytest.raises(ValueError, match="even"):
        b.make_torus(1, 7, 1.0)


def test_make_torus_rejects_small_and_negative():
    with pytest.raises(ValueError):
        b.make_torus(1, 6, 1.0)
    with pytest.raises(ValueError):
        b.make_torus(1, 64, -0.5)
    with pytest.raises(ValueError):
        b.make_torus(3, 64, 1.0)


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------

def test_sobolev_basis_mode():
    spec = b.make_torus(1, 64, 1.0)
    e1 = b.basis_field(spec, 1)
    assert b.sobolev_norm(e1, 2.0) == pytest.approx(2.0, abs=1e-14)


def test_sobolev_zero_is_parseval():
    spec = b.make_torus(1, 64, 1.0)
    u = rand_field(spec, 0)
    assert b.sobolev_norm(u, 0.0) == pytest.approx(
        float(np.linalg.norm(u.coeffs)), rel=1e-12
    )


def test_sobolev_two_modes():
    spec = b.make_torus(1, 64, 1.0)
    u = b.field_from_coeffs(
        spec, b.basis_field(spec, 0).coeffs + b.basis_field(spec, 2).coeffs
    )
    assert b.sobolev_norm(u, 1.0) == pytest.approx(math.sqrt(6.0), rel=1e-14)


def test_parseval_grid_quadrature():
    spec = b.make_torus(2, 16, 1.0)
    u = rand_field(spec, 1)
    vals = b.to_grid(u)
    quad = float(np.sum(np.abs(vals) ** 2) * spec.cell_volume)
    assert quad == pytest.approx(b.l2_norm(u) ** 2, rel=1e-12)


# ---------------------------------------------------------------------------
# operators
# ---------------------------------------------------------------------------

def test_dispersion_on_basis_mode():
    spec = b.make_torus(1, 64, 1.0)
    out = b.apply_dispersion(b.basis_field(spec, 1))
    assert mode_coefficient(out, 1) == pytest.approx(2.0)


def test_smoothing_on_basis_mode():
    spec = b.make_torus(1, 64, 1.0)
    out = b.apply_smoothing(b.basis_field(spec, 1), 2)
    assert mode_coefficient(out, 1) == pytest.approx(0.25)


def test_dispersion_kills_zero_mode():
    spec = b.make_torus(1, 64, 1.0)
    out = b.apply_dispersion(b.basis_field(spec, 0))
    assert b.l2_norm(out) == 0.0


def test_gradient_energy():
    spec = b.make_torus(1, 64, 0.0)
    u = b.field_from_coeffs(
        spec, b.basis_field(spec, 1).coeffs + 2.0 * b.basis_field(spec, 3).coeffs
    )
    assert b.gradient_energy(u) == pytest.approx(1.0 + 4.0 * 9.0)


def test_multiplier_self_adjointness():
    spec = b.make_torus(1, 32, 1.0)
    u, v = rand_field(spec, 2), rand_field(spec, 3)
    lhs = b.l2_inner(b.apply_dispersion(u), v)
    rhs = b.l2_inner(u, b.apply_dispersion(v))
    assert abs(lhs - rhs) <= 1e-12 * abs(lhs)


# ---------------------------------------------------------------------------
# free propagation
# ---------------------------------------------------------------------------

def test_propagate_basis_beta0():
    spec = b.make_torus(1, 64, 0.0)
    out = b.propagate_free(b.basis_field(spec, 1), PI)
    assert mode_coefficient(out, 1) == pytest.approx(-1.0, abs=1e-14)


def test_propagate_identity_at_zero():
    spec = b.make_torus(1, 64, 1.0)
    u = rand_field(spec, 4)
    assert np.array_equal(b.propagate_free(u, 0.0).coeffs, u.coeffs)


def test_propagate_basis_beta1():
    spec = b.make_torus(1, 64, 1.0)
    out = b.propagate_free(b.basis_field(spec, 1), PI / 2)
    assert mode_coefficient(out, 1) == pytest.approx(-1.0, abs=1e-14)


def test_propagate_unitary():
    spec = b.make_torus(1, 64, 1.0)
    u = rand_field(spec, 5)
    n0 = b.l2_norm(u)
    n1 = b.l2_norm(b.propagate_free(u, 0.731))
    assert abs(n1 - n0) <= 1e-13 * n0


def test_propagate_group_law():
    spec = b.make_torus(1, 64, 1.0)
    u = rand_field(spec, 6)
    a = b.propagate_free(b.propagate_free(u, 0.3), 0.45)
    c = b.propagate_free(u, 0.75)
    assert np.abs(a.coeffs - c.coeffs).max() <= 1e-12 * b.l2_norm(u)


# ---------------------------------------------------------------------------
# band projector
# ---------------------------------------------------------------------------

def test_band_project_plateau_and_gap():
    spec = b.make_torus(1, 64, 1.0)
    u = b.basis_field(spec, 1)
    out = b.band_project(u, 1.0)  # h^2 k^2 = 1: on the plateau
    assert mode_coefficient(out, 1) == pytest.approx(1.0, abs=1e-15)
    out0 = b.band_project(b.basis_field(spec, 0), 1.0)
    assert b.l2_norm(out0) == 0.0


def test_band_cutoff_golden_midpoint():
    # kappa(2.25) sits midway down the fall (by the ramp's symmetry)
    assert float(band_cutoff(np.array(2.25))) == pytest.approx(0.5, abs=1e-14)


def test_band_project_idempotent_on_plateau():
    spec = b.make_torus(1, 64, 1.0)
    u = rand_field(spec, 7)
    h = 0.5  # plateau h^2 k^2 in [1, 2] holds the modes k = +-2
    once = b.band_project(u, h)
    twice = b.band_project(once, h)
    plateau = (h * h * spec.k_sq >= 1.0) & (h * h * spec.k_sq <= 2.0)
    assert plateau.sum() == 2
    assert np.abs((twice.coeffs - once.coeffs)[plateau]).max() == 0.0


def test_band_mode_mask_annulus():
    spec = b.make_torus(1, 64, 1.0)
    mask = band_mode_mask(spec, 0.25)
    ks = spec.k1d[mask]
    inside = (0.5 < 0.0625 * ks.astype(float) ** 2) & (
        0.0625 * ks.astype(float) ** 2 < 2.5
    )
    assert inside.all()


# ---------------------------------------------------------------------------
# damping profiles
# ---------------------------------------------------------------------------

def test_full_profile_is_one():
    spec = b.make_torus(1, 64, 1.0)
    a = b.make_damping_profile(spec, b.FullRegion())
    assert np.all(a.values == 1.0)


def test_strip_profile_plateau_and_support():
    spec = b.make_torus(1, 256, 1.0)
    a = b.make_damping_profile(spec, b.Strip(PI / 2, 3 * PI / 2), 0.1)
    x = spec.grid1d
    inner = (x >= PI / 2 + 0.1 + 1e-9) & (x <= 3 * PI / 2 - 0.1 - 1e-9)
    outer = (x <= PI / 2) | (x >= 3 * PI / 2)
    assert np.all(a.values[inner] == 1.0)
    assert np.all(a.values[outer] == 0.0)
    assert np.all(a.values >= 0.0)


def test_empty_region_rejected():
    spec = b.make_torus(1, 64, 1.0)
    with pytest.raises(ValueError):
        b.make_damping_profile(spec, b.Ball((PI,), 0.0), 0.05)
    with pytest.raises(ValueError):
        b.make_damping_profile(spec, b.RegionUnion(()), 0.05)


def test_region_too_small_for_width():
    spec = b.make_torus(1, 64, 1.0)
    with pytest.raises(ValueError, match="too small"):
        b.make_damping_profile(spec, b.Strip(0.0, 0.3), 0.2)


def test_union_profile_smooth_max():
    spec = b.make_torus(2, 32, 1.0)
    region = b.RegionUnion((b.Strip(0.0, 1.0, 0), b.Strip(0.0, 1.0, 1)))
    a = b.make_damping_profile(spec, region, 0.15)
    assert a.values.max() == pytest.approx(1.0)
    assert np.all(a.values >= 0.0) and np.all(a.values <= 1.0 + 1e-15)


# ---------------------------------------------------------------------------
# snapshots
# ---------------------------------------------------------------------------

def test_snapshot_roundtrip(tmp_path):
    spec = b.make_torus(2, 16, 0.75)
    u = rand_field(spec, 8)
    path = tmp_path / "field.b4f"
    b.save_field(u, path)
    v = b.load_field(path)
    assert v.spec == spec
    assert np.array_equal(v.coeffs, u.coeffs)


def test_snapshot_header_layout(tmp_path):
    spec = b.make_torus(1, 8, 0.5)
    u = b.basis_field(spec, 1)
    path = tmp_path / "f.b4f"
    b.save_field(u, path)
    raw = path.read_bytes()
    assert raw[:6] == b"B4NLS1"
    assert raw[6] == 0 and raw[7] == 1  # torus, d = 1
    assert len(raw) == 6 + 1 + 1 + 4 + 8 + 16 * 8


def test_snapshot_bad_magic(tmp_path):
    path = tmp_path / "junk.b4f"
    path.write_bytes(b"NOTB4N" + b"\0" * 64)
    with pytest.raises(ValueError, match="magic"):
        b.load_field(path)


def test_grid_roundtrip():
    spec = b.make_torus(1, 64, 1.0)
    u = rand_field(spec, 9)
    v = b.field_from_grid(spec, b.to_grid(u))
    assert np.abs(v.coeffs - u.coeffs).max() <= 1e-13


def test_basis_field_point_values():
    spec = b.make_torus(1, 64, 1.0)
    vals = coeffs_to_grid(spec, b.basis_field(spec, 3).coeffs)
    x = spec.grid1d
    expect = np.exp(3j * x) / math.sqrt(2 * PI)
    assert np.abs(vals - expect).max() <= 1e-13


def test_smoothing_multiplier_values():
    spec = b.make_torus(1, 64, 2.0)
    m = smoothing_multiplier(spec, 1)
    k = spec.k1d.astype(float)
    assert np.allclose(m, 1.0 / (1.0 + k**2))


def test_sphere_arith_spec():
    spec = b.make_sphere_arith(0.5)
    assert spec.kind == "sphere-arith" and spec.d == 5
    with pytest.raises(ValueError):
        b.ManifoldSpec(kind="sphere-arith", d=2, N=8, beta=0.5)
