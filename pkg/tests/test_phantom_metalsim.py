import numpy as np
import pytest

from masc.metalsim import (ImplantConfig, ImplantSpec, apply_metal_artifacts, dipole_field, make_paired_sample,
                           place_implant, raw_dipole_field, rf_attenuation, splat_readout)
from masc.metrics import nmse
from masc.phantom import AIR, PhantomConfig, SequenceParams, generate_phantom, spin_echo_signal


# -- phantom ---------------------------------------------------------------
def test_phantom_deterministic():
    a, b = generate_phantom(11), generate_phantom(11)
    for f in ("labels", "pd", "t1", "t2"):
        np.testing.assert_array_equal(getattr(a, f), getattr(b, f))


def test_air_has_zero_pd():
    m = generate_phantom(3)
    assert (m.pd[m.labels == AIR] == 0).all()
    assert (m.labels == AIR).any()


def test_every_pixel_matches_tissue_table():
    m = generate_phantom(4)
    table = {(t.pd, t.t1, t.t2) for t in m.table.values()}
    seen = set(zip(m.pd.ravel(), m.t1.ravel(), m.t2.ravel()))
    assert seen <= table


def test_signal_limits():
    m = generate_phantom(0)
    m.pd[:] = 1.0
    s = spin_echo_signal(m, SequenceParams(tr_ms=1e9, te_ms=1e-9))
    np.testing.assert_allclose(s, 1.0, atol=1e-9)


def test_signal_zero_where_pd_zero():
    m = generate_phantom(1)
    assert (spin_echo_signal(m)[m.pd == 0] == 0).all()


def test_signal_scalar_value():
    m = generate_phantom(0)
    m.pd[:], m.t1[:], m.t2[:] = 1.0, 1000.0, 100.0
    expected = (1 - np.exp(-4.05)) * np.exp(-0.32)
    np.testing.assert_allclose(spin_echo_signal(m, SequenceParams(4050.0, 32.0)), expected, rtol=1e-12)
    assert expected == pytest.approx(0.7135, abs=1e-4)


def test_bad_geometry_rejected():
    with pytest.raises(ValueError):
        PhantomConfig(height=48).validate()


# -- field model -----------------------------------------------------------
def test_zero_susceptibility_zero_field():
    assert not np.any(raw_dipole_field(np.zeros((32, 32))))


def test_field_is_linear():
    chi = np.random.default_rng(0).standard_normal((32, 32))
    np.testing.assert_allclose(raw_dipole_field(2 * chi), 2 * raw_dipole_field(chi), atol=1e-12)


def test_dipole_lobes_change_sign():
    chi = np.zeros((64, 64))
    chi[31:33, 31:33] = 1.0
    f = raw_dipole_field(chi)
    axial, transverse = f[40, 32], f[32, 40]
    assert axial > 0 > transverse


def test_field_peak_scaled():
    maps = generate_phantom(2)
    spec = ImplantSpec(center=(32.0, 32.0), peak_df_hz=1234.0)
    assert np.abs(dipole_field(spec, maps)).max() == pytest.approx(1234.0)


# -- artifact pipeline -----------------------------------------------------
def test_zero_field_is_identity():
    img = spin_echo_signal(generate_phantom(6))
    z = np.zeros_like(img)
    out = apply_metal_artifacts(img, z, np.zeros(img.shape, bool))
    np.testing.assert_array_equal(out, img)


def test_splat_conserves_mass():
    rng = np.random.default_rng(0)
    img = rng.random((64, 64))
    shift = rng.uniform(-20, 20, (64, 64))   # pushes mass past both edges
    assert abs(splat_readout(img, shift).sum() / img.sum() - 1) < 1e-4


def test_fwhm_halves():
    np.testing.assert_allclose(rf_attenuation(np.array([1125.0, -1125.0]), 2250.0), 0.5, rtol=1e-12)


def test_severity_ladder_monotone():
    for seed in range(3):
        clean = make_paired_sample(seed).clean_image
        errs = [nmse(make_paired_sample(seed, implant_cfg=ImplantConfig(peak_df_hz=p)).metal_image, clean)
                for p in (250.0, 500.0, 1000.0, 2000.0, 4000.0)]
        assert all(b > a for a, b in zip(errs, errs[1:])), errs


def test_small_field_artifact_is_local():
    for seed in range(3):
        s = make_paired_sample(seed, implant_cfg=ImplantConfig(peak_df_hz=200.0))
        diff = np.abs(s.metal_image - s.clean_image) / s.clean_image.max()
        yy, xx = np.mgrid[:64, :64]
        dist = np.hypot(yy - s.placement[0], xx - s.placement[1])
        far = diff[dist > 16].max()
        assert far < 0.02
        assert diff[dist <= 6].max() > 10 * far


def test_paired_sample_deterministic():
    a, b = make_paired_sample([7, 1]), make_paired_sample([7, 1])
    np.testing.assert_array_equal(a.metal_k, b.metal_k)
    np.testing.assert_array_equal(a.clean_k, b.clean_k)
    assert a.placement == b.placement


def test_placement_bounds():
    cfg = ImplantConfig()
    rng = np.random.default_rng(0)
    box = cfg.max_shift_frac * 64
    for _ in range(10_000):
        s = place_implant(rng, (64, 64), cfg)
        assert abs(s.rotation_deg) <= cfg.max_rotation_deg
        assert abs(s.center[0] - 31.5) <= box and abs(s.center[1] - 31.5) <= box
