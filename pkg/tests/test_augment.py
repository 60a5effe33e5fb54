import numpy as np
import pytest

from rdn3d.augment import DisplacementField, augment_dataset, deform_volume, sample_field
from rdn3d.volume import Volume


def const_field(ny, nx, dx, dy):
    dense = np.stack([np.full((ny, nx), float(dx)), np.full((ny, nx), float(dy))])
    return DisplacementField(np.zeros((2, 3, 3)), dense)


def test_zero_sigma_zero_field(rng):
    f = sample_field(rng, (20, 15), sigma=(0, 0))
    assert f.dense.shape == (2, 15, 20)
    assert np.all(f.dense == 0)


def test_seeded_field_repeats():
    a = sample_field(np.random.default_rng(3), (32, 32))
    b = sample_field(np.random.default_rng(3), (32, 32))
    np.testing.assert_array_equal(a.dense, b.dense)


def test_dense_field_passes_through_control_points(rng):
    f = sample_field(rng, (41, 21))
    np.testing.assert_allclose(f.dense[:, ::10, ::20], f.control, atol=1e-9)


def test_control_point_statistics():
    rng = np.random.default_rng(11)
    draws = np.concatenate([sample_field(rng, (3, 3)).control.reshape(-1) for _ in range(10_000 // 9 + 1)])
    draws = draws[:10_000]
    assert abs(np.std(draws) - 10.0) / 10.0 < 0.05
    assert abs(np.mean(draws)) < 0.5


def test_small_slice_rejected(rng):
    with pytest.raises(ValueError):
        sample_field(rng, (2, 10))


def test_zero_field_identity(rng):
    vol = rng.standard_normal((4, 12, 10)).astype(np.float32)
    f = const_field(12, 10, 0, 0)
    np.testing.assert_array_equal(deform_volume(vol, f, "nearest"), vol)
    np.testing.assert_allclose(deform_volume(vol, f, "spline"), vol, atol=1e-5)


def test_translation_moves_impulse():
    img = np.zeros((1, 16, 16), np.float32)
    img[0, 7, 5] = 1.0
    shifted = np.zeros_like(img)
    shifted[0, 7, 8] = 1.0
    f = const_field(16, 16, 3, 0)
    np.testing.assert_allclose(deform_volume(img, f, "spline"), shifted, atol=1e-5)
    np.testing.assert_array_equal(deform_volume(img, f, "nearest"), shifted)


def test_same_field_on_every_slice(rng):
    base = rng.standard_normal((20, 24)).astype(np.float32)
    vol = np.repeat(base[None], 5, axis=0)
    out = deform_volume(vol, sample_field(rng, (24, 20)), "spline")
    for z in range(1, 5):
        np.testing.assert_array_equal(out[z], out[0])


def test_mask_stays_binary(rng):
    m = (rng.uniform(size=(3, 30, 30)) > 0.6).astype(np.float32)
    out = deform_volume(m, sample_field(rng, (30, 30)), "nearest")
    assert set(np.unique(out)) <= {0.0, 1.0}


def test_dim_mismatch(rng):
    with pytest.raises(ValueError, match="does not match"):
        deform_volume(np.zeros((2, 10, 10)), sample_field(rng, (12, 10)))


def test_unknown_interpolation(rng):
    with pytest.raises(ValueError):
        deform_volume(np.zeros((2, 10, 10)), sample_field(rng, (10, 10)), "linear")


def test_volume_in_volume_out(rng):
    v = Volume(rng.standard_normal((2, 8, 8)), (1.0, 1.0, 2.0))
    out = deform_volume(v, sample_field(rng, (8, 8)))
    assert isinstance(out, Volume) and out.spacing == (1.0, 1.0, 2.0)


class TestAugmentDataset:
    def setup_method(self):
        zz, yy, xx = np.mgrid[0:3, 0:64, 0:64]
        self.mask = (((xx - 32) / 14.0) ** 2 + ((yy - 30) / 10.0) ** 2 <= 1).astype(np.uint8)
        self.volume = Volume(self.mask * 1.0 + 0.1, (1, 1, 2))

    def test_count_zero(self):
        assert augment_dataset(self.volume, [self.mask], seed=0, count=0) == []

    def test_twenty_five_distinct(self):
        out = augment_dataset(self.volume, [self.mask], seed=42, count=25)
        assert len(out) == 25
        flat = [v.data.tobytes() for v, _ in out]
        assert len(set(flat)) == 25

    def test_deterministic(self):
        a = augment_dataset(self.volume, [self.mask], seed=9, count=3)
        b = augment_dataset(self.volume, [self.mask], seed=9, count=3)
        for (va, ma), (vb, mb) in zip(a, b):
            np.testing.assert_array_equal(va.data, vb.data)
            np.testing.assert_array_equal(ma[0], mb[0])

    def test_mask_shape_checked(self):
        with pytest.raises(ValueError):
            augment_dataset(self.volume, [self.mask[:, :10]], seed=0, count=1)


def test_mask_area_preserved_on_large_slices():
    # A 3x3 grid at sigma 10 px has heavy tails: single draws can shrink a
    # mask by ~30%. The guard is on the typical draw, with rare outliers.
    yy, xx = np.mgrid[0:256, 0:256]
    mask = (((xx - 128) / 80.0) ** 2 + ((yy - 128) / 60.0) ** 2 <= 1).astype(np.uint8)[None]
    before = int(mask.sum())
    ratios = []
    for i in range(100):
        field = sample_field(np.random.default_rng(100 + i), (256, 256), (10, 10))
        ratios.append(int(deform_volume(mask, field, "nearest").sum()) / before)
    ratios = np.array(ratios)
    assert abs(ratios.mean() - 1) < 0.20
    assert abs(np.median(ratios) - 1) < 0.20
    assert np.mean(np.abs(ratios - 1) > 0.20) <= 0.05
