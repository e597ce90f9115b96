"""Inpainting tests: PGM I/O, the pixel-space domain, and both fill modes."""

import numpy as np
import pytest

from spherewalk.inpaint import (
    MaskDomain,
    inpaint_biharmonic,
    inpaint_harmonic,
    read_mask,
    read_pgm,
    write_pgm,
)
from spherewalk.walker import WalkConfig


def blob_mask(shape, seed, count=3):
    """Union of random rectangles, kept away from a 3-pixel border."""
    rng = np.random.default_rng(seed)
    H, W = shape
    mask = np.zeros(shape, bool)
    for _ in range(count):
        h = rng.integers(2, max(3, H // 3))
        w = rng.integers(2, max(3, W // 3))
        r = rng.integers(3, H - 3 - h)
        c = rng.integers(3, W - 3 - w)
        mask[r : r + h, c : c + w] = True
    return mask


def full_scan_distance(mask, pts):
    """Reference clearance using every known pixel, no collar shortcut."""
    rows, cols = np.nonzero(~mask)
    dx = pts[:, 0, None] - cols[None, :]
    dy = pts[:, 1, None] - rows[None, :]
    return np.sqrt((dx * dx + dy * dy).min(axis=1)) - 0.5


class TestPgm:
    def test_p5_roundtrip_quantizes_once(self, tmp_path):
        rng = np.random.default_rng(0)
        img = rng.uniform(0.0, 1.0, (9, 13))
        path = tmp_path / "a.pgm"
        write_pgm(path, img)
        back = read_pgm(path)
        assert back.shape == (9, 13)
        assert np.abs(back - img).max() <= 0.5 / 255 + 1e-12
        # already-quantized images survive a rewrite byte for byte
        path2 = tmp_path / "b.pgm"
        write_pgm(path2, back)
        assert path.read_bytes() == path2.read_bytes()

    def test_p2_with_comments(self, tmp_path):
        text = b"P2 # magic\n# a comment line\n3 2\n255\n0 128 255\n64 32 16\n"
        path = tmp_path / "c.pgm"
        path.write_bytes(text)
        img = read_pgm(path)
        expected = np.array([[0, 128, 255], [64, 32, 16]]) / 255.0
        np.testing.assert_array_equal(img, expected)

    def test_p5_comment_written_on_second_line(self, tmp_path):
        path = tmp_path / "d.pgm"
        write_pgm(path, np.zeros((2, 2)), comment="walks=64 seed=1")
        lines = path.read_bytes().split(b"\n")
        assert lines[0] == b"P5"
        assert lines[1] == b"# walks=64 seed=1"
        np.testing.assert_array_equal(read_pgm(path), np.zeros((2, 2)))

    def test_multiline_comment_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="single line"):
            write_pgm(tmp_path / "e.pgm", np.zeros((2, 2)), comment="a\nb")

    def test_only_maxval_255(self, tmp_path):
        path = tmp_path / "f.pgm"
        path.write_bytes(b"P2\n2 1\n65535\n0 1\n")
        with pytest.raises(ValueError, match="maxval"):
            read_pgm(path)

    def test_truncated_raster(self, tmp_path):
        path = tmp_path / "g.pgm"
        path.write_bytes(b"P5\n4 4\n255\nabc")
        with pytest.raises(ValueError, match="truncated"):
            read_pgm(path)

    def test_wrong_magic(self, tmp_path):
        path = tmp_path / "h.ppm"
        path.write_bytes(b"P6\n2 2\n255\n" + bytes(12))
        with pytest.raises(ValueError, match="not a PGM"):
            read_pgm(path)

    def test_mask_roundtrip(self, tmp_path):
        mask = blob_mask((12, 17), seed=3)
        path = tmp_path / "m.pgm"
        write_pgm(path, mask.astype(float))
        np.testing.assert_array_equal(read_mask(path), mask)

    def test_mask_rejects_gray(self, tmp_path):
        path = tmp_path / "n.pgm"
        img = np.zeros((3, 3))
        img[1, 2] = 128 / 255
        write_pgm(path, img)
        with pytest.raises(ValueError, match="0 or 255"):
            read_mask(path)

    def test_clamps_out_of_range(self, tmp_path):
        path = tmp_path / "o.pgm"
        write_pgm(path, np.array([[-0.5, 1.5]]))
        np.testing.assert_array_equal(read_pgm(path), np.array([[0.0, 1.0]]))


class TestMaskDomain:
    def test_single_pixel_distances(self):
        mask = np.zeros((6, 7), bool)
        mask[2, 3] = True
        dom = MaskDomain(mask)
        assert dom.masked_count == 1
        assert dom.distance(np.array([3.0, 2.0])) == pytest.approx(0.5)
        assert dom.distance(np.array([3.25, 2.0])) == pytest.approx(0.25)
        assert dom.contains(np.array([3.0, 2.0]))
        # a known ring pixel center is its own nearest known center
        assert dom.distance(np.array([3.0, 1.0])) == pytest.approx(-0.5)
        assert not dom.contains(np.array([3.0, 1.0]))

    def test_ring_and_collar_sets(self):
        mask = np.zeros((6, 6), bool)
        mask[2, 2] = True
        dom = MaskDomain(mask)
        rr, rc = dom.boundary_ring()
        assert sorted(zip(rr.tolist(), rc.tolist())) == [(1, 2), (2, 1), (2, 3), (3, 2)]
        br, bc = dom.boundary_pixels()
        # every known pixel within Chebyshev distance 2 of the masked one
        assert sorted(zip(br.tolist(), bc.tolist())) == sorted(
            (r, c)
            for r in range(6)
            for c in range(6)
            if (r, c) != (2, 2) and max(abs(r - 2), abs(c - 2)) <= 2
        )

    def test_bounding_radius(self):
        dom = MaskDomain(np.zeros((30, 40), bool))
        assert dom.bounding_radius() == pytest.approx(25.0)

    def test_collar_matches_full_scan(self):
        # the collar shortcut must be exact wherever a walk can stand
        for seed in (0, 1, 2):
            mask = blob_mask((22, 26), seed=seed)
            dom = MaskDomain(mask)
            rows, cols = np.nonzero(mask)
            centers = np.column_stack([cols, rows]).astype(float)
            rng = np.random.default_rng(100 + seed)
            jitter = rng.uniform(-0.7, 0.7, (rows.size * 4, 2))
            pts = np.vstack([centers, np.repeat(centers, 4, axis=0) + jitter])
            ref = full_scan_distance(mask, pts)
            keep = ref >= 0.0  # walks never stand at negative clearance
            got = dom.distance(pts[keep])
            np.testing.assert_array_equal(got, ref[keep])

    def test_rejects_bad_masks(self):
        with pytest.raises(ValueError, match="boolean"):
            MaskDomain(np.zeros((3, 3)))
        with pytest.raises(ValueError, match="2-D"):
            MaskDomain(np.zeros(9, bool))


class TestHarmonic:
    def test_constant_exact(self):
        img = np.full((20, 20), 0.37)
        mask = blob_mask((20, 20), seed=5)
        out = inpaint_harmonic(img, mask, WalkConfig(rng_seed=1), walks=8)
        np.testing.assert_array_equal(out, img)

    def test_zero_mask_returns_unchanged_copy(self):
        rng = np.random.default_rng(2)
        img = rng.uniform(0, 1, (8, 8))
        out = inpaint_harmonic(img, np.zeros((8, 8), bool), walks=4)
        assert out is not img
        np.testing.assert_array_equal(out, img)

    def test_unmasked_pixels_bit_identical(self):
        rng = np.random.default_rng(3)
        img = rng.uniform(0, 1, (18, 18))
        mask = blob_mask((18, 18), seed=7)
        out = inpaint_harmonic(img, mask, WalkConfig(rng_seed=4), walks=8)
        np.testing.assert_array_equal(out[~mask], img[~mask])
        assert not np.array_equal(out[mask], img[mask])

    def test_linear_ramp_bound(self):
        # a ramp is harmonic; the fill must match it closely
        W = 64
        img = np.tile(np.arange(W) / W, (W, 1))
        mask = np.zeros((W, W), bool)
        mask[26:38, 26:38] = True
        out = inpaint_harmonic(img, mask, WalkConfig(rng_seed=0), walks=256)
        assert np.abs(out - img)[mask].max() <= 0.02

    def test_maximum_principle_exact(self):
        # each walk exits onto a known intensity, so fills are convex
        # combinations of collar values with no tolerance needed
        rng = np.random.default_rng(8)
        img = rng.uniform(0, 1, (20, 24))
        mask = blob_mask((20, 24), seed=9)
        dom = MaskDomain(mask)
        out = inpaint_harmonic(img, dom, WalkConfig(rng_seed=6), walks=16)
        br, bc = dom.boundary_pixels()
        assert out[mask].min() >= img[br, bc].min()
        assert out[mask].max() <= img[br, bc].max()

    def test_replay_and_seed_sensitivity(self):
        rng = np.random.default_rng(10)
        img = rng.uniform(0, 1, (14, 14))
        mask = blob_mask((14, 14), seed=11)
        a = inpaint_harmonic(img, mask, WalkConfig(rng_seed=5), walks=16)
        b = inpaint_harmonic(img, mask, WalkConfig(rng_seed=5), walks=16)
        c = inpaint_harmonic(img, mask, WalkConfig(rng_seed=6), walks=16)
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a[mask], c[mask])

    def test_workers_do_not_change_bytes(self):
        rng = np.random.default_rng(12)
        img = rng.uniform(0, 1, (16, 16))
        mask = blob_mask((16, 16), seed=13)
        serial = inpaint_harmonic(img, mask, WalkConfig(rng_seed=7), walks=12)
        for workers in (2, 3):
            forked = inpaint_harmonic(
                img, mask, WalkConfig(rng_seed=7), walks=12, workers=workers
            )
            np.testing.assert_array_equal(forked, serial)

    def test_mask_domain_and_array_agree(self):
        rng = np.random.default_rng(14)
        img = rng.uniform(0, 1, (12, 12))
        mask = blob_mask((12, 12), seed=15)
        a = inpaint_harmonic(img, mask, WalkConfig(rng_seed=8), walks=8)
        b = inpaint_harmonic(img, MaskDomain(mask), WalkConfig(rng_seed=8), walks=8)
        np.testing.assert_array_equal(a, b)

    def test_se_scales_with_walk_count(self):
        # doubling walks shrinks the replicate spread by about sqrt(2)
        rng = np.random.default_rng(11)
        img = rng.uniform(0, 1, (16, 16))
        mask = np.zeros((16, 16), bool)
        mask[7:9, 7:9] = True
        spread = {}
        for walks in (64, 128):
            vals = np.empty((160, 4))
            for s in range(160):
                out = inpaint_harmonic(
                    img, mask, WalkConfig(rng_seed=1000 + s), walks=walks
                )
                vals[s] = out[mask]
            spread[walks] = vals.std(axis=0, ddof=1)
        ratio = spread[64] / spread[128]
        root2 = np.sqrt(2.0)
        assert np.all(ratio >= root2 * 0.85)
        assert np.all(ratio <= root2 * 1.15)

    def test_isolated_mask(self):
        with pytest.raises(ValueError, match="isolated mask"):
            inpaint_harmonic(np.zeros((4, 4)), np.ones((4, 4), bool), walks=2)

    def test_input_validation(self):
        img = np.zeros((6, 6))
        mask = np.zeros((6, 6), bool)
        mask[2, 2] = True
        with pytest.raises(ValueError, match="does not match"):
            inpaint_harmonic(np.zeros((5, 6)), mask, walks=2)
        with pytest.raises(ValueError, match="walks"):
            inpaint_harmonic(img, mask, walks=0)


class TestBiharmonic:
    def test_constant_exact(self):
        img = np.full((20, 20), 0.61)
        mask = blob_mask((20, 20), seed=16)
        out = inpaint_biharmonic(img, mask, WalkConfig(rng_seed=1), walks=8)
        np.testing.assert_array_equal(out, img)

    def test_quadratic_image_beats_harmonic(self):
        # x^2 has constant curvature: the two-pass solve keeps it, the
        # harmonic fill flattens it
        W = 60
        img = np.tile((np.arange(W) / (W - 1)) ** 2, (W, 1))
        mask = np.zeros((W, W), bool)
        mask[20:40, 20:40] = True
        cfg = WalkConfig(rng_seed=0)
        harm = inpaint_harmonic(img, mask, cfg, walks=256)
        biha = inpaint_biharmonic(img, mask, cfg, walks=256)
        rms_h = np.sqrt(np.mean((harm - img)[mask] ** 2))
        rms_b = np.sqrt(np.mean((biha - img)[mask] ** 2))
        assert rms_b < 0.8 * rms_h
        assert np.abs(biha - img)[mask].max() <= 0.04

    def test_output_clamped_to_unit_range(self):
        # near-zero boundary with strong curvature drives raw fills negative
        W = 40
        x = np.arange(W) / (W - 1)
        img = np.tile((0.55 * x) ** 4, (W, 1))
        mask = np.zeros((W, W), bool)
        mask[4:18, 4:18] = True
        out = inpaint_biharmonic(img, mask, WalkConfig(rng_seed=2), walks=64)
        assert out.min() == 0.0
        assert out.max() <= 1.0

    def test_unmasked_pixels_bit_identical(self):
        rng = np.random.default_rng(17)
        img = rng.uniform(0, 1, (22, 22))
        mask = blob_mask((22, 22), seed=18)
        out = inpaint_biharmonic(img, mask, WalkConfig(rng_seed=3), walks=8)
        np.testing.assert_array_equal(out[~mask], img[~mask])

    def test_replay(self):
        rng = np.random.default_rng(19)
        img = rng.uniform(0, 1, (14, 14))
        mask = blob_mask((14, 14), seed=20)
        a = inpaint_biharmonic(img, mask, WalkConfig(rng_seed=4), walks=8)
        b = inpaint_biharmonic(img, mask, WalkConfig(rng_seed=4), walks=8)
        np.testing.assert_array_equal(a, b)

    def test_stencil_out_of_bounds(self):
        # only a one-pixel border is known: no full 5-point stencil exists
        mask = np.ones((8, 8), bool)
        mask[0, :] = mask[-1, :] = mask[:, 0] = mask[:, -1] = False
        with pytest.raises(ValueError, match="stencil out of bounds"):
            inpaint_biharmonic(np.zeros((8, 8)), mask, walks=2)

    def test_differs_from_harmonic_on_curved_data(self):
        rng = np.random.default_rng(21)
        img = np.clip(rng.uniform(0.2, 0.8, (16, 16)), 0, 1)
        mask = blob_mask((16, 16), seed=22)
        cfg = WalkConfig(rng_seed=5)
        a = inpaint_harmonic(img, mask, cfg, walks=16)
        b = inpaint_biharmonic(img, mask, cfg, walks=16)
        assert not np.array_equal(a[mask], b[mask])
