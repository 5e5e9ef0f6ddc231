import numpy as np
import pytest

from sonotree.numerics import ContractViolation, Rng
from sonotree.pgm import GrayImage, LabelMask, PgmError, load_pgm, load_pgm_mask, \
    save_pgm, save_pgm_mask
from sonotree.vision.coarse import (
    OrientationModel,
    classify_orientation,
    descriptor_vector,
    extract_global_features,
    train_orientation,
    GlobalFeatureExtractor,
)
from sonotree.vision.preprocess import bilinear_resize, preprocess

from conftest import make_image, striped_image


class TestPgm:
    def test_exact_decode(self, tmp_path):
        raw = b"P5\n2 2\n255\n" + bytes([0, 128, 255, 64])
        path = tmp_path / "tiny.pgm"
        path.write_bytes(raw)
        img = load_pgm(path)
        assert img.width == 2 and img.height == 2
        assert img.pixels.ravel().tolist() == [0, 128, 255, 64]

    def test_ascii_magic_rejected(self, tmp_path):
        path = tmp_path / "ascii.pgm"
        path.write_bytes(b"P2\n2 2\n255\n0 1 2 3\n")
        with pytest.raises(PgmError, match="unsupported magic"):
            load_pgm(path)

    def test_16bit_rejected_for_images(self, tmp_path):
        path = tmp_path / "deep.pgm"
        path.write_bytes(b"P5\n2 2\n65535\n" + bytes(8))
        with pytest.raises(PgmError, match="unsupported depth for images"):
            load_pgm(path)

    def test_truncated_raster_names_offset(self, tmp_path):
        path = tmp_path / "trunc.pgm"
        path.write_bytes(b"P5\n4 4\n255\n" + bytes(5))
        with pytest.raises(PgmError, match="offset"):
            load_pgm(path)

    def test_comment_in_header(self, tmp_path):
        path = tmp_path / "comment.pgm"
        path.write_bytes(b"P5\n# a comment\n2 1\n255\n\x07\x09")
        img = load_pgm(path)
        assert img.pixels.ravel().tolist() == [7, 9]

    def test_image_roundtrip(self, tmp_path):
        rng = np.random.default_rng(3)
        img = make_image(rng.integers(0, 256, (20, 30)))
        save_pgm(tmp_path / "x.pgm", img)
        back = load_pgm(tmp_path / "x.pgm")
        assert np.array_equal(back.pixels, img.pixels)

    def test_mask_roundtrip_16bit(self, tmp_path):
        labels = np.array([[0, 1], [2, 700]], dtype=np.int32)
        mask = LabelMask(width=2, height=2, labels=labels)
        save_pgm_mask(tmp_path / "m.pgm", mask)
        back = load_pgm_mask(tmp_path / "m.pgm")
        assert np.array_equal(back.labels, labels)


class TestPreprocess:
    def test_constant_stays_constant(self):
        img = make_image(np.full((256, 256), 99))
        out = preprocess(img)
        assert out.width == out.height == 256
        assert np.all(out.pixels == 99)

    def test_checkerboard_period_preserved(self):
        # 512x512 board with 32px squares -> 256x256 with 16px squares
        idx = np.arange(512)
        board = (((idx[:, None] // 32) + (idx[None, :] // 32)) % 2) * 255
        img = make_image(board)
        out = preprocess(img)

        def count_transitions(row):
            centered = row.astype(np.int64) - 127
            signs = np.sign(centered[centered != 0])
            return int(np.count_nonzero(np.diff(signs)))

        assert count_transitions(out.pixels[8]) == count_transitions(board[8]) == 15

    def test_bilinear_matches_naive_oracle(self):
        rng = np.random.default_rng(11)
        src = rng.integers(0, 256, (12, 17)).astype(np.float64)
        out = bilinear_resize(src, 7, 9)

        # independent oracle: per-pixel loop
        oracle = np.zeros((7, 9))
        for oy in range(7):
            for ox in range(9):
                sy = min(max((oy + 0.5) * 12 / 7 - 0.5, 0.0), 11.0)
                sx = min(max((ox + 0.5) * 17 / 9 - 0.5, 0.0), 16.0)
                y0, x0 = int(np.floor(sy)), int(np.floor(sx))
                y1, x1 = min(y0 + 1, 11), min(x0 + 1, 16)
                wy, wx = sy - y0, sx - x0
                oracle[oy, ox] = (src[y0, x0] * (1 - wy) * (1 - wx)
                                  + src[y0, x1] * (1 - wy) * wx
                                  + src[y1, x0] * wy * (1 - wx)
                                  + src[y1, x1] * wy * wx)
        assert np.allclose(out, oracle, atol=1e-9)

    def test_range_stretched_to_full(self):
        rng = np.random.default_rng(5)
        px = rng.integers(50, 101, (64, 64))
        px[0, 0], px[0, 1] = 50, 100  # pin the extremes
        out = preprocess(make_image(px))
        assert out.pixels.min() == 0 and out.pixels.max() == 255

    def test_too_small_rejected(self):
        with pytest.raises(ContractViolation):
            preprocess(make_image(np.zeros((8, 8))))


class TestGlobalFeatures:
    def test_shape_and_unit_norm(self):
        rng = np.random.default_rng(1)
        img = make_image(rng.integers(0, 256, (256, 256)))
        vec = extract_global_features(img)
        assert vec.shape == (400,)
        assert abs(np.linalg.norm(vec) - 1.0) <= 1e-9

    def test_constant_image_single_histogram_bin(self):
        img = make_image(np.full((64, 64), 200))
        raw = descriptor_vector(img.pixels)
        hist = raw[:64]
        assert np.count_nonzero(hist) == 1
        assert np.isclose(hist[(200 * 64) // 256], 1.0)

    def test_bit_for_bit_determinism(self):
        rng = np.random.default_rng(2)
        img = make_image(rng.integers(0, 256, (128, 128)))
        assert np.array_equal(extract_global_features(img),
                              extract_global_features(img))

    def test_transformer_stacks_rows(self):
        rng = np.random.default_rng(3)
        imgs = [make_image(rng.integers(0, 256, (64, 64))) for _ in range(3)]
        ext = GlobalFeatureExtractor()
        out = ext.fit(imgs).transform(imgs)
        assert out.shape == (3, 400)
        assert ext.get_params()["projection_seed"] == 0xC0A5E


@pytest.fixture(scope="module")
def trained_model():
    images, labels = [], []
    for period in (4, 8, 16, 32):
        images.append(striped_image(64, period, horizontal=True))
        labels.append(1)  # longitudinal: banding down the rows
        images.append(striped_image(64, period, horizontal=False))
        labels.append(0)  # transverse: banding across the columns
    return train_orientation(images, labels, Rng(1234), epochs=300)


class TestOrientation:
    def test_horizontal_stripes_longitudinal(self, trained_model):
        label, p = classify_orientation(striped_image(64, 12, True), trained_model)
        assert label == "longitudinal" and p >= 0.9

    def test_vertical_stripes_transverse(self, trained_model):
        label, p = classify_orientation(striped_image(64, 12, False), trained_model)
        assert label == "transverse" and p >= 0.9

    def test_zero_model_ties_to_first_class(self):
        model = OrientationModel.zeros()
        label, p = classify_orientation(striped_image(32, 4, True), model)
        assert label == "transverse" and np.isclose(p, 0.5)
