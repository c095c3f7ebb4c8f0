"""Dataset I/O: IDX and amat parsing, standardization, synthetic data."""

import gzip
import struct

import numpy as np
import pytest

from ieanet.data import (
    Dataset,
    parse_amat,
    parse_idx,
    standardize,
    standardize_pair,
    synth_blobs,
    write_amat,
    write_idx,
)
from ieanet.errors import ConfigError, DataFormatError


def make_dataset(n=2, side=28, seed=0):
    rng = np.random.default_rng(seed)
    images = rng.integers(0, 256, (n, 1, side, side)).astype(np.float64) / 255.0
    labels = rng.integers(0, 10, n).astype(np.int64)
    return Dataset(images, labels)


class TestIdx:
    def test_fixture_roundtrip_lossless(self, tmp_path):
        ds = make_dataset()
        ip, lp = tmp_path / "img.idx", tmp_path / "lab.idx"
        write_idx(ds, ip, lp)
        back = parse_idx(ip, lp)
        assert back.images.shape == (2, 1, 28, 28)
        assert np.array_equal(back.images, ds.images)
        assert np.array_equal(back.labels, ds.labels)

    def test_gzip_roundtrip(self, tmp_path):
        ds = make_dataset(3)
        ip, lp = tmp_path / "img.idx.gz", tmp_path / "lab.idx.gz"
        write_idx(ds, ip, lp, compress=True)
        with gzip.open(ip, "rb") as f:
            assert f.read(4) == struct.pack(">i", 0x00000803)
        back = parse_idx(ip, lp)
        assert np.array_equal(back.images, ds.images)

    def test_bad_magic_names_expected_and_actual(self, tmp_path):
        ds = make_dataset()
        ip, lp = tmp_path / "img.idx", tmp_path / "lab.idx"
        write_idx(ds, ip, lp)
        raw = bytearray(ip.read_bytes())
        raw[3] = 0x09
        ip.write_bytes(bytes(raw))
        with pytest.raises(DataFormatError, match="magic"):
            parse_idx(ip, lp)

    def test_truncated_payload(self, tmp_path):
        ds = make_dataset()
        ip, lp = tmp_path / "img.idx", tmp_path / "lab.idx"
        write_idx(ds, ip, lp)
        ip.write_bytes(ip.read_bytes()[:-100])
        with pytest.raises(DataFormatError, match="truncated"):
            parse_idx(ip, lp)

    def test_count_mismatch(self, tmp_path):
        a = make_dataset(2)
        b = make_dataset(3)
        ip, lp = tmp_path / "img.idx", tmp_path / "lab.idx"
        ip2, lp2 = tmp_path / "img2.idx", tmp_path / "lab2.idx"
        write_idx(a, ip, lp)
        write_idx(b, ip2, lp2)
        with pytest.raises(DataFormatError, match="mismatch"):
            parse_idx(ip, lp2)

    def test_error_cases_are_distinct(self, tmp_path):
        ds = make_dataset()
        ip, lp = tmp_path / "img.idx", tmp_path / "lab.idx"
        write_idx(ds, ip, lp)
        messages = set()
        bad_magic = bytearray(ip.read_bytes())
        bad_magic[3] = 0x09
        (tmp_path / "m.idx").write_bytes(bytes(bad_magic))
        with pytest.raises(DataFormatError) as e1:
            parse_idx(tmp_path / "m.idx", lp)
        messages.add(str(e1.value))
        (tmp_path / "t.idx").write_bytes(ip.read_bytes()[:-50])
        with pytest.raises(DataFormatError) as e2:
            parse_idx(tmp_path / "t.idx", lp)
        messages.add(str(e2.value))
        assert len(messages) == 2


class TestAmat:
    def test_three_row_fixture(self, tmp_path):
        rng = np.random.default_rng(1)
        pixels = rng.uniform(0.0, 1.0, (3, 784))
        labels = np.array([7, 0, 3])
        path = tmp_path / "toy.amat"
        lines = []
        for row, lab in zip(pixels, labels):
            lines.append(" ".join(f"{v:.6f}" for v in row) + f" {float(lab):.6f}")
        path.write_text("\n".join(lines) + "\n")
        train, test = parse_amat(path, split_sizes=(2, 1))
        assert train.images.shape == (2, 1, 28, 28)
        assert test.images.shape == (1, 1, 28, 28)
        assert np.array_equal(train.labels, [7, 0])
        assert np.array_equal(test.labels, [3])
        assert np.allclose(train.images[0, 0].ravel(), pixels[0], atol=1e-6)

    def test_wrong_column_count(self, tmp_path):
        path = tmp_path / "short.amat"
        path.write_text(" ".join(["0.5"] * 784) + "\n")
        with pytest.raises(DataFormatError, match="column"):
            parse_amat(path, split_sizes=(1, 0))

    def test_non_numeric_token(self, tmp_path):
        path = tmp_path / "junk.amat"
        path.write_text(" ".join(["0.5"] * 784) + " abc\n")
        with pytest.raises(DataFormatError):
            parse_amat(path, split_sizes=(1, 0))

    def test_too_few_rows_for_split(self, tmp_path):
        path = tmp_path / "tiny.amat"
        row = " ".join(["0.5"] * 784) + " 1.0\n"
        path.write_text(row * 3)
        with pytest.raises(DataFormatError):
            parse_amat(path, split_sizes=(3, 1))

    def test_roundtrip_with_writer(self, tmp_path):
        ds = make_dataset(4)
        path = tmp_path / "rt.amat"
        write_amat(ds, path)
        train, test = parse_amat(path, split_sizes=(4, 0))
        assert np.allclose(train.images, ds.images, atol=1e-6)
        assert np.array_equal(train.labels, ds.labels)

    def test_transpose_flag(self, tmp_path):
        ds = make_dataset(2)
        path = tmp_path / "tr.amat"
        write_amat(ds, path)
        plain, _ = parse_amat(path, split_sizes=(2, 0))
        flipped, _ = parse_amat(path, split_sizes=(2, 0), transpose=True)
        assert np.allclose(flipped.images[0, 0], plain.images[0, 0].T, atol=1e-12)


class TestStandardize:
    def test_train_mean_zero(self):
        ds = make_dataset(8)
        out = standardize(ds)
        assert abs(out.images.mean()) < 1e-10
        assert abs(out.images.std() - 1.0) < 1e-10

    def test_test_split_uses_train_constants(self):
        train, test = make_dataset(8, seed=0), make_dataset(4, seed=1)
        strain, stest = standardize_pair(train, test)
        assert np.allclose(stest.images, (test.images - strain.mean) / strain.std,
                           rtol=0, atol=1e-15)
        assert (stest.mean, stest.std) == (strain.mean, strain.std)

    def test_constant_images_rejected(self):
        ds = Dataset(np.full((3, 1, 4, 4), 0.5), np.zeros(3, dtype=np.int64))
        with pytest.raises(ConfigError, match="std"):
            standardize(ds)


class TestSynthBlobs:
    def test_classes_use_distinct_quadrants(self):
        ds = synth_blobs(10, 2, seed=0, side=12)
        img0 = ds.images[ds.labels == 0].mean(axis=0)[0]
        img1 = ds.images[ds.labels == 1].mean(axis=0)[0]
        assert img0[:6, :6].mean() > img0[:6, 6:].mean() + 0.2
        assert img1[:6, 6:].mean() > img1[:6, :6].mean() + 0.2

    def test_same_seed_identical(self):
        a = synth_blobs(6, 3, seed=9, side=12)
        b = synth_blobs(6, 3, seed=9, side=12)
        assert np.array_equal(a.images, b.images)
        assert np.array_equal(a.labels, b.labels)

    def test_pixels_in_unit_range(self):
        ds = synth_blobs(20, 4, seed=2, side=16)
        assert ds.images.min() >= 0.0 and ds.images.max() <= 1.0

    def test_validation(self):
        with pytest.raises(ConfigError):
            synth_blobs(1, 2, seed=0)
        with pytest.raises(ConfigError):
            synth_blobs(20, 17, seed=0)


class TestDataset:
    def test_label_range_validated(self):
        with pytest.raises(ConfigError):
            Dataset(np.zeros((2, 1, 4, 4)), np.array([0, -1]))

    def test_count_mismatch_rejected(self):
        with pytest.raises(ConfigError):
            Dataset(np.zeros((2, 1, 4, 4)), np.array([0, 1, 2]))

    def test_subset_limits(self):
        ds = make_dataset(8)
        sub = ds.subset(3)
        assert len(sub) == 3
        assert np.array_equal(sub.images, ds.images[:3])
        assert len(ds.subset(0)) == 8  # 0 means no limit
        assert len(ds.subset(100)) == 8
