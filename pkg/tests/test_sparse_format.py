import math
import struct

import numpy as np
import pytest
from scipy.signal import correlate2d

from nmsparse.errors import DimensionError, PatternViolationError
from nmsparse.masks import SparsePattern, build_masks
from nmsparse.sparse_format import (
    CompressedNM,
    bench,
    compress,
    conv2d_sparse,
    decompress,
    spmm,
    verify,
)
from nmsparse.tensors import WeightTensor4, block_layout_inverse, rearrange_to_blocks


def masked_tensor(rng, dims, pattern, delta=1.0):
    """Random tensor folded to the pattern (binary fold keeps magnitudes exact)."""
    w = WeightTensor4(rng.uniform(-1.0, 1.0, size=dims))
    hard, _ = build_masks(w, pattern, 0.1, delta=delta)
    bm = rearrange_to_blocks(w, pattern.m)
    vals = block_layout_inverse(bm.values * hard.bits, dims)
    return WeightTensor4(vals)


def dense_conv_oracle(w, x, stride, padding):
    """Plain correlation per (out, in) channel pair via scipy."""
    c_out, c_in = w.shape[0], w.shape[1]
    xp = np.pad(x, ((0, 0), (padding, padding), (padding, padding)))
    outs = []
    for o in range(c_out):
        acc = sum(correlate2d(xp[c], w[o, c], mode="valid") for c in range(c_in))
        outs.append(acc[::stride, ::stride])
    return np.stack(outs)


# ------------------------------------------------------------ compression

def test_compress_hand_example():
    w = WeightTensor4.from_flat((1, 4, 1, 1), [0.0, 1.5, 0.0, -2.0])
    c = compress(w, SparsePattern(2, 4))
    np.testing.assert_array_equal(c.values, [[1.5, -2.0]])
    np.testing.assert_array_equal(c.indices, [[1, 3]])


def test_compress_pads_underfull_blocks():
    w = WeightTensor4.from_flat((1, 4, 1, 1), [0.0, 0.0, 0.0, 0.0])
    c = compress(w, SparsePattern(1, 4))
    np.testing.assert_array_equal(c.values, [[0.0]])
    np.testing.assert_array_equal(c.indices, [[0]])
    w2 = WeightTensor4.from_flat((1, 4, 1, 1), [0.0, 0.7, 0.0, 0.0])
    c2 = compress(w2, SparsePattern(2, 4))
    np.testing.assert_array_equal(c2.indices, [[0, 1]])
    np.testing.assert_array_equal(c2.values, np.array([[0.0, 0.7]], dtype=np.float32))


def test_compress_rejects_violations_naming_first_block():
    w = WeightTensor4.from_flat((2, 4, 1, 1), [1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0])
    with pytest.raises(PatternViolationError) as exc:
        compress(w, SparsePattern(2, 4))
    assert exc.value.block == 1


def test_round_trip_on_random_masked_tensors():
    rng = np.random.default_rng(0)
    for _ in range(300):
        m = int(rng.choice([4, 8, 16]))
        n = int(rng.integers(1, m))
        dims = (int(rng.integers(1, 5)), m * int(rng.integers(1, 3)), int(rng.integers(1, 3)), int(rng.integers(1, 3)))
        w = masked_tensor(rng, dims, SparsePattern(n, m))
        back = decompress(compress(w, SparsePattern(n, m)))
        np.testing.assert_array_equal(
            back.values.astype(np.float32), w.values.astype(np.float32)
        )


def test_metadata_bits_formula():
    for n, m in ((1, 4), (2, 4), (2, 8), (1, 16)):
        rng = np.random.default_rng(n * m)
        w = masked_tensor(rng, (4, m * 2, 3, 3), SparsePattern(n, m))
        c = compress(w, SparsePattern(n, m))
        assert c.metadata_bits == c.g * n * math.ceil(math.log2(m))


def test_serialized_layout_and_size():
    rng = np.random.default_rng(1)
    pattern = SparsePattern(2, 8)
    w = masked_tensor(rng, (3, 16, 2, 2), pattern)
    c = compress(w, pattern)
    blob = c.to_bytes()
    assert blob[:4] == b"NMSP"
    version, n, m = struct.unpack_from("<HBB", blob, 4)
    assert (version, n, m) == (1, 2, 8)
    dims = struct.unpack_from("<4I", blob, 8)
    assert dims == (3, 16, 2, 2)
    (g,) = struct.unpack_from("<Q", blob, 24)
    assert g == c.g
    bits = math.ceil(math.log2(8))
    per_block = 4 * 2 + (2 * bits + 7) // 8
    assert len(blob) == 32 + c.g * per_block
    back = CompressedNM.from_bytes(blob)
    np.testing.assert_array_equal(back.values, c.values)
    np.testing.assert_array_equal(back.indices, c.indices)
    assert back.origin_dims == c.origin_dims


def test_from_bytes_rejects_garbage():
    with pytest.raises(ValueError):
        CompressedNM.from_bytes(b"JUNKJUNKJUNK")


# ------------------------------------------------------------------ kernels

def test_spmm_identity_gather():
    # one 1.0 per block row at a known column acts as a row gather
    pattern = SparsePattern(1, 4)
    vals = np.zeros((4, 4, 1, 1))
    for r in range(4):
        vals[r, (r * 2 + 1) % 4, 0, 0] = 1.0
    c = compress(WeightTensor4(vals), pattern)
    x = np.random.default_rng(2).normal(size=(4, 7))
    out = spmm(c, x)
    for r in range(4):
        np.testing.assert_array_equal(out[r], x[(r * 2 + 1) % 4])


def test_spmm_zero_tensor():
    pattern = SparsePattern(2, 4)
    c = compress(WeightTensor4(np.zeros((3, 8, 1, 1))), pattern)
    x = np.ones((8, 5))
    np.testing.assert_array_equal(spmm(c, x), np.zeros((3, 5)))


def test_spmm_matches_dense_gemm():
    rng = np.random.default_rng(3)
    pattern = SparsePattern(2, 4)
    w = masked_tensor(rng, (64, 64, 1, 1), pattern)
    c = compress(w, pattern)
    x = rng.uniform(-1.0, 1.0, size=(64, 32))
    dense = decompress(c).values.reshape(64, 64)
    assert np.abs(spmm(c, x) - dense @ x).max() <= 1e-5


def test_spmm_vector_input():
    rng = np.random.default_rng(4)
    pattern = SparsePattern(1, 4)
    w = masked_tensor(rng, (8, 8, 1, 1), pattern)
    c = compress(w, pattern)
    x = rng.normal(size=8)
    out = spmm(c, x)
    assert out.shape == (8,)
    dense = decompress(c).values.reshape(8, 8)
    np.testing.assert_allclose(out, dense @ x, atol=1e-12)


def test_spmm_dimension_mismatch():
    rng = np.random.default_rng(5)
    c = compress(masked_tensor(rng, (4, 8, 1, 1), SparsePattern(2, 4)), SparsePattern(2, 4))
    with pytest.raises(DimensionError):
        spmm(c, np.ones((9, 3)))


def test_spmm_identical_across_worker_counts(monkeypatch):
    rng = np.random.default_rng(6)
    pattern = SparsePattern(2, 8)
    w = masked_tensor(rng, (32, 32, 3, 3), pattern)
    c = compress(w, pattern)
    x = rng.normal(size=(32 * 9, 16))
    results = []
    for threads in ("1", "3", "8"):
        monkeypatch.setenv("NMSPARSE_THREADS", threads)
        results.append(spmm(c, x))
    np.testing.assert_array_equal(results[0], results[1])
    np.testing.assert_array_equal(results[0], results[2])


def test_conv2d_sparse_matches_dense_conv():
    rng = np.random.default_rng(7)
    pattern = SparsePattern(2, 4)
    w = masked_tensor(rng, (8, 8, 3, 3), pattern)
    c = compress(w, pattern)
    x = rng.uniform(-1.0, 1.0, size=(8, 10, 10))
    dense_w = decompress(c).values
    for stride, padding in ((1, 0), (1, 1), (2, 1)):
        got = conv2d_sparse(c, x, stride=stride, padding=padding)
        expected = dense_conv_oracle(dense_w, x, stride, padding)
        assert got.shape == expected.shape
        assert np.abs(got - expected).max() <= 1e-5


def test_conv2d_sparse_channel_mismatch():
    rng = np.random.default_rng(8)
    c = compress(masked_tensor(rng, (4, 8, 3, 3), SparsePattern(2, 4)), SparsePattern(2, 4))
    with pytest.raises(DimensionError):
        conv2d_sparse(c, np.zeros((7, 10, 10)))


# ------------------------------------------------------------------ verify

def test_verify_fully_masked_1_16():
    rng = np.random.default_rng(9)
    pattern = SparsePattern(1, 16)
    w = masked_tensor(rng, (4, 32, 3, 3), pattern)
    report = verify(w, pattern)
    assert report.violating_blocks == 0 and report.compliant
    assert report.sparsity == pytest.approx(15 / 16, abs=1e-9)


def test_verify_dense_tensor_flags_all_blocks():
    rng = np.random.default_rng(10)
    w = WeightTensor4(rng.uniform(0.5, 1.0, size=(2, 8, 1, 1)))  # no zeros at all
    report = verify(w, SparsePattern(2, 4))
    assert report.blocks == 4
    assert report.violating_blocks == 4
    assert not report.compliant


def test_verify_counts_match_popcount_oracle():
    rng = np.random.default_rng(11)
    pattern = SparsePattern(2, 4)
    for _ in range(50):
        vals = rng.normal(size=(4, 8, 1, 1))
        keep = rng.random(size=(4, 8, 1, 1)) < 0.5
        w = WeightTensor4(vals * keep)
        report = verify(w, pattern)
        bm = rearrange_to_blocks(w, 4)
        expected = sum(1 for row in bm.values if int(sum(x != 0 for x in row)) > 2)
        assert report.violating_blocks == expected


# ------------------------------------------------------------------- bench

def test_bench_reports_timings_and_flop_reduction():
    rng = np.random.default_rng(12)
    pattern = SparsePattern(2, 4)
    w = masked_tensor(rng, (32, 32, 1, 1), pattern)
    c = compress(w, pattern)
    x = rng.uniform(-1.0, 1.0, size=(32, 16))
    report = bench(c, x, repetitions=2)
    assert report.sparse_seconds > 0 and report.dense_seconds > 0
    assert report.flop_reduction == pytest.approx(4 / 2)
    assert report.speedup > 0
