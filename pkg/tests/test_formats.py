import io
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from poseflow.errors import ContractError, FormatError
from poseflow.formats import read_ppm, read_tensor, write_ppm, write_tensor
from poseflow.types import TensorF32


def roundtrip_tensor(t):
    buf = io.BytesIO()
    n = write_tensor(t, buf)
    assert n == len(buf.getvalue())
    buf.seek(0)
    return read_tensor(buf)


class TestTensorFormat:
    def test_header_arithmetic_2x2(self):
        t = TensorF32.from_array(np.array([[0.0, 1.0], [2.0, 3.0]]))
        buf = io.BytesIO()
        assert write_tensor(t, buf) == 4 + 1 + 8 + 16 == 29
        raw = buf.getvalue()
        assert raw[:4] == b"HPT1"
        assert raw[4] == 2
        assert struct.unpack("<2I", raw[5:13]) == (2, 2)
        assert np.frombuffer(raw[13:], dtype="<f4").tolist() == [0.0, 1.0, 2.0, 3.0]

    def test_header_arithmetic_scalar_vector(self):
        t = TensorF32.from_array(np.array([0.0]))
        buf = io.BytesIO()
        assert write_tensor(t, buf) == 4 + 1 + 4 + 4

    def test_roundtrip_3x4x5(self):
        rng = np.random.default_rng(0)
        t = TensorF32.from_array(rng.standard_normal((3, 4, 5)))
        back = roundtrip_tensor(t)
        assert back.dims == (3, 4, 5)
        assert np.array_equal(back.array, t.array)

    def test_roundtrip_inverse_of_example(self):
        t = TensorF32.from_array(np.array([[0.0, 1.0], [2.0, 3.0]]))
        back = roundtrip_tensor(t)
        assert back.dims == (2, 2)
        assert back.array.flatten().tolist() == [0.0, 1.0, 2.0, 3.0]

    def test_bad_magic(self):
        with pytest.raises(FormatError, match="magic"):
            read_tensor(io.BytesIO(b"XXXX" + b"\x00" * 20))

    def test_truncated_payload(self):
        t = TensorF32.from_array(np.zeros((2, 2)))
        buf = io.BytesIO()
        write_tensor(t, buf)
        cut = buf.getvalue()[:-4]
        with pytest.raises(FormatError, match="truncated"):
            read_tensor(io.BytesIO(cut))

    def test_dim_product_overflow(self):
        header = b"HPT1" + struct.pack("<B", 3) + struct.pack("<3I", *([0xFFFFFFFF] * 3))
        with pytest.raises(FormatError, match="overflow"):
            read_tensor(io.BytesIO(header))

    def test_nonfinite_rejected_on_write(self):
        t = TensorF32.from_array(np.array([np.nan]))
        with pytest.raises(ContractError):
            write_tensor(t, io.BytesIO())

    @settings(max_examples=60, deadline=None)
    @given(
        dims=st.lists(st.integers(1, 5), min_size=1, max_size=4),
        seed=st.integers(0, 2**32 - 1),
    )
    def test_roundtrip_property(self, dims, seed):
        rng = np.random.default_rng(seed)
        t = TensorF32.from_array(rng.standard_normal(tuple(dims)))
        back = roundtrip_tensor(t)
        assert back.dims == t.dims
        assert np.array_equal(back.array, t.array)


class TestPpmFormat:
    def test_one_red_pixel(self):
        buf = io.BytesIO(b"P6\n1 1\n255\n\xff\x00\x00")
        img = read_ppm(buf)
        assert img.dims == (1, 1, 3)
        assert img.array.flatten().tolist() == [1.0, 0.0, 0.0]

    def test_two_by_two_black(self):
        buf = io.BytesIO(b"P6\n2 2\n255\n" + b"\x00" * 12)
        img = read_ppm(buf)
        assert img.dims == (2, 2, 3)
        assert (img.array == 0).all()

    def test_write_white_pixel_exact_bytes(self):
        buf = io.BytesIO()
        write_ppm(TensorF32.from_array(np.ones((1, 1, 3))), buf)
        assert buf.getvalue() == b"P6\n1 1\n255\n\xff\xff\xff"

    def test_write_black_payload(self):
        buf = io.BytesIO()
        write_ppm(TensorF32.from_array(np.zeros((1, 1, 3))), buf)
        assert buf.getvalue().endswith(b"\x00\x00\x00")

    def test_half_rounds_away_from_zero(self):
        buf = io.BytesIO()
        write_ppm(TensorF32.from_array(np.full((1, 1, 3), 0.5)), buf)
        assert buf.getvalue()[-3:] == bytes([128, 128, 128])

    def test_roundtrip_within_quantization(self):
        rng = np.random.default_rng(1)
        img = TensorF32.from_array(rng.random((8, 8, 3)))
        buf = io.BytesIO()
        write_ppm(img, buf)
        buf.seek(0)
        back = read_ppm(buf)
        assert np.abs(back.array - img.array).max() <= 1.0 / 255.0 + 1e-7

    def test_wrong_rank_raises_contract_error(self):
        with pytest.raises(ContractError):
            write_ppm(TensorF32.from_array(np.zeros((4, 4))), io.BytesIO())

    def test_bad_magic(self):
        with pytest.raises(FormatError, match="magic"):
            read_ppm(io.BytesIO(b"P5\n1 1\n255\n\x00"))

    def test_wrong_maxval(self):
        with pytest.raises(FormatError, match="maxval"):
            read_ppm(io.BytesIO(b"P6\n1 1\n511\n\x00\x00\x00"))

    def test_short_payload(self):
        with pytest.raises(FormatError, match="truncated"):
            read_ppm(io.BytesIO(b"P6\n2 1\n255\n\x00\x00\x00"))

    def test_header_comments_allowed(self):
        buf = io.BytesIO(b"P6\n# a comment\n1 1\n255\n\x10\x20\x30")
        img = read_ppm(buf)
        assert img.dims == (1, 1, 3)

    @settings(max_examples=40, deadline=None)
    @given(
        h=st.integers(1, 6), w=st.integers(1, 6), seed=st.integers(0, 2**32 - 1)
    )
    def test_roundtrip_property(self, h, w, seed):
        rng = np.random.default_rng(seed)
        img = TensorF32.from_array(rng.random((h, w, 3)))
        buf = io.BytesIO()
        write_ppm(img, buf)
        buf.seek(0)
        back = read_ppm(buf)
        assert back.dims == img.dims
        assert np.abs(back.array - img.array).max() <= 1.0 / 255.0 + 1e-7
