import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import DATA
from feminpaint.codec import (BadMagicError, DuplicatePositionError, PayloadError,
                              TruncatedPayloadError, decode, encode, payload_size, quantise,
                              read_payload, write_payload)
from feminpaint.femsolve import inpaint
from feminpaint.image import Image, load_image
from feminpaint.spatial import DensifyConfig, MaskSet, densify
from feminpaint.tonal import ReconstructionOperator, tonal_optimise


def corners(w, h):
    return np.array([0, w - 1, w * (h - 1), w * h - 1])


def test_minimal_payload_is_45_bytes():
    buf = encode(MaskSet([5], [[100.0]]), corners(4, 4), 4, 4)
    assert len(buf) == 45 == payload_size(1, 4, 1)
    assert buf[:4] == b"FEMI"
    assert struct.unpack_from("<HHIIII", buf, 4) == (1, 1, 4, 4, 1, 4)


def test_round_trip_quantises_values():
    mask = MaskSet([9, 2, 7], [[10.4, 1, 2], [300, 3, 4], [-3, 127.5, 5]])
    p = decode(encode(mask, [0, 3, 12, 15], 4, 4))
    assert p.mask.positions.tolist() == [2, 7, 9]
    assert p.mask.values.tolist() == [[255, 3, 4], [0, 128, 5], [10, 1, 2]]
    assert p.unknowns.tolist() == [0, 3, 12, 15]
    assert (p.width, p.height, p.channels) == (4, 4, 3)


def test_input_order_does_not_matter():
    a = encode(MaskSet([9, 2, 7], [[1.0], [2.0], [3.0]]), [15, 0, 12, 3], 4, 4)
    b = encode(MaskSet([2, 7, 9], [[2.0], [3.0], [1.0]]), [0, 3, 12, 15], 4, 4)
    assert a == b


def test_quantise():
    assert quantise([-1, 0.49, 0.5, 254.5, 999]).tolist() == [0, 0, 1, 255, 255]


def test_bad_magic():
    buf = bytearray(encode(MaskSet([5], [[1.0]]), corners(4, 4), 4, 4))
    buf[0:4] = b"XEMI"
    with pytest.raises(BadMagicError):
        decode(bytes(buf))


def test_truncation():
    buf = encode(MaskSet([5, 6], [[1.0], [2.0]]), corners(4, 4), 4, 4)
    with pytest.raises(TruncatedPayloadError):
        decode(buf[:-1])
    with pytest.raises(TruncatedPayloadError):
        decode(buf[:10])


def test_trailing_bytes_and_version():
    buf = encode(MaskSet([5], [[1.0]]), corners(4, 4), 4, 4)
    with pytest.raises(PayloadError):
        decode(buf + b"\x00")
    bad = bytearray(buf)
    bad[4] = 9
    with pytest.raises(PayloadError):
        decode(bytes(bad))


def test_duplicates_rejected():
    with pytest.raises(DuplicatePositionError):
        encode(MaskSet([5], [[1.0]]), [0, 3, 12, 15, 5], 4, 4)
    buf = bytearray(encode(MaskSet([5], [[1.0]]), corners(4, 4), 4, 4))
    struct.pack_into("<I", buf, 24, 0)  # mask index collides with a corner
    with pytest.raises(DuplicatePositionError):
        decode(bytes(buf))


def test_counts_and_range_checked():
    with pytest.raises(PayloadError):
        encode(MaskSet(np.arange(10), np.zeros((10, 1))), np.arange(10, 20), 4, 4)
    with pytest.raises(PayloadError):
        encode(MaskSet([16], [[1.0]]), corners(4, 4), 4, 4)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 30), st.integers(2, 30), st.sampled_from([1, 3]), st.data())
def test_round_trip_property(w, h, c, data):
    npix = w * h
    k = data.draw(st.integers(1, min(npix, 40)))
    pix = data.draw(st.permutations(range(npix)))[:k]
    m = data.draw(st.integers(1, k))
    vals = data.draw(st.lists(st.integers(0, 255), min_size=m * c, max_size=m * c))
    mask = MaskSet(pix[:m], np.reshape(vals, (m, c)).astype(float))
    buf = encode(mask, pix[m:], w, h)
    assert len(buf) == payload_size(m, k - m, c)
    p = decode(buf)
    order = np.argsort(pix[:m])
    assert p.mask.positions.tolist() == sorted(pix[:m])
    assert np.array_equal(p.mask.values, mask.values[order])
    assert p.unknowns.tolist() == sorted(pix[m:])
    assert encode(p.mask, p.unknowns, w, h) == buf


@pytest.fixture(scope="module")
def pipeline():
    f = Image.from_array(load_image(DATA / "camera256.pgm").to_array()[:64, :80])
    res = densify(f, DensifyConfig(m=200, n=10, seed=5))
    opr = ReconstructionOperator(res.mesh, f.width, f.height)
    tres = tonal_optimise(opr, f)
    return f, res, opr, tres


def test_decoder_mesh_equals_encoder_mesh(pipeline, tmp_path):
    f, res, _, tres = pipeline
    path = tmp_path / "p.femi"
    write_payload(path, MaskSet(res.mask.positions, tres.g_opt), res.unknowns, f.width, f.height)
    mesh = read_payload(path).mesh()
    assert np.array_equal(mesh.triangles, res.mesh.triangles)
    assert np.array_equal(mesh.vertices.positions, res.mesh.vertices.positions)
    assert np.array_equal(mesh.vertices.is_mask, res.mesh.vertices.is_mask)


def test_end_to_end_reconstruction(pipeline):
    f, res, opr, tres = pipeline
    buf = encode(MaskSet(res.mask.positions, tres.g_opt), res.unknowns, f.width, f.height)
    p = decode(buf)
    dec = inpaint(p.mesh(), p.mask.values, f.width, f.height).image.data
    enc = opr.apply(tres.g_opt[:, 0])
    # quantisation moves each value by at most 0.5 and inpainting is a convex average
    assert np.abs(dec - enc).max() <= 0.5 + 1e-4
    enc_q = opr.apply(quantise(tres.g_opt[:, 0]).astype(float))
    assert np.abs(dec - enc_q).max() <= 1e-4


def test_fixed_seed_payload_bytes_identical():
    f = Image.from_array(load_image(DATA / "camera256.pgm").to_array()[:40, :40])
    out = []
    for _ in range(2):
        res = densify(f, DensifyConfig(m=60, n=6, seed=11))
        tres = tonal_optimise(ReconstructionOperator(res.mesh, 40, 40), f)
        out.append(encode(MaskSet(res.mask.positions, tres.g_opt), res.unknowns, 40, 40))
    assert out[0] == out[1]
