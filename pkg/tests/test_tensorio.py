import hashlib
import struct

import numpy as np
import pytest

from lpclip.tensorio import (
    FLAG_UNIT_NORM,
    Manifest,
    StoreError,
    read_header,
    read_store,
    read_view_group,
    store_is_unit_norm,
    validate_view_group,
    write_store,
    write_view_group,
)

# sha256 of the committed 4x4 fixture, computed once with the system
# sha256sum tool and the header verified by hand with od
FIXTURE_SHA256 = "b2078c35bae86ad9d214354a4891587da955e3362668dbafbabb714b903a836a"


def fixture_matrix():
    return (np.arange(16, dtype=np.float64).reshape(4, 4) - 5.5) / 3.25


def test_roundtrip_2x3_bitwise(tmp_path):
    m = np.array([[0.25, -1.5, 3.0], [1e-8, 2.0, -0.0]], dtype=np.float32)
    manifest = Manifest(class_names=["x", "y"], source="unit test")
    path = tmp_path / "m.lpce"
    write_store(m, manifest, path)
    back, mf = read_store(path)
    assert back.dtype == np.float32
    assert back.tobytes() == m.tobytes()
    assert mf == manifest


def test_roundtrip_random_shapes_bitwise(tmp_path):
    rng = np.random.default_rng(0)
    for n, d in [(1, 1), (7, 3), (13, 32)]:
        m = rng.normal(size=(n, d)).astype(np.float32)
        path = tmp_path / f"r{n}x{d}.lpce"
        write_store(m, None, path)
        back, _ = read_store(path)
        assert back.tobytes() == m.tobytes()


def test_nan_payload_rejected(tmp_path):
    m = np.ones((2, 2))
    m[0, 1] = np.nan
    with pytest.raises(StoreError, match="non-finite payload"):
        write_store(m, None, tmp_path / "bad.lpce")
    m[0, 1] = np.inf
    with pytest.raises(StoreError, match="non-finite payload"):
        write_store(m, None, tmp_path / "bad.lpce")


def test_fixture_checksum_pinned(tmp_path):
    path = tmp_path / "fixture.lpce"
    write_store(
        fixture_matrix(),
        Manifest(class_names=["a", "b"], labels=[0, 1, 1, 0], source="fixture"),
        path,
    )
    assert hashlib.sha256(path.read_bytes()).hexdigest() == FIXTURE_SHA256


def test_wrong_magic(tmp_path):
    path = tmp_path / "bad.lpce"
    path.write_bytes(b"NOPE" + b"\x00" * 84)
    with pytest.raises(StoreError, match="not an embedding store"):
        read_store(path)


def test_truncated_payload(tmp_path):
    path = tmp_path / "trunc.lpce"
    header = struct.pack("<4sHBBQQ", b"LPCE", 1, 1, 0, 10, 10)
    path.write_bytes(header + b"\x00" * (50 * 4))
    with pytest.raises(StoreError, match="truncated payload"):
        read_store(path)


def test_unsupported_version(tmp_path):
    path = tmp_path / "v9.lpce"
    header = struct.pack("<4sHBBQQ", b"LPCE", 9, 1, 0, 1, 1)
    path.write_bytes(header + b"\x00" * 4)
    with pytest.raises(StoreError, match="unsupported version"):
        read_store(path)


def test_unknown_dtype_code(tmp_path):
    path = tmp_path / "dt.lpce"
    header = struct.pack("<4sHBBQQ", b"LPCE", 1, 7, 0, 1, 1)
    path.write_bytes(header + b"\x00" * 4)
    with pytest.raises(StoreError, match="unsupported dtype"):
        read_store(path)


def test_header_rejected_before_payload(tmp_path):
    # header claims an enormous payload; the validation error must come from
    # the size check, not from an attempted allocation or read
    path = tmp_path / "huge.lpce"
    header = struct.pack("<4sHBBQQ", b"LPCE", 1, 1, 0, 2**40, 2**20)
    path.write_bytes(header)
    with pytest.raises(StoreError, match="truncated payload"):
        read_header(path)


def test_short_file(tmp_path):
    path = tmp_path / "short.lpce"
    path.write_bytes(b"LP")
    with pytest.raises(StoreError, match="not an embedding store"):
        read_store(path)


def test_missing_file(tmp_path):
    with pytest.raises(StoreError, match="no such store"):
        read_store(tmp_path / "absent.lpce")


def test_unit_norm_flag(tmp_path):
    rng = np.random.default_rng(1)
    m = rng.normal(size=(5, 8))
    m /= np.linalg.norm(m, axis=1, keepdims=True)
    path = tmp_path / "unit.lpce"
    write_store(m, None, path)
    assert store_is_unit_norm(path)

    write_store(m * 2, None, path)
    assert not store_is_unit_norm(path)


def test_manifest_label_validation(tmp_path):
    m = np.zeros((3, 2))
    with pytest.raises(StoreError, match="labels length"):
        write_store(m, Manifest(class_names=["a"], labels=[0]), tmp_path / "x.lpce")
    with pytest.raises(StoreError, match="outside"):
        write_store(
            m, Manifest(class_names=["a"], labels=[0, 1, 0]), tmp_path / "x.lpce"
        )
    # -1 marks unknown and is always allowed
    write_store(m, Manifest(class_names=["a"], labels=[-1, 0, -1]), tmp_path / "x.lpce")


def test_manifest_extra_fields_roundtrip(tmp_path):
    manifest = Manifest(class_names=["a", "b"], source="s", extra={"note": "kept"})
    path = tmp_path / "e.lpce"
    write_store(np.zeros((1, 2)), manifest, path)
    _, back = read_store(path)
    assert back.extra == {"note": "kept"}
    assert back == manifest


def group_dir(tmp_path, n=100, d=64, k=2):
    rng = np.random.default_rng(3)
    weak = rng.normal(size=(n, d))
    strong = [rng.normal(size=(n, d)) for _ in range(k)]
    gdir = tmp_path / "group"
    write_view_group(weak, strong, Manifest(source="group test"), gdir)
    return gdir, weak, strong


def test_view_group_valid(tmp_path):
    gdir, weak, strong = group_dir(tmp_path, n=100, d=64, k=2)
    report = validate_view_group(gdir)
    assert report.valid
    assert report.n_views == 2
    assert report.n_rows == 100
    assert report.dim == 64
    back = read_view_group(gdir)
    assert np.array_equal(back.weak, weak.astype(np.float32))
    assert back.n_views == 2


def test_view_group_dimension_mismatch(tmp_path):
    gdir, _, _ = group_dir(tmp_path, d=64, k=2)
    write_store(np.zeros((100, 32)), None, gdir / "strong_1.lpce", write_manifest=False)
    report = validate_view_group(gdir)
    assert not report.valid
    assert any("dimension mismatch" in p for p in report.problems)


def test_view_group_row_mismatch(tmp_path):
    gdir, _, _ = group_dir(tmp_path, n=100, d=16, k=1)
    write_store(np.zeros((50, 16)), None, gdir / "strong_0.lpce", write_manifest=False)
    report = validate_view_group(gdir)
    assert not report.valid
    assert any("row count mismatch" in p for p in report.problems)


def test_view_group_missing_weak(tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    report = validate_view_group(empty)
    assert not report.valid
    assert report.problems == ["missing weak store"]


def test_view_group_gap_in_indices(tmp_path):
    gdir, _, _ = group_dir(tmp_path, k=1)
    (gdir / "strong_0.lpce").rename(gdir / "strong_1.lpce")
    report = validate_view_group(gdir)
    assert not report.valid
    assert any("not contiguous" in p for p in report.problems)


def test_view_group_accepts_iff_shapes_equal(tmp_path):
    # property: validity is exactly agreement of every member's (N, D)
    rng = np.random.default_rng(9)
    for n2, d2 in [(20, 8), (20, 9), (21, 8)]:
        gdir = tmp_path / f"g{n2}x{d2}"
        write_view_group(rng.normal(size=(20, 8)), [], Manifest(), gdir)
        write_store(rng.normal(size=(n2, d2)), None, gdir / "strong_0.lpce",
                    write_manifest=False)
        report = validate_view_group(gdir)
        assert report.valid == ((n2, d2) == (20, 8))


def test_write_view_group_rejects_mismatched_views(tmp_path):
    with pytest.raises(StoreError, match="does not match weak"):
        write_view_group(
            np.zeros((4, 4)), [np.zeros((4, 5))], Manifest(), tmp_path / "g"
        )


def test_flags_surface_in_report(tmp_path):
    n, d = 6, 5
    rng = np.random.default_rng(4)
    weak = rng.normal(size=(n, d))
    weak /= np.linalg.norm(weak, axis=1, keepdims=True)
    gdir = tmp_path / "g"
    write_view_group(weak, [rng.normal(size=(n, d))], Manifest(), gdir)
    report = validate_view_group(gdir)
    assert report.unit_norm_flags == [True, False]
    assert read_header(gdir / "weak.lpce")[2] & FLAG_UNIT_NORM
