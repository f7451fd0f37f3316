"""Embedding store wire format and view-group conventions.

A store is a single binary file holding one N x D float32 matrix plus a
human-readable JSON sidecar (the manifest). Layout of the binary file:

    offset  size  field
    0       4     magic, ASCII "LPCE"
    4       2     version, u16 little-endian (currently 1)
    6       1     dtype code, u8 (1 = float32 little-endian)
    7       1     flags, u8 (bit 0: rows are unit-norm)
    8       8     N, u64 little-endian
    16      8     D, u64 little-endian
    24      N*D*4 payload, float32 little-endian, row-major

The sidecar lives next to the store as ``<basename>.manifest.json``.
Stores inside a view-group directory share a single ``group.manifest.json``
instead. A view group is a directory of aligned stores for the same samples:
``weak.lpce`` plus ``strong_0.lpce`` ... ``strong_{K-1}.lpce``.
"""

from __future__ import annotations

import json
import re
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"LPCE"
VERSION = 1
DTYPE_F32 = 1
FLAG_UNIT_NORM = 0x01
HEADER = struct.Struct("<4sHBBQQ")

UNIT_NORM_TOL = 1e-4


class StoreError(ValueError):
    """Raised for malformed store files or inconsistent manifests."""


@dataclass
class Manifest:
    """Sidecar metadata for one store (or one view group).

    ``labels`` uses -1 for unknown; known entries must index ``class_names``.
    ``extra`` preserves fields this library does not interpret so that
    read(write(m)) is an identity.
    """

    class_names: list[str] = field(default_factory=list)
    labels: list[int] | None = None
    view_group: str | None = None
    source: str = ""
    prompt_count: int | None = None
    probe: dict | None = None
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        doc: dict = {"class_names": self.class_names, "source": self.source}
        if self.labels is not None:
            doc["labels"] = self.labels
        if self.view_group is not None:
            doc["view_group"] = self.view_group
        if self.prompt_count is not None:
            doc["prompt_count"] = self.prompt_count
        if self.probe is not None:
            doc["probe"] = self.probe
        doc.update(self.extra)
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Manifest":
        doc = json.loads(text)
        known = {"class_names", "labels", "view_group", "source", "prompt_count", "probe"}
        return cls(
            class_names=list(doc.get("class_names", [])),
            labels=list(doc["labels"]) if doc.get("labels") is not None else None,
            view_group=doc.get("view_group"),
            source=doc.get("source", ""),
            prompt_count=doc.get("prompt_count"),
            probe=doc.get("probe"),
            extra={k: v for k, v in doc.items() if k not in known},
        )

    def validate(self, n_rows: int) -> None:
        if self.labels is not None:
            if len(self.labels) != n_rows:
                raise StoreError(
                    f"manifest labels length {len(self.labels)} != N={n_rows}"
                )
            c = len(self.class_names)
            for lab in self.labels:
                if lab < -1 or (c > 0 and lab >= c) or (c == 0 and lab >= 0):
                    raise StoreError(f"manifest label {lab} outside [-1, C-1]")


@dataclass
class ViewGroup:
    """A weak store plus K aligned strong stores (same samples, same order)."""

    weak: np.ndarray
    strong: list[np.ndarray]
    manifest: Manifest

    @property
    def n_views(self) -> int:
        return len(self.strong)


@dataclass
class ValidationReport:
    valid: bool
    n_views: int
    n_rows: int
    dim: int
    unit_norm_flags: list[bool]
    problems: list[str]


def manifest_path(store_path: str | Path) -> Path:
    p = Path(store_path)
    base = p.name[: -len(".lpce")] if p.name.endswith(".lpce") else p.name
    return p.with_name(base + ".manifest.json")


def _rows_unit_norm(matrix: np.ndarray) -> bool:
    if matrix.size == 0:
        return False
    norms = np.linalg.norm(matrix.astype(np.float64), axis=1)
    return bool(np.all(np.abs(norms - 1.0) <= UNIT_NORM_TOL))


def write_store(
    matrix: np.ndarray,
    manifest: Manifest | None,
    path: str | Path,
    *,
    write_manifest: bool = True,
) -> None:
    """Serialize a 2-D float matrix to ``path`` (plus manifest sidecar).

    The unit-norm flag is recorded automatically from the payload; it is
    informative, not enforced on read. Rejects non-finite payloads.
    """
    m = np.asarray(matrix)
    if m.ndim != 2:
        raise StoreError(f"expected 2-D matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise StoreError("non-finite payload")
    m32 = np.ascontiguousarray(m, dtype="<f4")
    n, d = m32.shape
    manifest = manifest if manifest is not None else Manifest()
    manifest.validate(n)

    flags = FLAG_UNIT_NORM if _rows_unit_norm(m32) else 0
    header = HEADER.pack(MAGIC, VERSION, DTYPE_F32, flags, n, d)
    path = Path(path)
    with open(path, "wb") as f:
        f.write(header)
        f.write(m32.tobytes())
    if write_manifest:
        manifest_path(path).write_text(manifest.to_json())


def read_header(path: str | Path) -> tuple[int, int, int]:
    """Validate the header only; returns (N, D, flags)."""
    path = Path(path)
    with open(path, "rb") as f:
        raw = f.read(HEADER.size)
    if len(raw) < HEADER.size:
        raise StoreError("not an embedding store (file shorter than header)")
    magic, version, dtype, flags, n, d = HEADER.unpack(raw)
    if magic != MAGIC:
        raise StoreError("not an embedding store")
    if version != VERSION:
        raise StoreError(f"unsupported version {version}")
    if dtype != DTYPE_F32:
        raise StoreError(f"unsupported dtype code {dtype}")
    expected = HEADER.size + n * d * 4
    actual = path.stat().st_size
    if actual != expected:
        raise StoreError(
            f"truncated payload (header claims {n}x{d}, file holds "
            f"{(actual - HEADER.size) // 4} values)"
        )
    return n, d, flags


def read_store(path: str | Path) -> tuple[np.ndarray, Manifest]:
    """Read a store back as (float32 matrix, manifest).

    The header is fully validated before any payload bytes are touched.
    Falls back to the directory's ``group.manifest.json`` when the store has
    no sidecar of its own (the view-group convention).
    """
    path = Path(path)
    if not path.exists():
        raise StoreError(f"no such store: {path}")
    n, d, _flags = read_header(path)
    with open(path, "rb") as f:
        f.seek(HEADER.size)
        payload = f.read(n * d * 4)
    matrix = np.frombuffer(payload, dtype="<f4").reshape(n, d).copy()

    mpath = manifest_path(path)
    if not mpath.exists():
        mpath = path.parent / "group.manifest.json"
    manifest = Manifest.from_json(mpath.read_text()) if mpath.exists() else Manifest()
    return matrix, manifest


def store_is_unit_norm(path: str | Path) -> bool:
    return bool(read_header(path)[2] & FLAG_UNIT_NORM)


def write_view_group(
    weak: np.ndarray,
    strong: list[np.ndarray],
    manifest: Manifest,
    directory: str | Path,
) -> None:
    """Write ``weak.lpce`` + ``strong_k.lpce`` sharing one group manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for mat in strong:
        if mat.shape != weak.shape:
            raise StoreError(
                f"view shape {mat.shape} does not match weak {weak.shape}"
            )
    write_store(weak, manifest, directory / "weak.lpce", write_manifest=False)
    for k, mat in enumerate(strong):
        write_store(mat, manifest, directory / f"strong_{k}.lpce", write_manifest=False)
    (directory / "group.manifest.json").write_text(manifest.to_json())


def read_view_group(directory: str | Path) -> ViewGroup:
    directory = Path(directory)
    report = validate_view_group(directory)
    if not report.valid:
        raise StoreError("invalid view group: " + "; ".join(report.problems))
    weak, manifest = read_store(directory / "weak.lpce")
    strong = [
        read_store(directory / f"strong_{k}.lpce")[0] for k in range(report.n_views)
    ]
    return ViewGroup(weak=weak, strong=strong, manifest=manifest)


def _strong_indices(directory: Path) -> list[int]:
    idx = []
    for p in directory.glob("strong_*.lpce"):
        m = re.fullmatch(r"strong_(\d+)\.lpce", p.name)
        if m:
            idx.append(int(m.group(1)))
    return sorted(idx)


def validate_view_group(directory: str | Path) -> ValidationReport:
    """Check a view-group directory for alignment; never raises on content.

    A group is valid iff the weak store exists, strong stores are numbered
    0..K-1 without gaps, and every member shares the weak store's (N, D).
    """
    directory = Path(directory)
    problems: list[str] = []
    weak_path = directory / "weak.lpce"
    if not weak_path.exists():
        return ValidationReport(False, 0, 0, 0, [], ["missing weak store"])

    try:
        n, d, flags = read_header(weak_path)
    except StoreError as e:
        return ValidationReport(False, 0, 0, 0, [], [f"weak store: {e}"])
    norm_flags = [bool(flags & FLAG_UNIT_NORM)]

    indices = _strong_indices(directory)
    if indices != list(range(len(indices))):
        problems.append(f"strong view indices not contiguous: {indices}")
    for k in indices:
        try:
            nk, dk, fk = read_header(directory / f"strong_{k}.lpce")
        except StoreError as e:
            problems.append(f"strong_{k}: {e}")
            continue
        norm_flags.append(bool(fk & FLAG_UNIT_NORM))
        if dk != d:
            problems.append(f"strong_{k}: dimension mismatch (D={dk}, weak D={d})")
        if nk != n:
            problems.append(f"strong_{k}: row count mismatch (N={nk}, weak N={n})")

    gm = directory / "group.manifest.json"
    if gm.exists():
        try:
            Manifest.from_json(gm.read_text()).validate(n)
        except (StoreError, json.JSONDecodeError) as e:
            problems.append(f"group manifest: {e}")

    return ValidationReport(
        valid=not problems,
        n_views=len(indices),
        n_rows=n,
        dim=d,
        unit_norm_flags=norm_flags,
        problems=problems,
    )


__all__ = [
    "FLAG_UNIT_NORM",
    "Manifest",
    "StoreError",
    "ValidationReport",
    "ViewGroup",
    "manifest_path",
    "read_header",
    "read_store",
    "read_view_group",
    "store_is_unit_norm",
    "validate_view_group",
    "write_store",
    "write_view_group",
]
