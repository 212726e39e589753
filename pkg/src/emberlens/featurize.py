"""Fixed 2,381-dimensional feature vectorization of PE sample records.

The vector is organized into nine contiguous groups (see GROUP_LAYOUT).
Within-group slot assignment:

* ByteHistogram [0, 256) and ByteEntropyHistogram [256, 512): raw counts
  normalized to sum to 1 (all zeros when the counts are all zero).
* StringAnalysis [512, 616): num_strings, avg_length, printables, 96 printable
  character distribution slots (normalized by the printables count), entropy,
  paths, urls, registry, mz_count.
* GeneralFileInfo [616, 626): the ten general scalars in record order.
* HeaderAnalysis [626, 688): timestamp, then 10-bucket hashed slots for
  machine, COFF characteristics, subsystem, DLL characteristics and magic,
  then the eleven version/size scalars.
* SectionAnalysis [688, 943): five summary counts (sections, zero-size,
  empty-name, read-execute, writable), then 50-bucket hashed name->size,
  name->entropy, name->vsize pairs, the entry-section name, and the entry
  section's properties.
* ImportAnalysis [943, 2223): 256 buckets for lowercased library names
  (deduplicated), 1024 buckets for "library:api" tokens.
* ExportAnalysis [2223, 2351): 128 buckets for exported names.
* DataDirectories [2351, 2381): (size, virtual_address) pairs for the fifteen
  canonical directory names, in that fixed order.

Hashed fields use the hashing trick with signed accumulation: the bucket is
crc32(token) mod buckets and the sign comes from crc32 bit 31 (see
hash_token).  Bucket placement is this package's own stable convention; it is
not meant to be bit-compatible with other extractors.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .ingest import PESampleRecord

VECTOR_DIM = 2381


@dataclass(frozen=True)
class Group:
    name: str
    offset: int
    length: int

    @property
    def end(self) -> int:
        return self.offset + self.length


GROUP_LAYOUT: tuple[Group, ...] = (
    Group("ByteHistogram", 0, 256),
    Group("ByteEntropyHistogram", 256, 256),
    Group("StringAnalysis", 512, 104),
    Group("GeneralFileInfo", 616, 10),
    Group("HeaderAnalysis", 626, 62),
    Group("SectionAnalysis", 688, 255),
    Group("ImportAnalysis", 943, 1280),
    Group("ExportAnalysis", 2223, 128),
    Group("DataDirectories", 2351, 30),
)

# Canonical data-directory order (first 15 PE directories).
DATA_DIRECTORY_NAMES = (
    "EXPORT_TABLE",
    "IMPORT_TABLE",
    "RESOURCE_TABLE",
    "EXCEPTION_TABLE",
    "CERTIFICATE_TABLE",
    "BASE_RELOCATION_TABLE",
    "DEBUG",
    "ARCHITECTURE",
    "GLOBAL_PTR",
    "TLS_TABLE",
    "LOAD_CONFIG_TABLE",
    "BOUND_IMPORT",
    "IAT",
    "DELAY_IMPORT_DESCRIPTOR",
    "CLR_RUNTIME_HEADER",
)


def group_layout() -> tuple[Group, ...]:
    """The fixed nine-group layout covering [0, 2381)."""
    return GROUP_LAYOUT


def group_by_name(name: str) -> Group:
    for group in GROUP_LAYOUT:
        if group.name == name:
            return group
    raise KeyError(name)


def hash_token(token: str, buckets: int) -> tuple[int, int]:
    """Map a token to (bucket index, sign) with a fixed 32-bit hash.

    The hash is zlib.crc32 of the UTF-8 bytes; index = hash mod buckets and
    the sign is +1 when bit 31 of the hash is clear, -1 when set.  Stable
    across runs and platforms.
    """
    if buckets < 1:
        raise ValueError("buckets must be >= 1")
    h = zlib.crc32(token.encode("utf-8"))
    sign = -1 if h & 0x80000000 else 1
    return h % buckets, sign


@dataclass
class FeatureVector:
    sample_id: str
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (VECTOR_DIM,):
            raise ValueError(f"feature vector must have length {VECTOR_DIM}")


def _normalized(counts: Sequence[float]) -> np.ndarray:
    arr = np.asarray(counts, dtype=np.float64)
    total = arr.sum()
    return arr / total if total > 0 else np.zeros_like(arr)


def _add_hashed(vec: np.ndarray, base: int, buckets: int, tokens: Iterable[str], weight: float = 1.0) -> None:
    for token in tokens:
        idx, sign = hash_token(token, buckets)
        vec[base + idx] += sign * weight


def _add_hashed_pairs(vec: np.ndarray, base: int, buckets: int, pairs: Iterable[tuple[str, float]]) -> None:
    for token, value in pairs:
        idx, sign = hash_token(token, buckets)
        vec[base + idx] += sign * value


def vectorize(record: PESampleRecord) -> FeatureVector:
    """Convert a record into its 2,381-dimensional feature vector."""
    vec = np.zeros(VECTOR_DIM, dtype=np.float64)

    vec[0:256] = _normalized(record.byte_histogram)
    vec[256:512] = _normalized(record.byte_entropy_histogram)

    s = record.strings_info
    vec[512] = s.num_strings
    vec[513] = s.avg_length
    vec[514] = s.printables
    dist = np.zeros(96, dtype=np.float64)
    given = np.asarray(s.printable_dist[:96], dtype=np.float64)
    dist[: given.size] = given
    vec[515:611] = dist / s.printables if s.printables > 0 else dist
    vec[611] = s.entropy
    vec[612] = s.paths
    vec[613] = s.urls
    vec[614] = s.registry
    vec[615] = s.mz_count

    g = record.general_info
    vec[616:626] = [
        g.file_size,
        g.virtual_size,
        g.has_debug,
        g.exports_count,
        g.imports_count,
        g.has_relocations,
        g.has_resources,
        g.has_signature,
        g.has_tls,
        g.symbols_count,
    ]

    h = record.header_info
    vec[626] = h.timestamp
    _add_hashed(vec, 627, 10, [h.machine] if h.machine else [])
    _add_hashed(vec, 637, 10, h.characteristics)
    _add_hashed(vec, 647, 10, [h.subsystem] if h.subsystem else [])
    _add_hashed(vec, 657, 10, h.dll_characteristics)
    _add_hashed(vec, 667, 10, [h.magic] if h.magic else [])
    vec[677:688] = [
        h.major_image_version,
        h.minor_image_version,
        h.major_linker_version,
        h.minor_linker_version,
        h.major_operating_system_version,
        h.minor_operating_system_version,
        h.major_subsystem_version,
        h.minor_subsystem_version,
        h.sizeof_code,
        h.sizeof_headers,
        h.sizeof_heap_commit,
    ]

    sections = record.sections
    vec[688] = len(sections)
    vec[689] = sum(1 for sec in sections if sec.size == 0)
    vec[690] = sum(1 for sec in sections if sec.name == "")
    vec[691] = sum(1 for sec in sections if "MEM_READ" in sec.props and "MEM_EXECUTE" in sec.props)
    vec[692] = sum(1 for sec in sections if "MEM_WRITE" in sec.props)
    _add_hashed_pairs(vec, 693, 50, ((sec.name, float(sec.size)) for sec in sections))
    _add_hashed_pairs(vec, 743, 50, ((sec.name, sec.entropy) for sec in sections))
    _add_hashed_pairs(vec, 793, 50, ((sec.name, float(sec.vsize)) for sec in sections))
    _add_hashed(vec, 843, 50, [record.entry_section] if record.entry_section else [])
    entry_props = [p for sec in sections if sec.name == record.entry_section for p in sec.props]
    _add_hashed(vec, 893, 50, entry_props)

    libraries = sorted({lib.lower() for lib in record.imports})
    _add_hashed(vec, 943, 256, libraries)
    qualified = [f"{lib.lower()}:{api}" for lib, apis in record.imports.items() for api in apis]
    _add_hashed(vec, 1199, 1024, qualified)

    _add_hashed(vec, 2223, 128, record.exports)

    directory_offsets = {name: 2351 + 2 * i for i, name in enumerate(DATA_DIRECTORY_NAMES)}
    for directory in record.data_directories:
        base = directory_offsets.get(directory.name)
        if base is not None:
            vec[base] = directory.size
            vec[base + 1] = directory.virtual_address
    return FeatureVector(sample_id=record.sha256, values=vec)


def write_vectors(path: str | Path, vectors: Iterable[FeatureVector]) -> int:
    """Dump vectors as (32-byte sha256, 2381 little-endian float32) frames."""
    count = 0
    with open(path, "wb") as fh:
        for fv in vectors:
            fh.write(bytes.fromhex(fv.sample_id))
            fh.write(fv.values.astype("<f4").tobytes())
            count += 1
    return count


def read_vectors(path: str | Path) -> list[FeatureVector]:
    frame = 32 + VECTOR_DIM * 4
    out = []
    data = Path(path).read_bytes()
    if len(data) % frame != 0:
        raise ValueError(f"vector dump has a partial frame (file size {len(data)})")
    for start in range(0, len(data), frame):
        sha = data[start : start + 32].hex()
        values = np.frombuffer(data[start + 32 : start + frame], dtype="<f4").astype(np.float64)
        out.append(FeatureVector(sample_id=sha, values=values))
    return out
