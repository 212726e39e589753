"""Parsing of EMBER-style JSONL feature records and balanced corpus selection."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Iterator, Optional


class Label(Enum):
    BENIGN = "benign"
    MALICIOUS = "malicious"
    UNLABELED = "unlabeled"

    @classmethod
    def from_raw(cls, raw: int) -> "Label":
        if raw == 0:
            return cls.BENIGN
        if raw == 1:
            return cls.MALICIOUS
        if raw == -1:
            return cls.UNLABELED
        raise ValueError(f"label {raw} outside {{-1, 0, 1}}")

    def to_raw(self) -> int:
        return {"benign": 0, "malicious": 1, "unlabeled": -1}[self.value]


class RecordError(ValueError):
    """A record failed validation; carries the offending key path and, for
    JSON syntax errors, the byte offset within the line."""

    def __init__(self, message: str, key: str = "", offset: Optional[int] = None):
        detail = message
        if key:
            detail += f" (key: {key})"
        if offset is not None:
            detail += f" (byte offset: {offset})"
        super().__init__(detail)
        self.key = key
        self.offset = offset


@dataclass
class StringsInfo:
    num_strings: int = 0
    avg_length: float = 0.0
    printables: int = 0
    entropy: float = 0.0
    paths: int = 0
    urls: int = 0
    registry: int = 0
    mz_count: int = 0
    # Distribution of printable characters (96 counts, normalized at
    # vectorization time); present in EMBER JSONL as "printabledist".
    printable_dist: list[float] = field(default_factory=list)


@dataclass
class GeneralInfo:
    file_size: int = 0
    virtual_size: int = 0
    has_debug: int = 0
    exports_count: int = 0
    imports_count: int = 0
    has_relocations: int = 0
    has_resources: int = 0
    has_signature: int = 0
    has_tls: int = 0
    symbols_count: int = 0


@dataclass
class HeaderInfo:
    timestamp: int = 0
    machine: str = ""
    characteristics: list[str] = field(default_factory=list)
    subsystem: str = ""
    dll_characteristics: list[str] = field(default_factory=list)
    magic: str = ""
    major_image_version: int = 0
    minor_image_version: int = 0
    major_linker_version: int = 0
    minor_linker_version: int = 0
    major_operating_system_version: int = 0
    minor_operating_system_version: int = 0
    major_subsystem_version: int = 0
    minor_subsystem_version: int = 0
    sizeof_code: int = 0
    sizeof_headers: int = 0
    sizeof_heap_commit: int = 0


@dataclass
class Section:
    name: str = ""
    size: int = 0
    entropy: float = 0.0
    vsize: int = 0
    props: list[str] = field(default_factory=list)


@dataclass
class DataDirectory:
    name: str = ""
    size: int = 0
    virtual_address: int = 0


@dataclass
class PESampleRecord:
    """One parsed EMBER JSONL record: hashes, label and raw static features."""

    sha256: str
    md5: str
    label: Label
    family: Optional[str] = None
    byte_histogram: list[int] = field(default_factory=lambda: [0] * 256)
    byte_entropy_histogram: list[int] = field(default_factory=lambda: [0] * 256)
    strings_info: StringsInfo = field(default_factory=StringsInfo)
    general_info: GeneralInfo = field(default_factory=GeneralInfo)
    header_info: HeaderInfo = field(default_factory=HeaderInfo)
    entry_section: str = ""
    sections: list[Section] = field(default_factory=list)
    imports: dict[str, list[str]] = field(default_factory=dict)
    exports: list[str] = field(default_factory=list)
    data_directories: list[DataDirectory] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        """Serialize back to the canonical EMBER JSONL object shape."""
        s = self.strings_info
        g = self.general_info
        h = self.header_info
        return {
            "sha256": self.sha256,
            "md5": self.md5,
            "label": self.label.to_raw(),
            "avclass": self.family or "",
            "histogram": list(self.byte_histogram),
            "byteentropy": list(self.byte_entropy_histogram),
            "strings": {
                "numstrings": s.num_strings,
                "avlength": s.avg_length,
                "printabledist": list(s.printable_dist),
                "printables": s.printables,
                "entropy": s.entropy,
                "paths": s.paths,
                "urls": s.urls,
                "registry": s.registry,
                "MZ": s.mz_count,
            },
            "general": {
                "size": g.file_size,
                "vsize": g.virtual_size,
                "has_debug": g.has_debug,
                "exports": g.exports_count,
                "imports": g.imports_count,
                "has_relocations": g.has_relocations,
                "has_resources": g.has_resources,
                "has_signature": g.has_signature,
                "has_tls": g.has_tls,
                "symbols": g.symbols_count,
            },
            "header": {
                "coff": {
                    "timestamp": h.timestamp,
                    "machine": h.machine,
                    "characteristics": list(h.characteristics),
                },
                "optional": {
                    "subsystem": h.subsystem,
                    "dll_characteristics": list(h.dll_characteristics),
                    "magic": h.magic,
                    "major_image_version": h.major_image_version,
                    "minor_image_version": h.minor_image_version,
                    "major_linker_version": h.major_linker_version,
                    "minor_linker_version": h.minor_linker_version,
                    "major_operating_system_version": h.major_operating_system_version,
                    "minor_operating_system_version": h.minor_operating_system_version,
                    "major_subsystem_version": h.major_subsystem_version,
                    "minor_subsystem_version": h.minor_subsystem_version,
                    "sizeof_code": h.sizeof_code,
                    "sizeof_headers": h.sizeof_headers,
                    "sizeof_heap_commit": h.sizeof_heap_commit,
                },
            },
            "section": {
                "entry": self.entry_section,
                "sections": [
                    {
                        "name": sec.name,
                        "size": sec.size,
                        "entropy": sec.entropy,
                        "vsize": sec.vsize,
                        "props": list(sec.props),
                    }
                    for sec in self.sections
                ],
            },
            "imports": {lib: list(apis) for lib, apis in self.imports.items()},
            "exports": list(self.exports),
            "datadirectories": [
                {"name": d.name, "size": d.size, "virtual_address": d.virtual_address}
                for d in self.data_directories
            ],
        }


def _require_hex(value: Any, length: int, key: str) -> str:
    if not isinstance(value, str):
        raise RecordError(f"{key} must be a string", key=key)
    lowered = value.lower()
    if len(lowered) != length or any(c not in "0123456789abcdef" for c in lowered):
        raise RecordError(f"{key} is not {length}-char hex", key=key)
    return lowered


def _require_histogram(obj: dict, key: str) -> list[int]:
    raw = obj.get(key)
    if raw is None:
        return [0] * 256
    if not isinstance(raw, list) or len(raw) != 256:
        got = len(raw) if isinstance(raw, list) else type(raw).__name__
        raise RecordError(f"{key} must have exactly 256 entries, got {got}", key=key)
    return [int(v) for v in raw]


def parse_record(line: str) -> PESampleRecord:
    """Parse one JSONL line into a PESampleRecord.

    Unknown keys are ignored; missing optional sub-objects become empty
    defaults.  Raises RecordError naming the key path (and byte offset for
    JSON syntax errors).
    """
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise RecordError(f"malformed JSON: {exc.msg}", offset=exc.pos) from exc
    if not isinstance(obj, dict):
        raise RecordError("record is not a JSON object")

    if "sha256" not in obj:
        raise RecordError("missing required key", key="sha256")
    sha256 = _require_hex(obj["sha256"], 64, "sha256")
    md5 = _require_hex(obj.get("md5", "0" * 32), 32, "md5")

    if "label" not in obj:
        raise RecordError("missing required key", key="label")
    try:
        raw_label = int(obj["label"])
    except (TypeError, ValueError):
        raise RecordError("label is not an integer", key="label") from None
    try:
        label = Label.from_raw(raw_label)
    except ValueError as exc:
        raise RecordError(str(exc), key="label") from exc

    family = obj.get("avclass") or None

    strings = obj.get("strings") or {}
    strings_info = StringsInfo(
        num_strings=int(strings.get("numstrings", 0)),
        avg_length=float(strings.get("avlength", 0.0)),
        printables=int(strings.get("printables", 0)),
        entropy=float(strings.get("entropy", 0.0)),
        paths=int(strings.get("paths", 0)),
        urls=int(strings.get("urls", 0)),
        registry=int(strings.get("registry", 0)),
        mz_count=int(strings.get("MZ", 0)),
        printable_dist=[float(v) for v in strings.get("printabledist", [])],
    )

    general = obj.get("general") or {}
    general_info = GeneralInfo(
        file_size=int(general.get("size", 0)),
        virtual_size=int(general.get("vsize", 0)),
        has_debug=int(general.get("has_debug", 0)),
        exports_count=int(general.get("exports", 0)),
        imports_count=int(general.get("imports", 0)),
        has_relocations=int(general.get("has_relocations", 0)),
        has_resources=int(general.get("has_resources", 0)),
        has_signature=int(general.get("has_signature", 0)),
        has_tls=int(general.get("has_tls", 0)),
        symbols_count=int(general.get("symbols", 0)),
    )

    header = obj.get("header") or {}
    coff = header.get("coff") or {}
    optional = header.get("optional") or {}
    header_info = HeaderInfo(
        timestamp=int(coff.get("timestamp", 0)),
        machine=str(coff.get("machine", "")),
        characteristics=[str(c) for c in coff.get("characteristics", [])],
        subsystem=str(optional.get("subsystem", "")),
        dll_characteristics=[str(c) for c in optional.get("dll_characteristics", [])],
        magic=str(optional.get("magic", "")),
        major_image_version=int(optional.get("major_image_version", 0)),
        minor_image_version=int(optional.get("minor_image_version", 0)),
        major_linker_version=int(optional.get("major_linker_version", 0)),
        minor_linker_version=int(optional.get("minor_linker_version", 0)),
        major_operating_system_version=int(optional.get("major_operating_system_version", 0)),
        minor_operating_system_version=int(optional.get("minor_operating_system_version", 0)),
        major_subsystem_version=int(optional.get("major_subsystem_version", 0)),
        minor_subsystem_version=int(optional.get("minor_subsystem_version", 0)),
        sizeof_code=int(optional.get("sizeof_code", 0)),
        sizeof_headers=int(optional.get("sizeof_headers", 0)),
        sizeof_heap_commit=int(optional.get("sizeof_heap_commit", 0)),
    )

    section = obj.get("section") or {}
    sections = [
        Section(
            name=str(sec.get("name", "")),
            size=int(sec.get("size", 0)),
            entropy=float(sec.get("entropy", 0.0)),
            vsize=int(sec.get("vsize", 0)),
            props=[str(p) for p in sec.get("props", [])],
        )
        for sec in section.get("sections", [])
    ]

    imports = {
        str(lib): [str(a) for a in apis] for lib, apis in (obj.get("imports") or {}).items()
    }
    exports = [str(e) for e in obj.get("exports") or []]
    data_directories = [
        DataDirectory(
            name=str(d.get("name", "")),
            size=int(d.get("size", 0)),
            virtual_address=int(d.get("virtual_address", 0)),
        )
        for d in obj.get("datadirectories") or []
    ]

    return PESampleRecord(
        sha256=sha256,
        md5=md5,
        label=label,
        family=family,
        byte_histogram=_require_histogram(obj, "histogram"),
        byte_entropy_histogram=_require_histogram(obj, "byteentropy"),
        strings_info=strings_info,
        general_info=general_info,
        header_info=header_info,
        entry_section=str(section.get("entry", "")),
        sections=sections,
        imports=imports,
        exports=exports,
        data_directories=data_directories,
    )


class DatasetError(Exception):
    """Raised when a dataset line fails to parse under the abort policy."""

    def __init__(self, line_number: int, cause: Exception):
        super().__init__(f"line {line_number}: {cause}")
        self.line_number = line_number
        self.cause = cause


def is_labeled(record: PESampleRecord) -> bool:
    return record.label is not Label.UNLABELED


class RecordStream:
    """Lazily yields parsed records from a JSONL file, in file order.

    ``on_error`` is either "abort" (raise DatasetError at the bad line) or
    "skip" (count the line in ``skipped`` and continue).
    """

    def __init__(
        self,
        path: str | Path,
        predicate: Optional[Callable[[PESampleRecord], bool]] = None,
        on_error: str = "abort",
    ):
        if on_error not in ("abort", "skip"):
            raise ValueError(f"on_error must be 'abort' or 'skip', got {on_error!r}")
        self.path = Path(path)
        self.predicate = predicate
        self.on_error = on_error
        self.skipped = 0
        self.errors: list[tuple[int, str]] = []

    def __iter__(self) -> Iterator[PESampleRecord]:
        with open(self.path, "r", encoding="utf-8") as fh:
            for line_number, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    record = parse_record(line)
                except RecordError as exc:
                    if self.on_error == "abort":
                        raise DatasetError(line_number, exc) from exc
                    self.skipped += 1
                    self.errors.append((line_number, str(exc)))
                    continue
                if self.predicate is None or self.predicate(record):
                    yield record


def load_dataset(
    path: str | Path,
    predicate: Optional[Callable[[PESampleRecord], bool]] = None,
    on_error: str = "abort",
) -> RecordStream:
    """Open a JSONL dataset as a lazy record stream (see RecordStream)."""
    return RecordStream(path, predicate=predicate, on_error=on_error)


class SplitMix64:
    """SplitMix64 PRNG (Steele et al.), seeded directly with a 64-bit integer.

    Fixed here so corpus splits are reproducible across platforms and
    implementations.
    """

    MASK = (1 << 64) - 1

    def __init__(self, seed: int):
        self.state = seed & self.MASK

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & self.MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & self.MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & self.MASK
        return z ^ (z >> 31)

    def randbelow(self, n: int) -> int:
        # Rejection sampling keeps the draw unbiased for any n.
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            value = self.next_u64()
            if value < limit:
                return value % n

    def shuffle(self, items: list) -> None:
        for i in range(len(items) - 1, 0, -1):
            j = self.randbelow(i + 1)
            items[i], items[j] = items[j], items[i]


@dataclass
class SplitSizes:
    """Split sizes; malicious share of each split is ceil(n/2)."""

    train: int = 1000
    test: int = 50
    focus: int = 5

    def malicious(self, which: str) -> int:
        n = getattr(self, which)
        return (n + 1) // 2

    def benign(self, which: str) -> int:
        n = getattr(self, which)
        return n // 2


@dataclass
class CorpusSplit:
    train: list[str]
    test: list[str]
    focus: list[str]
    seed: int

    def to_dict(self) -> dict[str, Any]:
        return {"seed": self.seed, "train": self.train, "test": self.test, "focus": self.focus}

    @classmethod
    def from_dict(cls, obj: dict[str, Any]) -> "CorpusSplit":
        return cls(
            train=list(obj["train"]),
            test=list(obj["test"]),
            focus=list(obj["focus"]),
            seed=int(obj["seed"]),
        )


class InsufficientClassError(ValueError):
    def __init__(self, needed_benign: int, needed_malicious: int, have_benign: int, have_malicious: int):
        super().__init__(
            f"need {needed_benign} benign / {needed_malicious} malicious labeled records, "
            f"have {have_benign} benign / {have_malicious} malicious"
        )
        self.needed = {"benign": needed_benign, "malicious": needed_malicious}
        self.have = {"benign": have_benign, "malicious": have_malicious}


def select_corpus(
    records: list[PESampleRecord],
    seed: int,
    sizes: SplitSizes | None = None,
) -> CorpusSplit:
    """Select disjoint balanced train/test/focus splits.

    Deterministic in (record order, seed): benign and malicious ids are taken
    in file order, each list is Fisher-Yates shuffled with a single SplitMix64
    stream (benign first, then malicious), and the splits are consecutive
    slices (train, then test, then focus; benign slice before malicious slice
    inside each split).  Unlabeled records never participate.
    """
    sizes = sizes or SplitSizes()
    benign = [r.sha256 for r in records if r.label is Label.BENIGN]
    malicious = [r.sha256 for r in records if r.label is Label.MALICIOUS]

    need_b = sum(sizes.benign(w) for w in ("train", "test", "focus"))
    need_m = sum(sizes.malicious(w) for w in ("train", "test", "focus"))
    if len(benign) < need_b or len(malicious) < need_m:
        raise InsufficientClassError(need_b, need_m, len(benign), len(malicious))

    rng = SplitMix64(seed)
    rng.shuffle(benign)
    rng.shuffle(malicious)

    splits = {}
    pos_b = pos_m = 0
    for which in ("train", "test", "focus"):
        nb, nm = sizes.benign(which), sizes.malicious(which)
        splits[which] = benign[pos_b : pos_b + nb] + malicious[pos_m : pos_m + nm]
        pos_b += nb
        pos_m += nm
    return CorpusSplit(train=splits["train"], test=splits["test"], focus=splits["focus"], seed=seed)
