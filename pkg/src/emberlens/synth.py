"""Synthetic corpus and model fixtures for running the pipeline offline.

The record generator draws class-conditional static features: benign files
look like ordinary linked executables (rich import tables, mid-entropy code
sections, debug info) while malicious ones look packed (few strings, high
section entropy, loader-only imports, TLS callbacks).  The model builder
fits a small gradient-boosted ensemble to those vectors and emits it as
LightGBM text, so consumers exercise the real parser rather than a
hand-built object.  Everything is deterministic in the seeds.
"""

from __future__ import annotations

import math
import random
from pathlib import Path

import numpy as np

from .featurize import vectorize
from .ingest import (
    DataDirectory,
    GeneralInfo,
    HeaderInfo,
    Label,
    PESampleRecord,
    Section,
    StringsInfo,
)

FAMILIES = ("emotet", "ramnit", "ursnif", "zbot", "sality", "upatre", "gandcrab", "fareit")

_BENIGN_IMPORTS = {
    "kernel32.dll": (
        "CreateFileW", "ReadFile", "WriteFile", "CloseHandle", "GetModuleHandleW",
        "GetProcAddress", "HeapAlloc", "HeapFree", "GetLastError", "SetLastError",
        "CreateThread", "WaitForSingleObject", "GetSystemTimeAsFileTime",
        "QueryPerformanceCounter", "GetCurrentProcessId", "GetCurrentThreadId",
        "InitializeCriticalSection", "EnterCriticalSection", "LeaveCriticalSection",
        "DeleteCriticalSection", "GetTickCount", "Sleep", "LoadLibraryW",
        "FreeLibrary", "MultiByteToWideChar", "WideCharToMultiByte",
    ),
    "user32.dll": (
        "MessageBoxW", "CreateWindowExW", "DefWindowProcW", "RegisterClassExW",
        "ShowWindow", "UpdateWindow", "GetMessageW", "TranslateMessage",
        "DispatchMessageW", "LoadIconW", "LoadCursorW", "SendMessageW",
    ),
    "advapi32.dll": (
        "RegOpenKeyExW", "RegQueryValueExW", "RegCloseKey", "OpenProcessToken",
        "GetTokenInformation", "LookupPrivilegeValueW",
    ),
    "msvcrt.dll": (
        "malloc", "free", "memcpy", "memset", "strlen", "wcslen", "_initterm",
        "__set_app_type", "_controlfp", "printf", "fopen", "fclose",
    ),
    "gdi32.dll": ("CreateFontIndirectW", "SelectObject", "DeleteObject", "BitBlt"),
    "shell32.dll": ("SHGetFolderPathW", "ShellExecuteW", "DragQueryFileW"),
    "ole32.dll": ("CoInitialize", "CoUninitialize", "CoCreateInstance"),
    "comctl32.dll": ("InitCommonControlsEx",),
}

_MALICIOUS_IMPORTS = {
    "kernel32.dll": (
        "LoadLibraryA", "GetProcAddress", "VirtualAlloc", "VirtualProtect",
        "ExitProcess", "GetModuleHandleA", "WriteProcessMemory", "CreateRemoteThread",
        "OpenProcess", "IsDebuggerPresent",
    ),
    "wininet.dll": ("InternetOpenA", "InternetOpenUrlA", "InternetReadFile", "InternetCloseHandle"),
    "urlmon.dll": ("URLDownloadToFileA",),
    "advapi32.dll": ("RegSetValueExA", "RegCreateKeyExA", "CryptAcquireContextA", "CryptEncrypt"),
    "shell32.dll": ("ShellExecuteA",),
    "ws2_32.dll": ("socket", "connect", "send", "recv", "WSAStartup"),
}

_ALL_DIRECTORIES = (
    "EXPORT_TABLE", "IMPORT_TABLE", "RESOURCE_TABLE", "EXCEPTION_TABLE",
    "CERTIFICATE_TABLE", "BASE_RELOCATION_TABLE", "DEBUG", "ARCHITECTURE",
    "GLOBAL_PTR", "TLS_TABLE", "LOAD_CONFIG_TABLE", "BOUND_IMPORT", "IAT",
    "DELAY_IMPORT_DESCRIPTOR", "CLR_RUNTIME_HEADER",
)


def _clipped_gauss(rng: random.Random, mu: float, sigma: float, lo: float, hi: float) -> float:
    return min(hi, max(lo, rng.gauss(mu, sigma)))


def _byte_histogram(rng: random.Random, malicious: bool) -> list[int]:
    counts = []
    for byte in range(256):
        if malicious:
            # Packed payloads look nearly uniform over byte values.
            weight = 40.0 + rng.random() * 12.0
            if byte == 0:
                weight *= 1.5
        else:
            if byte == 0:
                weight = 400.0
            elif 32 <= byte <= 126:
                weight = 90.0 + rng.random() * 30.0
            elif byte < 32:
                weight = 30.0 + rng.random() * 10.0
            else:
                weight = 12.0 + rng.random() * 8.0
        counts.append(int(weight * 10))
    return counts


def _entropy_histogram(rng: random.Random, malicious: bool) -> list[int]:
    # 16 entropy rows of 16 byte buckets; mass sits near the typical window
    # entropy for the class.
    center = 14.2 if malicious else 9.5
    spread = 1.2 if malicious else 2.2
    counts = []
    for row in range(16):
        row_weight = math.exp(-((row - center) ** 2) / (2 * spread**2))
        for _ in range(16):
            counts.append(int(row_weight * (800 + rng.random() * 200)))
    return counts


def _printable_dist(rng: random.Random, malicious: bool, printables: int) -> list[int]:
    weights = []
    for slot in range(96):
        ch = chr(32 + slot)
        if malicious:
            weights.append(1.0 + rng.random())
        elif ch.isalnum() or ch in " ._\\/:":
            weights.append(4.0 + rng.random() * 2.0)
        else:
            weights.append(0.5 + rng.random() * 0.5)
    total = sum(weights)
    return [int(printables * w / total) for w in weights]


def _pick_imports(rng: random.Random, pool: dict[str, tuple[str, ...]], n_libs: int,
                  lo: int, hi: int) -> dict[str, list[str]]:
    libs = rng.sample(sorted(pool), min(n_libs, len(pool)))
    chosen = {}
    for lib in libs:
        apis = pool[lib]
        count = min(len(apis), rng.randint(lo, hi))
        chosen[lib] = rng.sample(list(apis), count)
    return chosen


def _benign_sections(rng: random.Random, code_size: int, file_size: int) -> tuple[str, list[Section]]:
    sections = [
        Section(".text", code_size, _clipped_gauss(rng, 6.2, 0.15, 5.5, 6.8), code_size,
                ["CNT_CODE", "MEM_EXECUTE", "MEM_READ"]),
        Section(".rdata", file_size // 6, _clipped_gauss(rng, 4.9, 0.3, 3.5, 5.8), file_size // 6,
                ["CNT_INITIALIZED_DATA", "MEM_READ"]),
        Section(".data", file_size // 10, _clipped_gauss(rng, 3.4, 0.5, 1.5, 4.8), file_size // 8,
                ["CNT_INITIALIZED_DATA", "MEM_READ", "MEM_WRITE"]),
        Section(".rsrc", file_size // 5, _clipped_gauss(rng, 4.6, 0.6, 2.5, 6.5), file_size // 5,
                ["CNT_INITIALIZED_DATA", "MEM_READ"]),
    ]
    if rng.random() < 0.8:
        sections.append(
            Section(".reloc", file_size // 20, _clipped_gauss(rng, 5.8, 0.4, 4.0, 6.8),
                    file_size // 20, ["CNT_INITIALIZED_DATA", "MEM_READ", "MEM_DISCARDABLE"])
        )
    return ".text", sections


def _malicious_sections(rng: random.Random, file_size: int, vsize: int) -> tuple[str, list[Section]]:
    if rng.random() < 0.6:
        sections = [
            Section("UPX0", 0, 0.0, vsize - file_size, ["CNT_UNINITIALIZED_DATA", "MEM_EXECUTE", "MEM_READ", "MEM_WRITE"]),
            Section("UPX1", file_size * 3 // 4, _clipped_gauss(rng, 7.85, 0.1, 7.4, 8.0),
                    file_size * 3 // 4, ["CNT_CODE", "MEM_EXECUTE", "MEM_READ", "MEM_WRITE"]),
            Section(".rsrc", file_size // 8, _clipped_gauss(rng, 5.5, 0.8, 3.0, 7.9),
                    file_size // 8, ["CNT_INITIALIZED_DATA", "MEM_READ", "MEM_WRITE"]),
        ]
        return "UPX1", sections
    name = "" if rng.random() < 0.3 else ".text"
    sections = [
        Section(name, file_size * 2 // 3, _clipped_gauss(rng, 7.4, 0.3, 6.6, 8.0),
                vsize * 2 // 3, ["CNT_CODE", "MEM_EXECUTE", "MEM_READ", "MEM_WRITE"]),
        Section(".data", file_size // 6, _clipped_gauss(rng, 6.8, 0.6, 5.0, 8.0),
                vsize // 6, ["CNT_INITIALIZED_DATA", "MEM_READ", "MEM_WRITE"]),
    ]
    if rng.random() < 0.5:
        sections.append(Section(".rsrc", file_size // 10, _clipped_gauss(rng, 6.0, 1.0, 3.0, 8.0),
                                file_size // 10, ["CNT_INITIALIZED_DATA", "MEM_READ"]))
    return name, sections


def generate_record(rng: random.Random, malicious: bool) -> PESampleRecord:
    """One synthetic EMBER-shaped record drawn from the class distribution."""
    if malicious:
        file_size = int(_clipped_gauss(rng, 250_000, 120_000, 12_000, 900_000))
        vsize = int(file_size * rng.uniform(2.0, 6.0))
        num_strings = int(_clipped_gauss(rng, 300, 150, 20, 1200))
        avg_length = _clipped_gauss(rng, 9.0, 2.0, 4.0, 16.0)
        string_entropy = _clipped_gauss(rng, 5.6, 0.4, 4.2, 6.4)
        urls, registry = rng.randint(2, 25), rng.randint(1, 12)
        paths, mz = rng.randint(0, 3), rng.randint(1, 4)
        has_debug = int(rng.random() < 0.05)
        has_relocations = int(rng.random() < 0.25)
        has_resources = int(rng.random() < 0.5)
        has_signature = int(rng.random() < 0.04)
        has_tls = int(rng.random() < 0.45)
        imports = _pick_imports(rng, _MALICIOUS_IMPORTS, rng.randint(2, 5), 1, 5)
        exports: list[str] = []
        entry, sections = _malicious_sections(rng, file_size, vsize)
        timestamp = 0 if rng.random() < 0.1 else rng.randint(1_000_000_000, 1_540_000_000)
        dll_characteristics = [] if rng.random() < 0.7 else ["DYNAMIC_BASE"]
        characteristics = ["EXECUTABLE_IMAGE", "RELOCS_STRIPPED", "32BIT_MACHINE"]
        machine, magic = "I386", "PE32"
        linker_major = rng.choice((2, 6, 8))
        family = rng.choice(FAMILIES)
    else:
        file_size = int(_clipped_gauss(rng, 800_000, 350_000, 60_000, 3_000_000))
        vsize = int(file_size * rng.uniform(1.0, 1.3))
        num_strings = int(_clipped_gauss(rng, 6000, 1500, 200, 12_000))
        avg_length = _clipped_gauss(rng, 18.0, 4.0, 6.0, 40.0)
        string_entropy = _clipped_gauss(rng, 4.2, 0.3, 3.2, 5.2)
        urls, registry = rng.randint(0, 8), rng.randint(0, 4)
        paths, mz = rng.randint(0, 12), 0
        has_debug = int(rng.random() < 0.7)
        has_relocations = int(rng.random() < 0.8)
        has_resources = int(rng.random() < 0.9)
        has_signature = int(rng.random() < 0.55)
        has_tls = int(rng.random() < 0.05)
        imports = _pick_imports(rng, _BENIGN_IMPORTS, rng.randint(4, 7), 4, 18)
        exports = [f"Export{j}" for j in range(rng.randint(0, 4))] if rng.random() < 0.2 else []
        entry, sections = _benign_sections(rng, int(file_size * 0.4), file_size)
        timestamp = rng.randint(1_200_000_000, 1_540_000_000)
        dll_characteristics = ["DYNAMIC_BASE", "NX_COMPAT", "TERMINAL_SERVER_AWARE"]
        characteristics = ["EXECUTABLE_IMAGE", "LARGE_ADDRESS_AWARE"]
        machine = "I386" if rng.random() < 0.6 else "AMD64"
        magic = "PE32" if machine == "I386" else "PE32_PLUS"
        linker_major = rng.choice((10, 12, 14))
        family = None

    printables = int(num_strings * avg_length)
    imports_count = sum(len(apis) for apis in imports.values())

    directory_sizes = {
        "IMPORT_TABLE": rng.randint(40, 400) if imports else 0,
        "IAT": imports_count * 4,
        "RESOURCE_TABLE": rng.randint(2_000, 200_000) if has_resources else 0,
        "BASE_RELOCATION_TABLE": rng.randint(500, 20_000) if has_relocations else 0,
        "DEBUG": 28 if has_debug else 0,
        "CERTIFICATE_TABLE": rng.randint(4_000, 12_000) if has_signature else 0,
        "TLS_TABLE": 24 if has_tls else 0,
        "EXPORT_TABLE": rng.randint(64, 600) if exports else 0,
    }
    data_directories = [
        DataDirectory(name, directory_sizes.get(name, 0),
                      rng.randint(4096, vsize) if directory_sizes.get(name, 0) else 0)
        for name in _ALL_DIRECTORIES
    ]

    return PESampleRecord(
        sha256=f"{rng.getrandbits(256):064x}",
        md5=f"{rng.getrandbits(128):032x}",
        label=Label.MALICIOUS if malicious else Label.BENIGN,
        family=family,
        byte_histogram=_byte_histogram(rng, malicious),
        byte_entropy_histogram=_entropy_histogram(rng, malicious),
        strings_info=StringsInfo(
            num_strings=num_strings,
            avg_length=avg_length,
            printables=printables,
            entropy=string_entropy,
            paths=paths,
            urls=urls,
            registry=registry,
            mz_count=mz,
            printable_dist=_printable_dist(rng, malicious, printables),
        ),
        general_info=GeneralInfo(
            file_size=file_size,
            virtual_size=vsize,
            has_debug=has_debug,
            exports_count=len(exports),
            imports_count=imports_count,
            has_relocations=has_relocations,
            has_resources=has_resources,
            has_signature=has_signature,
            has_tls=has_tls,
            symbols_count=0,
        ),
        header_info=HeaderInfo(
            timestamp=timestamp,
            machine=machine,
            characteristics=characteristics,
            subsystem="WINDOWS_GUI" if rng.random() < 0.5 else "WINDOWS_CUI",
            dll_characteristics=dll_characteristics,
            magic=magic,
            major_image_version=rng.choice((0, 1)),
            minor_image_version=0,
            major_linker_version=linker_major,
            minor_linker_version=0,
            major_operating_system_version=6,
            minor_operating_system_version=0,
            major_subsystem_version=6 if not malicious else rng.choice((4, 5)),
            minor_subsystem_version=0,
            sizeof_code=int(file_size * 0.4),
            sizeof_headers=1024,
            sizeof_heap_commit=4096,
        ),
        entry_section=entry,
        sections=sections,
        imports=imports,
        exports=exports,
        data_directories=data_directories,
    )


def generate_corpus(n_benign: int, n_malicious: int, seed: int = 0) -> list[PESampleRecord]:
    """Synthetic labeled corpus with the two classes interleaved."""
    rng = random.Random(seed)
    labels = [False] * n_benign + [True] * n_malicious
    rng.shuffle(labels)
    return [generate_record(rng, malicious) for malicious in labels]


def write_corpus(path: str | Path, records: list[PESampleRecord]) -> None:
    import json

    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record.to_dict()) + "\n")


class _TreeBuilder:
    """Greedy regression tree on boosting gradients, LightGBM node layout."""

    def __init__(self, X, gradients, hessians, rng, candidates, max_depth, min_leaf, learning_rate):
        self.X = X
        self.g = gradients
        self.h = hessians
        self.rng = rng
        self.candidates = candidates
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.lr = learning_rate
        self.split_feature: list[int] = []
        self.threshold: list[float] = []
        self.left_child: list[int] = []
        self.right_child: list[int] = []
        self.internal_value: list[float] = []
        self.internal_count: list[int] = []
        self.leaf_value: list[float] = []
        self.leaf_count: list[int] = []
        self.leaf_assign: list[np.ndarray] = []

    def _leaf_newton(self, idx: np.ndarray) -> float:
        value = self.lr * float(self.g[idx].sum() / (self.h[idx].sum() + 1.0))
        return min(4.0, max(-4.0, value))

    def _make_leaf(self, idx: np.ndarray) -> int:
        self.leaf_value.append(self._leaf_newton(idx))
        self.leaf_count.append(len(idx))
        self.leaf_assign.append(idx)
        return -len(self.leaf_value)

    def _best_split(self, idx: np.ndarray):
        g, h = self.g[idx], self.h[idx]
        parent_score = float(g.sum()) ** 2 / (float(h.sum()) + 1.0)
        best = None
        features = self.rng.sample(list(self.candidates), min(40, len(self.candidates)))
        for f in features:
            column = self.X[idx, f]
            for q in (0.25, 0.5, 0.75):
                threshold = float(np.quantile(column, q))
                mask = column <= threshold
                n_left = int(mask.sum())
                if n_left < self.min_leaf or len(idx) - n_left < self.min_leaf:
                    continue
                gl, hl = float(g[mask].sum()), float(h[mask].sum())
                gr, hr = float(g.sum()) - gl, float(h.sum()) - hl
                gain = gl**2 / (hl + 1.0) + gr**2 / (hr + 1.0) - parent_score
                if gain > 1e-9 and (best is None or gain > best[0]):
                    # Midpoint of the gap so later float rounding cannot
                    # flip which side a training value lands on.
                    below = float(column[mask].max())
                    above = float(column[~mask].min())
                    best = (gain, f, (below + above) / 2.0, mask)
        return best

    def build(self, idx: np.ndarray, depth: int) -> int:
        if depth >= self.max_depth or len(idx) < 2 * self.min_leaf:
            return self._make_leaf(idx)
        found = self._best_split(idx)
        if found is None:
            return self._make_leaf(idx)
        _, feature, threshold, mask = found

        node = len(self.split_feature)
        self.split_feature.append(feature)
        self.threshold.append(threshold)
        self.internal_value.append(self._leaf_newton(idx))
        self.internal_count.append(len(idx))
        self.left_child.append(0)
        self.right_child.append(0)

        self.left_child[node] = self.build(idx[mask], depth + 1)
        self.right_child[node] = self.build(idx[~mask], depth + 1)
        return node


def _format_tree_block(index: int, builder: _TreeBuilder, shrinkage: float) -> str:
    lines = [f"Tree={index}", f"num_leaves={len(builder.leaf_value)}", "num_cat=0"]
    if builder.split_feature:
        lines += [
            "split_feature=" + " ".join(str(v) for v in builder.split_feature),
            "threshold=" + " ".join(repr(v) for v in builder.threshold),
            "decision_type=" + " ".join("2" for _ in builder.split_feature),
            "left_child=" + " ".join(str(v) for v in builder.left_child),
            "right_child=" + " ".join(str(v) for v in builder.right_child),
        ]
    lines += [
        "leaf_value=" + " ".join(repr(v) for v in builder.leaf_value),
        "leaf_count=" + " ".join(str(v) for v in builder.leaf_count),
    ]
    if builder.split_feature:
        lines += [
            "internal_value=" + " ".join(repr(v) for v in builder.internal_value),
            "internal_count=" + " ".join(str(v) for v in builder.internal_count),
        ]
    lines.append(f"shrinkage={shrinkage}")
    return "\n".join(lines)


def train_model(
    records: list[PESampleRecord],
    num_trees: int = 200,
    max_depth: int = 3,
    learning_rate: float = 0.1,
    min_leaf: int = 20,
    seed: int = 0,
) -> str:
    """Fit a boosted ensemble to the records and return LightGBM model text.

    Tree zero is a single-leaf tree holding the class prior, then each round
    fits a depth-limited tree to the logistic gradients.  Covers are exact
    routing counts, so they sum correctly at every node.
    """
    labeled = [r for r in records if r.label is not Label.UNLABELED]
    if len(labeled) < 4 * min_leaf:
        raise ValueError(f"need at least {4 * min_leaf} labeled records, have {len(labeled)}")
    X = np.stack([vectorize(record).values for record in labeled])
    y = np.array([1.0 if r.label is Label.MALICIOUS else 0.0 for r in labeled])
    n = len(y)

    spread = X.max(axis=0) - X.min(axis=0)
    candidates = [int(f) for f in np.nonzero(spread > 0)[0]]
    rng = random.Random(seed)

    prior_p = min(1.0 - 1e-6, max(1e-6, float(y.mean())))
    prior = math.log(prior_p / (1.0 - prior_p))
    margins = np.full(n, prior)

    blocks = []
    prior_builder = _TreeBuilder(X, y, y, rng, candidates, 0, 1, 1.0)
    prior_builder.leaf_value.append(prior)
    prior_builder.leaf_count.append(n)
    blocks.append(_format_tree_block(0, prior_builder, 1.0))

    for tree_index in range(1, num_trees):
        p = 1.0 / (1.0 + np.exp(-margins))
        builder = _TreeBuilder(
            X, y - p, p * (1.0 - p), rng, candidates, max_depth, min_leaf, learning_rate
        )
        builder.build(np.arange(n), 0)
        for leaf_idx, assigned in enumerate(builder.leaf_assign):
            margins[assigned] += builder.leaf_value[leaf_idx]
        blocks.append(_format_tree_block(tree_index, builder, learning_rate))

    header = "\n".join(
        [
            "tree",
            "version=v3",
            "num_class=1",
            "num_tree_per_iteration=1",
            "label_index=0",
            "max_feature_idx=2380",
            "objective=binary sigmoid:1",
        ]
    )
    return header + "\n\n" + "\n\n".join(blocks) + "\n\nend of trees\n"
