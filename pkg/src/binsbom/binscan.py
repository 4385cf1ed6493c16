"""ELF/PE detection, printable-string extraction, and version-candidate filtering.

String extraction mirrors GNU strings' default behavior: maximal runs of ASCII
0x20-0x7E plus horizontal tab, minimum length 4. The default version pattern
keeps any string carrying a dotted numeric sequence (e.g. "1.2" or "3.1.4").
"""

import re
from dataclasses import dataclass, field
from enum import Enum

from .errors import InvalidPattern, IoError

ELF_MAGIC = b"\x7fELF"
DOS_MAGIC = b"MZ"
PE_SIGNATURE = b"PE\x00\x00"
PE_OFFSET_FIELD = 0x3C  # 32-bit LE pointer to the PE signature

DEFAULT_MIN_LEN = 4
# Dotted numeric sequence, not embedded in a longer digit run.
DEFAULT_VERSION_PATTERN = r"(^|[^0-9])[0-9]+\.[0-9]+(\.[0-9]+)*([^0-9]|$)"
# Same dotted core with lookarounds instead of consuming context; used to pull
# the bare version text out of an already-matched string.
VERSION_CORE_PATTERN = r"(?<![0-9])[0-9]+\.[0-9]+(?:\.[0-9]+)*(?![0-9])"

_VERSION_CORE_RE = re.compile(VERSION_CORE_PATTERN)


class FileFormat(Enum):
    ELF = "elf"
    PE = "pe"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class ExtractedString:
    """One maximal printable run: byte offset into the source plus its text."""

    offset: int
    text: str

    @property
    def length(self) -> int:
        return len(self.text)


@dataclass
class ScanReport:
    """Scan result for one file: detected format, all strings, and the
    subset of strings that look like version-string candidates."""

    path: str
    format: FileFormat
    strings: list[ExtractedString] = field(default_factory=list)
    candidates: list[ExtractedString] = field(default_factory=list)
    skipped: bool = False

    def to_json_dict(self) -> dict:
        return {
            "path": self.path,
            "format": self.format.value,
            "strings": [{"offset": s.offset, "text": s.text} for s in self.strings],
            "candidates": [c.text for c in self.candidates],
            "skipped": self.skipped,
        }


def detect_format(data: bytes) -> FileFormat:
    """Classify a byte buffer as ELF, PE, or Unknown from its magic bytes.

    PE requires the MZ stub plus the "PE\\0\\0" signature at the offset stored
    as a little-endian dword at 0x3C. Malformed headers yield Unknown.
    """
    if data[:4] == ELF_MAGIC:
        return FileFormat.ELF
    if data[:2] == DOS_MAGIC and len(data) >= PE_OFFSET_FIELD + 4:
        pe_offset = int.from_bytes(data[PE_OFFSET_FIELD:PE_OFFSET_FIELD + 4], "little")
        if data[pe_offset:pe_offset + 4] == PE_SIGNATURE:
            return FileFormat.PE
    return FileFormat.UNKNOWN


def extract_strings(data: bytes, min_len: int = DEFAULT_MIN_LEN) -> list[ExtractedString]:
    """Return every maximal run of printable bytes of length >= min_len.

    Printable means 0x20-0x7E plus tab, matching GNU strings' default
    single-7-bit-byte mode. Runs are reported in ascending offset order.
    """
    if min_len < 1:
        raise ValueError(f"min_len must be >= 1, got {min_len}")
    pattern = re.compile(rb"[\t\x20-\x7e]{%d,}" % min_len)
    return [
        ExtractedString(offset=m.start(), text=m.group().decode("ascii"))
        for m in pattern.finditer(data)
    ]


def filter_version_strings(
    strings: list[ExtractedString], pattern: str = DEFAULT_VERSION_PATTERN
) -> list[ExtractedString]:
    """Keep the strings whose text matches `pattern` (searched, not fullmatch)."""
    try:
        compiled = re.compile(pattern)
    except re.error as exc:
        raise InvalidPattern(f"bad version pattern {pattern!r}: {exc}") from exc
    return [s for s in strings if compiled.search(s.text)]


def scan_bytes(
    data: bytes,
    path: str = "<memory>",
    min_len: int = DEFAULT_MIN_LEN,
    pattern: str = DEFAULT_VERSION_PATTERN,
) -> ScanReport:
    """Scan an in-memory buffer; non-ELF/PE buffers are flagged skipped."""
    fmt = detect_format(data)
    if fmt is FileFormat.UNKNOWN:
        return ScanReport(path=path, format=fmt, skipped=True)
    strings = extract_strings(data, min_len)
    candidates = filter_version_strings(strings, pattern)
    return ScanReport(path=path, format=fmt, strings=strings, candidates=candidates)


def scan_file(
    path: str,
    min_len: int = DEFAULT_MIN_LEN,
    pattern: str = DEFAULT_VERSION_PATTERN,
) -> ScanReport:
    """Read a file and scan it; raises IoError if the path is unreadable."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    return scan_bytes(data, path=path, min_len=min_len, pattern=pattern)


def extract_version(text: str) -> str | None:
    """First dotted numeric sequence in `text`, or None if there is none."""
    m = _VERSION_CORE_RE.search(text)
    return m.group() if m else None
