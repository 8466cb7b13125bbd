"""Package corpus: archive ingestion, safe unpacking, and the dataset manifest.

Archive layouts handled per registry convention:

* npm       - gzip tarball, entries under a ``package/`` prefix
* pypi      - sdist tar/zip or wheel zip
* rubygems  - plain tar holding ``metadata.gz`` + ``data.tar.gz``

Unpacking is treated as hostile-input handling: traversal entries, links and
device nodes are dropped, and decompressed size / file count / depth are
capped so a crafted archive cannot exhaust the host.
"""

from __future__ import annotations

import gzip
import hashlib
import io
import json
import logging
import re
import shutil
import tarfile
import zipfile
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path, PurePosixPath
from typing import BinaryIO, Iterable, NamedTuple

from .errors import (
    ExtractionLimitExceeded,
    MalformedManifest,
    UnknownFormat,
    UnreadableArchive,
)

logger = logging.getLogger(__name__)


class Ecosystem(str, Enum):
    NPM = "npm"
    PYPI = "pypi"
    RUBYGEMS = "rubygems"


class Label(str, Enum):
    LEGITIMATE = "legitimate"
    MALICIOUS = "malicious"
    UNKNOWN = "unknown"


class FileKind(str, Enum):
    SOURCE = "source"
    MANIFEST = "manifest"
    BINARY = "binary"
    RESOURCE = "resource"
    OTHER = "other"


SOURCE_EXTENSIONS = {
    Ecosystem.NPM: {".js", ".mjs", ".cjs"},
    Ecosystem.PYPI: {".py"},
    Ecosystem.RUBYGEMS: {".rb"},
}

MANIFEST_FILENAMES = {
    Ecosystem.NPM: {"package.json"},
    Ecosystem.PYPI: {"PKG-INFO", "METADATA", "setup.py", "setup.cfg", "pyproject.toml"},
    Ecosystem.RUBYGEMS: {"metadata.yml", "metadata.gz"},
}

ECOSYSTEM_LANGUAGE = {
    Ecosystem.NPM: "javascript",
    Ecosystem.PYPI: "python",
    Ecosystem.RUBYGEMS: "ruby",
}

_BINARY_EXTENSIONS = {
    ".so", ".dll", ".dylib", ".exe", ".pyc", ".pyo", ".o", ".a",
    ".class", ".node", ".bin", ".gz", ".zip", ".tgz", ".whl", ".jar", ".gem",
}
_RESOURCE_EXTENSIONS = {
    ".json", ".yml", ".yaml", ".xml", ".csv", ".md", ".rst", ".txt",
    ".ini", ".cfg", ".toml", ".html", ".css", ".png", ".jpg", ".jpeg",
    ".gif", ".svg", ".ico", ".lock",
}


@dataclass(frozen=True)
class PackageRef:
    """Identity, label, and archive location of one package under analysis."""

    ecosystem: Ecosystem
    name: str
    version: str
    label: Label
    archive_path: Path
    content_digest: str

    def key(self) -> tuple[str, str, str]:
        return (self.ecosystem.value, self.name, self.version)

    def to_dict(self) -> dict:
        return {
            "ecosystem": self.ecosystem.value,
            "name": self.name,
            "version": self.version,
            "label": self.label.value,
            "archive_path": str(self.archive_path),
            "content_digest": self.content_digest,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PackageRef":
        return cls(
            ecosystem=Ecosystem(d["ecosystem"]),
            name=d["name"],
            version=d["version"],
            label=Label(d["label"]),
            archive_path=Path(d["archive_path"]),
            content_digest=d["content_digest"],
        )


class FileEntry(NamedTuple):
    path: str  # relative, posix-style
    size: int
    kind: FileKind


@dataclass
class UnpackedTree:
    """Extraction result: working root plus the classified file listing."""

    root: Path
    files: list[FileEntry]

    def by_kind(self, kind: FileKind) -> list[FileEntry]:
        return [f for f in self.files if f.kind == kind]


@dataclass
class DatasetManifest:
    """Labeled dataset: one PackageRef per entry, tallied per (ecosystem, label)."""

    entries: list[PackageRef] = field(default_factory=list)
    created_at: datetime = field(
        default_factory=lambda: datetime.now(timezone.utc)
    )

    @property
    def counts(self) -> dict[tuple[Ecosystem, Label], int]:
        tally: dict[tuple[Ecosystem, Label], int] = {}
        for ref in self.entries:
            key = (ref.ecosystem, ref.label)
            tally[key] = tally.get(key, 0) + 1
        return tally

    def save(self, path: str | Path) -> None:
        """Line-delimited JSON, one PackageRef per line, stable field order."""
        with open(path, "w", encoding="utf-8") as fh:
            for ref in self.entries:
                fh.write(json.dumps(ref.to_dict()) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "DatasetManifest":
        entries = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    entries.append(PackageRef.from_dict(json.loads(line)))
        return cls(entries=entries)


@dataclass(frozen=True)
class ExtractionCaps:
    """Zip-bomb guards applied while unpacking untrusted archives."""

    max_bytes: int = 256 * 1024 * 1024
    max_files: int = 50_000
    max_depth: int = 32


def dedup(manifest: DatasetManifest) -> DatasetManifest:
    """Collapse entries sharing (ecosystem, name, version) to one survivor.

    The survivor is the entry with the lexicographically smallest
    content_digest, so the outcome is deterministic and content-based.
    Output preserves first-occurrence order of each surviving triple.
    """
    best: dict[tuple[str, str, str], PackageRef] = {}
    order: list[tuple[str, str, str]] = []
    for ref in manifest.entries:
        key = ref.key()
        if key not in best:
            best[key] = ref
            order.append(key)
        elif ref.content_digest < best[key].content_digest:
            best[key] = ref
    return DatasetManifest(entries=[best[k] for k in order])


# ---------------------------------------------------------------------------
# path safety
# ---------------------------------------------------------------------------

def _is_unsafe_path(name: str) -> bool:
    pure = PurePosixPath(name.replace("\\", "/"))
    if pure.is_absolute() or re.match(r"^[A-Za-z]:", name):
        return True
    return ".." in pure.parts


def _sanitize_component(text: str) -> str:
    """Filesystem-safe directory name for store layout (names like @scope/pkg)."""
    return re.sub(r"[^A-Za-z0-9.@_+-]", "_", text) or "_"


def classify_kind(relpath: str, ecosystem: Ecosystem, head: bytes = b"") -> FileKind:
    basename = PurePosixPath(relpath).name
    suffix = PurePosixPath(relpath).suffix.lower()
    if basename in MANIFEST_FILENAMES[ecosystem]:
        return FileKind.MANIFEST
    if ecosystem is Ecosystem.RUBYGEMS and basename.endswith(".gemspec"):
        return FileKind.MANIFEST
    if suffix in SOURCE_EXTENSIONS[ecosystem]:
        return FileKind.SOURCE
    if suffix in _BINARY_EXTENSIONS:
        return FileKind.BINARY
    if suffix in _RESOURCE_EXTENSIONS:
        return FileKind.RESOURCE
    if b"\0" in head:
        return FileKind.BINARY
    return FileKind.OTHER


# ---------------------------------------------------------------------------
# capped, traversal-safe extraction
# ---------------------------------------------------------------------------

class _CapTracker:
    def __init__(self, caps: ExtractionCaps):
        self.caps = caps
        self.bytes_written = 0
        self.files_written = 0

    def admit_file(self, relpath: str) -> None:
        self.files_written += 1
        if self.files_written > self.caps.max_files:
            raise ExtractionLimitExceeded(
                f"file count exceeds cap of {self.caps.max_files}"
            )
        depth = len(PurePosixPath(relpath).parts)
        if depth > self.caps.max_depth:
            raise ExtractionLimitExceeded(
                f"path depth {depth} exceeds cap of {self.caps.max_depth}: {relpath}"
            )

    def copy_capped(self, src: BinaryIO, dst: BinaryIO) -> int:
        written = 0
        while True:
            chunk = src.read(65536)
            if not chunk:
                return written
            written += len(chunk)
            self.bytes_written += len(chunk)
            if self.bytes_written > self.caps.max_bytes:
                raise ExtractionLimitExceeded(
                    f"decompressed size exceeds cap of {self.caps.max_bytes} bytes"
                )
            dst.write(chunk)


def _extract_stream_member(
    root: Path, relpath: str, stream: BinaryIO, tracker: _CapTracker,
    warnings: list[str],
) -> tuple[str, int] | None:
    if _is_unsafe_path(relpath):
        warnings.append(f"dropped unsafe archive entry: {relpath}")
        logger.warning("dropped unsafe archive entry: %s", relpath)
        return None
    tracker.admit_file(relpath)
    target = root / PurePosixPath(relpath)
    target.parent.mkdir(parents=True, exist_ok=True)
    with open(target, "wb") as dst:
        size = tracker.copy_capped(stream, dst)
    return (str(PurePosixPath(relpath)), size)


def _extract_tar(
    fileobj: BinaryIO, root: Path, tracker: _CapTracker, warnings: list[str],
    prefix: str = "",
) -> list[tuple[str, int]]:
    out: list[tuple[str, int]] = []
    try:
        with tarfile.open(fileobj=fileobj, mode="r:*") as tf:
            for member in tf:
                name = member.name
                if member.isdir():
                    continue
                if not member.isfile():
                    warnings.append(
                        f"dropped non-regular archive entry: {name} "
                        f"(type {member.type!r})"
                    )
                    logger.warning("dropped non-regular archive entry: %s", name)
                    continue
                src = tf.extractfile(member)
                if src is None:
                    continue
                rel = str(PurePosixPath(prefix) / name) if prefix else name
                extracted = _extract_stream_member(root, rel, src, tracker, warnings)
                if extracted:
                    out.append(extracted)
    except tarfile.TarError as exc:
        raise UnreadableArchive(f"cannot read tar archive: {exc}") from exc
    return out


def _extract_zip(
    fileobj: BinaryIO, root: Path, tracker: _CapTracker, warnings: list[str]
) -> list[tuple[str, int]]:
    out: list[tuple[str, int]] = []
    try:
        with zipfile.ZipFile(fileobj) as zf:
            for info in zf.infolist():
                if info.is_dir():
                    continue
                with zf.open(info) as src:
                    extracted = _extract_stream_member(
                        root, info.filename, src, tracker, warnings
                    )
                if extracted:
                    out.append(extracted)
    except zipfile.BadZipFile as exc:
        raise UnreadableArchive(f"cannot read zip archive: {exc}") from exc
    return out


def _looks_like_zip(data: bytes) -> bool:
    return data[:4] in (b"PK\x03\x04", b"PK\x05\x06", b"PK\x07\x08")


# ---------------------------------------------------------------------------
# corpus store
# ---------------------------------------------------------------------------

class CorpusStore:
    """On-disk corpus: ``store/<eco>/<name>/<version>/<digest>.archive`` plus
    ``work/<digest>/`` for unpacked trees."""

    def __init__(self, root: str | Path, caps: ExtractionCaps | None = None):
        self.root = Path(root)
        self.caps = caps or ExtractionCaps()
        (self.root / "store").mkdir(parents=True, exist_ok=True)
        (self.root / "work").mkdir(parents=True, exist_ok=True)

    def archive_path(self, ecosystem: Ecosystem, name: str, version: str,
                     digest: str) -> Path:
        return (
            self.root / "store" / ecosystem.value
            / _sanitize_component(name) / _sanitize_component(version or "_")
            / f"{digest}.archive"
        )

    def work_root(self, ref: PackageRef) -> Path:
        return self.root / "work" / ref.content_digest

    def ingest_archive(
        self, path: str | Path, ecosystem: Ecosystem, label: Label
    ) -> PackageRef:
        """Copy an archive into the store and identify it.

        Name/version come from the archive's manifest, falling back to
        filename conventions; when the two disagree the manifest wins and
        the discrepancy is logged.
        """
        path = Path(path)
        try:
            data = path.read_bytes()
        except OSError as exc:
            raise UnreadableArchive(f"cannot read {path}: {exc}") from exc
        digest = hashlib.sha256(data).hexdigest()

        sniffed = _sniff_name_version(data, ecosystem)
        from_filename = _parse_archive_filename(path.name, ecosystem)
        name, version = sniffed if sniffed else (None, None)
        if name is None:
            if from_filename is None:
                raise UnknownFormat(
                    f"{path.name}: no recognized manifest and no parseable filename"
                )
            name, version = from_filename
        else:
            if not version and from_filename:
                version = from_filename[1]
            if from_filename and (name, version) != from_filename:
                logger.info(
                    "manifest identity %s@%s differs from filename %s@%s for %s; "
                    "trusting manifest",
                    name, version, from_filename[0], from_filename[1], path.name,
                )
        version = version or ""

        for entry_name in _iter_entry_names(data):
            if _is_unsafe_path(entry_name):
                logger.warning(
                    "archive %s contains unsafe entry %r; it will be dropped "
                    "at unpack time", path.name, entry_name,
                )

        dest = self.archive_path(ecosystem, name, version, digest)
        dest.parent.mkdir(parents=True, exist_ok=True)
        if not dest.exists():
            dest.write_bytes(data)
        return PackageRef(
            ecosystem=ecosystem, name=name, version=version, label=label,
            archive_path=dest, content_digest=digest,
        )

    def unpack(self, ref: PackageRef) -> UnpackedTree:
        """Extract ``ref``'s archive into an isolated working root.

        Rubygems archives are expanded transparently: ``metadata.gz`` is
        decompressed to ``metadata.yml`` and ``data.tar.gz`` into ``data/``.
        """
        try:
            data = Path(ref.archive_path).read_bytes()
        except OSError as exc:
            raise UnreadableArchive(f"cannot read {ref.archive_path}: {exc}") from exc

        root = self.work_root(ref)
        if root.exists():
            shutil.rmtree(root)
        root.mkdir(parents=True)

        tracker = _CapTracker(self.caps)
        warnings: list[str] = []
        if _looks_like_zip(data):
            raw = _extract_zip(io.BytesIO(data), root, tracker, warnings)
        else:
            raw = _extract_tar(io.BytesIO(data), root, tracker, warnings)

        if ref.ecosystem is Ecosystem.RUBYGEMS:
            raw.extend(_expand_gem_payload(root, raw, tracker, warnings))

        files = []
        for relpath, size in sorted(raw):
            head = b""
            suffix = PurePosixPath(relpath).suffix.lower()
            if not suffix:
                with open(root / relpath, "rb") as fh:
                    head = fh.read(1024)
            files.append(
                FileEntry(relpath, size, classify_kind(relpath, ref.ecosystem, head))
            )
        return UnpackedTree(root=root, files=files)


def _expand_gem_payload(
    root: Path, raw: list[tuple[str, int]], tracker: _CapTracker,
    warnings: list[str],
) -> list[tuple[str, int]]:
    extracted: list[tuple[str, int]] = []
    names = {rel for rel, _ in raw}
    if "metadata.gz" in names:
        try:
            payload = gzip.decompress((root / "metadata.gz").read_bytes())
        except OSError as exc:
            warnings.append(f"cannot decompress metadata.gz: {exc}")
        else:
            entry = _extract_stream_member(
                root, "metadata.yml", io.BytesIO(payload), tracker, warnings
            )
            if entry:
                extracted.append(entry)
    if "data.tar.gz" in names:
        with open(root / "data.tar.gz", "rb") as fh:
            extracted.extend(_extract_tar(fh, root, tracker, warnings, prefix="data"))
    return extracted


# ---------------------------------------------------------------------------
# archive identification
# ---------------------------------------------------------------------------

_FILENAME_PATTERNS = {
    Ecosystem.NPM: re.compile(r"^(?P<name>.+)-(?P<version>\d[^-]*)\.(?:tgz|tar\.gz)$"),
    Ecosystem.PYPI: re.compile(
        r"^(?P<name>.+?)-(?P<version>\d[^-]*)"
        r"(?:-(?:py|cp|pp)[^-]*-[^-]+-[^-]+)?\.(?:tar\.gz|tar\.bz2|zip|whl)$"
    ),
    Ecosystem.RUBYGEMS: re.compile(r"^(?P<name>.+)-(?P<version>\d[^-]*)\.gem$"),
}


def _parse_archive_filename(
    filename: str, ecosystem: Ecosystem
) -> tuple[str, str] | None:
    match = _FILENAME_PATTERNS[ecosystem].match(filename)
    if not match:
        return None
    return match.group("name"), match.group("version")


def _iter_entry_names(data: bytes) -> Iterable[str]:
    try:
        if _looks_like_zip(data):
            with zipfile.ZipFile(io.BytesIO(data)) as zf:
                return [i.filename for i in zf.infolist()]
        with tarfile.open(fileobj=io.BytesIO(data), mode="r:*") as tf:
            return [m.name for m in tf.getmembers()]
    except (tarfile.TarError, zipfile.BadZipFile) as exc:
        raise UnreadableArchive(f"cannot list archive entries: {exc}") from exc


def _read_archive_member(data: bytes, wanted) -> bytes | None:
    """Return the bytes of the shallowest entry whose path satisfies *wanted*."""
    candidates: list[tuple[int, str]] = []
    if _looks_like_zip(data):
        with zipfile.ZipFile(io.BytesIO(data)) as zf:
            for info in zf.infolist():
                if not info.is_dir() and wanted(info.filename):
                    candidates.append(
                        (len(PurePosixPath(info.filename).parts), info.filename)
                    )
            if not candidates:
                return None
            _, best = min(candidates)
            return zf.read(best)
    with tarfile.open(fileobj=io.BytesIO(data), mode="r:*") as tf:
        members = {m.name: m for m in tf.getmembers() if m.isfile()}
        for name in members:
            if wanted(name):
                candidates.append((len(PurePosixPath(name).parts), name))
        if not candidates:
            return None
        _, best = min(candidates)
        extracted = tf.extractfile(members[best])
        return extracted.read() if extracted else None


def _sniff_name_version(data: bytes, ecosystem: Ecosystem) -> tuple[str, str] | None:
    """Pull (name, version) out of the archive's manifest, if present."""
    from . import metadata as md  # local import; metadata depends on corpus types

    try:
        if ecosystem is Ecosystem.NPM:
            blob = _read_archive_member(
                data, lambda n: PurePosixPath(n).name == "package.json"
            )
            if blob is None:
                return None
            parsed = md.parse_package_json(blob)
        elif ecosystem is Ecosystem.PYPI:
            blob = _read_archive_member(
                data, lambda n: PurePosixPath(n).name in ("PKG-INFO", "METADATA")
            )
            if blob is None:
                return None
            parsed = md.parse_pkg_info(blob)
        else:
            blob = _read_archive_member(
                data, lambda n: PurePosixPath(n).name == "metadata.gz"
            )
            if blob is not None:
                blob = gzip.decompress(blob)
            else:
                blob = _read_archive_member(
                    data, lambda n: PurePosixPath(n).name == "metadata.yml"
                )
            if blob is None:
                return None
            parsed = md.parse_gem_metadata(blob)
    except (tarfile.TarError, zipfile.BadZipFile, gzip.BadGzipFile) as exc:
        raise UnreadableArchive(f"cannot read archive: {exc}") from exc
    except MalformedManifest:
        return None
    if not parsed.name:
        return None
    return parsed.name, parsed.version
