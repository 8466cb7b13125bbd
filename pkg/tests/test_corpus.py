import hashlib
import json

import pytest

from fgiscan.corpus import (
    CorpusStore,
    DatasetManifest,
    Ecosystem,
    ExtractionCaps,
    FileKind,
    Label,
    PackageRef,
    classify_kind,
    dedup,
)
from fgiscan.errors import ExtractionLimitExceeded, UnknownFormat, UnreadableArchive

from helpers import make_gem, make_npm_tgz, make_pypi_sdist, make_traversal_tgz


# ---------------------------------------------------------------- ingest

def test_ingest_npm_archive(tmp_path):
    archive = make_npm_tgz(tmp_path / "left-pad-1.0.0.tgz",
                           files={"index.js": b"module.exports = 1;\n"})
    store = CorpusStore(tmp_path / "store")
    ref = store.ingest_archive(archive, Ecosystem.NPM, Label.LEGITIMATE)

    assert ref.name == "left-pad"
    assert ref.version == "1.0.0"
    assert ref.label is Label.LEGITIMATE
    assert ref.content_digest == hashlib.sha256(archive.read_bytes()).hexdigest()
    stored = tmp_path / "store" / "store" / "npm" / "left-pad" / "1.0.0"
    assert (stored / f"{ref.content_digest}.archive").is_file()


def test_ingest_prefers_manifest_identity_over_filename(tmp_path):
    # filename claims wrong-2.0.0 but package.json says left-pad 1.5.0
    archive = make_npm_tgz(tmp_path / "wrong-2.0.0.tgz",
                           name="left-pad", version="1.5.0")
    store = CorpusStore(tmp_path / "store")
    ref = store.ingest_archive(archive, Ecosystem.NPM, Label.UNKNOWN)
    assert (ref.name, ref.version) == ("left-pad", "1.5.0")


def test_ingest_falls_back_to_filename(tmp_path):
    from helpers import build_tar_gz

    # no manifest inside, but the filename is parseable
    archive = tmp_path / "mystery-3.2.1.tgz"
    archive.write_bytes(build_tar_gz({"package/blob.js": b"1;\n"}))
    store = CorpusStore(tmp_path / "store")
    ref = store.ingest_archive(archive, Ecosystem.NPM, Label.UNKNOWN)
    assert (ref.name, ref.version) == ("mystery", "3.2.1")


def test_ingest_unidentifiable_archive_raises(tmp_path):
    from helpers import build_tar_gz

    archive = tmp_path / "blob.tgz"  # no manifest, no version in the name
    archive.write_bytes(build_tar_gz({"package/blob.js": b"1;\n"}))
    store = CorpusStore(tmp_path / "store")
    with pytest.raises(UnknownFormat):
        store.ingest_archive(archive, Ecosystem.NPM, Label.UNKNOWN)


def test_ingest_missing_file_raises(tmp_path):
    store = CorpusStore(tmp_path / "store")
    with pytest.raises(UnreadableArchive):
        store.ingest_archive(tmp_path / "nope.tgz", Ecosystem.NPM, Label.UNKNOWN)


def test_ingest_sanitizes_scoped_names(tmp_path):
    archive = make_npm_tgz(tmp_path / "scoped-1.0.0.tgz",
                           package_json={"name": "@acme/runner", "version": "1.0.0"})
    store = CorpusStore(tmp_path / "store")
    ref = store.ingest_archive(archive, Ecosystem.NPM, Label.LEGITIMATE)
    assert ref.name == "@acme/runner"
    # store directory must not contain a path separator from the name
    assert "@acme_runner" in str(ref.archive_path)


# ---------------------------------------------------------------- unpack

def test_unpack_classifies_npm_files(tmp_path):
    archive = make_npm_tgz(
        tmp_path / "pkg-1.0.0.tgz",
        name="pkg",
        files={
            "index.js": b"var x = 1;\n",
            "README.md": b"# pkg\n",
            "native.so": b"\x7fELF junk",
            "LICENSE": b"MIT\n",
        },
    )
    store = CorpusStore(tmp_path / "store")
    ref = store.ingest_archive(archive, Ecosystem.NPM, Label.LEGITIMATE)
    tree = store.unpack(ref)

    kinds = {entry.path: entry.kind for entry in tree.files}
    assert kinds["package/package.json"] is FileKind.MANIFEST
    assert kinds["package/index.js"] is FileKind.SOURCE
    assert kinds["package/README.md"] is FileKind.RESOURCE
    assert kinds["package/native.so"] is FileKind.BINARY
    assert kinds["package/LICENSE"] is FileKind.OTHER
    assert [e.path for e in tree.files] == sorted(e.path for e in tree.files)
    assert len(tree.by_kind(FileKind.SOURCE)) == 1
    assert (tree.root / "package" / "index.js").is_file()


def test_unpack_zip_sdist(tmp_path):
    archive = make_pypi_sdist(
        tmp_path / "shim-0.1.0.zip", name="shim", version="0.1.0",
        files={"shim/__init__.py": b"x = 1\n"}, as_zip=True,
    )
    store = CorpusStore(tmp_path / "store")
    ref = store.ingest_archive(archive, Ecosystem.PYPI, Label.LEGITIMATE)
    tree = store.unpack(ref)
    kinds = {entry.path: entry.kind for entry in tree.files}
    assert kinds["shim-0.1.0/PKG-INFO"] is FileKind.MANIFEST
    assert kinds["shim-0.1.0/shim/__init__.py"] is FileKind.SOURCE


def test_unpack_expands_gem_payload(tmp_path):
    archive = make_gem(
        tmp_path / "colorize-lite-0.2.0.gem",
        files={"lib/colorize_lite.rb": b"def tint(s)\n  s\nend\n"},
    )
    store = CorpusStore(tmp_path / "store")
    ref = store.ingest_archive(archive, Ecosystem.RUBYGEMS, Label.LEGITIMATE)
    assert (ref.name, ref.version) == ("colorize-lite", "0.2.0")

    tree = store.unpack(ref)
    kinds = {entry.path: entry.kind for entry in tree.files}
    assert kinds["metadata.yml"] is FileKind.MANIFEST
    assert kinds["data/lib/colorize_lite.rb"] is FileKind.SOURCE
    assert (tree.root / "data" / "lib" / "colorize_lite.rb").is_file()


def test_unpack_drops_traversal_and_symlink_members(tmp_path):
    archive = make_traversal_tgz(tmp_path / "sneaky-9.9.9.tgz")
    store = CorpusStore(tmp_path / "store")
    ref = store.ingest_archive(archive, Ecosystem.NPM, Label.MALICIOUS)
    tree = store.unpack(ref)

    paths = {entry.path for entry in tree.files}
    assert paths == {"package/package.json", "package/ok.js"}
    # nothing may materialize outside the working root
    assert not (tree.root.parent / "escape.txt").exists()
    assert not (tree.root / "package" / "evil_link").exists()


def test_unpack_is_repeatable(tmp_path):
    archive = make_npm_tgz(tmp_path / "pkg-1.0.0.tgz", name="pkg",
                           files={"a.js": b"1;\n"})
    store = CorpusStore(tmp_path / "store")
    ref = store.ingest_archive(archive, Ecosystem.NPM, Label.LEGITIMATE)
    first = store.unpack(ref)
    second = store.unpack(ref)
    assert [e.path for e in first.files] == [e.path for e in second.files]


def test_unpack_enforces_file_count_cap(tmp_path):
    files = {f"f{i}.js": b"1;\n" for i in range(6)}
    archive = make_npm_tgz(tmp_path / "many-1.0.0.tgz", name="many", files=files)
    store = CorpusStore(tmp_path / "store",
                        caps=ExtractionCaps(max_files=3))
    ref = store.ingest_archive(archive, Ecosystem.NPM, Label.UNKNOWN)
    with pytest.raises(ExtractionLimitExceeded):
        store.unpack(ref)


def test_unpack_enforces_byte_cap(tmp_path):
    archive = make_npm_tgz(tmp_path / "big-1.0.0.tgz", name="big",
                           files={"blob.js": b"x" * 4096})
    store = CorpusStore(tmp_path / "store",
                        caps=ExtractionCaps(max_bytes=1024))
    ref = store.ingest_archive(archive, Ecosystem.NPM, Label.UNKNOWN)
    with pytest.raises(ExtractionLimitExceeded):
        store.unpack(ref)


def test_unpack_enforces_depth_cap(tmp_path):
    deep = "/".join(["d"] * 6) + "/leaf.js"
    archive = make_npm_tgz(tmp_path / "deep-1.0.0.tgz", name="deep",
                           files={deep: b"1;\n"})
    store = CorpusStore(tmp_path / "store",
                        caps=ExtractionCaps(max_depth=4))
    ref = store.ingest_archive(archive, Ecosystem.NPM, Label.UNKNOWN)
    with pytest.raises(ExtractionLimitExceeded):
        store.unpack(ref)


def test_default_caps_are_generous():
    caps = ExtractionCaps()
    assert caps.max_bytes == 256 * 1024 * 1024
    assert caps.max_files == 50_000
    assert caps.max_depth == 32


# ------------------------------------------------------- classify_kind

def test_classify_kind_by_ecosystem():
    assert classify_kind("pkg/setup.py", Ecosystem.PYPI) is FileKind.MANIFEST
    assert classify_kind("pkg/setup.py", Ecosystem.NPM) is FileKind.OTHER
    assert classify_kind("a/b.rb", Ecosystem.RUBYGEMS) is FileKind.SOURCE
    assert classify_kind("a/b.rb", Ecosystem.PYPI) is FileKind.OTHER
    assert classify_kind("x.gemspec", Ecosystem.RUBYGEMS) is FileKind.MANIFEST


def test_classify_kind_head_sniff():
    assert classify_kind("bin/tool", Ecosystem.NPM, head=b"\x7fELF\0\0") is FileKind.BINARY
    assert classify_kind("bin/tool", Ecosystem.NPM, head=b"#!/bin/sh\n") is FileKind.OTHER


# ------------------------------------------------- manifest and dedup

def _ref(name, version, digest, ecosystem=Ecosystem.NPM, label=Label.UNKNOWN):
    from pathlib import Path

    return PackageRef(ecosystem=ecosystem, name=name, version=version,
                      label=label, archive_path=Path(f"/tmp/{digest}.archive"),
                      content_digest=digest)


def test_manifest_round_trip(tmp_path):
    manifest = DatasetManifest(entries=[
        _ref("a", "1.0.0", "aa" * 32),
        _ref("b", "2.0.0", "bb" * 32, ecosystem=Ecosystem.PYPI,
             label=Label.MALICIOUS),
    ])
    path = tmp_path / "manifest.ldjson"
    manifest.save(path)

    lines = path.read_text().splitlines()
    assert len(lines) == 2
    assert json.loads(lines[0])["name"] == "a"

    loaded = DatasetManifest.load(path)
    assert loaded.entries == manifest.entries
    assert loaded.counts[(Ecosystem.PYPI, Label.MALICIOUS)] == 1


def test_dedup_keeps_smallest_digest_and_first_order():
    manifest = DatasetManifest(entries=[
        _ref("b", "1.0.0", "ff" * 32),
        _ref("a", "1.0.0", "cc" * 32),
        _ref("b", "1.0.0", "aa" * 32),  # same triple, smaller digest wins
        _ref("a", "2.0.0", "dd" * 32),
    ])
    result = dedup(manifest)
    assert [(r.name, r.version) for r in result.entries] == [
        ("b", "1.0.0"), ("a", "1.0.0"), ("a", "2.0.0"),
    ]
    assert result.entries[0].content_digest == "aa" * 32


def test_dedup_is_idempotent():
    manifest = DatasetManifest(entries=[
        _ref("x", "1.0.0", "11" * 32),
        _ref("x", "1.0.0", "22" * 32),
        _ref("y", "1.0.0", "33" * 32),
    ])
    once = dedup(manifest)
    twice = dedup(once)
    assert once.entries == twice.entries


def test_package_ref_round_trip():
    ref = _ref("pkg", "1.2.3", "ab" * 32, label=Label.MALICIOUS)
    assert PackageRef.from_dict(ref.to_dict()) == ref
