"""Shared builders for test archives and corpora.

Everything here builds bytes in memory with pinned mtimes so that the
same inputs always produce the same archive bytes (several tests compare
content digests across runs).
"""

from __future__ import annotations

import gzip
import io
import json
import tarfile
import zipfile
from pathlib import Path

PINNED_MTIME = 1700000000


def tar_add_bytes(tf: tarfile.TarFile, arcname: str, data: bytes,
                  mode: int = 0o644) -> None:
    info = tarfile.TarInfo(arcname)
    info.size = len(data)
    info.mtime = PINNED_MTIME
    info.mode = mode
    tf.addfile(info, io.BytesIO(data))


def build_tar_gz(members: dict[str, bytes]) -> bytes:
    buf = io.BytesIO()
    with tarfile.open(fileobj=buf, mode="w") as tf:
        for arcname in sorted(members):
            tar_add_bytes(tf, arcname, members[arcname])
    return gzip.compress(buf.getvalue(), mtime=0)


def build_zip(members: dict[str, bytes]) -> bytes:
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", zipfile.ZIP_DEFLATED) as zf:
        for arcname in sorted(members):
            info = zipfile.ZipInfo(arcname, date_time=(2023, 11, 14, 22, 13, 20))
            zf.writestr(info, members[arcname])
    return buf.getvalue()


def make_npm_tgz(path: Path, name: str = "left-pad", version: str = "1.0.0",
                 files: dict[str, bytes] | None = None,
                 package_json: dict | None = None) -> Path:
    """npm-style .tgz: everything under a package/ prefix."""
    if package_json is None:
        package_json = {
            "name": name,
            "version": version,
            "description": f"test fixture {name}",
        }
    members = {"package/package.json": json.dumps(package_json).encode()}
    for rel, data in (files or {}).items():
        members[f"package/{rel}"] = data
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(build_tar_gz(members))
    return path


def make_pypi_sdist(path: Path, name: str = "requests-shim",
                    version: str = "0.1.0",
                    files: dict[str, bytes] | None = None,
                    pkg_info: str | None = None,
                    as_zip: bool = False) -> Path:
    """PyPI-style sdist: a single <name>-<version>/ top directory."""
    top = f"{name}-{version}"
    if pkg_info is None:
        pkg_info = (
            "Metadata-Version: 2.1\n"
            f"Name: {name}\n"
            f"Version: {version}\n"
            f"Summary: test fixture {name}\n"
        )
    members = {f"{top}/PKG-INFO": pkg_info.encode()}
    for rel, data in (files or {}).items():
        members[f"{top}/{rel}"] = data
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(build_zip(members) if as_zip else build_tar_gz(members))
    return path


def make_gem(path: Path, name: str = "colorize-lite", version: str = "0.2.0",
             files: dict[str, bytes] | None = None,
             metadata_yaml: str | None = None) -> Path:
    """RubyGems .gem: plain tar holding metadata.gz and data.tar.gz."""
    if metadata_yaml is None:
        metadata_yaml = (
            "--- !ruby/object:Gem::Specification\n"
            f"name: {name}\n"
            "version: !ruby/object:Gem::Version\n"
            f"  version: {version}\n"
            f"summary: test fixture {name}\n"
            "authors:\n"
            "- Fixture Author\n"
        )
    data_tar_gz = build_tar_gz(files or {})
    metadata_gz = gzip.compress(metadata_yaml.encode(), mtime=0)

    buf = io.BytesIO()
    with tarfile.open(fileobj=buf, mode="w") as outer:
        tar_add_bytes(outer, "metadata.gz", metadata_gz)
        tar_add_bytes(outer, "data.tar.gz", data_tar_gz)
        tar_add_bytes(outer, "checksums.yaml.gz", gzip.compress(b"---\n", mtime=0))
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(buf.getvalue())
    return path


def make_traversal_tgz(path: Path) -> Path:
    """Archive laced with traversal, absolute-path and symlink members."""
    buf = io.BytesIO()
    with tarfile.open(fileobj=buf, mode="w") as tf:
        tar_add_bytes(tf, "package/package.json",
                      b'{"name": "sneaky", "version": "9.9.9"}')
        tar_add_bytes(tf, "package/ok.js", b"var x = 1;\n")
        tar_add_bytes(tf, "../escape.txt", b"outside\n")
        tar_add_bytes(tf, "/etc/injected.txt", b"outside\n")
        link = tarfile.TarInfo("package/evil_link")
        link.type = tarfile.SYMTYPE
        link.linkname = "/etc/passwd"
        link.mtime = PINNED_MTIME
        tf.addfile(link)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(gzip.compress(buf.getvalue(), mtime=0))
    return path


def write_minimal_profile_corpus(n_legit: int, n_malicious: int, seed: int = 0):
    """Small labeled profile list via the synthetic generator."""
    from fgiscan.synthetic import generate_corpus

    return generate_corpus(n_legit, n_malicious, seed=seed)
