"""The combined per-package record produced by the extraction pipeline.

One FgiProfile holds everything later stages consume: the package identity,
its parsed metadata and derived metadata features, the static call-site
profile, and the dynamic trace profile.  Any of the three analysis facets
may be absent (for example there is no trace log for most packages); the
feature encoder downstream represents absence explicitly instead of
guessing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import PackageRef
from .dynamic_trace import DynamicProfile
from .metadata import MetadataFeatures, PackageMetadata
from .static_analysis import StaticProfile


@dataclass
class FgiProfile:
    package: PackageRef
    metadata: PackageMetadata | None = None
    metadata_features: MetadataFeatures | None = None
    static: StaticProfile | None = None
    dynamic: DynamicProfile | None = None
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "package": self.package.to_dict(),
            "metadata": self.metadata.to_dict() if self.metadata else None,
            "metadata_features": (
                self.metadata_features.to_dict()
                if self.metadata_features else None
            ),
            "static": self.static.to_dict() if self.static else None,
            "dynamic": self.dynamic.to_dict() if self.dynamic else None,
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FgiProfile":
        package = PackageRef.from_dict(d["package"])
        return cls(
            package=package,
            metadata=(
                PackageMetadata.from_dict(d["metadata"])
                if d.get("metadata") else None
            ),
            metadata_features=(
                MetadataFeatures.from_dict(d["metadata_features"])
                if d.get("metadata_features") else None
            ),
            static=(
                StaticProfile.from_dict(d["static"], package=package)
                if d.get("static") else None
            ),
            dynamic=(
                DynamicProfile.from_dict(d["dynamic"], package=package)
                if d.get("dynamic") else None
            ),
            warnings=list(d.get("warnings", [])),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )

    @classmethod
    def load(cls, path: str | Path) -> "FgiProfile":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def save_profiles(profiles: list[FgiProfile], directory: str | Path) -> list[Path]:
    """Write one JSON file per profile, named by content digest (stable)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for profile in profiles:
        path = directory / f"{profile.package.content_digest}.json"
        profile.save(path)
        written.append(path)
    return written


def load_profiles(directory: str | Path) -> list[FgiProfile]:
    directory = Path(directory)
    return [
        FgiProfile.load(path) for path in sorted(directory.glob("*.json"))
    ]
