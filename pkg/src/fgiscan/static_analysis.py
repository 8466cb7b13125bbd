"""Static call-site extraction and corpus-level set algebra.

A package's static profile is the list of call sites whose terminal name
segment matches the sensitive-function catalog for the file's language
(``os.path.join`` matches ``join`` only if the catalog lists ``join``).
Matching is case-insensitive; the recorded name is the catalog spelling,
so downstream counting is stable regardless of source casing.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

from .catalog import Category, FunctionCatalog, Language
from .corpus import FileKind, Label, PackageRef, UnpackedTree
from .errors import EmptyCorpus, ParseError
from .syntax import SyntaxNode, parse_source

logger = logging.getLogger(__name__)

EXTENSION_LANGUAGE = {
    ".py": Language.PYTHON,
    ".js": Language.JAVASCRIPT,
    ".mjs": Language.JAVASCRIPT,
    ".cjs": Language.JAVASCRIPT,
    ".rb": Language.RUBY,
}

_COUNTED_CATEGORIES = (Category.NETWORK, Category.FILE, Category.PROCESS)


@dataclass(frozen=True)
class CallSite:
    """One matched call: catalog spelling plus where/how it was written."""

    function_name: str
    category: Category
    language: Language
    name_path: str
    line: int
    col: int
    argument_count: int
    source_path: str = ""

    def to_dict(self) -> dict:
        return {
            "function_name": self.function_name,
            "category": self.category.value,
            "language": self.language.value,
            "name_path": self.name_path,
            "line": self.line,
            "col": self.col,
            "argument_count": self.argument_count,
            "source_path": self.source_path,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CallSite":
        return cls(
            function_name=d["function_name"],
            category=Category(d["category"]),
            language=Language(d["language"]),
            name_path=d["name_path"],
            line=d["line"],
            col=d["col"],
            argument_count=d["argument_count"],
            source_path=d.get("source_path", ""),
        )


@dataclass
class StaticProfile:
    package: PackageRef | None
    call_sites: list[CallSite] = field(default_factory=list)
    parse_failures: list[str] = field(default_factory=list)
    source_file_count: int = 0

    @property
    def per_category_counts(self) -> dict[Category, int]:
        counts = {category: 0 for category in _COUNTED_CATEGORIES}
        for site in self.call_sites:
            counts[site.category] += 1
        return counts

    @property
    def distinct_function_names(self) -> set[str]:
        return {site.function_name for site in self.call_sites}

    def to_dict(self) -> dict:
        return {
            "call_sites": [site.to_dict() for site in self.call_sites],
            "parse_failures": list(self.parse_failures),
            "source_file_count": self.source_file_count,
        }

    @classmethod
    def from_dict(cls, d: dict, package: PackageRef | None = None) -> "StaticProfile":
        return cls(
            package=package,
            call_sites=[CallSite.from_dict(s) for s in d.get("call_sites", [])],
            parse_failures=list(d.get("parse_failures", [])),
            source_file_count=d.get("source_file_count", 0),
        )


def extract_calls(
    tree: SyntaxNode,
    catalog: FunctionCatalog,
    language: Language,
    source_path: str = "",
) -> list[CallSite]:
    """Catalog-matched call sites in depth-first preorder (document order)."""
    sites: list[CallSite] = []
    for node in tree.walk():
        if node.kind != "call" or not node.name_path:
            continue
        terminal = node.name_path.rsplit(".", 1)[-1]
        entry = catalog.lookup(terminal, language)
        if entry is None:
            continue
        sites.append(CallSite(
            function_name=entry.function_name,
            category=entry.category,
            language=language,
            name_path=node.name_path,
            line=node.line,
            col=node.col,
            argument_count=node.argument_count or 0,
            source_path=source_path,
        ))
    return sites


def static_profile(
    tree: UnpackedTree,
    catalog: FunctionCatalog,
    package: PackageRef | None = None,
) -> StaticProfile:
    """Profile every source file in an unpacked tree.

    Files are visited in sorted path order so output is deterministic.
    Unparseable files are recorded as warnings, never fatal: one bad file
    must not hide the rest of a package.
    """
    profile = StaticProfile(package=package)
    for entry in sorted(tree.files):
        if entry.kind != FileKind.SOURCE:
            continue
        language = EXTENSION_LANGUAGE.get(Path(entry.path).suffix.lower())
        if language is None:
            continue
        profile.source_file_count += 1
        blob = (Path(tree.root) / entry.path).read_bytes()
        try:
            parsed = parse_source(blob, language)
        except ParseError as exc:
            note = (f"{entry.path}: {exc} "
                    f"(line {exc.line}, col {exc.column})")
            profile.parse_failures.append(note)
            logger.warning("parse failure in %s: %s", entry.path, exc)
            continue
        profile.call_sites.extend(
            extract_calls(parsed, catalog, language, source_path=entry.path)
        )
    return profile


@dataclass
class SetAlgebraResult:
    """Name-set comparison of the malicious corpus against the legitimate one."""

    s_same: set[str]
    s_r_minus: set[str]
    s_m_minus: set[str]
    per_function_package_counts: dict[tuple[str, Label], int]


def set_algebra(
    malicious: list[StaticProfile],
    legitimate: list[StaticProfile],
) -> SetAlgebraResult:
    """Intersection/differences of distinct function names, with package counts.

    A function counts once per package however often it appears inside, so
    the counts answer "how many packages use this" rather than "how often".
    """
    if not malicious and not legitimate:
        raise EmptyCorpus("set algebra needs at least one profile")

    counts: dict[tuple[str, Label], int] = {}
    names_m: set[str] = set()
    names_r: set[str] = set()
    for profiles, label, bucket in (
        (malicious, Label.MALICIOUS, names_m),
        (legitimate, Label.LEGITIMATE, names_r),
    ):
        for profile in profiles:
            for name in profile.distinct_function_names:
                bucket.add(name)
                key = (name, label)
                counts[key] = counts.get(key, 0) + 1

    return SetAlgebraResult(
        s_same=names_m & names_r,
        s_r_minus=names_r - names_m,
        s_m_minus=names_m - names_r,
        per_function_package_counts=counts,
    )
