"""Curated catalog of sensitive function names, categorized per language.

The catalog drives both static call-site matching and trace-event
categorization. It ships as an editable CSV (``function,category,language``)
so deployments can extend or replace it via ``--catalog``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path


class Category(str, Enum):
    NETWORK = "network"
    FILE = "file"
    PROCESS = "process"
    OTHER = "other"


class Language(str, Enum):
    PYTHON = "python"
    JAVASCRIPT = "javascript"
    RUBY = "ruby"


#: Languages in lookup-priority order for language-agnostic (trace) matching.
_LANGUAGE_ORDER = (Language.PYTHON, Language.JAVASCRIPT, Language.RUBY)

_CATALOG_CATEGORIES = (Category.NETWORK, Category.FILE, Category.PROCESS)


@dataclass(frozen=True)
class CatalogEntry:
    function_name: str
    category: Category
    language: Language


@dataclass
class FunctionCatalog:
    """Immutable set of (function, category, language) rows.

    Matching is case-insensitive on the function name; the catalog spelling
    is canonical (a source call ``urlopen`` matches the entry ``URLopen``
    and is reported under the catalog spelling).
    """

    entries: list[CatalogEntry]
    version: str = "1.0"
    _by_language: dict[Language, dict[str, CatalogEntry]] = field(
        default_factory=dict, repr=False
    )

    def __post_init__(self):
        for entry in self.entries:
            lang_map = self._by_language.setdefault(entry.language, {})
            key = entry.function_name.lower()
            if key in lang_map:
                raise ValueError(
                    f"duplicate catalog entry {entry.function_name!r} "
                    f"for language {entry.language.value}"
                )
            if entry.category not in _CATALOG_CATEGORIES:
                raise ValueError(
                    f"catalog entry {entry.function_name!r}: category must be "
                    "network, file, or process"
                )
            lang_map[key] = entry

    def lookup(self, name: str, language: Language) -> CatalogEntry | None:
        """Case-insensitive lookup of a terminal function name."""
        return self._by_language.get(language, {}).get(name.lower())

    def lookup_any_language(self, name: str) -> CatalogEntry | None:
        """Lookup across languages, in fixed priority order (deterministic)."""
        key = name.lower()
        for lang in _LANGUAGE_ORDER:
            entry = self._by_language.get(lang, {}).get(key)
            if entry is not None:
                return entry
        return None

    def names_for(self, language: Language) -> set[str]:
        return {e.function_name for e in self.entries if e.language == language}


def _parse_catalog_rows(text: str, version: str) -> FunctionCatalog:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header != ["function", "category", "language"]:
        raise ValueError(f"bad catalog header: {header!r}")
    entries = []
    for row in reader:
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != 3:
            raise ValueError(f"bad catalog row: {row!r}")
        name, category, language = (cell.strip() for cell in row)
        entries.append(CatalogEntry(name, Category(category), Language(language)))
    return FunctionCatalog(entries=entries, version=version)


def load_catalog(path: str | Path) -> FunctionCatalog:
    """Load a catalog CSV from disk (``--catalog`` override)."""
    path = Path(path)
    return _parse_catalog_rows(path.read_text(encoding="utf-8"), version=path.stem)


def default_catalog() -> FunctionCatalog:
    """The catalog shipped with the package."""
    text = (
        resources.files("fgiscan.data")
        .joinpath("function_catalog.csv")
        .read_text(encoding="utf-8")
    )
    return _parse_catalog_rows(text, version="builtin-1.0")


def load_syscall_categories() -> dict[str, Category]:
    """Shipped syscall-name -> category table used by the trace parser."""
    text = (
        resources.files("fgiscan.data")
        .joinpath("syscall_categories.csv")
        .read_text(encoding="utf-8")
    )
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header != ["syscall", "category"]:
        raise ValueError(f"bad syscall table header: {header!r}")
    table = {}
    for row in reader:
        if not row:
            continue
        name, category = row[0].strip(), Category(row[1].strip())
        table[name] = category
    return table
