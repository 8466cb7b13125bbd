"""Package metadata: manifest parsing, registry lookups, and derived features.

Manifests are parsed without executing any package code, which is why
``setup.py`` is never evaluated (PKG-INFO / METADATA / setup.cfg /
pyproject.toml cover sdists and wheels) and gemspecs get a line-level
regex fallback instead of a Ruby interpreter.
"""

from __future__ import annotations

import configparser
import json
import logging
import os
import re
import time
import urllib.error
import urllib.parse
import urllib.request
from dataclasses import dataclass, field
from email.parser import Parser as RfcHeaderParser
from pathlib import Path, PurePosixPath

import yaml

from .corpus import Ecosystem, UnpackedTree, _sanitize_component
from .errors import (
    MalformedManifest,
    NetworkError,
    NoManifestFound,
    NotFound,
    SchemaError,
)

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

logger = logging.getLogger(__name__)

CACHE_DIR_ENV = "FGI_CACHE_DIR"

DEFAULT_ENDPOINTS = {
    Ecosystem.NPM: "https://registry.npmjs.org",
    Ecosystem.PYPI: "https://pypi.org",
    Ecosystem.RUBYGEMS: "https://rubygems.org",
}

_WORD_RE = re.compile(r"[^\W_]+", re.UNICODE)


@dataclass(frozen=True)
class Person:
    """Author or maintainer; at least one of name/email is non-empty."""

    name: str = ""
    email: str = ""

    def __post_init__(self):
        if not self.name and not self.email:
            raise ValueError("Person needs a name or an email")

    def to_dict(self) -> dict:
        return {"name": self.name, "email": self.email}

    @classmethod
    def from_dict(cls, d: dict) -> "Person":
        return cls(name=d.get("name", ""), email=d.get("email", ""))


@dataclass
class PackageMetadata:
    ecosystem: Ecosystem
    name: str
    version: str = ""
    description: str = ""
    authors: list[Person] = field(default_factory=list)
    maintainers: list[Person] = field(default_factory=list)
    dependencies: list[str] = field(default_factory=list)
    project_url: str = ""
    repository_url: str = ""
    downloads_count: int | None = None

    def to_dict(self) -> dict:
        return {
            "ecosystem": self.ecosystem.value,
            "name": self.name,
            "version": self.version,
            "description": self.description,
            "authors": [p.to_dict() for p in self.authors],
            "maintainers": [p.to_dict() for p in self.maintainers],
            "dependencies": list(self.dependencies),
            "project_url": self.project_url,
            "repository_url": self.repository_url,
            "downloads_count": self.downloads_count,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PackageMetadata":
        return cls(
            ecosystem=Ecosystem(d["ecosystem"]),
            name=d.get("name", ""),
            version=d.get("version", ""),
            description=d.get("description", ""),
            authors=[Person.from_dict(p) for p in d.get("authors", [])],
            maintainers=[Person.from_dict(p) for p in d.get("maintainers", [])],
            dependencies=list(d.get("dependencies", [])),
            project_url=d.get("project_url", ""),
            repository_url=d.get("repository_url", ""),
            downloads_count=d.get("downloads_count"),
        )


@dataclass(frozen=True)
class MetadataFeatures:
    """Numeric view of one package's registry-visible hygiene signals."""

    description_length: int
    description_token_count: int
    author_maintainer_count: int
    dependency_count: int
    has_url: bool
    has_git_url: bool

    def to_dict(self) -> dict:
        return {
            "description_length": self.description_length,
            "description_token_count": self.description_token_count,
            "author_maintainer_count": self.author_maintainer_count,
            "dependency_count": self.dependency_count,
            "has_url": self.has_url,
            "has_git_url": self.has_git_url,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetadataFeatures":
        return cls(
            description_length=d["description_length"],
            description_token_count=d["description_token_count"],
            author_maintainer_count=d["author_maintainer_count"],
            dependency_count=d["dependency_count"],
            has_url=bool(d["has_url"]),
            has_git_url=bool(d["has_git_url"]),
        )


def metadata_features(md: PackageMetadata) -> MetadataFeatures:
    description = md.description or ""
    people = {
        (p.name.strip().lower(), p.email.strip().lower())
        for p in (*md.authors, *md.maintainers)
    }
    urls = f"{md.project_url} {md.repository_url}".lower()
    return MetadataFeatures(
        description_length=len(description),
        description_token_count=len(_WORD_RE.findall(description)),
        author_maintainer_count=len(people),
        dependency_count=len(md.dependencies),
        has_url=bool(md.project_url or md.repository_url),
        has_git_url="git" in urls,
    )


# ---------------------------------------------------------------------------
# manifest discovery
# ---------------------------------------------------------------------------

def parse_manifest(tree: UnpackedTree, ecosystem: Ecosystem) -> PackageMetadata:
    """Parse the highest-priority manifest found in an unpacked tree.

    Priority: npm package.json; pypi PKG-INFO > METADATA > setup.cfg >
    pyproject.toml; rubygems metadata.yml > *.gemspec.  Raises
    NoManifestFound / MalformedManifest.
    """
    if ecosystem is Ecosystem.NPM:
        order = [("package.json", parse_package_json)]
    elif ecosystem is Ecosystem.PYPI:
        order = [
            ("PKG-INFO", parse_pkg_info),
            ("METADATA", parse_pkg_info),
            ("setup.cfg", parse_setup_cfg),
            ("pyproject.toml", parse_pyproject),
        ]
    else:
        order = [("metadata.yml", parse_gem_metadata), (".gemspec", parse_gemspec)]

    for wanted, parser in order:
        candidates = []
        for entry in tree.files:
            base = PurePosixPath(entry.path).name
            hit = base.endswith(wanted) if wanted.startswith(".") else base == wanted
            if hit:
                candidates.append((len(PurePosixPath(entry.path).parts), entry.path))
        if not candidates:
            continue
        _, best = min(candidates)
        blob = (Path(tree.root) / best).read_bytes()
        parsed = parser(blob)
        parsed.ecosystem = ecosystem
        return parsed
    raise NoManifestFound(f"no recognized {ecosystem.value} manifest in tree")


# ---------------------------------------------------------------------------
# npm
# ---------------------------------------------------------------------------

_NPM_PERSON_RE = re.compile(
    r"^\s*(?P<name>[^<(]*?)\s*(?:<(?P<email>[^>]*)>)?\s*(?:\([^)]*\))?\s*$"
)


def _parse_npm_person(value) -> Person | None:
    if isinstance(value, dict):
        name = str(value.get("name", "") or "")
        email = str(value.get("email", "") or "")
    elif isinstance(value, str):
        match = _NPM_PERSON_RE.match(value)
        if not match:
            return None
        name = (match.group("name") or "").strip()
        email = (match.group("email") or "").strip()
    else:
        return None
    if not name and not email:
        return None
    return Person(name=name, email=email)


def parse_package_json(blob: bytes) -> PackageMetadata:
    try:
        doc = json.loads(blob.decode("utf-8", errors="replace"))
    except json.JSONDecodeError as exc:
        raise MalformedManifest(f"package.json: {exc}") from exc
    if not isinstance(doc, dict):
        raise MalformedManifest("package.json: top level is not an object")

    authors = []
    person = _parse_npm_person(doc.get("author"))
    if person:
        authors.append(person)
    for extra in doc.get("contributors") or []:
        person = _parse_npm_person(extra)
        if person:
            authors.append(person)
    maintainers = []
    for entry in doc.get("maintainers") or []:
        person = _parse_npm_person(entry)
        if person:
            maintainers.append(person)

    repo = doc.get("repository")
    if isinstance(repo, dict):
        repo_url = str(repo.get("url", "") or "")
    elif isinstance(repo, str):
        repo_url = repo
    else:
        repo_url = ""

    deps = doc.get("dependencies")
    dependencies = sorted(deps) if isinstance(deps, dict) else []

    return PackageMetadata(
        ecosystem=Ecosystem.NPM,
        name=str(doc.get("name", "") or ""),
        version=str(doc.get("version", "") or ""),
        description=str(doc.get("description", "") or ""),
        authors=authors,
        maintainers=maintainers,
        dependencies=dependencies,
        project_url=str(doc.get("homepage", "") or ""),
        repository_url=repo_url,
    )


# ---------------------------------------------------------------------------
# pypi
# ---------------------------------------------------------------------------

_DIST_NAME_RE = re.compile(r"^\s*([A-Za-z0-9][A-Za-z0-9._-]*)")


def _clean_requirement(spec: str) -> str | None:
    """'requests (>=2.0) ; extra == "x"' -> 'requests'."""
    spec = spec.split(";", 1)[0]
    match = _DIST_NAME_RE.match(spec)
    return match.group(1) if match else None


def _split_rfc_people(names: str, emails: str) -> list[Person]:
    people = []
    if emails:
        # "A <a@x>, B <b@y>" or bare addresses
        for part in re.split(r",(?![^<]*>)", emails):
            part = part.strip()
            if not part:
                continue
            if "<" not in part and "@" in part:
                people.append(Person(email=part))
                continue
            person = _parse_npm_person(part)
            if person:
                people.append(person)
    if names and not people:
        for part in names.split(","):
            part = part.strip()
            if part:
                people.append(Person(name=part))
    elif names and len(people) == 1 and not people[0].name:
        people[0] = Person(name=names.strip(), email=people[0].email)
    return people


def parse_pkg_info(blob: bytes) -> PackageMetadata:
    try:
        text = blob.decode("utf-8")
    except UnicodeDecodeError:
        text = blob.decode("latin-1")
    msg = RfcHeaderParser().parsestr(text)
    if msg.get("Name") is None and msg.get("Metadata-Version") is None:
        raise MalformedManifest("PKG-INFO: missing Name and Metadata-Version")

    description = msg.get("Summary", "") or ""
    if not description:
        body = msg.get_payload()
        if isinstance(body, str):
            description = body.strip()

    dependencies = []
    for spec in msg.get_all("Requires-Dist") or []:
        cleaned = _clean_requirement(spec)
        if cleaned and cleaned not in dependencies:
            dependencies.append(cleaned)

    authors = _split_rfc_people(msg.get("Author", ""), msg.get("Author-email", ""))
    maintainers = _split_rfc_people(
        msg.get("Maintainer", ""), msg.get("Maintainer-email", "")
    )

    project_url = msg.get("Home-page", "") or ""
    repository_url = ""
    for line in msg.get_all("Project-URL") or []:
        label, _, url = line.partition(",")
        label, url = label.strip().lower(), url.strip()
        if not url:
            continue
        if label in ("repository", "source", "source code", "github", "code"):
            repository_url = repository_url or url
        elif not project_url:
            project_url = url

    return PackageMetadata(
        ecosystem=Ecosystem.PYPI,
        name=msg.get("Name", "") or "",
        version=msg.get("Version", "") or "",
        description=description,
        authors=authors,
        maintainers=maintainers,
        dependencies=dependencies,
        project_url=project_url,
        repository_url=repository_url,
    )


def parse_setup_cfg(blob: bytes) -> PackageMetadata:
    parser = configparser.ConfigParser()
    try:
        parser.read_string(blob.decode("utf-8", errors="replace"))
    except configparser.Error as exc:
        raise MalformedManifest(f"setup.cfg: {exc}") from exc
    if not parser.has_section("metadata"):
        raise MalformedManifest("setup.cfg: no [metadata] section")
    meta = parser["metadata"]

    authors = _split_rfc_people(meta.get("author", ""), meta.get("author_email", ""))
    maintainers = _split_rfc_people(
        meta.get("maintainer", ""), meta.get("maintainer_email", "")
    )

    dependencies = []
    if parser.has_option("options", "install_requires"):
        for line in parser.get("options", "install_requires").splitlines():
            cleaned = _clean_requirement(line)
            if cleaned and cleaned not in dependencies:
                dependencies.append(cleaned)

    repository_url = ""
    if meta.get("project_urls"):
        for line in meta["project_urls"].splitlines():
            label, _, url = line.partition("=")
            if label.strip().lower() in ("repository", "source", "source code") \
                    and url.strip():
                repository_url = url.strip()
                break

    return PackageMetadata(
        ecosystem=Ecosystem.PYPI,
        name=meta.get("name", ""),
        version=meta.get("version", ""),
        description=meta.get("description", ""),
        authors=authors,
        maintainers=maintainers,
        dependencies=dependencies,
        project_url=meta.get("url", ""),
        repository_url=repository_url,
    )


def parse_pyproject(blob: bytes) -> PackageMetadata:
    try:
        doc = tomllib.loads(blob.decode("utf-8", errors="replace"))
    except tomllib.TOMLDecodeError as exc:
        raise MalformedManifest(f"pyproject.toml: {exc}") from exc
    project = doc.get("project")
    if not isinstance(project, dict):
        raise MalformedManifest("pyproject.toml: no [project] table")

    def _people(key: str) -> list[Person]:
        out = []
        for entry in project.get(key) or []:
            if isinstance(entry, dict):
                name = str(entry.get("name", "") or "")
                email = str(entry.get("email", "") or "")
                if name or email:
                    out.append(Person(name=name, email=email))
        return out

    dependencies = []
    for spec in project.get("dependencies") or []:
        cleaned = _clean_requirement(str(spec))
        if cleaned and cleaned not in dependencies:
            dependencies.append(cleaned)

    urls = {
        str(k).lower(): str(v)
        for k, v in (project.get("urls") or {}).items()
    }
    repository_url = urls.get("repository", "") or urls.get("source", "")
    project_url = urls.get("homepage", "")
    if not project_url:
        leftovers = [v for k, v in sorted(urls.items())
                     if v and v != repository_url]
        project_url = leftovers[0] if leftovers else ""

    return PackageMetadata(
        ecosystem=Ecosystem.PYPI,
        name=str(project.get("name", "") or ""),
        version=str(project.get("version", "") or ""),
        description=str(project.get("description", "") or ""),
        authors=_people("authors"),
        maintainers=_people("maintainers"),
        dependencies=dependencies,
        project_url=project_url,
        repository_url=repository_url,
    )


# ---------------------------------------------------------------------------
# rubygems
# ---------------------------------------------------------------------------

class _GemYamlLoader(yaml.SafeLoader):
    """SafeLoader that flattens !ruby/... tags into plain containers."""


def _gem_tag_constructor(loader, tag_suffix, node):
    if isinstance(node, yaml.MappingNode):
        return loader.construct_mapping(node, deep=True)
    if isinstance(node, yaml.SequenceNode):
        return loader.construct_sequence(node, deep=True)
    return loader.construct_scalar(node)


_GemYamlLoader.add_multi_constructor("!ruby/", _gem_tag_constructor)


def _gem_version(value) -> str:
    if isinstance(value, dict):
        return str(value.get("version", "") or "")
    return str(value or "")


def parse_gem_metadata(blob: bytes) -> PackageMetadata:
    try:
        doc = yaml.load(blob.decode("utf-8", errors="replace"), Loader=_GemYamlLoader)
    except yaml.YAMLError as exc:
        raise MalformedManifest(f"gem metadata: {exc}") from exc
    if not isinstance(doc, dict):
        raise MalformedManifest("gem metadata: top level is not a mapping")

    authors = []
    for name in doc.get("authors") or []:
        if isinstance(name, str) and name.strip():
            authors.append(Person(name=name.strip()))
    emails = doc.get("email")
    if isinstance(emails, str):
        emails = [emails]
    for i, email in enumerate(emails or []):
        if not isinstance(email, str) or not email.strip():
            continue
        if i < len(authors):
            authors[i] = Person(name=authors[i].name, email=email.strip())
        else:
            authors.append(Person(email=email.strip()))

    dependencies = []
    for dep in doc.get("dependencies") or []:
        if isinstance(dep, dict) and dep.get("name"):
            dependencies.append(str(dep["name"]))

    extra = doc.get("metadata") or {}
    repository_url = ""
    if isinstance(extra, dict):
        repository_url = str(extra.get("source_code_uri", "") or "")

    return PackageMetadata(
        ecosystem=Ecosystem.RUBYGEMS,
        name=str(doc.get("name", "") or ""),
        version=_gem_version(doc.get("version")),
        description=str(doc.get("summary") or doc.get("description") or ""),
        authors=authors,
        dependencies=dependencies,
        project_url=str(doc.get("homepage", "") or ""),
        repository_url=repository_url,
    )


_GEMSPEC_FIELD_RE = re.compile(
    r"^\s*\w+\.(?P<field>name|version|summary|description|homepage|email)\s*=\s*"
    r"(?P<quote>['\"])(?P<value>.*?)(?P=quote)", re.MULTILINE,
)
_GEMSPEC_AUTHORS_RE = re.compile(
    r"^\s*\w+\.authors?\s*=\s*(?P<value>\[.*?\]|['\"].*?['\"])",
    re.MULTILINE | re.DOTALL,
)
_GEMSPEC_DEP_RE = re.compile(
    r"\.add(?:_runtime|_development)?_dependency\s*\(?\s*(['\"])(?P<name>.+?)\1"
)


def parse_gemspec(blob: bytes) -> PackageMetadata:
    """Best-effort line-level extraction; gemspecs are Ruby and never executed."""
    text = blob.decode("utf-8", errors="replace")
    fields: dict[str, str] = {}
    for match in _GEMSPEC_FIELD_RE.finditer(text):
        fields.setdefault(match.group("field"), match.group("value"))
    if not fields:
        raise MalformedManifest("gemspec: no recognizable assignments")

    authors = []
    match = _GEMSPEC_AUTHORS_RE.search(text)
    if match:
        for name in re.findall(r"['\"]([^'\"]+)['\"]", match.group("value")):
            authors.append(Person(name=name))
    if not authors and fields.get("email"):
        authors.append(Person(email=fields["email"]))

    dependencies = []
    for match in _GEMSPEC_DEP_RE.finditer(text):
        name = match.group("name")
        if name not in dependencies:
            dependencies.append(name)

    return PackageMetadata(
        ecosystem=Ecosystem.RUBYGEMS,
        name=fields.get("name", ""),
        version=fields.get("version", ""),
        description=fields.get("summary") or fields.get("description", ""),
        authors=authors,
        dependencies=dependencies,
        project_url=fields.get("homepage", ""),
    )


# ---------------------------------------------------------------------------
# registry client
# ---------------------------------------------------------------------------

def _registry_url(ecosystem: Ecosystem, name: str, version: str, endpoint: str) -> str:
    endpoint = endpoint.rstrip("/")
    quoted_name = urllib.parse.quote(name, safe="@")
    quoted_version = urllib.parse.quote(version, safe="")
    if ecosystem is Ecosystem.NPM:
        return f"{endpoint}/{quoted_name}/{quoted_version}"
    if ecosystem is Ecosystem.PYPI:
        return f"{endpoint}/pypi/{quoted_name}/{quoted_version}/json"
    return f"{endpoint}/api/v2/rubygems/{quoted_name}/versions/{quoted_version}.json"


def _cache_path(cache_dir: Path, ecosystem: Ecosystem, name: str,
                version: str) -> Path:
    return (
        cache_dir / ecosystem.value / _sanitize_component(name)
        / f"{_sanitize_component(version or '_')}.json"
    )


def _http_get(url: str, timeout: float, attempts: int = 3) -> bytes:
    last: Exception | None = None
    for attempt in range(attempts):
        try:
            req = urllib.request.Request(url, headers={"User-Agent": "fgiscan"})
            with urllib.request.urlopen(req, timeout=timeout) as resp:
                return resp.read()
        except urllib.error.HTTPError as exc:
            if exc.code == 404:
                raise NotFound(f"registry returned 404 for {url}") from exc
            last = exc
        except (urllib.error.URLError, TimeoutError, OSError) as exc:
            last = exc
        if attempt + 1 < attempts:
            time.sleep(0.2 * (attempt + 1))
    raise NetworkError(f"registry request failed for {url}: {last}") from last


def fetch_registry_metadata(
    ecosystem: Ecosystem,
    name: str,
    version: str,
    *,
    endpoint: str | None = None,
    cache_dir: str | Path | None = None,
    offline: bool = False,
    timeout: float = 10.0,
) -> PackageMetadata:
    """Fetch one package-version's registry document, caching verbatim bytes.

    Cache layout: ``<cache_dir>/<ecosystem>/<name>/<version>.json``.  A cache
    hit never touches the network; offline mode with a cache miss raises
    NetworkError.  ``FGI_CACHE_DIR`` supplies the cache dir when the argument
    is omitted.
    """
    if cache_dir is None:
        env_dir = os.environ.get(CACHE_DIR_ENV)
        cache_dir = Path(env_dir) if env_dir else None
    else:
        cache_dir = Path(cache_dir)

    blob: bytes | None = None
    cache_file = None
    if cache_dir is not None:
        cache_file = _cache_path(cache_dir, ecosystem, name, version)
        if cache_file.is_file():
            blob = cache_file.read_bytes()

    if blob is None:
        if offline:
            raise NetworkError(
                f"offline and no cached registry document for "
                f"{ecosystem.value}:{name}@{version}"
            )
        url = _registry_url(
            ecosystem, name, version, endpoint or DEFAULT_ENDPOINTS[ecosystem]
        )
        blob = _http_get(url, timeout)
        if cache_file is not None:
            cache_file.parent.mkdir(parents=True, exist_ok=True)
            cache_file.write_bytes(blob)

    try:
        doc = json.loads(blob.decode("utf-8", errors="replace"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"registry document is not JSON: {exc}") from exc
    return _registry_doc_to_metadata(ecosystem, doc)


def _registry_doc_to_metadata(ecosystem: Ecosystem, doc) -> PackageMetadata:
    if not isinstance(doc, dict):
        raise SchemaError("registry document is not a JSON object")
    if ecosystem is Ecosystem.NPM:
        md = parse_package_json(json.dumps(doc).encode())
        if not md.name:
            raise SchemaError("npm registry document lacks a name")
        return md
    if ecosystem is Ecosystem.PYPI:
        info = doc.get("info")
        if not isinstance(info, dict) or not info.get("name"):
            raise SchemaError("pypi registry document lacks info.name")
        authors = _split_rfc_people(
            info.get("author") or "", info.get("author_email") or ""
        )
        maintainers = _split_rfc_people(
            info.get("maintainer") or "", info.get("maintainer_email") or ""
        )
        dependencies = []
        for spec in info.get("requires_dist") or []:
            cleaned = _clean_requirement(str(spec))
            if cleaned and cleaned not in dependencies:
                dependencies.append(cleaned)
        urls = {
            str(k).lower(): str(v or "")
            for k, v in (info.get("project_urls") or {}).items()
        }
        repository_url = urls.get("repository", "") or urls.get("source", "")
        return PackageMetadata(
            ecosystem=ecosystem,
            name=str(info["name"]),
            version=str(info.get("version", "") or ""),
            description=str(info.get("summary", "") or ""),
            authors=authors,
            maintainers=maintainers,
            dependencies=dependencies,
            project_url=str(info.get("home_page", "") or "")
            or urls.get("homepage", ""),
            repository_url=repository_url,
        )
    # rubygems
    if not doc.get("name"):
        raise SchemaError("rubygems registry document lacks a name")
    authors = [
        Person(name=part.strip())
        for part in str(doc.get("authors", "") or "").split(",")
        if part.strip()
    ]
    dependencies = []
    deps = doc.get("dependencies") or {}
    if isinstance(deps, dict):
        for group in ("runtime", "development"):
            for dep in deps.get(group) or []:
                if isinstance(dep, dict) and dep.get("name"):
                    dependencies.append(str(dep["name"]))
    downloads = doc.get("downloads")
    return PackageMetadata(
        ecosystem=ecosystem,
        name=str(doc["name"]),
        version=str(doc.get("number", "") or doc.get("version", "") or ""),
        description=str(doc.get("info", "") or doc.get("summary", "") or ""),
        authors=authors,
        dependencies=dependencies,
        project_url=str(doc.get("homepage_uri", "") or ""),
        repository_url=str(doc.get("source_code_uri", "") or ""),
        downloads_count=int(downloads) if isinstance(downloads, int) else None,
    )
