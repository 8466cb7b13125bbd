"""Synthetic labeled corpus for end-to-end evaluation without live data.

The generator emits ready-made profiles whose statistical shape follows
what registry studies consistently report about malicious packages:
mostly empty or very short descriptions, at most one author, few or no
dependencies, rarely a project or git URL, install-time behavior that is
network- and process-heavy in source but almost silent dynamically.
Legitimate packages get the opposite profile.

Two deliberate contamination groups keep the task honest: "mimics" are
malicious packages wearing fully legitimate-looking metadata (only their
behavior gives them away), and "sloppy" legitimate packages have barren
metadata but benign behavior.  A metadata-only model cannot separate
those groups, which is exactly the gap the combined profile closes.

Everything is driven by one seed; the same call returns byte-identical
profiles every time.
"""

from __future__ import annotations

import hashlib
import random
from pathlib import Path

from .catalog import Category, FunctionCatalog, Language, default_catalog
from .catalog import load_syscall_categories
from .corpus import Ecosystem, Label, PackageRef
from .dynamic_trace import DynamicProfile, TraceEvent
from .metadata import PackageMetadata, Person, metadata_features
from .profiles import FgiProfile
from .static_analysis import CallSite, StaticProfile

_ECOSYSTEM_LANGUAGE = {
    Ecosystem.NPM: Language.JAVASCRIPT,
    Ecosystem.PYPI: Language.PYTHON,
    Ecosystem.RUBYGEMS: Language.RUBY,
}

_SOURCE_EXT = {
    Language.PYTHON: ".py",
    Language.JAVASCRIPT: ".js",
    Language.RUBY: ".rb",
}

_LEGIT_WORDS = (
    "library client api parser framework utilities configuration streaming "
    "validation testing database logging async typed schema cache cli tools "
    "support documentation build plugin integration performance adapter "
    "middleware template router session storage queue worker protocol "
    "encoding format helper wrapper binding interface migration fixture"
).split()

_MALICIOUS_WORDS = (
    "free download update install fix patch bonus crypto wallet gift "
    "required important urgent critical reward claim verify account"
).split()

_DEP_NAMES = (
    "leftcore configlib transportx yamlkit logfast schemapro requestor "
    "asyncbase typetools streamly cachebox validr routeur sessionx "
    "storagehub queuefly workerd protolib encodez formatic"
).split()


def _pools(
    catalog: FunctionCatalog,
) -> dict[tuple[Language, Category], list[str]]:
    pools: dict[tuple[Language, Category], list[str]] = {}
    for language in Language:
        for name in sorted(catalog.names_for(language)):
            entry = catalog.lookup(name, language)
            pools.setdefault((language, entry.category), []).append(name)
    return pools


def _syscall_pools(
    categories: dict[str, Category],
) -> dict[Category, list[str]]:
    pools: dict[Category, list[str]] = {}
    for name in sorted(categories):
        pools.setdefault(categories[name], []).append(name)
    return pools


def _description(rng: random.Random, malicious_style: bool) -> str:
    if malicious_style:
        if rng.random() < 0.37:
            return ""
        words = rng.choices(_MALICIOUS_WORDS, k=rng.randint(3, 25))
    else:
        words = rng.choices(_LEGIT_WORDS, k=rng.randint(20, 80))
    return " ".join(words)


def _author_count(rng: random.Random, malicious_style: bool) -> int:
    roll = rng.random()
    if malicious_style:
        if roll < 0.50:
            return 0
        if roll < 0.85:
            return 1
        return rng.randint(2, 3)
    if roll < 0.20:
        return 1
    if roll < 0.60:
        return 2
    if roll < 0.90:
        return rng.randint(3, 4)
    return rng.randint(5, 8)


def _dependency_count(rng: random.Random, malicious_style: bool) -> int:
    if malicious_style:
        return 0 if rng.random() < 0.60 else rng.randint(1, 3)
    return rng.randint(0, 2) if rng.random() < 0.10 else rng.randint(5, 20)


def _make_metadata(
    rng: random.Random,
    ecosystem: Ecosystem,
    name: str,
    version: str,
    malicious_style: bool,
) -> PackageMetadata:
    authors = [
        Person(name=f"dev-{rng.randint(100, 999)}",
               email=f"dev{rng.randint(100, 999)}@example.org")
        for _ in range(_author_count(rng, malicious_style))
    ]
    deps = rng.sample(_DEP_NAMES, k=min(len(_DEP_NAMES),
                                        _dependency_count(rng, malicious_style)))
    if malicious_style:
        has_url = rng.random() < 0.296
        has_git = has_url and rng.random() < 0.73
    else:
        has_url = rng.random() < 0.914
        has_git = has_url and rng.random() < 0.875
    project_url = f"https://example.org/{name}" if has_url else ""
    repository_url = f"https://github.com/acme/{name}.git" if has_git else ""
    return PackageMetadata(
        ecosystem=ecosystem,
        name=name,
        version=version,
        description=_description(rng, malicious_style),
        authors=authors,
        dependencies=list(deps),
        project_url=project_url,
        repository_url=repository_url,
    )


def _make_static(
    rng: random.Random,
    language: Language,
    pools: dict[tuple[Language, Category], list[str]],
    malicious_behavior: bool,
) -> StaticProfile:
    if malicious_behavior:
        quotas = {
            Category.NETWORK: rng.randint(5, 20),
            Category.PROCESS: rng.randint(3, 12),
            Category.FILE: rng.randint(0, 4),
        }
    else:
        quotas = {
            Category.NETWORK: rng.randint(0, 6),
            Category.PROCESS: rng.randint(0, 5),
            Category.FILE: rng.randint(10, 40),
        }
    source = f"src/main{_SOURCE_EXT[language]}"
    sites: list[CallSite] = []
    line = 1
    for category in (Category.NETWORK, Category.FILE, Category.PROCESS):
        pool = pools[(language, category)]
        for _ in range(quotas[category]):
            name = rng.choice(pool)
            sites.append(CallSite(
                function_name=name,
                category=category,
                language=language,
                name_path=name,
                line=line,
                col=0,
                argument_count=rng.randint(0, 3),
                source_path=source,
            ))
            line += 1
    return StaticProfile(package=None, call_sites=sites, source_file_count=1)


def _make_dynamic(
    rng: random.Random,
    syscalls: dict[Category, list[str]],
    malicious_behavior: bool,
) -> DynamicProfile:
    events: list[TraceEvent] = []
    if malicious_behavior:
        if rng.random() < 0.80:
            quotas = {
                Category.NETWORK: rng.randint(0, 1),
                Category.FILE: rng.randint(0, 1),
                Category.PROCESS: rng.randint(0, 1),
            }
        else:
            quotas = {
                Category.NETWORK: rng.randint(10, 40),
                Category.PROCESS: rng.randint(5, 20),
                Category.FILE: rng.randint(0, 5),
            }
    else:
        quotas = {
            Category.NETWORK: rng.randint(0, 10),
            Category.FILE: rng.randint(20, 120),
            Category.PROCESS: rng.randint(2, 15),
        }
    for category in (Category.FILE, Category.NETWORK, Category.PROCESS):
        pool = syscalls[category]
        for _ in range(quotas[category]):
            name = rng.choice(pool)
            events.append(TraceEvent(
                sequence=len(events),
                function_name=name,
                category=category,
                arguments=f"{rng.randint(3, 9)}",
                return_value="0",
                pid=4242,
            ))
    return DynamicProfile(
        package=None, events=events, succeeded=True, log_path="synthetic"
    )


def generate_corpus(
    n_legitimate: int = 500,
    n_malicious: int = 200,
    seed: int = 0,
    mimic_fraction: float = 0.08,
    sloppy_fraction: float = 0.05,
    dynamic_coverage: float = 0.9,
    catalog: FunctionCatalog | None = None,
) -> list[FgiProfile]:
    """Deterministic labeled profiles: legitimate first, then malicious."""
    rng = random.Random(seed)
    catalog = catalog or default_catalog()
    pools = _pools(catalog)
    syscalls = _syscall_pools(load_syscall_categories())
    ecosystems = (Ecosystem.NPM, Ecosystem.PYPI, Ecosystem.RUBYGEMS)

    profiles: list[FgiProfile] = []
    plan = [(Label.LEGITIMATE, i) for i in range(n_legitimate)]
    plan += [(Label.MALICIOUS, i) for i in range(n_malicious)]
    for label, index in plan:
        malicious = label is Label.MALICIOUS
        # contamination: metadata style flips for mimics and sloppy packages
        if malicious:
            metadata_style_malicious = not (rng.random() < mimic_fraction)
        else:
            metadata_style_malicious = rng.random() < sloppy_fraction

        ecosystem = ecosystems[index % len(ecosystems)]
        language = _ECOSYSTEM_LANGUAGE[ecosystem]
        name = f"{'mal' if malicious else 'lib'}-{index:04d}"
        version = f"{rng.randint(0, 3)}.{rng.randint(0, 9)}.{rng.randint(0, 9)}"
        digest = hashlib.sha256(
            f"{ecosystem.value}:{name}:{version}:{label.value}".encode()
        ).hexdigest()
        ref = PackageRef(
            ecosystem=ecosystem,
            name=name,
            version=version,
            label=label,
            archive_path=Path("synthetic") / f"{name}-{version}.archive",
            content_digest=digest,
        )
        md = _make_metadata(rng, ecosystem, name, version,
                            metadata_style_malicious)
        static = _make_static(rng, language, pools, malicious)
        is_mimic = malicious and not metadata_style_malicious
        if is_mimic or rng.random() < dynamic_coverage:
            dynamic = _make_dynamic(rng, syscalls, malicious)
        else:
            dynamic = None
        profiles.append(FgiProfile(
            package=ref,
            metadata=md,
            metadata_features=metadata_features(md),
            static=static,
            dynamic=dynamic,
        ))
    return profiles
