"""Command-line interface.

Subcommands cover the whole pipeline: ``ingest`` archives into a corpus
store, ``extract`` profiles from them, ``analyze``/``report`` turn
profiles into the delimited bundle (``report`` also renders figures),
``train`` fits a detector on all labeled profiles, ``benchmark`` runs the
mode/algorithm grid on a held-out split, and ``detect`` scores profiles
with a trained detector.

Every output directory receives a ``run_config.json`` recording the
seed and effective options, never a timestamp, so reruns are
byte-comparable.  ``detect`` exits 0 when everything scanned is clean,
1 when anything malicious was flagged, 2 on errors; other commands use
0/2.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .analytics import build_report, write_csv
from .catalog import FunctionCatalog, default_catalog, load_catalog
from .classifiers import (
    Algorithm,
    DEFAULT_ALGORITHMS,
    DEFAULT_MODES,
    benchmark,
    benchmark_to_csv,
    load_model,
    predict,
    save_model,
    train,
)
from .corpus import (
    CorpusStore,
    DatasetManifest,
    Ecosystem,
    ExtractionCaps,
    Label,
    dedup,
)
from .dynamic_trace import dynamic_profile
from .errors import FgiscanError, NoManifestFound
from .features import (
    SCALAR_NAMES,
    FeatureConfig,
    FeatureMode,
    featurize,
    fit_bundle,
    load_bundle,
    save_bundle,
)
from .metadata import (
    fetch_registry_metadata,
    metadata_features,
    parse_manifest,
)
from .profiles import FgiProfile, load_profiles, save_profiles
from .static_analysis import static_profile
from .synthetic import generate_corpus

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

logger = logging.getLogger(__name__)


@dataclass
class RunConfig:
    """Effective settings: TOML file values overridden by CLI flags."""

    features: FeatureConfig = field(default_factory=FeatureConfig)
    train_fraction: float = 0.8
    caps: ExtractionCaps = field(default_factory=ExtractionCaps)
    endpoints: dict[str, str] = field(default_factory=dict)
    registry_cache_dir: str | None = None
    runner_command: str | None = None

    @classmethod
    def load(cls, path: str | Path | None, seed: int = 0) -> "RunConfig":
        doc: dict = {}
        if path is not None:
            with open(path, "rb") as fh:
                doc = tomllib.load(fh)
        feats = doc.get("features", {})
        features = FeatureConfig(
            dimension=int(feats.get("dimension", 100)),
            window=int(feats.get("window", 5)),
            negatives=int(feats.get("negatives", 5)),
            epochs=int(feats.get("epochs", 5)),
            learning_rate=float(feats.get("learning_rate", 0.025)),
            min_count=int(feats.get("min_count", 1)),
            seed=seed,
            embeddings_only=bool(feats.get("embeddings_only", False)),
        )
        corpus = doc.get("corpus", {})
        caps = ExtractionCaps(
            max_bytes=int(corpus.get("max_bytes", 256 * 1024 * 1024)),
            max_files=int(corpus.get("max_files", 50_000)),
            max_depth=int(corpus.get("max_depth", 32)),
        )
        registry = doc.get("registry", {})
        endpoints = {
            eco.value: registry[f"endpoint_{eco.value}"]
            for eco in Ecosystem if f"endpoint_{eco.value}" in registry
        }
        benchmark_section = doc.get("benchmark", {})
        runner = doc.get("runner", {})
        return cls(
            features=features,
            train_fraction=float(benchmark_section.get("train_fraction", 0.8)),
            caps=caps,
            endpoints=endpoints,
            registry_cache_dir=registry.get("cache_dir"),
            runner_command=runner.get("command") or None,
        )


def _write_run_config(out_dir: Path, command: str, args: argparse.Namespace,
                      config: RunConfig) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {
        "command": command,
        "seed": args.seed,
        "offline": bool(args.offline),
        "features": config.features.to_dict(),
        "train_fraction": config.train_fraction,
        "version": __version__,
    }
    (out_dir / "run_config.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _load_catalog(args: argparse.Namespace) -> FunctionCatalog:
    if args.catalog:
        return load_catalog(args.catalog)
    return default_catalog()


def _package_id(profile: FgiProfile) -> str:
    ref = profile.package
    return f"{ref.ecosystem.value}:{ref.name}@{ref.version}"


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_ingest(args: argparse.Namespace, config: RunConfig) -> int:
    out = Path(args.out)
    store = CorpusStore(args.store or out / "corpus", caps=config.caps)
    manifest_path = Path(args.manifest) if args.manifest \
        else out / "manifest.ldjson"
    manifest = DatasetManifest.load(manifest_path) \
        if manifest_path.is_file() else DatasetManifest()

    ecosystem = Ecosystem(args.ecosystem)
    label = Label(args.label)
    for archive in args.archives:
        ref = store.ingest_archive(archive, ecosystem, label)
        manifest.entries.append(ref)
        print(f"ingested {ref.ecosystem.value}:{ref.name}@{ref.version} "
              f"({ref.content_digest[:12]})")
    before = len(manifest.entries)
    manifest = dedup(manifest)
    if len(manifest.entries) != before:
        print(f"dedup removed {before - len(manifest.entries)} duplicate(s)")
    manifest_path.parent.mkdir(parents=True, exist_ok=True)
    manifest.save(manifest_path)
    print(f"manifest: {manifest_path} ({len(manifest.entries)} entries)")
    return 0


def cmd_extract(args: argparse.Namespace, config: RunConfig) -> int:
    out = Path(args.out)
    catalog = _load_catalog(args)
    store = CorpusStore(args.store or out / "corpus", caps=config.caps)
    manifest = DatasetManifest.load(args.manifest)
    traces_dir = Path(args.traces) if args.traces else None

    profiles: list[FgiProfile] = []
    for ref in manifest.entries:
        warnings: list[str] = []
        tree = store.unpack(ref)

        md = None
        if args.registry:
            try:
                md = fetch_registry_metadata(
                    ref.ecosystem, ref.name, ref.version,
                    endpoint=config.endpoints.get(ref.ecosystem.value),
                    cache_dir=config.registry_cache_dir,
                    offline=args.offline,
                )
            except FgiscanError as exc:
                warnings.append(f"registry lookup failed: {exc}")
        if md is None:
            try:
                md = parse_manifest(tree, ref.ecosystem)
            except NoManifestFound as exc:
                warnings.append(str(exc))

        static = static_profile(tree, catalog, package=ref)
        warnings.extend(static.parse_failures)

        dynamic = None
        if traces_dir is not None:
            log = traces_dir / f"{ref.content_digest}.log"
            if not log.is_file():
                log = traces_dir / f"{ref.name}-{ref.version}.log"
            if log.is_file():
                dynamic = dynamic_profile(log, catalog, package=ref)

        profiles.append(FgiProfile(
            package=ref,
            metadata=md,
            metadata_features=metadata_features(md) if md else None,
            static=static,
            dynamic=dynamic,
            warnings=warnings,
        ))

    save_profiles(profiles, out / "profiles")

    exports = out / "exports"
    exports.mkdir(parents=True, exist_ok=True)
    with open(exports / "static_calls.ldjson", "w", encoding="utf-8") as fh:
        for profile in profiles:
            if profile.static is None:
                continue
            for site in profile.static.call_sites:
                record = {"package": _package_id(profile), **site.to_dict()}
                fh.write(json.dumps(record, sort_keys=True) + "\n")
    with open(exports / "dynamic_events.ldjson", "w", encoding="utf-8") as fh:
        for profile in profiles:
            if profile.dynamic is None:
                continue
            for event in profile.dynamic.events:
                record = {"package": _package_id(profile), **event.to_dict()}
                fh.write(json.dumps(record, sort_keys=True) + "\n")

    write_csv(
        out / "extraction_summary.csv",
        ("ecosystem", "name", "version", "label", "digest", "has_metadata",
         "static_calls", "parse_failures", "dynamic_events", "warnings"),
        [
            (
                p.package.ecosystem.value, p.package.name, p.package.version,
                p.package.label.value, p.package.content_digest,
                p.metadata is not None,
                len(p.static.call_sites) if p.static else 0,
                len(p.static.parse_failures) if p.static else 0,
                len(p.dynamic.events) if p.dynamic is not None else None,
                len(p.warnings),
            )
            for p in profiles
        ],
    )
    _write_run_config(out, "extract", args, config)
    print(f"extracted {len(profiles)} profile(s) into {out / 'profiles'}")
    return 0


def _report_common(args: argparse.Namespace, config: RunConfig,
                   figures: bool) -> int:
    out = Path(args.out)
    profiles = load_profiles(args.profiles)
    bundle_dir = out / "report"
    written = build_report(bundle_dir, profiles)
    if figures:
        from .plots import render_figures

        written.extend(render_figures(bundle_dir))
    _write_run_config(out, "report" if figures else "analyze", args, config)
    for path in written:
        print(path)
    return 0


def cmd_analyze(args: argparse.Namespace, config: RunConfig) -> int:
    return _report_common(args, config, figures=False)


def cmd_report(args: argparse.Namespace, config: RunConfig) -> int:
    return _report_common(args, config, figures=not args.no_figures)


def cmd_train(args: argparse.Namespace, config: RunConfig) -> int:
    out = Path(args.out)
    profiles = load_profiles(args.profiles)
    features = config.features
    if args.embeddings_only:
        features = FeatureConfig(**{
            **features.to_dict(), "embeddings_only": True,
        })
    mode = FeatureMode(args.mode)
    bundle = fit_bundle(profiles, features)
    pairs = [(featurize(p, bundle, mode), p.package.label) for p in profiles]
    model = train(Algorithm(args.algorithm), pairs, seed=args.seed)

    model_dir = out / "model"
    save_bundle(bundle, model_dir / "bundle")
    save_model(model, model_dir / "classifier.fgic")
    _write_run_config(out, "train", args, config)
    print(f"trained {args.algorithm} on {len(pairs)} profile(s) "
          f"(mode={mode.value}); model in {model_dir}")
    return 0


def cmd_benchmark(args: argparse.Namespace, config: RunConfig) -> int:
    out = Path(args.out)
    if args.synthetic:
        n_legit, n_malicious = args.synthetic
        profiles = generate_corpus(n_legit, n_malicious, seed=args.seed)
    else:
        if not args.profiles:
            raise FgiscanError("benchmark needs --profiles or --synthetic")
        profiles = load_profiles(args.profiles)

    modes = tuple(FeatureMode(m) for m in args.modes) if args.modes \
        else DEFAULT_MODES
    algorithms = tuple(Algorithm(a) for a in args.algorithms) \
        if args.algorithms else DEFAULT_ALGORITHMS
    result = benchmark(
        profiles, modes=modes, algorithms=algorithms, seed=args.seed,
        config=config.features, train_fraction=config.train_fraction,
    )
    out.mkdir(parents=True, exist_ok=True)
    benchmark_to_csv(result.rows, out / "benchmark.csv")
    _write_run_config(out, "benchmark", args, config)
    print(f"train={result.train_size} test={result.test_size}")
    header = f"{'mode':10s} {'algorithm':20s} {'acc':>6s} {'prec':>6s} " \
             f"{'rec':>6s} {'f1':>6s}"
    print(header)
    for row in result.rows:
        def fmt(value):
            return f"{value:.3f}" if value is not None else "n/a"
        print(f"{row.mode.value:10s} {row.algorithm.value:20s} "
              f"{fmt(row.metrics.accuracy):>6s} "
              f"{fmt(row.metrics.precision):>6s} "
              f"{fmt(row.metrics.recall):>6s} {fmt(row.metrics.f1):>6s}")
    print(f"wrote {out / 'benchmark.csv'}")
    return 0


def cmd_detect(args: argparse.Namespace, config: RunConfig) -> int:
    model_dir = Path(args.model)
    bundle = load_bundle(model_dir / "bundle")
    model = load_model(model_dir / "classifier.fgic")
    mode = FeatureMode(model.layout.mode)

    if args.profile:
        profiles = [FgiProfile.load(path) for path in args.profile]
    else:
        profiles = load_profiles(args.profiles)
    if not profiles:
        raise FgiscanError("nothing to scan")

    flagged = 0
    for profile in profiles:
        vector = featurize(profile, bundle, mode)
        label, value = predict(model, vector)
        detail = ""
        if not bundle.config.embeddings_only:
            scalars = vector.values[-len(SCALAR_NAMES):]
            top = sorted(
                range(len(SCALAR_NAMES)),
                key=lambda i: -abs(scalars[i]),
            )[:3]
            parts = [f"{SCALAR_NAMES[i]}={scalars[i]:+.2f}" for i in top]
            detail = "  [" + ", ".join(parts) + "]"
        print(f"{label.value:12s} {value:6.4f}  "
              f"{_package_id(profile)}{detail}")
        if label is Label.MALICIOUS:
            flagged += 1
    print(f"scanned {len(profiles)} package(s); {flagged} flagged malicious")
    return 1 if flagged else 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fgiscan",
        description="fine-grained package profiling and malicious-package "
                    "detection across npm, PyPI and RubyGems",
    )
    parser.add_argument("--config", help="TOML settings file")
    parser.add_argument("--offline", action="store_true",
                        help="never touch the network; registry lookups "
                             "must hit the local cache")
    parser.add_argument("--seed", type=int, default=0,
                        help="seed for every randomized step (default 0)")
    parser.add_argument("--out", default="out",
                        help="output directory (default ./out)")
    parser.add_argument("--catalog",
                        help="CSV overriding the built-in function catalog")
    parser.add_argument("--verbose", action="store_true",
                        help="log progress details to stderr")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="copy archives into the corpus store")
    p.add_argument("archives", nargs="+", metavar="ARCHIVE")
    p.add_argument("--ecosystem", required=True,
                   choices=[e.value for e in Ecosystem])
    p.add_argument("--label", required=True,
                   choices=[l.value for l in Label])
    p.add_argument("--manifest", help="manifest path "
                                      "(default <out>/manifest.ldjson)")
    p.add_argument("--store", help="corpus store root "
                                   "(default <out>/corpus)")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("extract",
                       help="unpack and profile every manifest entry")
    p.add_argument("--manifest", required=True)
    p.add_argument("--store", help="corpus store root (default <out>/corpus)")
    p.add_argument("--traces",
                   help="directory of pre-recorded install trace logs, "
                        "named <digest>.log or <name>-<version>.log")
    p.add_argument("--registry", action="store_true",
                   help="prefer registry metadata over in-archive manifests")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("analyze",
                       help="write the delimited statistics bundle")
    p.add_argument("--profiles", required=True,
                   help="directory of extracted profile JSON files")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("report",
                       help="statistics bundle plus rendered figures")
    p.add_argument("--profiles", required=True)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("train",
                       help="fit a detector on all labeled profiles")
    p.add_argument("--profiles", required=True)
    p.add_argument("--algorithm", default=Algorithm.RANDOM_FOREST.value,
                   choices=[a.value for a in Algorithm])
    p.add_argument("--mode", default=FeatureMode.ALL.value,
                   choices=[m.value for m in FeatureMode])
    p.add_argument("--embeddings-only", action="store_true",
                   help="drop the scalar feature block")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("benchmark",
                       help="evaluate the mode/algorithm grid on a split")
    p.add_argument("--profiles")
    p.add_argument("--synthetic", nargs=2, type=int,
                   metavar=("N_LEGIT", "N_MALICIOUS"),
                   help="generate a synthetic corpus instead of --profiles")
    p.add_argument("--modes", nargs="+",
                   choices=[m.value for m in FeatureMode])
    p.add_argument("--algorithms", nargs="+",
                   choices=[a.value for a in Algorithm])
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("detect", help="score profiles with a trained model")
    p.add_argument("--model", required=True,
                   help="model directory written by the train command")
    p.add_argument("--profiles", help="directory of profile JSON files")
    p.add_argument("--profile", nargs="+",
                   help="individual profile JSON file(s)")
    p.set_defaults(func=cmd_detect)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = RunConfig.load(args.config, seed=args.seed)
        return args.func(args, config)
    except FgiscanError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
