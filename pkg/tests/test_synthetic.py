from fgiscan.corpus import Ecosystem, Label
from fgiscan.synthetic import generate_corpus


def test_counts_and_order():
    profiles = generate_corpus(9, 4, seed=1)
    assert len(profiles) == 13
    labels = [p.package.label for p in profiles]
    assert labels[:9] == [Label.LEGITIMATE] * 9
    assert labels[9:] == [Label.MALICIOUS] * 4


def test_names_and_ecosystem_rotation():
    profiles = generate_corpus(6, 3, seed=0)
    legit = profiles[:6]
    assert [p.package.name for p in legit] == [
        f"lib-{i:04d}" for i in range(6)
    ]
    assert [p.package.ecosystem for p in legit] == [
        Ecosystem.NPM, Ecosystem.PYPI, Ecosystem.RUBYGEMS,
        Ecosystem.NPM, Ecosystem.PYPI, Ecosystem.RUBYGEMS,
    ]
    assert [p.package.name for p in profiles[6:]] == [
        "mal-0000", "mal-0001", "mal-0002",
    ]


def test_deterministic_per_seed():
    first = generate_corpus(12, 6, seed=7)
    second = generate_corpus(12, 6, seed=7)
    assert [p.to_dict() for p in first] == [p.to_dict() for p in second]

    shifted = generate_corpus(12, 6, seed=8)
    assert [p.to_dict() for p in first] != [p.to_dict() for p in shifted]


def test_every_profile_has_metadata_and_static():
    profiles = generate_corpus(30, 12, seed=2)
    for p in profiles:
        assert p.metadata is not None
        assert p.metadata_features is not None
        assert p.static is not None
        assert p.static.call_sites
        assert p.package.content_digest


def test_dynamic_coverage_is_approximate():
    profiles = generate_corpus(200, 80, seed=3, dynamic_coverage=0.9)
    have = sum(1 for p in profiles if p.dynamic is not None)
    assert 0.82 * len(profiles) <= have <= len(profiles)

    none = generate_corpus(20, 10, seed=3, dynamic_coverage=0.0)
    # mimics always get a dynamic profile; everyone else skips it
    with_dyn = [p for p in none if p.dynamic is not None]
    assert all(p.package.label is Label.MALICIOUS for p in with_dyn)


def test_population_shapes_differ_by_label():
    profiles = generate_corpus(150, 150, seed=4)
    legit = [p for p in profiles if p.package.label is Label.LEGITIMATE]
    mal = [p for p in profiles if p.package.label is Label.MALICIOUS]

    def mean(values):
        values = list(values)
        return sum(values) / len(values)

    assert (mean(p.metadata_features.description_token_count for p in legit)
            > 3 * mean(p.metadata_features.description_token_count
                       for p in mal))
    assert (mean(p.metadata_features.dependency_count for p in legit)
            > mean(p.metadata_features.dependency_count for p in mal))
    # malicious install behavior is network/process heavy in source
    from fgiscan.catalog import Category
    assert (mean(p.static.per_category_counts[Category.NETWORK] for p in mal)
            > mean(p.static.per_category_counts[Category.NETWORK]
                   for p in legit))
    assert (mean(p.static.per_category_counts[Category.FILE] for p in legit)
            > mean(p.static.per_category_counts[Category.FILE] for p in mal))
