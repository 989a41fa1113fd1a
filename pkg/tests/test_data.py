import pytest
from hypothesis import given
from hypothesis import strategies as st

from canonseg import data
from canonseg.core import enumerate_trees

FIG1A_LINE = "untestably\t(Word (Word (Prefix un) (Word (Word test) (Suffix able))) (Suffix ly))"
BAD_LINE = "x\t(Word (Suffix x) (Word y))"


def test_parse_figure_entry(untestably):
    e = data.parse_entry(FIG1A_LINE)
    assert e.surface == "untestably" and e.canonical == "untestablely"
    assert e.segments == ["un", "test", "able", "ly"]
    assert e.tree == untestably[0]


def test_parse_single_leaf():
    e = data.parse_entry("test\t(Word test)")
    assert e.canonical == e.surface == "test" and e.segments == ["test"]


@pytest.mark.parametrize(
    "line, message",
    [
        (BAD_LINE, "illegal production"),
        ("x\t(Word (Prefix x) (Prefix y))", "illegal production"),
        ("x\t(Word )", "empty leaf"),
        ("x\t(Word (Prefix x) (Word y)", "expected"),
        ("x\t(Stem x)", "unknown label"),
        ("x (Word x)", "expected"),
        ("x\t(Word x) (Word y)", "trailing"),
    ],
)
def test_parse_errors(line, message):
    with pytest.raises(data.FormatError) as info:
        data.parse_entry(line, lineno=7)
    assert message in str(info.value) and info.value.lineno == 7


def test_round_trip_examples():
    for line in (FIG1A_LINE, "test\t(Word test)"):
        assert data.serialize_entry(data.parse_entry(line)) == line


def test_serialize_canonicalizes_spacing():
    messy = "test\t(Word   (Word test )\t(Suffix  s))  "
    out = data.serialize_entry(data.parse_entry(messy))
    assert out == "test\t(Word (Word test) (Suffix s))"
    assert data.serialize_entry(data.parse_entry(out)) == out


@given(st.text("abc", min_size=1, max_size=5), st.data())
def test_round_trip_random_trees(u, d):
    trees = enumerate_trees(u)
    t = trees[d.draw(st.integers(0, len(trees) - 1))]
    entry = data.TreebankEntry("w", u, t)
    line = data.serialize_entry(entry)
    assert data.parse_entry(line) == entry


@pytest.mark.parametrize("name", ["toy_treebank.tsv", "synthetic_treebank.tsv"])
def test_bundled_round_trip(name, tmp_path):
    path = data.bundled(name)
    entries = data.load_treebank(path)
    lines = [line.rstrip("\n") for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]
    assert [data.serialize_entry(e) for e in entries] == lines
    out = tmp_path / name
    data.write_treebank(entries, out)
    assert out.read_text(encoding="utf-8") == path.read_text(encoding="utf-8")


def test_bundled_sizes():
    assert len(data.load_treebank(data.bundled("toy_treebank.tsv"))) == 50
    assert len(data.load_lexicon(data.bundled("toy_lexicon.txt"))) == 200
    assert len(data.load_treebank(data.bundled("synthetic_treebank.tsv"))) == 300


def test_reader_reports_line_numbers():
    lines = ["# comment", "", "test\t(Word test)", BAD_LINE]
    with pytest.raises(data.FormatError) as info:
        data.read_treebank(lines)
    assert info.value.lineno == 4 and "line 4" in str(info.value)


def test_lexicon_lowercases_and_skips_comments():
    assert data.read_lexicon(["# x", "Test", "", "able"]) == frozenset({"test", "able"})
    assert data.load_lexicon(None) == frozenset()


def test_validate_principles():
    lex = {"lick", "lickable", "unlickable"}
    good = data.parse_entry("unlickable\t(Word (Prefix un) (Word (Word lick) (Suffix able)))")
    assert data.validate_principles(good, lex) == []
    bad = data.parse_entry("unlickable\t(Word (Word (Prefix un) (Word lick)) (Suffix able))")
    warnings = data.validate_principles(bad, lex)
    assert len(warnings) == 1 and "'unlick'" in warnings[0]
    ach = data.parse_entry("unachievable\t(Word (Prefix un) (Word (Word achieve) (Suffix able)))")
    warnings = data.validate_principles(ach, {"achieve", "achievable", "unachievable"})
    assert any("'achieveable'" in w for w in warnings)


def test_split_sizes():
    assert tuple(len(p) for p in data.split_indices(7454, data.SplitSpec())) == (5454, 1000, 1000)
    assert tuple(len(p) for p in data.split_indices(10, data.SplitSpec())) == (8, 1, 1)


def test_splits_deterministic_disjoint_same_universe():
    universes = set()
    for index in range(data.N_SPLITS):
        spec = data.SplitSpec(seed=3, index=index)
        tr, dv, te = data.split_indices(300, spec)
        assert data.split_indices(300, spec) == (tr, dv, te)
        assert not (set(tr) & set(dv) or set(tr) & set(te) or set(dv) & set(te))
        universes.add(frozenset(tr + dv + te))
    assert len(universes) == 1
    assert data.split_indices(300, data.SplitSpec(seed=3, index=0)) != data.split_indices(300, data.SplitSpec(seed=3, index=1))


def test_split_spec_validation():
    with pytest.raises(ValueError):
        data.SplitSpec(index=10)
    with pytest.raises(ValueError):
        data.SplitSpec(sizes=(1, -1, 1))


def test_split_manifest(tmp_path):
    idx = data.split_indices(20, data.SplitSpec())
    paths = data.write_split_manifest(tmp_path, idx)
    assert [p.name for p in paths] == ["train.idx", "dev.idx", "test.idx"]
    assert [int(x) for x in paths[1].read_text().split()] == idx[1]
