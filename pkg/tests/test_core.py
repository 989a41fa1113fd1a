import pytest
from hypothesis import given
from hypothesis import strategies as st

from canonseg.core import (
    Alignment,
    Alphabet,
    AlignmentError,
    EditAction,
    GuardError,
    Label,
    ModelParameters,
    ParseTree,
    SparseVector,
    TreeError,
    enumerate_trees,
    require_tree,
    tree_from_segments,
    tree_to_segments,
    validate_tree,
)

W, P, S = Label.WORD, Label.PREFIX, Label.SUFFIX


def test_alphabet_default_and_invariants():
    a = Alphabet()
    assert str(a) == "abcdefghijklmnopqrstuvwxyz"
    assert a.index("c") == 2 and "z" in a and "A" not in a
    assert a.covers("hello") and not a.covers("héllo")
    with pytest.raises(ValueError):
        Alphabet("")
    with pytest.raises(ValueError):
        Alphabet("aba")
    with pytest.raises(ValueError):
        Alphabet(["ab"])


def test_segments_of_figure_trees(untestably, unlockable_c):
    assert tree_to_segments(*untestably) == ["un", "test", "able", "ly"]
    assert tree_to_segments(*unlockable_c) == ["un", "lock", "able"]
    single = ParseTree.root(ParseTree.leaf(W, 0, 4))
    assert tree_to_segments(single, "test") == ["test"]


def test_validate_accepts_figure_tree(untestably):
    assert validate_tree(*untestably) is None
    # a bare top-level Word is accepted too
    assert validate_tree(untestably[0].without_root(), untestably[1]) is None


def test_validate_rejects_illegal_production():
    bad = ParseTree(W, 0, 2, (ParseTree.leaf(S, 0, 1), ParseTree.leaf(W, 1, 2)))
    report = validate_tree(bad, "xy")
    assert report is not None and "illegal production" in report
    with pytest.raises(TreeError):
        tree_to_segments(bad, "xy")


def test_validate_rejects_gap_between_siblings():
    bad = ParseTree(W, 0, 5, (ParseTree.leaf(P, 0, 2), ParseTree.leaf(W, 3, 5)))
    report = validate_tree(bad, "abcde")
    assert report is not None and "non-tiling" in report


def test_validate_reports_other_violations():
    assert "root span" in validate_tree(ParseTree.leaf(W, 0, 2), "abc")
    assert "top node" in validate_tree(ParseTree.leaf(S, 0, 3), "abc")
    assert "empty span" in validate_tree(
        ParseTree(W, 0, 3, (ParseTree.leaf(P, 0, 0), ParseTree.leaf(W, 0, 3))), "abc"
    )
    nested_root = ParseTree.root(ParseTree(W, 0, 2, (ParseTree.leaf(P, 0, 1), ParseTree.root(ParseTree.leaf(W, 1, 2)))))
    assert validate_tree(nested_root, "ab") is not None


@pytest.mark.parametrize("n, count", [(1, 1), (2, 3), (4, 27)])
def test_enumerate_trees_counts(n, count):
    assert len(enumerate_trees("x" * n)) == count


def test_enumerate_trees_matches_recurrence_and_is_valid():
    # T(n) = 1 + 2 * sum_{m<n} T(m)
    t = {1: 1}
    for n in range(2, 9):
        t[n] = 1 + 2 * sum(t[m] for m in range(1, n))
    for n in range(1, 9):
        u = "abcdefgh"[:n]
        trees = enumerate_trees(u)
        assert len(trees) == t[n] == 3 ** (n - 1)
        assert len(set(trees)) == len(trees)
        if n <= 6:
            assert all(validate_tree(tr, u) is None for tr in trees)


def test_enumerate_trees_guard():
    with pytest.raises(GuardError):
        enumerate_trees("")
    with pytest.raises(GuardError):
        enumerate_trees("x" * 9)


@given(st.text(alphabet="abc", min_size=1, max_size=6), st.data())
def test_segments_concatenate_to_u(u, data):
    trees = enumerate_trees(u)
    t = trees[data.draw(st.integers(0, len(trees) - 1))]
    assert "".join(tree_to_segments(t, u)) == u


def test_brackets_and_sexpr(untestably):
    t, u = untestably
    assert t.to_brackets(u) == "[[un [[test] able]] ly]"
    assert t.to_sexpr(u) == "(Word (Word (Prefix un) (Word (Word test) (Suffix able))) (Suffix ly))"


def test_tree_from_segments_rejects_malformed_shape():
    with pytest.raises(TreeError):
        tree_from_segments((W, (P, "a")))


def test_edit_actions():
    assert EditAction.sub("a", "b").name == "S:a>b"
    assert EditAction.delete("a").name == "D:a"
    assert EditAction.insert("e").name == "I:e"
    with pytest.raises(AlignmentError):
        EditAction("S", "a", None)
    with pytest.raises(AlignmentError):
        EditAction("I", "a", "b")
    with pytest.raises(AlignmentError):
        EditAction.sub("ab", "c")


def test_alignment_recovers_strings():
    a = Alignment([EditAction.sub("a", "a"), EditAction.insert("l"), EditAction.delete("y"), EditAction.sub("b", "e")])
    assert a.canonical == "ale" and a.surface == "ayb"
    assert a.aligns("ale", "ayb") and not a.aligns("ale", "ab")


@given(st.lists(st.sampled_from(["S", "D", "I"]), max_size=10), st.randoms())
def test_alignment_invariant(kinds, rnd):
    actions, u, w = [], "", ""
    for k in kinds:
        x, y = rnd.choice("ab"), rnd.choice("ab")
        if k == "S":
            actions.append(EditAction.sub(x, y))
            w, u = w + x, u + y
        elif k == "D":
            actions.append(EditAction.delete(x))
            w += x
        else:
            actions.append(EditAction.insert(y))
            u += y
    a = Alignment(actions)
    assert (a.canonical, a.surface) == (u, w)


def test_sparse_vector_has_no_zeros_and_dot():
    v = SparseVector({"a": 1.0, "b": 0.0})
    assert "b" not in v
    v.add_to("a", -1.0)
    assert "a" not in v and len(v) == 0
    x = SparseVector({"a": 2.0, "b": 3.0})
    y = SparseVector({"b": -1.0, "c": 4.0})
    assert x.dot(y) == y.dot(x) == -3.0
    assert (x + y) == {"a": 2.0, "b": 2.0, "c": 4.0}
    assert (x - x) == {}
    assert x.subset("a") == {"a": 2.0}


@given(
    st.dictionaries(st.sampled_from("abcdef"), st.floats(-5, 5, allow_nan=False), max_size=6),
    st.dictionaries(st.sampled_from("abcdef"), st.floats(-5, 5, allow_nan=False), max_size=6),
)
def test_sparse_vector_matches_dense(x, y):
    keys = sorted("abcdef")
    dense = lambda d: [d.get(k, 0.0) for k in keys]  # noqa: E731
    sx, sy = SparseVector(x), SparseVector(y)
    assert sx.dot(sy) == pytest.approx(sum(a * b for a, b in zip(dense(x), dense(y))), abs=1e-9)
    assert dense(sx + sy) == pytest.approx([a + b for a, b in zip(dense(x), dense(y))])
    assert all(v != 0.0 for v in (sx + sy).values())


def test_model_parameters_validation():
    theta = ModelParameters(lexicon=["Test", "able"])
    assert theta.k == 5 and theta.in_lexicon("TEST") and theta.in_lexicon("able")
    with pytest.raises(ValueError):
        ModelParameters(k=-1)
    with pytest.raises(ValueError):
        ModelParameters(structure="tree")
    split = theta.with_vector({"p|seg|a": 1.0, "t|id|S:a>a": 2.0})
    assert split.omega == {"p|seg|a": 1.0} and split.eta == {"t|id|S:a>a": 2.0}
    assert split.vector() == {"p|seg|a": 1.0, "t|id|S:a>a": 2.0}


def test_require_tree_raises(untestably):
    t, u = untestably
    with pytest.raises(TreeError):
        require_tree(t, u + "x")
