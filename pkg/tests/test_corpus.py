import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ldakit import (
    EmptyCorpusError,
    FormatError,
    from_token_lists,
    load_labels,
    load_plaintext,
    load_sparse_bow,
    save_labels,
    save_sparse_bow,
    split_heldout,
)


def _tokens(corpus):
    return [doc.tokens.tolist() for doc in corpus.documents]


class TestLoadPlaintext:
    def test_basic_tokenization(self, tmp_path):
        path = tmp_path / "docs.txt"
        path.write_text("a b a\nb\n")
        corpus = load_plaintext(path, min_count=1)
        assert corpus.n_docs == 2
        assert corpus.n_terms == 2
        assert _tokens(corpus) == [[0, 1, 0], [1]]

    def test_min_count_keeps_frequent(self, tmp_path):
        path = tmp_path / "docs.txt"
        path.write_text("a b a\nb\n")
        corpus = load_plaintext(path, min_count=2)
        # both a and b occur at least twice corpus-wide
        assert _tokens(corpus) == [[0, 1, 0], [1]]

    def test_min_count_drops_rare_but_keeps_empty_doc(self, tmp_path):
        path = tmp_path / "docs.txt"
        path.write_text("a a\nb\n")
        corpus = load_plaintext(path, min_count=2)
        assert corpus.n_terms == 1
        assert _tokens(corpus) == [[0, 0], []]

    def test_lowercase_and_stopwords(self, tmp_path):
        path = tmp_path / "docs.txt"
        path.write_text("The cat THE dog\n")
        corpus = load_plaintext(path, lowercase=True, stopwords=["the"])
        assert corpus.vocabulary.terms == ("cat", "dog")

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            load_plaintext(tmp_path / "absent.txt")

    def test_empty_after_filtering(self, tmp_path):
        path = tmp_path / "docs.txt"
        path.write_text("a\nb\n")
        with pytest.raises(EmptyCorpusError):
            load_plaintext(path, min_count=5)


class TestLoadSparseBow:
    def test_count_expansion(self, tmp_path):
        dw = tmp_path / "docword.txt"
        vb = tmp_path / "vocab.txt"
        dw.write_text("1 1 2\n1 2 1\n")
        vb.write_text("a\nb\n")
        corpus = load_sparse_bow(dw, vb)
        assert _tokens(corpus) == [[0, 0, 1]]

    def test_doc_gap_becomes_empty(self, tmp_path):
        dw = tmp_path / "docword.txt"
        vb = tmp_path / "vocab.txt"
        dw.write_text("2 1 1\n")
        vb.write_text("a\n")
        corpus = load_sparse_bow(dw, vb)
        assert _tokens(corpus) == [[], [0]]

    def test_word_id_out_of_range(self, tmp_path):
        dw = tmp_path / "docword.txt"
        vb = tmp_path / "vocab.txt"
        dw.write_text("1 3 1\n")
        vb.write_text("a\nb\n")
        with pytest.raises(FormatError) as err:
            load_sparse_bow(dw, vb)
        assert err.value.line == 1

    def test_malformed_line_reports_number(self, tmp_path):
        dw = tmp_path / "docword.txt"
        vb = tmp_path / "vocab.txt"
        dw.write_text("1 1 1\nnot a triple line\n")
        vb.write_text("a\n")
        with pytest.raises(FormatError) as err:
            load_sparse_bow(dw, vb)
        assert err.value.line == 2


class TestLoadLabels:
    def test_label_space_and_frequencies(self, tmp_path):
        corpus = from_token_lists([[0], [0]])
        path = tmp_path / "labels.txt"
        path.write_text("1 x y\n2 x\n")
        labeled = load_labels(path, corpus)
        assert labeled.label_space == ("x", "y")
        assert labeled.label_frequencies.tolist() == [2, 1]
        assert labeled.documents[0].labels == {0, 1}

    def test_empty_file(self, tmp_path):
        corpus = from_token_lists([[0], [0]])
        path = tmp_path / "labels.txt"
        path.write_text("")
        labeled = load_labels(path, corpus)
        assert all(doc.labels == frozenset() for doc in labeled.documents)
        assert labeled.label_frequencies.tolist() == []

    def test_doc_id_out_of_range(self, tmp_path):
        corpus = from_token_lists([[0], [0]])
        path = tmp_path / "labels.txt"
        path.write_text("3 x\n")
        with pytest.raises(FormatError):
            load_labels(path, corpus)


class TestSplitHeldout:
    def test_positional_split(self):
        corpus = from_token_lists([[0, 1, 2, 3]], n_terms=4)
        observed, heldout = split_heldout(corpus, 0.5)
        assert observed.documents[0].tokens.tolist() == [0, 1]
        assert heldout.documents[0].tokens.tolist() == [2, 3]

    def test_ceil_rule_on_odd_length(self):
        corpus = from_token_lists([[0]], n_terms=1)
        observed, heldout = split_heldout(corpus, 0.5)
        assert observed.documents[0].tokens.tolist() == [0]
        assert heldout.documents[0].tokens.tolist() == []

    def test_empty_document(self):
        corpus = from_token_lists([[]], n_terms=1)
        observed, heldout = split_heldout(corpus, 0.5)
        assert observed.documents[0].n_tokens == 0
        assert heldout.documents[0].n_tokens == 0

    @given(
        st.lists(st.lists(st.integers(0, 5), max_size=12), min_size=1, max_size=8),
        st.floats(0.05, 0.95),
    )
    @settings(max_examples=60, deadline=None)
    def test_token_count_conserved(self, token_lists, fraction):
        corpus = from_token_lists(token_lists, n_terms=6)
        observed, heldout = split_heldout(corpus, fraction)
        assert observed.n_tokens + heldout.n_tokens == corpus.n_tokens
        for orig, obs, held in zip(corpus.documents, observed.documents, heldout.documents):
            rejoined = np.concatenate([obs.tokens, held.tokens])
            assert np.array_equal(rejoined, orig.tokens)


class TestRoundTrip:
    @given(st.lists(st.lists(st.integers(0, 4), max_size=10), min_size=1, max_size=6))
    @settings(max_examples=60, deadline=None)
    def test_sparse_round_trip_identity(self, tmp_path_factory, token_lists):
        # token order within a document is word-id ascending in sparse form,
        # and trailing empty documents cannot survive the sparse encoding
        expected = [sorted(t) for t in token_lists]
        while expected and not expected[-1]:
            expected.pop()
        if not any(expected):
            return
        corpus = from_token_lists(token_lists, n_terms=5)
        tmp = tmp_path_factory.mktemp("rt")
        save_sparse_bow(corpus, tmp / "dw.txt", tmp / "vocab.txt")
        reloaded = load_sparse_bow(tmp / "dw.txt", tmp / "vocab.txt")
        assert _tokens(reloaded) == expected
        assert reloaded.vocabulary.terms == corpus.vocabulary.terms
        # a second round trip is exactly idempotent
        save_sparse_bow(reloaded, tmp / "dw2.txt", tmp / "vocab2.txt")
        assert (tmp / "dw.txt").read_text() == (tmp / "dw2.txt").read_text()

    def test_label_round_trip(self, tmp_path):
        corpus = from_token_lists(
            [[0, 1], [1], [0]],
            labels=[{0, 1}, {1}, set()],
            label_space=["x", "y"],
        )
        save_labels(corpus, tmp_path / "labels.txt")
        reloaded = load_labels(tmp_path / "labels.txt", from_token_lists([[0, 1], [1], [0]]))
        assert [doc.labels for doc in reloaded.documents] == \
            [doc.labels for doc in corpus.documents]
        assert reloaded.label_frequencies.tolist() == corpus.label_frequencies.tolist()


def test_plaintext_round_trip_preserves_order(tmp_path):
    from ldakit import save_plaintext

    path = tmp_path / "docs.txt"
    path.write_text("cat dog cat bird\ndog bird\n\n")
    corpus = load_plaintext(path)
    out = tmp_path / "out.txt"
    save_plaintext(corpus, out)
    reloaded = load_plaintext(out)
    assert reloaded.vocabulary.terms == corpus.vocabulary.terms
    assert _tokens(reloaded) == _tokens(corpus)
