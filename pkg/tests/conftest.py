import numpy as np
import pytest

from ldakit import Hyperparams, from_token_lists


@pytest.fixture
def tiny_corpus():
    """Three short documents over a three-word vocabulary."""
    return from_token_lists([[0, 1, 0, 2], [1, 2], [0, 0, 1]])


@pytest.fixture
def tiny_hyper(tiny_corpus):
    return Hyperparams.symmetric(3, 0.1, tiny_corpus.n_terms, 0.01)


@pytest.fixture
def two_topic_fixture():
    """The single-document fixture used throughout: tokens [0, 1], K = 2,
    fixed phi, alpha = (0.1, 0.1), assignments z = [0, 1]."""
    corpus = from_token_lists([[0, 1]])
    phi = np.array([[0.9, 0.1], [0.2, 0.8]])
    hyper = Hyperparams.symmetric(2, 0.1, 2, 0.01)
    return corpus, phi, hyper
