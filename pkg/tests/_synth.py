"""Synthetic corpus generators for tests: documents drawn from a known
topic-mixture ground truth, optionally with labels anchored to topics."""

import numpy as np

from ldakit import from_token_lists


def _sample_docs(rng, phi, theta, mean_len):
    n_topics, n_terms = phi.shape
    docs = []
    for d in range(theta.shape[0]):
        n = max(1, rng.poisson(mean_len))
        z = rng.choice(n_topics, size=n, p=theta[d])
        tokens = np.array([rng.choice(n_terms, p=phi[k]) for k in z], dtype=np.int64)
        docs.append(tokens.tolist())
    return docs


def unsupervised_corpus(n_docs, n_terms, n_topics, mean_len, seed,
                        topic_conc=0.05, doc_conc=0.3):
    """Corpus sampled from a random topic model; returns (corpus, truth)."""
    rng = np.random.default_rng(seed)
    phi = rng.dirichlet(np.full(n_terms, topic_conc), size=n_topics)
    theta = rng.dirichlet(np.full(n_topics, doc_conc), size=n_docs)
    corpus = from_token_lists(_sample_docs(rng, phi, theta, mean_len), n_terms=n_terms)
    return corpus, {"phi": phi, "theta": theta}


def unsupervised_pair(n_train, n_test, n_terms, n_topics, mean_len, seed,
                      topic_conc=0.05, doc_conc=0.3):
    """Train and test corpora drawn from one shared ground truth."""
    rng = np.random.default_rng(seed)
    phi = rng.dirichlet(np.full(n_terms, topic_conc), size=n_topics)
    theta_train = rng.dirichlet(np.full(n_topics, doc_conc), size=n_train)
    theta_test = rng.dirichlet(np.full(n_topics, doc_conc), size=n_test)
    train = from_token_lists(_sample_docs(rng, phi, theta_train, mean_len),
                             n_terms=n_terms)
    test = from_token_lists(_sample_docs(rng, phi, theta_test, mean_len),
                            n_terms=n_terms)
    return train, test, {"phi": phi}


def _sample_labeled_docs(rng, phi, label_weight, n_docs, mean_len, max_extra_labels):
    n_labels, n_terms = phi.shape
    docs, labels = [], []
    for d in range(n_docs):
        cardinality = 1 + rng.binomial(max_extra_labels, 0.4)
        cardinality = min(cardinality, n_labels)
        chosen = rng.choice(n_labels, size=cardinality, replace=False, p=label_weight)
        theta = rng.dirichlet(np.full(cardinality, 1.0))
        n = max(2, rng.poisson(mean_len))
        z = rng.choice(cardinality, size=n, p=theta)
        tokens = [int(rng.choice(n_terms, p=phi[chosen[k]])) for k in z]
        docs.append(tokens)
        labels.append(set(int(l) for l in chosen))
    return docs, labels


def labeled_corpus(n_docs, n_terms, n_labels, mean_len, seed,
                   topic_conc=0.08, max_extra_labels=2):
    """Corpus whose documents mix word distributions of their label set;
    label frequencies are deliberately non-uniform."""
    rng = np.random.default_rng(seed)
    phi = rng.dirichlet(np.full(n_terms, topic_conc), size=n_labels)
    label_weight = rng.dirichlet(np.full(n_labels, 1.5))
    docs, labels = _sample_labeled_docs(rng, phi, label_weight, n_docs,
                                        mean_len, max_extra_labels)
    return from_token_lists(docs, n_terms=n_terms, labels=labels,
                            label_space=[f"label{i}" for i in range(n_labels)])


def labeled_pair(n_train, n_test, n_terms, n_labels, mean_len, seed,
                 topic_conc=0.08, max_extra_labels=2):
    """Labeled train and test corpora drawn from one shared label-word
    truth."""
    rng = np.random.default_rng(seed)
    phi = rng.dirichlet(np.full(n_terms, topic_conc), size=n_labels)
    label_weight = rng.dirichlet(np.full(n_labels, 1.5))
    space = [f"label{i}" for i in range(n_labels)]
    docs, labels = _sample_labeled_docs(rng, phi, label_weight, n_train,
                                        mean_len, max_extra_labels)
    train = from_token_lists(docs, n_terms=n_terms, labels=labels, label_space=space)
    docs, labels = _sample_labeled_docs(rng, phi, label_weight, n_test,
                                        mean_len, max_extra_labels)
    test = from_token_lists(docs, n_terms=n_terms, labels=labels, label_space=space)
    return train, test
