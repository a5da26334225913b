"""Independent naive reimplementations used as test oracles.

Everything here is deliberately written with scalar loops and the math
module, not with the package's kernels, so the two paths share no code.
"""

import math
import re

# ---------------------------------------------------------------------------
# Lexical scoring
# ---------------------------------------------------------------------------

K1 = 1.2
B = 0.75


def naive_tokenize(text):
    return [t.lower() for t in re.findall(r"[^\W_]+", text, flags=re.UNICODE)]


def naive_bm25(query_terms, doc_text, all_doc_texts):
    """Straight per-term BM25 over raw text, one scalar at a time."""
    token_lists = [naive_tokenize(t) for t in all_doc_texts]
    n_docs = len(token_lists)
    avg_len = sum(len(toks) for toks in token_lists) / n_docs
    doc_tokens = naive_tokenize(doc_text)
    score = 0.0
    for term in sorted(set(query_terms)):
        tf = sum(1 for t in doc_tokens if t == term)
        if tf == 0:
            continue
        df = sum(1 for toks in token_lists if term in toks)
        idf = math.log(1.0 + (n_docs - df + 0.5) / (df + 0.5))
        norm = K1 * (1.0 - B + B * len(doc_tokens) / avg_len)
        score += idf * tf * (K1 + 1.0) / (tf + norm)
    return score


def naive_classic_tfidf(query_terms, doc_text, all_doc_texts):
    token_lists = [naive_tokenize(t) for t in all_doc_texts]
    n_docs = len(token_lists)
    doc_tokens = naive_tokenize(doc_text)
    score = 0.0
    for term in sorted(set(query_terms)):
        tf = sum(1 for t in doc_tokens if t == term)
        if tf == 0:
            continue
        df = sum(1 for toks in token_lists if term in toks)
        score += tf * math.log(1.0 + n_docs / df)
    return score


# ---------------------------------------------------------------------------
# Model forward pass
# ---------------------------------------------------------------------------


def _mat_vec_cols(w, x, b):
    """w @ x with b added to every column, via explicit loops."""
    m = len(w)
    d = len(w[0])
    n = len(x[0]) if x else 0
    out = [[0.0] * n for _ in range(m)]
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for t in range(d):
                acc += w[i][t] * x[t][j]
            out[i][j] = acc + b[i]
    return out


def _softmax(xs):
    m = max(xs)
    es = [math.exp(x - m) for x in xs]
    total = sum(es)
    return [e / total for e in es]


def naive_candidate_forward(s, p):
    """Attention weights, pooled vector, and logit for one candidate.

    s: K x N score matrix as nested lists.
    p: dict of parameter arrays as nested lists / floats with keys
       w_proj, b_proj, w_k, b_k, w_v, b_v, w_p, b_p, w_h1, b_h1, w_h2, b_h2.
    """
    n = len(s[0]) if s else 0
    if n == 0:
        q_dim = len(p["b_v"])
        pooled = [0.0] * q_dim
        weights = []
    else:
        a = _mat_vec_cols(p["w_proj"], s, p["b_proj"])
        k = [[math.tanh(v) for v in row] for row in _mat_vec_cols(p["w_k"], a, p["b_k"])]
        v = [[max(0.0, u) for u in row] for row in _mat_vec_cols(p["w_v"], a, p["b_v"])]
        z = []
        for j in range(n):
            acc = 0.0
            for i in range(len(p["w_p"])):
                acc += p["w_p"][i] * k[i][j]
            z.append(acc + p["b_p"])
        weights = _softmax(z)
        pooled = []
        for i in range(len(v)):
            acc = 0.0
            for j in range(n):
                acc += v[i][j] * weights[j]
            pooled.append(acc)
    hidden = []
    for i in range(len(p["w_h1"])):
        acc = 0.0
        for t in range(len(pooled)):
            acc += p["w_h1"][i][t] * pooled[t]
        hidden.append(max(0.0, acc + p["b_h1"][i]))
    logit = p["b_h2"]
    for i in range(len(hidden)):
        logit += p["w_h2"][i] * hidden[i]
    return weights, pooled, logit


def naive_predict(matrices, p):
    """Candidate probabilities from per-candidate score matrices."""
    logits = [naive_candidate_forward(s, p)[2] for s in matrices]
    return _softmax(logits)


def params_as_lists(params):
    """Convert RankerParams to the nested-list form the oracle consumes."""
    def conv(name):
        value = getattr(params, name).value
        if value.ndim == 0:
            return float(value)
        if value.ndim == 1:
            return [float(x) for x in value]
        return [[float(x) for x in row] for row in value]

    return {name: conv(name) for name in (
        "w_proj", "b_proj", "w_k", "b_k", "w_v", "b_v",
        "w_p", "b_p", "w_h1", "b_h1", "w_h2", "b_h2",
    )}
