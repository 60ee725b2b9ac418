"""Independent reference implementations used to check the library.

Everything here is deliberately brute force: exhaustive enumeration, Monte
Carlo simulation, and finite differences. Nothing imports the code paths it
verifies.
"""

import numpy as np


def brute_force_pb(probs):
    """Poisson-binomial pmf by enumerating all 2^n outcomes."""
    probs = np.asarray(list(probs), dtype=float)
    n = len(probs)
    if n == 0:
        return np.array([1.0])
    outcomes = (np.arange(2**n)[:, None] >> np.arange(n)) & 1  # all bit patterns
    weights = np.prod(np.where(outcomes == 1, probs, 1.0 - probs), axis=1)
    return np.bincount(outcomes.sum(axis=1), weights=weights, minlength=n + 1)


def _draw_relevance(topk, rest, n_draws, rng):
    topk = np.asarray(topk, dtype=float)
    rest = np.asarray(rest, dtype=float)
    rel_top = rng.random((n_draws, len(topk))) < topk if len(topk) else np.zeros((n_draws, 0), bool)
    rel_rest = rng.random((n_draws, len(rest))) < rest if len(rest) else np.zeros((n_draws, 0), bool)
    return rel_top, rel_rest


def _mean_se(values):
    values = np.asarray(values, dtype=float)
    return float(values.mean()), float(values.std(ddof=1) / np.sqrt(len(values)))


def mc_precision(topk, rest, n_draws, rng):
    rel_top, _ = _draw_relevance(topk, rest, n_draws, rng)
    return _mean_se(rel_top.sum(axis=1) / len(topk))


def mc_recall(topk, rest, n_draws, rng):
    rel_top, rel_rest = _draw_relevance(topk, rest, n_draws, rng)
    hits = rel_top.sum(axis=1)
    total = hits + rel_rest.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = np.where(total > 0, hits / total, 0.0)
    return _mean_se(vals)


def mc_f1(topk, rest, n_draws, rng):
    rel_top, rel_rest = _draw_relevance(topk, rest, n_draws, rng)
    hits = rel_top.sum(axis=1)
    total = hits + rel_rest.sum(axis=1)
    vals = 2.0 * hits / (len(topk) + total)
    return _mean_se(vals)


def mc_ndcg(topk, rest, n_draws, rng):
    """NDCG of the ranked top-k per draw; 0 when nothing anywhere is relevant."""
    k = len(topk)
    rel_top, rel_rest = _draw_relevance(topk, rest, n_draws, rng)
    gains = 1.0 / np.log2(np.arange(2, k + 2))
    dcg = rel_top @ gains
    total = rel_top.sum(axis=1) + rel_rest.sum(axis=1)
    idcg_by_count = np.concatenate([[np.inf], np.cumsum(gains)])  # index min(count, k)
    idcg = idcg_by_count[np.minimum(total, k)]
    vals = np.where(total > 0, dcg / idcg, 0.0)
    return _mean_se(vals)


def mc_all_utilities(topk, rest, n_draws, rng):
    """One shared set of relevance draws, all four utilities: {name: (mean, se)}."""
    k = len(topk)
    rel_top, rel_rest = _draw_relevance(topk, rest, n_draws, rng)
    hits = rel_top.sum(axis=1)
    total = hits + rel_rest.sum(axis=1)
    out = {"precision": _mean_se(hits / k)}
    with np.errstate(divide="ignore", invalid="ignore"):
        out["recall"] = _mean_se(np.where(total > 0, hits / total, 0.0))
    out["f1"] = _mean_se(2.0 * hits / (k + total))
    gains = 1.0 / np.log2(np.arange(2, k + 2))
    idcg_by_count = np.concatenate([[np.inf], np.cumsum(gains)])
    ndcg = np.where(total > 0, (rel_top @ gains) / idcg_by_count[np.minimum(total, k)], 0.0)
    out["ndcg"] = _mean_se(ndcg)
    return out


def finite_difference_grad(f, x, h=1e-5, coords=None):
    """Central finite differences of a scalar function at selected coordinates."""
    x = np.asarray(x, dtype=float)
    idx = range(x.size) if coords is None else coords
    grad = {}
    for i in idx:
        plus = x.copy().ravel()
        minus = x.copy().ravel()
        plus[i] += h
        minus[i] -= h
        grad[i] = (f(plus.reshape(x.shape)) - f(minus.reshape(x.shape))) / (2.0 * h)
    return grad


def relative_error(a, b):
    return abs(a - b) / max(1.0, abs(a), abs(b))
