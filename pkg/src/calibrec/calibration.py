"""Mapping raw ranking scores to calibrated interaction probabilities.

Three parametric calibrators, all logistic maps of simple score features,
plus an equal-mass histogram-binning baseline:

    platt      p(s) = sigmoid(a*s + b),            a >= 0 enforced at fit
    gaussian   p(s) = sigmoid(a*s^2 + b*s + c)
    gamma      p(s) = sigmoid(a*ln(s) + b*s + c),  needs s > 0
    histogram  p(s) = weighted positive fraction of the bin containing s

Fitting minimizes a weighted negative log-likelihood by gradient descent
with a backtracking line search. In the default (biased) mode weights are
the labels themselves. In unbiased mode each sample carries an inverse
propensity: w+ = y/theta and w- = 1 - y/theta, which makes the risk an
unbiased estimate of the fully-observed one under exposure probability
theta, at the price of possibly negative weights (the objective is then no
longer convex, which the optimizer does not assume).

Diagnostics: expected calibration error and reliability tables over
equal-width or equal-mass bins.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import expit

from .dataset import Dataset
from .ranker import MfParams, score_items

CALIBRATOR_KINDS = ("platt", "gaussian", "gamma", "histogram")
PARAMETRIC_KINDS = ("platt", "gaussian", "gamma")

# clamp floor for probabilities entering logs
_P_EPS = 1e-12

# smallest shifted score the gamma map sees; gamma_shift guarantees the
# fitted scores start here
GAMMA_EPS = 1e-6


@dataclass
class Calibrator:
    """A fitted score-to-probability map.

    ``score_shift`` is added to every incoming score before the map is
    evaluated; it is only ever nonzero for the gamma kind, whose log feature
    needs positive inputs (see ``gamma_shift``). ``bins`` is a list of
    (upper_edge, value) pairs, present only for the histogram kind.
    """

    kind: str
    a: float = 0.0
    b: float = 0.0
    c: float = 0.0
    score_shift: float = 0.0
    bins: list[tuple[float, float]] | None = None


@dataclass
class PropensityModel:
    """Per-item observation propensities from a popularity power law."""

    theta: np.ndarray
    tau: float
    theta_min: float


@dataclass
class CalibrationSample:
    """One (score, label, propensity) fitting point."""

    s: float
    y: int
    theta: float = 1.0


def gamma_shift(scores, eps: float = GAMMA_EPS) -> float:
    """Order-preserving shift making every score positive: s + shift >= eps."""
    return float(eps - np.min(scores))


def _features(kind: str, s: np.ndarray) -> np.ndarray:
    """Design matrix phi(s) such that logit(p) = phi @ (a, b, c)."""
    if kind == "platt":
        return np.column_stack([s, np.ones_like(s), np.zeros_like(s)])
    if kind == "gaussian":
        return np.column_stack([s * s, s, np.ones_like(s)])
    if kind == "gamma":
        if np.any(s <= 0):
            raise ValueError("gamma calibrator needs positive (shifted) scores")
        return np.column_stack([np.log(s), s, np.ones_like(s)])
    raise ValueError(f"unknown parametric kind {kind!r}")


def apply(cal: Calibrator, s) -> float | np.ndarray:
    """Evaluate a calibrator at a score (or array of scores).

    The recorded score shift is applied first. A raw gamma map (no shift)
    rejects nonpositive scores; once a shift is recorded, scores below the
    fitted range saturate at the shift epsilon instead of failing, since
    serving-time scores can legitimately fall below the fit-time minimum.
    Returns values in [0, 1]; scalar in, scalar out.
    """
    arr = np.asarray(s, dtype=float)
    if np.any(np.isnan(arr)):
        raise ValueError("NaN score")
    shifted = arr + cal.score_shift
    scalar = arr.ndim == 0
    shifted = np.atleast_1d(shifted)
    if cal.kind == "gamma" and cal.score_shift != 0.0:
        shifted = np.maximum(shifted, GAMMA_EPS)

    if cal.kind in PARAMETRIC_KINDS:
        phi = _features(cal.kind, shifted)
        out = expit(phi @ np.array([cal.a, cal.b, cal.c]))
    elif cal.kind == "histogram":
        if not cal.bins:
            raise ValueError("histogram calibrator has no bins")
        edges = np.array([e for e, _ in cal.bins])
        values = np.array([v for _, v in cal.bins])
        idx = np.minimum(np.searchsorted(edges, shifted, side="left"), len(values) - 1)
        out = values[idx]
    else:
        raise ValueError(f"unknown calibrator kind {cal.kind!r}")
    return float(out[0]) if scalar else out


def _samples_to_arrays(samples) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    s = np.array([smp.s for smp in samples], dtype=float)
    y = np.array([smp.y for smp in samples], dtype=float)
    theta = np.array([smp.theta for smp in samples], dtype=float)
    if np.any((theta <= 0) | (theta > 1)):
        raise ValueError("propensities must lie in (0, 1]")
    if np.any((y != 0) & (y != 1)):
        raise ValueError("labels must be 0 or 1")
    return s, y, theta


def _weights(y: np.ndarray, theta: np.ndarray, unbiased: bool) -> tuple[np.ndarray, np.ndarray]:
    if unbiased:
        return y / theta, 1.0 - y / theta
    return y, 1.0 - y


def nll(cal: Calibrator, samples, unbiased: bool = False) -> float:
    """Mean weighted negative log-likelihood of samples under a calibrator."""
    s, y, theta = _samples_to_arrays(samples)
    w_pos, w_neg = _weights(y, theta, unbiased)
    p = np.clip(np.atleast_1d(apply(cal, s)), _P_EPS, 1.0 - _P_EPS)
    return float(np.mean(w_pos * -np.log(p) + w_neg * -np.log1p(-p)))


def _objective(theta_vec, phi, w_pos, w_neg) -> float:
    z = phi @ theta_vec
    # -ln sigmoid(z) = softplus(-z);  -ln(1 - sigmoid(z)) = softplus(z)
    return float(np.mean(w_pos * np.logaddexp(0.0, -z) + w_neg * np.logaddexp(0.0, z)))


def _gradient(theta_vec, phi, w_pos, w_neg) -> np.ndarray:
    z = phi @ theta_vec
    sig = expit(z)
    coeff = w_pos * (sig - 1.0) + w_neg * sig
    return phi.T @ coeff / len(z)


def fit(
    kind: str,
    samples: Sequence[CalibrationSample],
    unbiased: bool = False,
    max_iters: int = 1000,
    tol: float = 1e-8,
    score_shift: float = 0.0,
    num_bins: int = 15,
    full_output: bool = False,
):
    """Fit a calibrator by (weighted) maximum likelihood.

    Parametric kinds run projected gradient descent with an Armijo
    backtracking line search from (a,b,c) = (1,0,0) for platt/gamma and
    (0,1,0) for gaussian, stopping when the gradient infinity-norm drops
    below ``tol`` or after ``max_iters`` accepted iterations; platt clips a
    to be nonnegative at every step. Accepted steps never increase the
    objective. The histogram kind ignores the optimizer settings and sets
    each of ``num_bins`` equal-mass bins to its weighted positive fraction.

    ``score_shift`` is added to all sample scores before fitting and
    recorded on the returned calibrator (used for gamma on sign-unconstrained
    scores; see ``gamma_shift``).

    With ``full_output`` returns (calibrator, loss_trace) where the trace
    holds the objective at the start and after every accepted step.

    Raises ValueError on one-class input, on nonpositive shifted scores for
    gamma, and if the objective turns non-finite during optimization.
    """
    if kind not in CALIBRATOR_KINDS:
        raise ValueError(f"unknown calibrator kind {kind!r}")
    s, y, theta = _samples_to_arrays(samples)
    if not (np.any(y == 1) and np.any(y == 0)):
        raise ValueError("need at least one positive and one negative sample")
    s = s + score_shift
    w_pos, w_neg = _weights(y, theta, unbiased)

    if kind == "histogram":
        cal = _fit_histogram(s, w_pos, num_bins, score_shift)
        return (cal, np.array([])) if full_output else cal

    phi = _features(kind, s)
    theta_vec = np.array([1.0, 0.0, 0.0]) if kind in ("platt", "gamma") else np.array([0.0, 1.0, 0.0])

    loss = _objective(theta_vec, phi, w_pos, w_neg)
    if not math.isfinite(loss):
        raise ValueError("non-finite loss at iteration 0")
    trace = [loss]
    step = 1.0
    armijo = 1e-4

    for iteration in range(1, max_iters + 1):
        grad = _gradient(theta_vec, phi, w_pos, w_neg)
        if np.max(np.abs(grad)) < tol:
            break
        step = min(step * 2.0, 1e8)  # grow after successes, shrink below
        accepted = False
        while step > 1e-18:
            cand = theta_vec - step * grad
            clipped = False
            if kind == "platt" and cand[0] < 0.0:
                cand[0] = 0.0
                clipped = True
            cand_loss = _objective(cand, phi, w_pos, w_neg)
            if not math.isfinite(cand_loss):
                raise ValueError(f"non-finite loss at iteration {iteration}")
            enough = (
                cand_loss <= loss
                if clipped
                else cand_loss <= loss - armijo * step * float(grad @ grad)
            )
            if enough and cand_loss <= loss:
                theta_vec, loss = cand, cand_loss
                trace.append(loss)
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break  # line search stalled: no descent direction at float precision

    cal = Calibrator(
        kind=kind,
        a=float(theta_vec[0]),
        b=float(theta_vec[1]),
        c=float(theta_vec[2]),
        score_shift=score_shift,
    )
    return (cal, np.array(trace)) if full_output else cal


def _fit_histogram(s, w_pos, num_bins, score_shift) -> Calibrator:
    order = np.argsort(s, kind="stable")
    s_sorted = s[order]
    w_sorted = w_pos[order]
    n = len(s_sorted)
    counts = [n // num_bins + (1 if b < n % num_bins else 0) for b in range(num_bins)]
    groups: list[list[float]] = []  # [upper_edge, positive_weight, count]
    start = 0
    for count in counts:
        if count == 0:
            continue
        stop = start + count
        edge = float(s_sorted[stop - 1])
        pos_weight = float(w_sorted[start:stop].sum())
        if groups and edge <= groups[-1][0]:
            # tied scores across the boundary: fold into the previous bin so
            # upper edges stay strictly increasing
            groups[-1][1] += pos_weight
            groups[-1][2] += count
        else:
            groups.append([edge, pos_weight, count])
        start = stop
    bins = [(edge, float(np.clip(w / cnt, 0.0, 1.0))) for edge, w, cnt in groups]
    return Calibrator(kind="histogram", score_shift=score_shift, bins=bins)


def estimate_propensity(
    item_popularity, tau: float = 0.5, theta_min: float = 0.01
) -> PropensityModel:
    """Popularity-power propensities: theta_i = clip((pop_i/max_pop)^tau, theta_min, 1)."""
    pop = np.asarray(item_popularity, dtype=float)
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    if not 0 < theta_min <= 1:
        raise ValueError("theta_min must be in (0, 1]")
    max_pop = pop.max() if pop.size else 0.0
    if max_pop <= 0:
        raise ValueError("all-zero item popularity")
    theta = np.clip((pop / max_pop) ** tau, theta_min, 1.0)
    return PropensityModel(theta=theta, tau=tau, theta_min=theta_min)


def _bin_rows(pairs, num_bins: int, scheme: str):
    """Shared binning for ece / reliability_table.

    Returns a list of (lower, upper, count, mean_p, frac_pos) rows, one per
    bin, empty bins included with count 0.
    """
    arr = np.asarray(pairs, dtype=float)
    if arr.size == 0:
        raise ValueError("empty pairs")
    arr = arr.reshape(-1, 2)
    p, y = arr[:, 0], arr[:, 1]
    if np.any((p < 0) | (p > 1)) or np.any(np.isnan(p)):
        raise ValueError("probabilities must lie in [0, 1]")
    n = len(p)

    rows = []
    if scheme == "equal_width":
        idx = np.minimum((p * num_bins).astype(int), num_bins - 1)
        for b in range(num_bins):
            mask = idx == b
            count = int(mask.sum())
            lower, upper = b / num_bins, (b + 1) / num_bins
            if count:
                rows.append((lower, upper, count, float(p[mask].mean()), float(y[mask].mean())))
            else:
                rows.append((lower, upper, 0, 0.0, 0.0))
    elif scheme == "equal_mass":
        order = np.argsort(p, kind="stable")
        counts = [n // num_bins + (1 if b < n % num_bins else 0) for b in range(num_bins)]
        start = 0
        prev_upper = 0.0
        for count in counts:
            if count == 0:
                rows.append((prev_upper, prev_upper, 0, 0.0, 0.0))
                continue
            sel = order[start : start + count]
            lower, upper = float(p[sel[0]]), float(p[sel[-1]])
            rows.append((lower, upper, count, float(p[sel].mean()), float(y[sel].mean())))
            prev_upper = upper
            start += count
    else:
        raise ValueError(f"unknown binning scheme {scheme!r}")
    return rows


def reliability_table(pairs, num_bins: int = 15, scheme: str = "equal_width"):
    """Reliability-diagram rows: (bin_lower, bin_upper, count, mean_p, frac_pos)."""
    return _bin_rows(pairs, num_bins, scheme)


def ece(pairs, num_bins: int = 15, scheme: str = "equal_width") -> float:
    """Expected calibration error: bin-weighted |positive fraction - mean p|."""
    rows = _bin_rows(pairs, num_bins, scheme)
    n = sum(count for _, _, count, _, _ in rows)
    return float(
        sum(count / n * abs(frac_pos - mean_p) for _, _, count, mean_p, frac_pos in rows)
    )


def save_calibrator(cal: Calibrator, path) -> None:
    """Serialize to JSON: {kind, a, b, c, score_shift, bins?}."""
    payload = {
        "kind": cal.kind,
        "a": cal.a,
        "b": cal.b,
        "c": cal.c,
        "score_shift": cal.score_shift,
    }
    if cal.bins is not None:
        payload["bins"] = [[float(e), float(v)] for e, v in cal.bins]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_calibrator(path) -> Calibrator:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    bins = payload.get("bins")
    return Calibrator(
        kind=payload["kind"],
        a=payload.get("a", 0.0),
        b=payload.get("b", 0.0),
        c=payload.get("c", 0.0),
        score_shift=payload.get("score_shift", 0.0),
        bins=[(float(e), float(v)) for e, v in bins] if bins is not None else None,
    )


RELIABILITY_HEADER = "bin_lower,bin_upper,count,mean_p,frac_pos"


def write_reliability_csv(rows, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(RELIABILITY_HEADER + "\n")
        for lower, upper, count, mean_p, frac_pos in rows:
            fh.write(f"{lower},{upper},{count},{mean_p},{frac_pos}\n")


def read_reliability_csv(path):
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != RELIABILITY_HEADER:
            raise ValueError(f"unexpected reliability header {header!r}")
        for line in fh:
            if line.strip():
                lower, upper, count, mean_p, frac_pos = line.strip().split(",")
                rows.append((float(lower), float(upper), int(count), float(mean_p), float(frac_pos)))
    return rows


def collect_calibration_samples(
    params: MfParams,
    dataset: Dataset,
    rng: np.random.Generator,
    split: str = "validation",
    negatives_per_positive: int = 1,
    propensity: PropensityModel | None = None,
) -> list[CalibrationSample]:
    """Build the (score, label, propensity) fitting set from held-out data.

    Every split positive (u, i) yields one y=1 sample; for each positive,
    ``negatives_per_positive`` items the user never interacted with (in any
    split) yield y=0 samples. theta is 1 everywhere unless a propensity
    model is supplied.
    """
    if split != "validation":
        raise ValueError("calibration samples are collected from the validation split")
    split_sets = dataset.by_user(split)
    samples: list[CalibrationSample] = []

    def theta_of(item: int) -> float:
        return float(propensity.theta[item]) if propensity is not None else 1.0

    for user in sorted(split_sets):
        items = sorted(split_sets[user])
        if not items:
            continue
        observed = dataset.observed_items(user)
        if len(observed) >= dataset.num_items:
            raise ValueError(f"user {user} interacted with every item; cannot sample negatives")
        pos_scores = score_items(params, user, items)
        for item, s in zip(items, pos_scores):
            samples.append(CalibrationSample(float(s), 1, theta_of(item)))
            for _ in range(negatives_per_positive):
                while True:
                    j = int(rng.integers(dataset.num_items))
                    if j not in observed:
                        break
                samples.append(
                    CalibrationSample(float(score_items(params, user, [j])[0]), 0, theta_of(j))
                )
    if not samples:
        raise ValueError(f"split {split!r} is empty")
    return samples
