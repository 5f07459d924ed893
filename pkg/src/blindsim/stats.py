"""Counting-statistics toolkit.

Exact Poisson and binomial tail probabilities (log-space recurrences with
compensated summation, stable up to k = 1e6), integer-bin histograms,
exact binomial confidence intervals, and a brute-force oracle for the
detector's click-count distribution used to calibrate decision
thresholds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import beta as _beta

from .errors import ValidationError

_REL_CUTOFF = 1e-22  # stop summing once terms are this small vs the anchor
_MAX_TERMS = 2_000_000

_LOG_2PI = math.log(2.0 * math.pi)


def _stirling_corr(k: int) -> float:
    """lgamma(k+1) - (k ln k - k + 0.5 ln(2 pi k)), without cancellation."""
    if k < 16:
        return math.lgamma(k + 1) - (
            k * math.log(k) - k + 0.5 * math.log(2.0 * math.pi * k)
        )
    kk = float(k) * float(k)
    return (1.0 / 12.0 - (1.0 / 360.0 - (1.0 / 1260.0 - 1.0 / (1680.0 * kk)) / kk) / kk) / k


def _log_poisson_pmf(mean: float, i: int) -> float:
    """log of the Poisson pmf, accurate in the bulk of large means.

    Saddle-point form i - mean + i ln(mean/i) - 0.5 ln(2 pi i) - corr(i)
    avoids the catastrophic cancellation of -mean + i ln mean - lgamma.
    """
    if i == 0:
        return -mean
    if i < 16:
        return -mean + i * math.log(mean) - math.lgamma(i + 1)
    delta = (mean - i) / i
    if abs(delta) < 0.5:
        entropy = i * math.log1p(delta)
    else:
        entropy = i * math.log(mean / i)
    return (i - mean) + entropy - 0.5 * (_LOG_2PI + math.log(i)) - _stirling_corr(i)


def _log_binomial_pmf(n: int, i: int, p: float) -> float:
    """log of the binomial pmf via the saddle-point (deviance) form."""
    if i == 0:
        return n * math.log1p(-p)
    if i == n:
        return n * math.log(p)
    if n < 16:
        return (
            math.lgamma(n + 1)
            - math.lgamma(i + 1)
            - math.lgamma(n - i + 1)
            + i * math.log(p)
            + (n - i) * math.log1p(-p)
        )
    j = n - i
    corr = _stirling_corr(n) - _stirling_corr(i) - _stirling_corr(j)
    scale = 0.5 * (math.log(n) - _LOG_2PI - math.log(i) - math.log(j))

    def side(count: int, prob: float) -> float:
        # count * ln(count / (n * prob)), stable when count is near n*prob
        ratio = count / (n * prob)
        if 0.5 < ratio < 2.0:
            return count * math.log1p((count - n * prob) / (n * prob))
        return count * math.log(ratio)

    return corr + scale - side(i, p) - side(j, 1.0 - p)


def _sum_ratio_chain(start: float, ratio_of_next, max_steps: int) -> float:
    """Sum start * (1 + r1 + r1*r2 + ...) with compensated summation.

    ``ratio_of_next(step)`` returns term_{step+1} / term_{step} relative
    to the anchor term.  Terms are accumulated relative to the anchor so
    the partial sums stay O(1).
    """
    terms = [1.0]
    t = 1.0
    for step in range(max_steps):
        r = ratio_of_next(step)
        if r <= 0:
            break
        t *= r
        if t < _REL_CUTOFF:
            break
        terms.append(t)
    return start * math.fsum(terms)


def poisson_tail(mean: float, k: int, side: str = "lower") -> float:
    """Exact Poisson tail: P(X <= k) for side="lower", P(X >= k) for "upper"."""
    if mean < 0:
        raise ValidationError("mean", "must be >= 0")
    if k < 0 or int(k) != k:
        raise ValidationError("k", "must be a nonnegative integer")
    if side not in ("lower", "upper"):
        raise ValidationError("side", "must be 'lower' or 'upper'")
    k = int(k)
    if mean == 0:
        if side == "lower":
            return 1.0
        return 1.0 if k == 0 else 0.0

    def log_pmf(i: int) -> float:
        return _log_poisson_pmf(mean, i)

    def lower(kk: int) -> float:
        # sum downward from kk; ratios i/mean shrink fast below the mean
        if kk < 0:
            return 0.0
        anchor = math.exp(log_pmf(kk))
        if anchor == 0.0 and kk < mean:
            return 0.0
        return _sum_ratio_chain(
            anchor,
            lambda step: (kk - step) / mean if kk - step > 0 else 0.0,
            min(kk + 1, _MAX_TERMS),
        )

    def upper(kk: int) -> float:
        anchor = math.exp(log_pmf(kk))
        return _sum_ratio_chain(
            anchor, lambda step: mean / (kk + step + 1), _MAX_TERMS
        )

    if side == "lower":
        if k >= mean:
            return min(1.0, max(0.0, 1.0 - upper(k + 1)))
        return lower(k)
    if k <= mean:
        return min(1.0, max(0.0, 1.0 - lower(k - 1)))
    return upper(k)


def binomial_tail(n: int, p: float, k: int, side: str = "lower") -> float:
    """Exact binomial tail: P(X <= k) or P(X >= k) for X ~ Binomial(n, p)."""
    if n < 0 or int(n) != n:
        raise ValidationError("n", "must be a nonnegative integer")
    if not 0 <= p <= 1:
        raise ValidationError("p", "must lie in [0, 1]")
    if k < 0 or k > n or int(k) != k:
        raise ValidationError("k", "must lie in [0, n]")
    if side not in ("lower", "upper"):
        raise ValidationError("side", "must be 'lower' or 'upper'")
    n, k = int(n), int(k)
    if p == 0:
        if side == "lower":
            return 1.0
        return 1.0 if k == 0 else 0.0
    if p == 1:
        if side == "upper":
            return 1.0
        return 1.0 if k == n else 0.0

    logit = math.log(p) - math.log1p(-p)

    def log_pmf(i: int) -> float:
        return _log_binomial_pmf(n, i, p)

    def lower(kk: int) -> float:
        if kk < 0:
            return 0.0
        anchor = math.exp(log_pmf(kk))
        # term_{i-1}/term_i = i / (n - i + 1) * (1-p)/p
        return _sum_ratio_chain(
            anchor,
            lambda step: (
                (kk - step) / (n - (kk - step) + 1) * math.exp(-logit)
                if kk - step > 0
                else 0.0
            ),
            min(kk + 1, _MAX_TERMS),
        )

    def upper(kk: int) -> float:
        if kk > n:
            return 0.0
        anchor = math.exp(log_pmf(kk))
        # term_{i+1}/term_i = (n - i) / (i + 1) * p/(1-p)
        return _sum_ratio_chain(
            anchor,
            lambda step: (
                (n - (kk + step)) / (kk + step + 1) * math.exp(logit)
                if kk + step < n
                else 0.0
            ),
            min(n - kk + 1, _MAX_TERMS),
        )

    mean = n * p
    if side == "lower":
        if k >= mean:
            return min(1.0, max(0.0, 1.0 - upper(k + 1)))
        return lower(k)
    if k <= mean:
        return min(1.0, max(0.0, 1.0 - lower(k - 1)))
    return upper(k)


def clopper_pearson_interval(
    successes: int, trials: int, confidence: float = 0.95
) -> tuple[float, float]:
    """Exact binomial confidence interval for a success probability."""
    if trials < 0 or successes < 0 or successes > trials:
        raise ValidationError("successes", "need 0 <= successes <= trials")
    if not 0 < confidence < 1:
        raise ValidationError("confidence", "must lie in (0, 1)")
    alpha = 1.0 - confidence
    low = 0.0 if successes == 0 else float(
        _beta.ppf(alpha / 2, successes, trials - successes + 1)
    )
    high = 1.0 if successes == trials else float(
        _beta.ppf(1 - alpha / 2, successes + 1, trials - successes)
    )
    return low, high


@dataclass(frozen=True)
class Histogram:
    """Binned samples; for count histograms, unit-width integer bins."""

    bin_edges: tuple[float, ...]
    counts: tuple[int, ...]
    n_samples: int

    def __post_init__(self):
        if len(self.bin_edges) != len(self.counts) + 1:
            raise ValidationError("bin_edges", "need len(counts) + 1 edges")
        for a, b in zip(self.bin_edges, self.bin_edges[1:]):
            if not b > a:
                raise ValidationError("bin_edges", "must be strictly increasing")
        if any(c < 0 for c in self.counts):
            raise ValidationError("counts", "must be >= 0")
        if sum(self.counts) != self.n_samples:
            raise ValidationError("counts", "must sum to n_samples")

    @classmethod
    def from_event_counts(cls, values) -> "Histogram":
        """Unit-width integer bins covering the observed range."""
        vals = np.asarray(list(values), dtype=np.int64)
        if vals.size == 0:
            return cls(bin_edges=(0.0, 1.0), counts=(0,), n_samples=0)
        lo = int(vals.min())
        hi = int(vals.max())
        counts = np.bincount(vals - lo, minlength=hi - lo + 1)
        edges = tuple(float(v) for v in range(lo, hi + 2))
        return cls(bin_edges=edges, counts=tuple(int(c) for c in counts),
                   n_samples=int(vals.size))

    @classmethod
    def from_times(cls, values, bin_width: float, t0: float, t1: float) -> "Histogram":
        """Fixed-width time bins over [t0, t1); out-of-range values rejected."""
        vals = np.asarray(list(values), dtype=float)
        n_bins = max(1, int(round((t1 - t0) / bin_width)))
        edges = t0 + bin_width * np.arange(n_bins + 1)
        if vals.size and (vals.min() < t0 or vals.max() >= edges[-1]):
            raise ValidationError("values", "outside histogram range")
        counts, _ = np.histogram(vals, bins=edges)
        return cls(bin_edges=tuple(float(e) for e in edges),
                   counts=tuple(int(c) for c in counts),
                   n_samples=int(vals.size))

    def mean(self) -> float:
        if self.n_samples == 0:
            return math.nan
        lows = np.asarray(self.bin_edges[:-1])
        counts = np.asarray(self.counts)
        return float((lows * counts).sum() / self.n_samples)

    def variance(self) -> float:
        if self.n_samples == 0:
            return math.nan
        lows = np.asarray(self.bin_edges[:-1])
        counts = np.asarray(self.counts)
        m = self.mean()
        return float((counts * (lows - m) ** 2).sum() / self.n_samples)

    def lower_tail(self, k: float) -> float:
        """Empirical P(X <= k), with X the bin-low value of each sample."""
        if self.n_samples == 0:
            return math.nan
        total = 0
        for low, c in zip(self.bin_edges[:-1], self.counts):
            if low <= k:
                total += c
        return total / self.n_samples

    def percentile(self, q: float) -> float:
        """Smallest bin-low value whose cumulative fraction reaches q."""
        if self.n_samples == 0:
            return math.nan
        need = q * self.n_samples
        acc = 0
        for low, c in zip(self.bin_edges[:-1], self.counts):
            acc += c
            if acc >= need:
                return low
        return self.bin_edges[-2]

    def support(self) -> tuple[float, float]:
        """(min, max) bin-low values holding any samples."""
        occupied = [low for low, c in zip(self.bin_edges[:-1], self.counts) if c > 0]
        if not occupied:
            return (math.nan, math.nan)
        return (occupied[0], occupied[-1])

    def to_csv_rows(self):
        for low, high, c in zip(self.bin_edges[:-1], self.bin_edges[1:], self.counts):
            yield (low, high, c)


def count_distribution_oracle(
    params,
    rate: float,
    window: float,
    n_trials: int,
    rng: np.random.Generator,
) -> Histogram:
    """Empirical click-count distribution in a window, by brute force.

    Simulates ``n_trials`` independent windows of Poissonian photons at
    ``rate`` and bins the click counts.  This is the calibrated null
    distribution for the salt test; it reflects dead-time pileup and the
    afterpulse cascade rather than assuming a Poisson law.
    """
    from .detector import process_timeline
    from .optics import gen_signal_photons

    if n_trials < 1:
        raise ValidationError("n_trials", "must be >= 1")
    counts = []
    for _ in range(n_trials):
        timeline = gen_signal_photons(rate, window, rng)
        counts.append(len(process_timeline(params, timeline, rng)))
    return Histogram.from_event_counts(counts)
