"""Randomization test over within-pair treatment swaps.

The transformation group swaps treatment labels inside pairs: an element
picks a subset of pairs and exchanges treated and control in each. The
group has 2^G elements and, because exactly one member of each pair is
treated, every element keeps one treated cluster per pair.

To test effect = delta0, the hypothesized effect is first removed from the
clusters that were actually treated; the studentized statistic

    T(d) = |sqrt(G) * delta_hat(d)| / v(d)

is then recomputed on the shifted outcomes for each transformed treatment
vector, and the p-value is the fraction of group elements whose statistic
is at least the observed one. Exact mode enumerates the whole group (up to
G = 20 pairs); stochastic mode samples group elements uniformly, with the
identity always included so the p-value stays valid at any draw count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Dataset, summarize
from .errors import BadB, MissingTreatment, TooManyPairsForExact
from .estimation import summary_arrays
from .inference import (
    EPS_FLOOR,
    adjusted_values,
    arm_stats,
    pair_variance_components,
    shifted_ybar,
)
from .matching import MatchedDesign

#: Exact enumeration is capped at 2^20 group elements.
MAX_EXACT_PAIRS = 20

#: Smallest allowed draw count in stochastic mode.
MIN_DRAWS = 19

#: Group elements evaluated per chunk, to bound memory during enumeration.
_CHUNK = 1 << 16

#: |sqrt(G) delta_hat| below this counts as zero when the variance clamps.
_ZERO_NUMERATOR_TOL = 1e-10

#: Slack when comparing statistics against the observed one.
_COMPARE_TOL = 1e-12


@dataclass(frozen=True)
class RandTestResult:
    p_value: float
    reject: bool
    alpha: float
    delta0: float
    t_observed: float
    draws: int
    mode: str
    seed: int | None

    def to_json_dict(self) -> dict:
        return {
            "p_value": self.p_value,
            "reject": self.reject,
            "alpha": self.alpha,
            "delta0": self.delta0,
            "t_observed": self.t_observed if np.isfinite(self.t_observed) else None,
            "draws": self.draws,
            "mode": self.mode,
            "seed": self.seed,
        }


def statistic_batch(
    n: np.ndarray,
    ybar: np.ndarray,
    dmat: np.ndarray,
    permutation,
    pair_count: int,
) -> np.ndarray:
    """Studentized statistics for a batch of treatment vectors, shape (B, 2G).

    When the variance estimate clamps, the statistic is 0 for a numerator
    that is itself zero and +inf otherwise, so degenerate draws compare
    conservatively against a degenerate observed value.
    """
    d = dmat.astype(float)
    _, _, _, _, delta = arm_stats(n, ybar, d)
    yhat = adjusted_values(n, ybar, d)
    _, _, v2 = pair_variance_components(yhat, d, permutation, pair_count)
    num = np.sqrt(pair_count) * np.atleast_1d(delta)
    v2 = np.atleast_1d(v2)
    clamped = v2 <= EPS_FLOOR
    t = np.empty(num.shape, dtype=float)
    ok = ~clamped
    t[ok] = np.abs(num[ok]) / np.sqrt(v2[ok])
    zero = clamped & (np.abs(num) <= _ZERO_NUMERATOR_TOL)
    t[zero] = 0.0
    t[clamped & ~zero] = np.inf
    return t


def swap_treatments(
    d: np.ndarray, bits: np.ndarray, permutation, pair_count: int
) -> np.ndarray:
    """Apply swap patterns to a treatment vector.

    ``bits`` has shape (B, G); bit j = 1 swaps the members of pair j.
    Returns an integer matrix of shape (B, 2G).
    """
    perm = np.asarray(permutation)
    first = perm[0::2]
    second = perm[1::2]
    dmat = np.repeat(d[np.newaxis, :], bits.shape[0], axis=0)
    dmat[:, first] = d[first] ^ bits
    dmat[:, second] = d[second] ^ bits
    return dmat


def _count_at_least(t: np.ndarray, t_obs: float) -> int:
    return int(np.count_nonzero(t >= t_obs - _COMPARE_TOL))


def randomization_test(
    dataset: Dataset,
    design: MatchedDesign,
    alpha: float = 0.05,
    delta0: float = 0.0,
    mode: str = "exact",
    draws: int | None = None,
    seed: int | None = None,
) -> RandTestResult:
    """Exact or sampled randomization p-value for the hypothesis effect = delta0.

    Exact mode enumerates all 2^G swap patterns and needs G <= 20. Stochastic
    mode evaluates the identity plus ``draws - 1`` uniform swap patterns drawn
    from a Philox stream keyed by ``seed``; ``draws`` must be at least 19.
    """
    if not dataset.has_treatments:
        raise MissingTreatment("the randomization test requires treatments")
    n, _, ybar, d_float = summary_arrays(summarize(dataset))
    d = d_float.astype(np.int64)
    g = design.pair_count
    ytilde = shifted_ybar(ybar, d_float, delta0)

    identity = np.zeros((1, g), dtype=np.int64)
    t_obs = float(
        statistic_batch(n, ytilde, swap_treatments(d, identity, design.permutation, g), design.permutation, g)[0]
    )

    if mode == "exact":
        if g > MAX_EXACT_PAIRS:
            raise TooManyPairsForExact(
                f"exact enumeration supports at most {MAX_EXACT_PAIRS} pairs, got {g}"
            )
        total = 1 << g
        count = 0
        shifts = np.arange(g, dtype=np.uint64)
        for start in range(0, total, _CHUNK):
            idx = np.arange(start, min(start + _CHUNK, total), dtype=np.uint64)
            bits = ((idx[:, np.newaxis] >> shifts) & np.uint64(1)).astype(np.int64)
            dmat = swap_treatments(d, bits, design.permutation, g)
            count += _count_at_least(statistic_batch(n, ytilde, dmat, design.permutation, g), t_obs)
        p = count / total
        return RandTestResult(
            p_value=float(p),
            reject=bool(p <= alpha),
            alpha=alpha,
            delta0=delta0,
            t_observed=t_obs,
            draws=total,
            mode="exact",
            seed=None,
        )

    if mode == "stochastic":
        if draws is None or draws < MIN_DRAWS:
            raise BadB(f"stochastic mode needs draws >= {MIN_DRAWS}, got {draws}")
        if seed is None:
            raise BadB("stochastic mode needs a seed")
        rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
        count = 1  # the identity element always matches itself
        remaining = draws - 1
        done = 0
        while done < remaining:
            m = min(_CHUNK, remaining - done)
            bits = rng.integers(0, 2, size=(m, g), dtype=np.int64)
            dmat = swap_treatments(d, bits, design.permutation, g)
            count += _count_at_least(statistic_batch(n, ytilde, dmat, design.permutation, g), t_obs)
            done += m
        p = count / draws
        return RandTestResult(
            p_value=float(p),
            reject=bool(p <= alpha),
            alpha=alpha,
            delta0=delta0,
            t_observed=t_obs,
            draws=draws,
            mode="stochastic",
            seed=seed,
        )

    raise ValueError(f"mode must be 'exact' or 'stochastic', got {mode!r}")
