"""Variance estimation and normal-approximation inference for paired designs.

The variance estimator works on adjusted outcomes: each cluster's mean is
centered at its own arm's size-weighted mean and rescaled by N_g over the
average cluster size, so the adjusted values are mean zero within each arm.
Two ingredients combine into the estimate

    v2 = tau2 - lambda2 / 2,

where ``tau2`` is the mean squared within-pair difference of adjusted
outcomes and ``lambda2`` averages cross products of treatment-signed
within-pair differences over consecutive pairs ("pairs of pairs"). tau2
alone would be conservative; the lambda2 correction removes the part of the
within-pair difference that matching already explains, provided consecutive
pairs are close in feature space (see
:func:`pairedcrt.matching.order_pairs_for_variance`).

Functions here accept treatment vectors of shape (2G,) or batched
(B, 2G); the batch path drives the randomization test.
"""

from __future__ import annotations

from dataclasses import dataclass
from statistics import NormalDist
from typing import Sequence

import numpy as np

from .core import ClusterSummary, Dataset, summarize
from .errors import EmptyArm, MissingTreatment, TooFewPairs
from .estimation import PointEstimate, estimate_size_weighted, summary_arrays
from .matching import MatchedDesign

#: Floor applied to v2 when the estimate is non-positive (degenerate data).
EPS_FLOOR = 1e-12

_NORMAL = NormalDist()


@dataclass(frozen=True)
class AdjustedOutcomes:
    """Size-rescaled, arm-centered cluster means; sums to zero within each arm."""

    yhat: np.ndarray
    arm_weighted_means: tuple[float, float]  # (treated, control)
    nbar: float


@dataclass(frozen=True)
class VarianceEstimate:
    tau2: float
    lambda2: float
    v2: float
    clamped: bool


@dataclass(frozen=True)
class InferenceResult:
    estimate: PointEstimate
    variance: VarianceEstimate
    se: float
    z: float
    p_value: float
    ci_low: float
    ci_high: float
    alpha: float
    delta0: float
    degenerate: bool

    def to_json_dict(self) -> dict:
        def _finite(x: float):
            return x if np.isfinite(x) else None

        return {
            "delta_hat": self.estimate.delta_hat,
            "mu1": self.estimate.mu1,
            "mu0": self.estimate.mu0,
            "n1": self.estimate.n1,
            "n0": self.estimate.n0,
            "estimand": self.estimate.estimand,
            "tau2": self.variance.tau2,
            "lambda2": self.variance.lambda2,
            "v2": self.variance.v2,
            "clamped": self.variance.clamped,
            "se": _finite(self.se),
            "z": self.z,
            "p_value": self.p_value,
            "ci_low": _finite(self.ci_low),
            "ci_high": _finite(self.ci_high),
            "alpha": self.alpha,
            "delta0": self.delta0,
            "degenerate": self.degenerate,
        }


def arm_stats(n: np.ndarray, ybar: np.ndarray, d: np.ndarray):
    """Size-weighted arm means and arm sizes; ``d`` may be batched (..., 2G).

    Returns (mu1, mu0, n1, n0, delta) with the batch shape of ``d``.
    """
    n1 = (n * d).sum(axis=-1)
    n0 = (n * (1.0 - d)).sum(axis=-1)
    if np.any(n1 == 0) or np.any(n0 == 0):
        raise EmptyArm("a treatment arm is empty")
    mu1 = (n * ybar * d).sum(axis=-1) / n1
    mu0 = (n * ybar * (1.0 - d)).sum(axis=-1) / n0
    return mu1, mu0, n1, n0, mu1 - mu0


def adjusted_values(n: np.ndarray, ybar: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Adjusted outcomes (N_g / nbar) * (ybar_g - own-arm weighted mean)."""
    mu1, mu0, _, _, _ = arm_stats(n, ybar, d)
    own = np.where(d == 1.0, mu1[..., None], mu0[..., None])
    return (n / n.mean()) * (ybar - own)


def pair_variance_components(
    yhat: np.ndarray, d: np.ndarray, permutation: Sequence[int], pair_count: int
):
    """tau2, lambda2 and raw v2 for adjusted outcomes under a pair ordering.

    ``yhat`` and ``d`` may be batched (..., 2G). For odd G the trailing pair
    drops out of lambda2.
    """
    if pair_count < 2:
        raise TooFewPairs("the cross-pair correction needs at least 2 pairs")
    perm = np.asarray(permutation)
    first = perm[0::2]
    second = perm[1::2]
    diffs = yhat[..., second] - yhat[..., first]
    tau2 = (diffs**2).mean(axis=-1)
    signed = (yhat[..., first] - yhat[..., second]) * (d[..., first] - d[..., second])
    n_quads = pair_count // 2
    lead = signed[..., 0 : 2 * n_quads : 2]
    follow = signed[..., 1 : 2 * n_quads : 2]
    lambda2 = (2.0 / pair_count) * (lead * follow).sum(axis=-1)
    return tau2, lambda2, tau2 - 0.5 * lambda2


def adjusted_outcomes(summaries: Sequence[ClusterSummary]) -> AdjustedOutcomes:
    n, _, ybar, d = summary_arrays(summaries)
    if d is None:
        raise MissingTreatment("adjusted outcomes require treatments")
    mu1, mu0, _, _, _ = arm_stats(n, ybar, d)
    return AdjustedOutcomes(
        yhat=adjusted_values(n, ybar, d),
        arm_weighted_means=(float(mu1), float(mu0)),
        nbar=float(n.mean()),
    )


def variance_estimate(
    adjusted: AdjustedOutcomes, design: MatchedDesign, treatments: Sequence[int]
) -> VarianceEstimate:
    """v2 = tau2 - lambda2/2, floored at EPS_FLOOR when degenerate.

    The design must already be in variance-ready pair order; tau2 does not
    depend on the pair order but lambda2 does.
    """
    d = np.asarray(treatments, dtype=float)
    tau2, lambda2, v2 = pair_variance_components(
        adjusted.yhat, d, design.permutation, design.pair_count
    )
    clamped = bool(v2 <= EPS_FLOOR)
    return VarianceEstimate(
        tau2=float(tau2),
        lambda2=float(lambda2),
        v2=EPS_FLOOR if clamped else float(v2),
        clamped=clamped,
    )


def shifted_ybar(ybar: np.ndarray, d: np.ndarray, delta0: float) -> np.ndarray:
    """Remove a hypothesized effect from treated clusters' means."""
    return ybar - d * delta0


def infer(
    dataset: Dataset,
    design: MatchedDesign,
    alpha: float = 0.05,
    delta0: float = 0.0,
) -> InferenceResult:
    """Two-sided z-test of effect = delta0 with a matching confidence interval.

    ``delta0`` enters only through the z numerator: removing a constant
    effect from the treated arm cancels exactly in the arm-centered
    adjusted outcomes, so the variance estimate is invariant to it.
    """
    if not dataset.has_treatments:
        raise MissingTreatment("inference requires treatments")
    summaries = summarize(dataset)
    est = estimate_size_weighted(summaries)
    n, _, ybar, d = summary_arrays(summaries)
    yhat = adjusted_values(n, ybar, d)
    mu1, mu0, _, _, _ = arm_stats(n, ybar, d)
    adjusted = AdjustedOutcomes(
        yhat=yhat, arm_weighted_means=(float(mu1), float(mu0)), nbar=float(n.mean())
    )
    var = variance_estimate(adjusted, design, d)
    g = design.pair_count
    if var.clamped:
        return InferenceResult(
            estimate=est,
            variance=var,
            se=np.inf,
            z=0.0,
            p_value=1.0,
            ci_low=-np.inf,
            ci_high=np.inf,
            alpha=alpha,
            delta0=delta0,
            degenerate=True,
        )
    se = np.sqrt(var.v2 / g)
    z = (est.delta_hat - delta0) / se
    p = 2.0 * _NORMAL.cdf(-abs(z))
    q = _NORMAL.inv_cdf(1.0 - alpha / 2.0)
    return InferenceResult(
        estimate=est,
        variance=var,
        se=float(se),
        z=float(z),
        p_value=float(p),
        ci_low=float(est.delta_hat - q * se),
        ci_high=float(est.delta_hat + q * se),
        alpha=alpha,
        delta0=delta0,
        degenerate=False,
    )
