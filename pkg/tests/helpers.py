"""Shared test utilities: dataset builders and independent reference code.

The reference implementations here (matched-pairs inference for unit-sized
clusters, brute-force optimal matching, closed-form limiting variances)
deliberately avoid the package's own numerical paths, so agreement with
them is evidence and not circularity.
"""

import numpy as np

from pairedcrt.core import ClusterRecord, build_dataset
from pairedcrt.matching import MatchedDesign


def make_dataset(sizes, ybars=None, treatments=None, xs=None, outcomes=None):
    """Build a dataset with one sampled unit per cluster unless outcomes given."""
    m = len(sizes)
    records = []
    for i in range(m):
        if outcomes is not None:
            outs = tuple(float(v) for v in outcomes[i])
        else:
            outs = (float(ybars[i]),)
        records.append(
            ClusterRecord(
                cluster_id=f"c{i:03d}",
                n_total=int(sizes[i]),
                sampled_outcomes=outs,
                covariates=(float(xs[i]),) if xs is not None else (float(i),),
                treatment=None if treatments is None else int(treatments[i]),
            )
        )
    return build_dataset(records)


def identity_design(pair_count, matched_on_size=False):
    return MatchedDesign(
        permutation=tuple(range(2 * pair_count)),
        pair_count=pair_count,
        matched_on_size=matched_on_size,
    )


def random_dataset(rng, pairs=3, max_size=8, with_treatments=True):
    """A random valid dataset with subsampled clusters and paired treatments."""
    m = 2 * pairs
    sizes = rng.integers(1, max_size + 1, m)
    counts = [int(rng.integers(1, s + 1)) for s in sizes]
    outcomes = [rng.normal(0.0, 1.0, c).tolist() for c in counts]
    xs = rng.normal(0.0, 1.0, m)
    treatments = None
    if with_treatments:
        treatments = np.zeros(m, dtype=int)
        for j in range(pairs):
            treatments[2 * j + int(rng.integers(0, 2))] = 1
    return make_dataset(sizes, xs=xs, treatments=treatments, outcomes=outcomes)


def all_pairings(n):
    """Every perfect matching of range(n), as a list of index pairs."""

    def rec(rest):
        if not rest:
            yield []
            return
        a = rest[0]
        for i in range(1, len(rest)):
            b = rest[i]
            for tail in rec(rest[1:i] + rest[i + 1 :]):
                yield [(a, b)] + tail

    yield from rec(list(range(n)))


def min_matching_cost(values):
    """Brute-force minimum total within-pair |difference| for scalar values."""
    best = None
    for pairing in all_pairings(len(values)):
        cost = sum(abs(values[a] - values[b]) for a, b in pairing)
        if best is None or cost < best:
            best = cost
    return best


def design_cost(design, values):
    return sum(abs(values[a] - values[b]) for a, b in design.pairs())


def unit_level_reference(pairs_y):
    """Matched-pairs inference from scratch for unit-sized clusters.

    ``pairs_y`` lists (treated outcome, control outcome) per pair, in the
    pair order the variance estimator consumes.
    """
    g = len(pairs_y)
    yt = [a for a, _ in pairs_y]
    yc = [b for _, b in pairs_y]
    mt = sum(yt) / g
    mc = sum(yc) / g
    dev_t = [y - mt for y in yt]
    dev_c = [y - mc for y in yc]
    tau2 = sum((dev_t[j] - dev_c[j]) ** 2 for j in range(g)) / g
    signed = [dev_t[j] - dev_c[j] for j in range(g)]
    lam2 = 2.0 / g * sum(signed[2 * j] * signed[2 * j + 1] for j in range(g // 2))
    v2 = tau2 - lam2 / 2.0
    out = {"delta": mt - mc, "tau2": tau2, "lambda2": lam2, "v2": v2}
    if v2 > 0:
        out["z"] = (g**0.5) * (mt - mc) / (v2**0.5)
    return out


def unit_level_randomization_p(pairs_y, delta0=0.0):
    """Exact swap-enumeration p-value from scratch for unit-sized clusters.

    Enumerates all 2^G within-pair swaps of ``pairs_y`` (listed as
    (treated, control) per pair under the realized assignment, after
    shifting the treated outcome by ``delta0``) and recomputes the
    studentized statistic for each via :func:`unit_level_reference`.
    Degenerate variances map to 0 or +inf exactly as the package does, so
    tie handling matches.
    """
    g = len(pairs_y)
    shifted = [(a - delta0, b) for a, b in pairs_y]

    def statistic(pairs):
        ref = unit_level_reference(pairs)
        num = abs(g**0.5 * ref["delta"])
        if ref["v2"] > 1e-12:
            return num / ref["v2"] ** 0.5
        return 0.0 if num <= 1e-10 else float("inf")

    t_obs = statistic(shifted)
    count = 0
    for mask in range(1 << g):
        flipped = [
            (b, a) if (mask >> j) & 1 else (a, b)
            for j, (a, b) in enumerate(shifted)
        ]
        if statistic(flipped) >= t_obs - 1e-12:
            count += 1
    return count / (1 << g)


def closed_form_variance(dgp, match_on):
    """Exact limiting variance by moment algebra over the size support.

    Derivation: with weights w = N / E[N] and centering constants
    c_d = E[N mu_d] / E[N], the second-moment term is
    E[w^2 ((mu_d - c_d)^2 + sigma_cluster^2 + sigma_unit^2 / s(N))] summed
    over arms, and the subtracted conditional term is the second moment of
    E[sum of centered arms | X] (or | X, N). For the linear model every
    piece reduces to moments of X and N; cross terms vanish because X and
    N are independent.
    """
    values, probs = dgp.sizes.support()
    values = values.astype(float)
    en = float((values * probs).sum())

    def nmom(r):
        return float((values**r * probs).sum())

    center = nmom(2) / en
    ew2 = nmom(2) / en**2
    ej = (nmom(4) - 2 * center * nmom(3) + center**2 * nmom(2)) / en**2
    s = dgp.sampling.counts(values.astype(np.int64)).astype(float)
    ew2_over_s = float(((values**2 / s) * probs).sum()) / en**2

    if dgp.covariates.kind == "uniform":
        low, high = dgp.covariates.params
        var_x = (high - low) ** 2 / 12.0
    else:
        var_x = dgp.covariates.params[1] ** 2

    m = dgp.outcomes
    second = 0.0
    for beta, theta in ((m.beta1, m.theta1), (m.beta0, m.theta0)):
        second += (
            beta**2 * var_x * ew2
            + theta**2 * ej
            + m.sigma_cluster**2 * ew2
            + m.sigma_unit**2 * ew2_over_s
        )
    beta_sum = m.beta1 + m.beta0
    theta_sum = m.theta1 + m.theta0
    if match_on == "x_only":
        cond = beta_sum**2 * var_x
    else:
        cond = beta_sum**2 * var_x * ew2 + theta_sum**2 * ej
    return second - 0.5 * cond
