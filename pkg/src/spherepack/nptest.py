"""Exact Neyman-Pearson machinery for product measures.

The law of the total log-likelihood ratio t = sum_n log(alt/null) under the
null is built by exact convolution of per-letter laws (atom values in
float64, probabilities kept as 80-bit long-double logs with compensated
segment summation: thousand-fold products underflow the linear domain).

Mass off the common support is tracked by two scalars per law:
- null-only mass (strings with a letter where only the null has support):
  any admissible test accepts these as null, they cost nothing;
- alt-only mass: always rejected, costs nothing on the alt side.

`alpha_star` is the deterministic Neyman-Pearson rule over the merged
atoms: sort by t ascending (smaller t = more null-like) and accept atoms
greedily while the accumulated alt mass fits the e^{-r} budget. Ties do not
arise after merging (values within 1e-12 are one atom); the result is the
best deterministic threshold test, a step function of r.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AtomBudgetError, DomainError
from .probability import ZERO_TOL, Channel, Distribution, r_infinity
from .shifted import ShiftedContext, tilde_esp

ATOM_CAP = 2_000_000
VALUE_MERGE_TOL = 1e-12
LD = np.longdouble


def _merge_atoms(t: np.ndarray, logp: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sort by value and merge atoms closer than the value tolerance.

    Probabilities are combined by segment log-sum-exp in long double;
    merged values are probability-weighted means (drift is below the
    tolerance by construction).
    """
    order = np.argsort(t, kind="stable")
    t = t[order]
    logp = logp[order]
    if t.size <= 1:
        return t, logp
    starts = np.flatnonzero(np.concatenate(([True], np.diff(t) > VALUE_MERGE_TOL)))
    if starts.size == t.size:
        return t, logp
    seg_max = np.maximum.reduceat(logp, starts)
    rep = np.diff(np.concatenate((starts, [t.size])))
    scaled = np.exp(logp - np.repeat(seg_max, rep))
    seg_sum = np.add.reduceat(scaled, starts)
    merged_logp = seg_max + np.log(seg_sum)
    weighted_t = np.add.reduceat(np.asarray(t, dtype=LD) * scaled, starts) / seg_sum
    return np.asarray(weighted_t, dtype=float), merged_logp


@dataclass(frozen=True)
class LogLrLaw:
    """Atoms of the total per-string log-likelihood ratio under the null.

    t holds log(alt/null); logp_null the long-double log of the null mass;
    the alt mass of an atom is recovered exactly as exp(logp_null + t).
    """

    t: np.ndarray
    logp_null: np.ndarray
    null_only_mass: float
    alt_only_mass: float

    @property
    def logp_alt(self) -> np.ndarray:
        return self.logp_null + np.asarray(self.t, dtype=LD)

    def null_common_mass(self) -> float:
        return float(np.exp(self.logp_null).sum()) if self.t.size else 0.0

    def alt_common_mass(self) -> float:
        return float(np.exp(self.logp_alt).sum()) if self.t.size else 0.0


@dataclass(frozen=True)
class TradeoffPoint:
    """One deterministic test on the likelihood-ratio scale.

    alpha: null mass rejected, beta: alt mass accepted, threshold: largest
    accepted atom value (-inf if nothing is accepted). Log-domain copies are
    carried for blocklengths where the linear values underflow float64.
    """

    alpha: float
    beta: float
    threshold: float
    log_alpha: float
    log_beta: float


def _letter_law(null_row: Distribution, alt_row: Distribution) -> tuple[np.ndarray, np.ndarray, LD, LD]:
    if null_row.size != alt_row.size:
        raise DomainError("letter laws need matching alphabets")
    n, a = null_row.probs, alt_row.probs
    common = (n > ZERO_TOL) & (a > ZERO_TOL)
    t = np.log(a[common]) - np.log(n[common])
    logp = np.asarray(np.log(n[common]), dtype=LD)
    null_common = np.asarray(n[common], dtype=LD).sum()
    alt_common = np.asarray(a[common], dtype=LD).sum()
    return t, logp, null_common, alt_common


def build_loglr_law(
    pairs: list[tuple[Distribution, Distribution, int]],
) -> LogLrLaw:
    """Exact N-fold convolution of per-letter log-likelihood-ratio laws.

    `pairs` lists (null row, alt row, multiplicity). Atoms are merged at
    1e-12 value tolerance; growth past the atom cap raises (coarsen the
    instance). Masses off the common support accumulate into the two
    scalar fields.
    """
    t_tot = np.zeros(1)
    logp_tot = np.zeros(1, dtype=LD)
    log_null_common = LD(0.0)
    log_alt_common = LD(0.0)
    for null_row, alt_row, mult in pairs:
        if mult < 0:
            raise DomainError("multiplicities must be non-negative")
        if mult == 0:
            continue
        lt, llogp, n_common, a_common = _letter_law(null_row, alt_row)
        if lt.size == 0:
            # no common support at this letter: the product common region is empty
            return LogLrLaw(
                t=np.zeros(0),
                logp_null=np.zeros(0, dtype=LD),
                null_only_mass=1.0,
                alt_only_mass=1.0,
            )
        log_null_common += LD(mult) * np.log(n_common)
        log_alt_common += LD(mult) * np.log(a_common)
        for _ in range(mult):
            t_tot = (t_tot[:, None] + lt[None, :]).ravel()
            logp_tot = (logp_tot[:, None] + llogp[None, :]).ravel()
            t_tot, logp_tot = _merge_atoms(t_tot, logp_tot)
            if t_tot.size > ATOM_CAP:
                raise AtomBudgetError(
                    f"convolution grew to {t_tot.size} atoms (cap {ATOM_CAP}); coarsen the instance"
                )
    null_only = float(LD(1.0) - np.exp(log_null_common))
    alt_only = float(LD(1.0) - np.exp(log_alt_common))
    return LogLrLaw(
        t=t_tot,
        logp_null=logp_tot,
        null_only_mass=max(null_only, 0.0),
        alt_only_mass=max(alt_only, 0.0),
    )


def _log_from_ld(x: LD) -> float:
    return float(np.log(x)) if x > 0 else float("-inf")


def alpha_star(law: LogLrLaw, r: float) -> TradeoffPoint:
    """Minimum type-I error over deterministic threshold tests with type-II
    error at most e^{-r}.

    Null-only mass is always accepted (contributes to neither error);
    alt-only mass is always rejected. Atoms enter the accept region in
    ascending t order while the accumulated alt mass stays within budget.
    """
    if r < 0:
        raise DomainError("the rate budget r must be non-negative")
    if law.t.size == 0:
        return TradeoffPoint(0.0, 0.0, float("-inf"), float("-inf"), float("-inf"))
    budget = np.exp(LD(-r))
    p_alt = np.exp(law.logp_alt)
    cum_alt = np.cumsum(p_alt)
    k = int(np.searchsorted(cum_alt, budget * (LD(1.0) + LD(1e-15)), side="right"))
    p_null = np.exp(law.logp_null)
    alpha_ld = p_null[k:][::-1].sum() if k < p_null.size else LD(0.0)
    beta_ld = cum_alt[k - 1] if k > 0 else LD(0.0)
    threshold = float(law.t[k - 1]) if k > 0 else float("-inf")
    return TradeoffPoint(
        alpha=float(alpha_ld),
        beta=float(beta_ld),
        threshold=threshold,
        log_alpha=_log_from_ld(alpha_ld),
        log_beta=_log_from_ld(beta_ld),
    )


def alpha_star_fractional(law: LogLrLaw, r: float) -> float:
    """The randomized-boundary Neyman-Pearson value: pack atoms by ascending
    t and split the boundary atom so the alt budget is consumed exactly.

    This is a true lower bound on the type-I error of *every* test
    (deterministic or not) with type-II error at most e^{-r}; the
    deterministic `alpha_star` is >= this value, with equality whenever the
    budget boundary falls between atoms.
    """
    if r < 0:
        raise DomainError("the rate budget r must be non-negative")
    if law.t.size == 0:
        return 0.0
    budget = np.exp(LD(-r))
    p_alt = np.exp(law.logp_alt)
    p_null = np.exp(law.logp_null)
    cum_alt = np.cumsum(p_alt)
    k = int(np.searchsorted(cum_alt, budget * (LD(1.0) + LD(1e-15)), side="right"))
    alpha = p_null[k:].sum() if k < p_null.size else LD(0.0)
    if k < p_null.size:
        spent = cum_alt[k - 1] if k > 0 else LD(0.0)
        frac = (budget - spent) / p_alt[k]
        alpha -= min(max(frac, LD(0.0)), LD(1.0)) * p_null[k]
    return float(max(alpha, LD(0.0)))


def round_to_type(p: Distribution, n: int) -> np.ndarray:
    """Nearest n-type to p in L1 (largest-remainder rounding of n*p)."""
    raw = p.probs * n
    base = np.floor(raw).astype(int)
    short = n - int(base.sum())
    if short > 0:
        order = np.argsort(-(raw - base), kind="stable")
        base[order[:short]] += 1
    return base


def np_alpha_for_composition(
    w: Channel, q: Distribution, p: Distribution, n: int, rate: float
) -> TradeoffPoint:
    """alpha*_{W(.|x^N), q^N}(n*rate) for a length-n string of composition p
    (rounded to the nearest n-type)."""
    counts = round_to_type(p, n)
    pairs = [
        (w.row(x), q, int(counts[x]))
        for x in range(w.nx)
        if counts[x] > 0
    ]
    law = build_loglr_law(pairs)
    return alpha_star(law, n * rate)


@dataclass(frozen=True)
class ThresholdTestResult:
    """Exact error probabilities of the varying-threshold likelihood test."""

    alpha: float
    beta: float
    log_alpha: float
    log_beta: float
    r_n: float
    e_tilde_rn: float
    threshold: float
    counts: tuple[int, ...]


def threshold_test_alpha_beta(
    ctx: ShiftedContext, n: int, zeta: float
) -> ThresholdTestResult:
    """Exact alpha_N, beta_N of the test that accepts the channel when the
    per-letter average of log(W^-/W) falls below etilde(r_N) - r_N.

    eps_N = (1/2 + zeta) log(N)/N and r_N = r(R,P) - eps_N. The composition
    is rounded to the nearest n-type; the returned counts say which.
    """
    if n < 2 or zeta <= 0:
        raise DomainError("need n >= 2 and zeta > 0")
    eps_n = (0.5 + zeta) * np.log(n) / n
    if ctx.R - eps_n <= r_infinity(ctx.channel):
        raise DomainError("N too small: R_N has fallen to R_inf")
    r_n = ctx.r - eps_n
    if r_n <= 0:
        raise DomainError("N too small: the shifted budget r_N is not positive")
    e_tilde = tilde_esp(ctx, r_n).value
    thr = n * (e_tilde - r_n)

    counts = round_to_type(ctx.P, n)
    pairs = [
        (ctx.channel.row(x), ctx.w_minus.row(x), int(counts[x]))
        for x in range(ctx.channel.nx)
        if counts[x] > 0
    ]
    law = build_loglr_law(pairs)
    # W and W^- are mutually absolutely continuous row-wise: no off-support mass
    tol = 1e-11 * max(1.0, abs(thr))
    reject = law.t >= thr - tol
    p_null = np.exp(law.logp_null)
    p_alt = np.exp(law.logp_alt)
    alpha_ld = p_null[reject].sum() if reject.any() else LD(0.0)
    beta_ld = p_alt[~reject].sum() if (~reject).any() else LD(0.0)
    return ThresholdTestResult(
        alpha=float(alpha_ld),
        beta=float(beta_ld),
        log_alpha=_log_from_ld(alpha_ld),
        log_beta=_log_from_ld(beta_ld),
        r_n=float(r_n),
        e_tilde_rn=float(e_tilde),
        threshold=float(thr),
        counts=tuple(int(c) for c in counts),
    )
