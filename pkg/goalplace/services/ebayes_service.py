import logging
from typing import Optional, Sequence

import numpy as np
from joblib import Parallel, delayed
from scipy import stats

from goalplace.core.config import settings
from goalplace.core.exceptions import InputError, NumericalError
from goalplace.schemas.density import CellDensityVector
from goalplace.schemas.ebayes import (
    NormalityReport,
    PriorEnsemble,
    RiskReport,
    ShrinkageMode,
    ShrinkageResult,
    TimingClipSpec,
)
from goalplace.schemas.netlist import TargetVector
from goalplace.utils.seeding import derive_seed

logger = logging.getLogger(__name__)

SERIES_TERMS = 32
SERIES_RADIUS = 0.25
EPSILON = 1e-12


def build_prior(densities: Sequence[CellDensityVector]) -> PriorEnsemble:
    """Per-cell mean and unbiased standard deviation over K placement densities."""
    if len(densities) < 2:
        raise InputError(f"prior ensemble needs at least 2 density vectors, got {len(densities)}")
    names = densities[0].names
    for vector in densities[1:]:
        if len(vector.names) != len(names) or vector.names != names:
            raise InputError("density vectors of the prior ensemble cover different cells")
    samples = np.column_stack([vector.values for vector in densities])
    return PriorEnsemble(
        names=names,
        samples=samples,
        mean=samples.mean(axis=1),
        std=samples.std(axis=1, ddof=1),
    )


def clamp_targets(values: np.ndarray, floor: Optional[float] = None) -> tuple[np.ndarray, int]:
    """Clamp to the physical range [floor, 1]; returns the clamped values and how many moved."""
    floor = floor if floor is not None else settings.target_floor
    clamped = np.clip(values, floor, 1.0)
    moved = clamped != values
    count = int(np.count_nonzero(moved))
    if count:
        logger.info("clamped %d of %d estimates to [%g, 1]", count, values.size, floor)
        for i in np.flatnonzero(moved)[:20]:
            logger.debug("estimate %d: %.6g -> %.6g", i, values[i], clamped[i])
    return clamped, count


def _shrink(mean: np.ndarray, z: np.ndarray, factor) -> np.ndarray:
    if np.isscalar(factor) and factor == 1.0:
        return z.copy()
    return mean + factor * (z - mean)


def _observations(z: TargetVector, prior: PriorEnsemble) -> np.ndarray:
    if len(z.names) != len(prior.names):
        raise InputError(f"targets cover {len(z.names)} cells, prior covers {len(prior.names)}")
    return z.align(prior.names)


def james_stein(
    z: TargetVector,
    prior: PriorEnsemble,
    sigma0: float | str = "auto",
    floor: Optional[float] = None,
) -> ShrinkageResult:
    """Shrink the tool targets toward the prior mean with B = 1 - (N-2) sigma0^2 / S."""
    obs = _observations(z, prior)
    n = obs.size
    if n < 3:
        raise InputError(f"James-Stein shrinkage needs N >= 3 cells, got {n}")
    if sigma0 == "auto":
        sigma = float(np.sqrt(np.var(obs, ddof=1)))
    else:
        sigma = float(sigma0)
        if sigma <= 0:
            raise InputError(f"sigma0 must be positive, got {sigma0}")

    residual = obs - prior.mean
    s = float(np.sum(residual**2))
    if s == 0:
        raise NumericalError("prior equals target everywhere; shrinkage is undefined")
    factor = 1.0 - (n - 2) * sigma**2 / s
    raw = _shrink(prior.mean, obs, factor)
    estimates, clamped = clamp_targets(raw, floor)
    logger.info("James-Stein: N=%d sigma0=%.4g S=%.4g B=%.4f", n, sigma, s, factor)
    return ShrinkageResult(
        names=prior.names, mode=ShrinkageMode.js, estimates=estimates, raw_estimates=raw,
        shrink_factor=float(factor), sigma0=sigma, S=s, N=n, clamped_count=clamped,
    )


def js_timing_clip(
    js: ShrinkageResult,
    z: TargetVector,
    prior: PriorEnsemble,
    clip: TimingClipSpec,
    floor: Optional[float] = None,
) -> ShrinkageResult:
    """Keep every estimate within D_i * sigma0 of its observation."""
    if js.mode != ShrinkageMode.js:
        raise InputError(f"timing clip applies to a James-Stein result, got {js.mode.value}")
    obs = _observations(z, prior)
    if clip.names != prior.names:
        raise InputError("timing budgets cover different cells than the prior")
    budgets = clip.budgets
    bound = np.where(np.isinf(budgets), np.inf, budgets * js.sigma0)
    above = obs > prior.mean
    raw = np.where(
        above,
        np.maximum(js.raw_estimates, obs - bound),
        np.minimum(js.raw_estimates, obs + bound),
    )
    estimates, clamped = clamp_targets(raw, floor)
    changed = int(np.count_nonzero(raw != js.raw_estimates))
    logger.info("timing clip moved %d of %d estimates", changed, raw.size)
    return js.model_copy(update={
        "mode": ShrinkageMode.jsd, "raw_estimates": raw, "estimates": estimates, "clamped_count": clamped,
    })


def slack_to_budget(
    slacks: np.ndarray,
    names: list[str],
    quantile_count: Optional[int] = None,
) -> TimingClipSpec:
    """Deviation budgets D_i = q + 1 from slack quantile q, most critical first.

    Missing slacks (NaN) and a constant slack profile give the non-critical
    budget ``quantile_count``.
    """
    quantiles = quantile_count or settings.quantile_count
    slacks = np.asarray(slacks, dtype=float)
    budgets = np.full(slacks.size, float(quantiles))
    present = np.flatnonzero(~np.isnan(slacks))
    if present.size == 0 or np.ptp(slacks[present]) == 0:
        logger.info("no slack spread; every cell gets budget %d", quantiles)
        return TimingClipSpec(names=names, budgets=budgets, quantile_count=quantiles)
    order = present[np.lexsort((present, slacks[present]))]
    ranks = np.arange(order.size)
    budgets[order] = np.floor(ranks * quantiles / order.size) + 1
    return TimingClipSpec(names=names, budgets=budgets, quantile_count=quantiles)


def _series_sums(weights_e: np.ndarray, s: np.ndarray, a0: float) -> tuple[np.ndarray, np.ndarray]:
    """Power sums sum_j E_j u_j^-(k+2) and sum_j u_j^-(k+2), u_j = a0 + s_j."""
    u = a0 + s
    power = 1.0 / u**2
    pe = np.empty(SERIES_TERMS)
    p = np.empty(SERIES_TERMS)
    for k in range(SERIES_TERMS):
        pe[k] = weights_e @ power
        p[k] = power.sum()
        power = power / u
    return pe, p


def _base_terms_direct(a: np.ndarray, e: np.ndarray, s: np.ndarray, chunk: int = 256) -> tuple[np.ndarray, np.ndarray]:
    num = np.empty(a.size)
    den = np.empty(a.size)
    for start in range(0, a.size, chunk):
        w = 1.0 / (a[start:start + chunk, None] + s[None, :]) ** 2
        num[start:start + chunk] = 0.5 * (w @ e)
        den[start:start + chunk] = 0.5 * w.sum(axis=1)
    return num, den


def _base_terms(a, e, s, a0, pe, p, u_min):
    """Numerator and denominator of the all-d=1 update at every point of ``a``."""
    delta = a - a0
    near = np.abs(delta) <= SERIES_RADIUS * u_min
    num = np.empty(a.size)
    den = np.empty(a.size)
    if near.any():
        k = np.arange(SERIES_TERMS)
        coef = (k + 1) * (-delta[near, None]) ** k
        num[near] = 0.5 * (coef @ pe)
        den[near] = 0.5 * (coef @ p)
    if (~near).any():
        num[~near], den[~near] = _base_terms_direct(a[~near], e, s)
    return num, den


def _solve_base(e: np.ndarray, s: np.ndarray, damping: float, tol: float, max_iter: int) -> float:
    a = max(float(e.mean()), EPSILON)
    for _ in range(max_iter):
        w = 1.0 / (a + s) ** 2
        update = max(float((e @ w) / w.sum()), 0.0)
        if abs(update - a) <= tol:
            return update
        a = max((1 - damping) * a + damping * update, 0.0)
    raise NumericalError("shared variance fixed point did not converge", {"A": a, "iterations": max_iter})


def hetero_fixed_point_map(a_hat: np.ndarray, z: TargetVector, prior: PriorEnsemble) -> np.ndarray:
    """One undamped update of every cell's variance fixed point, evaluated directly."""
    obs = _observations(z, prior)
    s = prior.std**2
    e = (obs - prior.mean) ** 2 - s
    num, den = _base_terms_direct(np.asarray(a_hat, dtype=float), e, s)
    w = 1.0 / (a_hat + s) ** 2
    return (num - s * w) / (den + w)


def hetero_shrink(
    z: TargetVector,
    prior: PriorEnsemble,
    floor: Optional[float] = None,
    max_iter: Optional[int] = None,
    tol: Optional[float] = None,
    damping: Optional[float] = None,
) -> ShrinkageResult:
    """Per-cell shrinking factors when observation variances differ.

    Cell i is treated with three degrees of freedom and every other cell with
    one; the prior variance A is the fixed point of the information-weighted
    mean of the moment estimates E_j. Solved by damped iteration, warm-started
    from the fixed point where every cell has one degree of freedom.
    """
    max_iter = max_iter or settings.hetero_max_iter
    tol = tol if tol is not None else settings.hetero_tol
    damping = damping or settings.hetero_damping
    obs = _observations(z, prior)
    n = obs.size
    if n < 5:
        raise InputError(f"heteroscedastic shrinkage needs N >= 5 cells, got {n}")
    if np.any(prior.std <= 0):
        bad = prior.names[int(np.argmax(prior.std <= 0))]
        raise InputError(f"cell {bad} has zero prior variance")

    s = prior.std**2
    residual = obs - prior.mean
    e = residual**2 - s
    a0 = _solve_base(e, s, damping, tol, max_iter)
    pe, p = _series_sums(e, s, a0)
    u_min = float((a0 + s).min())

    def update(a: np.ndarray) -> np.ndarray:
        num, den = _base_terms(a, e, s, a0, pe, p, u_min)
        w = 1.0 / (a + s) ** 2
        return np.maximum((num - s * w) / (den + w), 0.0)

    a = np.full(n, a0)
    active = np.ones(n, dtype=bool)
    residual_max = np.inf
    for iteration in range(max_iter):
        target = update(a[active])
        gap = np.abs(target - a[active])
        residual_max = float(gap.max())
        done = gap <= tol
        idx = np.flatnonzero(active)
        a[idx[done]] = target[done]
        a[idx[~done]] = np.maximum((1 - damping) * a[idx[~done]] + damping * target[~done], 0.0)
        active[idx[done]] = False
        if not active.any():
            break
    else:
        raise NumericalError(
            "per-cell variance fixed point did not converge",
            {"unconverged": int(active.sum()), "max_residual": residual_max, "iterations": max_iter},
        )
    logger.info("hetero fixed point: A0=%.4g, %d iterations", a0, iteration + 1)

    num, den = _base_terms(a, e, s, a0, pe, p, u_min)
    w = 1.0 / (a + s) ** 2
    d_star = 2.0 * (a + s) ** 2 * (den + w)
    factor = 1.0 - ((d_star - 4.0) / d_star) * s / (a + s)
    raw = prior.mean + factor * residual
    estimates, clamped = clamp_targets(raw, floor)
    return ShrinkageResult(
        names=prior.names, mode=ShrinkageMode.js_hetero, estimates=estimates, raw_estimates=raw,
        shrink_factor=factor, sigma0=float(np.sqrt(s.mean())), S=float(np.sum(residual**2)), N=n,
        clamped_count=clamped, fixed_point=a, d_star=d_star,
    )


def bayes_estimate(z: np.ndarray, M: float, A: float, sigma0: float) -> np.ndarray:
    """Posterior mean under a known N(M, A) prior and N(0, sigma0^2) noise."""
    return M + (A / (A + sigma0**2)) * (np.asarray(z) - M)


def _risk_trials(seeds: list[np.random.SeedSequence], n: int, M: float, A: float, sigma0: float) -> np.ndarray:
    losses = np.empty((len(seeds), 3))
    for t, seed in enumerate(seeds):
        rng = np.random.default_rng(seed)
        mu = rng.normal(M, np.sqrt(A), size=n)
        z = mu + rng.normal(0.0, sigma0, size=n)
        s = np.sum((z - M) ** 2)
        js = M + (1.0 - (n - 2) * sigma0**2 / s) * (z - M)
        losses[t] = (
            np.sum((z - mu) ** 2),
            np.sum((js - mu) ** 2),
            np.sum((bayes_estimate(z, M, A, sigma0) - mu) ** 2),
        )
    return losses


def risk_report(
    trials: int,
    N: int,
    A: float,
    sigma0: float,
    seed: int,
    M: float = 0.5,
    threads: Optional[int] = None,
) -> RiskReport:
    """Monte Carlo risks of the MLE, James-Stein and Bayes rules under the normal-normal model."""
    if N < 3:
        raise InputError(f"risk comparison needs N >= 3, got {N}")
    if trials < 100:
        raise InputError(f"risk comparison needs at least 100 trials, got {trials}")
    if A <= 0 or sigma0 <= 0:
        raise InputError("A and sigma0 must be positive")
    threads = threads or settings.threads
    seeds = derive_seed(seed, "risk").spawn(trials)
    chunks = [seeds[i:i + 256] for i in range(0, trials, 256)]
    parts = Parallel(n_jobs=threads)(delayed(_risk_trials)(chunk, N, M, A, sigma0) for chunk in chunks)
    losses = np.vstack(parts)
    r_mle, r_js, r_bayes = losses.mean(axis=0)
    return RiskReport(
        trials=trials, N=N, A=A, sigma0=sigma0, seed=seed,
        R_MLE=float(r_mle), R_JS=float(r_js), R_Bayes=float(r_bayes),
        ratio_JS_Bayes=float(r_js / r_bayes), ratio_JS_MLE=float(r_js / r_mle),
        theoretical_ratio=1.0 + 2.0 * sigma0**2 / (N * A),
        js_win_fraction=float(np.mean(losses[:, 1] < losses[:, 0])),
    )


def normality_check(prior: PriorEnsemble, alpha: float = 0.05) -> NormalityReport:
    """Fraction of cells whose ensemble passes Shapiro-Wilk at level ``alpha``."""
    if prior.k < 8:
        raise InputError(f"normality check needs K >= 8 samples per cell, got {prior.k}")
    skipped, passed, tested = [], 0, 0
    for name, row, sd in zip(prior.names, prior.samples, prior.std):
        if sd == 0:
            skipped.append(name)
            continue
        tested += 1
        if stats.shapiro(row).pvalue >= alpha:
            passed += 1
    if skipped:
        logger.info("normality check skipped %d constant cells", len(skipped))
    return NormalityReport(
        alpha=alpha, tested=tested, passed=passed,
        pass_fraction=passed / tested if tested else None, skipped=skipped,
    )
