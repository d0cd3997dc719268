"""Empirical validation of the aggregation limits and dependence bounds.

Three layers:

* small exact tools reused from the limit arguments: the clip map f_T, its
  moment inequality, alternating index blocks p = N^alpha / q = N^beta with
  their feasibility window, and a dictionary of bounded Lipschitz test
  functions;
* probes that compare measured covariances of dictionary functionals against
  the weak-dependence bounds psi(.) * epsilon(r) and the covariance-decay
  inequality;
* the two experiments: a normality study of X^N_t across an N grid at fixed
  environment (replicates redraw only the innovations), and the convergence
  study Gamma^N(tau, Y) -> Gamma(tau) over nested environment draws.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import kolmogorov, ndtri

from . import aggregation as agg
from . import processes as proc
from .environment import sample_environment
from .errors import ConfigurationError, ContractViolation
from .innovations import generate_panel, theoretical_chi
from .seeding import child_seed, rng_for


def ordered_parallel_map(fn, items, threads=1):
    """Map preserving input order; results are independent of the thread count
    because every item derives its own seeds."""
    if threads <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# truncation
# ---------------------------------------------------------------------------

def truncate(z, level):
    """Clip to [-level, level]; 1-Lipschitz, idempotent, sup-norm = level."""
    if level <= 0:
        raise ConfigurationError("truncation level must be positive")
    return np.clip(z, -level, level)


@dataclass
class TruncationCheck:
    lhs: float
    lhs_se: float
    rhs: float
    rhs_se: float

    @property
    def ok(self):
        return self.lhs <= self.rhs + 3.0 * math.hypot(self.lhs_se, self.rhs_se)


def truncation_moment_check(samples, level, k, m):
    """Empirical test of E|Z - f_T(Z)|^k <= 2 E|Z|^m T^-(m-k) (requires m > k)."""
    if not m > k or k < 1:
        raise ConfigurationError("need m > k >= 1")
    z = np.asarray(samples, dtype=float)
    lhs_samples = np.abs(z - truncate(z, level)) ** k
    rhs_samples = 2.0 * np.abs(z) ** m * level ** (-(m - k))
    n = z.size
    return TruncationCheck(
        lhs=float(lhs_samples.mean()), lhs_se=float(lhs_samples.std(ddof=1) / np.sqrt(n)),
        rhs=float(rhs_samples.mean()), rhs_se=float(rhs_samples.std(ddof=1) / np.sqrt(n)),
    )


# ---------------------------------------------------------------------------
# alternating index blocks
# ---------------------------------------------------------------------------

@dataclass
class BlockScheme:
    """Alternating long/short blocks I_1, J_1, ..., I_r, J_r covering 1..N.

    p = floor(N^alpha), q = floor(N^beta), r = floor(N / (p+q)); the final
    short block absorbs the remainder.
    """

    n: int
    alpha: float
    beta: float
    p: int
    q: int
    r: int
    long_blocks: list
    short_blocks: list

    def is_partition(self):
        seen = []
        for b in self.long_blocks + self.short_blocks:
            seen.extend(b)
        return sorted(seen) == list(range(1, self.n + 1))


def bernstein_blocks(n, alpha, beta):
    """Build the alternating block scheme for exponents 0 < beta < alpha < 1."""
    if not (0.0 < beta < alpha < 1.0):
        raise ConfigurationError("need 0 < beta < alpha < 1")
    p = int(n**alpha)
    q = int(n**beta)
    if p + q > n:
        raise ConfigurationError(f"degenerate scheme: p + q = {p + q} > n = {n}")
    r = n // (p + q)
    long_blocks, short_blocks = [], []
    for m in range(1, r + 1):
        base = (m - 1) * (p + q)
        long_blocks.append(list(range(base + 1, base + p + 1)))
        hi = m * (p + q) if m < r else n
        short_blocks.append(list(range(base + p + 1, hi + 1)))
    return BlockScheme(n=n, alpha=alpha, beta=beta, p=p, q=q, r=r,
                       long_blocks=long_blocks, short_blocks=short_blocks)


@dataclass
class ExponentWindow:
    """Feasible (alpha, beta) region for the block exponents, or empty.

    lambda family: 0 < beta < alpha < delta/(2(1+delta)) and
    3/2 - decay*beta < alpha; nonempty iff decay > 2 + 3/delta.
    kappa family:  1/decay < beta < alpha < delta/(2(1+delta));
    nonempty iff decay > 2 + 2/delta.
    """

    family: str
    delta: float
    decay: float
    threshold: float
    alpha_max: float
    feasible: bool
    alpha: float = None
    beta: float = None

    def contains(self, alpha, beta):
        if not (0.0 < beta < alpha < self.alpha_max):
            return False
        if self.family == "lambda":
            return 1.5 - self.decay * beta < alpha
        return beta > 1.0 / self.decay


def clt_exponent_window(delta, decay, family="lambda"):
    """Feasibility of the block-exponent inequalities for a polynomial decay rate.

    ``decay`` is the exponent in epsilon(r) = O(r^-decay); pass
    ``math.inf`` for profiles that vanish beyond a finite window.
    """
    if delta <= 0:
        raise ConfigurationError("delta must be > 0")
    if decay <= 0:
        raise ConfigurationError("decay exponent must be > 0")
    if family not in ("lambda", "kappa"):
        raise ConfigurationError("family must be lambda or kappa")
    alpha_max = delta / (2.0 * (1.0 + delta))
    if family == "lambda":
        threshold = 2.0 + 3.0 / delta
        feasible = decay > threshold
        window = ExponentWindow(family=family, delta=delta, decay=decay,
                                threshold=threshold, alpha_max=alpha_max, feasible=feasible)
        if feasible:
            alpha_min = 1.5 / (1.0 + decay) if math.isfinite(decay) else 0.0
            alpha = 0.5 * (alpha_max + alpha_min)
            beta_min = max((1.5 - alpha) / decay, 0.0) if math.isfinite(decay) else 0.0
            beta = 0.5 * (beta_min + alpha)
            window.alpha, window.beta = alpha, beta
        return window
    threshold = 2.0 + 2.0 / delta
    feasible = decay > threshold
    window = ExponentWindow(family=family, delta=delta, decay=decay,
                            threshold=threshold, alpha_max=alpha_max, feasible=feasible)
    if feasible:
        beta_min = 1.0 / decay if math.isfinite(decay) else 0.0
        alpha = 0.5 * (beta_min + alpha_max) + 0.25 * (alpha_max - beta_min)
        beta = 0.5 * (beta_min + alpha)
        window.alpha, window.beta = alpha, beta
    return window


# ---------------------------------------------------------------------------
# bounded Lipschitz dictionary
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TestFunction:
    name: str
    arity: int
    lip: float
    fn: object

    def __call__(self, cols):
        return self.fn(cols)


def _clip1(x):
    return np.clip(x, -1.0, 1.0)


def test_function_dictionary(max_arity=3):
    """Clipped coordinates, clipped sums and clipped pairwise products.

    Every member satisfies ||f||_inf <= 1; Lipschitz constants are with
    respect to the coordinate-sum metric (clip is 1-Lipschitz, products of
    clipped coordinates telescope to Lipschitz constant 1).
    """
    if not 1 <= max_arity <= 3:
        raise ConfigurationError("arity must be between 1 and 3")
    members = {}
    for u in range(1, max_arity + 1):
        fns = []
        for m in range(u):
            fns.append(TestFunction(name=f"coord{m}", arity=u, lip=1.0,
                                    fn=(lambda cols, m=m: _clip1(cols[m]))))
        fns.append(TestFunction(name="sum", arity=u, lip=1.0,
                                fn=lambda cols: _clip1(sum(cols))))
        if u >= 2:
            fns.append(TestFunction(name="prod01", arity=u, lip=1.0,
                                    fn=lambda cols: _clip1(cols[0]) * _clip1(cols[1])))
        members[u] = tuple(fns)
    return members


def certify_dictionary(members, seed=0, trials=2000, scale=3.0, tol=1e-9):
    """Check declared sup-norm and Lipschitz constants on random point pairs."""
    rng = rng_for(seed, "dictionary.certify")
    for u, fns in members.items():
        x = rng.uniform(-scale, scale, size=(trials, u))
        y = rng.uniform(-scale, scale, size=(trials, u))
        for f in fns:
            fx = f([x[:, m] for m in range(u)])
            fy = f([y[:, m] for m in range(u)])
            if np.abs(fx).max() > 1.0 + tol:
                raise ContractViolation(f"{f.name}/{u}: sup norm exceeds 1")
            dist = np.abs(x - y).sum(axis=1)
            bad = np.abs(fx - fy) > f.lip * dist + tol
            if bad.any():
                raise ContractViolation(f"{f.name}/{u}: Lipschitz constant {f.lip} violated")
    return True


# ---------------------------------------------------------------------------
# normality
# ---------------------------------------------------------------------------

def _phi(x):
    return 0.5 * (1.0 + np.vectorize(math.erf)(x / math.sqrt(2.0)))


def _normal_cdf(x):
    from scipy.special import ndtr

    return ndtr(x)


@dataclass
class NormalityReport:
    """One-sample comparison against N(0, target_variance).

    KS statistic with the asymptotic Kolmogorov p-value; skewness and excess
    kurtosis with their null standard errors sqrt(6/n), sqrt(24/n); QQ data
    (sorted standardized sample against normal quantiles, same length as the
    sample).
    """

    n: int
    target_variance: float
    target_label: str
    ks_stat: float
    ks_pvalue: float
    skewness: float
    skewness_se: float
    excess_kurtosis: float
    kurtosis_se: float
    qq_sample: np.ndarray = None
    qq_theoretical: np.ndarray = None

    def to_json(self):
        return {
            "n": self.n,
            "target_variance": self.target_variance,
            "target": self.target_label,
            "ks_stat": self.ks_stat,
            "ks_pvalue": self.ks_pvalue,
            "skewness": self.skewness,
            "skewness_se": self.skewness_se,
            "excess_kurtosis": self.excess_kurtosis,
            "kurtosis_se": self.kurtosis_se,
        }


def normality_test(samples, target_variance, target_label="target", keep_qq=True):
    """KS and moment comparison of samples against N(0, target_variance)."""
    samples = np.asarray(samples, dtype=float)
    n = samples.size
    if n < 100:
        raise ConfigurationError("need at least 100 samples")
    if not target_variance > 0:
        raise ConfigurationError("target variance must be positive")
    z = np.sort(samples / math.sqrt(target_variance))
    cdf = _normal_cdf(z)
    i = np.arange(1, n + 1)
    ks = float(max((i / n - cdf).max(), (cdf - (i - 1) / n).max()))
    pvalue = float(kolmogorov(math.sqrt(n) * ks))
    m = z.mean()
    c = z - m
    m2 = float(np.mean(c**2))
    skew = float(np.mean(c**3) / m2**1.5) if m2 > 0 else 0.0
    kurt = float(np.mean(c**4) / m2**2 - 3.0) if m2 > 0 else -3.0
    qq_s = z if keep_qq else None
    qq_t = ndtri((i - 0.5) / n) if keep_qq else None
    return NormalityReport(n=n, target_variance=float(target_variance),
                           target_label=target_label, ks_stat=ks, ks_pvalue=pvalue,
                           skewness=skew, skewness_se=math.sqrt(6.0 / n),
                           excess_kurtosis=kurt, kurtosis_se=math.sqrt(24.0 / n),
                           qq_sample=qq_s, qq_theoretical=qq_t)


def characteristic_distance(samples, target_variance, x_grid=None):
    """max_x |mean e^{-ixX} - e^{-x^2 sigma^2 / 2}| on a fixed frequency grid.

    Optional diagnostic mirroring the exponential test functions of the
    normality argument.
    """
    samples = np.asarray(samples, dtype=float)
    if x_grid is None:
        x_grid = np.linspace(0.25, 3.0, 12) / math.sqrt(target_variance)
    x_grid = np.asarray(x_grid, dtype=float)
    emp = np.exp(-1j * np.outer(x_grid, samples)).mean(axis=1)
    ref = np.exp(-0.5 * x_grid**2 * target_variance)
    return float(np.abs(emp - ref).max())


# ---------------------------------------------------------------------------
# weak-dependence probes
# ---------------------------------------------------------------------------

def psi_weight(family, d_i, d_j, lip_f, lip_g):
    """The psi factor of the covariance bound for each dependence family."""
    a, b = lip_f, lip_g
    if family == "lambda":
        return a * d_i + b * d_j + a * b * d_i * d_j
    if family == "eta":
        return a * d_i + b * d_j
    if family == "theta":
        return b * d_j
    if family == "kappa":
        return a * b * d_i * d_j
    if family == "kappa_prime":
        return a * b * d_j
    raise ConfigurationError(f"unknown dependence family {family!r}")


def _cov_with_se(f_vals, g_vals):
    f_c = f_vals - f_vals.mean()
    g_c = g_vals - g_vals.mean()
    prod = f_c * g_c
    n = prod.size
    cov = float(prod.mean())
    se = float(prod.std(ddof=1) / np.sqrt(n))
    return cov, se


@dataclass
class ProbePair:
    f_name: str
    g_name: str
    u: int
    v: int
    r: int
    cov: float
    se: float
    bound: float

    @property
    def ok(self):
        return abs(self.cov) <= self.bound + 3.0 * self.se

    @property
    def margin(self):
        return self.bound + 3.0 * self.se - abs(self.cov)


@dataclass
class ProbeReport:
    family: str
    r: int
    epsilon_r: float
    pairs: list

    @property
    def ok(self):
        return all(p.ok for p in self.pairs)

    def worst(self):
        return min(self.pairs, key=lambda p: p.margin)


def dependence_probe(z_samples, dictionary, r, profile, v_values, arities=((1, 1), (2, 2), (3, 3))):
    """Covariance of dictionary functionals of separated index blocks vs the bound.

    ``z_samples`` is an (R, n_rows) replicate ensemble of elementary values
    at one time point (rows = panel index, fixed environment).  For each
    requested (u, v) the left block takes rows 1..u and the right block rows
    u+r..u+r+v-1, matching the index-gap convention of the dependence
    definition; ``v_values[i]`` is V(y^i) for row i (1-based).
    """
    z = np.asarray(z_samples, dtype=float)
    n_rows = z.shape[1]
    eps_r = profile.value(r)
    pairs = []
    for u, v in arities:
        j_hi = u + r + v - 1
        if j_hi > n_rows:
            raise IndexError(f"template (u={u}, v={v}, r={r}) needs {j_hi} rows, panel has {n_rows}")
        i_rows = list(range(1, u + 1))
        j_rows = list(range(u + r, u + r + v))
        d_i = float(sum(v_values[i - 1] for i in i_rows))
        d_j = float(sum(v_values[j - 1] for j in j_rows))
        left = [z[:, i - 1] for i in i_rows]
        right = [z[:, j - 1] for j in j_rows]
        for f in dictionary[u]:
            for g in dictionary[v]:
                if f.lip is None or g.lip is None:
                    raise ContractViolation("dictionary member lacks a certified Lipschitz constant")
                cov, se = _cov_with_se(f(left), g(right))
                bound = psi_weight(profile.family, d_i, d_j, f.lip, g.lip) * eps_r
                pairs.append(ProbePair(f_name=f.name, g_name=g.name, u=u, v=v, r=r,
                                       cov=cov, se=se, bound=bound))
    return ProbeReport(family=profile.family, r=r, epsilon_r=eps_r, pairs=pairs)


@dataclass
class CovarianceBoundCheck:
    i: int
    j: int
    cov: float
    se: float
    bound: float

    @property
    def ok(self):
        return abs(self.cov) <= self.bound + 3.0 * self.se


def covariance_bound_check(z_i, z_j, i, j, profile, delta, moment_2plus, ev, ev2):
    """Pairwise covariance against the decay bound with explicit constants.

    lambda/eta/theta families:
        |cov| <= (6 E|Z|^(2+delta) + 2 (E V + (E V)^2)) * eps(|i-j|)^(d/(1+d));
    kappa family:
        |cov| <= (6 E|Z|^(2+delta) + (E V)^2) * eps(|i-j|).

    The bound covers cross terms only; i = j is a contract violation.
    """
    if i == j:
        raise ContractViolation("the covariance bound addresses cross terms only (i != j)")
    r = abs(i - j)
    eps_r = profile.value(r)
    if profile.family in ("lambda", "eta", "theta"):
        const = 6.0 * moment_2plus + 2.0 * (ev + ev**2)
        decay = eps_r ** (delta / (1.0 + delta))
    elif profile.family in ("kappa", "kappa_prime"):
        const = 6.0 * moment_2plus + ev**2
        decay = eps_r
    else:
        raise ConfigurationError(f"unknown dependence family {profile.family!r}")
    cov, se = _cov_with_se(np.asarray(z_i, dtype=float), np.asarray(z_j, dtype=float))
    return CovarianceBoundCheck(i=i, j=j, cov=cov, se=se, bound=const * decay)


# ---------------------------------------------------------------------------
# aggregate sampling
# ---------------------------------------------------------------------------

def _time_span(model, t_points):
    t_points = sorted(int(t) for t in t_points)
    lo = t_points[0] - model.lag_window
    hi = t_points[-1] + (model.lag_window if model.tag in ("linear", "dsv_star") else 0)
    return t_points, lo, hi


def simulate_aggregate_samples(model, draw, innovation_spec, t_points, replicates,
                               seed, combo_weights=None, chunk=256, normalization="sqrt"):
    """Replicate samples of X^N at fixed environment draw.

    Returns a dict mapping statistic labels ("t=<t>" and optionally "combo")
    to (replicates,) arrays.  The environment is fixed; only innovations are
    redrawn per replicate with seeds derived from (seed, replicate index),
    so the result is independent of chunking.
    """
    n = draw.n
    t_points, lo, hi = _time_span(model, t_points)
    span = hi - lo + 1
    cols = np.array([t - lo for t in t_points])
    b_n = agg._normalizer(normalization, n)

    sep = agg.separable_chaos(model)
    point_mass = draw.spec.family == "point_mass"
    coeffs0 = None
    scales = None
    if sep is not None:
        scales = {k: sc.eval_many(draw.values) for k, (sc, _) in sep.items()}
    elif point_mass:
        coeffs0 = proc.volterra_coefficients(model, draw.values[0])
    else:
        coeffs = proc.coefficient_cache(model, draw)

    labels = [f"t={t}" for t in t_points]
    out = {lab: np.empty(replicates) for lab in labels}
    if combo_weights is not None:
        combo_weights = np.asarray(combo_weights, dtype=float)
        if combo_weights.size != len(t_points):
            raise ConfigurationError("combo weights must match the number of t points")
        out["combo"] = np.empty(replicates)

    done = 0
    block_index = 0
    while done < replicates:
        b = min(chunk, replicates - done)
        rep_seed = child_seed(seed, "clt.panel", block_index)
        eps = np.stack([
            generate_panel(innovation_spec, n, span, seed=child_seed(rep_seed, "rep", m),
                           t_start=lo).values
            for m in range(b)
        ])  # (b, n, span)
        if sep is not None:
            z = np.zeros((b, n, len(t_points)))
            for k, (_, template) in sep.items():
                comp = np.zeros((b, n, len(t_points)))
                for lags, val in template.items():
                    prod = np.full((b, n, len(t_points)), val)
                    for l in lags:
                        prod = prod * eps[:, :, cols - l]
                    comp += prod
                z += scales[k][None, :, None] * comp
        elif point_mass:
            z = proc.evaluate_chaos_columns(coeffs0, eps, cols, include_constant=False)
        else:
            z = np.empty((b, n, len(t_points)))
            for idx in range(n):
                z[:, idx, :] = proc.evaluate_chaos_columns(coeffs[idx], eps[:, idx, :], cols,
                                                           include_constant=False)
        x = z.sum(axis=1) / b_n  # (b, n_t)
        for jt, lab in enumerate(labels):
            out[lab][done: done + b] = x[:, jt]
        if combo_weights is not None:
            out["combo"][done: done + b] = x @ combo_weights
        done += b
        block_index += 1
    return out


# ---------------------------------------------------------------------------
# normality experiment
# ---------------------------------------------------------------------------

@dataclass
class CltCell:
    env_index: int
    n: int
    stat: str
    exact: NormalityReport
    limit: NormalityReport

    def rows(self):
        out = []
        for rep in (self.exact, self.limit):
            out.append((self.env_index, self.n, self.stat, rep.target_label,
                        rep.ks_stat, rep.ks_pvalue, rep.skewness, rep.excess_kurtosis,
                        rep.target_variance))
        return out


@dataclass
class CltReport:
    cells: list
    n_grid: list
    median_ks_limit: dict
    median_p_limit: dict
    trend_ok: bool
    endpoint_ok: bool
    p_ok: bool
    p_floor: float
    calibration: dict = field(default_factory=dict)
    annotations: list = field(default_factory=list)

    @property
    def verdict(self):
        return "pass" if (self.endpoint_ok and self.p_ok) else "fail"

    def to_json(self):
        return {
            "n_grid": self.n_grid,
            "median_ks_limit": {str(k): v for k, v in self.median_ks_limit.items()},
            "median_p_limit": {str(k): v for k, v in self.median_p_limit.items()},
            "trend_ok": self.trend_ok,
            "endpoint_ok": self.endpoint_ok,
            "p_ok": self.p_ok,
            "p_floor": self.p_floor,
            "verdict": self.verdict,
            "calibration": self.calibration,
            "annotations": self.annotations,
            "cells": [
                {"env": c.env_index, "n": c.n, "stat": c.stat,
                 "exact": c.exact.to_json(), "limit": c.limit.to_json()}
                for c in self.cells
            ],
        }


def run_clt_experiment(model, env_spec, innovation_spec, n_grid, replicates, t_points,
                       seed, env_seeds=5, combo_weights=None, p_floor=0.01,
                       keep_qq="endpoints", normalization="sqrt", threads=1):
    """Normality of X^N_t across an N grid, conditionally on the environment.

    One environment draw is fixed per environment seed; replicates redraw
    only the innovations.  Each statistic (every t point plus the optional
    linear combination) is tested against N(0, .) twice: with the exact
    finite-N variance from the covariance quadratic form, and with its
    limit.  The verdict takes medians of the limit-target KS distance over
    statistics and environment seeds per N: the distance at the largest N
    must sit below its value at the smallest N, and the median p-value at
    the largest N must clear ``p_floor``.
    """
    n_grid = sorted(int(n) for n in n_grid)
    kernel = theoretical_chi(innovation_spec)
    taus = sorted({abs(a - b) for a in t_points for b in t_points})
    limit_table = agg.gamma_limit_table(model, env_spec, kernel, taus,
                                        seed=child_seed(seed, "clt.limit"))

    def run_cell(key):
        env_index, n = key
        draw = sample_environment(env_spec, n_grid[-1],
                                  seed=child_seed(seed, "clt.env", env_index)).prefix(n)
        exact_table = agg.gamma_n_table(draw, model, kernel, taus)
        samples = simulate_aggregate_samples(
            model, draw, innovation_spec, t_points, replicates,
            seed=child_seed(seed, "clt.samples", env_index * 1_000_003 + n),
            combo_weights=combo_weights, normalization=normalization)
        want_qq = keep_qq == "all" or (keep_qq == "endpoints" and n in (n_grid[0], n_grid[-1]))
        out = []
        for t in t_points:
            lab = f"t={t}"
            out.append(CltCell(
                env_index=env_index, n=n, stat=lab,
                exact=normality_test(samples[lab], exact_table.value(0), "exact", keep_qq=want_qq),
                limit=normality_test(samples[lab], limit_table.value(0), "limit", keep_qq=want_qq)))
        if combo_weights is not None:
            w = np.asarray(combo_weights, dtype=float)
            v_exact = sum(w[a] * w[b] * exact_table.value(abs(t_points[a] - t_points[b]))
                          for a in range(w.size) for b in range(w.size))
            v_limit = sum(w[a] * w[b] * limit_table.value(abs(t_points[a] - t_points[b]))
                          for a in range(w.size) for b in range(w.size))
            out.append(CltCell(
                env_index=env_index, n=n, stat="combo",
                exact=normality_test(samples["combo"], v_exact, "exact", keep_qq=want_qq),
                limit=normality_test(samples["combo"], v_limit, "limit", keep_qq=want_qq)))
        return out

    keys = [(e, n) for e in range(env_seeds) for n in n_grid]
    cells = [cell for group in ordered_parallel_map(run_cell, keys, threads) for cell in group]

    median_ks = {}
    median_p = {}
    for n in n_grid:
        ks_vals = [c.limit.ks_stat for c in cells if c.n == n]
        p_vals = [c.limit.ks_pvalue for c in cells if c.n == n]
        median_ks[n] = float(np.median(ks_vals))
        median_p[n] = float(np.median(p_vals))
    seq = [median_ks[n] for n in n_grid]
    trend_ok = all(b <= a * 1.05 for a, b in zip(seq, seq[1:]))
    endpoint_ok = seq[-1] < seq[0]
    p_ok = median_p[n_grid[-1]] > p_floor
    return CltReport(cells=cells, n_grid=n_grid, median_ks_limit=median_ks,
                     median_p_limit=median_p, trend_ok=trend_ok,
                     endpoint_ok=endpoint_ok, p_ok=p_ok, p_floor=p_floor)


def clt_calibration_control(replicates, repetitions, seed, level=0.05, n=16):
    """Rejection rate of the KS test on an exactly Gaussian aggregate.

    Simulates the degenerate configuration (independent Gaussian elementary
    values, point-mass environment), where X^N is N(0, 1) at every N, and
    reports the fraction of repetitions with p < level.
    """
    from .environment import EnvironmentSpec, linear_model, taps_sequence
    from .innovations import iid_noise

    env_spec = EnvironmentSpec("point_mass", 1, {"value": [1.0]})
    model = linear_model(taps_sequence([0], [1.0]), lag_window=1)
    spec = iid_noise("gaussian")
    draw = sample_environment(env_spec, n, seed=child_seed(seed, "calib.env"))
    rejections = 0
    for rep in range(repetitions):
        samples = simulate_aggregate_samples(
            model, draw, spec, [1], replicates,
            seed=child_seed(seed, "calib", rep))
        report = normality_test(samples["t=1"], 1.0, "limit", keep_qq=False)
        if report.ks_pvalue < level:
            rejections += 1
    rate = rejections / repetitions
    return {"level": level, "repetitions": repetitions, "rejection_rate": rate,
            "ok": abs(rate - level) <= level + 1e-12}


# ---------------------------------------------------------------------------
# covariance convergence experiment
# ---------------------------------------------------------------------------

@dataclass
class SllnReport:
    n_grid: list
    taus: list
    limit: dict
    errors: dict
    median_abs_error: dict
    shrink_factor: dict
    shrink_required: float
    annotations: list = field(default_factory=list)

    @property
    def verdict(self):
        ok = all(f >= self.shrink_required for f in self.shrink_factor.values())
        return "pass" if ok else "fail"

    def to_json(self):
        return {
            "n_grid": self.n_grid,
            "taus": self.taus,
            "limit": {str(t): v for t, v in self.limit.items()},
            "median_abs_error": {str(t): {str(n): e for n, e in d.items()}
                                 for t, d in self.median_abs_error.items()},
            "shrink_factor": {str(t): f for t, f in self.shrink_factor.items()},
            "shrink_required": self.shrink_required,
            "verdict": self.verdict,
            "annotations": self.annotations,
        }


def run_slln_experiment(model, env_spec, innovation_spec, n_grid, taus, seed,
                        env_seeds=20, shrink_required=3.0, k_max=None, threads=1):
    """Gamma^N(tau, Y) against Gamma(tau) over nested environment draws.

    Per environment seed one draw of size max(n_grid) is taken and reused as
    nested prefixes, so the per-N errors are coupled the way the a.s.
    statement couples them.  The verdict requires the median absolute error
    to shrink by ``shrink_required`` from the smallest to the largest N.
    """
    n_grid = sorted(int(n) for n in n_grid)
    kernel = theoretical_chi(innovation_spec)
    limit = {int(t): agg.gamma_limit(model, env_spec, kernel, t,
                                     seed=child_seed(seed, "slln.limit"), k_max=k_max).value
             for t in taus}

    def run_seed(env_index):
        draw_full = sample_environment(env_spec, n_grid[-1],
                                       seed=child_seed(seed, "slln.env", env_index))
        out = {}
        for n in n_grid:
            draw = draw_full.prefix(n)
            for t in taus:
                g = agg.gamma_n_exact(draw, model, kernel, t, k_max=k_max)
                out[(int(t), n)] = abs(g.value - limit[int(t)])
        return out

    per_seed = ordered_parallel_map(run_seed, list(range(env_seeds)), threads)
    errors = {int(t): {n: [] for n in n_grid} for t in taus}
    for out in per_seed:
        for (t, n), e in out.items():
            errors[t][n].append(e)
    median_abs = {t: {n: float(np.median(v)) for n, v in d.items()} for t, d in errors.items()}
    shrink = {}
    for t in median_abs:
        first = median_abs[t][n_grid[0]]
        last = median_abs[t][n_grid[-1]]
        shrink[t] = float("inf") if last == 0.0 else first / last
    return SllnReport(n_grid=n_grid, taus=[int(t) for t in taus], limit=limit,
                      errors=errors, median_abs_error=median_abs,
                      shrink_factor=shrink, shrink_required=shrink_required)


# ---------------------------------------------------------------------------
# probe experiment
# ---------------------------------------------------------------------------

def _probe_panel_samples(model, draw, innovation_spec, replicates, seed):
    """(R, n_rows) elementary values at one time point, replicates over innovations."""
    n = draw.n
    lag = model.lag_window
    lo, hi = 1 - lag, 1 + (lag if model.tag in ("linear", "dsv_star") else 0)
    span = hi - lo + 1
    col = np.array([1 - lo])
    if model.tag != "dsulbs":
        coeffs = proc.coefficient_cache(model, draw)
    eps = np.stack([
        generate_panel(innovation_spec, n, span, seed=child_seed(seed, "probe", m),
                       t_start=lo).values
        for m in range(replicates)
    ])
    z = np.empty((replicates, n))
    for idx in range(n):
        if model.tag == "dsulbs":
            z[:, idx] = proc.dsulbs_values(model, draw.values[idx], eps[:, idx, :], col)[..., 0]
        else:
            z[:, idx] = proc.evaluate_chaos_columns(coeffs[idx], eps[:, idx, :], col,
                                                    include_constant=False)[..., 0]
    return z


def elementary_dependence_profile(model, innovation_spec, r_max):
    """Decay bound transferred from the innovations to the elementary sequence.

    The transfer theorems reuse the innovation-level profile: ordered
    expansions and Lipschitz shifts inherit the shift truncation bound
    2*delta (eta family, or theta for causal shifts), stationary Gaussian
    cross-sections keep kappa(r) = sup_{j>=r}|chi(j)|.  The per-point
    coefficient mass enters through the V weights the probe carries, not
    through epsilon(r).
    """
    from .innovations import dependence_profile as innov_profile

    return innov_profile(innovation_spec, r_max)


@dataclass
class ProbeExperimentReport:
    family: str
    inside: list
    outside_trials: int
    outside_pass_rate: float
    cov_checks: list
    annotations: list = field(default_factory=list)

    @property
    def verdict(self):
        inside_ok = all(rep.ok for rep in self.inside)
        cov_ok = all(c.ok for c in self.cov_checks)
        return "pass" if (inside_ok and cov_ok and self.outside_pass_rate >= 0.99) else "fail"

    def to_json(self):
        return {
            "family": self.family,
            "verdict": self.verdict,
            "outside_trials": self.outside_trials,
            "outside_pass_rate": self.outside_pass_rate,
            "inside": [
                {"r": rep.r, "epsilon": rep.epsilon_r, "ok": rep.ok,
                 "worst_margin": rep.worst().margin if rep.pairs else None}
                for rep in self.inside
            ],
            "cov_checks": [
                {"i": c.i, "j": c.j, "cov": c.cov, "se": c.se, "bound": c.bound, "ok": c.ok}
                for c in self.cov_checks
            ],
            "annotations": self.annotations,
        }


def run_probe_experiment(model, env_spec, innovation_spec, seed, delta=1.0,
                         inside_r=None, outside_trials=200, trial_replicates=200,
                         inside_replicates=4000, n_rows=None, arities=((1, 1), (2, 2), (3, 3))):
    """Dependence probes inside and beyond the theoretical decay window.

    Inside the window every dictionary pair must sit below its
    psi * epsilon(r) bound (3 SE buffer).  Beyond the window the bound is
    exactly zero for finite-window generators, so each of ``outside_trials``
    independent covariance estimates must vanish at 3 SE; the pass rate is
    reported.  The pairwise covariance-decay inequality is checked on the
    same ensembles.
    """
    max_u = max(max(u, v) for u, v in arities)
    window = 2 * innovation_spec.window + 2
    if inside_r is None:
        inside_r = sorted({1, max(1, innovation_spec.window)})
    r_out = window + 1
    if n_rows is None:
        n_rows = max_u + r_out + max_u + 2
    profile = elementary_dependence_profile(model, innovation_spec, n_rows + 1)
    draw = sample_environment(env_spec, n_rows, seed=child_seed(seed, "probe.env"))
    if model.tag == "dsulbs":
        v_values = [sum(abs(a) for a in proc.lipschitz_sequence(model, y, innovation_spec).values())
                    for y in draw.values]
    else:
        v_values = [math.sqrt(proc.closed_form_mass(model, y)) for y in draw.values]
    dictionary = test_function_dictionary(max_u)
    certify_dictionary(dictionary, seed=child_seed(seed, "probe.certify"))

    z_big = _probe_panel_samples(model, draw, innovation_spec, inside_replicates,
                                 seed=child_seed(seed, "probe.inside"))
    inside = [dependence_probe(z_big, dictionary, r, profile, v_values, arities=arities)
              for r in inside_r]

    moment = float(np.mean(np.abs(z_big) ** (2.0 + delta)))
    ev = float(np.mean(v_values))
    cov_checks = []
    for r in sorted({*inside_r, r_out}):
        j = 1 + r
        if j <= n_rows:
            cov_checks.append(covariance_bound_check(
                z_big[:, 0], z_big[:, j - 1], 1, j, profile, delta, moment, ev, ev**2))

    passes = 0
    for trial in range(outside_trials):
        z = _probe_panel_samples(model, draw, innovation_spec, trial_replicates,
                                 seed=child_seed(seed, "probe.outside", trial))
        cov, se = _cov_with_se(np.clip(z[:, 0], -1, 1), np.clip(z[:, max_u + r_out - 1], -1, 1))
        if abs(cov) <= 3.0 * se:
            passes += 1
    return ProbeExperimentReport(family=profile.family, inside=inside,
                                 outside_trials=outside_trials,
                                 outside_pass_rate=passes / outside_trials,
                                 cov_checks=cov_checks)
