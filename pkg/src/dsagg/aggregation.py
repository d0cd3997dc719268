"""Partial aggregation and its covariance quadratic form.

X^N_t = B_N^{-1} sum_i Z^i_t.  For ordered-expansion panels the conditional
covariance of X^N (with B_N = sqrt(N)) is computable exactly from the
coefficients:

    Gamma^N(tau, Y) = (1/N) [ sum_i Psi_tau(y^i, y^i)
                              + sum_{i != j} Psi_tau(y^i, y^j) ],
    Psi_tau(y^i, y^j) = sum_{k>=1} Psi_{tau,k}(y^i, y^j) chi(i-j)^k,
    Psi_{tau,k}(y^i, y^j) = sum_{l1<...<lk} c_k(y^i)[l] c_k(y^j)[l + tau].

Its large-N limit is Gamma(tau) = sum_k gamma_k(tau) + sum_k phi_k(tau) s_k
with gamma_k = E[Psi_{tau,k}(y,y)], phi_k = E[Psi_{tau,k}(y,y')] and s_k the
Cesaro limit of the chi^k partial sums.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ResourceLimitError
from .processes import coefficient_cache, volterra_coefficients

DEFAULT_PAIR_BUDGET = 20_000_000


@dataclass
class AggregatePath:
    """X[t] over a contiguous time range, with its normalization."""

    x: np.ndarray
    t_start: int
    n: int
    normalization: float
    replicate: int = 0


def _normalizer(rule, n):
    if rule in (None, "sqrt"):
        return math.sqrt(n)
    if rule == "n":
        return float(n)
    value = float(rule)
    if value <= 0:
        raise ConfigurationError("normalization must be positive")
    return value


def aggregate(panel, normalization="sqrt", replicate=0):
    """Exact normalized panel sum; default B_N = sqrt(N)."""
    values = panel.values
    b_n = _normalizer(normalization, values.shape[0])
    return AggregatePath(x=values.sum(axis=0) / b_n, t_start=panel.t_start,
                         n=values.shape[0], normalization=b_n, replicate=replicate)


# ---------------------------------------------------------------------------
# shifted inner products
# ---------------------------------------------------------------------------

def psi_tau_k(ci, cj, tau, k):
    """sum over order-k tuples of c_i[l1..lk] * c_j[l1+tau..lk+tau].

    Tuples shifted out of the window contribute zero.  Both coefficient sets
    should share (k_max, lag_window) for the truncation to be symmetric.
    """
    ti = ci.orders.get(k)
    tj = cj.orders.get(k)
    if not ti or not tj:
        return 0.0
    tau = int(tau)
    if len(ti) > len(tj):
        # iterate the smaller table, shifting the other way
        total = 0.0
        for lags, v in tj.items():
            w = ti.get(tuple(l - tau for l in lags))
            if w is not None:
                total += w * v
        return total
    total = 0.0
    for lags, v in ti.items():
        w = tj.get(tuple(l + tau for l in lags))
        if w is not None:
            total += v * w
    return total


def psi_tau(ci, cj, tau, chi_value, k_max):
    """sum_k Psi_{tau,k} * chi_value^k over the shared order range."""
    total = 0.0
    w = 1.0
    for k in range(1, k_max + 1):
        w *= chi_value
        if w == 0.0:
            break
        p = psi_tau_k(ci, cj, tau, k)
        if p != 0.0:
            total += p * w
    return total


def _orders_in(ci, cj, k_max):
    ks = set(ci.orders) & set(cj.orders)
    return sorted(k for k in ks if k <= k_max)


# ---------------------------------------------------------------------------
# separable structure
# ---------------------------------------------------------------------------

def separable_chaos(model, lag_window=None):
    """Per-order (scale map, template) split when c_k(y) = s(y) * template_k.

    Only the explicitly parameterized expansions (linear, dsv_star) factor
    this way; the recursion families shape their coefficients through y and
    return None.
    """
    lag_window = model.lag_window if lag_window is None else lag_window
    if model.tag == "linear":
        base = model.taps.base_values(lag_window)
        template = {(l,): v for l, v in sorted(base.items()) if v != 0.0}
        return {1: (model.taps.scale, template)}
    if model.tag == "dsv_star":
        out = {}
        for k, rows in model.orders.items():
            template = {lags: v for lags, v in rows
                        if max(lags) <= lag_window and min(lags) >= -lag_window and v != 0.0}
            if template:
                out[k] = (model.scale, template)
        return out
    return None


def _template_psi(template, tau):
    tau = int(tau)
    total = 0.0
    for lags, v in template.items():
        w = template.get(tuple(l + tau for l in lags))
        if w is not None:
            total += v * w
    return total


# ---------------------------------------------------------------------------
# exact quadratic form
# ---------------------------------------------------------------------------

@dataclass
class GammaValue:
    """One Gamma entry with its truncation tail bound and MC error (0 if exact)."""

    tau: int
    value: float
    tail_bound: float = 0.0
    stderr: float = 0.0
    kind: str = "exact"


@dataclass
class CovarianceTable:
    """Gamma values over a tau grid; kind is empirical, exact, or limit."""

    taus: list
    values: list
    errors: list
    kind: str

    def rows(self):
        return [(t, v, e, self.kind) for t, v, e in zip(self.taus, self.values, self.errors)]

    def value(self, tau):
        return self.values[self.taus.index(tau)]


def gamma_n_exact(draw, model, kernel, tau, k_max=None, banded=None,
                  pair_budget=DEFAULT_PAIR_BUDGET, use_separable=True):
    """Gamma^N(tau, Y) for the environment draw Y, exact up to order truncation.

    The cross sum runs over ordered pairs; with a finitely supported kernel
    only |i-j| <= support contributes, which the banded mode exploits
    (``banded=None`` picks it automatically).  The dense mode visits every
    pair and is bitwise-identical to the banded mode for banded kernels,
    since skipped terms are exact zeros.  Models with a separable expansion
    use a vectorized path unless ``use_separable=False``.
    """
    n = draw.n
    k_max = model.k_max if k_max is None else k_max
    support = kernel.support if kernel.support is not None else kernel.chi.size - 1
    if banded is None:
        banded = kernel.support is not None
    if use_separable:
        sep = separable_chaos(model)
        if sep is not None:
            return _gamma_separable(draw, model, sep, kernel, tau, k_max)
    pairs = n * min(2 * support, n - 1) if banded else n * (n - 1)
    if pairs > pair_budget:
        raise ResourceLimitError(
            f"{pairs} cross pairs exceed the budget {pair_budget}; enable the banded "
            "path or raise pair_budget"
        )
    coeffs = coefficient_cache(model, draw, k_max=k_max)
    chi = kernel.chi
    total = 0.0
    tail = 0.0
    for i in range(n):
        ci = coeffs[i]
        row = psi_tau(ci, ci, tau, 1.0, k_max)
        lo = max(0, i - support) if banded else 0
        hi = min(n, i + support + 1) if banded else n
        for j in range(lo, hi):
            if j == i:
                continue
            r = abs(i - j)
            w = chi[r] if r < chi.size else 0.0
            if w == 0.0:
                continue
            row += psi_tau(ci, coeffs[j], tau, w, k_max)
        total += row
        t = ci.meta.get("order_tail", None)
        if t is None:
            t = max((ci.closed_total_mass or ci.enumerated_mass) - ci.enumerated_mass, 0.0)
        tail += t
    # pessimistic tail: each pair contributes at most the per-point order tail
    # times the kernel l1 mass
    tail_bound = (tail / n) * (1.0 + 2.0 * float(np.sum(np.abs(chi[1:]))))
    return GammaValue(tau=int(tau), value=total / n, tail_bound=tail_bound, kind="exact")


def _gamma_separable(draw, model, sep, kernel, tau, k_max):
    n = draw.n
    chi = kernel.chi
    support = kernel.support if kernel.support is not None else kernel.chi.size - 1
    r_hi = min(support, n - 1)
    total = 0.0
    for k, (scale, template) in sep.items():
        if k > k_max:
            continue
        psi_bar = _template_psi(template, tau)
        if psi_bar == 0.0:
            continue
        s = scale.eval_many(draw.values)
        diag = float(np.dot(s, s))
        cross = 0.0
        for r in range(1, r_hi + 1):
            w = chi[r] ** k if r < chi.size else 0.0
            if w == 0.0:
                continue
            cross += w * 2.0 * float(np.dot(s[: n - r], s[r:]))
        total += psi_bar * (diag + cross)
    return GammaValue(tau=int(tau), value=total / n, tail_bound=0.0, kind="exact")


def gamma_n_table(draw, model, kernel, taus, **kwargs):
    vals = [gamma_n_exact(draw, model, kernel, t, **kwargs) for t in taus]
    return CovarianceTable(taus=[int(t) for t in taus],
                           values=[v.value for v in vals],
                           errors=[v.tail_bound for v in vals], kind="exact")


# ---------------------------------------------------------------------------
# the limit
# ---------------------------------------------------------------------------

def gamma_limit(model, env_spec, kernel, tau, mc_samples=4000, seed=0, k_max=None):
    """Gamma(tau) = sum_k gamma_k(tau) + sum_k phi_k(tau) s_k.

    Separable models with affine scale maps use exact mu-moments (no MC
    error); point-mass environments are exact for every family; otherwise
    gamma_k and phi_k are estimated by Monte Carlo over mu, with phi_k taken
    as the shifted self inner product of the mean coefficient table (exact
    under independence of y and y').
    """
    if not kernel.summable:
        raise ConfigurationError(
            "kernel flagged not summable (common-innovation regime); the limit "
            "quadratic form does not exist"
        )
    k_max = model.k_max if k_max is None else k_max

    sep = separable_chaos(model)
    if sep is not None:
        total = 0.0
        for k, (scale, template) in sep.items():
            if k > k_max:
                continue
            psi_bar = _template_psi(template, tau)
            if psi_bar == 0.0:
                continue
            e1, e2 = scale.moments(env_spec)
            total += e2 * psi_bar + e1**2 * psi_bar * kernel.s_k(k)
        return GammaValue(tau=int(tau), value=total, kind="limit")

    if env_spec.family == "point_mass":
        from .environment import sample_environment

        y = sample_environment(env_spec, 1, seed=0).values[0]
        c = volterra_coefficients(model, y, k_max=k_max)
        total = 0.0
        tail = float(c.meta.get("order_tail", 0.0))
        for k in sorted(c.orders):
            p = psi_tau_k(c, c, tau, k)
            total += p * (1.0 + kernel.s_k(k))
        return GammaValue(tau=int(tau), value=total, tail_bound=tail, kind="limit")

    from .environment import sample_environment

    draw = sample_environment(env_spec, mc_samples, seed=seed, index=29)
    coeffs = coefficient_cache(model, draw, k_max=k_max)
    per_sample = np.zeros(mc_samples)
    mean_tables = {}
    tail = 0.0
    for idx, c in enumerate(coeffs):
        diag = 0.0
        for k in sorted(c.orders):
            diag += psi_tau_k(c, c, tau, k)
            dst = mean_tables.setdefault(k, {})
            for lags, v in c.orders[k].items():
                dst[lags] = dst.get(lags, 0.0) + v
        per_sample[idx] = diag
        tail += float(c.meta.get("order_tail", 0.0))
    gamma_part = float(np.mean(per_sample))
    se = float(np.std(per_sample, ddof=1) / np.sqrt(mc_samples))
    phi_part = 0.0
    for k, table in mean_tables.items():
        mean_table = {lags: v / mc_samples for lags, v in table.items()}
        phi_part += _template_psi(mean_table, tau) * kernel.s_k(k)
    return GammaValue(tau=int(tau), value=gamma_part + phi_part, stderr=se,
                      tail_bound=tail / mc_samples, kind="limit")


def gamma_limit_table(model, env_spec, kernel, taus, **kwargs):
    vals = [gamma_limit(model, env_spec, kernel, t, **kwargs) for t in taus]
    return CovarianceTable(taus=[int(t) for t in taus],
                           values=[v.value for v in vals],
                           errors=[max(v.stderr, v.tail_bound) for v in vals], kind="limit")


# ---------------------------------------------------------------------------
# empirical covariance
# ---------------------------------------------------------------------------

def empirical_cov(paths, tau, min_replicates=2):
    """Cross-replicate estimator of Gamma_hat(tau) with its standard error.

    ``paths`` is a replicate ensemble (list of AggregatePath or an (R, T)
    array) at a fixed environment draw; each replicate contributes the time
    average of X_t X_{t+tau} and the standard error comes from replicate
    dispersion.  A single long path falls back to batch means.
    """
    if isinstance(paths, np.ndarray):
        arr = np.atleast_2d(paths)
    else:
        arr = np.stack([p.x if isinstance(p, AggregatePath) else np.asarray(p) for p in paths])
    reps, t_len = arr.shape
    tau = abs(int(tau))
    if tau >= t_len:
        raise IndexError(f"lag {tau} needs t_len > {tau}")
    prods = arr[:, : t_len - tau] * arr[:, tau:]
    if reps >= min_replicates:
        per_rep = prods.mean(axis=1)
        value = float(per_rep.mean())
        se = float(per_rep.std(ddof=1) / np.sqrt(reps)) if reps > 1 else float("nan")
        return value, se
    # single path: batch means over ~sqrt(T) blocks
    flat = prods.ravel()
    nb = max(int(np.sqrt(flat.size)), 2)
    usable = (flat.size // nb) * nb
    means = flat[:usable].reshape(nb, -1).mean(axis=1)
    return float(flat.mean()), float(means.std(ddof=1) / np.sqrt(nb))


def empirical_cov_table(paths, taus):
    vals, errs = [], []
    for t in taus:
        v, e = empirical_cov(paths, t)
        vals.append(v)
        errs.append(e)
    return CovarianceTable(taus=[int(t) for t in taus], values=vals, errors=errs,
                           kind="empirical")
