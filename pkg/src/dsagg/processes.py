"""Elementary-process construction: series algebra, ordered expansions, simulators.

Power series are plain float arrays indexed by lag (index 0 = constant term).
The conditionally heteroscedastic families share one expansion scheme: with
g = (1 - a(s))^{-1} for the mean-part series a and h = b(s) * g(s) for the
noise-part series b, the stationary solution is

    Z_t = c + b0_eff * sum_{k>=1} sum_{0<=l1<...<lk}
              g_{l1} h_{l2-l1} ... h_{lk-l_{k-1}} eps_{t-l1} ... eps_{t-lk},

so every tuple coefficient is an exact product read off the two series.
LARCH is the case a = 0 (g = delta_0, h = b, tuples pinned at l1 = 0);
the nonnegative ARCH family lands here after standardizing its noise as
eps = lambda1 * (1 + kappa * eps_std), which makes a = lambda1*b,
b_noise = kappa*lambda1*b and attaches the constant c = E[Z_t].
"""

from dataclasses import dataclass, field

import numpy as np

from .environment import garch11_params
from .errors import (ConfigurationError, ContractViolation, DivergenceError,
                     ExistenceError, ResourceLimitError)
from .innovations import input_law_bound

DEFAULT_GUARD = 1e12
MAX_TUPLES = 2_000_000


# ---------------------------------------------------------------------------
# power-series machinery
# ---------------------------------------------------------------------------

def invert_power_series(b, m=None):
    """Coefficients g of (1 - b(s))^{-1} up to lag m.

    Requires b[0] = 0;  g_0 = 1 and g_k = sum_{j=1..k} b_j g_{k-j}.
    """
    b = np.asarray(b, dtype=float)
    if b.size and b[0] != 0.0:
        raise ContractViolation("series to invert must have zero constant term")
    if m is None:
        m = b.size - 1
    g = np.zeros(m + 1)
    g[0] = 1.0
    bb = np.zeros(m + 1)
    bb[: min(b.size, m + 1)] = b[: m + 1]
    for k in range(1, m + 1):
        g[k] = np.dot(bb[1: k + 1], g[k - 1:: -1][:k])
    return g


def convolve_series(a, g, m):
    """Truncated Cauchy product (a * g) up to lag m."""
    a = np.asarray(a, dtype=float)
    g = np.asarray(g, dtype=float)
    out = np.convolve(a, g)[: m + 1]
    if out.size < m + 1:
        out = np.concatenate([out, np.zeros(m + 1 - out.size)])
    return out


def compose_h(a, g, m):
    """h = a(s) (1 - b(s))^{-1} given g = (1 - b)^{-1}; plain truncated product."""
    return convolve_series(a, g, m)


def map_garch11(alpha0, alpha, beta, m):
    """GARCH(1,1) -> ARCH(infinity): b0 = alpha0/(1-beta), b_k = alpha * beta^(k-1).

    Returns (b0, b, tail) with b indexed by lag (b[0] = 0) and
    tail = sum_{k>m} b_k, the geometric remainder.
    """
    if not (0.0 <= beta < 1.0):
        raise ConfigurationError("garch11 map requires 0 <= beta < 1")
    if alpha0 < 0 or alpha < 0:
        raise ConfigurationError("garch11 map requires alpha0, alpha >= 0")
    b0 = alpha0 / (1.0 - beta)
    b = np.zeros(m + 1)
    if alpha > 0.0:
        b[1:] = alpha * beta ** np.arange(m)
    tail = alpha * beta**m / (1.0 - beta) if alpha > 0.0 else 0.0
    return b0, b, tail


@dataclass(frozen=True)
class ArchStandardization:
    """Moments of the nonnegative ARCH noise and its standardized form.

    lambda1 = E[eps], lambda2 = E[eps^2]; kappa^2 = (lambda2-lambda1^2)/lambda1^2.
    The reconstruction eps = lambda1 * (1 + kappa * eps_std) reproduces both
    moments for any mean-zero unit-variance eps_std.
    """

    lambda1: float
    lambda2: float

    def __post_init__(self):
        if self.lambda1 <= 0 or self.lambda2 < self.lambda1**2:
            raise ConfigurationError("need lambda1 > 0 and lambda2 >= lambda1^2")

    @property
    def kappa(self):
        return float(np.sqrt((self.lambda2 - self.lambda1**2) / self.lambda1**2))

    def noise_from_standard(self, eps_std):
        return self.lambda1 * (1.0 + self.kappa * np.asarray(eps_std))


# ---------------------------------------------------------------------------
# chaos coefficients
# ---------------------------------------------------------------------------

@dataclass
class ChaosCoefficients:
    """Sparse ordered-expansion coefficients at one environment point.

    ``orders[k]`` maps strictly increasing lag tuples of length k to their
    coefficients; ``constant`` is the order-0 term (nonzero only for the
    ARCH family).  ``k_max`` caps the tuple length and ``lag_window`` every
    lag.  ``closed_total_mass`` is the analytic sum of squared coefficients
    of the full (untruncated) centered expansion when the family admits one;
    the gap to ``enumerated_mass`` is the truncation tail.
    """

    orders: dict
    constant: float
    k_max: int
    lag_window: int
    causal: bool
    enumerated_mass: float
    closed_total_mass: float = None
    order_mass: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @property
    def max_lag(self):
        lags = [l for table in self.orders.values() for lags in table for l in lags]
        return max(lags) if lags else 0

    @property
    def min_lag(self):
        lags = [l for table in self.orders.values() for lags in table for l in lags]
        return min(lags) if lags else 0

    def tuple_count(self):
        return sum(len(t) for t in self.orders.values())

    def scaled(self, factor):
        orders = {k: {lags: factor * v for lags, v in t.items()} for k, t in self.orders.items()}
        closed = None if self.closed_total_mass is None else factor**2 * self.closed_total_mass
        return ChaosCoefficients(
            orders=orders, constant=factor * self.constant, k_max=self.k_max,
            lag_window=self.lag_window, causal=self.causal,
            enumerated_mass=factor**2 * self.enumerated_mass,
            closed_total_mass=closed,
            order_mass={k: factor**2 * m for k, m in self.order_mass.items()},
            meta=dict(self.meta),
        )


@dataclass
class TruncationDiagnostics:
    """Mass unaccounted for by the enumerated tuples.

    ``dropped_mass`` = closed-form total minus enumerated (exact when the
    closed form is exact); ``order_tail`` bounds the mass sitting in tuple
    lengths beyond k_max for the geometric families.
    """

    enumerated_mass: float
    closed_total_mass: float
    dropped_mass: float
    order_tail: float

    @property
    def l2_bound(self):
        return float(np.sqrt(max(self.dropped_mass, 0.0)))


def tail_mass(coeffs):
    """Truncation diagnostics for a coefficient set; zero for exactly finite models."""
    closed = coeffs.closed_total_mass
    if closed is None:
        closed = coeffs.enumerated_mass
    dropped = max(closed - coeffs.enumerated_mass, 0.0)
    order_tail = float(coeffs.meta.get("order_tail", dropped))
    return TruncationDiagnostics(
        enumerated_mass=coeffs.enumerated_mass, closed_total_mass=closed,
        dropped_mass=dropped, order_tail=order_tail,
    )


def _enumerate_bilinear_tuples(first, h, scale, k_max, lag_window, prune_tol):
    """DFS over tuples (l1 < l2 < ...) with coefficient scale*first[l1]*prod h[diff].

    Under the contraction H = sum h^2 < 1 every |h_d| < 1, so descendants of a
    node shrink in magnitude and pruning at |value| < prune_tol is safe.
    """
    h_nz = [(d, h[d]) for d in range(1, min(len(h), lag_window + 1)) if h[d] != 0.0]
    orders = {}
    order_mass = {}
    count = 0

    def emit(lags, value):
        nonlocal count
        k = len(lags)
        orders.setdefault(k, {})[lags] = value
        order_mass[k] = order_mass.get(k, 0.0) + value * value
        count += 1
        if count > MAX_TUPLES:
            raise ResourceLimitError(
                "chaos enumeration exceeded the tuple budget; raise prune_tol or "
                "lower k_max/lag_window"
            )

    stack = []
    for l1 in range(0, min(len(first), lag_window + 1)):
        v = scale * first[l1]
        if v == 0.0 or abs(v) < prune_tol:
            continue
        emit((l1,), v)
        stack.append(((l1,), v))
    while stack:
        lags, v = stack.pop()
        if len(lags) >= k_max:
            continue
        last = lags[-1]
        for d, hd in h_nz:
            l = last + d
            if l > lag_window:
                break
            w = v * hd
            if abs(w) < prune_tol:
                continue
            t = lags + (l,)
            emit(t, w)
            stack.append((t, w))
    enumerated = float(sum(order_mass.values()))
    return orders, order_mass, enumerated


def _series_at(model, y):
    """(first, h, scale, constant, closed_total, meta) for the bilinear-family tags."""
    m = model.lag_window
    if model.tag == "larch":
        b0 = model.b0(y)
        b = np.zeros(m + 1)
        for l, v in model.b.coeffs(y, m).items():
            if l < 1:
                raise ConfigurationError("larch coefficients start at lag 1")
            b[l] = v
        b2_full = model.b.sum_sq(y)
        if b2_full >= 1.0:
            raise ExistenceError(f"larch contraction fails at this point (sum b^2 = {b2_full:.4g})")
        first = np.zeros(m + 1)
        first[0] = 1.0
        closed = b0**2 / (1.0 - b2_full)
        meta = {"H": b2_full, "G": 1.0}
        return first, b, b0, 0.0, closed, meta
    if model.tag == "bilinear":
        b0 = model.b0(y)
        a = np.zeros(m + 1)
        for l, v in model.a.coeffs(y, m).items():
            a[l] = v
        b = np.zeros(m + 1)
        for l, v in model.b.coeffs(y, m).items():
            b[l] = v
        g = invert_power_series(a, m)
        h = convolve_series(b, g, m)
        G = float(np.sum(g**2))
        H = float(np.sum(h[1:] ** 2))
        if H >= 1.0:
            raise ExistenceError(f"bilinear transfer contraction fails at this point (H = {H:.4g})")
        closed = b0**2 * G / (1.0 - H)
        meta = {"H": H, "G": G}
        return g, h, b0, 0.0, closed, meta
    if model.tag in ("arch_inf", "garch11", "arch1"):
        std = ArchStandardization(model.lambda1, model.lambda2)
        lam1, kap = std.lambda1, std.kappa
        if model.tag == "garch11":
            a0, al, be = garch11_params(model, y)
            b0, b, _ = map_garch11(a0, al, be, m)
            B = al / (1.0 - be)
            rho = lam1 * al + be
            G = 1.0 + (lam1 * al) ** 2 / (1.0 - rho**2) if rho < 1 else np.inf
            H = lam1**2 * kap**2 * al**2 / (1.0 - rho**2) if rho < 1 else np.inf
        elif model.tag == "arch1":
            a0, al = model.alpha0(y), model.alpha(y)
            if a0 < 0 or al < 0:
                raise ContractViolation("arch1 parameter maps must be nonnegative")
            b0 = a0
            b = np.zeros(m + 1)
            if m >= 1:
                b[1] = al
            B = al
            rho = lam1 * al
            G = 1.0 / (1.0 - rho**2) if rho < 1 else np.inf
            H = kap**2 * rho**2 / (1.0 - rho**2) if rho < 1 else np.inf
        else:
            b0 = model.b0(y)
            b = np.zeros(m + 1)
            for l, v in model.b.coeffs(y, m).items():
                if v < 0 or b0 < 0:
                    raise ContractViolation("arch coefficient maps must be nonnegative")
                b[l] = v
            B = model.b.sum_signed(y)
            g_num = invert_power_series(lam1 * b, m)
            G = float(np.sum(g_num**2))
            H = kap**2 * float(np.sum(g_num[1:] ** 2))
        if lam1 * B >= 1.0:
            raise ExistenceError(f"arch mean contraction fails (lambda1 * B = {lam1 * B:.4g})")
        if H >= 1.0:
            raise ExistenceError(f"arch transfer contraction fails (H = {H:.4g})")
        g = invert_power_series(lam1 * b, m)
        h = kap * g
        h[0] = 0.0
        mean = lam1 * b0 / (1.0 - lam1 * B)
        b0_eff = kap * mean
        closed = b0_eff**2 * G / (1.0 - H)
        meta = {"H": H, "G": G, "mean": mean, "b0_eff": b0_eff}
        return g, h, b0_eff, mean, closed, meta
    raise ContractViolation(f"{model.tag} has no bilinear-family series")


def closed_form_mass(model, y):
    """Centered second moment Var^y(Z_t) = sum of squared expansion coefficients."""
    if model.tag == "linear":
        return float(model.taps.sum_sq(y))
    if model.tag == "dsv_star":
        s = model.scale(y)
        return float(s * s * sum(v**2 for rows in model.orders.values() for _, v in rows))
    _, _, _, _, closed, _ = _series_at(model, y)
    return float(closed)


def volterra_coefficients(model, y, k_max=None, lag_window=None, prune_tol=None):
    """Ordered-expansion coefficients of a model at environment point y.

    Existence is checked pointwise first.  For the bilinear family the
    default prune tolerance is 1e-9 relative to the closed-form scale, and
    the pruned/out-of-window mass is exactly the gap between the closed-form
    total and the enumerated total (see :func:`tail_mass`).
    """
    k_max = model.k_max if k_max is None else k_max
    lag_window = model.lag_window if lag_window is None else lag_window
    y = np.atleast_1d(np.asarray(y, dtype=float))

    if model.tag == "linear":
        table = model.taps.coeffs(y, lag_window)
        orders = {1: {(l,): v for l, v in sorted(table.items()) if v != 0.0}}
        mass = float(sum(v * v for v in orders[1].values()))
        closed = float(model.taps.sum_sq(y))
        causal = model.taps.kind != "taps" or min(table, default=0) >= 0
        return ChaosCoefficients(orders=orders, constant=0.0, k_max=1,
                                 lag_window=lag_window, causal=causal,
                                 enumerated_mass=mass, closed_total_mass=closed,
                                 order_mass={1: mass}, meta={"order_tail": 0.0})
    if model.tag == "dsv_star":
        s = model.scale(y)
        orders, order_mass = {}, {}
        for k, rows in model.orders.items():
            if k > k_max:
                continue
            table = {}
            for lags, v in rows:
                if max(lags) > lag_window or min(lags) < -lag_window:
                    continue
                if s * v != 0.0:
                    table[lags] = s * v
            if table:
                orders[k] = table
                order_mass[k] = sum(v * v for v in table.values())
        mass = float(sum(order_mass.values()))
        closed = float(s * s * sum(v**2 for rows in model.orders.values() for _, v in rows))
        causal = all(min(lags) >= 0 for rows in model.orders.values() for lags, _ in rows)
        return ChaosCoefficients(orders=orders, constant=0.0, k_max=k_max,
                                 lag_window=lag_window, causal=causal,
                                 enumerated_mass=mass, closed_total_mass=closed,
                                 order_mass=order_mass, meta={"order_tail": 0.0})
    if model.tag == "dsulbs":
        raise ContractViolation("lipschitz shifts have no ordered expansion; simulate directly")

    first, h, scale, constant, closed, meta = _series_at(model, y)
    if prune_tol is None:
        prune_tol = 1e-9 * np.sqrt(max(closed, scale**2, 1e-300))
    orders, order_mass, enumerated = _enumerate_bilinear_tuples(
        first, h, scale, k_max, lag_window, prune_tol)
    H, G = meta["H"], meta["G"]
    order_tail = scale**2 * G * H**k_max / (1.0 - H) if H > 0 else 0.0
    meta = dict(meta)
    meta["order_tail"] = order_tail
    meta["prune_tol"] = prune_tol
    return ChaosCoefficients(orders=orders, constant=constant, k_max=k_max,
                             lag_window=lag_window, causal=True,
                             enumerated_mass=enumerated, closed_total_mass=closed,
                             order_mass=order_mass, meta=meta)


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def evaluate_chaos_columns(coeffs, eps, cols, include_constant=True, order=None):
    """Evaluate the expansion on an innovation array.

    ``eps`` has time as its last axis; ``cols`` are the column indices of the
    requested times.  Every tuple needs columns ``cols - l`` in range, else
    IndexError (insufficient warm-up margin).
    """
    eps = np.asarray(eps, dtype=float)
    cols = np.asarray(cols, dtype=int)
    t_total = eps.shape[-1]
    max_lag = coeffs.max_lag
    min_lag = coeffs.min_lag
    if cols.size and (cols.min() - max_lag < 0 or cols.max() - min_lag >= t_total):
        raise IndexError("insufficient warm-up margin for the expansion's lag window")
    shape = eps.shape[:-1] + (cols.size,)
    out = np.zeros(shape)
    if include_constant and order is None:
        out += coeffs.constant
    items = coeffs.orders.items() if order is None else [(order, coeffs.orders.get(order, {}))]
    for _, table in items:
        for lags, val in table.items():
            prod = np.full(shape, val)
            for l in lags:
                prod = prod * eps[..., cols - l]
            out += prod
    return out


def evaluate_chaos(coeffs, panel, i, t_range, include_constant=True):
    """Path of Z^i_t over t_range by direct evaluation of the truncated expansion."""
    t = np.asarray(list(t_range), dtype=int)
    cols = t - panel.t_start
    if cols.size and (cols.min() < 0 or cols.max() >= panel.t_len):
        raise IndexError("t_range outside panel range")
    return evaluate_chaos_columns(coeffs, panel.values[i - 1], cols,
                                  include_constant=include_constant)


def _recursion_coeffs(model, y):
    """(a_map, b_map, b0, noise transform) for the recursive families."""
    m = model.lag_window
    if model.tag == "larch":
        return {}, model.b.coeffs(y, m), model.b0(y), None
    if model.tag == "bilinear":
        return model.a.coeffs(y, m), model.b.coeffs(y, m), model.b0(y), None
    if model.tag in ("arch_inf", "garch11", "arch1"):
        std = ArchStandardization(model.lambda1, model.lambda2)
        if model.tag == "garch11":
            a0, al, be = garch11_params(model, y)
            b0, b, _ = map_garch11(a0, al, be, m)
            bmap = {l: b[l] for l in range(1, m + 1) if b[l] != 0.0}
        elif model.tag == "arch1":
            b0 = model.alpha0(y)
            bmap = {1: model.alpha(y)} if model.alpha(y) != 0.0 else {}
        else:
            b0 = model.b0(y)
            bmap = model.b.coeffs(y, m)
        return {}, bmap, b0, std.noise_from_standard
    raise ContractViolation(f"{model.tag} is not a recursive family")


def simulate_recursive(model, y, eps, t_len, burn_in=None, guard=DEFAULT_GUARD):
    """Simulate the recursion at y on standardized innovations eps.

    ``eps`` has time as its last axis with at least burn_in + t_len columns;
    the recursion starts from zeros, runs burn_in + t_len steps and returns
    the last t_len.  |Z| exceeding ``guard`` raises DivergenceError.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    amap, bmap, b0, transform = _recursion_coeffs(model, y)
    eps = np.asarray(eps, dtype=float)
    if burn_in is None:
        burn_in = max(10 * model.lag_window, 1000)
    total = burn_in + t_len
    if eps.shape[-1] < total:
        raise ContractViolation(f"need at least {total} innovation columns, got {eps.shape[-1]}")
    noise = transform(eps[..., :total]) if transform is not None else eps[..., :total]
    lead = noise.shape[:-1]
    z = np.zeros(lead + (total,))
    a_items = tuple(sorted(amap.items()))
    b_items = tuple(sorted(bmap.items()))
    for t in range(total):
        mean = np.zeros(lead)
        for l, v in a_items:
            if t - l >= 0:
                mean = mean + v * z[..., t - l]
        vol = np.full(lead, b0)
        for l, v in b_items:
            if t - l >= 0:
                vol = vol + v * z[..., t - l]
        z[..., t] = mean + vol * noise[..., t]
        if np.abs(z[..., t]).max() > guard:
            raise DivergenceError(
                f"recursion exceeded guard {guard:g} at step {t}; parameters likely nonstationary"
            )
    return z[..., burn_in:]


def lipschitz_sequence(model, y, innovation_spec):
    """Per-coordinate sensitivity bounds a_l(y) of a Lipschitz shift.

    clipped_linear: the clip is 1-Lipschitz, so a_l = |c_l(y)|.
    product:        Z_t = eps_t (c_0 + sum_{k!=0} c_k eps_{t-k}) with bounded
                    noise gives a_0 = |c_0| + ||eps||_inf sum_{k!=0} |c_k| and
                    a_k = ||eps||_inf |c_k|; exact per-coordinate bounds.
    """
    taps = model.taps.coeffs(y, model.lag_window)
    if model.shift == "clipped_linear":
        return {l: abs(v) for l, v in taps.items()}
    bound = innovation_spec.bounded_marginal()
    if bound is None:
        raise ContractViolation("product shift requires a bounded innovation marginal")
    c0 = abs(taps.get(0, 0.0))
    rest = sum(abs(v) for l, v in taps.items() if l != 0)
    out = {0: c0 + bound * rest}
    for l, v in taps.items():
        if l != 0:
            out[l] = bound * abs(v)
    return out


def dsulbs_values(model, y, eps, cols):
    """Evaluate a Lipschitz shift on innovation columns (time = last axis)."""
    taps = sorted(model.taps.coeffs(y, model.lag_window).items())
    eps = np.asarray(eps, dtype=float)
    cols = np.asarray(cols, dtype=int)
    lags = [l for l, _ in taps]
    if cols.size and lags:
        if cols.min() - max(lags) < 0 or cols.max() - min(lags) >= eps.shape[-1]:
            raise IndexError("insufficient warm-up margin for the shift's lag window")
    if model.shift == "clipped_linear":
        acc = np.zeros(eps.shape[:-1] + (cols.size,))
        for l, v in taps:
            acc += v * eps[..., cols - l]
        if model.clip is not None:
            acc = np.clip(acc, -model.clip, model.clip)
        return acc
    acc = np.zeros(eps.shape[:-1] + (cols.size,))
    for l, v in taps:
        if l == 0:
            acc += v
        else:
            acc += v * eps[..., cols - l]
    return eps[..., cols] * acc


def simulate_dsulbs(model, y, panel, i, t_range):
    """Path of a Lipschitz Bernoulli shift at y on one panel row.

    The product form demands a bounded innovation marginal (contract error
    otherwise); the declared sensitivity sequence is available through
    :func:`lipschitz_sequence` for dependence bookkeeping.
    """
    if model.tag != "dsulbs":
        raise ContractViolation("simulate_dsulbs expects a dsulbs model")
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if model.shift == "product" and panel.spec.bounded_marginal() is None:
        raise ContractViolation("product shift requires a bounded innovation marginal")
    t = np.asarray(list(t_range), dtype=int)
    cols = t - panel.t_start
    return dsulbs_values(model, y, panel.values[i - 1], cols)


@dataclass
class ElementaryPanel:
    """Z[i][t] values for i = 1..n over a contiguous time range.

    ``method`` records how the values were produced (chaos | recursive |
    shift) and ``centered`` whether the order-0 constant was removed.
    """

    values: np.ndarray
    t_start: int
    model_tag: str
    method: str
    centered: bool
    meta: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def t_len(self):
        return self.values.shape[1]


def coefficient_cache(model, draw, k_max=None, lag_window=None):
    """Per-row chaos coefficients, shared between identical environment points."""
    cache = {}
    out = []
    for y in draw.values:
        key = y.tobytes()
        if key not in cache:
            cache[key] = volterra_coefficients(model, y, k_max=k_max, lag_window=lag_window)
        out.append(cache[key])
    return out


def build_elementary_panel(model, draw, panel, t_range, method="chaos", centered=True,
                           burn_in=None):
    """Evaluate Z^i_t for every environment point on a shared innovation panel.

    The innovation panel is read-only and shared across rows; row i uses
    eps^i.  ``centered=True`` removes the order-0 constant (the ARCH-family
    conditional mean), which is the convention every aggregation experiment
    uses.
    """
    t = np.asarray(list(t_range), dtype=int)
    if draw.n != panel.n:
        raise ContractViolation("environment draw and innovation panel sizes differ")
    if model.tag == "dsulbs":
        cols = t - panel.t_start
        values = np.empty((draw.n, t.size))
        for idx, y in enumerate(draw.values):
            if model.shift == "product" and panel.spec.bounded_marginal() is None:
                raise ContractViolation("product shift requires a bounded innovation marginal")
            values[idx] = dsulbs_values(model, y, panel.values[idx], cols)
        # both built-in shift forms are centered by construction (odd clip of a
        # centered linear process; product with an independent leading factor)
        return ElementaryPanel(values=values, t_start=int(t[0]), model_tag=model.tag,
                               method="shift", centered=True)
    if method == "chaos":
        coeffs = coefficient_cache(model, draw)
        cols = t - panel.t_start
        values = np.empty((draw.n, t.size))
        for idx in range(draw.n):
            values[idx] = evaluate_chaos_columns(coeffs[idx], panel.values[idx], cols,
                                                 include_constant=not centered)
        return ElementaryPanel(values=values, t_start=int(t[0]), model_tag=model.tag,
                               method="chaos", centered=centered)
    if method == "recursive":
        if np.any(np.diff(t) != 1):
            raise ContractViolation("recursive evaluation needs a contiguous t_range")
        if burn_in is None:
            burn_in = max(10 * model.lag_window, 1000)
        first_col = t[0] - panel.t_start
        if first_col < burn_in:
            raise ContractViolation("panel lacks warm-up columns for the requested burn-in")
        values = np.empty((draw.n, t.size))
        for idx, y in enumerate(draw.values):
            path = simulate_recursive(model, y, panel.values[idx, : t[-1] - panel.t_start + 1],
                                      t_len=t.size, burn_in=first_col)
            values[idx] = path
        if centered:
            consts = np.array([volterra_coefficients(model, y).constant for y in draw.values]) \
                if model.tag in ("arch_inf", "garch11", "arch1") else np.zeros(draw.n)
            values -= consts[:, None]
        return ElementaryPanel(values=values, t_start=int(t[0]), model_tag=model.tag,
                               method="recursive", centered=centered)
    raise ConfigurationError(f"unknown evaluation method {method!r}")


def sample_z_marginal(model, y, innovation_spec, n, rng):
    """n independent draws of Z_t at fixed y (innovations i.i.d. in time)."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if model.tag == "dsulbs":
        if model.shift == "product" and innovation_spec.bounded_marginal() is None:
            raise ContractViolation("product shift requires a bounded innovation marginal")
        taps = model.taps.coeffs(y, model.lag_window)
        lags = sorted(taps)
        if not lags:
            return np.zeros(n)
        lo, hi = min(min(lags), 0), max(max(lags), 0)
        eps = innovation_spec.marginal_sampler(rng, (n, hi - lo + 1)).reshape(n, hi - lo + 1)
        return dsulbs_values(model, y, eps, np.array([hi]))[:, 0]
    coeffs = volterra_coefficients(model, y)
    if not coeffs.orders:
        return np.full(n, coeffs.constant)
    lo, hi = min(coeffs.min_lag, 0), max(coeffs.max_lag, 0)
    eps = innovation_spec.marginal_sampler(rng, (n, hi - lo + 1)).reshape(n, hi - lo + 1)
    return evaluate_chaos_columns(coeffs, eps, np.array([hi]))[:, 0]
