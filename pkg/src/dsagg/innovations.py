"""Cross-sectionally dependent innovation panels.

The innovation array ``eps[i][t]`` is i.i.d. in the time index ``t`` (a fresh
input row per column) and weakly dependent in the panel index ``i``.  Four
generators are provided:

* ``iid``                 -- independent entries, chi(r) = 1{r=0};
* ``linear_shift``        -- eps^i_t = sum_l beta_l xi^{i-l}_t with i.i.d.
                             inputs xi and a finite tap window;
* ``volterra_shift``      -- ordered products of shifted inputs,
                             eps^i_t = sum_k sum_{l1<...<lk} beta_{k;l} xi^{i-l1}_t ... xi^{i-lk}_t;
* ``gaussian_stationary`` -- each column is a stationary Gaussian vector with
                             a prescribed covariance table chi(r), sampled by
                             circulant embedding.

Tap weights are renormalized at construction so every generator emits
mean-zero, unit-variance innovations.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .seeding import rng_for

INPUT_LAWS = ("gaussian", "rademacher", "uniform")
KINDS = ("iid", "linear_shift", "volterra_shift", "gaussian_stationary")

PSD_TOLERANCE = 1e-10
SUMMABILITY_TOLERANCE = 1e-10


def _draw_inputs(rng, law, shape):
    if law == "gaussian":
        return rng.standard_normal(shape)
    if law == "rademacher":
        return rng.integers(0, 2, size=shape) * 2.0 - 1.0
    if law == "uniform":
        # unit variance: U(-sqrt(3), sqrt(3))
        return rng.uniform(-np.sqrt(3.0), np.sqrt(3.0), size=shape)
    raise ConfigurationError(f"unknown input law {law!r}")


def input_law_bound(law):
    """Essential sup of the input law, or None when unbounded."""
    if law == "gaussian":
        return None
    if law == "rademacher":
        return 1.0
    if law == "uniform":
        return float(np.sqrt(3.0))
    raise ConfigurationError(f"unknown input law {law!r}")


@dataclass(frozen=True)
class InnovationGeneratorSpec:
    """Defines one innovation generator.

    ``beta``/``offsets`` describe the linear-shift taps (offsets default to
    0..len(beta)-1 when causal, centered otherwise).  ``orders`` holds the
    Volterra taps as {order k: ((lag tuple, weight), ...)}.  ``chi`` is the
    covariance table for the Gaussian stationary kind, chi[r] for r=0..R.
    """

    kind: str
    input_law: str = "gaussian"
    beta: tuple = None
    offsets: tuple = None
    orders: dict = None
    chi: tuple = None
    causal: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown innovation kind {self.kind!r}")
        if self.input_law not in INPUT_LAWS:
            raise ConfigurationError(f"unknown input law {self.input_law!r}")
        if self.kind == "iid":
            object.__setattr__(self, "beta", (1.0,))
            object.__setattr__(self, "offsets", (0,))
        elif self.kind == "linear_shift":
            if not self.beta:
                raise ConfigurationError("linear_shift requires beta taps")
            beta = np.asarray(self.beta, dtype=float)
            if self.offsets is None:
                if self.causal:
                    offsets = np.arange(beta.size)
                else:
                    offsets = np.arange(beta.size) - (beta.size - 1) // 2
            else:
                offsets = np.asarray(self.offsets, dtype=int)
                if offsets.size != beta.size:
                    raise ConfigurationError("offsets and beta must have equal length")
                if offsets.size != np.unique(offsets).size:
                    raise ConfigurationError("offsets must be distinct")
            if self.causal and (offsets < 0).any():
                raise ConfigurationError("causal shift cannot use negative offsets")
            norm = float(np.sqrt(np.sum(beta**2)))
            if norm == 0.0:
                raise ConfigurationError("beta taps are all zero")
            object.__setattr__(self, "beta", tuple(beta / norm))
            object.__setattr__(self, "offsets", tuple(int(o) for o in offsets))
        elif self.kind == "volterra_shift":
            if not self.orders:
                raise ConfigurationError("volterra_shift requires order taps")
            clean = {}
            total = 0.0
            for k, entries in self.orders.items():
                k = int(k)
                if k < 1:
                    raise ConfigurationError("volterra orders start at 1 (no constant term)")
                rows = []
                for lags, weight in entries:
                    lags = tuple(int(l) for l in lags)
                    if len(lags) != k or any(a >= b for a, b in zip(lags, lags[1:])):
                        raise ConfigurationError(f"order-{k} lags must be strictly increasing, got {lags}")
                    if self.causal and min(lags) < 0:
                        raise ConfigurationError("causal shift cannot use negative lags")
                    rows.append((lags, float(weight)))
                    total += float(weight) ** 2
                clean[k] = tuple(rows)
            if total == 0.0:
                raise ConfigurationError("volterra taps are all zero")
            norm = np.sqrt(total)
            clean = {
                k: tuple((lags, w / norm) for lags, w in rows) for k, rows in clean.items()
            }
            object.__setattr__(self, "orders", clean)
        elif self.kind == "gaussian_stationary":
            if self.chi is None or len(self.chi) == 0:
                raise ConfigurationError("gaussian_stationary requires a chi table")
            chi = np.asarray(self.chi, dtype=float)
            if abs(chi[0] - 1.0) > 1e-12:
                raise ConfigurationError("chi(0) must equal 1 (unit variance)")
            if np.abs(chi).max() > 1.0 + 1e-12:
                raise ConfigurationError("|chi(r)| must not exceed 1")
            eigmin = toeplitz_min_eigenvalue(chi)
            if eigmin < -PSD_TOLERANCE:
                raise ConfigurationError(
                    f"chi table is not positive semidefinite (min Toeplitz eigenvalue {eigmin:.3e})"
                )
            object.__setattr__(self, "chi", tuple(float(c) for c in chi))
            object.__setattr__(self, "input_law", "gaussian")

    @property
    def window(self):
        """Half-width L of the cross-sectional dependence window."""
        if self.kind == "iid":
            return 0
        if self.kind == "linear_shift":
            return int(max(abs(o) for o in self.offsets))
        if self.kind == "volterra_shift":
            return int(max(max(abs(l) for l in lags) for rows in self.orders.values() for lags, _ in rows))
        return len(self.chi) - 1

    def bounded_marginal(self):
        """Sup-norm bound of eps^i_t, or None when unbounded."""
        bound = input_law_bound(self.input_law)
        if self.kind == "gaussian_stationary" or bound is None:
            return None
        if self.kind in ("iid", "linear_shift"):
            return float(np.sum(np.abs(self.beta)) * bound)
        total = 0.0
        for k, rows in self.orders.items():
            total += sum(abs(w) for _, w in rows) * bound**k
        return float(total)

    def marginal_sampler(self, rng, size):
        """Independent draws from the one-dimensional marginal of eps^i_t."""
        if self.kind == "gaussian_stationary":
            return rng.standard_normal(size)
        if self.kind == "iid":
            return _draw_inputs(rng, self.input_law, size)
        lo = -self.window
        xi = _draw_inputs(rng, self.input_law, (size, 2 * self.window + 1))
        if self.kind == "linear_shift":
            out = np.zeros(size)
            for b, off in zip(self.beta, self.offsets):
                out += b * xi[:, off - lo]
            return out
        out = np.zeros(size)
        for rows in self.orders.values():
            for lags, w in rows:
                prod = np.ones(size)
                for l in lags:
                    prod = prod * xi[:, l - lo]
                out += w * prod
        return out


def iid_noise(input_law="gaussian"):
    return InnovationGeneratorSpec(kind="iid", input_law=input_law)


def linear_shift(beta, offsets=None, causal=False, input_law="gaussian"):
    return InnovationGeneratorSpec(
        kind="linear_shift", input_law=input_law, beta=tuple(beta),
        offsets=None if offsets is None else tuple(offsets), causal=causal,
    )


def volterra_shift(orders, causal=False, input_law="gaussian"):
    return InnovationGeneratorSpec(kind="volterra_shift", input_law=input_law,
                                   orders=dict(orders), causal=causal)


def gaussian_stationary(chi):
    return InnovationGeneratorSpec(kind="gaussian_stationary", chi=tuple(chi))


def compose_linear_shifts(outer, inner):
    """Convolve two linear-shift specs into the equivalent single shift.

    Feeding one shift's output into another (the dependent-inputs
    construction) is, for i.i.d. base inputs, the same as a single shift with
    convolved taps; the composed taps give its exact dependence profile.
    """
    if outer.kind != "linear_shift" or inner.kind != "linear_shift":
        raise ConfigurationError("composition is defined for linear shifts")
    taps = {}
    for b1, o1 in zip(outer.beta, outer.offsets):
        for b2, o2 in zip(inner.beta, inner.offsets):
            taps[o1 + o2] = taps.get(o1 + o2, 0.0) + b1 * b2
    offsets = sorted(taps)
    return linear_shift([taps[o] for o in offsets], offsets=offsets,
                        causal=outer.causal and inner.causal,
                        input_law=inner.input_law)


def toeplitz_min_eigenvalue(chi, size=None):
    """Minimum eigenvalue of the Toeplitz matrix built from a chi table."""
    chi = np.asarray(chi, dtype=float)
    n = int(size or chi.size)
    vals = np.zeros(n)
    m = min(n, chi.size)
    vals[:m] = chi[:m]
    idx = np.abs(np.subtract.outer(np.arange(n), np.arange(n)))
    return float(np.linalg.eigvalsh(vals[idx]).min())


@dataclass
class InnovationPanel:
    """An (n, t_len) innovation array with its provenance.

    ``t_start`` is the time index of column 0; warm-up columns use
    ``t_start <= 0`` so lagged evaluations stay in range.
    """

    values: np.ndarray
    t_start: int
    spec: InnovationGeneratorSpec
    seed: int

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def t_len(self):
        return self.values.shape[1]

    def column_index(self, t):
        j = t - self.t_start
        if j < 0 or j >= self.values.shape[1]:
            raise IndexError(f"time {t} outside panel range [{self.t_start}, {self.t_start + self.t_len - 1}]")
        return j

    def eps(self, i, t):
        return self.values[i - 1, self.column_index(t)]


def _linear_columns(spec, n, cols, rng):
    L = spec.window
    xi = _draw_inputs(rng, spec.input_law, (n + 2 * L, cols))
    out = np.zeros((n, cols))
    for b, off in zip(spec.beta, spec.offsets):
        out += b * xi[L - off: L - off + n, :]
    return out


def _volterra_columns(spec, n, cols, rng):
    L = spec.window
    xi = _draw_inputs(rng, spec.input_law, (n + 2 * L, cols))
    out = np.zeros((n, cols))
    for rows in spec.orders.values():
        for lags, w in rows:
            prod = np.ones((n, cols))
            for l in lags:
                prod = prod * xi[L - l: L - l + n, :]
            out += w * prod
    return out


class _CirculantEmbedding:
    """Sampler for stationary Gaussian vectors with covariance table chi.

    Standard circulant embedding: the Toeplitz covariance is embedded in a
    circulant whose eigenvalues are an FFT of the wrapped kernel; tiny
    negative eigenvalues (truncation artifacts) are clipped and recorded.
    """

    def __init__(self, chi, n):
        chi = np.asarray(chi, dtype=float)
        m = 1
        while m < 2 * (n + chi.size):
            m *= 2
        row = np.zeros(m)
        row[: chi.size] = chi
        row[m - chi.size + 1:] = chi[1:][::-1]
        lam = np.fft.fft(row).real
        self.clipped = float(-min(lam.min(), 0.0))
        if lam.min() < -1e-8 * max(lam.max(), 1.0):
            raise ConfigurationError(
                f"chi table has no nonnegative circulant embedding (min eigenvalue {lam.min():.3e})"
            )
        self.sqrt_lam = np.sqrt(np.clip(lam, 0.0, None))
        self.m = m
        self.n = n

    def sample_columns(self, cols, rng):
        out = np.empty((self.n, cols))
        pairs = (cols + 1) // 2
        z = rng.standard_normal((self.m, pairs)) + 1j * rng.standard_normal((self.m, pairs))
        y = np.sqrt(self.m) * np.fft.ifft(self.sqrt_lam[:, None] * z, axis=0)
        out[:, 0::2] = y.real[: self.n, : out[:, 0::2].shape[1]]
        if cols > 1:
            out[:, 1::2] = y.imag[: self.n, : out[:, 1::2].shape[1]]
        return out


def generate_panel(spec, n, t_len, seed, t_start=1):
    """Simulate the innovation array for i = 1..n, t = t_start..t_start+t_len-1.

    Columns are mutually independent by construction (a fresh input row per
    t), so the array is an i.i.d.-in-time sequence of weakly dependent
    cross-sections.  Deterministic under (spec, n, t_len, seed, t_start).
    """
    if n < 1 or t_len < 1:
        raise ConfigurationError("panel dimensions must be >= 1")
    rng = rng_for(seed, f"innovations.{spec.kind}")
    if spec.kind == "iid":
        values = _draw_inputs(rng, spec.input_law, (n, t_len))
    elif spec.kind == "linear_shift":
        values = _linear_columns(spec, n, t_len, rng)
    elif spec.kind == "volterra_shift":
        values = _volterra_columns(spec, n, t_len, rng)
    else:
        values = _CirculantEmbedding(spec.chi, n).sample_columns(t_len, rng)
    return InnovationPanel(values=values, t_start=t_start, spec=spec, seed=seed)


@dataclass
class InteractionKernel:
    """Theoretical cross-sectional covariance chi(r), r = 0..r_max.

    ``support`` is the last lag with chi != 0 when the kernel is exactly
    finitely supported (shift generators), else None.  ``s`` maps k to the
    Cesaro limit s_k = 2 sum_{r>=1} chi(r)^k; withheld (None) when the table
    is not summable within the budget.
    """

    chi: np.ndarray
    summable: bool
    support: int = None
    s: dict = field(default_factory=dict)
    l1_norm: float = 0.0
    note: str = ""

    def value(self, r):
        r = abs(int(r))
        if r < self.chi.size:
            return float(self.chi[r])
        return 0.0

    def s_k(self, k):
        if not self.summable:
            raise ConfigurationError(
                "kernel flagged not summable (common-innovation regime); s_k undefined"
            )
        return self.s[k]


def theoretical_chi(spec, r_max=None, k_max=12, tail_tol=SUMMABILITY_TOLERANCE):
    """Exact interaction kernel of a generator spec.

    linear shift: chi(r) = sum_l beta_l beta_{l+r}; volterra shift: orders
    match only against their own shifted tuples; iid: indicator;
    gaussian_stationary: the supplied table.  Flags non-summability when the
    l1 partial sums are not Cauchy at ``tail_tol`` within the table budget.
    """
    if spec.kind == "iid":
        L = 0
        chi = np.array([1.0])
    elif spec.kind == "linear_shift":
        L = spec.window
        chi = np.zeros(2 * L + 1)
        taps = dict(zip(spec.offsets, spec.beta))
        for r in range(2 * L + 1):
            chi[r] = sum(b * taps.get(off + r, 0.0) for off, b in taps.items())
    elif spec.kind == "volterra_shift":
        L = spec.window
        chi = np.zeros(2 * L + 1)
        for k, rows in spec.orders.items():
            table = {lags: w for lags, w in rows}
            for r in range(2 * L + 1):
                chi[r] += sum(
                    w * table.get(tuple(l + r for l in lags), 0.0) for lags, w in rows
                )
    else:
        L = None
        chi = np.asarray(spec.chi, dtype=float)

    if r_max is not None:
        if chi.size < r_max + 1:
            chi = np.concatenate([chi, np.zeros(r_max + 1 - chi.size)])
        else:
            chi = chi[: r_max + 1].copy()

    if L is not None:
        support = int(max((r for r in range(chi.size) if chi[r] != 0.0), default=0))
        summable = True
        note = "finite support (shift window)"
    else:
        # Geometric-style tail bound from the end of the table: with
        # rho = |chi(R)| / |chi(R-1)| < 1 the unseen tail is at most
        # |chi(R)| * rho / (1 - rho).
        support = None
        last, prev = abs(chi[-1]), abs(chi[-2]) if chi.size > 1 else abs(chi[-1])
        if last <= tail_tol:
            summable, note = True, ""
        elif prev > 0.0 and last < prev:
            rho = last / prev
            summable = bool(last * rho / (1.0 - rho) <= tail_tol)
            note = "" if summable else "l1 partial sums not Cauchy within budget"
        else:
            summable, note = False, "l1 partial sums not Cauchy within budget"

    l1 = float(np.sum(np.abs(chi)))
    s = {}
    if summable:
        for k in range(1, k_max + 1):
            s[k] = float(2.0 * np.sum(chi[1:] ** k))
    return InteractionKernel(chi=chi, summable=summable, support=support, s=s,
                             l1_norm=l1, note=note)


@dataclass
class DependenceProfile:
    """A theoretical decay bound epsilon(r), r = 0..r_max, for one family.

    ``family`` is one of lambda/eta/theta/kappa/kappa_prime; ``note`` records
    which transfer bound produced it.
    """

    family: str
    values: np.ndarray
    note: str = ""

    def value(self, r):
        r = abs(int(r))
        if r < self.values.size:
            return float(self.values[r])
        return 0.0

    def decay_window(self):
        """Smallest r0 with epsilon(r) = 0 for all r >= r0, or None."""
        nz = np.nonzero(self.values)[0]
        if nz.size == 0:
            return 0
        if nz[-1] == self.values.size - 1:
            return None
        return int(nz[-1] + 1)


def _shell_increments(spec):
    """w_n = L2 size of the taps entering at input distance |l| = n."""
    L = spec.window
    w2 = np.zeros(L + 1)
    if spec.kind == "linear_shift":
        for b, off in zip(spec.beta, spec.offsets):
            w2[abs(off)] += b * b
    else:
        for rows in spec.orders.values():
            for lags, wt in rows:
                w2[max(abs(l) for l in lags)] += wt * wt
    return np.sqrt(w2)


def dependence_profile(spec, r_max):
    """Transfer-theorem decay bound for a generator spec.

    Shift generators with window L use the input-truncation bound: blocks at
    gap r stay dependent only through inputs within distance s of each side,
    and truncating at the largest s with 2s < r gives

        eta(r) <= 2 * delta_s,   delta_s = sum_{n >= s} w_n,
        w_n = (sum of squared taps entering at |l| = n)^(1/2),

    exactly zero for r > 2L (disjoint input rows).  Causal shifts only look
    backward, so theta(r) = 2 * delta_r, zero for r > L.  Stationary
    Gaussian cross-sections carry kappa(r) = sup_{j >= r} |chi(j)|, labelled
    "not associated" when the table has negative entries.
    """
    values = np.zeros(r_max + 1)
    if spec.kind == "iid":
        values[0] = 2.0
        return DependenceProfile("eta", values, note="iid inputs: exact independence beyond r=0")
    if spec.kind in ("linear_shift", "volterra_shift"):
        L = spec.window
        w = _shell_increments(spec)
        delta = np.concatenate([np.cumsum(w[::-1])[::-1], [0.0]])
        if spec.causal:
            for r in range(r_max + 1):
                values[r] = 2.0 * delta[min(r, L + 1)]
            return DependenceProfile("theta", values,
                                     note="causal shift truncation bound 2*delta_r")
        for r in range(r_max + 1):
            if r > 2 * L:
                break
            s = max((r - 1) // 2, 0)
            values[r] = 2.0 * delta[min(s, L + 1)]
        return DependenceProfile("eta", values,
                                 note="noncausal shift truncation bound 2*delta_((r-1)/2)")
    chi = np.abs(np.asarray(spec.chi))
    note = "stationary gaussian covariance sup bound"
    if np.asarray(spec.chi).min() < 0:
        note += " (negative entries: gaussian, not associated)"
    for r in range(r_max + 1):
        values[r] = chi[r:].max() if r < chi.size else 0.0
    return DependenceProfile("kappa", values, note=note)


def estimate_chi(panels, r_max):
    """Empirical chi_hat(r) with standard errors from a replicate ensemble.

    ``panels`` is a list of InnovationPanel (or 2-D arrays).  Averages
    eps^i_t eps^{i+r}_t over all valid (i, t) within a replicate; the
    standard error comes from the dispersion across replicates (columns count
    as replicates when only one panel with t_len >= 2 is given).
    """
    arrays = [p.values if isinstance(p, InnovationPanel) else np.asarray(p) for p in panels]
    if not arrays:
        raise ConfigurationError("need at least one panel")
    if len(arrays) == 1 and arrays[0].shape[1] < 2:
        raise ConfigurationError("need >= 2 replicates or t_len >= 2")
    n = arrays[0].shape[0]
    if r_max >= n:
        raise IndexError(f"lag r_max={r_max} requires panel height > r_max")
    if len(arrays) == 1:
        arrays = [arrays[0][:, [j]] for j in range(arrays[0].shape[1])]
    reps = len(arrays)
    per_rep = np.empty((reps, r_max + 1))
    for m, a in enumerate(arrays):
        for r in range(r_max + 1):
            per_rep[m, r] = np.mean(a[: n - r, :] * a[r:, :])
    est = per_rep.mean(axis=0)
    if reps > 1:
        se = per_rep.std(axis=0, ddof=1) / np.sqrt(reps)
    else:
        se = np.full(r_max + 1, np.nan)
    return est, se


@dataclass
class ChiDecayReport:
    """|chi(r)| against C * epsilon(r)^exponent, r = 1..r_max."""

    exponent: float
    constant: float
    ratios: np.ndarray
    violations: list

    @property
    def ok(self):
        return not self.violations


def check_chi_decay(profile, kernel, delta, zero_tol=1e-12):
    """Smallest C with |chi(r)| <= C * epsilon(r)^q for r >= 1.

    q = delta/(1+delta) for the lambda/eta/theta families and q = 1 for
    kappa/kappa_prime.  A lag with epsilon(r) = 0 but chi(r) != 0 is a
    violation (the kernel cannot outlive the dependence bound).
    """
    if profile.family in ("lambda", "eta", "theta"):
        q = delta / (1.0 + delta)
    elif profile.family in ("kappa", "kappa_prime"):
        q = 1.0
    else:
        raise ConfigurationError(f"unknown profile family {profile.family!r}")
    r_max = min(profile.values.size, kernel.chi.size) - 1
    ratios = np.zeros(r_max + 1)
    constant = 0.0
    violations = []
    for r in range(1, r_max + 1):
        c = abs(kernel.value(r))
        e = profile.value(r)
        if e <= 0.0:
            if c > zero_tol:
                violations.append(r)
            ratios[r] = np.inf if c > zero_tol else 0.0
            continue
        ratios[r] = c / e**q
        constant = max(constant, ratios[r])
    return ChiDecayReport(exponent=q, constant=constant, ratios=ratios, violations=violations)
