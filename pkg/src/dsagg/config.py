"""Experiment configuration: schema, defaults, and object construction.

A run is described by one JSON file with sections environment / innovations /
model / aggregation / validation / output plus a master seed and a thread
budget.  The resolver validates types and key names (errors carry the dotted
path of the offending key), fills defaults, and the fully resolved tree is
written next to every run's outputs so results are reproducible from the
artifacts alone.
"""

import json
import math
import os

from . import environment as env
from . import innovations as innov
from .errors import ConfigurationError

DEFAULTS = {
    "seed": None,  # required
    "threads": None,  # optional; falls back to DSAGG_THREADS, then 1
    "output": {"dir": "out", "formats": ["csv", "json"], "figures": True},
    "environment": None,  # required
    "innovations": None,  # required
    "model": None,  # required
    "aggregation": {"n_grid": [100, 1000], "normalization": "sqrt", "taus": [0, 1],
                    "t_len": 256},
    "validation": {
        "replicates": 400,
        "t_points": [1, 2, 3],
        "combo_weights": None,
        "delta": 1.0,
        "decay_exponent": None,
        "family": "lambda",
        "env_seeds": 5,
        "level": 0.05,
        "p_floor": 0.01,
        "mc_samples": 20000,
        "shrink_required": 3.0,
        "outside_trials": 200,
        "trial_replicates": 200,
        "inside_replicates": 4000,
        "calibration_repetitions": 0,
    },
}

_SCALARS = {
    "seed": int, "threads": int, "dir": str, "figures": bool, "n_grid": list,
}


class ConfigError(ConfigurationError):
    """Schema violation; the message names the dotted path of the bad key."""


def _fail(path, message):
    raise ConfigError(f"{path}: {message}")


def _expect(value, types, path):
    if not isinstance(value, types):
        names = types.__name__ if isinstance(types, type) else "/".join(t.__name__ for t in types)
        _fail(path, f"expected {names}, got {type(value).__name__}")
    return value


def _expect_keys(tree, allowed, required, path):
    for key in tree:
        if key not in allowed:
            _fail(f"{path}.{key}" if path else key, "unknown key")
    for key in required:
        if key not in tree:
            _fail(f"{path}.{key}" if path else key, "missing required key")


def _number_list(value, path, kind=float):
    _expect(value, list, path)
    out = []
    for idx, v in enumerate(value):
        _expect(v, (int, float), f"{path}[{idx}]")
        out.append(kind(v))
    return out


# ---------------------------------------------------------------------------
# maps
# ---------------------------------------------------------------------------

def _scalar_map(tree, path):
    _expect(tree, (dict, int, float), path)
    if isinstance(tree, (int, float)):
        return env.const_map(float(tree))
    kind = tree.get("kind", "const")
    if kind == "const":
        _expect_keys(tree, {"kind", "value"}, {"value"}, path)
        return env.const_map(_expect(tree["value"], (int, float), f"{path}.value"))
    if kind == "affine":
        _expect_keys(tree, {"kind", "intercept", "slope", "component"}, set(), path)
        return env.ScalarMap(intercept=float(tree.get("intercept", 0.0)),
                             slope=float(tree.get("slope", 1.0)),
                             component=int(tree.get("component", 0)))
    _fail(f"{path}.kind", f"unknown scalar map kind {kind!r}")


def _sequence_map(tree, path):
    _expect(tree, dict, path)
    kind = tree.get("kind")
    if kind == "zero":
        return env.zero_sequence()
    if kind == "taps":
        _expect_keys(tree, {"kind", "lags", "values", "scale"}, {"lags", "values"}, path)
        lags = [int(l) for l in _number_list(tree["lags"], f"{path}.lags", int)]
        values = _number_list(tree["values"], f"{path}.values")
        scale = _scalar_map(tree["scale"], f"{path}.scale") if "scale" in tree else None
        return env.taps_sequence(lags, values, scale=scale)
    if kind == "geometric":
        _expect_keys(tree, {"kind", "first", "ratio", "start", "length", "scale"},
                     {"first", "ratio"}, path)
        scale = _scalar_map(tree["scale"], f"{path}.scale") if "scale" in tree else None
        length = tree.get("length")
        return env.geometric_sequence(float(tree["first"]), float(tree["ratio"]),
                                      start=int(tree.get("start", 1)),
                                      length=None if length is None else int(length),
                                      scale=scale)
    _fail(f"{path}.kind", f"unknown sequence kind {kind!r}")


# ---------------------------------------------------------------------------
# sections
# ---------------------------------------------------------------------------

def _environment(tree):
    _expect(tree, dict, "environment")
    _expect_keys(tree, {"family", "dimension", "params", "label"}, {"family"}, "environment")
    family = _expect(tree["family"], str, "environment.family")
    dimension = int(tree.get("dimension", 1))
    params = tree.get("params", {})
    _expect(params, dict, "environment.params")
    try:
        return env.EnvironmentSpec(family=family, dimension=dimension, params=params,
                                   label=tree.get("label", "environment"))
    except ConfigurationError as exc:
        _fail("environment.params", str(exc))


def _innovations(tree):
    _expect(tree, dict, "innovations")
    _expect_keys(tree, {"kind", "input_law", "beta", "offsets", "orders", "chi", "causal"},
                 {"kind"}, "innovations")
    kind = _expect(tree["kind"], str, "innovations.kind")
    law = tree.get("input_law", "gaussian")
    causal = bool(tree.get("causal", False))
    try:
        if kind == "iid":
            return innov.iid_noise(law)
        if kind == "linear_shift":
            beta = _number_list(tree.get("beta"), "innovations.beta")
            offsets = tree.get("offsets")
            if offsets is not None:
                offsets = [int(o) for o in _number_list(offsets, "innovations.offsets", int)]
            return innov.linear_shift(beta, offsets=offsets, causal=causal, input_law=law)
        if kind == "volterra_shift":
            orders_tree = _expect(tree.get("orders"), dict, "innovations.orders")
            orders = {}
            for key, rows in orders_tree.items():
                entries = []
                for idx, row in enumerate(rows):
                    lags, weight = row
                    entries.append((tuple(int(l) for l in lags), float(weight)))
                orders[int(key)] = entries
            return innov.volterra_shift(orders, causal=causal, input_law=law)
        if kind == "gaussian_stationary":
            chi = _number_list(tree.get("chi"), "innovations.chi")
            return innov.gaussian_stationary(chi)
    except ConfigurationError as exc:
        _fail("innovations", str(exc))
    _fail("innovations.kind", f"unknown kind {kind!r}")


def _model(tree):
    _expect(tree, dict, "model")
    allowed = {"tag", "k_max", "lag_window", "taps", "orders", "scale", "b0", "b", "a",
               "alpha0", "alpha", "beta", "shift", "clip", "lambda1", "lambda2"}
    _expect_keys(tree, allowed, {"tag"}, "model")
    tag = _expect(tree["tag"], str, "model.tag")
    k_max = int(tree.get("k_max", 8))
    lag_window = int(tree.get("lag_window", 64))

    def need(key):
        if key not in tree:
            _fail(f"model.{key}", f"required by tag {tag!r}")
        return tree[key]

    try:
        if tag == "linear":
            return env.linear_model(_sequence_map(need("taps"), "model.taps"),
                                    k_max=k_max, lag_window=lag_window)
        if tag == "dsv_star":
            orders_tree = _expect(need("orders"), dict, "model.orders")
            orders = {int(k): [(tuple(int(l) for l in lags), float(v)) for lags, v in rows]
                      for k, rows in orders_tree.items()}
            scale = _scalar_map(tree["scale"], "model.scale") if "scale" in tree else None
            return env.dsv_star_model(orders, scale=scale, k_max=k_max, lag_window=lag_window)
        if tag == "dsulbs":
            shift = _expect(need("shift"), str, "model.shift")
            clip = tree.get("clip")
            return env.dsulbs_model(shift, _sequence_map(need("taps"), "model.taps"),
                                    clip=None if clip is None else float(clip),
                                    k_max=k_max, lag_window=lag_window)
        if tag == "bilinear":
            return env.bilinear_model(_sequence_map(need("a"), "model.a"),
                                      _sequence_map(need("b"), "model.b"),
                                      _scalar_map(need("b0"), "model.b0"),
                                      k_max=k_max, lag_window=lag_window)
        if tag == "larch":
            return env.larch_model(_scalar_map(need("b0"), "model.b0"),
                                   _sequence_map(need("b"), "model.b"),
                                   k_max=k_max, lag_window=lag_window)
        if tag == "arch_inf":
            return env.arch_inf_model(_scalar_map(need("b0"), "model.b0"),
                                      _sequence_map(need("b"), "model.b"),
                                      float(need("lambda1")), float(need("lambda2")),
                                      k_max=k_max, lag_window=lag_window)
        if tag == "garch11":
            return env.garch11_model(_scalar_map(need("alpha0"), "model.alpha0"),
                                     _scalar_map(need("alpha"), "model.alpha"),
                                     _scalar_map(need("beta"), "model.beta"),
                                     float(need("lambda1")), float(need("lambda2")),
                                     k_max=k_max, lag_window=lag_window)
        if tag == "arch1":
            return env.arch1_model(_scalar_map(need("alpha0"), "model.alpha0"),
                                   _scalar_map(need("alpha"), "model.alpha"),
                                   float(need("lambda1")), float(need("lambda2")),
                                   k_max=k_max, lag_window=lag_window)
    except ConfigurationError as exc:
        _fail("model", str(exc))
    _fail("model.tag", f"unknown tag {tag!r}")


# ---------------------------------------------------------------------------
# resolution
# ---------------------------------------------------------------------------

class ResolvedConfig:
    """Validated config with built objects and the resolved JSON tree."""

    def __init__(self, tree):
        _expect(tree, dict, "<root>")
        _expect_keys(tree, set(DEFAULTS), {"seed", "environment", "innovations", "model"}, "")
        self.seed = _expect(tree["seed"], int, "seed")

        threads = tree.get("threads")
        if threads is None:
            threads = int(os.environ.get("DSAGG_THREADS", "1"))
        self.threads = max(int(threads), 1)

        out = dict(DEFAULTS["output"])
        out.update(_expect(tree.get("output", {}), dict, "output"))
        _expect_keys(out, {"dir", "formats", "figures"}, set(), "output")
        for fmt in out["formats"]:
            if fmt not in ("csv", "json"):
                _fail("output.formats", f"unknown format {fmt!r}")
        self.output_dir = _expect(out["dir"], str, "output.dir")
        self.formats = tuple(out["formats"])
        self.figures = bool(out["figures"])

        self.environment = _environment(tree["environment"])
        self.innovations = _innovations(tree["innovations"])
        self.model = _model(tree["model"])

        agg_tree = dict(DEFAULTS["aggregation"])
        agg_tree.update(_expect(tree.get("aggregation", {}), dict, "aggregation"))
        _expect_keys(agg_tree, set(DEFAULTS["aggregation"]), set(), "aggregation")
        self.n_grid = [int(n) for n in _number_list(agg_tree["n_grid"], "aggregation.n_grid", int)]
        if any(n < 1 for n in self.n_grid):
            _fail("aggregation.n_grid", "entries must be >= 1")
        self.normalization = agg_tree["normalization"]
        if self.normalization not in ("sqrt", "n") and not isinstance(self.normalization, (int, float)):
            _fail("aggregation.normalization", "must be 'sqrt', 'n', or a positive number")
        self.taus = [int(t) for t in _number_list(agg_tree["taus"], "aggregation.taus", int)]
        self.t_len = int(agg_tree["t_len"])

        val_tree = dict(DEFAULTS["validation"])
        val_tree.update(_expect(tree.get("validation", {}), dict, "validation"))
        _expect_keys(val_tree, set(DEFAULTS["validation"]), set(), "validation")
        self.validation = val_tree
        if val_tree["delta"] <= 0:
            _fail("validation.delta", "must be > 0")

        self.tree = tree

    def resolved_tree(self):
        tree = {
            "seed": self.seed,
            "threads": self.threads,
            "output": {"dir": self.output_dir, "formats": list(self.formats),
                       "figures": self.figures},
            "environment": self.tree["environment"],
            "innovations": self.tree["innovations"],
            "model": self.tree["model"],
            "aggregation": {"n_grid": self.n_grid, "normalization": self.normalization,
                            "taus": self.taus, "t_len": self.t_len},
            "validation": self.validation,
        }
        return tree

    def decay_exponent(self):
        """Profile decay exponent for the block-window gate.

        Finite-window shifts vanish beyond the window, which counts as an
        arbitrarily fast polynomial rate; a configured value overrides.
        """
        configured = self.validation.get("decay_exponent")
        if configured is not None:
            return float(configured)
        if self.innovations.kind in ("iid", "linear_shift", "volterra_shift"):
            return math.inf
        chi = self.innovations.chi
        if len(chi) >= 3 and chi[-1] != 0 and chi[-2] != 0:
            # fit |chi(r)| ~ r^-d at the table end as a conservative default
            import numpy as np

            r = len(chi) - 1
            ratio = abs(chi[-1] / chi[-2])
            if ratio < 1:
                return float(-math.log(ratio) * r)
        return math.inf


def load_config(path):
    with open(path) as fh:
        try:
            tree = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"<root>: invalid JSON ({exc})") from exc
    return ResolvedConfig(tree)
