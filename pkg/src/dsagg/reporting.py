"""Report serialization: delimited output, JSON, and rendered figures.

Every writer is deterministic for a fixed input: floats use repr-stable
formatting, JSON keys are sorted, CSV rows arrive in a defined order, and
figures carry fixed metadata so a rerun produces byte-identical files.
"""

import csv
import hashlib
import json
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

FIG_DPI = 110
_PNG_METADATA = {"Software": "dsagg"}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and (obj != obj):
        return None
    return obj


def write_json(path, payload):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _fmt(value):
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return value


def write_csv(path, header, rows):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return path


def write_matrix_csv(path, values, row_label="i", col_labels=None):
    """Panel matrix: one row per index i, one column per time point."""
    values = np.asarray(values)
    header = [row_label] + (col_labels or [f"t{j}" for j in range(values.shape[1])])
    rows = [[i + 1] + list(values[i]) for i in range(values.shape[0])]
    return write_csv(path, header, rows)


def file_hash(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _save(fig, path):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    fig.savefig(path, dpi=FIG_DPI, metadata=_PNG_METADATA)
    plt.close(fig)
    return path


# ---------------------------------------------------------------------------
# figures
# ---------------------------------------------------------------------------

def fig_chi(path, r, theoretical, empirical=None, stderr=None):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(r, theoretical, "o-", label="theoretical", color="tab:blue")
    if empirical is not None:
        ax.errorbar(r, empirical, yerr=None if stderr is None else 3 * np.asarray(stderr),
                    fmt="s", label="empirical (3 SE)", color="tab:orange", capsize=3)
    ax.axhline(0.0, color="gray", lw=0.6)
    ax.set_xlabel("lag r")
    ax.set_ylabel("chi(r)")
    ax.legend(frameon=False)
    fig.tight_layout()
    return _save(fig, path)


def fig_ks_trend(path, n_grid, median_ks, per_cell=None):
    fig, ax = plt.subplots(figsize=(6, 4))
    if per_cell:
        for n, vals in per_cell.items():
            ax.plot([n] * len(vals), vals, ".", color="lightgray", ms=4)
    ax.plot(n_grid, [median_ks[n] for n in n_grid], "o-", color="tab:red", label="median KS")
    ax.set_xscale("log", base=2)
    ax.set_xlabel("panel size N")
    ax.set_ylabel("KS distance to N(0, Gamma(0))")
    ax.legend(frameon=False)
    fig.tight_layout()
    return _save(fig, path)


def fig_qq(path, qq_sample, qq_theoretical, label=""):
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    ax.plot(qq_theoretical, qq_sample, ".", ms=3, color="tab:blue")
    lim = max(abs(qq_theoretical[0]), abs(qq_theoretical[-1]))
    ax.plot([-lim, lim], [-lim, lim], "-", color="gray", lw=0.8)
    ax.set_xlabel("normal quantile")
    ax.set_ylabel("sample quantile")
    if label:
        ax.set_title(label, fontsize=10)
    fig.tight_layout()
    return _save(fig, path)


def fig_gamma_trend(path, n_grid, median_abs_error, tau):
    fig, ax = plt.subplots(figsize=(6, 4))
    errs = [median_abs_error[n] for n in n_grid]
    ax.plot(n_grid, errs, "o-", color="tab:green")
    ax.set_xscale("log")
    if any(e > 0 for e in errs):
        ax.set_yscale("log")
    ax.set_xlabel("panel size N")
    ax.set_ylabel(f"median |Gamma^N({tau}) - Gamma({tau})|")
    fig.tight_layout()
    return _save(fig, path)


def fig_probe_margins(path, report):
    fig, ax = plt.subplots(figsize=(6, 4))
    for rep in report.inside:
        margins = sorted(p.margin for p in rep.pairs)
        ax.plot(range(len(margins)), margins, ".-", label=f"r={rep.r}")
    ax.axhline(0.0, color="red", lw=0.8)
    ax.set_xlabel("dictionary pair (sorted)")
    ax.set_ylabel("bound + 3 SE - |cov|")
    ax.legend(frameon=False)
    fig.tight_layout()
    return _save(fig, path)


# ---------------------------------------------------------------------------
# experiment artifact bundles
# ---------------------------------------------------------------------------

def emit_clt_report(outdir, report, formats=("csv", "json"), figures=True):
    paths = []
    if "json" in formats:
        paths.append(write_json(os.path.join(outdir, "clt_report.json"), report.to_json()))
    if "csv" in formats:
        rows = []
        for cell in report.cells:
            rows.extend(cell.rows())
        paths.append(write_csv(
            os.path.join(outdir, "clt_cells.csv"),
            ["env", "n", "stat", "target", "ks", "p", "skewness", "excess_kurtosis", "variance"],
            rows))
        paths.append(write_csv(
            os.path.join(outdir, "clt_medians.csv"),
            ["n", "median_ks", "median_p"],
            [(n, report.median_ks_limit[n], report.median_p_limit[n]) for n in report.n_grid]))
    if figures:
        per_cell = {n: [c.limit.ks_stat for c in report.cells if c.n == n] for n in report.n_grid}
        paths.append(fig_ks_trend(os.path.join(outdir, "clt_ks_trend.png"),
                                  report.n_grid, report.median_ks_limit, per_cell))
        done = set()
        for cell in report.cells:
            if cell.limit.qq_sample is None or cell.env_index != 0:
                continue
            key = cell.n
            if key in done:
                continue
            done.add(key)
            paths.append(fig_qq(os.path.join(outdir, f"clt_qq_n{cell.n}.png"),
                                cell.limit.qq_sample, cell.limit.qq_theoretical,
                                label=f"N={cell.n}, {cell.stat}"))
            qq_rows = list(zip(cell.limit.qq_theoretical, cell.limit.qq_sample))
            if "csv" in formats:
                paths.append(write_csv(os.path.join(outdir, f"clt_qq_n{cell.n}.csv"),
                                       ["normal_quantile", "sample_quantile"], qq_rows))
    return paths


def emit_slln_report(outdir, report, formats=("csv", "json"), figures=True):
    paths = []
    if "json" in formats:
        paths.append(write_json(os.path.join(outdir, "slln_report.json"), report.to_json()))
    if "csv" in formats:
        rows = []
        for tau in report.taus:
            for n in report.n_grid:
                rows.append((tau, n, report.median_abs_error[tau][n], report.limit[tau]))
        paths.append(write_csv(os.path.join(outdir, "slln_errors.csv"),
                               ["tau", "n", "median_abs_error", "limit"], rows))
    if figures:
        for tau in report.taus:
            paths.append(fig_gamma_trend(os.path.join(outdir, f"slln_trend_tau{tau}.png"),
                                         report.n_grid, report.median_abs_error[tau], tau))
    return paths


def emit_probe_report(outdir, report, formats=("csv", "json"), figures=True):
    paths = []
    if "json" in formats:
        paths.append(write_json(os.path.join(outdir, "probe_report.json"), report.to_json()))
    if "csv" in formats:
        rows = []
        for rep in report.inside:
            for p in rep.pairs:
                rows.append((rep.r, p.f_name, p.g_name, p.u, p.v, p.cov, p.se, p.bound,
                             int(p.ok)))
        paths.append(write_csv(os.path.join(outdir, "probe_pairs.csv"),
                               ["r", "f", "g", "u", "v", "cov", "se", "bound", "ok"], rows))
    if figures and report.inside:
        paths.append(fig_probe_margins(os.path.join(outdir, "probe_margins.png"), report))
    return paths


def emit_chi_report(outdir, r, theoretical, empirical, stderr, formats=("csv", "json"),
                    figures=True):
    paths = []
    rows = [(int(ri), theoretical[ri], empirical[ri], stderr[ri]) for ri in r]
    if "csv" in formats:
        paths.append(write_csv(os.path.join(outdir, "chi.csv"),
                               ["r", "chi_theoretical", "chi_hat", "stderr"], rows))
    if "json" in formats:
        paths.append(write_json(os.path.join(outdir, "chi.json"),
                                {"rows": [{"r": a, "chi": b, "chi_hat": c, "stderr": d}
                                          for a, b, c, d in rows]}))
    if figures:
        paths.append(fig_chi(os.path.join(outdir, "chi.png"), list(r),
                             [theoretical[ri] for ri in r],
                             [empirical[ri] for ri in r], [stderr[ri] for ri in r]))
    return paths


# ---------------------------------------------------------------------------
# coefficient / panel artifacts
# ---------------------------------------------------------------------------

def write_chaos_coefficients(path_csv, path_json, coeffs, model_tag, y):
    """Sparse coefficient dump: rows (k, l1..lk, value) plus a JSON header."""
    rows = []
    for k in sorted(coeffs.orders):
        for lags, v in sorted(coeffs.orders[k].items()):
            rows.append((k, " ".join(str(l) for l in lags), v))
    write_csv(path_csv, ["order", "lags", "value"], rows)
    write_json(path_json, {
        "model": model_tag,
        "y": list(np.atleast_1d(y)),
        "k_max": coeffs.k_max,
        "lag_window": coeffs.lag_window,
        "constant": coeffs.constant,
        "enumerated_mass": coeffs.enumerated_mass,
        "closed_total_mass": coeffs.closed_total_mass,
        "order_mass": {str(k): v for k, v in sorted(coeffs.order_mass.items())},
    })
    return path_csv, path_json


def load_panel_csv(path):
    with open(path) as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(x) for x in row[1:]] for row in reader]
    return np.asarray(rows)
