"""CSV, table and config file input/output.

All artifacts are plain text: CSV for tabular data, a whitespace table for
prior intervals, key=value files for configuration, and JSON for
diagnostics. Floats are written with repr-style shortest round-trip
formatting so re-reading reproduces values bit-exactly and repeated runs
produce byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .errors import InputError
from .lukars import DischargeSeries, ForcingSeries
from .params import COORD_NAMES, N_PARAMS, PHYS_NAMES, PriorSpec
from .subspace import PolySurrogate, SubspaceDecomposition


def fmt(value) -> str:
    """Shortest exact decimal representation of a float."""
    return repr(float(value))


def _parse_float(text: str, path, line_no: int, column: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise InputError(f"{path}: line {line_no}: bad numeric value "
                         f"{text!r} in column {column!r}") from None


def _read_rows(path, required: tuple):
    """CSV rows as dicts, with header validation and line numbers on errors."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"{path}: file not found")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        for col in required:
            if col not in header:
                raise InputError(f"{path}: missing required column {col!r}")
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise InputError(f"{path}: line {line_no}: expected "
                                 f"{len(header)} fields, got {len(row)}")
            rows.append((line_no, dict(zip(header, (c.strip() for c in row)))))
    if not rows:
        raise InputError(f"{path}: no data rows")
    return rows


def _parse_date(text: str, path, line_no: int) -> np.datetime64:
    try:
        return np.datetime64(text, "D")
    except ValueError:
        raise InputError(f"{path}: line {line_no}: bad ISO date {text!r}") from None


def read_forcing_csv(path) -> ForcingSeries:
    """Forcing input with header date,precip_mm,temp_c and ISO-8601 dates."""
    rows = _read_rows(path, required=("date", "precip_mm", "temp_c"))
    dates, precip, temp = [], [], []
    for line_no, row in rows:
        dates.append(_parse_date(row["date"], path, line_no))
        precip.append(_parse_float(row["precip_mm"], path, line_no, "precip_mm"))
        temp.append(_parse_float(row["temp_c"], path, line_no, "temp_c"))
    return ForcingSeries(dates=np.array(dates, dtype="datetime64[D]"),
                         precip=np.array(precip), temp=np.array(temp))


def write_forcing_csv(path, forcing: ForcingSeries) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", "precip_mm", "temp_c"])
        for d, p, t in zip(forcing.dates, forcing.precip, forcing.temp):
            writer.writerow([str(d), fmt(p), fmt(t)])


_COMPONENT_COLUMNS = tuple(
    [f"q_hyd_{i}_m3d" for i in (1, 2, 3)]
    + [f"q_is_{i}_m3d" for i in (1, 2, 3)]
    + [f"q_sec_{i}_m3d" for i in (1, 2, 3)]
    + ["q_b_m3d"]
)


def write_discharge_csv(path, series: DischargeSeries, components: bool = False) -> None:
    """Discharge output: date,q_total_m3d,q_total_ls plus optional components."""
    with_components = components and series.q_hyd is not None
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["date", "q_total_m3d", "q_total_ls"]
        if with_components:
            header += list(_COMPONENT_COLUMNS)
        writer.writerow(header)
        q_ls = series.q_total_ls
        for t in range(len(series)):
            row = [str(series.dates[t]), fmt(series.q_total[t]), fmt(q_ls[t])]
            if with_components:
                row += [fmt(series.q_hyd[t, i]) for i in range(3)]
                row += [fmt(series.q_is[t, i]) for i in range(3)]
                row += [fmt(series.q_sec[t, i]) for i in range(3)]
                row.append(fmt(series.q_b[t]))
            writer.writerow(row)


def read_discharge_csv(path):
    """Dates and total discharge [m3/d] from a discharge/observation CSV."""
    rows = _read_rows(path, required=("date", "q_total_m3d"))
    dates, q = [], []
    for line_no, row in rows:
        dates.append(_parse_date(row["date"], path, line_no))
        q.append(_parse_float(row["q_total_m3d"], path, line_no, "q_total_m3d"))
    return np.array(dates, dtype="datetime64[D]"), np.array(q)


def write_prior_table(path, prior: PriorSpec) -> None:
    """Aligned whitespace table with columns name, lb, ub, unit, scale."""
    rows = [("name", "lb", "ub", "unit", "scale")]
    for i in range(N_PARAMS):
        rows.append((prior.names[i], fmt(prior.lb[i]), fmt(prior.ub[i]),
                     prior.units[i], prior.scale[i]))
    widths = [max(len(r[c]) for r in rows) for c in range(5)]
    with open(path, "w") as fh:
        for r in rows:
            fh.write("  ".join(val.ljust(w) for val, w in zip(r, widths)).rstrip() + "\n")


def read_prior_table(path) -> PriorSpec:
    path = Path(path)
    if not path.exists():
        raise InputError(f"{path}: file not found")
    names, lb, ub, units, scale = [], [], [], [], []
    with open(path) as fh:
        lines = [ln.strip() for ln in fh]
    body = [ln for ln in lines if ln and not ln.startswith("#")]
    if not body or body[0].split() != ["name", "lb", "ub", "unit", "scale"]:
        raise InputError(f"{path}: expected header 'name lb ub unit scale'")
    for line_no, ln in enumerate(body[1:], start=2):
        parts = ln.split()
        if len(parts) != 5:
            raise InputError(f"{path}: line {line_no}: expected 5 fields")
        names.append(parts[0])
        lb.append(_parse_float(parts[1], path, line_no, "lb"))
        ub.append(_parse_float(parts[2], path, line_no, "ub"))
        units.append(parts[3])
        scale.append(parts[4])
    return PriorSpec(names=tuple(names), lb=np.array(lb), ub=np.array(ub),
                     units=tuple(units), scale=tuple(scale))


def write_calibration_csv(path, xs, extra: dict | None = None) -> None:
    """Coordinate batches with the 21 named columns, plus optional extras."""
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    extra = extra or {}
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(COORD_NAMES) + list(extra))
        for i in range(len(xs)):
            row = [fmt(v) for v in xs[i]]
            row += [fmt(extra[name][i]) for name in extra]
            writer.writerow(row)


def read_calibration_csv(path, extra: tuple = ()):
    rows = _read_rows(path, required=COORD_NAMES + tuple(extra))
    xs = np.empty((len(rows), N_PARAMS))
    extras = {name: np.empty(len(rows)) for name in extra}
    for i, (line_no, row) in enumerate(rows):
        for j, name in enumerate(COORD_NAMES):
            xs[i, j] = _parse_float(row[name], path, line_no, name)
        for name in extra:
            extras[name][i] = _parse_float(row[name], path, line_no, name)
    return (xs, extras) if extra else (xs, {})


def write_eigen_csv(path, decomp: SubspaceDecomposition) -> None:
    """Eigenvalues with bootstrap bands, one row per index."""
    lo = decomp.band_lo if decomp.band_lo is not None else decomp.eigenvalues
    hi = decomp.band_hi if decomp.band_hi is not None else decomp.eigenvalues
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "eigenvalue", "boot_lo", "boot_hi"])
        for i in range(decomp.n):
            writer.writerow([i + 1, fmt(decomp.eigenvalues[i]), fmt(lo[i]), fmt(hi[i])])


def read_eigen_csv(path):
    rows = _read_rows(path, required=("index", "eigenvalue", "boot_lo", "boot_hi"))
    vals = np.empty(len(rows))
    lo = np.empty(len(rows))
    hi = np.empty(len(rows))
    for i, (line_no, row) in enumerate(rows):
        vals[i] = _parse_float(row["eigenvalue"], path, line_no, "eigenvalue")
        lo[i] = _parse_float(row["boot_lo"], path, line_no, "boot_lo")
        hi[i] = _parse_float(row["boot_hi"], path, line_no, "boot_hi")
    return vals, lo, hi


def write_eigenvectors_csv(path, decomp: SubspaceDecomposition) -> None:
    """Full eigenvector matrix; rows are coordinates, columns w_1..w_n."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["coordinate"] + [f"w_{j + 1}" for j in range(decomp.n)])
        for i in range(decomp.n):
            writer.writerow([COORD_NAMES[i]] + [fmt(v) for v in decomp.vectors[i]])


def read_eigenvectors_csv(path) -> np.ndarray:
    rows = _read_rows(path, required=("coordinate",))
    n = len(rows)
    mat = np.empty((n, n))
    for i, (line_no, row) in enumerate(rows):
        for j in range(n):
            mat[i, j] = _parse_float(row[f"w_{j + 1}"], path, line_no, f"w_{j + 1}")
    return mat


def write_sensitivities_csv(path, names, normalized, raw) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["coordinate", "sensitivity", "raw"])
        for name, s, r in zip(names, normalized, raw):
            writer.writerow([name, fmt(s), fmt(r)])


def write_surrogate_csv(path, surrogate: PolySurrogate) -> None:
    """Coefficient table over the graded-lexicographic monomial basis."""
    k = surrogate.k
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"exp_y{j + 1}" for j in range(k)] + ["coefficient"])
        for exp, coeff in zip(surrogate.exponents, surrogate.coeffs):
            writer.writerow([str(e) for e in exp] + [fmt(coeff)])


def write_ensemble_csv(path, phys, ys) -> None:
    """Posterior ensemble: physical-parameter columns plus active coordinates."""
    phys = np.atleast_2d(np.asarray(phys, dtype=np.float64))
    ys = np.atleast_2d(np.asarray(ys, dtype=np.float64))
    k = ys.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(PHYS_NAMES) + [f"y_{j + 1}" for j in range(k)])
        for i in range(len(phys)):
            writer.writerow([fmt(v) for v in phys[i]] + [fmt(v) for v in ys[i]])


def read_ensemble_csv(path):
    rows = _read_rows(path, required=PHYS_NAMES)
    y_cols = []
    j = 1
    header = rows[0][1]
    while f"y_{j}" in header:
        y_cols.append(f"y_{j}")
        j += 1
    phys = np.empty((len(rows), N_PARAMS))
    ys = np.empty((len(rows), len(y_cols)))
    for i, (line_no, row) in enumerate(rows):
        for c, name in enumerate(PHYS_NAMES):
            phys[i, c] = _parse_float(row[name], path, line_no, name)
        for c, name in enumerate(y_cols):
            ys[i, c] = _parse_float(row[name], path, line_no, name)
    return phys, ys


def write_quantile_csv(path, dates, obs, lo95, hi95, median, lo, hi, mean) -> None:
    """Push-forward band table, one row per day."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", "obs", "lo95", "hi95",
                         "post_median", "post_lo", "post_hi", "post_mean"])
        for t in range(len(dates)):
            writer.writerow([str(dates[t]), fmt(obs[t]), fmt(lo95[t]), fmt(hi95[t]),
                             fmt(median[t]), fmt(lo[t]), fmt(hi[t]), fmt(mean[t])])


def read_quantile_csv(path):
    cols = ("obs", "lo95", "hi95", "post_median", "post_lo", "post_hi", "post_mean")
    rows = _read_rows(path, required=("date",) + cols)
    out = {name: np.empty(len(rows)) for name in cols}
    dates = []
    for i, (line_no, row) in enumerate(rows):
        dates.append(_parse_date(row["date"], path, line_no))
        for name in cols:
            out[name][i] = _parse_float(row[name], path, line_no, name)
    return np.array(dates, dtype="datetime64[D]"), out


def write_params_table(path, names, values) -> None:
    """Simple name,value CSV for physical parameters or truth records."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["name", "value"])
        for name, value in zip(names, values):
            writer.writerow([name, fmt(value)])


def read_params_table(path) -> dict:
    rows = _read_rows(path, required=("name", "value"))
    out = {}
    for line_no, row in rows:
        out[row["name"]] = _parse_float(row["value"], path, line_no, "value")
    return out


def read_config(path) -> dict:
    """Flat key = value file; '#' starts a comment, blank lines ignored."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"{path}: file not found")
    out = {}
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InputError(f"{path}: line {line_no}: expected key = value")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def write_diagnostics(path, payload: dict) -> None:
    """Deterministic JSON report (sorted keys, no timing data)."""
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def checksum(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(65536), b""):
            digest.update(block)
    return digest.hexdigest()
