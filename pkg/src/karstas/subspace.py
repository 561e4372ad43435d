"""Active-subspace estimation for a scalar objective on [-1,1]^n.

Monte Carlo estimate of the averaged gradient outer-product matrix, its
eigendecomposition with bootstrap variability bands, per-coordinate global
sensitivity scores, and a low-dimensional polynomial response surface.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from itertools import product

import numpy as np

from .errors import EvaluationError, InputError, ParameterError


@dataclass(frozen=True)
class GradientSample:
    """Objective value and finite-difference gradient at one prior draw."""

    x: np.ndarray
    f: float
    g: np.ndarray


@dataclass(frozen=True)
class SubspaceDecomposition:
    """Sorted eigendecomposition of the gradient outer-product estimate."""

    eigenvalues: np.ndarray  # descending, length n
    vectors: np.ndarray  # orthonormal columns, (n, n)
    k: int  # active/inactive split index
    band_lo: np.ndarray | None = None  # bootstrap minima per eigenvalue
    band_hi: np.ndarray | None = None

    def __post_init__(self):
        n = len(self.eigenvalues)
        if not 0 < self.k < n:
            raise ParameterError(f"split index must satisfy 0 < k < {n}")
        if np.any(np.diff(self.eigenvalues) > 0):
            raise ParameterError("eigenvalues must be sorted in decreasing order")
        gram_err = np.max(np.abs(self.vectors.T @ self.vectors - np.eye(n)))
        if gram_err > 1e-10:
            raise ParameterError(f"eigenvectors not orthonormal (error {gram_err:.2e})")

    @property
    def n(self) -> int:
        return len(self.eigenvalues)

    @property
    def w1(self) -> np.ndarray:
        """Active directions, (n, k)."""
        return self.vectors[:, :self.k]

    @property
    def w2(self) -> np.ndarray:
        """Inactive directions, (n, n-k)."""
        return self.vectors[:, self.k:]


def recommended_sample_count(beta: float, m: int, n: float) -> int:
    """Heuristic gradient-sample count ceil(beta * m * log(n)).

    beta is a sampling factor normally taken from [2, 10]; m is the number
    of leading eigenpairs that must come out accurate.
    """
    if m < 0:
        raise ParameterError("m must be non-negative")
    if m == 0:
        return 0
    if not 2.0 <= beta <= 10.0:
        warnings.warn(f"sampling factor {beta} outside the usual [2, 10] range",
                      stacklevel=2)
    return math.ceil(beta * m * math.log(n))


def misfit_gradient(x, misfit, h: float = 1e-4) -> GradientSample:
    """Central-difference gradient with exactly 2n+1 objective evaluations.

    Coordinates closer than h to the domain boundary use a one-sided
    second-order stencil that reuses the center value, so the evaluation
    count stays 2n+1. Non-finite objective values raise EvaluationError.
    """
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    f0 = float(misfit(x))
    if not np.isfinite(f0):
        raise EvaluationError("non-finite objective at the sample point")
    g = np.zeros(n)
    for j in range(n):
        step = np.zeros(n)
        step[j] = h
        if x[j] + h > 1.0:
            f1 = float(misfit(x - step))
            f2 = float(misfit(x - 2.0 * step))
            g[j] = (3.0 * f0 - 4.0 * f1 + f2) / (2.0 * h)
        elif x[j] - h < -1.0:
            f1 = float(misfit(x + step))
            f2 = float(misfit(x + 2.0 * step))
            g[j] = (-3.0 * f0 + 4.0 * f1 - f2) / (2.0 * h)
        else:
            f_plus = float(misfit(x + step))
            f_minus = float(misfit(x - step))
            g[j] = (f_plus - f_minus) / (2.0 * h)
        if not np.isfinite(g[j]):
            raise EvaluationError(f"non-finite gradient component {j}")
    return GradientSample(x=x, f=f0, g=g)


_SWEEP_CTX: dict = {}


def _init_sweep_worker(misfit, h):
    _SWEEP_CTX["misfit"] = misfit
    _SWEEP_CTX["h"] = h


def _sweep_task(x):
    try:
        return misfit_gradient(x, _SWEEP_CTX["misfit"], _SWEEP_CTX["h"])
    except EvaluationError:
        return None


def gradient_sweep(misfit, xs, h: float = 1e-4, workers: int = 1,
                   max_failure_rate: float = 0.01):
    """Evaluate misfit_gradient over a batch of points, optionally in parallel.

    Results keep the input order regardless of worker count. Failed samples
    (non-finite objective) are dropped; more than max_failure_rate failures
    abort the sweep.

    Returns:
        (samples, n_evaluations, n_failed) where n_evaluations counts the
        objective calls of the completed samples: len(samples) * (2n + 1).
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    n = xs.shape[1]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers,
                                 initializer=_init_sweep_worker,
                                 initargs=(misfit, h)) as pool:
            chunk = max(1, len(xs) // (8 * workers))
            raw = list(pool.map(_sweep_task, xs, chunksize=chunk))
    else:
        _init_sweep_worker(misfit, h)
        raw = [_sweep_task(x) for x in xs]
    samples = [s for s in raw if s is not None]
    n_failed = len(raw) - len(samples)
    if len(xs) > 0 and n_failed / len(xs) > max_failure_rate:
        raise EvaluationError(
            f"{n_failed}/{len(xs)} gradient samples failed "
            f"(limit {max_failure_rate:.0%}); aborting")
    return samples, len(samples) * (2 * n + 1), n_failed


def estimate_c_matrix(samples) -> np.ndarray:
    """Monte Carlo estimate (1/N) sum g g^T of the gradient outer product."""
    if len(samples) == 0:
        raise InputError("cannot estimate the gradient outer product without samples")
    grads = np.stack([s.g if isinstance(s, GradientSample) else np.asarray(s)
                      for s in samples])
    c = grads.T @ grads / len(grads)
    return (c + c.T) / 2.0


def _sorted_eigh(c: np.ndarray):
    vals, vecs = np.linalg.eigh(c)
    vals = vals[::-1]
    vecs = vecs[:, ::-1]
    # sign convention: the largest-magnitude component of each vector is positive
    for j in range(vecs.shape[1]):
        i = int(np.argmax(np.abs(vecs[:, j])))
        if vecs[i, j] < 0:
            vecs[:, j] = -vecs[:, j]
    return vals, np.ascontiguousarray(vecs)


def decompose(c_matrix, k: int) -> SubspaceDecomposition:
    """Sorted, sign-fixed eigendecomposition split after the k-th column."""
    c = np.asarray(c_matrix, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise InputError("expected a square matrix")
    asym = np.max(np.abs(c - c.T))
    if asym > 1e-8 * max(1.0, float(np.max(np.abs(c)))):
        raise InputError(f"matrix is not symmetric (asymmetry {asym:.2e})")
    vals, vecs = _sorted_eigh((c + c.T) / 2.0)
    return SubspaceDecomposition(eigenvalues=vals, vectors=vecs, k=k)


def bootstrap_bands(samples, n_replicates: int = 500, seed: int = 0):
    """Min/max eigenvalues over bootstrap resamples of the gradient set.

    The point estimate is included, so the bands always contain it.
    """
    if n_replicates < 100:
        raise InputError("bootstrap needs at least 100 replicates")
    grads = np.stack([s.g if isinstance(s, GradientSample) else np.asarray(s)
                      for s in samples])
    n_samples = len(grads)
    point = np.linalg.eigvalsh(grads.T @ grads / n_samples)[::-1]
    lo = point.copy()
    hi = point.copy()
    rng = np.random.default_rng(seed)
    for _ in range(n_replicates):
        idx = rng.integers(0, n_samples, size=n_samples)
        gb = grads[idx]
        vals = np.linalg.eigvalsh(gb.T @ gb / n_samples)[::-1]
        np.minimum(lo, vals, out=lo)
        np.maximum(hi, vals, out=hi)
    return lo, hi


def global_sensitivities(eigenvalues, vectors, m: int | None = None,
                         normalize: bool = True) -> np.ndarray:
    """Per-coordinate activity scores s_i = sum_j lambda_j w_ij^2 over j <= m.

    With normalize=True the scores are scaled by their maximum into [0, 1];
    an all-zero spectrum is returned unscaled.
    """
    eigenvalues = np.asarray(eigenvalues, dtype=np.float64)
    vectors = np.asarray(vectors, dtype=np.float64)
    n = len(eigenvalues)
    if m is None:
        m = n
    if not 0 < m <= n:
        raise ParameterError(f"m must be in (0, {n}]")
    s = (vectors[:, :m] ** 2) @ eigenvalues[:m]
    if normalize:
        top = s.max()
        if top > 0:
            s = s / top
    return s


def monomial_exponents(k: int, degree: int) -> list[tuple[int, ...]]:
    """All exponent tuples with total degree <= degree, graded lexicographic."""
    exps = [e for e in product(range(degree + 1), repeat=k) if sum(e) <= degree]
    exps.sort(key=lambda e: (sum(e), e))
    return exps


def _design_matrix(y: np.ndarray, exp_arr: np.ndarray) -> np.ndarray:
    """Monomial features of y (m, k) for integer exponent rows (t, k).

    Built from per-dimension power tables so each input column is raised to
    a power only degree+1 times regardless of the number of monomials.
    """
    degree = int(exp_arr.max())
    phi = np.ones((y.shape[0], exp_arr.shape[0]))
    for d in range(y.shape[1]):
        table = y[:, d][:, None] ** np.arange(degree + 1)
        phi *= table[:, exp_arr[:, d]]
    return phi


def _r_squared(targets: np.ndarray, predictions: np.ndarray) -> float:
    ss_tot = float(np.sum((targets - targets.mean()) ** 2))
    if ss_tot == 0.0:
        return 1.0  # any constant fit reproduces a constant target
    ss_res = float(np.sum((targets - predictions) ** 2))
    return 1.0 - ss_res / ss_tot


@dataclass(frozen=True)
class PolySurrogate:
    """Least-squares polynomial response surface on the active variable."""

    w1: np.ndarray  # (n, k) projection onto the active subspace
    degree: int
    exponents: tuple
    coeffs: np.ndarray
    r2: float
    r2_holdout: float

    def __post_init__(self):
        object.__setattr__(self, "_exp_arr", np.asarray(self.exponents, dtype=np.int64))

    @property
    def k(self) -> int:
        return self.w1.shape[1]

    def evaluate(self, y):
        """Polynomial value at active-variable points, shape (..., k)."""
        y = np.atleast_2d(np.asarray(y, dtype=np.float64))
        out = _design_matrix(y, self._exp_arr) @ self.coeffs
        return out if out.size > 1 else float(out[0])

    def evaluate_full(self, x):
        """Ridge evaluation at full-space points: poly(W1^T x)."""
        x = np.asarray(x, dtype=np.float64)
        return self.evaluate(x @ self.w1)

    __call__ = evaluate


def fit_response_surface(xs, fs, w1, degree: int, holdout_fraction: float = 0.2,
                         seed: int = 0) -> PolySurrogate:
    """Fit a total-degree polynomial in the projected coordinates y = W1^T x.

    A random holdout split (default 20%) yields a generalization r2 from a
    fit on the remaining points; the returned coefficients are then refit on
    all samples, whose r2 is reported as in-sample. Requires at least twice
    as many samples as coefficients.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    fs = np.asarray(fs, dtype=np.float64)
    w1 = np.asarray(w1, dtype=np.float64)
    if degree < 1:
        raise ParameterError("polynomial degree must be >= 1")
    exponents = tuple(monomial_exponents(w1.shape[1], degree))
    n_coeff = len(exponents)
    if len(fs) < 2 * n_coeff:
        raise ParameterError(
            f"need at least {2 * n_coeff} samples for {n_coeff} coefficients, "
            f"got {len(fs)}")
    y = xs @ w1
    phi = _design_matrix(y, np.asarray(exponents, dtype=np.int64))

    rng = np.random.default_rng(seed)
    order = rng.permutation(len(fs))
    n_hold = int(round(holdout_fraction * len(fs)))
    hold, train = order[:n_hold], order[n_hold:]

    coeff_train, _, rank, _ = np.linalg.lstsq(phi[train], fs[train], rcond=None)
    if rank < n_coeff:
        raise ParameterError(
            f"design matrix is rank deficient (rank {rank} < {n_coeff} "
            f"coefficients); add samples or lower the degree")
    r2_holdout = (_r_squared(fs[hold], phi[hold] @ coeff_train)
                  if n_hold > 0 else float("nan"))

    coeffs, _, rank, _ = np.linalg.lstsq(phi, fs, rcond=None)
    if rank < n_coeff:
        raise ParameterError(
            f"design matrix is rank deficient (rank {rank} < {n_coeff} coefficients)")
    r2 = _r_squared(fs, phi @ coeffs)
    return PolySurrogate(w1=w1, degree=degree, exponents=exponents,
                         coeffs=coeffs, r2=r2, r2_holdout=r2_holdout)
