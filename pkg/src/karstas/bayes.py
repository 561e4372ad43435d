"""Bayesian inversion in the active subspace.

Data misfit weighted by the observation-noise covariance, kernel density
estimation of the marginal prior on the active variable, random-walk
Metropolis-Hastings on the active variable with burn-in tuning,
autocorrelation-based effective sample size and thinning, conditional
sampling of the inactive variable inside the coordinate hypercube, lifting
to the full space, and posterior push-forward through the forward model.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.fft import next_fast_len, irfft, rfft
from scipy.linalg import solve_triangular
from scipy.optimize import linprog
from scipy.stats import gaussian_kde

from .errors import ChainError, InputError, ParameterError
from .lukars import CatchmentMeta, EffectiveInputSeries, initial_state, simulate
from .params import PriorSpec, to_physical
from .subspace import SubspaceDecomposition


@dataclass(frozen=True)
class ObservationSet:
    """Discharge observations with a diagonal relative-noise covariance.

    gamma_ii = (noise_rel * d_i)^2, floored at (noise_rel * 1% of the median
    discharge)^2 so that dry days cannot zero out the weight matrix.
    """

    values: np.ndarray
    noise_rel: float
    gamma: np.ndarray
    dates: np.ndarray | None = None

    @classmethod
    def from_values(cls, values, noise_rel: float, dates=None) -> "ObservationSet":
        values = np.asarray(values, dtype=np.float64)
        if noise_rel <= 0:
            raise ParameterError("relative noise level must be positive")
        if not np.all(np.isfinite(values)):
            raise InputError("non-finite observation values")
        floor = 0.01 * float(np.median(values))
        if floor <= 0:
            raise InputError("observations are non-positive almost everywhere")
        gamma = (noise_rel * np.maximum(values, floor)) ** 2
        return cls(values=values, noise_rel=noise_rel, gamma=gamma, dates=dates)

    def __len__(self) -> int:
        return len(self.values)


def data_misfit(x, obs: ObservationSet, simulator, warmup_days: int = 0) -> float:
    """Half squared residual norm weighted by the noise covariance.

    simulator maps a calibration vector to a simulated series aligned with
    the observations; the first warmup_days days are excluded. A failed or
    non-finite simulation yields +inf so callers can flag the sample.
    """
    sim = np.asarray(simulator(x), dtype=np.float64)
    if sim.shape != obs.values.shape:
        raise InputError("simulated and observed series lengths differ")
    if not np.all(np.isfinite(sim)):
        return float("inf")
    sl = slice(warmup_days, None)
    res = obs.values[sl] - sim[sl]
    return 0.5 * float(np.sum(res**2 / obs.gamma[sl]))


@dataclass(frozen=True)
class MisfitEvaluator:
    """Picklable forward-model misfit for gradient sweeps and MCMC checks."""

    prior: PriorSpec
    meta: CatchmentMeta
    eff: EffectiveInputSeries
    obs: ObservationSet
    warmup_days: int = 90

    def simulate_discharge(self, x) -> np.ndarray:
        params = to_physical(np.asarray(x, dtype=np.float64), self.prior)
        init = initial_state(params, self.meta, first_obs_m3d=float(self.obs.values[0]))
        return simulate(params, self.meta, self.eff, init).q_total

    def __call__(self, x) -> float:
        return data_misfit(x, self.obs, self.simulate_discharge,
                           warmup_days=self.warmup_days)


@njit(cache=True)
def _whitened_log_kernel_sum(z_refs, z):
    n = z_refs.shape[0]
    k = z_refs.shape[1]
    v = np.empty(n)
    for i in range(n):
        d = 0.0
        for j in range(k):
            t = z[j] - z_refs[i, j]
            d += t * t
        v[i] = -0.5 * d
    m = v.max()
    return m + np.log(np.sum(np.exp(v - m)))


@dataclass
class DensityEstimate:
    """Gaussian KDE of the marginal prior on the active variable.

    Wraps a scipy kernel density estimate; single-point evaluations used in
    the sampler hot loop run through a whitened-sample kernel sum that is
    numerically identical to the scipy path.
    """

    kde: gaussian_kde
    samples: np.ndarray  # (n, k) reference projections
    _z_refs: np.ndarray = field(repr=False, default=None)
    _l_inv: np.ndarray = field(repr=False, default=None)
    _log_norm: float = field(repr=False, default=0.0)

    def __post_init__(self):
        n, k = self.samples.shape
        chol = np.linalg.cholesky(self.kde.covariance)
        l_inv = solve_triangular(chol, np.eye(k), lower=True)
        self._z_refs = np.ascontiguousarray(self.samples @ l_inv.T)
        self._l_inv = l_inv
        self._log_norm = (-math.log(n) - 0.5 * k * math.log(2.0 * math.pi)
                          - float(np.sum(np.log(np.diag(chol)))))

    @property
    def k(self) -> int:
        return self.samples.shape[1]

    @property
    def bandwidths(self) -> np.ndarray:
        return np.sqrt(np.diag(self.kde.covariance))

    def logpdf_point(self, y) -> float:
        y = np.asarray(y, dtype=np.float64).reshape(self.k)
        z = self._l_inv @ y
        return float(_whitened_log_kernel_sum(self._z_refs, z)) + self._log_norm

    def logpdf(self, y) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(y, dtype=np.float64))
        return self.kde.logpdf(pts.T if pts.shape[1] == self.k else pts)

    def __call__(self, y):
        pts = np.atleast_2d(np.asarray(y, dtype=np.float64))
        out = self.kde(pts.T if pts.shape[1] == self.k else pts)
        return out if out.size > 1 else float(out[0])


def estimate_marginal_prior(w1, n_samples: int = 100_000, seed: int = 0,
                            bw_method: str = "silverman") -> DensityEstimate:
    """KDE of W1^T X for X uniform on [-1,1]^n; known only up to scale
    matters downstream, but the estimate is properly normalized anyway."""
    w1 = np.asarray(w1, dtype=np.float64)
    if n_samples < 10_000:
        raise ParameterError("marginal prior estimation needs >= 10000 draws")
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1.0, 1.0, size=(n_samples, w1.shape[0]))
    y = x @ w1
    kde = gaussian_kde(y.T, bw_method=bw_method)
    return DensityEstimate(kde=kde, samples=y)


@dataclass
class MarkovChain:
    """Random-walk chain on the active variable; states after each step."""

    states: np.ndarray
    burn_in: int
    proposal_std: float
    accepted: int

    @property
    def post_burn_in(self) -> np.ndarray:
        return self.states[self.burn_in:]

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / max(1, len(self.states) - self.burn_in)

    def __len__(self) -> int:
        return len(self.states)


def _neg_log_like(surrogate):
    return surrogate.evaluate if hasattr(surrogate, "evaluate") else surrogate


def _log_density_fn(prior):
    if isinstance(prior, DensityEstimate):
        return prior.logpdf_point

    def log_rho(y):
        v = float(prior(y))
        return math.log(v) if v > 0 else float("-inf")

    return log_rho


def mh_active(surrogate, prior, n_steps: int, burn_in: int,
              proposal_std: float | None = None, tune: bool = True,
              seed: int = 0, y0=None) -> MarkovChain:
    """Metropolis-Hastings with a symmetric Gaussian random walk.

    The target is exp(-surrogate(y)) * prior(y). With tune=True the proposal
    standard deviation is adapted in windows during burn-in toward a 20-50%
    acceptance rate and frozen afterwards; reported acceptance counts only
    post-burn-in proposals. Reproducible per seed.
    """
    if not 0 <= burn_in < n_steps:
        raise ChainError("need 0 <= burn_in < n_steps")
    g_fn = _neg_log_like(surrogate)
    log_rho = _log_density_fn(prior)

    if y0 is None:
        if isinstance(prior, DensityEstimate):
            y0 = np.median(prior.samples, axis=0)
        else:
            raise ChainError("y0 is required when the prior is a bare callable")
    y = np.asarray(y0, dtype=np.float64).copy()
    k = y.shape[0]
    log_rho_y = log_rho(y)
    if not np.isfinite(log_rho_y):
        raise ChainError("start point has zero prior density; pick another y0")
    log_post_y = -float(g_fn(y)) + log_rho_y

    std = float(proposal_std) if proposal_std is not None else 0.1
    rng = np.random.default_rng(seed)
    kicks = rng.standard_normal(size=(n_steps, k))
    uniforms = 1.0 - rng.random(n_steps)  # in (0, 1]

    states = np.empty((n_steps, k))
    accepted_post = 0
    window, accepted_window = 200, 0
    for i in range(n_steps):
        y_prop = y + std * kicks[i]
        log_rho_prop = log_rho(y_prop)
        if np.isfinite(log_rho_prop):
            log_post_prop = -float(g_fn(y_prop)) + log_rho_prop
            accept = math.log(uniforms[i]) <= log_post_prop - log_post_y
        else:
            accept = False
        if accept:
            y = y_prop
            log_post_y = log_post_prop
            if i >= burn_in:
                accepted_post += 1
            else:
                accepted_window += 1
        states[i] = y
        if tune and i < burn_in and (i + 1) % window == 0:
            rate = accepted_window / window
            if rate < 0.2:
                std *= 0.8
            elif rate > 0.5:
                std *= 1.25
            accepted_window = 0
    return MarkovChain(states=states, burn_in=burn_in, proposal_std=std,
                       accepted=accepted_post)


def _autocorr(x: np.ndarray) -> np.ndarray:
    """Biased normalized autocorrelation via FFT; rho[0] == 1."""
    n = len(x)
    x = x - x.mean()
    nf = next_fast_len(2 * n)
    f = rfft(x, nf)
    ac = irfft(f * np.conj(f), nf)[:n]
    return ac / ac[0]


def effective_sample_size(chain, cutoff: float = 0.05,
                          max_lag_factor: int = 50) -> float:
    """Minimum per-component ESS: N / (1 + 2 sum of leading autocorrelations).

    The autocorrelation sum runs to the first lag below the cutoff, capped
    at chain length / max_lag_factor. Degenerate (constant) components count
    as fully correlated up to the cap.
    """
    states = chain.post_burn_in if isinstance(chain, MarkovChain) else np.asarray(chain)
    if states.ndim == 1:
        states = states[:, None]
    n = len(states)
    if n < 100:
        raise ChainError("need at least 100 states for an ESS estimate")
    cap = max(1, n // max_lag_factor)
    ess_min = float("inf")
    for col in states.T:
        if np.var(col) <= 1e-300:
            rho_sum = float(cap)  # constant component: rho_j == 1 throughout
        else:
            rho = _autocorr(col)
            below = np.nonzero(rho[1:cap + 1] < cutoff)[0]
            j_max = int(below[0]) + 1 if len(below) else cap
            rho_sum = float(np.sum(rho[1:j_max + 1]))
        ess = n / (1.0 + 2.0 * rho_sum)
        ess_min = min(ess_min, min(float(n), max(1.0, ess)))
    return ess_min


def thin(chain, target: int) -> np.ndarray:
    """Every p-th post-burn-in state, p chosen to leave roughly target states."""
    states = chain.post_burn_in if isinstance(chain, MarkovChain) else np.asarray(chain)
    avail = len(states)
    if target < 1:
        raise ChainError("thinning target must be positive")
    if target > avail:
        raise ChainError(f"thinning target {target} exceeds the {avail} available states")
    stride = max(1, avail // target)
    return states[::stride]


def lift(y, z, decomp: SubspaceDecomposition) -> np.ndarray:
    """Recompose x = W1 y + W2 z; callers must keep x inside the hypercube."""
    y = np.asarray(y, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if y.shape != (decomp.k,) or z.shape != (decomp.n - decomp.k,):
        raise ParameterError("active/inactive dimensions do not match the split")
    x = decomp.w1 @ y + decomp.w2 @ z
    overshoot = float(np.max(np.abs(x))) - 1.0
    if overshoot > 1e-9:
        raise ParameterError(f"lifted point leaves the hypercube by {overshoot:.2e}")
    return x


def _feasible_inactive_start(base: np.ndarray, w2: np.ndarray) -> np.ndarray:
    """A z with W1 y + W2 z inside the hypercube, via a Chebyshev-style LP."""
    if np.max(np.abs(base)) <= 1.0:
        return np.zeros(w2.shape[1])
    n, n_inactive = w2.shape
    c = np.zeros(n_inactive + 1)
    c[-1] = 1.0
    a_ub = np.block([[w2, -np.ones((n, 1))], [-w2, -np.ones((n, 1))]])
    b_ub = np.concatenate([-base, base])
    res = linprog(c, A_ub=a_ub, b_ub=b_ub,
                  bounds=[(None, None)] * n_inactive + [(0.0, None)],
                  method="highs")
    if not res.success or res.x[-1] > 1.0 + 1e-9:
        raise ParameterError("no admissible inactive variable for this active point")
    return res.x[:-1]


def sample_inactive(y, decomp: SubspaceDecomposition, n_z: int = 1, seed=0,
                    warm_steps: int = 500, stride: int = 10,
                    proposal_std: float = 0.1) -> np.ndarray:
    """Conditional-prior draws of the inactive variable given an active point.

    Random-walk Metropolis on z with the hypercube indicator as target (the
    conditional of a uniform prior), warm-started from a feasibility solve,
    tuned during warm-up, and internally thinned. Shape (n_z, n-k).
    """
    y = np.asarray(y, dtype=np.float64)
    base = decomp.w1 @ y
    z = _feasible_inactive_start(base, decomp.w2)
    rng = np.random.default_rng(seed)
    n_inactive = decomp.n - decomp.k
    std = proposal_std

    accepted_window = 0
    window = 50
    for i in range(warm_steps):
        z_prop = z + std * rng.standard_normal(n_inactive)
        if np.max(np.abs(base + decomp.w2 @ z_prop)) <= 1.0:
            z = z_prop
            accepted_window += 1
        if (i + 1) % window == 0:
            rate = accepted_window / window
            if rate < 0.2:
                std *= 0.7
            elif rate > 0.5:
                std *= 1.3
            accepted_window = 0

    out = np.empty((n_z, n_inactive))
    for j in range(n_z):
        for _ in range(stride):
            z_prop = z + std * rng.standard_normal(n_inactive)
            if np.max(np.abs(base + decomp.w2 @ z_prop)) <= 1.0:
                z = z_prop
        out[j] = z
    return out


@dataclass(frozen=True)
class PosteriorEnsemble:
    """Full-space posterior samples with their subspace provenance."""

    x: np.ndarray  # (m, n) calibration vectors
    y: np.ndarray  # (m, k) active coordinates
    z: np.ndarray  # (m, n-k) inactive coordinates
    ess: float
    stride: int

    def __post_init__(self):
        if np.max(np.abs(self.x)) > 1.0 + 1e-9:
            raise ParameterError("ensemble contains points outside the hypercube")

    def __len__(self) -> int:
        return len(self.x)


_INACTIVE_CTX: dict = {}


def _init_inactive_worker(decomp, n_z, warm_steps, stride, proposal_std):
    _INACTIVE_CTX.update(decomp=decomp, n_z=n_z, warm_steps=warm_steps,
                         stride=stride, proposal_std=proposal_std)


def _inactive_task(args):
    y, seed = args
    c = _INACTIVE_CTX
    return sample_inactive(y, c["decomp"], n_z=c["n_z"], seed=seed,
                           warm_steps=c["warm_steps"], stride=c["stride"],
                           proposal_std=c["proposal_std"])


def build_ensemble(active_states, decomp: SubspaceDecomposition, ess: float,
                   stride: int, seed: int = 0, n_z: int = 1,
                   warm_steps: int = 500, z_stride: int = 10,
                   proposal_std: float = 0.1, workers: int = 1) -> PosteriorEnsemble:
    """Pair every retained active sample with inactive-variable draws and lift.

    Each active point gets an independent conditional chain with its own
    seed spawned from the root seed, so results do not depend on the worker
    count.
    """
    active_states = np.atleast_2d(np.asarray(active_states, dtype=np.float64))
    seeds = [int(s.generate_state(1)[0])
             for s in np.random.SeedSequence(seed).spawn(len(active_states))]
    tasks = list(zip(active_states, seeds))
    if workers > 1:
        with ProcessPoolExecutor(
                max_workers=workers, initializer=_init_inactive_worker,
                initargs=(decomp, n_z, warm_steps, z_stride, proposal_std)) as pool:
            chunk = max(1, len(tasks) // (8 * workers))
            z_blocks = list(pool.map(_inactive_task, tasks, chunksize=chunk))
    else:
        _init_inactive_worker(decomp, n_z, warm_steps, z_stride, proposal_std)
        z_blocks = [_inactive_task(t) for t in tasks]

    ys, zs, xs = [], [], []
    for y, z_block in zip(active_states, z_blocks):
        for z in z_block:
            xs.append(lift(y, z, decomp))
            ys.append(y)
            zs.append(z)
    return PosteriorEnsemble(x=np.array(xs), y=np.array(ys), z=np.array(zs),
                             ess=ess, stride=stride)


@dataclass(frozen=True)
class PushForwardSummary:
    """Per-day quantile bands of the posterior push-forward."""

    median: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    mean: np.ndarray
    quantiles: tuple
    n_used: int
    n_failed: int


_PUSH_CTX: dict = {}


def _init_push_worker(simulator):
    _PUSH_CTX["simulator"] = simulator


def _push_task(x):
    try:
        sim = np.asarray(_PUSH_CTX["simulator"](x), dtype=np.float64)
        return sim if np.all(np.isfinite(sim)) else None
    except Exception:
        return None


def push_forward(xs, simulator, quantiles: tuple = (0.125, 0.875),
                 max_samples: int | None = None, seed: int = 0,
                 workers: int = 1) -> PushForwardSummary:
    """Simulate an ensemble and summarize per-day discharge quantiles.

    Failing simulations are skipped and counted. With max_samples set, a
    seeded subsample of the ensemble is used.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    if len(xs) == 0:
        raise InputError("push-forward needs a non-empty ensemble")
    lo_q, hi_q = quantiles
    if not 0.0 < lo_q < hi_q < 1.0:
        raise ParameterError("quantiles must satisfy 0 < lo < hi < 1")
    if max_samples is not None and max_samples < len(xs):
        idx = np.random.default_rng(seed).choice(len(xs), size=max_samples,
                                                 replace=False)
        xs = xs[np.sort(idx)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers,
                                 initializer=_init_push_worker,
                                 initargs=(simulator,)) as pool:
            chunk = max(1, len(xs) // (8 * workers))
            sims = list(pool.map(_push_task, xs, chunksize=chunk))
    else:
        _init_push_worker(simulator)
        sims = [_push_task(x) for x in xs]
    good = [s for s in sims if s is not None]
    n_failed = len(sims) - len(good)
    if not good:
        raise InputError("every push-forward simulation failed")
    stack = np.stack(good)
    return PushForwardSummary(
        median=np.median(stack, axis=0),
        lo=np.quantile(stack, lo_q, axis=0),
        hi=np.quantile(stack, hi_q, axis=0),
        mean=stack.mean(axis=0),
        quantiles=(lo_q, hi_q),
        n_used=len(good),
        n_failed=n_failed,
    )
