"""End-to-end pipeline stages behind the CLI.

Every stage reads plain-text inputs, writes CSV artifacts plus PNG figures
into one output directory, and appends a section to diagnostics.json. All
randomness derives from one root seed through fixed per-stage codes, so
re-running a stage with the same configuration reproduces its artifacts
byte for byte, and a staged run equals an all-in-one run. Wall-clock
timings are kept out of the artifacts on purpose; they go to the log.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import dataio, figures
from .bayes import (MisfitEvaluator, ObservationSet, build_ensemble,
                    effective_sample_size, estimate_marginal_prior, mh_active,
                    push_forward, thin)
from .errors import ConfigError, InputError
from .lukars import (CatchmentMeta, DischargeSeries, EffectiveInputSeries,
                     ForcingConfig, ForcingSeries, ModelState, initial_state,
                     nse, preprocess_forcing, simulate)
from .params import (COORD_NAMES, N_PARAMS, PHYS_NAMES, PhysicalParams,
                     PriorSpec, default_prior, sample_prior, to_physical,
                     transform_to_physical)
from .subspace import (SubspaceDecomposition, bootstrap_bands, decompose,
                       estimate_c_matrix, fit_response_surface,
                       global_sensitivities, gradient_sweep)

log = logging.getLogger("karstas")

STAGE_CODES = {
    "synthetic": 11,
    "gradients": 21,
    "bootstrap": 22,
    "surrogate_extra": 31,
    "surrogate_split": 32,
    "kde": 41,
    "chain": 51,
    "inactive": 61,
    "pushforward": 71,
}

UNIFORM_STD = 1.0 / np.sqrt(3.0)  # std of U(-1, 1) per coordinate

# truth coordinates of the bundled synthetic twin; chosen once so storages
# idle between the quickflow thresholds and storms trigger hysteresis cycles
DEFAULT_TRUTH_X = np.array([
    0.65, -0.50, 0.70, -0.10, 0.70, -0.28, 0.00,
    0.76, -0.50, 0.00, 0.33, 0.86, -0.05, -0.56,
    0.35, -0.56, -0.40, 0.00, 0.90, -0.23, -0.23,
])

SYNTHETIC_EB0_MM = 100.0  # baseflow storage at the start of a twin run


def stage_seed(root_seed: int, stage: str) -> int:
    """Deterministic per-stage seed derived from the root seed."""
    code = STAGE_CODES[stage]
    return int(np.random.SeedSequence([root_seed, code]).generate_state(1)[0])


@dataclass
class RunLedger:
    """Bookkeeping of forward evaluations, timings, seeds and artifacts."""

    evaluations: dict = field(default_factory=dict)
    seconds: dict = field(default_factory=dict)
    seeds: dict = field(default_factory=dict)
    checksums: dict = field(default_factory=dict)

    def count(self, stage: str, n: int) -> None:
        self.evaluations[stage] = self.evaluations.get(stage, 0) + int(n)

    @contextmanager
    def timed(self, stage: str):
        start = time.perf_counter()
        try:
            yield
        finally:
            elapsed = time.perf_counter() - start
            self.seconds[stage] = self.seconds.get(stage, 0.0) + elapsed
            log.info("stage %s took %.2f s", stage, elapsed)

    def seed(self, stage: str, value: int) -> None:
        self.seeds[stage] = int(value)

    def artifact(self, path) -> None:
        path = Path(path)
        self.checksums[path.name] = dataio.checksum(path)


@dataclass
class PipelineConfig:
    """Flat run configuration; file keys and CLI flags share these names."""

    # paths
    forcing: str | None = None
    observations: str | None = None
    prior: str | None = None
    params: str | None = None
    ensemble: str | None = None
    truth_discharge: str | None = None
    outdir: str = "out"
    # forcing preprocessing
    c_m: float = 2.5
    t0: float = 0.0
    interception_mm: float = 0.7
    pet_method: str = "thornthwaite"
    warmup_days: int = 90
    # catchment geometry
    a_1: float = 325_000.0
    a_2: float = 1_400_000.0
    a_3: float = 675_000.0
    area_total: float = 2_500_000.0
    l_hyd_1: float = 1000.0
    l_hyd_2: float = 1000.0
    l_hyd_3: float = 1000.0
    k_b: float = 0.01
    # inversion configuration
    noise: float = 0.05
    gradient_samples: int = 1000
    fd_step: float = 1e-4
    subspace_dim: int = 4
    surrogate_degree: int = 4
    surrogate_extra_samples: int = 0
    bootstrap_replicates: int = 500
    kde_samples: int = 100_000
    chain_steps: int = 100_000
    burn_in: int = 10_000
    proposal_std: float | None = None  # None = auto-tuned during burn-in
    thin_target: int = 0  # 0 = thin to the effective sample size
    n_z: int = 1
    z_warm_steps: int = 500
    z_stride: int = 10
    z_proposal_std: float = 0.1
    pushforward_samples: int = 1000
    quantile_lo: float = 0.125
    quantile_hi: float = 0.875
    # synthetic twin
    years: int = 3
    truth_coords: str | None = None
    # run control
    seed: int = 0
    workers: int = 1
    write_figures: bool = True
    components: bool = False

    def __post_init__(self):
        if self.noise <= 0:
            raise ConfigError("noise must be positive")
        if not 0 < self.subspace_dim < N_PARAMS:
            raise ConfigError(f"subspace_dim must be in (0, {N_PARAMS})")
        if self.burn_in >= self.chain_steps:
            raise ConfigError("burn_in must be smaller than chain_steps")
        for name in ("gradient_samples", "chain_steps", "kde_samples",
                     "bootstrap_replicates", "surrogate_degree", "n_z",
                     "pushforward_samples", "years", "workers"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if not 0.0 < self.quantile_lo < self.quantile_hi < 1.0:
            raise ConfigError("quantiles must satisfy 0 < lo < hi < 1")
        if self.fd_step <= 0 or self.fd_step >= 1:
            raise ConfigError("fd_step must lie in (0, 1)")

    @property
    def forcing_config(self) -> ForcingConfig:
        return ForcingConfig(c_m=self.c_m, t0=self.t0,
                             interception_mm=self.interception_mm,
                             pet_method=self.pet_method,
                             warmup_days=self.warmup_days)

    @property
    def catchment(self) -> CatchmentMeta:
        return CatchmentMeta(areas=np.array([self.a_1, self.a_2, self.a_3]),
                             area_total=self.area_total,
                             l_hyd=np.array([self.l_hyd_1, self.l_hyd_2, self.l_hyd_3]),
                             k_b=self.k_b)


_BOOL_VALUES = {"true": True, "1": True, "yes": True,
                "false": False, "0": False, "no": False}


def config_from_sources(config_file=None, overrides: dict | None = None) -> PipelineConfig:
    """Build a PipelineConfig from an optional key=value file plus overrides."""
    raw: dict = {}
    if config_file is not None:
        raw.update(dataio.read_config(config_file))
    for key, value in (overrides or {}).items():
        if value is not None:
            raw[key] = value
    known = {f.name: f for f in fields(PipelineConfig)}
    parsed = {}
    for key, value in raw.items():
        if key not in known:
            raise ConfigError(f"unknown configuration key {key!r}")
        parsed[key] = _coerce(key, value, known[key].type)
    try:
        return PipelineConfig(**parsed)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def _coerce(key: str, value, type_hint: str):
    if not isinstance(value, str):
        return value
    text = value.strip()
    if key == "proposal_std":
        return None if text.lower() == "auto" else float(text)
    if "bool" in type_hint:
        try:
            return _BOOL_VALUES[text.lower()]
        except KeyError:
            raise ConfigError(f"{key}: expected a boolean, got {text!r}") from None
    if "int" in type_hint:
        try:
            return int(text)
        except ValueError:
            raise ConfigError(f"{key}: expected an integer, got {text!r}") from None
    if "float" in type_hint:
        try:
            return float(text)
        except ValueError:
            raise ConfigError(f"{key}: expected a number, got {text!r}") from None
    return text


def _outdir(cfg: PipelineConfig) -> Path:
    path = Path(cfg.outdir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _update_diagnostics(outdir: Path, section: str, payload: dict) -> None:
    path = outdir / "diagnostics.json"
    existing = {}
    if path.exists():
        with open(path) as fh:
            existing = json.load(fh)
    existing[section] = payload
    dataio.write_diagnostics(path, existing)


def _load_prior(cfg: PipelineConfig) -> PriorSpec:
    return dataio.read_prior_table(cfg.prior) if cfg.prior else default_prior()


def _load_observations(cfg: PipelineConfig) -> ObservationSet:
    if not cfg.observations:
        raise ConfigError("an observations CSV is required for this stage")
    dates, q = dataio.read_discharge_csv(cfg.observations)
    return ObservationSet.from_values(q, noise_rel=cfg.noise, dates=dates)


def _build_evaluator(cfg: PipelineConfig):
    if not cfg.forcing:
        raise ConfigError("a forcing CSV is required for this stage")
    forcing = dataio.read_forcing_csv(cfg.forcing)
    eff = preprocess_forcing(forcing, cfg.forcing_config)
    obs = _load_observations(cfg)
    if len(obs) != len(forcing):
        raise InputError("forcing and observations cover different day counts")
    prior = _load_prior(cfg)
    evaluator = MisfitEvaluator(prior=prior, meta=cfg.catchment, eff=eff,
                                obs=obs, warmup_days=cfg.warmup_days)
    return evaluator, forcing


def generate_forcing(years: int, seed: int, start: str = "2000-01-01"):
    """Synthetic daily forcing: seasonal temperature plus storm-laden rain."""
    rng = np.random.default_rng(seed)
    n = years * 365
    dates = np.datetime64(start, "D") + np.arange(n)
    doy = np.arange(n) % 365
    temp = (8.0 + 9.0 * np.sin(2.0 * np.pi * (doy - 105.0) / 365.0)
            + rng.normal(0.0, 2.5, size=n))
    wet = rng.random(n) < (0.42 + 0.08 * np.sin(2.0 * np.pi * (doy + 80.0) / 365.0))
    amounts = rng.gamma(shape=0.85, scale=9.0, size=n) * wet
    storms = rng.random(n) < 0.015
    amounts = amounts + storms * rng.gamma(shape=2.0, scale=12.0, size=n)
    return ForcingSeries(dates=dates, precip=amounts, temp=temp)


def run_synthetic(cfg: PipelineConfig, ledger: RunLedger | None = None) -> dict:
    """Generate a synthetic-twin data set with known truth parameters."""
    ledger = ledger if ledger is not None else RunLedger()
    outdir = _outdir(cfg)
    seed = stage_seed(cfg.seed, "synthetic")
    ledger.seed("synthetic", seed)
    prior = _load_prior(cfg)
    meta = cfg.catchment

    if cfg.truth_coords:
        truth_x, _ = dataio.read_calibration_csv(cfg.truth_coords)
        truth_x = truth_x[0]
    else:
        truth_x = DEFAULT_TRUTH_X.copy()
    params = to_physical(truth_x, prior)

    with ledger.timed("synthetic"):
        forcing = generate_forcing(cfg.years, seed)
        eff = preprocess_forcing(forcing, cfg.forcing_config)
        init = ModelState(e=np.array([p.e_min for p in params.hydrotopes]),
                          e_b=SYNTHETIC_EB0_MM,
                          eps=np.zeros(3, dtype=np.int64))
        truth = simulate(params, meta, eff, init)
        ledger.count("synthetic", 1)
        noise_rng = np.random.default_rng(seed + 1)
        noise = noise_rng.standard_normal(len(truth))
        observed = np.maximum(0.0, truth.q_total * (1.0 + cfg.noise * noise))

    paths = {
        "forcing": outdir / "forcing.csv",
        "observations": outdir / "observations.csv",
        "truth_params": outdir / "truth_params.csv",
        "truth_coords": outdir / "truth_coords.csv",
        "truth_discharge": outdir / "truth_discharge.csv",
    }
    dataio.write_forcing_csv(paths["forcing"], forcing)
    obs_series = DischargeSeries(dates=forcing.dates, q_total=observed)
    dataio.write_discharge_csv(paths["observations"], obs_series)
    dataio.write_params_table(paths["truth_params"], PHYS_NAMES, params.vector)
    dataio.write_calibration_csv(paths["truth_coords"], truth_x[None, :])
    dataio.write_discharge_csv(paths["truth_discharge"], truth, components=True)
    for p in paths.values():
        ledger.artifact(p)
    if cfg.write_figures:
        figures.save_forcing(outdir / "synthetic_overview.png", forcing,
                             discharge=truth.q_total)

    rel_resid = (observed[truth.q_total > 0] / truth.q_total[truth.q_total > 0]) - 1.0
    payload = {
        "years": cfg.years,
        "noise": cfg.noise,
        "empirical_noise_std": float(np.std(rel_resid)),
        "annual_precip_mm": float(forcing.precip.sum() / cfg.years),
        "mean_discharge_m3d": float(truth.q_total.mean()),
        "seeds": {"synthetic": ledger.seeds["synthetic"]},
        "checksums": {p.name: ledger.checksums[p.name] for p in paths.values()},
    }
    _update_diagnostics(outdir, "synthetic", payload)
    return {"paths": paths, "truth_x": truth_x, "truth": truth, "ledger": ledger}


def _read_physical_params(path) -> PhysicalParams:
    table = dataio.read_params_table(path)
    try:
        vec = np.array([table[name] for name in PHYS_NAMES])
    except KeyError as exc:
        raise InputError(f"{path}: missing parameter {exc.args[0]!r}") from None
    return PhysicalParams.from_vector(vec)


def run_simulate(cfg: PipelineConfig, ledger: RunLedger | None = None) -> dict:
    """Forward run: forcing + parameter table -> discharge CSV (+ NSE echo)."""
    ledger = ledger if ledger is not None else RunLedger()
    outdir = _outdir(cfg)
    if not cfg.forcing:
        raise ConfigError("a forcing CSV is required")
    if not cfg.params:
        raise ConfigError("a physical-parameter table is required")
    forcing = dataio.read_forcing_csv(cfg.forcing)
    params = _read_physical_params(cfg.params)
    eff = preprocess_forcing(forcing, cfg.forcing_config)

    obs_q = None
    if cfg.observations:
        _, obs_q = dataio.read_discharge_csv(cfg.observations)
        if len(obs_q) != len(forcing):
            raise InputError("forcing and observations cover different day counts")
    first_obs = float(obs_q[0]) if obs_q is not None else None
    init = initial_state(params, cfg.catchment, first_obs_m3d=first_obs)
    with ledger.timed("simulate"):
        series = simulate(params, cfg.catchment, eff, init)
        ledger.count("simulate", 1)

    out_path = outdir / "discharge.csv"
    dataio.write_discharge_csv(out_path, series, components=cfg.components)
    ledger.artifact(out_path)
    payload = {"days": len(series), "mean_discharge_m3d": float(series.q_total.mean()),
               "checksums": {out_path.name: ledger.checksums[out_path.name]}}
    if obs_q is not None:
        payload["nse"] = float(nse(series.q_total, obs_q))
        log.info("NSE against observations: %.4f", payload["nse"])
    if cfg.write_figures:
        figures.save_discharge(outdir / "discharge.png", series.dates,
                               series.q_total, obs=obs_q)
    _update_diagnostics(outdir, "simulate", payload)
    return {"series": series, "nse": payload.get("nse"), "ledger": ledger}


@dataclass
class SubspaceArtifacts:
    """In-memory results of the subspace stage, as persisted to disk."""

    decomp: object
    sensitivities: np.ndarray
    sensitivities_raw: np.ndarray
    xs: np.ndarray
    fs: np.ndarray
    evaluator: MisfitEvaluator


def run_subspace(cfg: PipelineConfig, ledger: RunLedger | None = None) -> SubspaceArtifacts:
    """Gradient sweep, outer-product eigendecomposition, sensitivity scores."""
    ledger = ledger if ledger is not None else RunLedger()
    outdir = _outdir(cfg)
    evaluator, _ = _build_evaluator(cfg)

    seed_grad = stage_seed(cfg.seed, "gradients")
    seed_boot = stage_seed(cfg.seed, "bootstrap")
    ledger.seed("gradients", seed_grad)
    ledger.seed("bootstrap", seed_boot)

    xs = sample_prior(cfg.gradient_samples, seed=seed_grad)
    with ledger.timed("gradients"):
        samples, n_evals, n_failed = gradient_sweep(
            evaluator, xs, h=cfg.fd_step, workers=cfg.workers)
    ledger.count("gradients", n_evals)
    log.info("gradient sweep: %d samples, %d forward evaluations, %d failed",
             len(samples), n_evals, n_failed)

    c_matrix = estimate_c_matrix(samples)
    decomp = decompose(c_matrix, cfg.subspace_dim)
    with ledger.timed("bootstrap"):
        lo, hi = bootstrap_bands(samples, n_replicates=cfg.bootstrap_replicates,
                                 seed=seed_boot)
    decomp = replace(decomp, band_lo=lo, band_hi=hi)
    sens_raw = global_sensitivities(decomp.eigenvalues, decomp.vectors,
                                    normalize=False)
    sens = global_sensitivities(decomp.eigenvalues, decomp.vectors)

    sample_xs = np.stack([s.x for s in samples])
    sample_fs = np.array([s.f for s in samples])
    paths = {
        "eigenvalues": outdir / "eigenvalues.csv",
        "eigenvectors": outdir / "eigenvectors.csv",
        "sensitivities": outdir / "sensitivities.csv",
        "misfit_samples": outdir / "misfit_samples.csv",
    }
    dataio.write_eigen_csv(paths["eigenvalues"], decomp)
    dataio.write_eigenvectors_csv(paths["eigenvectors"], decomp)
    dataio.write_sensitivities_csv(paths["sensitivities"], COORD_NAMES, sens, sens_raw)
    dataio.write_calibration_csv(paths["misfit_samples"], sample_xs,
                                 extra={"misfit": sample_fs})
    for p in paths.values():
        ledger.artifact(p)
    if cfg.write_figures:
        figures.save_spectrum(outdir / "spectrum.png", decomp.eigenvalues, lo, hi)
        figures.save_eigenvectors(outdir / "eigenvectors.png", decomp.vectors,
                                  n_show=min(4, cfg.subspace_dim))
        figures.save_sensitivities(outdir / "sensitivities.png", sens, COORD_NAMES)

    k = cfg.subspace_dim
    payload = {
        "n_gradient_samples": int(len(samples)),
        "n_failed": int(n_failed),
        "forward_evaluations": int(n_evals),
        "fd_step": cfg.fd_step,
        "subspace_dim": k,
        "eigenvalues": [float(v) for v in decomp.eigenvalues],
        "spectral_gap": float(decomp.eigenvalues[k - 1] / decomp.eigenvalues[k])
        if decomp.eigenvalues[k] > 0 else float("inf"),
        "seeds": {"gradients": seed_grad, "bootstrap": seed_boot},
        "checksums": {p.name: ledger.checksums[p.name] for p in paths.values()},
    }
    _update_diagnostics(outdir, "subspace", payload)
    return SubspaceArtifacts(decomp=decomp, sensitivities=sens,
                             sensitivities_raw=sens_raw, xs=sample_xs,
                             fs=sample_fs, evaluator=evaluator)


def _load_subspace_artifacts(cfg: PipelineConfig) -> SubspaceArtifacts | None:
    outdir = Path(cfg.outdir)
    needed = [outdir / "eigenvalues.csv", outdir / "eigenvectors.csv",
              outdir / "misfit_samples.csv"]
    if not all(p.exists() for p in needed):
        return None
    vals, lo, hi = dataio.read_eigen_csv(needed[0])
    vectors = dataio.read_eigenvectors_csv(needed[1])
    decomp = SubspaceDecomposition(eigenvalues=vals, vectors=vectors,
                                   k=cfg.subspace_dim, band_lo=lo, band_hi=hi)
    xs, extras = dataio.read_calibration_csv(needed[2], extra=("misfit",))
    evaluator, _ = _build_evaluator(cfg)
    sens_raw = global_sensitivities(vals, vectors, normalize=False)
    sens = global_sensitivities(vals, vectors)
    return SubspaceArtifacts(decomp=decomp, sensitivities=sens,
                             sensitivities_raw=sens_raw, xs=xs,
                             fs=extras["misfit"], evaluator=evaluator)


def run_invert(cfg: PipelineConfig, ledger: RunLedger | None = None,
               artifacts: SubspaceArtifacts | None = None) -> dict:
    """Surrogate fit, subspace MCMC, inactive sampling, lift, statistics."""
    ledger = ledger if ledger is not None else RunLedger()
    outdir = _outdir(cfg)
    if artifacts is None:
        artifacts = _load_subspace_artifacts(cfg)
    if artifacts is None:
        log.info("no subspace artifacts in %s; running the subspace stage inline",
                 cfg.outdir)
        artifacts = run_subspace(cfg, ledger)
    decomp = artifacts.decomp
    prior = artifacts.evaluator.prior

    xs, fs = artifacts.xs, artifacts.fs
    if cfg.surrogate_extra_samples > 0:
        seed_extra = stage_seed(cfg.seed, "surrogate_extra")
        ledger.seed("surrogate_extra", seed_extra)
        extra_xs = sample_prior(cfg.surrogate_extra_samples, seed=seed_extra)
        with ledger.timed("surrogate_extra"):
            extra_fs = np.array([artifacts.evaluator(x) for x in extra_xs])
        ledger.count("surrogate_extra", len(extra_xs))
        xs = np.vstack([xs, extra_xs])
        fs = np.concatenate([fs, extra_fs])

    seed_split = stage_seed(cfg.seed, "surrogate_split")
    ledger.seed("surrogate_split", seed_split)
    surrogate = fit_response_surface(xs, fs, decomp.w1, cfg.surrogate_degree,
                                     seed=seed_split)
    log.info("surrogate fit: r2=%.4f, holdout r2=%.4f",
             surrogate.r2, surrogate.r2_holdout)

    seed_kde = stage_seed(cfg.seed, "kde")
    ledger.seed("kde", seed_kde)
    with ledger.timed("kde"):
        marginal_prior = estimate_marginal_prior(decomp.w1, cfg.kde_samples,
                                                 seed=seed_kde)

    seed_chain = stage_seed(cfg.seed, "chain")
    ledger.seed("chain", seed_chain)
    with ledger.timed("chain"):
        chain = mh_active(surrogate, marginal_prior, cfg.chain_steps,
                          cfg.burn_in, proposal_std=cfg.proposal_std,
                          tune=cfg.proposal_std is None, seed=seed_chain)
    log.info("chain acceptance rate %.3f at proposal std %.4g",
             chain.acceptance_rate, chain.proposal_std)

    ess = effective_sample_size(chain)
    avail = len(chain.post_burn_in)
    target = cfg.thin_target if cfg.thin_target > 0 else int(round(ess))
    target = max(1, min(target, avail))
    thinned = thin(chain, target)
    stride = max(1, avail // target)

    seed_inactive = stage_seed(cfg.seed, "inactive")
    ledger.seed("inactive", seed_inactive)
    with ledger.timed("inactive"):
        ensemble = build_ensemble(thinned, decomp, ess=ess, stride=stride,
                                  seed=seed_inactive, n_z=cfg.n_z,
                                  warm_steps=cfg.z_warm_steps,
                                  z_stride=cfg.z_stride,
                                  proposal_std=cfg.z_proposal_std,
                                  workers=cfg.workers)

    phys = transform_to_physical(ensemble.x, prior)
    post_mean = phys.mean(axis=0)
    post_std = phys.std(axis=0)
    x_std = ensemble.x.std(axis=0)
    std_ratio = x_std / UNIFORM_STD

    paths = {
        "surrogate": outdir / "surrogate.csv",
        "active_samples": outdir / "active_samples.csv",
        "ensemble": outdir / "ensemble.csv",
        "posterior_stats": outdir / "posterior_stats.csv",
    }
    dataio.write_surrogate_csv(paths["surrogate"], surrogate)
    with open(paths["active_samples"], "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"y_{j + 1}" for j in range(decomp.k)])
        for row in thinned:
            writer.writerow([dataio.fmt(v) for v in row])
    dataio.write_ensemble_csv(paths["ensemble"], phys, ensemble.y)
    with open(paths["posterior_stats"], "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["name", "post_mean", "post_std",
                         "coord_std", "coord_std_ratio"])
        for i, name in enumerate(PHYS_NAMES):
            writer.writerow([name, dataio.fmt(post_mean[i]), dataio.fmt(post_std[i]),
                             dataio.fmt(x_std[i]), dataio.fmt(std_ratio[i])])
    for p in paths.values():
        ledger.artifact(p)
    if cfg.write_figures:
        figures.save_active_marginals(outdir / "active_marginals.png",
                                      marginal_prior.samples, thinned)

    payload = {
        "acceptance_rate": float(chain.acceptance_rate),
        "proposal_std": float(chain.proposal_std),
        "chain_steps": cfg.chain_steps,
        "burn_in": cfg.burn_in,
        "ess": float(ess),
        "stride": int(stride),
        "ensemble_size": int(len(ensemble)),
        "r2": float(surrogate.r2),
        "r2_holdout": float(surrogate.r2_holdout),
        "eigenvalues": [float(v) for v in decomp.eigenvalues],
        "forward_evaluations": int(ledger.evaluations.get("surrogate_extra", 0)),
        "seeds": {name: ledger.seeds[name] for name in
                  ("surrogate_split", "kde", "chain", "inactive")},
        "checksums": {p.name: ledger.checksums[p.name] for p in paths.values()},
    }
    _update_diagnostics(outdir, "invert", payload)
    return {"chain": chain, "ensemble": ensemble, "surrogate": surrogate,
            "marginal_prior": marginal_prior, "decomp": decomp, "phys": phys,
            "paths": paths, "ledger": ledger, "ess": ess, "stride": stride}


@dataclass(frozen=True)
class _PushSimulator:
    """Picklable forward map from a physical-parameter row to discharge."""

    meta: CatchmentMeta
    eff: EffectiveInputSeries
    first_obs_m3d: float = 0.0

    def __call__(self, phys_row) -> np.ndarray:
        params = PhysicalParams.from_vector(phys_row)
        init = initial_state(params, self.meta, first_obs_m3d=self.first_obs_m3d)
        return simulate(params, self.meta, self.eff, init).q_total


def run_pushforward(cfg: PipelineConfig, ledger: RunLedger | None = None,
                    phys: np.ndarray | None = None) -> dict:
    """Propagate a posterior ensemble through the model; write quantile bands."""
    ledger = ledger if ledger is not None else RunLedger()
    outdir = _outdir(cfg)
    if phys is None:
        ensemble_path = cfg.ensemble or str(Path(cfg.outdir) / "ensemble.csv")
        phys, _ = dataio.read_ensemble_csv(ensemble_path)
    if not cfg.forcing:
        raise ConfigError("a forcing CSV is required")
    forcing = dataio.read_forcing_csv(cfg.forcing)
    eff = preprocess_forcing(forcing, cfg.forcing_config)
    obs = _load_observations(cfg)
    if len(obs) != len(forcing):
        raise InputError("forcing and ensemble runs cover different day counts")

    simulator = _PushSimulator(meta=cfg.catchment, eff=eff,
                               first_obs_m3d=float(obs.values[0]))
    seed_push = stage_seed(cfg.seed, "pushforward")
    ledger.seed("pushforward", seed_push)
    with ledger.timed("pushforward"):
        summary = push_forward(phys, simulator,
                               quantiles=(cfg.quantile_lo, cfg.quantile_hi),
                               max_samples=cfg.pushforward_samples,
                               seed=seed_push, workers=cfg.workers)
    ledger.count("pushforward", summary.n_used)

    half_width = 1.959963984540054 * cfg.noise  # two-sided 95% normal band
    lo95 = obs.values * (1.0 - half_width)
    hi95 = obs.values * (1.0 + half_width)
    out_path = outdir / "pushforward.csv"
    dataio.write_quantile_csv(out_path, forcing.dates, obs.values, lo95, hi95,
                              summary.median, summary.lo, summary.hi, summary.mean)
    ledger.artifact(out_path)
    if cfg.write_figures:
        figures.save_pushforward(
            outdir / "pushforward.png", forcing.dates, obs.values, lo95, hi95,
            summary.median, summary.lo, summary.hi, mean=summary.mean,
            band_label=f"{100 * (cfg.quantile_hi - cfg.quantile_lo):.0f}% posterior band")

    payload = {
        "n_simulations": int(summary.n_used),
        "n_failed": int(summary.n_failed),
        "quantiles": [cfg.quantile_lo, cfg.quantile_hi],
        "seeds": {"pushforward": seed_push},
        "checksums": {out_path.name: ledger.checksums[out_path.name]},
    }
    if cfg.truth_discharge:
        _, truth_q = dataio.read_discharge_csv(cfg.truth_discharge)
        post = slice(cfg.warmup_days, None)
        covered = ((truth_q[post] >= summary.lo[post])
                   & (truth_q[post] <= summary.hi[post]))
        payload["truth_band_coverage"] = float(np.mean(covered))
        log.info("posterior band covers %.1f%% of noiseless truth days",
                 100 * payload["truth_band_coverage"])
    _update_diagnostics(outdir, "pushforward", payload)
    return {"summary": summary, "path": out_path, "ledger": ledger,
            "coverage": payload.get("truth_band_coverage")}
