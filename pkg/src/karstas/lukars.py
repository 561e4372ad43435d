"""LuKARS-style lumped karst spring model.

Three hydrotope buckets with threshold-activated, hysteretic quickflow and
two linear discharge components each, feeding a shared linear baseflow
storage that drains to the spring. Daily explicit time stepping.

Unit bookkeeping: storages in mm, areas in m2, time in days. Flux terms are
the literal products of the governing equations and therefore carry
storage-volume units (mm*m2/d, numerically litres per day); reported spring
discharge is converted to m3/d and l/s.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np
from numba import njit

from .errors import InputError, ParameterError

if TYPE_CHECKING:
    from .params import PhysicalParams

N_HYDROTOPES = 3

MODEL_UNITS_PER_M3 = 1000.0  # mm*m2 per m3
M3D_PER_LS = 86.4  # 1 l/s = 86.4 m3/d


@dataclass(frozen=True)
class ForcingSeries:
    """Daily precipitation and temperature input.

    Attributes:
        dates: strictly increasing daily timestamps (datetime64[D]).
        precip: precipitation [mm/d], non-negative.
        temp: mean air temperature [degC].
    """

    dates: np.ndarray
    precip: np.ndarray
    temp: np.ndarray

    def __post_init__(self):
        dates = np.asarray(self.dates, dtype="datetime64[D]")
        precip = np.asarray(self.precip, dtype=np.float64)
        temp = np.asarray(self.temp, dtype=np.float64)
        if not (len(dates) == len(precip) == len(temp)):
            raise InputError("forcing columns have unequal lengths")
        if len(dates) < 2:
            raise InputError("forcing series needs at least two days")
        spacing = np.diff(dates).astype("timedelta64[D]").astype(int)
        if np.any(spacing != 1):
            bad = int(np.argmax(spacing != 1))
            raise InputError(
                f"non-uniform date spacing at row {bad + 1}: "
                f"{dates[bad]} -> {dates[bad + 1]}"
            )
        if np.any(precip < 0):
            bad = int(np.argmax(precip < 0))
            raise InputError(f"negative precipitation at {dates[bad]}")
        if not (np.all(np.isfinite(precip)) and np.all(np.isfinite(temp))):
            raise InputError("non-finite forcing values")
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "precip", precip)
        object.__setattr__(self, "temp", temp)

    def __len__(self) -> int:
        return len(self.dates)


@dataclass(frozen=True)
class ForcingConfig:
    """Preprocessing coefficients for the effective-input computation.

    Attributes:
        c_m: degree-day melt coefficient [mm/degC/d].
        t0: melt / phase threshold temperature [degC].
        interception_mm: daily canopy interception capacity [mm/d].
        pet_method: "thornthwaite" or "none".
        warmup_days: days excluded from misfit evaluation downstream.
    """

    c_m: float = 2.5
    t0: float = 0.0
    interception_mm: float = 0.7
    pet_method: str = "thornthwaite"
    warmup_days: int = 90

    def __post_init__(self):
        if self.c_m < 0 or self.interception_mm < 0:
            raise InputError("forcing coefficients must be non-negative")
        if self.pet_method not in ("thornthwaite", "none"):
            raise InputError(f"unknown pet_method: {self.pet_method!r}")
        if self.warmup_days < 0:
            raise InputError("warmup_days must be >= 0")


@dataclass(frozen=True)
class EffectiveInputSeries:
    """Per-hydrotope sink/source term and the snow-store trace.

    Attributes:
        dates: daily timestamps matching the forcing.
        s: effective input [mm/d], shape (n_days, 3).
        snow: end-of-day snow store [mm], shape (n_days,).
    """

    dates: np.ndarray
    s: np.ndarray
    snow: np.ndarray

    def __post_init__(self):
        dates = np.asarray(self.dates, dtype="datetime64[D]")
        s = np.atleast_2d(np.asarray(self.s, dtype=np.float64))
        if s.shape[1] != N_HYDROTOPES:
            raise InputError(f"effective input must have {N_HYDROTOPES} columns")
        snow = np.asarray(self.snow, dtype=np.float64)
        if not (len(dates) == s.shape[0] == len(snow)):
            raise InputError("effective-input columns have unequal lengths")
        if np.any(snow < 0):
            raise InputError("snow store must stay non-negative")
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "snow", snow)

    def __len__(self) -> int:
        return len(self.dates)


@dataclass(frozen=True)
class HydrotopeParams:
    """The seven variable parameters of one hydrotope."""

    k_hyd: float  # quickflow discharge parameter [m2/d]
    e_min: float  # quickflow deactivation storage [mm]
    e_max: float  # quickflow activation storage [mm]
    alpha: float  # quickflow exponent [-]
    k_is: float  # baseflow-recharge coefficient [m/mm/d]
    k_sec: float  # secondary-discharge coefficient [m/mm/d]
    e_sec: float  # secondary-discharge activation level [mm]

    def __post_init__(self):
        vals = (self.k_hyd, self.e_min, self.e_max, self.alpha,
                self.k_is, self.k_sec, self.e_sec)
        if any(v <= 0 for v in vals):
            raise ParameterError("hydrotope parameters must be positive")
        if self.e_max <= self.e_min:
            raise ParameterError(
                f"e_max ({self.e_max}) must exceed e_min ({self.e_min})"
            )


@dataclass(frozen=True)
class CatchmentMeta:
    """Fixed catchment geometry and the (uncalibrated) baseflow coefficient."""

    areas: np.ndarray  # hydrotope areas [m2], shape (3,)
    area_total: float  # recharge area [m2]
    l_hyd: np.ndarray  # mean hydrotope-to-spring distances [m], shape (3,)
    k_b: float  # baseflow discharge coefficient [1/d]

    def __post_init__(self):
        areas = np.asarray(self.areas, dtype=np.float64)
        l_hyd = np.asarray(self.l_hyd, dtype=np.float64)
        if areas.shape != (N_HYDROTOPES,) or l_hyd.shape != (N_HYDROTOPES,):
            raise ParameterError("areas and l_hyd must have three entries")
        if np.any(areas <= 0) or np.any(l_hyd <= 0):
            raise ParameterError("areas and distances must be positive")
        if self.area_total <= 0 or self.k_b <= 0:
            raise ParameterError("total area and k_b must be positive")
        if areas.sum() > self.area_total * (1 + 1e-9):
            raise ParameterError("hydrotope areas exceed the recharge area")
        object.__setattr__(self, "areas", areas)
        object.__setattr__(self, "l_hyd", l_hyd)


@dataclass
class ModelState:
    """Storage levels and quickflow indicators at one time step."""

    e: np.ndarray  # hydrotope levels [mm], shape (3,)
    e_b: float  # baseflow storage level [mm]
    eps: np.ndarray  # quickflow indicators, shape (3,), each 0 or 1

    def __post_init__(self):
        e = np.asarray(self.e, dtype=np.float64)
        eps = np.asarray(self.eps, dtype=np.int64)
        if np.any(e < 0) or self.e_b < 0:
            raise ParameterError("storage levels must be non-negative")
        if not np.all((eps == 0) | (eps == 1)):
            raise ParameterError("indicators must be 0 or 1")
        self.e = e
        self.eps = eps

    @classmethod
    def zero(cls) -> "ModelState":
        return cls(e=np.zeros(N_HYDROTOPES), e_b=0.0, eps=np.zeros(N_HYDROTOPES, dtype=np.int64))


@dataclass(frozen=True)
class StepFluxes:
    """Discharge terms of one step, in storage-volume units (mm*m2/d)."""

    q_hyd: np.ndarray
    q_is: np.ndarray
    q_sec: np.ndarray
    q_b: float
    q_total: float


@dataclass(frozen=True)
class DischargeSeries:
    """Simulated spring discharge with optional per-component traces [m3/d]."""

    dates: np.ndarray
    q_total: np.ndarray
    q_hyd: np.ndarray | None = None
    q_is: np.ndarray | None = None
    q_sec: np.ndarray | None = None
    q_b: np.ndarray | None = None

    def __post_init__(self):
        if np.any(np.asarray(self.q_total) < 0):
            raise ParameterError("discharge must be non-negative")
        if len(self.q_total) != len(self.dates):
            raise InputError("discharge length does not match dates")

    @property
    def q_total_ls(self) -> np.ndarray:
        """Total discharge in l/s."""
        return self.q_total / M3D_PER_LS

    def __len__(self) -> int:
        return len(self.dates)


def thornthwaite_pet(dates: np.ndarray, temp: np.ndarray) -> np.ndarray:
    """Daily potential evapotranspiration [mm/d], Thornthwaite monthly formula.

    Monthly PET is computed from the per-year heat index and spread uniformly
    over the calendar days of each month. No daylight-length correction is
    applied. Months with mean temperature <= 0 degC get zero PET.
    """
    dates = np.asarray(dates, dtype="datetime64[D]")
    months = dates.astype("datetime64[M]")
    years = dates.astype("datetime64[Y]")
    pet = np.zeros(len(dates))
    for year in np.unique(years):
        in_year = years == year
        year_months = np.unique(months[in_year])
        t_mean = np.array([temp[months == m].mean() for m in year_months])
        heat = np.sum((np.maximum(t_mean, 0.0) / 5.0) ** 1.514)
        if heat <= 0:
            continue
        a = (6.75e-7 * heat**3 - 7.71e-5 * heat**2 + 1.792e-2 * heat + 0.49239)
        for m, tm in zip(year_months, t_mean):
            if tm <= 0:
                continue
            pet_month = 16.0 * (10.0 * tm / heat) ** a
            n_days = int(((m + 1).astype("datetime64[D]") - m.astype("datetime64[D]")).astype(int))
            pet[months == m] = pet_month / n_days
    return pet


def preprocess_forcing(raw: ForcingSeries, cfg: ForcingConfig) -> EffectiveInputSeries:
    """Turn raw forcing into the per-hydrotope effective input.

    Degree-day snow accumulation/melt, a daily interception capacity applied
    to rainfall, and (optionally) Thornthwaite PET. The resulting sink/source
    term is floored at zero; the snow store is mass conserving.
    """
    n = len(raw)
    is_snow = raw.temp < cfg.t0
    rain = np.where(is_snow, 0.0, raw.precip)
    snowfall = np.where(is_snow, raw.precip, 0.0)
    melt_cap = cfg.c_m * np.maximum(0.0, raw.temp - cfg.t0)

    snow = np.zeros(n)
    melt = np.zeros(n)
    store = 0.0
    for t in range(n):
        melt[t] = min(store, melt_cap[t])
        store = store + snowfall[t] - melt[t]
        snow[t] = store

    if cfg.pet_method == "thornthwaite":
        pet = thornthwaite_pet(raw.dates, raw.temp)
    else:
        pet = np.zeros(n)

    intercepted = np.minimum(rain, cfg.interception_mm)
    s1 = np.maximum(0.0, rain - intercepted + melt - pet)
    s = np.repeat(s1[:, None], N_HYDROTOPES, axis=1)
    return EffectiveInputSeries(dates=raw.dates, s=s, snow=snow)


def quickflow(e: float, eps: int, p: HydrotopeParams, meta: CatchmentMeta, i: int) -> float:
    """Hysteretic quickflow term of hydrotope i (storage-volume units)."""
    if p.e_max <= p.e_min:
        raise ParameterError("e_max must exceed e_min")
    if e < 0:
        raise ParameterError("storage level must be non-negative")
    bracket = max(0.0, e - p.e_min) / (p.e_max - p.e_min)
    return eps * bracket**p.alpha * (p.k_hyd / meta.l_hyd[i]) * meta.areas[i]


def linear_discharges(e: float, p: HydrotopeParams, meta: CatchmentMeta, i: int) -> tuple[float, float]:
    """Baseflow-recharge and secondary-discharge terms of hydrotope i."""
    if e < 0:
        raise ParameterError("storage level must be non-negative")
    q_is = p.k_is * e * meta.areas[i]
    q_sec = p.k_sec * max(0.0, e - p.e_sec) * meta.areas[i]
    return q_is, q_sec


def update_indicator(eps_n: int, e_next: float, p: HydrotopeParams) -> int:
    """Advance the quickflow hysteresis indicator.

    Switches on when the new level reaches e_max, off when it falls to
    e_min or below; keeps its state strictly inside the band.
    """
    if eps_n == 0:
        return 1 if e_next >= p.e_max else 0
    return 1 if e_next > p.e_min else 0


def step(state: ModelState, s_n: np.ndarray, params: "PhysicalParams",
         meta: CatchmentMeta) -> tuple[ModelState, StepFluxes]:
    """One explicit daily step; fluxes are evaluated at the pre-step levels."""
    s_n = np.asarray(s_n, dtype=np.float64)
    q_hyd = np.zeros(N_HYDROTOPES)
    q_is = np.zeros(N_HYDROTOPES)
    q_sec = np.zeros(N_HYDROTOPES)
    e_new = np.zeros(N_HYDROTOPES)
    eps_new = np.zeros(N_HYDROTOPES, dtype=np.int64)
    for i, p in enumerate(params.hydrotopes):
        q_hyd[i] = quickflow(state.e[i], int(state.eps[i]), p, meta, i)
        q_is[i], q_sec[i] = linear_discharges(state.e[i], p, meta, i)
        e_new[i] = max(
            0.0,
            state.e[i] + (s_n[i] - (q_sec[i] + q_is[i] + q_hyd[i]) / meta.areas[i]),
        )
        eps_new[i] = update_indicator(int(state.eps[i]), e_new[i], p)
    q_b = meta.k_b * state.e_b * meta.area_total
    e_b_new = max(0.0, state.e_b + (q_is[0] + q_is[1] + q_is[2] - q_b) / meta.area_total)
    q_total = q_hyd[0] + q_hyd[1] + q_hyd[2] + q_b
    new_state = ModelState(e=e_new, e_b=e_b_new, eps=eps_new)
    return new_state, StepFluxes(q_hyd=q_hyd, q_is=q_is, q_sec=q_sec, q_b=q_b, q_total=q_total)


@njit(cache=True)
def _simulate_kernel(s, e0, eb0, eps0,
                     k_hyd, e_min, e_max, alpha, k_is, k_sec, e_sec,
                     areas, area_total, l_hyd, k_b):
    n = s.shape[0]
    q_hyd = np.zeros((n, 3))
    q_is = np.zeros((n, 3))
    q_sec = np.zeros((n, 3))
    q_b = np.zeros(n)
    q_total = np.zeros(n)
    e = e0.copy()
    eps = eps0.copy()
    e_b = eb0
    for t in range(n):
        for i in range(3):
            bracket = max(0.0, e[i] - e_min[i]) / (e_max[i] - e_min[i])
            q_hyd[t, i] = eps[i] * bracket ** alpha[i] * (k_hyd[i] / l_hyd[i]) * areas[i]
            q_is[t, i] = k_is[i] * e[i] * areas[i]
            q_sec[t, i] = k_sec[i] * max(0.0, e[i] - e_sec[i]) * areas[i]
        q_b[t] = k_b * e_b * area_total
        for i in range(3):
            e[i] = max(0.0, e[i] + (s[t, i] - (q_sec[t, i] + q_is[t, i] + q_hyd[t, i]) / areas[i]))
            if eps[i] == 0:
                eps[i] = 1 if e[i] >= e_max[i] else 0
            else:
                eps[i] = 1 if e[i] > e_min[i] else 0
        e_b = max(0.0, e_b + (q_is[t, 0] + q_is[t, 1] + q_is[t, 2] - q_b[t]) / area_total)
        q_total[t] = q_hyd[t, 0] + q_hyd[t, 1] + q_hyd[t, 2] + q_b[t]
    return q_hyd, q_is, q_sec, q_b, q_total


def initial_state(params: "PhysicalParams", meta: CatchmentMeta,
                  first_obs_m3d: float | None = None) -> ModelState:
    """Default start: hydrotopes at e_min, baseflow matched to the first
    observation when one is available, indicators off."""
    e = np.array([p.e_min for p in params.hydrotopes])
    if first_obs_m3d is None:
        e_b = 0.0
    else:
        e_b = (first_obs_m3d * MODEL_UNITS_PER_M3) / (meta.k_b * meta.area_total)
    return ModelState(e=e, e_b=e_b, eps=np.zeros(N_HYDROTOPES, dtype=np.int64))


def simulate(params: "PhysicalParams", meta: CatchmentMeta,
             eff: EffectiveInputSeries, init: ModelState | None = None) -> DischargeSeries:
    """Run the model over the whole effective-input series.

    Total spring discharge is the sum of the three quickflow components and
    the baseflow term; the secondary discharge leaves the catchment. The run
    is deterministic: identical inputs give bit-identical outputs.
    """
    from .params import check_constraints

    violations = check_constraints(params)
    if violations:
        raise ParameterError("parameter constraints violated: " + "; ".join(violations))
    if init is None:
        init = initial_state(params, meta)
    hyd = params.hydrotopes
    arr = lambda attr: np.array([getattr(p, attr) for p in hyd])
    q_hyd, q_is, q_sec, q_b, q_total = _simulate_kernel(
        eff.s, init.e.astype(np.float64), float(init.e_b), init.eps.astype(np.int64),
        arr("k_hyd"), arr("e_min"), arr("e_max"), arr("alpha"),
        arr("k_is"), arr("k_sec"), arr("e_sec"),
        meta.areas, float(meta.area_total), meta.l_hyd, float(meta.k_b),
    )
    to_m3d = 1.0 / MODEL_UNITS_PER_M3
    return DischargeSeries(
        dates=eff.dates,
        q_total=q_total * to_m3d,
        q_hyd=q_hyd * to_m3d,
        q_is=q_is * to_m3d,
        q_sec=q_sec * to_m3d,
        q_b=q_b * to_m3d,
    )


def nse(sim, obs) -> float:
    """Nash-Sutcliffe efficiency; 1.0 iff the simulation matches exactly."""
    sim = np.asarray(getattr(sim, "q_total", sim), dtype=np.float64)
    obs = np.asarray(getattr(obs, "q_total", obs), dtype=np.float64)
    if sim.shape != obs.shape:
        raise InputError("series lengths differ")
    denom = np.sum((obs - obs.mean()) ** 2)
    if denom == 0:
        raise InputError("observations are constant; score undefined")
    return 1.0 - float(np.sum((sim - obs) ** 2) / denom)
