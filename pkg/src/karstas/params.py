"""Calibration coordinates and the constrained physical parameter space.

The 21 physical parameters (7 per hydrotope) obey ordering chains across
hydrotopes plus e_min <= e_max within each hydrotope. Calibration works on
independent normalized coordinates in [-1, 1]^21: hydrotope 1 parameters map
straight to their prior intervals (k-type parameters on a log scale), the
hydrotope 2 and 3 coordinates are fractional positions inside the interval
left admissible by the previous hydrotope, and each e_max is replaced by an
independent storage-band width delta_e added to e_min.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .lukars import HydrotopeParams

N_PARAMS = 21
N_BLOCKS = 3

# slots within a 7-parameter hydrotope block
SLOT_NAMES = ("k_hyd", "e_min", "e_max", "alpha", "k_is", "k_sec", "e_sec")
# chain direction across hydrotopes 1 -> 2 -> 3 per slot
SLOT_CHAIN = {"k_hyd": "dec", "e_min": "inc", "e_max": "inc", "alpha": "dec",
              "k_is": "dec", "k_sec": "dec", "e_sec": "inc"}

PHYS_NAMES = tuple(f"{s}_{b + 1}" for b in range(N_BLOCKS) for s in SLOT_NAMES)

COORD_NAMES = (
    "k_hyd1_log", "e_min1", "delta_e1", "alpha1", "k_is1_log", "k_sec1_log", "e_sec1",
    "dk_hyd12_log", "de_min12", "delta_e2", "dalpha12", "dk_is12_log", "dk_sec12_log", "de_sec12",
    "dk_hyd23_log", "de_min23", "delta_e3", "dalpha23", "dk_is23_log", "dk_sec23_log", "de_sec23",
)

_COORD_TOL = 1e-9  # slack for coordinates reconstructed from subspace projections
_CHAIN_TOL = 1e-9  # relative slack when checking the ordering chains


@dataclass(frozen=True)
class PhysicalParams:
    """The three hydrotope parameter blocks (21 values)."""

    hydrotopes: tuple[HydrotopeParams, HydrotopeParams, HydrotopeParams]

    @property
    def vector(self) -> np.ndarray:
        """Flat view in table order (k_hyd, e_min, e_max, alpha, k_is, k_sec, e_sec) x 3."""
        return np.array([getattr(p, s) for p in self.hydrotopes for s in SLOT_NAMES])

    @classmethod
    def from_vector(cls, vec) -> "PhysicalParams":
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (N_PARAMS,):
            raise ParameterError(f"expected {N_PARAMS} physical values, got shape {vec.shape}")
        blocks = tuple(
            HydrotopeParams(**dict(zip(SLOT_NAMES, vec[7 * b:7 * b + 7])))
            for b in range(N_BLOCKS)
        )
        return cls(hydrotopes=blocks)


@dataclass(frozen=True)
class PriorSpec:
    """Prior intervals for the physical parameters (table order).

    scale is "log" for parameters calibrated on a log axis and "linear"
    otherwise. The bounds must preserve the ordering chains block to block
    (decreasing chains need non-increasing lower bounds, increasing chains
    non-decreasing upper bounds, and the delta_e intervals must be
    non-overlapping upward) or the coordinate transform could not guarantee
    admissibility.
    """

    names: tuple
    lb: np.ndarray
    ub: np.ndarray
    units: tuple
    scale: tuple

    def __post_init__(self):
        lb = np.asarray(self.lb, dtype=np.float64)
        ub = np.asarray(self.ub, dtype=np.float64)
        if not (len(self.names) == len(lb) == len(ub) == len(self.units) == len(self.scale) == N_PARAMS):
            raise ParameterError(f"prior table must have exactly {N_PARAMS} rows")
        if np.any(lb >= ub):
            raise ParameterError("prior lower bounds must lie below upper bounds")
        for i, s in enumerate(self.scale):
            if s not in ("log", "linear"):
                raise ParameterError(f"unknown scale {s!r} for {self.names[i]}")
            if s == "log" and lb[i] <= 0:
                raise ParameterError(f"log scale needs positive bounds ({self.names[i]})")
        for slot, idx in zip(SLOT_NAMES, range(7)):
            cols = [idx, idx + 7, idx + 14]
            if SLOT_CHAIN[slot] == "dec" and not (lb[cols[0]] >= lb[cols[1]] >= lb[cols[2]]):
                raise ParameterError(f"{slot} lower bounds must not increase across hydrotopes")
            if SLOT_CHAIN[slot] == "inc" and not (ub[cols[0]] <= ub[cols[1]] <= ub[cols[2]]):
                raise ParameterError(f"{slot} upper bounds must not decrease across hydrotopes")
        widths = [self.delta_e_bounds(b) for b in range(N_BLOCKS)]
        for b in range(N_BLOCKS):
            if widths[b][0] <= 0:
                raise ParameterError("e_max lower bound must exceed e_min lower bound")
            if widths[b][0] > widths[b][1]:
                raise ParameterError("delta_e interval is empty")
        if not (widths[0][1] <= widths[1][0] and widths[1][1] <= widths[2][0]):
            raise ParameterError("delta_e intervals must step upward across hydrotopes")
        object.__setattr__(self, "lb", lb)
        object.__setattr__(self, "ub", ub)

    def delta_e_bounds(self, block: int) -> tuple[float, float]:
        """Admissible storage-band width [mm] for one hydrotope."""
        i_min, i_max = 7 * block + 1, 7 * block + 2
        return (float(self.lb[i_max] - self.lb[i_min]),
                float(self.ub[i_max] - self.ub[i_min]))


def default_prior() -> PriorSpec:
    """Prior intervals of the Kerschbaum-type three-hydrotope setup."""
    rows = [
        ("k_hyd_1", 9.0, 900.0, "m2/d", "log"),
        ("e_min_1", 10.0, 50.0, "mm", "linear"),
        ("e_max_1", 15.0, 75.0, "mm", "linear"),
        ("alpha_1", 0.7, 1.6, "-", "linear"),
        ("k_is_1", 0.002, 0.2, "m/mm/d", "log"),
        ("k_sec_1", 0.0095, 0.95, "m/mm/d", "log"),
        ("e_sec_1", 25.0, 70.0, "mm", "linear"),
        ("k_hyd_2", 8.5, 850.0, "m2/d", "log"),
        ("e_min_2", 40.0, 80.0, "mm", "linear"),
        ("e_max_2", 80.0, 160.0, "mm", "linear"),
        ("alpha_2", 0.5, 1.3, "-", "linear"),
        ("k_is_2", 0.00055, 0.055, "m/mm/d", "log"),
        ("k_sec_2", 0.0023, 0.23, "m/mm/d", "log"),
        ("e_sec_2", 130.0, 220.0, "mm", "linear"),
        ("k_hyd_3", 7.7, 770.0, "m2/d", "log"),
        ("e_min_3", 75.0, 120.0, "mm", "linear"),
        ("e_max_3", 160.0, 255.0, "mm", "linear"),
        ("alpha_3", 0.2, 0.7, "-", "linear"),
        ("k_is_3", 0.00025, 0.025, "m/mm/d", "log"),
        ("k_sec_3", 0.0015, 0.15, "m/mm/d", "log"),
        ("e_sec_3", 320.0, 450.0, "mm", "linear"),
    ]
    names, lb, ub, units, scale = zip(*rows)
    return PriorSpec(names=names, lb=np.array(lb), ub=np.array(ub),
                     units=units, scale=scale)


def transform_to_physical(x, prior: PriorSpec | None = None) -> np.ndarray:
    """Map normalized coordinates in [-1,1]^21 to physical values (vectorized).

    Accepts a single coordinate vector or any batch with the coordinates on
    the last axis; returns an array of the same shape in table order.
    """
    if prior is None:
        prior = default_prior()
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != N_PARAMS:
        raise ParameterError(f"expected {N_PARAMS} coordinates on the last axis")
    if np.any(np.abs(x) > 1.0 + _COORD_TOL):
        raise ParameterError("coordinates must lie in [-1, 1]")
    u = np.clip((x + 1.0) / 2.0, 0.0, 1.0)
    phys = np.empty_like(u)

    # chain slots in dependency order: e_min before delta_e / e_max
    chain_slots = (0, 1, 3, 4, 5, 6)
    for b in range(N_BLOCKS):
        base = 7 * b
        for slot in chain_slots:
            idx = base + slot
            log = prior.scale[idx] == "log"
            lb_c = np.log(prior.lb[idx]) if log else prior.lb[idx]
            ub_c = np.log(prior.ub[idx]) if log else prior.ub[idx]
            uu = u[..., idx]
            if b == 0:
                val_c = lb_c + uu * (ub_c - lb_c)
            else:
                prev = phys[..., idx - 7]
                prev_c = np.log(prev) if log else prev
                if SLOT_CHAIN[SLOT_NAMES[slot]] == "dec":
                    top = np.minimum(ub_c, prev_c)
                    val_c = lb_c + uu * (top - lb_c)
                else:
                    bot = np.maximum(prev_c, lb_c)
                    val_c = bot + uu * (ub_c - bot)
            phys[..., idx] = np.exp(val_c) if log else val_c
        de_lo, de_hi = prior.delta_e_bounds(b)
        delta_e = de_lo + u[..., base + 2] * (de_hi - de_lo)
        phys[..., base + 2] = phys[..., base + 1] + delta_e
    return phys


def to_physical(x, prior: PriorSpec | None = None) -> PhysicalParams:
    """Single-vector convenience wrapper around transform_to_physical."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ParameterError("to_physical expects a single coordinate vector")
    return PhysicalParams.from_vector(transform_to_physical(x, prior))


def check_constraints(p) -> list[str]:
    """Return the ordered list of violated parameter relations (empty if valid)."""
    vec = p.vector if isinstance(p, PhysicalParams) else np.asarray(p, dtype=np.float64)
    if vec.shape != (N_PARAMS,):
        raise ParameterError(f"expected {N_PARAMS} physical values")
    violations = []
    for slot, name in enumerate(SLOT_NAMES):
        for b in range(N_BLOCKS - 1):
            a, c = vec[7 * b + slot], vec[7 * (b + 1) + slot]
            slack = _CHAIN_TOL * max(1.0, abs(a), abs(c))
            if SLOT_CHAIN[name] == "dec":
                if c > a + slack:
                    violations.append(f"{name}_{b + 1} >= {name}_{b + 2}")
            else:
                if a > c + slack:
                    violations.append(f"{name}_{b + 1} <= {name}_{b + 2}")
    for b in range(N_BLOCKS):
        e_min, e_max = vec[7 * b + 1], vec[7 * b + 2]
        if e_min > e_max + _CHAIN_TOL * max(1.0, abs(e_max)):
            violations.append(f"e_min_{b + 1} <= e_max_{b + 1}")
    return violations


def sample_prior(n: int, seed: int) -> np.ndarray:
    """n i.i.d. uniform draws on [-1,1]^21, reproducible per seed; shape (n, 21)."""
    if n < 0:
        raise ParameterError("sample count must be non-negative")
    rng = np.random.default_rng(seed)
    return rng.uniform(-1.0, 1.0, size=(n, N_PARAMS))
