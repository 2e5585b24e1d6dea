"""Generators for LCDM-like binned distances, normal data and exponential data.

A binned generator draws a bin J from a 13-bin pmf and returns (J + U) / 2
with U ~ Uniform(0, r).  The pmf is built from a 12-entry frequency vector
and a tail parameter eta (see :func:`pmf_from_freq`); r > 1 widens the
within-bin spread.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .dataset import CensorSpec

V_O = (2059, 1898, 1764, 1670, 1492, 1268, 814, 417, 142, 81, 61, 16)
V_EXP = (3930, 2385, 1449, 878, 534, 324, 196, 121, 73, 43, 26, 16)

FREQ_VECTORS: dict[str, tuple[int, ...]] = {"v_o": V_O, "v_exp": V_EXP}

N_BINS = 13
ETA_MAX = 1000


def _check_freq(freq) -> np.ndarray:
    v = np.asarray(freq, dtype=float).ravel()
    if v.size != N_BINS - 1:
        raise ValueError(f"frequency vector needs {N_BINS - 1} entries, got {v.size}")
    if np.any(v < 0) or not np.any(v > 0):
        raise ValueError("frequency vector must be nonnegative with a positive entry")
    return v


def pmf_from_freq(freq, eta: int = 0) -> np.ndarray:
    """13-bin pmf for tail parameter ``eta``.

    ``eta = 0`` gives freq / sum(freq) on bins 0..11 and zero on bin 12.
    Otherwise the twelve values |v_i - eta| and the remainder
    T - sum(v_i - eta) = 12 * eta (T = sum(freq)) are sorted in descending
    order, assigned to bins 0..12 and normalized.  Larger eta flattens the
    pmf and moves mass into the upper bins.
    """
    v = _check_freq(freq)
    if not 0 <= eta <= ETA_MAX:
        raise ValueError(f"eta must lie in [0, {ETA_MAX}]")
    if eta == 0:
        return np.append(v / v.sum(), 0.0)
    dev = np.abs(v - eta)
    remainder = v.sum() - np.sum(v - eta)
    if remainder < 0:
        raise ValueError(f"eta={eta} leaves a negative remainder for this frequency vector")
    weights = np.sort(np.append(dev, remainder))[::-1]
    return weights / weights.sum()


def sample_bins(n: int, pmf: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    cdf = np.cumsum(pmf)
    cdf[-1] = 1.0
    return np.searchsorted(cdf, rng.random(n), side="right")


def gen_binned(n: int, pmf: np.ndarray, r: float, rng: np.random.Generator) -> np.ndarray:
    """n draws of (J + U) / 2 with J ~ pmf and U ~ Uniform(0, r)."""
    if n < 1:
        raise ValueError("sample size must be at least 1")
    if r < 1:
        raise ValueError("r must be at least 1")
    j = sample_bins(n, pmf, rng)
    return (j + rng.uniform(0.0, r, n)) / 2.0


def gen_normal(n: int, mu: float, sigma: float, rng: np.random.Generator) -> np.ndarray:
    if n < 1:
        raise ValueError("sample size must be at least 1")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    return rng.normal(mu, sigma, n)


def gen_exponential(n: int, lam: float, rng: np.random.Generator) -> np.ndarray:
    if n < 1:
        raise ValueError("sample size must be at least 1")
    if not lam > 0:
        raise ValueError("rate lambda must be positive")
    return rng.exponential(1.0 / lam, n)


@dataclass(frozen=True)
class BinnedSpec:
    freq: tuple[int, ...] = V_O
    eta: int = 0
    r: float = 1.0

    def __post_init__(self) -> None:
        _check_freq(self.freq)
        if not 0 <= self.eta <= ETA_MAX:
            raise ValueError(f"eta must lie in [0, {ETA_MAX}]")
        if not 1.0 <= self.r < 2.0:
            raise ValueError("r must lie in [1, 2)")

    def pmf(self) -> np.ndarray:
        return pmf_from_freq(self.freq, self.eta)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return gen_binned(n, self.pmf(), self.r, rng)


@dataclass(frozen=True)
class NormalSpec:
    mu: float = 0.0
    sigma: float = 1.0

    def __post_init__(self) -> None:
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return gen_normal(n, self.mu, self.sigma, rng)


@dataclass(frozen=True)
class ExponentialSpec:
    lam: float = 1.0

    def __post_init__(self) -> None:
        if not self.lam > 0:
            raise ValueError("rate lambda must be positive")

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return gen_exponential(n, self.lam, rng)


GeneratorSpec = BinnedSpec | NormalSpec | ExponentialSpec


def parse_generator_spec(fields: Mapping[str, str]) -> GeneratorSpec:
    """Build a generator from key/value text, e.g. family=binned freq=v_o eta=50 r=1.0."""
    family = fields.get("family", "").strip().lower()
    if family == "binned":
        freq_key = fields.get("freq", "v_o").strip()
        if freq_key in FREQ_VECTORS:
            freq = FREQ_VECTORS[freq_key]
        else:
            freq = tuple(int(x) for x in freq_key.replace(";", ",").split(","))
        return BinnedSpec(freq, int(fields.get("eta", 0)), float(fields.get("r", 1.0)))
    if family == "normal":
        return NormalSpec(float(fields.get("mu", 0.0)), float(fields.get("sigma", 1.0)))
    if family == "exponential":
        return ExponentialSpec(float(fields.get("lambda", fields.get("lam", 1.0))))
    raise ValueError(f"unknown generator family {family!r}")


@dataclass(frozen=True)
class AlternativeCase:
    case_id: str
    x: GeneratorSpec
    y: GeneratorSpec
    z: GeneratorSpec
    censor: CensorSpec

    @property
    def specs(self) -> tuple[GeneratorSpec, GeneratorSpec, GeneratorSpec]:
        return self.x, self.y, self.z

    def sample(self, sizes: tuple[int, int, int], rng: np.random.Generator) -> list[np.ndarray]:
        return [spec.sample(n, rng) for spec, n in zip(self.specs, sizes)]


# (r_y, r_z, eta_y, eta_z); X is always the null generator
_BINNED_CASES = {
    1: (1.1, 1.0, 0, 0),
    2: (1.1, 1.2, 0, 0),
    3: (1.0, 1.0, 10, 0),
    4: (1.0, 1.0, 10, 30),
    5: (1.2, 1.0, 0, 50),
}

# (mu_x, mu_y, mu_z), (sigma_x, sigma_y, sigma_z)
_NORMAL_CASES = {
    0: ((3.35, 3.35, 3.35), (2.28, 2.28, 2.28)),
    1: ((3.35, 3.39, 3.35), (2.28, 2.28, 2.28)),
    2: ((3.35, 3.39, 3.40), (2.28, 2.28, 2.28)),
    3: ((3.35, 3.39, 3.35), (2.28, 2.33, 2.28)),
    4: ((3.35, 3.39, 3.42), (2.28, 2.33, 2.37)),
    5: ((3.35, 3.44, 3.47), (2.28, 2.26, 2.40)),
}

BINNED_CENSOR = CensorSpec(delta=0.01, d_max=7.0, analysis_lo=0.0)
NORMAL_CENSOR = CensorSpec(delta=0.02, d_max=10.5, analysis_lo=0.0)
EXPONENTIAL_CENSOR = CensorSpec(delta=0.01, d_max=7.0, analysis_lo=0.0)

CASE_IDS = (
    ("NULL_L",) + tuple(f"L{i}" for i in range(1, 6))
    + ("NULL_N",) + tuple(f"N{i}" for i in range(1, 6))
    + ("NULL_E",) + tuple(f"E{i}" for i in range(1, 6))
)


def _binned_case(case_id: str, freq: tuple[int, ...], params, censor: CensorSpec) -> AlternativeCase:
    r_y, r_z, eta_y, eta_z = params
    return AlternativeCase(case_id, BinnedSpec(freq, 0, 1.0), BinnedSpec(freq, eta_y, r_y),
                           BinnedSpec(freq, eta_z, r_z), censor)


def case_params(case_id: str) -> AlternativeCase:
    """Look up a named null or alternative case."""
    cid = case_id.strip().upper()
    if cid == "NULL_L":
        return _binned_case(cid, V_O, (1.0, 1.0, 0, 0), BINNED_CENSOR)
    if cid == "NULL_E":
        e = ExponentialSpec(1.0)
        return AlternativeCase(cid, e, e, e, CensorSpec(delta=0.01, d_max=10.0, analysis_lo=0.0))
    family, _, num = cid.partition("_") if cid.startswith("NULL") else (cid[0], "", cid[1:])
    if cid == "NULL_N":
        family, num = "N", "0"
    try:
        k = int(num)
    except ValueError:
        raise KeyError(f"unknown case {case_id!r}") from None
    if family == "L" and k in _BINNED_CASES:
        return _binned_case(cid, V_O, _BINNED_CASES[k], BINNED_CENSOR)
    if family == "E" and k in _BINNED_CASES:
        return _binned_case(cid, V_EXP, _BINNED_CASES[k], EXPONENTIAL_CENSOR)
    if family == "N" and k in _NORMAL_CASES:
        mus, sigmas = _NORMAL_CASES[k]
        x, y, z = (NormalSpec(m, s) for m, s in zip(mus, sigmas))
        return AlternativeCase(cid, x, y, z, NORMAL_CENSOR)
    raise KeyError(f"unknown case {case_id!r}")


def replicate_rng(seed: int, replicate: int) -> np.random.Generator:
    """Independent stream for one Monte Carlo replicate, keyed by (seed, replicate)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(replicate)]))
