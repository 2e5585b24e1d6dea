"""Per-subject distance samples: trimming, pooling, censoring and summaries."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .stats import rank_sum_z


class Hemisphere(str, enum.Enum):
    LEFT = "left"
    RIGHT = "right"
    NONE = "none"

    @classmethod
    def parse(cls, text: "Hemisphere | str") -> "Hemisphere":
        if isinstance(text, Hemisphere):
            return text
        key = str(text).strip().lower()
        aliases = {"l": cls.LEFT, "left": cls.LEFT, "r": cls.RIGHT, "right": cls.RIGHT,
                   "": cls.NONE, "none": cls.NONE, "na": cls.NONE}
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown hemisphere {text!r}") from None


@dataclass(frozen=True)
class SubjectDistances:
    subject_id: str
    group: str
    hemisphere: Hemisphere
    distances: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "hemisphere", Hemisphere.parse(self.hemisphere))
        object.__setattr__(self, "distances", np.asarray(self.distances, dtype=float).ravel())


@dataclass(frozen=True)
class GroupPool:
    group: str
    distances: np.ndarray
    subjects: tuple[str, ...] = ()
    hemisphere: Hemisphere = Hemisphere.NONE

    def __post_init__(self) -> None:
        object.__setattr__(self, "distances", np.asarray(self.distances, dtype=float).ravel())

    def __len__(self) -> int:
        return self.distances.size


@dataclass(frozen=True)
class CensorSpec:
    """Threshold grid k*delta for k = 0..floor(d_max/delta); reporting starts at analysis_lo."""

    delta: float = 0.01
    d_max: float = 5.5
    analysis_lo: float = 0.5
    voxel_size: float | None = None

    def __post_init__(self) -> None:
        if not self.delta > 0:
            raise ValueError("bin size delta must be positive")
        if self.voxel_size is not None:
            h = self.voxel_size
            if not (h / 10.0 - 1e-12 <= self.delta <= h + 1e-12):
                raise ValueError(f"bin size {self.delta} outside [h/10, h] for voxel size {h}")
        if self.d_max < 0:
            raise ValueError("d_max must be nonnegative")

    def all_thresholds(self) -> np.ndarray:
        k = math.floor(self.d_max / self.delta + 1e-9)
        return np.arange(k + 1) * self.delta

    def thresholds(self) -> np.ndarray:
        """Thresholds at or above analysis_lo."""
        g = self.all_thresholds()
        return g[g >= self.analysis_lo - 1e-9 * self.delta]


@dataclass(frozen=True)
class TrimResult:
    kept: np.ndarray
    below: int
    above: int

    @property
    def total(self) -> int:
        return self.kept.size + self.below + self.above

    @property
    def frac_below(self) -> float:
        return self.below / self.total if self.total else 0.0

    @property
    def frac_above(self) -> float:
        return self.above / self.total if self.total else 0.0


@dataclass(frozen=True)
class DescriptiveStats:
    n: int
    mean: float
    median: float
    sd: float


def trim(distances: Sequence[float], lo: float = -0.5, hi: float = 5.5) -> TrimResult:
    """Keep distances in (lo, hi] and count what fell outside on each side."""
    if not lo < hi:
        raise ValueError("trim window needs lo < hi")
    d = np.asarray(distances, dtype=float).ravel()
    below = d <= lo
    above = d > hi
    return TrimResult(d[~below & ~above], int(below.sum()), int(above.sum()))


def trim_subject(subject: SubjectDistances, lo: float = -0.5, hi: float = 5.5) -> SubjectDistances:
    return SubjectDistances(subject.subject_id, subject.group, subject.hemisphere,
                            trim(subject.distances, lo, hi).kept)


def pool(subjects: Iterable[SubjectDistances], group: str | None = None) -> GroupPool:
    """Merge the distances of subjects sharing one group label and hemisphere."""
    subs = list(subjects)
    if not subs:
        raise ValueError("cannot pool an empty subject list")
    label = subs[0].group if group is None else group
    hemis = {s.hemisphere for s in subs}
    if any(s.group != label for s in subs):
        raise ValueError(f"subjects from more than one group passed to pool({label!r})")
    if len(hemis) > 1:
        raise ValueError("subjects from more than one hemisphere passed to pool")
    return GroupPool(
        group=label,
        distances=np.concatenate([s.distances for s in subs]),
        subjects=tuple(s.subject_id for s in subs),
        hemisphere=hemis.pop(),
    )


def pools_by_group(subjects: Iterable[SubjectDistances], order: Sequence[str] | None = None) -> list[GroupPool]:
    """Pool subjects per group, in ``order`` or first-appearance order."""
    by: dict[str, list[SubjectDistances]] = {}
    for s in subjects:
        by.setdefault(s.group, []).append(s)
    labels = list(order) if order is not None else list(by)
    missing = [g for g in labels if g not in by]
    if missing:
        raise ValueError(f"no subjects for group(s) {', '.join(missing)}")
    return [pool(by[g], g) for g in labels]


def censor_at(distances: np.ndarray | GroupPool, gamma: float) -> np.ndarray:
    """Distances d <= gamma."""
    if gamma < 0:
        raise ValueError("censoring threshold must be nonnegative")
    d = distances.distances if isinstance(distances, GroupPool) else np.asarray(distances, dtype=float)
    return d[d <= gamma]


def descriptives(distances: np.ndarray | GroupPool) -> DescriptiveStats:
    d = distances.distances if isinstance(distances, GroupPool) else np.asarray(distances, dtype=float)
    if d.size == 0:
        raise ValueError("descriptives of an empty sample")
    sd = float(d.std(ddof=1)) if d.size > 1 else 0.0
    return DescriptiveStats(int(d.size), float(d.mean()), float(np.median(d)), sd)


def silverman_bandwidth(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    sd = x.std(ddof=1)
    q75, q25 = np.percentile(x, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34) if q75 > q25 else sd
    return 0.9 * spread * x.size ** (-0.2)


def kde(distances: Sequence[float], bandwidth: float | None = None, n_points: int = 512,
        chunk: int = 4_000_000) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian kernel density on an even grid over [min - 3bw, max + 3bw].

    ``bandwidth=None`` selects Silverman's rule.
    """
    x = np.asarray(distances, dtype=float).ravel()
    if x.size < 2:
        raise ValueError("KDE needs at least two points")
    if x.std() == 0.0:
        raise ValueError("KDE of a zero-variance sample")
    bw = silverman_bandwidth(x) if bandwidth is None else float(bandwidth)
    if not bw > 0:
        raise ValueError("KDE bandwidth must be positive")
    grid = np.linspace(x.min() - 3 * bw, x.max() + 3 * bw, n_points)
    dens = np.zeros(n_points)
    step = max(1, chunk // n_points)
    for s in range(0, x.size, step):
        u = (grid[:, None] - x[None, s:s + step]) / bw
        dens += np.exp(-0.5 * u * u).sum(axis=1)
    dens /= x.size * bw * math.sqrt(2.0 * math.pi)
    return grid, dens


def histogram(distances: Sequence[float], bin_width: float,
              lo: float | None = None, hi: float | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Counts on bins [lo + i*w, lo + (i+1)*w); returns (bin_lo, bin_hi, count)."""
    x = np.asarray(distances, dtype=float).ravel()
    if not bin_width > 0:
        raise ValueError("bin width must be positive")
    lo = float(np.floor(x.min() / bin_width) * bin_width) if lo is None else lo
    hi = float(x.max()) if hi is None else hi
    nbins = max(1, int(math.floor((hi - lo) / bin_width + 1e-9)) + 1)
    edges = lo + np.arange(nbins + 1) * bin_width
    counts, _ = np.histogram(x, bins=edges)
    return edges[:-1], edges[1:], counts


def subject_vs_group_wrs(subject: SubjectDistances, pools: Sequence[GroupPool],
                         all_subjects: Sequence[SubjectDistances] | None = None) -> list[float]:
    """Standardized rank-sum statistic of one subject against each group pool.

    When ``all_subjects`` is given, the subject's own group pool is rebuilt
    without that subject (leave-one-out); otherwise every pool passed in must
    already exclude it.
    """
    out = []
    for gp in pools:
        if gp.group == subject.group and subject.subject_id in gp.subjects:
            if all_subjects is None:
                raise ValueError(f"pool {gp.group!r} still contains subject {subject.subject_id!r}")
            others = [s for s in all_subjects
                      if s.group == gp.group and s.subject_id != subject.subject_id]
            if not others:
                raise ValueError(f"no other subjects left in group {gp.group!r}")
            gp = pool(others, gp.group)
        if len(gp) == 0:
            raise ValueError(f"comparison pool {gp.group!r} is empty")
        out.append(rank_sum_z(subject.distances, gp.distances))
    return out
