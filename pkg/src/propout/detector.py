"""Minimal-pattern Monte-Carlo detection of outlying proportions.

Each replicate draws a pattern of ``floor(H * K)`` columns uniformly without
replacement, pools them into an estimate of the common proportion, and tests
every column outside the pattern against the binomial outlier region for its
own depth. A column is declared an outlier when the share of its tests that
landed in the region exceeds the vote threshold ``r``.

Replicates are grouped into fixed-size blocks and every block draws from its
own stream, spawned from the master seed by block index. Results therefore
do not depend on how many worker threads run the blocks.
"""

from __future__ import annotations

import enum
import logging
import math
import secrets
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace

import numpy as np

from .binomial import TAIL_MODES, UPPER, inlier_bounds
from .errors import InputError, ParameterError
from .table import ProportionTable

logger = logging.getLogger(__name__)

BLOCK_SIZE = 250


class Label(str, enum.Enum):
    OUTLIER = "outlier"
    INLIER = "inlier"
    INDETERMINATE = "indeterminate"

    def __str__(self):
        return self.value


def fresh_seed() -> int:
    return secrets.randbits(64)


@dataclass(frozen=True)
class DetectorParams:
    alpha: float = 1e-3
    pattern_fraction: float = 0.5
    vote_threshold: float = 0.5
    replicates: int = 1000
    tail: str = UPPER
    seed: int | None = None

    def __post_init__(self):
        if not (0.0 < self.alpha < 1.0):
            raise ParameterError(f"alpha must lie in (0, 1), got {self.alpha!r}")
        if not (0.0 < self.pattern_fraction < 1.0):
            raise ParameterError(
                f"pattern fraction must lie in (0, 1), got {self.pattern_fraction!r}"
            )
        if not (0.0 <= self.vote_threshold < 1.0):
            raise ParameterError(
                f"vote threshold must lie in [0, 1), got {self.vote_threshold!r}"
            )
        if isinstance(self.replicates, bool) or int(self.replicates) != self.replicates or self.replicates < 1:
            raise ParameterError(f"replicates must be a positive integer, got {self.replicates!r}")
        if self.tail not in TAIL_MODES:
            raise ParameterError(f"tail must be one of {TAIL_MODES}, got {self.tail!r}")
        if self.seed is not None and not (0 <= self.seed < 2**64):
            raise ParameterError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")

    def pattern_size(self, k: int) -> int:
        """``floor(H * K)`` clamped to ``[1, K - 1]``."""
        if k < 2:
            raise ParameterError(f"need at least 2 columns to form a pattern, got K={k}")
        return min(max(math.floor(self.pattern_fraction * k), 1), k - 1)

    def resolved(self) -> "DetectorParams":
        return self if self.seed is not None else replace(self, seed=fresh_seed())


@dataclass(frozen=True)
class ReplicateAudit:
    """What one replicate did: its pattern, pooled estimate and tests."""

    replicate: int
    pattern: tuple[int, ...]
    p_tilde: float
    tested: tuple[int, ...]
    hits: tuple[int, ...]
    bounds: dict[int, tuple[int, int]]


@dataclass(frozen=True, eq=False)
class DetectionResult:
    table: ProportionTable
    params: DetectorParams
    checks: np.ndarray
    hits: np.ndarray
    labels: tuple[Label, ...]
    pattern_size: int
    audit: tuple[ReplicateAudit, ...] | None = None

    @property
    def ids(self):
        return self.table.ids

    @property
    def ratios(self) -> np.ndarray:
        """``S_k / C_k``, NaN for columns that were never tested."""
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.checks > 0, self.hits / np.maximum(self.checks, 1), np.nan)

    @property
    def is_outlier(self) -> np.ndarray:
        return np.array([lab is Label.OUTLIER for lab in self.labels], dtype=bool)

    @property
    def outliers(self) -> list[str]:
        return [i for i, lab in zip(self.ids, self.labels) if lab is Label.OUTLIER]

    @property
    def patterns_sampled(self) -> int:
        return self.params.replicates

    def records(self) -> list[dict]:
        """Per-column report rows."""
        t = self.table
        rows = []
        for k, ratio in enumerate(self.ratios):
            rows.append(
                {
                    "id": t.ids[k],
                    "n": int(t.n[k]),
                    "d": int(t.d[k]),
                    "p_hat": float(t.n[k] / t.d[k]),
                    "S": int(self.hits[k]),
                    "C": int(self.checks[k]),
                    "ratio": None if math.isnan(ratio) else float(ratio),
                    "classification": self.labels[k].value,
                }
            )
        return rows

    def summary(self) -> dict:
        return {
            "K": self.table.k,
            "n_outliers": int(self.is_outlier.sum()),
            "n_indeterminate": sum(lab is Label.INDETERMINATE for lab in self.labels),
            "pattern_size": self.pattern_size,
            "params": asdict(self.params),
        }


def classify(hits: int, checks: int, r: float) -> Label:
    """Strict vote rule: outlier iff ``checks > 0`` and ``hits / checks > r``."""
    if checks == 0:
        return Label.INDETERMINATE
    return Label.OUTLIER if hits / checks > r else Label.INLIER


def _sample_patterns(k, h, rng, count):
    # the h smallest of K iid uniforms index a uniform h-subset
    keys = rng.random((count, k))
    idx = np.argpartition(keys, h - 1, axis=1)[:, :h]
    mask = np.zeros((count, k), dtype=bool)
    np.put_along_axis(mask, idx, True, axis=1)
    return mask


def sample_pattern(k: int, h: int, rng: np.random.Generator) -> np.ndarray:
    """A uniformly random ``h``-subset of ``range(k)``, sorted."""
    if not 1 <= h <= k - 1:
        raise ParameterError(f"pattern size must lie in [1, K-1] = [1, {k - 1}], got {h}")
    return np.flatnonzero(_sample_patterns(k, h, rng, 1)[0])


def estimate_p(table: ProportionTable, pattern) -> float:
    """Pooled proportion of the pattern's columns."""
    idx = np.asarray(list(pattern) if isinstance(pattern, (set, frozenset)) else pattern, dtype=np.intp)
    if idx.size == 0:
        raise ParameterError("pattern must contain at least one column")
    return int(table.n[idx].sum()) / int(table.d[idx].sum())


def block_stream(seed: int, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(block,)))


def _run_block(table, params, h, depths, depth_idx, block, start, count, audit):
    rng = block_stream(params.seed, block)
    mask = _sample_patterns(table.k, h, rng, count)
    num = mask @ table.n
    den = mask @ table.d
    lo = np.empty((count, depths.size), dtype=np.int64)
    hi = np.empty_like(lo)
    alpha, tail = params.alpha, params.tail
    for b in range(count):
        p_tilde = int(num[b]) / int(den[b])
        for u, du in enumerate(depths):
            lo[b, u], hi[b, u] = inlier_bounds(int(du), p_tilde, alpha, tail)
    tested = ~mask
    n = table.n
    positive = tested & ((n < lo[:, depth_idx]) | (n > hi[:, depth_idx]))
    trail = None
    if audit:
        trail = [
            ReplicateAudit(
                replicate=start + b,
                pattern=tuple(np.flatnonzero(mask[b]).tolist()),
                p_tilde=int(num[b]) / int(den[b]),
                tested=tuple(np.flatnonzero(tested[b]).tolist()),
                hits=tuple(np.flatnonzero(positive[b]).tolist()),
                bounds={int(du): (int(lo[b, u]), int(hi[b, u])) for u, du in enumerate(depths)},
            )
            for b in range(count)
        ]
    return positive.sum(axis=0), tested.sum(axis=0), trail


def detect(
    table: ProportionTable,
    params: DetectorParams | None = None,
    *,
    threads: int = 1,
    audit: bool = False,
) -> DetectionResult:
    """Run the minimal-pattern detector on ``table``.

    The output is a deterministic function of ``(table, params)``; an unset
    seed is drawn fresh and echoed in ``result.params``. ``threads`` only
    changes wall-clock time.
    """
    params = (params or DetectorParams()).resolved()
    if table.k < 2:
        raise InputError(f"need at least 2 columns, got K={table.k}")
    h = params.pattern_size(table.k)
    depths, depth_idx = np.unique(table.d, return_inverse=True)
    blocks = [
        (i, start, min(BLOCK_SIZE, params.replicates - start))
        for i, start in enumerate(range(0, params.replicates, BLOCK_SIZE))
    ]

    def work(block):
        return _run_block(table, params, h, depths, depth_idx, *block, audit)

    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, blocks))
    else:
        parts = [work(b) for b in blocks]

    hits = np.zeros(table.k, dtype=np.int64)
    checks = np.zeros(table.k, dtype=np.int64)
    for s, c, _ in parts:
        hits += s
        checks += c
    labels = tuple(
        classify(int(s), int(c), params.vote_threshold) for s, c in zip(hits, checks)
    )
    never = [table.ids[k] for k, lab in enumerate(labels) if lab is Label.INDETERMINATE]
    if never:
        logger.warning(
            "%d column(s) were never tested and are indeterminate (increase replicates): %s",
            len(never),
            ", ".join(never[:10]),
        )
    trail = tuple(a for *_, part in parts for a in part) if audit else None
    hits.flags.writeable = False
    checks.flags.writeable = False
    return DetectionResult(table, params, checks, hits, labels, h, trail)

