"""Scenario generation, scoring and estimator diagnostics.

Scenarios follow a planting protocol: inlier columns are plain binomial
draws, outlier columns are drawn from the binomial law conditioned on the
outlier region at level ``alpha_gen`` minus its innermost count, so that no
planted value sits on the region's border. Two-tailed scenarios pick the
lower or upper part with equal probability whenever the lower part is
usable.
"""

from __future__ import annotations

import csv
import hashlib
import io
import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from typing import Sequence

import numpy as np
from scipy import stats

from .binomial import TWO, UPPER, BinomialSpec, one_tailed_region, two_tailed_region
from .detector import DetectionResult, DetectorParams, _sample_patterns, detect
from .errors import InputError, ParameterError, ScenarioError
from .table import ProportionTable

TYPES = "types"
TYPES_AND_ANTITYPES = "types-and-antitypes"
SCENARIO_TAILS = {TYPES: UPPER, TYPES_AND_ANTITYPES: TWO}

CASE_STUDY_DEPTHS = (5000, 5001, 2563, 2486)
CASE_STUDY_WEIGHTS = (0.7, 0.1, 0.1, 0.1)


def alternating_depths(k: int, values: Sequence[int] = (100, 1000)) -> tuple[int, ...]:
    return tuple(values[i % len(values)] for i in range(k))


@dataclass(frozen=True)
class ScenarioSpec:
    """Configuration of one simulated table.

    ``depths`` is either a single depth shared by all columns or one depth
    per column; planted outliers take the first ``n_outliers`` depths.
    ``alpha_gen=None`` means "use the detection level of the experiment".
    With ``shuffle_depths`` the depths are dealt to columns in a fresh random
    order for every draw, so planted outliers get no fixed depth.
    """

    k: int
    n_outliers: int
    depths: int | tuple[int, ...]
    p: float
    alpha_gen: float | None = None
    tail: str = TYPES
    seed: int = 0
    name: str | None = None
    shuffle_depths: bool = False

    def __post_init__(self):
        if self.k < 2:
            raise ParameterError(f"K must be at least 2, got {self.k}")
        if not 0 <= self.n_outliers < self.k:
            raise ParameterError(f"need 0 <= NO < K, got NO={self.n_outliers}, K={self.k}")
        if not isinstance(self.depths, (int, np.integer)):
            object.__setattr__(self, "depths", tuple(int(x) for x in self.depths))
            if len(self.depths) != self.k:
                raise ParameterError(f"expected {self.k} depths, got {len(self.depths)}")
        if min(self.depth_array()) < 1:
            raise ParameterError("depths must be positive")
        if not 0.0 < self.p < 1.0:
            raise ParameterError(f"p must lie in (0, 1), got {self.p}")
        if self.alpha_gen is not None and not 0.0 < self.alpha_gen < 1.0:
            raise ParameterError(f"alpha_gen must lie in (0, 1), got {self.alpha_gen}")
        if self.tail not in SCENARIO_TAILS:
            raise ParameterError(f"tail must be one of {tuple(SCENARIO_TAILS)}, got {self.tail!r}")

    def depth_array(self) -> np.ndarray:
        if isinstance(self.depths, (int, np.integer)):
            return np.full(self.k, int(self.depths), dtype=np.int64)
        return np.asarray(self.depths, dtype=np.int64)

    @property
    def depth_label(self) -> str:
        if isinstance(self.depths, (int, np.integer)):
            return str(self.depths)
        distinct = list(dict.fromkeys(self.depths))
        if len(distinct) <= 3 and self.depths == alternating_depths(self.k, distinct):
            return "/".join(map(str, distinct)) + ("*" if self.shuffle_depths else "")
        return "mixed"

    @property
    def detector_tail(self) -> str:
        return SCENARIO_TAILS[self.tail]


@dataclass(frozen=True, eq=False)
class ScenarioTruth:
    """A simulated table with its ground truth.

    ``planted`` lists ``(column, count, side)`` for every planted outlier,
    ``side`` being ``"upper"`` or ``"lower"``.
    """

    table: ProportionTable
    is_outlier: np.ndarray
    planted: tuple[tuple[int, int, str], ...] = ()

    @property
    def n_outliers(self) -> int:
        return int(self.is_outlier.sum())


def admissible_tails(d: int, p: float, alpha: float, tail: str = TYPES):
    """Counts eligible for planting, as ``(lower, upper)`` ranges.

    The innermost count of each part of the outlier region is dropped.
    """
    spec = BinomialSpec(d, p)
    if tail == TYPES:
        region = one_tailed_region(spec, alpha)
        return range(0), range(region.threshold + 1, d + 1)
    region = two_tailed_region(spec, alpha)
    return range(0, max(region.inlier_lo - 1, 0)), range(region.inlier_hi + 2, d + 1)


def _draw_conditional(counts, d, p, rng):
    ks = np.asarray(counts)
    logw = stats.binom.logpmf(ks, d, p)
    w = np.exp(logw - logw.max())
    return int(rng.choice(ks, p=w / w.sum()))


def plant_outlier(d, p, alpha, tail, rng, column=None):
    lower, upper = admissible_tails(d, p, alpha, tail)
    sides = [(s, r) for s, r in (("lower", lower), ("upper", upper)) if len(r)]
    if not sides:
        where = "" if column is None else f"column {column}: "
        raise ScenarioError(
            f"{where}no admissible outlier count for Binomial({d}, {p}) at alpha={alpha}"
        )
    if len(sides) == 2:
        side, counts = sides[1] if rng.random() < 0.5 else sides[0]
    else:
        side, counts = sides[0]
    return _draw_conditional(counts, d, p, rng), side


def scenario_rng(seed) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed))


def generate_scenario(spec: ScenarioSpec, alpha_gen: float | None = None) -> ScenarioTruth:
    """Draw a table with ``spec.n_outliers`` planted outliers, columns shuffled."""
    alpha = alpha_gen if alpha_gen is not None else spec.alpha_gen
    if alpha is None:
        raise ParameterError("alpha_gen is not set for this scenario")
    rng = scenario_rng(spec.seed)
    d = spec.depth_array()
    if spec.shuffle_depths:
        d = rng.permutation(d)
    n = np.empty(spec.k, dtype=np.int64)
    sides = []
    for i in range(spec.n_outliers):
        n[i], side = plant_outlier(int(d[i]), spec.p, alpha, spec.tail, rng, column=i + 1)
        sides.append(side)
    n[spec.n_outliers:] = rng.binomial(d[spec.n_outliers:], spec.p)
    perm = rng.permutation(spec.k)
    table = ProportionTable.from_counts(n[perm], d[perm])
    is_outlier = perm < spec.n_outliers
    where = np.argsort(perm)
    planted = tuple((int(where[i]), int(n[i]), sides[i]) for i in range(spec.n_outliers))
    is_outlier.flags.writeable = False
    return ScenarioTruth(table, is_outlier, planted)


@dataclass(frozen=True)
class EvalMetrics:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def sensitivity(self) -> float:
        """TP / (TP + FN); NaN when there are no true outliers."""
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else math.nan

    @property
    def specificity(self) -> float:
        return self.tn / (self.tn + self.fp) if self.tn + self.fp else math.nan


def score(result: DetectionResult, truth: ScenarioTruth) -> EvalMetrics:
    """Confusion counts; indeterminate columns count as predicted inliers."""
    if result.ids != truth.table.ids:
        raise InputError("detection result and scenario truth have different columns")
    pred = result.is_outlier
    true = truth.is_outlier
    return EvalMetrics(
        tp=int((pred & true).sum()),
        fp=int((pred & ~true).sum()),
        tn=int((~pred & ~true).sum()),
        fn=int((~pred & true).sum()),
    )


# -- estimator diagnostics ---------------------------------------------------


@dataclass(frozen=True, eq=False)
class MSEReport:
    """Bias and variance of the pooled estimate, per evaluated pattern."""

    mode: str
    patterns: int
    bias: np.ndarray
    variance: np.ndarray
    mse: float

    def summary(self) -> dict:
        return {
            "mode": self.mode,
            "patterns": self.patterns,
            "bias_mean": float(self.bias.mean()),
            "bias_min": float(self.bias.min()),
            "bias_max": float(self.bias.max()),
            "bias_sq_mean": float(np.mean(self.bias**2)),
            "variance_mean": float(self.variance.mean()),
            "variance_min": float(self.variance.min()),
            "variance_max": float(self.variance.max()),
            "mse": self.mse,
        }


def _pattern_terms(masks, depths, p, excess, inlier_depths):
    den = masks @ depths
    bias = (masks @ excess) / den
    var = p * (1.0 - p) * (masks @ inlier_depths) / den.astype(float) ** 2
    return bias, var


def _combination_masks(k, h, chunk=1 << 15):
    combos = itertools.combinations(range(k), h)
    while True:
        block = list(itertools.islice(combos, chunk))
        if not block:
            return
        mask = np.zeros((len(block), k))
        rows = np.repeat(np.arange(len(block)), h)
        mask[rows, np.asarray(block).ravel()] = 1.0
        yield mask


def estimator_mse(
    depths: Sequence[int],
    p: float,
    outlier_counts: Sequence[int],
    h: int,
    mode: str = "exhaustive",
    samples: int = 100_000,
    cap: int = 10**6,
    seed: int = 0,
) -> MSEReport:
    """MSE of the pooled estimate when the first ``len(outlier_counts)``
    columns hold fixed outlying counts and the rest are Binomial(d_i, p).

    ``mode="exhaustive"`` averages over every ``h``-subset of columns;
    ``mode="monte-carlo"`` over ``samples`` uniformly drawn ones.
    """
    depths = np.asarray(depths, dtype=np.int64)
    k = depths.size
    n_out = len(outlier_counts)
    if not 1 <= h <= k:
        raise ParameterError(f"pattern size must lie in [1, {k}], got {h}")
    if n_out > k:
        raise ParameterError("more outlier counts than columns")
    if not 0.0 <= p <= 1.0:
        raise ParameterError(f"p must lie in [0, 1], got {p}")
    excess = np.zeros(k)
    excess[:n_out] = np.asarray(outlier_counts, dtype=float) - depths[:n_out] * p
    inlier_depths = depths.astype(float)
    inlier_depths[:n_out] = 0.0
    fdepths = depths.astype(float)

    if mode == "exhaustive":
        total = math.comb(k, h)
        if total > cap:
            raise ParameterError(
                f"{total} patterns exceed the exhaustive cap of {cap}; use monte-carlo mode"
            )
        parts = [_pattern_terms(m, fdepths, p, excess, inlier_depths) for m in _combination_masks(k, h)]
    elif mode == "monte-carlo":
        if samples < 1:
            raise ParameterError(f"samples must be positive, got {samples}")
        if h == k:
            raise ParameterError("monte-carlo mode needs h < K")
        rng = scenario_rng(seed)
        parts = []
        for start in range(0, samples, 1 << 15):
            masks = _sample_patterns(k, h, rng, min(1 << 15, samples - start)).astype(float)
            parts.append(_pattern_terms(masks, fdepths, p, excess, inlier_depths))
        total = samples
    else:
        raise ParameterError(f"unknown mode {mode!r}; expected 'exhaustive' or 'monte-carlo'")
    bias = np.concatenate([b for b, _ in parts])
    var = np.concatenate([v for _, v in parts])
    mse = float(np.mean(bias**2 + var))
    return MSEReport(mode, total, bias, var, mse)


# -- experiments ---------------------------------------------------------------


def derive_seed(master: int, *key) -> int:
    """A 64-bit seed from ``master`` and a stable key, independent of call order."""
    digest = hashlib.sha256(json.dumps([master, *key], sort_keys=True).encode()).digest()
    return int.from_bytes(digest[:8], "little")


def _cell_key(spec: ScenarioSpec, alpha: float):
    d = asdict(spec)
    d.pop("seed")
    d.pop("name")
    return [d, alpha]


@dataclass(frozen=True)
class CellResult:
    spec: ScenarioSpec
    alpha: float
    reps: int
    sensitivity: float
    specificity: float
    totals: EvalMetrics

    def row(self) -> dict:
        return {
            "name": self.spec.name or "",
            "K": self.spec.k,
            "NO": self.spec.n_outliers,
            "d": self.spec.depth_label,
            "p": self.spec.p,
            "tail": self.spec.tail,
            "alpha": self.alpha,
            "reps": self.reps,
            "sens": None if math.isnan(self.sensitivity) else self.sensitivity,
            "spec": None if math.isnan(self.specificity) else self.specificity,
            "tp": self.totals.tp,
            "fp": self.totals.fp,
            "tn": self.totals.tn,
            "fn": self.totals.fn,
        }


@dataclass(frozen=True)
class ExperimentResult:
    cells: tuple[CellResult, ...]
    alphas: tuple[float, ...]
    params: DetectorParams

    def cell(self, spec: ScenarioSpec, alpha: float) -> CellResult:
        for c in self.cells:
            if c.spec == spec and c.alpha == alpha:
                return c
        raise KeyError((spec, alpha))

    def to_csv(self) -> str:
        buf = io.StringIO()
        rows = [c.row() for c in self.cells]
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        for r in rows:
            writer.writerow({k: _fmt_csv(v) for k, v in r.items()})
        return buf.getvalue()

    def to_text(self) -> str:
        """Rows = scenarios, columns = alpha levels, a sens and a spec line each."""
        specs = list(dict.fromkeys(c.spec for c in self.cells))
        head = ["K", "NO", "d", "p", "tail", ""]
        alpha_cols = [f"{a:g}" for a in self.alphas]
        lines = []
        for spec in specs:
            for metric in ("sens", "spec"):
                lead = (
                    [str(spec.k), str(spec.n_outliers), spec.depth_label, f"{spec.p:g}", spec.tail]
                    if metric == "sens"
                    else [""] * 5
                )
                vals = []
                for a in self.alphas:
                    v = getattr(self.cell(spec, a), "sensitivity" if metric == "sens" else "specificity")
                    vals.append("  -  " if math.isnan(v) else f"{v:.3f}")
                lines.append(lead + [metric] + vals)
        table = [head + alpha_cols] + lines
        widths = [max(len(row[i]) for row in table) for i in range(len(head) + len(alpha_cols))]
        return "\n".join(
            "  ".join(cell.rjust(w) for cell, w in zip(row, widths)).rstrip() for row in table
        ) + "\n"


def _fmt_csv(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


def run_cell(spec: ScenarioSpec, alpha: float, reps: int, params: DetectorParams, threads: int = 1):
    """Mean sensitivity/specificity of one (scenario, alpha) cell over ``reps`` tables."""
    if reps < 1:
        raise ParameterError(f"reps must be at least 1, got {reps}")
    params = params.resolved()
    key = _cell_key(spec, alpha)
    det = replace(params, alpha=alpha, tail=spec.detector_tail)

    def one(rep):
        scen = replace(spec, seed=derive_seed(params.seed, "scenario", key, rep))
        truth = generate_scenario(scen, alpha_gen=spec.alpha_gen if spec.alpha_gen is not None else alpha)
        result = detect(truth.table, replace(det, seed=derive_seed(params.seed, "detect", key, rep)))
        return score(result, truth)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            metrics = list(pool.map(one, range(reps)))
    else:
        metrics = [one(rep) for rep in range(reps)]
    sens = [m.sensitivity for m in metrics]
    spec_ = [m.specificity for m in metrics]
    totals = EvalMetrics(*(sum(getattr(m, f) for m in metrics) for f in ("tp", "fp", "tn", "fn")))
    return CellResult(
        spec,
        alpha,
        reps,
        math.nan if spec.n_outliers == 0 else float(np.mean(sens)),
        float(np.mean(spec_)),
        totals,
    )


def run_experiment(
    grid: Sequence[ScenarioSpec],
    reps: int,
    params: DetectorParams,
    alphas: Sequence[float] | None = None,
    threads: int = 1,
    progress=None,
) -> ExperimentResult:
    """Evaluate every scenario of ``grid`` at every level in ``alphas``.

    Scenario and detector seeds are derived from ``params.seed`` and the
    cell's content, so a cell gives the same numbers whichever grid it is
    part of. ``alphas`` defaults to ``params.alpha`` alone.
    """
    if reps < 1:
        raise ParameterError(f"reps must be at least 1, got {reps}")
    params = params.resolved()
    alphas = tuple(alphas) if alphas else (params.alpha,)
    cells = []
    for spec in grid:
        for a in alphas:
            cells.append(run_cell(spec, a, reps, params, threads))
            if progress:
                progress(cells[-1])
    return ExperimentResult(tuple(cells), alphas, params)


# -- presets -------------------------------------------------------------------

TABLE3_ALPHAS = (1e-6, 5e-6, 1e-5, 5e-5, 1e-4, 5e-4, 1e-3, 5e-3, 1e-2, 5e-2, 1e-1)
TABLE4_ALPHAS = (1e-4, 5e-4, 1e-3)


def _table3_rows():
    rows = []
    for k, no in ((20, 1), (100, 3)):
        for p in (0.01, 0.05, 0.10):
            rows.append(ScenarioSpec(k, no, 100, p, tail=TYPES))
    for d in (100, 1000):
        for p in (0.05, 0.10, 0.20):
            rows.append(ScenarioSpec(100, 3, d, p, tail=TYPES_AND_ANTITYPES))
    return rows


def _table4_rows():
    rows = []
    for k, no in ((20, 1), (100, 3), (500, 10)):
        for p in (0.01, 0.05, 0.10):
            rows.append(ScenarioSpec(k, no, alternating_depths(k), p, tail=TYPES, shuffle_depths=True))
    for k, no in ((100, 3), (500, 10)):
        for p in (0.05, 0.10, 0.20, 0.50):
            rows.append(
                ScenarioSpec(k, no, alternating_depths(k), p, tail=TYPES_AND_ANTITYPES, shuffle_depths=True)
            )
    return rows


def case_study_spec(seed: int = 0, p: float = 5e-4, alpha_gen: float = 1e-4) -> ScenarioSpec:
    """Synthetic stand-in for a 3572-row variant table with 26 planted outliers.

    Depths are drawn from the values seen in typical variant tables; inlier
    counts are single digits at depth 5000.
    """
    rng = scenario_rng([seed, 1])
    depths = rng.choice(CASE_STUDY_DEPTHS, size=3572, p=CASE_STUDY_WEIGHTS)
    return ScenarioSpec(3572, 26, tuple(depths), p, alpha_gen=alpha_gen, seed=seed, name="case-study")


@dataclass(frozen=True)
class Preset:
    rows: tuple[ScenarioSpec, ...]
    alphas: tuple[float, ...]


def _presets():
    out = {}
    t3, t4 = _table3_rows(), _table4_rows()
    for i, row in enumerate(t3, 1):
        out[f"table3-row{i}"] = Preset((replace(row, name=f"table3-row{i}"),), TABLE3_ALPHAS)
    for i, row in enumerate(t4, 1):
        out[f"table4-row{i}"] = Preset((replace(row, name=f"table4-row{i}"),), TABLE4_ALPHAS)
    out["table3"] = Preset(tuple(p.rows[0] for n, p in out.items() if n.startswith("table3")), TABLE3_ALPHAS)
    out["table4"] = Preset(tuple(p.rows[0] for n, p in out.items() if n.startswith("table4")), TABLE4_ALPHAS)
    out["case-study"] = Preset((case_study_spec(),), (1e-4, 1e-3))
    return out


PRESETS = _presets()
