"""Passive eavesdropper: statistics, two-sample tests and attack benches.

Eve sees only :class:`~kljn.loop.WireTrace` objects.  The three
distinguishers follow the scikit-learn estimator API: ``fit`` on labelled
traces (``"LH"`` / ``"HL"``), then ``predict`` on new ones.  ``calibrate``
is a shortcut that simulates the labelled traces from the public loop
parameters, which Eve is assumed to know.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from joblib import Parallel, delayed
from scipy.spatial.distance import cdist
from scipy.stats import binomtest
from sklearn.base import BaseEstimator, ClassifierMixin, clone
from sklearn.utils.validation import check_is_fitted

from ._rng import CALIBRATION, EPISODE, SeedLike, derive_rng, derive_seed, make_rng
from ._validation import check_count, check_pairs
from .loop import LoopState, ResistorPair, WireTrace, simulate_state
from .noise import NoiseAssignment

MIXED_STATES = (LoopState.LH, LoopState.HL)
DISTINGUISHER_KINDS = ("corr_sign", "tail_quadrant", "ref_match")


class DegenerateTraceError(ValueError):
    """A trace without spread in V or I cannot feed a correlation estimate."""


class TooFewTailSamplesError(ValueError):
    pass


# -- per-trace statistics ---------------------------------------------------


def corr_sign_statistic(trace) -> float:
    """Pearson correlation of V and I over one trace.

    Both axes are divided by their largest magnitude before any product is
    formed, so Cauchy-sized samples cannot overflow.
    """
    xy = check_pairs(trace, "trace", min_points=2)
    v = xy[:, 0] - xy[:, 0].mean()
    i = xy[:, 1] - xy[:, 1].mean()
    v_max = np.max(np.abs(v))
    i_max = np.max(np.abs(i))
    if v_max == 0 or i_max == 0:
        raise DegenerateTraceError("trace has zero variance in V or I")
    v = v / v_max
    i = i / i_max
    r = np.dot(v, i) / math.sqrt(np.dot(v, v) * np.dot(i, i))
    return float(min(1.0, max(-1.0, r)))


def tail_quadrant_statistic(trace, q: float = 0.95) -> float:
    """Mean of ``sign(V) * sign(I)`` over samples whose ``|V|`` exceeds its ``q``-quantile."""
    _check_quantile(q)
    xy = check_pairs(trace, "trace")
    v, i = xy[:, 0], xy[:, 1]
    abs_v = np.abs(v)
    tail = abs_v > np.quantile(abs_v, q)
    count = int(tail.sum())
    if count < 10:
        raise TooFewTailSamplesError(
            f"only {count} samples above the {q} quantile of |V|; use a longer trace or a smaller q"
        )
    return float(np.mean(np.sign(v[tail]) * np.sign(i[tail])))


def _check_quantile(q) -> float:
    q = float(q)
    if not 0.5 < q < 1.0:
        raise ValueError(f"q must lie strictly inside (0.5, 1), got {q}")
    return q


# -- energy distance --------------------------------------------------------


@dataclass(frozen=True)
class EnergyTestResult:
    statistic: float
    p_value: float
    permutations: int
    points_used: tuple[int, int]
    clamped: int = 0


def mad_scale(points: np.ndarray) -> np.ndarray:
    """Per-axis median absolute deviation; axes with zero MAD get scale 1."""
    med = np.median(points, axis=0)
    mad = np.median(np.abs(points - med), axis=0)
    return np.where(mad > 0, mad, 1.0)


def subsample(points: np.ndarray, max_points: int | None) -> np.ndarray:
    """Evenly spaced rows, at most ``max_points`` of them (samples are i.i.d.)."""
    if max_points is None or len(points) <= max_points:
        return points
    idx = np.linspace(0, len(points) - 1, max_points).round().astype(np.intp)
    return points[idx]


def _distances(a: np.ndarray, b: np.ndarray, cap: float) -> tuple[np.ndarray, int]:
    with np.errstate(over="ignore", invalid="ignore"):
        d = cdist(a, b)
    bad = ~(d <= cap)
    clamped = int(bad.sum())
    if clamped:
        d[bad] = cap
    return d, clamped


def _sum_cap(n_pairs: int) -> float:
    # largest per-distance value whose sum over all pairs stays finite
    return np.finfo(float).max / max(n_pairs, 1)


def energy_distance(xs, ys, scale=None) -> float:
    """V-statistic energy distance ``2 E|X-Y| - E|X-X'| - E|Y-Y'|`` in 2-d."""
    x = check_pairs(xs, "xs")
    y = check_pairs(ys, "ys")
    if scale is not None:
        x = x / scale
        y = y / scale
    cap = _sum_cap((len(x) + len(y)) ** 2)
    dxy, _ = _distances(x, y, cap)
    dxx, _ = _distances(x, x, cap)
    dyy, _ = _distances(y, y, cap)
    return float(2.0 * dxy.mean() - dxx.mean() - dyy.mean())


def energy_two_sample(
    xs,
    ys,
    permutations: int = 199,
    rng: SeedLike = None,
    max_points: int | None = 4096,
    block_rows: int = 512,
) -> EnergyTestResult:
    """Permutation test of equal joint (V, I) distributions.

    Coordinates are standardised by the pooled per-axis MAD.  Each sample
    is thinned to at most ``max_points`` evenly spaced rows, and the
    pairwise distance matrix is streamed in blocks of ``block_rows`` rows
    so memory stays ``O(block_rows * N)``.  The p-value uses add-one
    smoothing, ``(1 + #{perm >= observed}) / (permutations + 1)``.
    """
    x = check_pairs(xs, "xs", min_points=50)
    y = check_pairs(ys, "ys", min_points=50)
    permutations = check_count(permutations, "permutations", minimum=99)
    rng = make_rng(rng)

    x = subsample(x, max_points)
    y = subsample(y, max_points)
    pooled = np.vstack([x, y])
    pooled = pooled / mad_scale(pooled)
    n, m = len(x), len(y)
    big_n = n + m

    labels = np.zeros((big_n, permutations + 1))
    labels[:n, 0] = 1.0
    for b in range(1, permutations + 1):
        labels[rng.permutation(big_n)[:n], b] = 1.0

    cap = _sum_cap(big_n * big_n)
    row_sums = np.empty(big_n)
    d_labels = np.empty_like(labels)
    clamped = 0
    for start in range(0, big_n, block_rows):
        stop = min(start + block_rows, big_n)
        d, c = _distances(pooled[start:stop], pooled, cap)
        clamped += c
        row_sums[start:stop] = d.sum(axis=1)
        d_labels[start:stop] = d @ labels

    total = row_sums.sum()
    s_xx = np.einsum("ib,ib->b", labels, d_labels)
    z_r = labels.T @ row_sums
    s_xy = z_r - s_xx
    s_yy = total - 2.0 * z_r + s_xx
    stats = 2.0 * s_xy / (n * m) - s_xx / n**2 - s_yy / m**2

    observed = stats[0]
    # relative slack absorbs summation-order noise between identical partitions
    tol = 1e-12 * max(abs(observed), 1e-300)
    exceed = int(np.sum(stats[1:] >= observed - tol))
    return EnergyTestResult(
        statistic=float(max(observed, 0.0)),
        p_value=(1 + exceed) / (permutations + 1),
        permutations=permutations,
        points_used=(n, m),
        clamped=clamped,
    )


# -- distinguishers ---------------------------------------------------------


def _as_trace_list(X) -> list[np.ndarray]:
    if isinstance(X, WireTrace):
        return [X.pairs()]
    if isinstance(X, np.ndarray) and X.ndim == 2:
        return [check_pairs(X, "X")]
    return [check_pairs(t, "X[%d]" % k) for k, t in enumerate(X)]


def _as_labels(y, n_traces: int) -> np.ndarray:
    labels = np.array([str(LoopState(s)) for s in np.ravel(np.asarray(y, dtype=object))])
    if labels.size != n_traces:
        raise ValueError(f"got {n_traces} traces but {labels.size} labels")
    if not set(labels) <= {"LH", "HL"}:
        raise ValueError("labels must be 'LH' or 'HL'")
    return labels


def _simulate_labelled(pair, assignment, n_per_state, n, rng):
    traces, labels = [], []
    for _ in range(n_per_state):
        for state in MIXED_STATES:
            traces.append(simulate_state(state, pair, assignment, n, rng))
            labels.append(state.value)
    return traces, labels


class _SignDistinguisher(ClassifierMixin, BaseEstimator):
    """Thresholds an odd-in-I statistic at zero.

    ``calibration_`` is +1 when LH traces produce the larger statistic.
    """

    kind = ""

    def _statistic(self, xy: np.ndarray) -> float:
        raise NotImplementedError

    def statistic(self, X) -> np.ndarray:
        return np.array([self._statistic(xy) for xy in _as_trace_list(X)])

    def fit(self, X, y):
        traces = _as_trace_list(X)
        labels = _as_labels(y, len(traces))
        stats = np.array([self._statistic(xy) for xy in traces])
        if not (np.any(labels == "LH") and np.any(labels == "HL")):
            raise ValueError("fit needs at least one LH and one HL trace")
        diff = stats[labels == "LH"].mean() - stats[labels == "HL"].mean()
        self.calibration_ = 1 if diff >= 0 else -1
        self.classes_ = np.array(["HL", "LH"])
        return self

    def decision_function(self, X) -> np.ndarray:
        """Oriented statistic; positive values favour LH."""
        check_is_fitted(self, "calibration_")
        return self.calibration_ * self.statistic(X)

    def predict(self, X) -> np.ndarray:
        return np.where(self.decision_function(X) > 0, "LH", "HL")

    def calibrate(self, pair, assignment, n, rng: SeedLike = None, traces_per_state: int = 16):
        """Fit on freshly simulated LH/HL traces of length ``n``."""
        traces, labels = _simulate_labelled(pair, assignment, traces_per_state, n, make_rng(rng))
        return self.fit(traces, labels)

    def describe(self) -> str:
        return self.kind


class CorrSignDistinguisher(_SignDistinguisher):
    """Sign of the V-I correlation; optimal against mis-scaled Gaussian noise."""

    kind = "corr_sign"

    def _statistic(self, xy):
        return corr_sign_statistic(xy)


class TailQuadrantDistinguisher(_SignDistinguisher):
    """Quadrant balance of the ``|V|`` tail; targets heavy-tailed noise."""

    kind = "tail_quadrant"

    def __init__(self, q: float = 0.95):
        self.q = q

    def _statistic(self, xy):
        return tail_quadrant_statistic(xy, self.q)

    def fit(self, X, y):
        _check_quantile(self.q)
        return super().fit(X, y)

    def describe(self) -> str:
        return f"tail_quadrant(q={self.q})"


class RefMatchDistinguisher(ClassifierMixin, BaseEstimator):
    """Nearest reference class by mean energy distance.

    ``fit`` stores the labelled reference traces.  At prediction time the
    observed cloud and every reference are standardised by the observed
    cloud's per-axis MAD, and each observed trace is thinned to
    ``max_points`` rows.
    """

    kind = "ref_match"

    def __init__(self, refs_per_state: int = 8, ref_n: int = 512, max_points: int | None = 1024):
        self.refs_per_state = refs_per_state
        self.ref_n = ref_n
        self.max_points = max_points

    def fit(self, X, y):
        check_count(self.refs_per_state, "refs_per_state")
        traces = _as_trace_list(X)
        labels = _as_labels(y, len(traces))
        self.refs_ = {s: [t for t, lab in zip(traces, labels) if lab == s] for s in ("LH", "HL")}
        if not (self.refs_["LH"] and self.refs_["HL"]):
            raise ValueError("fit needs at least one LH and one HL reference")
        self.classes_ = np.array(["HL", "LH"])
        self.calibration_ = 1
        return self

    def _mean_distances(self, xy: np.ndarray) -> dict[str, float]:
        obs = subsample(xy, self.max_points)
        scale = mad_scale(obs)
        obs = obs / scale
        n_obs = len(obs)
        cap = _sum_cap(4 * max(n_obs, self.ref_n) ** 2)
        d_oo, _ = _distances(obs, obs, cap)
        within_obs = d_oo.mean()
        out = {}
        for state, refs in self.refs_.items():
            dist = []
            for ref in refs:
                r = ref / scale
                d_or, _ = _distances(obs, r, cap)
                d_rr, _ = _distances(r, r, cap)
                dist.append(2.0 * d_or.mean() - within_obs - d_rr.mean())
            out[state] = float(np.mean(dist))
        return out

    def statistic(self, X) -> np.ndarray:
        """Mean distance to HL references minus mean distance to LH references."""
        check_is_fitted(self, "refs_")
        out = []
        for xy in _as_trace_list(X):
            d = self._mean_distances(xy)
            out.append(d["HL"] - d["LH"])
        return np.array(out)

    def decision_function(self, X) -> np.ndarray:
        return self.statistic(X)

    def predict(self, X) -> np.ndarray:
        return np.where(self.decision_function(X) > 0, "LH", "HL")

    def calibrate(self, pair, assignment, n=None, rng: SeedLike = None):
        """Fit on ``refs_per_state`` simulated references of ``ref_n`` samples per state.

        ``n`` is accepted for interface symmetry and ignored.
        """
        check_count(self.ref_n, "ref_n", minimum=100)
        traces, labels = _simulate_labelled(
            pair, assignment, check_count(self.refs_per_state, "refs_per_state"), self.ref_n, make_rng(rng)
        )
        return self.fit(traces, labels)

    def describe(self) -> str:
        return f"ref_match(refs_per_state={self.refs_per_state},ref_n={self.ref_n})"


Distinguisher = CorrSignDistinguisher | TailQuadrantDistinguisher | RefMatchDistinguisher


def make_distinguisher(kind: str, **params) -> Distinguisher:
    if kind == "corr_sign":
        return CorrSignDistinguisher()
    if kind == "tail_quadrant":
        return TailQuadrantDistinguisher(**params)
    if kind == "ref_match":
        return RefMatchDistinguisher(**params)
    raise ValueError(f"unknown distinguisher {kind!r}; valid kinds: {', '.join(DISTINGUISHER_KINDS)}")


@dataclass(frozen=True)
class DistinguisherOutcome:
    statistic: float
    guess: LoopState
    episode_seed: int | None = None


def ref_match_classify(
    observed,
    pair: ResistorPair,
    assignment: NoiseAssignment,
    refs_per_state: int = 8,
    ref_n: int = 512,
    rng: SeedLike = None,
    max_points: int | None = 1024,
) -> DistinguisherOutcome:
    """Simulate fresh LH and HL references and assign ``observed`` to the nearer class."""
    seed = rng if isinstance(rng, int) else None
    est = RefMatchDistinguisher(refs_per_state, ref_n, max_points).calibrate(pair, assignment, rng=rng)
    stat = float(est.statistic(observed)[0])
    return DistinguisherOutcome(stat, LoopState.LH if stat > 0 else LoopState.HL, seed)


# -- advantage estimation ---------------------------------------------------


def wilson_interval(correct: int, total: int, confidence: float = 0.95) -> tuple[float, float]:
    ci = binomtest(correct, total).proportion_ci(confidence_level=confidence, method="wilson")
    return float(ci.low), float(ci.high)


@dataclass(frozen=True)
class AdvantageReport:
    episodes: int
    correct: int
    accuracy: float
    advantage: float
    ci_lo: float
    ci_hi: float
    distinguisher: str
    seed: int
    calibration: int = 1
    config: dict = field(default_factory=dict)

    @property
    def advantage_ci(self) -> tuple[float, float]:
        return 2.0 * self.ci_lo - 1.0, 2.0 * self.ci_hi - 1.0

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def to_table(self) -> str:
        lo, hi = self.advantage_ci
        rows = [
            ("distinguisher", self.distinguisher),
            ("episodes", str(self.episodes)),
            ("correct", str(self.correct)),
            ("accuracy", f"{self.accuracy:.4f}"),
            ("accuracy 95% CI", f"[{self.ci_lo:.4f}, {self.ci_hi:.4f}]"),
            ("advantage", f"{self.advantage:+.4f}"),
            ("advantage 95% CI", f"[{lo:+.4f}, {hi:+.4f}]"),
            ("seed", str(self.seed)),
        ]
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k:<{width}}  {v}" for k, v in rows)


def episode_seed(master_seed: int, index: int) -> int:
    """64-bit seed of episode ``index``; a pure function of its arguments."""
    return int(derive_seed(master_seed, EPISODE, index).generate_state(1, np.uint64)[0])


def _run_episode(template, fitted, pair, assignment, n, master_seed, index) -> tuple[bool, DistinguisherOutcome]:
    seed = episode_seed(master_seed, index)
    rng = make_rng(seed)
    state = MIXED_STATES[int(rng.integers(2))]
    trace = simulate_state(state, pair, assignment, n, rng)
    est = fitted if fitted is not None else clone(template).calibrate(pair, assignment, rng=rng)
    stat = float(est.decision_function(trace)[0])
    guess = LoopState.LH if stat > 0 else LoopState.HL
    return guess == state, DistinguisherOutcome(stat, guess, seed)


def estimate_advantage(
    distinguisher: Distinguisher,
    pair: ResistorPair,
    assignment: NoiseAssignment,
    episodes: int,
    samples_per_episode: int,
    master_seed: int,
    n_jobs: int | None = 1,
    return_outcomes: bool = False,
):
    """Monte Carlo estimate of ``2 * accuracy - 1`` for guessing LH vs HL.

    Episode ``k`` draws its hidden state, trace and (for reference
    matching) fresh references from the stream seeded by
    ``episode_seed(master_seed, k)``.  Sign-based distinguishers are
    calibrated once from the master seed's calibration stream.  The report
    is identical for any ``n_jobs``.
    """
    episodes = check_count(episodes, "episodes", minimum=10)
    n = check_count(samples_per_episode, "samples_per_episode")
    template = clone(distinguisher)
    fitted = None
    calibration = 1
    if not isinstance(template, RefMatchDistinguisher):
        fitted = template.calibrate(pair, assignment, n, derive_rng(master_seed, CALIBRATION))
        calibration = fitted.calibration_

    results = Parallel(n_jobs=n_jobs)(
        delayed(_run_episode)(template, fitted, pair, assignment, n, master_seed, k) for k in range(episodes)
    )
    correct = sum(ok for ok, _ in results)
    accuracy = correct / episodes
    lo, hi = wilson_interval(correct, episodes)
    report = AdvantageReport(
        episodes=episodes,
        correct=correct,
        accuracy=accuracy,
        advantage=2.0 * accuracy - 1.0,
        ci_lo=lo,
        ci_hi=hi,
        distinguisher=template.describe(),
        seed=int(master_seed),
        calibration=int(calibration),
        config={"pair": pair.to_dict(), "assignment": assignment.to_dict(), "samples_per_episode": n},
    )
    if return_outcomes:
        return report, [o for _, o in results]
    return report
