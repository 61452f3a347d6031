#!/usr/bin/env python

"""Compare simulated and real trajectories with six distribution metrics."""

# Core Library modules
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

# Third party modules
import numpy as np
from scipy.stats import entropy, rankdata

# First party modules
import trajtoolkit.data as data
import trajtoolkit.utils as utils
from trajtoolkit.tensor import Tape

logger = logging.getLogger(__name__)

METRICS = ("distance", "radius", "duration", "dailyloc", "g_rank", "i_rank")
TOP_LOCATIONS = 100
SMOOTHING = 1e-12
MAX_JSD = math.log(2)

# metric -> (low, high, bins, overflow bin)
BINS = {
    "distance": (0.0, 100.0, 50, True),
    "radius": (0.0, 50.0, 50, True),
    "duration": (0.5, 24.5, 24, False),
    "dailyloc": (0.0, 1.0, 20, False),
}


@dataclass
class Histogram:
    """Normalised bin masses; an overflow bin has the upper edge ``inf``."""

    edges: np.ndarray
    masses: np.ndarray
    count: int

    def __post_init__(self):
        self.edges = np.asarray(self.edges, dtype=np.float64)
        self.masses = np.asarray(self.masses, dtype=np.float64)
        if len(self.edges) != len(self.masses) + 1:
            raise ValueError("a histogram needs one edge more than bins")
        if np.any(np.diff(self.edges) <= 0):
            raise ValueError("histogram edges must be strictly increasing")
        if np.any(self.masses < 0) or abs(self.masses.sum() - 1) > 1e-12:
            raise ValueError("histogram masses must be a distribution")

    @property
    def centers(self) -> np.ndarray:
        edges = self.edges.copy()
        if np.isinf(edges[-1]):
            edges[-1] = edges[-2] + (edges[-2] - edges[-3] if len(edges) > 2 else 1)
        return (edges[:-1] + edges[1:]) / 2

    def write(self, path: str):
        """Two columns: bin centre and mass."""
        with open(path, "w", encoding="utf8") as f:
            for center, mass in zip(self.centers, self.masses):
                f.write(f"{center!r}\t{mass!r}\n")


def histogram(
    values: Sequence[float], low: float, high: float, bins: int, overflow=False
) -> Histogram:
    """
    Histogram over ``bins`` uniform bins of ``[low, high]``.

    Values above ``high`` go to an extra overflow bin or, without one, into the
    last bin. Values below ``low`` go into the first bin.

    >>> histogram([0.0, 0.0, 3.0], 0, 4, 2).masses.tolist()
    [0.6666666666666666, 0.3333333333333333]
    """
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValueError("cannot build a histogram without samples")
    edges = np.linspace(low, high, bins + 1)
    index = np.clip(np.searchsorted(edges, values, side="right") - 1, 0, bins - 1)
    if overflow:
        index = np.where(values > high, bins, index)
        edges = np.append(edges, np.inf)
    counts = np.bincount(index, minlength=len(edges) - 1).astype(np.float64)
    return Histogram(edges=edges, masses=counts / counts.sum(), count=values.size)


def jsd(p: Sequence[float], q: Sequence[float]) -> float:
    """
    Jensen-Shannon divergence with natural logarithm.

    >>> round(jsd([1, 0], [0, 1]), 4)
    0.6931
    >>> jsd([0.5, 0.5], [0.5, 0.5])
    0.0
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError(f"distributions differ in length: {p.shape} vs {q.shape}")
    value = entropy((p + q) / 2) - (entropy(p) + entropy(q)) / 2
    return float(min(max(value, 0.0), MAX_JSD))


def _coordinates(trajectory: data.Trajectory, vocabulary: data.LocationVocabulary):
    return (
        vocabulary.latitudes[trajectory.locations],
        vocabulary.longitudes[trajectory.locations],
    )


def distance_values(corpus, vocabulary) -> np.ndarray:
    """Haversine kilometres between consecutive visits."""
    values = []
    for trajectory in corpus:
        lat, lon = _coordinates(trajectory, vocabulary)
        values.append(data.haversine(lat[:-1], lon[:-1], lat[1:], lon[1:]))
    return np.concatenate(values) if values else np.array([])


def radius_values(corpus, vocabulary) -> np.ndarray:
    """Radius of gyration (RMS distance to the centroid) per trajectory."""
    values = []
    for trajectory in corpus:
        if not len(trajectory):
            continue
        lat, lon = _coordinates(trajectory, vocabulary)
        d = data.haversine(lat, lon, lat.mean(), lon.mean())
        values.append(math.sqrt(float(np.mean(d ** 2))))
    return np.array(values)


def run_lengths(locations: Sequence[int]) -> np.ndarray:
    """
    Lengths of runs of equal consecutive locations.

    >>> run_lengths([4, 4, 4, 7]).tolist()
    [3, 1]
    """
    locations = np.asarray(locations)
    if locations.size == 0:
        return np.array([], dtype=np.int64)
    starts = np.flatnonzero(np.r_[True, locations[1:] != locations[:-1]])
    return np.diff(np.r_[starts, locations.size])


def duration_values(corpus) -> np.ndarray:
    """Dwell durations in hours."""
    runs = [run_lengths(t.locations) for t in corpus]
    return np.concatenate(runs) if runs else np.array([])


def dailyloc_values(corpus) -> np.ndarray:
    """Share of distinct locations among the visits of every user-day."""
    return np.array(
        [len(np.unique(t.locations)) / len(t) for t in corpus if len(t)]
    )


def _binned(name: str, values) -> Histogram:
    low, high, bins, overflow = BINS[name]
    return histogram(values, low, high, bins, overflow)


def metric_distance(corpus, vocabulary) -> Histogram:
    return _binned("distance", distance_values(corpus, vocabulary))


def metric_radius(corpus, vocabulary) -> Histogram:
    return _binned("radius", radius_values(corpus, vocabulary))


def metric_duration(corpus) -> Histogram:
    return _binned("duration", duration_values(corpus))


def metric_dailyloc(corpus) -> Histogram:
    return _binned("dailyloc", dailyloc_values(corpus))


def _visit_counts(corpus, size: int) -> np.ndarray:
    locations = [t.locations for t in corpus]
    flat = np.concatenate(locations) if locations else np.array([], dtype=np.int64)
    return np.bincount(flat, minlength=size).astype(np.float64)


def _smoothed(counts: np.ndarray) -> np.ndarray:
    counts = counts + SMOOTHING
    return counts / counts.sum()


def metric_grank(
    real, simulated, top: int = TOP_LOCATIONS
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Visit frequencies of the ``top`` most visited real locations.

    Returns the real distribution ``p`` and the simulated distribution ``q``
    over the same ids, both smoothed and renormalised.
    """
    size = 1 + max(
        (int(t.locations.max()) for t in list(real) + list(simulated) if len(t)),
        default=-1,
    )
    if size == 0:
        raise ValueError("cannot rank locations of empty corpora")
    real_counts = _visit_counts(real, size)
    order = np.argsort(-real_counts, kind="stable")[: min(top, size)]
    simulated_counts = _visit_counts(simulated, size)[order]
    return _smoothed(real_counts[order]), _smoothed(simulated_counts)


def rank_profile(trajectory: data.Trajectory) -> np.ndarray:
    """
    Visit counts of a trajectory's locations in descending order.

    >>> rank_profile(data.Trajectory("u", [0, 1, 2], [5, 9, 5])).tolist()
    [2, 1]
    """
    _, counts = np.unique(trajectory.locations, return_counts=True)
    return np.sort(counts)[::-1]


def _profile_jsd(real: np.ndarray, simulated: np.ndarray, top: int) -> float:
    k = min(top, len(real))
    p = np.zeros(k)
    q = np.zeros(k)
    p[: min(k, len(real))] = real[:k]
    q[: min(k, len(simulated))] = simulated[:k]
    return jsd(_smoothed(p), _smoothed(q))


def metric_irank(real, simulated, top: int = TOP_LOCATIONS) -> float:
    """
    Mean per-trajectory rank-frequency JSD.

    Both corpora are sorted by their rank profiles and matched by quantile,
    so the score does not depend on trajectory order.
    """
    real_profiles = sorted((rank_profile(t) for t in real if len(t)), key=tuple)
    sim_profiles = sorted((rank_profile(t) for t in simulated if len(t)), key=tuple)
    if not real_profiles or not sim_profiles:
        raise ValueError("cannot compare individual ranks of empty corpora")
    scores = []
    for i, profile in enumerate(real_profiles):
        j = i * len(sim_profiles) // len(real_profiles)
        scores.append(_profile_jsd(profile, sim_profiles[j], top))
    return float(np.mean(scores))


@dataclass
class MetricReport:
    """JSD per metric plus the compared histograms."""

    scores: Dict[str, float]
    histograms: Dict[str, Tuple[Histogram, Histogram]] = field(default_factory=dict)
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        missing = set(METRICS) - set(self.scores)
        if missing:
            raise ValueError(f"report misses {sorted(missing)}")

    def as_row(self) -> List[float]:
        return [self.scores[name] for name in METRICS]

    def write_csv(self, path: str):
        utils.write_csv(path, ("metric", "jsd"), ((m, self.scores[m]) for m in METRICS))

    def write_yaml(self, path: str):
        utils.dump_yaml(
            {
                "scores": {m: float(self.scores[m]) for m in METRICS},
                "metadata": self.metadata,
            },
            path,
        )

    def write_histograms(self, directory: str):
        os.makedirs(directory, exist_ok=True)
        for name, (real, simulated) in self.histograms.items():
            real.write(os.path.join(directory, f"{name}-real.txt"))
            simulated.write(os.path.join(directory, f"{name}-simulated.txt"))

    @classmethod
    def read_yaml(cls, path: str) -> "MetricReport":
        content = utils.load_yaml(path)
        return cls(scores=content["scores"], metadata=content.get("metadata") or {})

    @classmethod
    def mean(cls, reports: Sequence["MetricReport"], **metadata) -> "MetricReport":
        if not reports:
            raise ValueError("no reports to average")
        scores = {m: float(np.mean([r.scores[m] for r in reports])) for m in METRICS}
        return cls(scores=scores, metadata=dict(metadata, runs=len(reports)))


def _rank_histogram(masses: np.ndarray) -> Histogram:
    return Histogram(
        edges=np.arange(len(masses) + 1) + 0.5, masses=masses, count=len(masses)
    )


def evaluate_corpus(
    real: Sequence[data.Trajectory],
    simulated: Sequence[data.Trajectory],
    vocabulary: data.LocationVocabulary,
    metadata: Optional[Dict[str, Any]] = None,
) -> MetricReport:
    """Score ``simulated`` against ``real`` on all six metrics."""
    histograms = {
        "distance": (
            metric_distance(real, vocabulary),
            metric_distance(simulated, vocabulary),
        ),
        "radius": (
            metric_radius(real, vocabulary),
            metric_radius(simulated, vocabulary),
        ),
        "duration": (metric_duration(real), metric_duration(simulated)),
        "dailyloc": (metric_dailyloc(real), metric_dailyloc(simulated)),
    }
    scores = {name: jsd(p.masses, q.masses) for name, (p, q) in histograms.items()}
    p, q = metric_grank(real, simulated)
    scores["g_rank"] = jsd(p, q)
    histograms["g_rank"] = (_rank_histogram(p), _rank_histogram(q))
    scores["i_rank"] = metric_irank(real, simulated)
    logger.info(
        "JSD %s", ", ".join(f"{m}={scores[m]:0.4f}" for m in METRICS)
    )
    return MetricReport(scores=scores, histograms=histograms, metadata=metadata or {})


@dataclass
class AttentionProfile:
    """Mean attention weight by distance bucket and by time lag (NaN if empty)."""

    distance_km: np.ndarray
    by_distance: np.ndarray
    lag_hours: np.ndarray
    by_lag: np.ndarray

    def write(self, directory: str):
        os.makedirs(directory, exist_ok=True)
        for name, x, y in (
            ("attention-distance.txt", self.distance_km, self.by_distance),
            ("attention-lag.txt", self.lag_hours, self.by_lag),
        ):
            with open(os.path.join(directory, name), "w", encoding="utf8") as f:
                for a, b in zip(x, y):
                    f.write(f"{a!r}\t{b!r}\n")


def attention_profile(
    model,
    corpus: Sequence[data.Trajectory],
    vocabulary: data.LocationVocabulary,
    max_km: float = 100.0,
    bucket_km: float = 1.0,
) -> AttentionProfile:
    """
    Average attention between visit pairs, bucketed by their haversine
    distance and by their time lag.

    Weights are averaged over layers and heads; the begin-of-sequence token is
    not part of any pair.
    """
    distance_buckets = int(round(max_km / bucket_km))
    lag_buckets = data.HOURS_PER_DAY
    sums = [np.zeros(distance_buckets), np.zeros(lag_buckets)]
    counts = [np.zeros(distance_buckets), np.zeros(lag_buckets)]
    max_len = model.config.max_seq_len
    for trajectory in corpus:
        for start in range(0, len(trajectory), max_len):
            locations = trajectory.locations[start : start + max_len]
            hours = trajectory.slots[start : start + max_len]
            ids = np.r_[model.config.bos_id, locations][None, :]
            layers: List[np.ndarray] = []
            model.forward(Tape(enabled=False), ids, attention=layers)
            weights = np.mean([w[0].mean(axis=0) for w in layers], axis=0)[1:, 1:]
            query, key = np.tril_indices(len(locations))
            lat, lon = vocabulary.latitudes, vocabulary.longitudes
            distance = data.haversine(
                lat[locations[query]],
                lon[locations[query]],
                lat[locations[key]],
                lon[locations[key]],
            )
            lag = hours[query] - hours[key]
            pair_weights = weights[query, key]
            for i, bucket in enumerate(
                (np.floor(distance / bucket_km).astype(np.int64), lag)
            ):
                keep = bucket < len(sums[i])
                np.add.at(sums[i], bucket[keep], pair_weights[keep])
                np.add.at(counts[i], bucket[keep], 1)
    with np.errstate(invalid="ignore", divide="ignore"):
        by_distance = np.where(counts[0] > 0, sums[0] / counts[0], np.nan)
        by_lag = np.where(counts[1] > 0, sums[1] / counts[1], np.nan)
    return AttentionProfile(
        distance_km=(np.arange(distance_buckets) + 0.5) * bucket_km,
        by_distance=by_distance,
        lag_hours=np.arange(lag_buckets),
        by_lag=by_lag,
    )


def average_rank(rows: Dict[str, Dict[str, float]]) -> Dict[str, float]:
    """
    Mean rank of every method over the six metrics (1 is best, ties share).

    >>> rows = {m: dict.fromkeys(METRICS, v) for m, v in (("a", 0.1), ("b", 0.2))}
    >>> average_rank(rows)
    {'a': 1.0, 'b': 2.0}
    """
    labels = list(rows)
    ranks = np.array(
        [rankdata([rows[label][m] for label in labels]) for m in METRICS]
    )
    return {label: float(r) for label, r in zip(labels, ranks.mean(axis=0))}


def show_results(
    rows: Dict[str, Dict[str, float]], with_rank: bool = False, print_results=True
) -> str:
    """Format a table with one row per method and one column per metric."""
    if len(rows) == 0:
        s = "-- No results --"
    else:
        columns = list(METRICS) + (["AVG"] if with_rank else [])
        ranks = average_rank(rows) if with_rank else {}
        s = "{:10s}".format("") + "".join(f"{c:>10s}" for c in columns) + "\n"
        s += "#" * (10 + 10 * len(columns)) + "\n"
        for label, scores in rows.items():
            values = [scores[m] for m in METRICS]
            if with_rank:
                values.append(ranks[label])
            s += f"{label:10s}" + "".join(f"{v:>10.4f}" for v in values) + "\n"
        s += "#" * (10 + 10 * len(columns))
    if print_results:
        print(s)
    return s


def main(
    real: Sequence[data.Trajectory],
    simulated: Sequence[data.Trajectory],
    vocabulary: data.LocationVocabulary,
    directory: str,
    metadata: Optional[Dict[str, Any]] = None,
) -> MetricReport:
    """Evaluate and write ``metrics.csv``, ``metrics.yml`` and histograms."""
    report = evaluate_corpus(real, simulated, vocabulary, metadata)
    os.makedirs(directory, exist_ok=True)
    report.write_csv(os.path.join(directory, "metrics.csv"))
    report.write_yaml(os.path.join(directory, "metrics.yml"))
    report.write_histograms(os.path.join(directory, "histograms"))
    return report
