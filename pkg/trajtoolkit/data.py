#!/usr/bin/env python

"""
City datasets: ingestion of raw check-ins, synthetic cities, splits and batches.

One trajectory is one user-day of hourly slots. A dataset directory contains

* ``dataset.yml``: name and smoothing of the frequency profile
* ``vocabulary.tsv``: ``id  latitude  longitude  key``
* ``train.tsv``, ``valid.tsv``, ``test.tsv``: ``user  slot  location_id``
* ``frequency.tsv``: ``id  pi``
"""

# Core Library modules
import csv
import logging
import math
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

# Third party modules
import numpy as np
import yaml
from scipy.stats import linregress

# First party modules
from trajtoolkit.exceptions import IngestionError, ProfileError

logger = logging.getLogger(__name__)

EARTH_RADIUS_KM = 6371.0
KM_PER_DEGREE = 111.19492664455873
HOURS_PER_DAY = 24
MIN_VISITS_PER_DAY = 6
SPLIT_RATIO = (7, 1, 2)
SPLITS = ("train", "valid", "test")

RawRecord = Tuple[str, str, str, str, str]


def haversine(lat1, lon1, lat2, lon2):
    """
    Great circle distance in km between points given in degrees.

    >>> round(float(haversine(0.0, 0.0, 0.0, 1.0)), 1)
    111.2
    """
    lat1, lon1, lat2, lon2 = map(np.radians, (lat1, lon1, lat2, lon2))
    a = (
        np.sin((lat2 - lat1) / 2) ** 2
        + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2) ** 2
    )
    return 2 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


@dataclass(eq=False)
class LocationVocabulary:
    """Dense location ids ``0..N-1`` with coordinates in degrees."""

    latitudes: np.ndarray
    longitudes: np.ndarray
    keys: List[str] = field(default_factory=list)

    def __post_init__(self):
        self.latitudes = np.asarray(self.latitudes, dtype=np.float64)
        self.longitudes = np.asarray(self.longitudes, dtype=np.float64)
        if not self.keys:
            self.keys = [str(i) for i in range(len(self.latitudes))]
        if not len(self.latitudes) == len(self.longitudes) == len(self.keys):
            raise ValueError("vocabulary columns differ in length")
        if not (
            np.all(np.isfinite(self.latitudes)) and np.all(np.isfinite(self.longitudes))
        ):
            raise ValueError("vocabulary coordinates must be finite")
        if np.any(np.abs(self.latitudes) > 90) or np.any(np.abs(self.longitudes) > 180):
            raise ValueError("vocabulary coordinates out of range")

    def __len__(self):
        return len(self.latitudes)

    def __eq__(self, other):
        return (
            isinstance(other, LocationVocabulary)
            and np.array_equal(self.latitudes, other.latitudes)
            and np.array_equal(self.longitudes, other.longitudes)
            and list(self.keys) == list(other.keys)
        )

    @property
    def size(self) -> int:
        return len(self)


@dataclass(eq=False)
class Trajectory:
    """Visits of one user on one day as ``(slot, location)`` pairs."""

    user: str
    slots: np.ndarray
    locations: np.ndarray

    def __post_init__(self):
        self.slots = np.asarray(self.slots, dtype=np.int64)
        self.locations = np.asarray(self.locations, dtype=np.int64)
        if self.slots.shape != self.locations.shape:
            raise ValueError("slots and locations differ in length")
        if np.any(np.diff(self.slots) <= 0):
            raise ValueError(f"slots of user {self.user} are not strictly increasing")

    def __len__(self):
        return len(self.locations)

    def __eq__(self, other):
        return (
            isinstance(other, Trajectory)
            and self.user == other.user
            and np.array_equal(self.slots, other.slots)
            and np.array_equal(self.locations, other.locations)
        )

    def __repr__(self):
        return f"Trajectory(user={self.user!r}, length={len(self)})"

    @property
    def day(self) -> int:
        return int(self.slots[0]) // HOURS_PER_DAY if len(self) else 0

    @property
    def hours(self) -> np.ndarray:
        return self.slots % HOURS_PER_DAY


@dataclass(eq=False)
class FrequencyProfile:
    """Smoothed empirical visit frequencies over the location vocabulary."""

    pi: np.ndarray
    epsilon: float = 1.0

    def __post_init__(self):
        self.pi = np.asarray(self.pi, dtype=np.float64)
        if self.pi.ndim != 1 or self.pi.size == 0:
            raise ProfileError("frequency profile must be a non-empty vector")
        if np.any(~np.isfinite(self.pi)) or np.any(self.pi <= 0):
            raise ProfileError("frequency profile must be strictly positive")
        if abs(self.pi.sum() - 1.0) > 1e-12:
            raise ProfileError(f"frequency profile sums to {self.pi.sum()!r}")

    def __len__(self):
        return len(self.pi)

    def __eq__(self, other):
        return (
            isinstance(other, FrequencyProfile)
            and np.array_equal(self.pi, other.pi)
            and self.epsilon == other.epsilon
        )


@dataclass(eq=False)
class CityDataset:
    name: str
    vocabulary: LocationVocabulary
    train: List[Trajectory]
    valid: List[Trajectory]
    test: List[Trajectory]
    profile: FrequencyProfile

    def __repr__(self):
        return (
            f"CityDataset({self.name!r}, N={len(self.vocabulary)}, "
            f"splits={len(self.train)}/{len(self.valid)}/{len(self.test)})"
        )

    def __eq__(self, other):
        return (
            isinstance(other, CityDataset)
            and self.name == other.name
            and self.vocabulary == other.vocabulary
            and self.train == other.train
            and self.valid == other.valid
            and self.test == other.test
            and self.profile == other.profile
        )

    @property
    def num_locations(self) -> int:
        return len(self.vocabulary)

    def split(self, name: str) -> List[Trajectory]:
        if name not in SPLITS:
            raise ValueError(f"unknown split '{name}', use one of {SPLITS}")
        return getattr(self, name)


@dataclass
class Batch:
    """Padded location ids ``(B, T)`` with a validity mask."""

    ids: np.ndarray
    mask: np.ndarray

    def __len__(self):
        return len(self.ids)


def parse_timestamp(text: str) -> int:
    """
    Map an ISO-8601 timestamp to its hourly slot (hours since the epoch).

    Slots count local wall-clock hours: an offset is dropped, not applied, so
    user-days break at the city's midnight.

    >>> parse_timestamp("1970-01-02T01:59:59")
    25
    >>> parse_timestamp("1970-01-02T01:59:59+08:00")
    25
    """
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1]
    moment = datetime.fromisoformat(text).replace(tzinfo=timezone.utc)
    return int(math.floor(moment.timestamp() / 3600))


def slot_to_timestamp(slot: int) -> str:
    """
    Inverse of :func:`parse_timestamp` at the start of the slot.

    >>> slot_to_timestamp(25)
    '1970-01-02T01:00:00+00:00'
    """
    return datetime.fromtimestamp(int(slot) * 3600, tz=timezone.utc).isoformat()


def read_raw_records(path: str) -> Iterator[List[str]]:
    """Yield the rows of a comma separated raw check-in file."""
    with open(path, newline="", encoding="utf8") as csvfile:
        for row in csv.reader(csvfile):
            if not row or row[0].startswith("#"):
                continue
            yield row


def split_sizes(total: int, ratio: Sequence[int] = SPLIT_RATIO) -> Tuple[int, int, int]:
    """
    Sizes of train/valid/test for ``total`` trajectories.

    >>> split_sizes(100)
    (70, 10, 20)
    """
    weight = sum(ratio)
    train = int(math.floor(total * ratio[0] / weight + 0.5))
    valid = int(math.floor(total * ratio[1] / weight + 0.5))
    valid = min(valid, total - train)
    return train, valid, total - train - valid


def split_trajectories(
    trajectories: Sequence[Trajectory], seed: int
) -> Tuple[List[Trajectory], List[Trajectory], List[Trajectory]]:
    """Shuffle by trajectory with ``seed`` and cut 7:1:2."""
    order = np.random.default_rng(seed).permutation(len(trajectories))
    shuffled = [trajectories[i] for i in order]
    n_train, n_valid, _ = split_sizes(len(shuffled))
    return (
        shuffled[:n_train],
        shuffled[n_train : n_train + n_valid],
        shuffled[n_train + n_valid :],
    )


def frequency_profile(
    trajectories: Iterable[Trajectory], num_locations: int, epsilon: float = 1.0
) -> FrequencyProfile:
    """
    Add-``epsilon`` smoothed visit frequencies.

    >>> t = Trajectory("u", [0, 1, 2, 3], [2, 2, 2, 2])
    >>> frequency_profile([t], 3).pi.round(4).tolist()
    [0.1429, 0.1429, 0.7143]
    """
    if num_locations < 1:
        raise ValueError("a frequency profile needs at least one location")
    counts = np.zeros(num_locations, dtype=np.float64)
    for trajectory in trajectories:
        counts += np.bincount(trajectory.locations, minlength=num_locations)
    smoothed = counts + epsilon
    return FrequencyProfile(smoothed / smoothed.sum(), epsilon=epsilon)


def _parse_record(row: Sequence[str]) -> Tuple[str, int, float, float, str]:
    if len(row) != 5:
        raise ValueError(f"expected 5 fields, got {len(row)}")
    user, timestamp, lat, lon, key = (str(value).strip() for value in row)
    latitude, longitude = float(lat), float(lon)
    if not (math.isfinite(latitude) and math.isfinite(longitude)):
        raise ValueError("coordinates must be finite")
    if abs(latitude) > 90 or abs(longitude) > 180:
        raise ValueError("coordinates out of range")
    if not user or not key:
        raise ValueError("empty user or location key")
    return user, parse_timestamp(timestamp), latitude, longitude, key


def ingest(
    records: Iterable[Sequence[str]],
    name: str = "city",
    seed: int = 0,
    min_visits: int = MIN_VISITS_PER_DAY,
    epsilon: float = 1.0,
) -> CityDataset:
    """
    Build a :class:`CityDataset` from raw ``(user, timestamp, lat, lon, key)``
    records.

    Timestamps are mapped to hourly slots; of several visits within one slot
    the first is kept. User-days with fewer than ``min_visits`` records are
    dropped. Malformed rows are logged and skipped.
    """
    visits: Dict[Tuple[str, int], Tuple[float, float, str]] = {}
    for line_number, row in enumerate(records, start=1):
        try:
            user, slot, latitude, longitude, key = _parse_record(row)
        except ValueError as exc:
            logger.warning("Skip malformed record %i (%s): %s", line_number, exc, row)
            continue
        visits.setdefault((user, slot), (latitude, longitude, key))

    days: Dict[Tuple[str, int], List[int]] = {}
    for user, slot in sorted(visits):
        days.setdefault((user, slot // HOURS_PER_DAY), []).append(slot)
    days = {
        user_day: slots for user_day, slots in days.items() if len(slots) >= min_visits
    }
    if not days:
        raise IngestionError(f"no user-day of '{name}' has {min_visits} visits")

    coordinates: Dict[str, Tuple[float, float]] = {}
    for (user, _), slots in sorted(days.items()):
        for slot in slots:
            latitude, longitude, key = visits[(user, slot)]
            coordinates.setdefault(key, (latitude, longitude))
    keys = sorted(coordinates)
    ids = {key: i for i, key in enumerate(keys)}
    vocabulary = LocationVocabulary(
        latitudes=[coordinates[key][0] for key in keys],
        longitudes=[coordinates[key][1] for key in keys],
        keys=keys,
    )

    trajectories = [
        Trajectory(
            user=user,
            slots=slots,
            locations=[ids[visits[(user, slot)][2]] for slot in slots],
        )
        for (user, _), slots in sorted(days.items())
    ]
    train, valid, test = split_trajectories(trajectories, seed)
    logger.info(
        "Ingested '%s': %i locations, %i trajectories (%i/%i/%i)",
        name,
        len(vocabulary),
        len(trajectories),
        len(train),
        len(valid),
        len(test),
    )
    return CityDataset(
        name=name,
        vocabulary=vocabulary,
        train=train,
        valid=valid,
        test=test,
        profile=frequency_profile(train, len(vocabulary), epsilon),
    )


def dataset_records(dataset: CityDataset) -> Iterator[RawRecord]:
    """Turn a dataset back into raw records, e.g. to re-ingest it."""
    vocabulary = dataset.vocabulary
    for split in SPLITS:
        for trajectory in dataset.split(split):
            for slot, location in zip(trajectory.slots, trajectory.locations):
                yield (
                    trajectory.user,
                    slot_to_timestamp(slot),
                    repr(float(vocabulary.latitudes[location])),
                    repr(float(vocabulary.longitudes[location])),
                    vocabulary.keys[location],
                )


def zipf_weights(num_locations: int, gamma: float) -> np.ndarray:
    """
    Normalised rank weights :math:`\\propto r^{-\\gamma}` for ranks ``1..N``.

    >>> zipf_weights(2, 1.0).round(4).tolist()
    [0.6667, 0.3333]
    """
    weights = np.arange(1, num_locations + 1, dtype=np.float64) ** -gamma
    return weights / weights.sum()


def grid_locations(
    rng: np.random.Generator,
    num_locations: int,
    extent_km: float,
    center: Tuple[float, float],
) -> LocationVocabulary:
    """Place locations on a jittered square grid of width ``extent_km``."""
    side = int(math.ceil(math.sqrt(num_locations)))
    spacing = extent_km / side
    cells = np.arange(num_locations)
    x = (cells % side + 0.5) * spacing - extent_km / 2
    y = (cells // side + 0.5) * spacing - extent_km / 2
    x = x + rng.uniform(-0.3, 0.3, num_locations) * spacing
    y = y + rng.uniform(-0.3, 0.3, num_locations) * spacing
    latitudes = center[0] + y / KM_PER_DEGREE
    longitudes = center[1] + x / (KM_PER_DEGREE * math.cos(math.radians(center[0])))
    keys = [f"loc{i:06d}" for i in range(num_locations)]
    return LocationVocabulary(latitudes=latitudes, longitudes=longitudes, keys=keys)


def transition_matrix(
    vocabulary: LocationVocabulary, weights: np.ndarray, decay_km: float
) -> np.ndarray:
    """
    Distance-decaying Markov kernel whose stationary distribution is ``weights``.

    Moves are proposed with probability :math:`\\propto e^{-d/decay}` and
    accepted by the Metropolis-Hastings rule, so the chain prefers short hops
    and popular places while every visit keeps the Zipf marginal.
    """
    lat, lon = vocabulary.latitudes, vocabulary.longitudes
    distance = haversine(lat[:, None], lon[:, None], lat[None, :], lon[None, :])
    kernel = np.exp(-distance / decay_km)
    np.fill_diagonal(kernel, 0.0)
    proposal = kernel / kernel.sum(axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = (weights[None, :] * proposal.T) / (weights[:, None] * proposal)
    acceptance = np.minimum(1.0, np.nan_to_num(ratio, nan=0.0, posinf=1.0))
    matrix = proposal * acceptance
    np.fill_diagonal(matrix, 0.0)
    np.fill_diagonal(matrix, 1.0 - matrix.sum(axis=1))
    return matrix


def _draw(rng: np.random.Generator, cdf: np.ndarray) -> int:
    index = np.searchsorted(cdf, rng.random() * cdf[-1], side="right")
    return int(min(index, len(cdf) - 1))


def synth_city(
    seed: int,
    num_locations: int,
    num_users: int,
    days: int = 1,
    gamma: float = 1.2,
    extent_km: float = 20.0,
    name: str = "synthetic",
    center: Tuple[float, float] = (39.9042, 116.4074),
    decay_km: Optional[float] = None,
    min_steps: int = MIN_VISITS_PER_DAY,
    max_steps: int = HOURS_PER_DAY,
    epsilon: float = 1.0,
) -> CityDataset:
    """
    Generate a synthetic city with a long-tailed (Zipf) visit distribution.

    Locations lie on a jittered grid; each user-day has between ``min_steps``
    and ``max_steps`` hourly visits drawn from a Markov chain (see
    :func:`transition_matrix`) started in its stationary distribution.
    Locations the chain never reaches replace one visit of a location that is
    visited more than once, so every id of the vocabulary occurs in the corpus.
    """
    if num_locations < 2:
        raise ValueError("a synthetic city needs at least 2 locations")
    if gamma <= 0:
        raise ValueError("the Zipf exponent gamma must be positive")
    if num_users < 1 or days < 1 or extent_km <= 0:
        raise ValueError("num_users, days and extent_km must be positive")
    if not 1 <= min_steps <= max_steps <= HOURS_PER_DAY:
        raise ValueError(f"need 1 <= min_steps <= max_steps <= {HOURS_PER_DAY}")
    if num_users * days * min_steps < num_locations:
        raise ValueError(
            f"{num_users * days} user-days cannot visit all {num_locations} locations"
        )

    rng = np.random.default_rng(seed)
    vocabulary = grid_locations(rng, num_locations, extent_km, center)
    weights = np.empty(num_locations)
    weights[rng.permutation(num_locations)] = zipf_weights(num_locations, gamma)
    if decay_km is None:
        decay_km = extent_km / 5
    cdf = np.cumsum(transition_matrix(vocabulary, weights, decay_km), axis=1)
    start_cdf = np.cumsum(weights)

    days_slots = []
    visits = []
    for user in range(num_users):
        for day in range(days):
            steps = int(rng.integers(min_steps, max_steps + 1))
            hours = np.sort(rng.choice(HOURS_PER_DAY, size=steps, replace=False))
            locations = [_draw(rng, start_cdf)]
            for _ in range(steps - 1):
                locations.append(_draw(rng, cdf[locations[-1]]))
            days_slots.append((f"u{user:05d}", day * HOURS_PER_DAY + hours))
            visits.extend(locations)

    visits = np.asarray(visits, dtype=np.int64)
    counts = np.bincount(visits, minlength=num_locations)
    for missing in np.flatnonzero(counts == 0):
        repeated = np.flatnonzero(counts[visits] > 1)
        pick = repeated[rng.integers(len(repeated))]
        counts[visits[pick]] -= 1
        visits[pick] = missing
        counts[missing] = 1

    trajectories = []
    start = 0
    for user, slots in days_slots:
        locations = visits[start : start + len(slots)].copy()
        trajectories.append(Trajectory(user=user, slots=slots, locations=locations))
        start += len(slots)
    train, valid, test = split_trajectories(trajectories, int(rng.integers(2 ** 31)))
    logger.info(
        "Synthesised '%s': N=%i, %i trajectories, gamma=%s",
        name,
        num_locations,
        len(trajectories),
        gamma,
    )
    return CityDataset(
        name=name,
        vocabulary=vocabulary,
        train=train,
        valid=valid,
        test=test,
        profile=frequency_profile(train, num_locations, epsilon),
    )


def relabel_city(dataset: CityDataset, seed: int, name: str) -> CityDataset:
    """Copy ``dataset`` with permuted location ids (same mobility structure)."""
    permutation = np.random.default_rng(seed).permutation(dataset.num_locations)
    inverse = np.argsort(permutation)
    vocabulary = LocationVocabulary(
        latitudes=dataset.vocabulary.latitudes[inverse],
        longitudes=dataset.vocabulary.longitudes[inverse],
        keys=[dataset.vocabulary.keys[i] for i in inverse],
    )

    def relabel(trajectories):
        return [
            Trajectory(t.user, t.slots.copy(), permutation[t.locations])
            for t in trajectories
        ]

    train = relabel(dataset.train)
    return CityDataset(
        name=name,
        vocabulary=vocabulary,
        train=train,
        valid=relabel(dataset.valid),
        test=relabel(dataset.test),
        profile=frequency_profile(
            train, dataset.num_locations, dataset.profile.epsilon
        ),
    )


def fit_power_law(frequencies: np.ndarray, top: Optional[int] = None) -> float:
    """
    Exponent of a rank-frequency power law by log-log least squares.

    >>> round(fit_power_law(zipf_weights(50, 1.5)), 6)
    1.5
    """
    ranked = np.sort(np.asarray(frequencies, dtype=np.float64))[::-1]
    ranked = ranked[ranked > 0]
    if top is not None:
        ranked = ranked[:top]
    if len(ranked) < 2:
        raise ValueError("a power law fit needs at least two positive frequencies")
    ranks = np.arange(1, len(ranked) + 1)
    return float(-linregress(np.log(ranks), np.log(ranked)).slope)


def window(trajectory: Trajectory, max_len: int) -> List[np.ndarray]:
    """Cut the location sequence into chunks of at most ``max_len`` visits."""
    locations = trajectory.locations
    return [locations[i : i + max_len] for i in range(0, len(locations), max_len)]


def batch(
    trajectories: Sequence[Trajectory],
    batch_size: int,
    max_len: int,
    seed: Optional[int] = None,
    bos_id: Optional[int] = None,
) -> Iterator[Batch]:
    """
    Yield padded batches.

    Trajectories are windowed to ``max_len`` visits and shuffled with ``seed``
    (kept in order if ``seed`` is None). With ``bos_id`` every sequence starts
    with that token. Padding uses id 0 and is marked False in the mask.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be at least 1")
    sequences = [chunk for t in trajectories for chunk in window(t, max_len)]
    if seed is not None:
        order = np.random.default_rng(seed).permutation(len(sequences))
        sequences = [sequences[i] for i in order]
    prefix = np.array([] if bos_id is None else [bos_id], dtype=np.int64)
    for start in range(0, len(sequences), batch_size):
        chunk = [
            np.concatenate([prefix, s]) for s in sequences[start : start + batch_size]
        ]
        length = max(len(s) for s in chunk)
        ids = np.zeros((len(chunk), length), dtype=np.int64)
        mask = np.zeros((len(chunk), length), dtype=bool)
        for row, sequence in enumerate(chunk):
            ids[row, : len(sequence)] = sequence
            mask[row, : len(sequence)] = True
        yield Batch(ids=ids, mask=mask)


def write_trajectories(path: str, trajectories: Iterable[Trajectory]):
    """Write ``user  slot  location_id`` rows."""
    with open(path, "w", newline="", encoding="utf8") as f:
        writer = csv.writer(f, delimiter="\t", lineterminator="\n")
        writer.writerow(["user", "slot", "location_id"])
        for trajectory in trajectories:
            for slot, location in zip(trajectory.slots, trajectory.locations):
                writer.writerow([trajectory.user, int(slot), int(location)])


def read_trajectories(path: str) -> List[Trajectory]:
    """Read a split file; consecutive rows of one user-day form a trajectory."""
    trajectories: List[Trajectory] = []
    current: Optional[Tuple[str, int]] = None
    slots: List[int] = []
    locations: List[int] = []
    with open(path, newline="", encoding="utf8") as f:
        reader = csv.reader(f, delimiter="\t")
        next(reader, None)
        for user, slot, location in reader:
            key = (user, int(slot) // HOURS_PER_DAY)
            if key != current and slots:
                trajectories.append(Trajectory(current[0], slots, locations))
                slots, locations = [], []
            current = key
            slots.append(int(slot))
            locations.append(int(location))
    if slots:
        trajectories.append(Trajectory(current[0], slots, locations))
    return trajectories


def write_dataset(dataset: CityDataset, directory: str):
    """Serialise ``dataset`` into ``directory`` as diff-friendly text files."""
    os.makedirs(directory, exist_ok=True)
    vocabulary = dataset.vocabulary
    with open(os.path.join(directory, "vocabulary.tsv"), "w", encoding="utf8") as f:
        writer = csv.writer(f, delimiter="\t", lineterminator="\n")
        writer.writerow(["id", "latitude", "longitude", "key"])
        for i in range(len(vocabulary)):
            writer.writerow(
                [
                    i,
                    repr(float(vocabulary.latitudes[i])),
                    repr(float(vocabulary.longitudes[i])),
                    vocabulary.keys[i],
                ]
            )
    for split in SPLITS:
        path = os.path.join(directory, f"{split}.tsv")
        write_trajectories(path, dataset.split(split))
    with open(os.path.join(directory, "frequency.tsv"), "w", encoding="utf8") as f:
        writer = csv.writer(f, delimiter="\t", lineterminator="\n")
        writer.writerow(["id", "pi"])
        for i, value in enumerate(dataset.profile.pi):
            writer.writerow([i, repr(float(value))])
    meta = {
        "name": dataset.name,
        "num_locations": dataset.num_locations,
        "epsilon": float(dataset.profile.epsilon),
        "sizes": {split: len(dataset.split(split)) for split in SPLITS},
    }
    with open(os.path.join(directory, "dataset.yml"), "w", encoding="utf8") as f:
        yaml.safe_dump(meta, f, default_flow_style=False)


def read_dataset(directory: str) -> CityDataset:
    """Load a dataset written by :func:`write_dataset`."""
    if not os.path.isdir(directory):
        raise IngestionError(f"dataset directory '{directory}' does not exist")
    with open(os.path.join(directory, "dataset.yml"), encoding="utf8") as f:
        meta = yaml.safe_load(f)
    latitudes, longitudes, keys = [], [], []
    vocabulary_file = os.path.join(directory, "vocabulary.tsv")
    with open(vocabulary_file, newline="", encoding="utf8") as f:
        reader = csv.reader(f, delimiter="\t")
        next(reader, None)
        for _, latitude, longitude, key in reader:
            latitudes.append(float(latitude))
            longitudes.append(float(longitude))
            keys.append(key)
    frequency_file = os.path.join(directory, "frequency.tsv")
    with open(frequency_file, newline="", encoding="utf8") as f:
        reader = csv.reader(f, delimiter="\t")
        next(reader, None)
        pi = [float(value) for _, value in reader]
    splits = {
        split: read_trajectories(os.path.join(directory, f"{split}.tsv"))
        for split in SPLITS
    }
    return CityDataset(
        name=meta["name"],
        vocabulary=LocationVocabulary(latitudes, longitudes, keys),
        profile=FrequencyProfile(pi, epsilon=meta["epsilon"]),
        **splits,
    )
