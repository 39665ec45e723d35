"""Candidate selection over historical suffixes with an exact ball tree.

Every suffix that can be cropped out of a terminated training trace
becomes a record. Records are embedded as fixed-length vectors, the
first half holding ordinal activity codes and the second half holding
z-normalized KPI values scaled by a configurable weight, both blocks
zero-padded on the right. A ball tree over those vectors answers exact
k-nearest-neighbour queries under the Euclidean metric; ties are broken
by insertion order so results are reproducible.
"""

from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ArtifactError, DataError, QueryError
from .eventlog import ActivityVocabulary, EventLog, Trace

logger = logging.getLogger(__name__)

INDEX_FORMAT_VERSION = 1

_NO_CHILD = -1


@dataclass(frozen=True)
class SuffixRecord:
    """One historical suffix: ordinal activities, per-step KPIs, source."""

    activities: tuple[int, ...]
    kpi_values: tuple[float, ...]
    total_kpi: float
    case_id: str

    def __post_init__(self):
        if len(self.activities) != len(self.kpi_values):
            raise DataError("suffix record with mismatched activity/KPI lengths")
        if abs(self.total_kpi - sum(self.kpi_values)) > 1e-9 * max(1.0, abs(self.total_kpi)):
            raise DataError("suffix record total does not match its KPI values")

    def __len__(self) -> int:
        return len(self.activities)

    @property
    def steps(self) -> tuple[tuple[int, float], ...]:
        return tuple(zip(self.activities, self.kpi_values))


def extract_suffix_records(log: EventLog, vocabulary: ActivityVocabulary) -> list[SuffixRecord]:
    """Crop every suffix (cut points 1..n-1) out of each terminated trace."""
    records = []
    for trace in log.traces:
        ordinals = tuple(vocabulary.ordinal_of(a) for a in trace.activities)
        kpis = trace.kpi_values
        for k in range(1, len(trace)):
            suffix_kpis = tuple(kpis[k:])
            records.append(
                SuffixRecord(
                    activities=tuple(ordinals[k:]),
                    kpi_values=suffix_kpis,
                    total_kpi=float(sum(suffix_kpis)),
                    case_id=trace.case_id,
                )
            )
    return records


def vectorize_suffix(
    steps: Sequence[tuple[int, float]],
    l_max: int,
    w_kpi: float = 1.0,
    kpi_mean: float = 0.0,
    kpi_std: float = 1.0,
) -> np.ndarray:
    """Embed (ordinal, kpi) steps as one point of dimension 2*l_max.

    Layout: ordinals in positions 0..l_max-1, KPI values (z-normalized,
    then scaled by w_kpi) in positions l_max..2*l_max-1, each block
    zero-padded after the last real step. Suffixes longer than l_max are
    truncated with a warning.
    """
    if len(steps) > l_max:
        logger.warning("truncating %d-step suffix to l_max=%d", len(steps), l_max)
        steps = steps[:l_max]
    vector = np.zeros(2 * l_max, dtype=np.float64)
    std = kpi_std if kpi_std > 0 else 1.0
    for i, (ordinal, kpi) in enumerate(steps):
        vector[i] = float(ordinal)
        vector[l_max + i] = w_kpi * (float(kpi) - kpi_mean) / std
    return vector


class BallTree:
    """Exact k-NN over a fixed point set, stored as flat node arrays.

    Construction recursively splits along the dimension of maximal
    spread at the median (stable order), stopping at leaf_size points.
    Queries prune a node only when its lower bound strictly exceeds the
    current kth distance, so equal-distance candidates survive to be
    tie-broken by point index.
    """

    def __init__(self, vectors: np.ndarray, leaf_size: int = 16):
        vectors = np.asarray(vectors, dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape[0] == 0:
            raise DataError("ball tree needs a non-empty 2-d point matrix")
        if leaf_size < 1:
            raise DataError("leaf_size must be at least 1")
        self.vectors = vectors
        self.leaf_size = leaf_size
        self._permutation = np.arange(vectors.shape[0], dtype=np.int64)
        centroids, radii, starts, ends, lefts, rights = [], [], [], [], [], []

        def build(start: int, end: int) -> int:
            node = len(centroids)
            points = self.vectors[self._permutation[start:end]]
            centroid = points.mean(axis=0)
            radius = float(np.sqrt(((points - centroid) ** 2).sum(axis=1)).max())
            centroids.append(centroid)
            radii.append(radius)
            starts.append(start)
            ends.append(end)
            lefts.append(_NO_CHILD)
            rights.append(_NO_CHILD)
            if end - start > leaf_size:
                spread = points.max(axis=0) - points.min(axis=0)
                dim = int(np.argmax(spread))
                order = np.argsort(points[:, dim], kind="stable")
                self._permutation[start:end] = self._permutation[start:end][order]
                mid = start + (end - start) // 2
                lefts[node] = build(start, mid)
                rights[node] = build(mid, end)
            return node

        build(0, vectors.shape[0])
        self._centroids = np.array(centroids)
        self._radii = np.array(radii)
        self._starts = np.array(starts, dtype=np.int64)
        self._ends = np.array(ends, dtype=np.int64)
        self._lefts = np.array(lefts, dtype=np.int64)
        self._rights = np.array(rights, dtype=np.int64)

    @property
    def size(self) -> int:
        return self.vectors.shape[0]

    @property
    def node_count(self) -> int:
        return len(self._centroids)

    @property
    def depth(self) -> int:
        def walk(node: int) -> int:
            if self._lefts[node] == _NO_CHILD:
                return 0
            return 1 + max(walk(self._lefts[node]), walk(self._rights[node]))

        return walk(0)

    def contains_all_points(self) -> bool:
        """Every point within its node's radius, recursively (test hook)."""
        for node in range(self.node_count):
            members = self.vectors[self._permutation[self._starts[node]:self._ends[node]]]
            dist = np.sqrt(((members - self._centroids[node]) ** 2).sum(axis=1))
            if dist.size and dist.max() > self._radii[node] + 1e-9:
                return False
        return True

    def query(self, q: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
        """Return (distances, indices) of the min(k, n) nearest points."""
        if k < 1:
            raise QueryError("k must be at least 1")
        q = np.asarray(q, dtype=np.float64)
        if q.shape != (self.vectors.shape[1],):
            raise QueryError(
                f"query dimension {q.shape} does not match index dimension "
                f"({self.vectors.shape[1]},)"
            )
        k = min(k, self.size)
        # Max-heap of the k best (distance, index) pairs, negated so the
        # lexicographically worst pair sits at the root.
        heap: list[tuple[float, int]] = []

        def visit(node: int):
            gap = float(np.sqrt(((q - self._centroids[node]) ** 2).sum())) - self._radii[node]
            if len(heap) == k and gap > -heap[0][0]:
                return
            left, right = self._lefts[node], self._rights[node]
            if left == _NO_CHILD:
                span = self._permutation[self._starts[node]:self._ends[node]]
                dist = np.sqrt(((self.vectors[span] - q) ** 2).sum(axis=1))
                for d, i in zip(dist, span):
                    entry = (-float(d), -int(i))
                    if len(heap) < k:
                        heapq.heappush(heap, entry)
                    elif entry > heap[0]:
                        heapq.heapreplace(heap, entry)
                return
            # Nearer child first tightens the bound sooner.
            d_left = ((q - self._centroids[left]) ** 2).sum()
            d_right = ((q - self._centroids[right]) ** 2).sum()
            first, second = (left, right) if d_left <= d_right else (right, left)
            visit(first)
            visit(second)

        visit(0)
        best = sorted((-d, -i) for d, i in heap)
        distances = np.array([d for d, _ in best], dtype=np.float64)
        indices = np.array([i for _, i in best], dtype=np.int64)
        return distances, indices


def build_index(records: Iterable[SuffixRecord], leaf_size: int = 16, **kwargs) -> "SuffixIndex":
    """Build a queryable index over suffix records (see SuffixIndex)."""
    return SuffixIndex.from_records(list(records), leaf_size=leaf_size, **kwargs)


class SuffixIndex:
    """Suffix records plus the ball tree over their vector embeddings."""

    def __init__(
        self,
        records: list[SuffixRecord],
        l_max: int,
        w_kpi: float,
        kpi_mean: float,
        kpi_std: float,
        leaf_size: int = 16,
        vectors: np.ndarray | None = None,
    ):
        if not records:
            raise DataError("cannot index an empty record set")
        self.records = records
        self.l_max = l_max
        self.w_kpi = w_kpi
        self.kpi_mean = kpi_mean
        self.kpi_std = kpi_std
        self.leaf_size = leaf_size
        if vectors is None:
            vectors = np.stack([
                vectorize_suffix(r.steps, l_max, w_kpi, kpi_mean, kpi_std) for r in records
            ])
        self.vectors = vectors
        self.tree = BallTree(self.vectors, leaf_size=leaf_size)

    @classmethod
    def from_records(
        cls,
        records: list[SuffixRecord],
        leaf_size: int = 16,
        w_kpi: float = 1.0,
        kpi_mean: float | None = None,
        kpi_std: float | None = None,
    ) -> "SuffixIndex":
        if not records:
            raise DataError("cannot index an empty record set")
        if kpi_mean is None or kpi_std is None:
            values = np.concatenate([np.asarray(r.kpi_values, dtype=np.float64) for r in records])
            kpi_mean = float(values.mean()) if kpi_mean is None else kpi_mean
            kpi_std = float(values.std()) if kpi_std is None else kpi_std
        l_max = max(len(r) for r in records)
        return cls(records, l_max, w_kpi, kpi_mean, kpi_std, leaf_size=leaf_size)

    @classmethod
    def build(
        cls,
        log: EventLog,
        vocabulary: ActivityVocabulary,
        leaf_size: int = 16,
        w_kpi: float = 1.0,
        kpi_mean: float | None = None,
        kpi_std: float | None = None,
    ) -> "SuffixIndex":
        records = extract_suffix_records(log, vocabulary)
        return cls.from_records(
            records, leaf_size=leaf_size, w_kpi=w_kpi, kpi_mean=kpi_mean, kpi_std=kpi_std
        )

    def vectorize(self, steps: Sequence[tuple[int, float]]) -> np.ndarray:
        return vectorize_suffix(steps, self.l_max, self.w_kpi, self.kpi_mean, self.kpi_std)

    def query_knn(
        self, steps: Sequence[tuple[int, float]], k: int
    ) -> list[tuple[SuffixRecord, float]]:
        """The min(k, n) records nearest to an (ordinal, kpi) suffix."""
        distances, indices = self.tree.query(self.vectorize(steps), k)
        return [(self.records[i], float(d)) for d, i in zip(distances, indices)]

    def save(self, path: str | Path):
        """Persist vectors, records, and parameters as one npz container."""
        offsets = np.zeros(len(self.records) + 1, dtype=np.int64)
        for i, record in enumerate(self.records):
            offsets[i + 1] = offsets[i] + len(record)
        np.savez_compressed(
            path,
            format_version=np.array(INDEX_FORMAT_VERSION),
            vectors=self.vectors,
            activities=np.concatenate(
                [np.asarray(r.activities, dtype=np.int64) for r in self.records]
            ),
            kpi_values=np.concatenate(
                [np.asarray(r.kpi_values, dtype=np.float64) for r in self.records]
            ),
            offsets=offsets,
            case_ids=np.array([r.case_id for r in self.records], dtype=np.str_),
            params=np.array([
                self.l_max, self.w_kpi, self.kpi_mean, self.kpi_std, self.leaf_size
            ], dtype=np.float64),
        )

    @classmethod
    def load(cls, path: str | Path) -> "SuffixIndex":
        path = Path(path)
        if not path.is_file():
            raise ArtifactError(f"no index at {path}")
        try:
            with np.load(path, allow_pickle=False) as data:
                version = int(data["format_version"])
                if version != INDEX_FORMAT_VERSION:
                    raise ArtifactError(f"unsupported index format version {version}")
                offsets = data["offsets"]
                activities = data["activities"]
                kpis = data["kpi_values"]
                case_ids = data["case_ids"]
                records = []
                for i in range(len(offsets) - 1):
                    lo, hi = int(offsets[i]), int(offsets[i + 1])
                    values = tuple(float(v) for v in kpis[lo:hi])
                    records.append(
                        SuffixRecord(
                            activities=tuple(int(a) for a in activities[lo:hi]),
                            kpi_values=values,
                            total_kpi=float(sum(values)),
                            case_id=str(case_ids[i]),
                        )
                    )
                l_max, w_kpi, kpi_mean, kpi_std, leaf_size = data["params"]
                return cls(
                    records,
                    l_max=int(l_max),
                    w_kpi=float(w_kpi),
                    kpi_mean=float(kpi_mean),
                    kpi_std=float(kpi_std),
                    leaf_size=int(leaf_size),
                    vectors=data["vectors"],
                )
        except (KeyError, ValueError, OSError) as exc:
            raise ArtifactError(f"corrupt index container at {path}: {exc}") from None
