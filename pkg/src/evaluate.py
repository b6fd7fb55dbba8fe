#!/usr/bin/env python
"""
evaluate.py (Embedding Evaluation)
----------------------------------

Downstream evaluation of learned node embeddings.

- Node classification: the test-set embeddings are split at random into a KNN
  reference part (fraction f) and a scored part (1 - f); Macro/Micro-F1 are
  averaged over repeated trials for every fraction.
- Node clustering: K-means with k = number of classes over the labeled nodes,
  scored against the ground truth with NMI and ARI, averaged over repeats.

Each trial draws its own seed from (root seed, protocol, fraction, trial), so
a report is reproducible byte for byte.

Usage (as a module):
--------------------
from evaluate import run_classification_eval, run_clustering_eval

table = run_classification_eval(E, labels, split.test_ids, [0.2, 0.4], repeats=10, seed=0)
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd
from scipy.spatial.distance import cdist
from sklearn.cluster import kmeans_plusplus
from sklearn.metrics import adjusted_rand_score, f1_score, normalized_mutual_info_score
from tqdm import tqdm

from core.helper import derive_seed, make_rng
from core.logging_config import logger


@dataclass
class KMeansResult:
    assignments: np.ndarray
    centers: np.ndarray
    inertia_history: list[float] = field(default_factory=list)  # after every assignment step

    @property
    def inertia(self) -> float:
        return self.inertia_history[-1]


@dataclass
class EvalReport:
    classification: pd.DataFrame  # fraction, metric, mean, sd
    clustering: pd.DataFrame  # metric, mean, sd
    repeats: int
    seed: int
    config: dict[str, str] = field(default_factory=dict)

    def to_csv(self, path: Path) -> None:
        header = ["# evaluation report", f"# seed={self.seed}", f"# repeats={self.repeats}"]
        header += [f"# config.{key}={value}" for key, value in sorted(self.config.items())]
        blocks = [
            self.classification.to_csv(index=False, float_format="%.10g", lineterminator="\n"),
            self.clustering.to_csv(index=False, float_format="%.10g", lineterminator="\n"),
        ]
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(header) + "\n" + "\n".join(blocks), encoding="utf-8")


def knn_predict(train_emb: np.ndarray, train_labels: np.ndarray, test_emb: np.ndarray, k: int = 5) -> np.ndarray:
    """
    Majority vote among the k nearest reference points (Euclidean).
    Equal distances prefer the lower reference index, equal votes the lower class id.
    """
    train_labels = np.asarray(train_labels, dtype=np.int64)
    if len(train_labels) == 0:
        raise ValueError("knn_predict needs a non-empty reference set")
    if k < 1 or k > len(train_labels):
        raise ValueError(f"k={k} needs between 1 and {len(train_labels)} reference points")
    distances = cdist(np.atleast_2d(test_emb), np.atleast_2d(train_emb), metric="sqeuclidean")
    nearest = np.argsort(distances, axis=1, kind="stable")[:, :k]
    num_classes = int(train_labels.max()) + 1
    return np.array([np.bincount(train_labels[row], minlength=num_classes).argmax() for row in nearest], dtype=np.int64)


def f1_scores(pred: Sequence[int], truth: Sequence[int], num_classes: int) -> tuple[float, float]:
    """(macro, micro) F1 over classes 0..C-1; a 0/0 ratio counts as 0."""
    if len(pred) != len(truth):
        raise ValueError(f"prediction length {len(pred)} != ground truth length {len(truth)}")
    classes = list(range(num_classes))
    macro = f1_score(truth, pred, labels=classes, average="macro", zero_division=0)
    micro = f1_score(truth, pred, labels=classes, average="micro", zero_division=0)
    return float(macro), float(micro)


def kmeans(embeddings: np.ndarray, k: int, seed: int, max_iters: int = 300) -> KMeansResult:
    """
    k-means++ seeding followed by Lloyd iterations until the assignment stops
    changing. An empty cluster is moved to the point farthest from its centre.
    """
    x = np.asarray(embeddings, dtype=np.float64)
    if k < 1 or k > len(x):
        raise ValueError(f"cannot form {k} clusters from {len(x)} points")
    centers, _ = kmeans_plusplus(x, n_clusters=k, random_state=seed)
    history: list[float] = []
    previous = None
    for _ in range(max_iters):
        distances = cdist(x, centers, metric="sqeuclidean")
        assignments = np.argmin(distances, axis=1)
        own = distances[np.arange(len(x)), assignments]
        history.append(float(own.sum()))
        if previous is not None and np.array_equal(assignments, previous):
            break
        previous = assignments
        counts = np.bincount(assignments, minlength=k)
        far_points = iter(np.argsort(-own, kind="stable"))
        for cluster in range(k):
            if counts[cluster]:
                centers[cluster] = x[assignments == cluster].mean(axis=0)
            else:
                centers[cluster] = x[next(far_points)]
    return KMeansResult(assignments, centers, history)


def nmi(a: Sequence[int], b: Sequence[int]) -> float:
    """I(a;b) / sqrt(H(a) H(b)); 0 when either partition has a single cluster."""
    if len(a) != len(b):
        raise ValueError(f"partition lengths differ: {len(a)} vs {len(b)}")
    if len(np.unique(a)) <= 1 or len(np.unique(b)) <= 1:
        return 0.0
    return float(normalized_mutual_info_score(a, b, average_method="geometric"))


def ari(a: Sequence[int], b: Sequence[int]) -> float:
    if len(a) != len(b):
        raise ValueError(f"partition lengths differ: {len(a)} vs {len(b)}")
    return float(adjusted_rand_score(a, b))


def _summarize(rows: list[dict], keys: list[str]) -> pd.DataFrame:
    frame = pd.DataFrame(rows)
    summary = frame.groupby(keys, sort=False)["value"].agg(mean="mean", sd=lambda v: float(np.std(v, ddof=0)))
    return summary.reset_index()


def run_classification_eval(
    embeddings: np.ndarray,
    labels: np.ndarray,
    test_ids: np.ndarray,
    fractions: Sequence[float],
    repeats: int,
    seed: int,
    k: int = 5,
) -> pd.DataFrame:
    """Macro/Micro-F1 mean and sd per reference fraction of the test embeddings."""
    test_ids = np.asarray(test_ids, dtype=np.int64)
    if (labels[test_ids] < 0).any():
        raise ValueError("classification evaluation needs labeled test nodes")
    num_classes = int(labels[labels >= 0].max()) + 1
    rows = []
    for fraction in fractions:
        n_reference = int(round(fraction * len(test_ids)))
        if n_reference < k or n_reference >= len(test_ids):
            raise ValueError(
                f"fraction {fraction} of {len(test_ids)} test nodes leaves {n_reference} reference points (k={k})"
            )
        for trial in tqdm(range(repeats), desc=f"KNN fraction {fraction}", leave=False):
            order = make_rng(seed, "eval", f"classification-{fraction}", trial).permutation(test_ids)
            reference, scored = order[:n_reference], order[n_reference:]
            pred = knn_predict(embeddings[reference], labels[reference], embeddings[scored], k)
            macro, micro = f1_scores(pred, labels[scored], num_classes)
            rows.append({"fraction": fraction, "metric": "macro_f1", "value": macro})
            rows.append({"fraction": fraction, "metric": "micro_f1", "value": micro})
    table = _summarize(rows, ["fraction", "metric"])
    logger.info(f"Classification evaluation finished over {len(fractions)} fractions x {repeats} trials.")
    return table


def run_clustering_eval(
    embeddings: np.ndarray,
    labels: np.ndarray,
    repeats: int,
    seed: int,
    max_iters: int = 300,
) -> pd.DataFrame:
    """K-means with k = C over the labeled nodes; NMI/ARI mean and sd."""
    labeled = np.flatnonzero(labels >= 0)
    truth = labels[labeled]
    num_classes = int(truth.max()) + 1
    rows = []
    for trial in tqdm(range(repeats), desc="K-means", leave=False):
        result = kmeans(embeddings[labeled], num_classes, derive_seed(seed, "eval", "clustering", trial), max_iters)
        rows.append({"metric": "nmi", "value": nmi(truth, result.assignments)})
        rows.append({"metric": "ari", "value": ari(truth, result.assignments)})
    return _summarize(rows, ["metric"])


def run_evaluation(
    embeddings: np.ndarray,
    labels: np.ndarray,
    test_ids: np.ndarray,
    fractions: Sequence[float],
    repeats: int,
    seed: int,
    k: int = 5,
    max_iters: int = 300,
    config: dict[str, str] | None = None,
) -> EvalReport:
    """Both protocols, assembled into one report."""
    return EvalReport(
        classification=run_classification_eval(embeddings, labels, test_ids, fractions, repeats, seed, k),
        clustering=run_clustering_eval(embeddings, labels, repeats, seed, max_iters),
        repeats=repeats,
        seed=seed,
        config=config or {},
    )
