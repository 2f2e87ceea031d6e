"""Position-based user grouping with K-means and a distance threshold."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bia import MAX_SLOTS, block_dimensions


class GroupingError(ValueError):
    pass


@dataclass
class GroupMap:
    assignment: np.ndarray   # (K,) group id per user
    centroids: np.ndarray    # (G, 2) floor-plane points
    d_th: float
    history: tuple = ()      # Lloyd objective per iteration

    @property
    def G(self) -> int:
        return len(self.centroids)

    def groups(self):
        return [np.flatnonzero(self.assignment == g) for g in range(self.G)]

    def to_dict(self) -> dict:
        return {"assignment": self.assignment.tolist(),
                "centroids": self.centroids.tolist(), "d_th": self.d_th}


def _distortion(x, labels, centroids) -> float:
    return float(((x - centroids[labels]) ** 2).sum())


def _farthest_point_init(x: np.ndarray, G: int, rng) -> np.ndarray:
    first = int(rng.integers(len(x)))
    chosen = [first]
    d = ((x - x[first]) ** 2).sum(axis=1)
    for _ in range(1, G):
        nxt = int(np.argmax(d))
        chosen.append(nxt)
        d = np.minimum(d, ((x - x[nxt]) ** 2).sum(axis=1))
    return x[chosen].copy()


def _assign(x, centroids):
    d = ((x[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    return np.argmin(d, axis=1)


def _fill_empty(x, labels, centroids):
    # an empty cluster takes the point farthest from its own centroid
    G = len(centroids)
    for g in range(G):
        if not np.any(labels == g):
            counts = np.bincount(labels, minlength=G)
            d = ((x - centroids[labels]) ** 2).sum(axis=1)
            d[counts[labels] <= 1] = -1.0
            k = int(np.argmax(d))
            labels[k] = g
            centroids[g] = x[k]
    return labels


def _centroids(x, labels, G):
    return np.array([x[labels == g].mean(axis=0) for g in range(G)])


def _canonical(labels, centroids):
    # relabel by centroid position so input order does not leak into labels
    order = np.lexsort((np.round(centroids[:, 1], 12), np.round(centroids[:, 0], 12)))
    remap = np.empty_like(order)
    remap[order] = np.arange(len(order))
    return remap[labels], centroids[order]


def kmeans_groups(positions, G: int, d_th: float = 2.0, seed=0, max_iter: int = 100) -> GroupMap:
    """Cluster users on the floor plane into ``G`` non-empty groups.

    After Lloyd convergence, a user lying within ``d_th`` of a foreign
    centroid moves there when that lowers the total within-group distance.
    """
    raw = np.asarray(positions, dtype=float)[:, :2]
    # work in a canonical point order so the input order cannot matter
    order = np.lexsort((raw[:, 1], raw[:, 0]))
    x = raw[order]
    K = len(x)
    if G < 1:
        raise GroupingError("need at least one group")
    if K < G:
        raise GroupingError(f"{K} users cannot fill {G} groups")
    rng = np.random.default_rng(seed)
    centroids = _farthest_point_init(x, G, rng)
    labels = _fill_empty(x, _assign(x, centroids), centroids)
    history = [_distortion(x, labels, centroids)]
    for _ in range(max_iter):
        centroids = _centroids(x, labels, G)
        history.append(_distortion(x, labels, centroids))
        new = _fill_empty(x, _assign(x, centroids), centroids)
        if np.array_equal(new, labels):
            break
        labels = new
        history.append(_distortion(x, labels, centroids))
    centroids = _centroids(x, labels, G)

    def total_dist(lab):
        c = _centroids(x, lab, G)
        return float(np.linalg.norm(x - c[lab], axis=1).sum())

    current = total_dist(labels)
    for k in range(K):
        d = np.linalg.norm(centroids - x[k], axis=1)
        for g in np.argsort(d):
            if g == labels[k] or d[g] > d_th or np.sum(labels == labels[k]) == 1:
                continue
            trial = labels.copy()
            trial[k] = g
            t = total_dist(trial)
            if t < current - 1e-12:
                labels, current = trial, t
                centroids = _centroids(x, labels, G)
                break
    labels, centroids = _canonical(labels, centroids)
    out = np.empty(K, dtype=labels.dtype)
    out[order] = labels
    return GroupMap(out, centroids, float(d_th), tuple(history))


def max_groups(L: int, max_slots: int = MAX_SLOTS) -> int:
    """Largest group count whose supersymbol stays under the slot cap."""
    G = 1
    while block_dimensions(L, G + 1)[0] <= max_slots:
        G += 1
    return G


def max_pairwise_spread(positions, assignment) -> float:
    x = np.asarray(positions, dtype=float)[:, :2]
    worst = 0.0
    for g in np.unique(assignment):
        p = x[assignment == g]
        if len(p) > 1:
            worst = max(worst, float(np.max(np.linalg.norm(p[:, None] - p[None], axis=2))))
    return worst


def choose_groups(positions, L: int, d_th: float = 2.0, seed=0, G_max=None,
                  max_slots: int = MAX_SLOTS) -> GroupMap:
    """Smallest ``G`` whose groups have pairwise spread at most ``2 d_th``,
    never exceeding the block-size limit or the user count."""
    K = len(positions)
    cap = min(K, max_groups(L, max_slots))
    if G_max is not None:
        cap = min(cap, G_max)
    gm = None
    for G in range(1, cap + 1):
        gm = kmeans_groups(positions, G, d_th, seed)
        if max_pairwise_spread(positions, gm.assignment) <= 2 * d_th:
            return gm
    return gm
