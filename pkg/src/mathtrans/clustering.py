"""Greedy topology clustering for minibatch formation.

A mask is a tuple of topologies (the input/output pair of a formula pair;
autoencoder training clusters single-topology masks).  Identical masks are
pooled, so the greedy scans run over unique shapes with multiplicities.

Two schedules drive the outer loop: a descending minimum-member-count list
and an ascending maximum-hull-size list, both geometric over a fixed number
of steps.  Hull sizes and increments always sum over the mask's slots.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .trees import Topology

Mask = tuple[Topology, ...]


def subsumes(a: Topology, b: Topology) -> bool:
    """True iff every position of b exists in a."""
    return kernels.subsumes(a.struct, b.struct)


def hull(topos) -> Topology:
    """Minimal topology subsuming every input (position-wise union)."""
    topos = list(topos)
    if not topos:
        raise ValueError("hull of an empty list")
    acc = topos[0].struct
    for t in topos[1:]:
        acc = kernels.union(acc, t.struct)
    return Topology(acc)


def mask_size(mask: Mask) -> int:
    return sum(t.size for t in mask)


def hull_increment(hulls: Mask, mask: Mask) -> int:
    """Growth of the summed hull size if mask joined the cluster; >= 0."""
    new = sum(kernels.union_size(h.struct, t.struct)
              for h, t in zip(hulls, mask))
    return new - mask_size(hulls)


@dataclass
class Cluster:
    member_ids: list
    hulls: Mask
    stage: int
    member_masks: list[Mask] = field(default_factory=list)  # unique shapes

    @property
    def hull_in(self) -> Topology:
        return self.hulls[0]

    @property
    def hull_out(self) -> Topology:
        return self.hulls[-1]

    @property
    def hull_size(self) -> int:
        return mask_size(self.hulls)


@dataclass
class Clustering:
    clusters: list[Cluster] = field(default_factory=list)

    @property
    def n_trees(self) -> int:
        return sum(len(c.member_ids) for c in self.clusters)

    def assignment(self) -> dict:
        out = {}
        for i, c in enumerate(self.clusters):
            for mid in c.member_ids:
                out[mid] = i
        return out

    def to_json(self) -> str:
        def enc(t: Topology) -> str:
            return "".join(str(b) for b in t.struct)

        obj = {
            "clusters": [
                {"members": list(c.member_ids),
                 "hulls": [enc(h) for h in c.hulls],
                 "member_masks": [[enc(t) for t in m]
                                  for m in c.member_masks],
                 "stage": c.stage}
                for c in self.clusters
            ]
        }
        return json.dumps(obj, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, s: str) -> "Clustering":
        def dec(h: str) -> Topology:
            return Topology(bytes(int(ch) for ch in h))

        obj = json.loads(s)
        clusters = [
            Cluster(c["members"],
                    tuple(dec(h) for h in c["hulls"]),
                    c["stage"],
                    [tuple(dec(t) for t in m)
                     for m in c.get("member_masks", [])])
            for c in obj["clusters"]
        ]
        return cls(clusters)


@dataclass
class Schedules:
    min_elems: list[int]
    max_size: list[int]

    def __post_init__(self):
        if len(self.min_elems) != len(self.max_size):
            raise ValueError("schedule lists must have equal length")

    @property
    def steps(self) -> int:
        return len(self.min_elems)

    @classmethod
    def default(cls, n_trees: int, steps: int = 20,
                max_size_end: float = 5e4) -> "Schedules":
        """Geometric schedules: min-elems from floor(2% n) down to 1,
        max-size from 5 up to max_size_end."""
        if steps < 2:
            raise ValueError("need at least 2 steps")
        start = 0.02 * n_trees
        span = max_size_end / 5.0
        min_elems = []
        max_size = []
        for i in range(steps):
            frac = (steps - 1 - i) / (steps - 1)
            min_elems.append(max(1, math.floor(start ** frac)) if start > 0
                             else 1)
            max_size.append(math.floor(5 * span ** (i / (steps - 1))))
        return cls(min_elems, max_size)


class _Pool:
    """Unique masks with multiplicities plus flat arrays for the kernels."""

    def __init__(self, masks):
        # masks: iterable of (member_id, Mask)
        grouped: dict[tuple[bytes, ...], list] = {}
        mask_of: dict[tuple[bytes, ...], Mask] = {}
        for mid, mask in masks:
            key = tuple(t.struct for t in mask)
            grouped.setdefault(key, []).append(mid)
            mask_of[key] = mask
        order = sorted(grouped, key=lambda k: (sum(len(s) for s in k), k))
        self.keys = order
        self.masks = [mask_of[k] for k in order]
        self.members = [grouped[k] for k in order]
        self.sizes = np.array([sum(len(s) for s in k) for k in order],
                              dtype=np.int64)
        self.n_slots = len(order[0]) if order else 0
        self.flat = []
        self.offsets = []
        for s in range(self.n_slots):
            parts = [k[s] for k in order]
            self.flat.append(b"".join(parts))
            offs = np.zeros(len(order) + 1, dtype=np.int64)
            np.cumsum([len(p) for p in parts], out=offs[1:])
            self.offsets.append(offs)

    def __len__(self):
        return len(self.keys)


def find_clusters(clustering: Clustering, pool: _Pool, alive: np.ndarray,
                  min_elems: int, max_size: int, stage: int,
                  final: bool = False) -> None:
    """One schedule step of the greedy cluster search, in place.

    Seeds a cluster from each still-unclustered mask in (size, encoding)
    order, absorbs every mask that does not grow the hull, then repeatedly
    adds the least-increment mask while the hull stays within max_size.
    Clusters below min_elems members are resolved (their masks return to the
    pool); others are frozen into `clustering` and their masks marked dead
    in `alive`.  A seed whose own hull exceeds max_size resolves too (it
    belongs to a later stage) unless this is the final stage, where it
    freezes as a singleton.
    """
    n = len(pool)
    sub_ok = np.empty(n, dtype=bool)
    sub_tmp = np.empty(n, dtype=bool)
    inc = np.empty(n, dtype=np.int64)
    inc_tmp = np.empty(n, dtype=np.int64)

    for seed in range(n):
        if not alive[seed]:
            continue
        hulls = list(pool.masks[seed])
        hull_total = int(pool.sizes[seed])
        members = list(pool.members[seed])
        taken = [seed]
        alive[seed] = False

        while hull_total <= max_size:
            # (i) absorb everything the hull already subsumes
            sub_ok[:] = alive
            for s in range(pool.n_slots):
                kernels.subsumes_many(hulls[s].struct, pool.flat[s],
                                      pool.offsets[s], sub_tmp)
                sub_ok &= sub_tmp
            for j in np.nonzero(sub_ok)[0]:
                members.extend(pool.members[j])
                taken.append(int(j))
                alive[j] = False
            # (ii) cheapest strictly-growing addition within max_size
            inc[:] = 0
            for s in range(pool.n_slots):
                kernels.union_size_many(hulls[s].struct, pool.flat[s],
                                        pool.offsets[s], inc_tmp)
                inc += inc_tmp
            inc -= hull_total
            eligible = alive & (inc + hull_total <= max_size)
            if not eligible.any():
                break
            least = inc[eligible].min()
            ties = np.nonzero(eligible & (inc == least))[0]
            best = int(min(ties, key=lambda j: pool.keys[j]))
            hulls = [Topology(kernels.union(h.struct, t.struct))
                     for h, t in zip(hulls, pool.masks[best])]
            hull_total += int(inc[best])
            members.extend(pool.members[best])
            taken.append(best)
            alive[best] = False

        fits = hull_total <= max_size or final
        if len(members) >= min_elems and fits:
            clustering.clusters.append(
                Cluster(members, tuple(hulls), stage,
                        [pool.masks[j] for j in taken]))
        else:
            for j in taken:
                alive[j] = True


def pick_clustering(masks, schedules: Schedules) -> Clustering:
    """Run find_clusters over the schedule steps, threading the pool.

    masks: iterable of (member_id, tuple-of-Topology).  After the final step
    (min_elems = 1) every mask is clustered; a seed whose own hull exceeds
    the step's max_size freezes as a singleton there.
    """
    pool = _Pool(masks)
    clustering = Clustering()
    if not len(pool):
        return clustering
    alive = np.ones(len(pool), dtype=bool)
    for stage, (me, ms) in enumerate(zip(schedules.min_elems,
                                         schedules.max_size)):
        final = stage == schedules.steps - 1
        if final:
            me = min(me, 1)  # the final step must clear the pool
        find_clusters(clustering, pool, alive, me, ms, stage, final=final)
        if not alive.any():
            break
    assert not alive.any(), "final schedule step left unclustered masks"
    return clustering


def singleton_clustering(masks) -> Clustering:
    """Every mask its own cluster; the 'no clustering' baseline."""
    return Clustering([Cluster([mid], mask, 0, [mask])
                       for mid, mask in masks])


def cost_proxy(clustering: Clustering, alpha: float = 1.0) -> float:
    """#clusters * (sum over trees of their cluster's hull size) ** alpha."""
    if not 1.0 <= alpha <= 1.02:
        raise ValueError("alpha must be in [1, 1.02]")
    total = sum(len(c.member_ids) * c.hull_size for c in clustering.clusters)
    return len(clustering.clusters) * float(total) ** alpha


def cost_proxy_from_counts(n_clusters: int, total_hull: int,
                           alpha: float = 1.0) -> float:
    """The training-time proxy from pre-computed counts."""
    return n_clusters * float(total_hull) ** alpha


def total_padded_size(clustering: Clustering) -> int:
    return sum(len(c.member_ids) * c.hull_size for c in clustering.clusters)
