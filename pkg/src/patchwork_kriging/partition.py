"""Recursive principal-direction bisection of the input domain.

A :class:`SpatialTree` of depth ``floor(log2(K))`` splits every node's points
along their leading principal direction at the median projection, so leaves
hold equal numbers of training points (up to one).  Regions are numbered
``0 .. n_regions-1`` from left to right, hence every leaf of a node's left
subtree has a smaller id than every leaf of its right subtree.

Pseudo-observation locations live on the splitting hyperplanes
``v . x = nu`` (:func:`place_pseudo_points`), each labelled with the pair of
leaves ``(k, l)``, ``k < l``, that meet there.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConfigurationError, InputError, SamplingError

MIN_LEAF_SIZE = 5


def project(X: np.ndarray, v: np.ndarray) -> np.ndarray:
    # one code path for build and routing so ties resolve identically
    return (X * v).sum(axis=1)


@dataclass
class TreeNode:
    node_id: int
    level: int
    lower: np.ndarray
    upper: np.ndarray
    count: int
    parent: int | None = None
    direction: np.ndarray | None = None
    threshold: float | None = None
    left: int | None = None
    right: int | None = None
    region: int | None = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None


@dataclass
class SpatialTree:
    """Binary spatial tree over ``dim``-dimensional inputs.

    ``labels[i]`` is the region of training point ``i``.
    """

    nodes: list
    dim: int
    levels: int
    labels: np.ndarray = field(repr=False)

    @property
    def n_regions(self) -> int:
        return 2**self.levels

    @property
    def root(self) -> TreeNode:
        return self.nodes[0]

    def leaves(self) -> list:
        out = [n for n in self.nodes if n.is_leaf]
        return sorted(out, key=lambda n: n.region)

    def internal_nodes(self) -> list:
        return [n for n in self.nodes if not n.is_leaf]

    def members(self, region: int) -> np.ndarray:
        return np.flatnonzero(self.labels == region)

    def _check(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :] if self.dim > 1 or X.size == 1 else X[:, None]
        if X.ndim != 2 or X.shape[1] != self.dim:
            raise InputError(f"expected points of dimension {self.dim}, got shape {X.shape}")
        return X

    def descend(self, node_id: int, X) -> np.ndarray:
        """Region ids reached by routing ``X`` from ``node_id`` downward."""
        X = self._check(X)
        out = np.empty(X.shape[0], dtype=int)
        stack = [(node_id, np.arange(X.shape[0]))]
        while stack:
            nid, idx = stack.pop()
            node = self.nodes[nid]
            if node.is_leaf:
                out[idx] = node.region
                continue
            go_left = project(X[idx], node.direction) <= node.threshold
            stack.append((node.left, idx[go_left]))
            stack.append((node.right, idx[~go_left]))
        return out

    def route(self, X) -> np.ndarray:
        """Region ids of the rows of ``X`` (points on a split go left)."""
        return self.descend(0, X)

    def route_one(self, x) -> int:
        return int(self.route(np.reshape(np.asarray(x, dtype=float), (1, -1)))[0])

    def passes_through(self, node_id: int, X) -> np.ndarray:
        """Whether routing each row of ``X`` from the root visits ``node_id``."""
        X = self._check(X)
        ok = np.ones(X.shape[0], dtype=bool)
        child = self.nodes[node_id]
        while child.parent is not None:
            parent = self.nodes[child.parent]
            left = project(X, parent.direction) <= parent.threshold
            ok &= left if parent.left == child.node_id else ~left
            child = parent
        return ok

    def locate_boundary(self, X, rtol=1e-8):
        """Find the splitting hyperplane each row of ``X`` lies on.

        Returns ``(node, k, l)`` arrays; ``node`` is -1 where the point is on
        no hyperplane along its routing path.  The shallowest hyperplane wins.
        """
        X = self._check(X)
        n = X.shape[0]
        node_of = np.full(n, -1, dtype=int)
        k = np.full(n, -1, dtype=int)
        l = np.full(n, -1, dtype=int)
        stack = [(0, np.arange(n))]
        while stack:
            nid, idx = stack.pop()
            node = self.nodes[nid]
            if node.is_leaf or idx.size == 0:
                continue
            p = project(X[idx], node.direction)
            on = np.abs(p - node.threshold) <= rtol * (1.0 + abs(node.threshold))
            hit = idx[on]
            if hit.size:
                node_of[hit] = nid
                k[hit] = self.descend(node.left, X[hit])
                l[hit] = self.descend(node.right, X[hit])
            rest = idx[~on]
            left = p[~on] <= node.threshold
            stack.append((node.left, rest[left]))
            stack.append((node.right, rest[~left]))
        return node_of, k, l

    # serialization
    def to_dict(self) -> dict:
        nodes = []
        for n in self.nodes:
            item = {
                "id": n.node_id,
                "level": n.level,
                "lower": n.lower.tolist(),
                "upper": n.upper.tolist(),
                "count": n.count,
                "parent": n.parent,
            }
            if n.is_leaf:
                item["region_id"] = n.region
            else:
                item.update(
                    direction=n.direction.tolist(),
                    threshold=n.threshold,
                    children=[n.left, n.right],
                )
            nodes.append(item)
        return {"dim": self.dim, "levels": self.levels, "nodes": nodes}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict, X=None) -> "SpatialTree":
        nodes = []
        for item in d["nodes"]:
            node = TreeNode(
                node_id=item["id"],
                level=item["level"],
                lower=np.asarray(item["lower"], dtype=float),
                upper=np.asarray(item["upper"], dtype=float),
                count=item["count"],
                parent=item["parent"],
            )
            if "children" in item:
                node.direction = np.asarray(item["direction"], dtype=float)
                node.threshold = float(item["threshold"])
                node.left, node.right = item["children"]
            else:
                node.region = item["region_id"]
            nodes.append(node)
        tree = cls(nodes=nodes, dim=d["dim"], levels=d["levels"], labels=np.zeros(0, dtype=int))
        if X is not None:
            tree.labels = tree.route(X)
        return tree

    @classmethod
    def from_json(cls, text, X=None) -> "SpatialTree":
        return cls.from_dict(json.loads(text), X)


def n_levels(K: int) -> int:
    if K < 1:
        raise ConfigurationError(f"K must be >= 1, got {K}")
    return int(math.floor(math.log2(K)))


def _principal_direction(Xn: np.ndarray) -> np.ndarray:
    d = Xn.shape[1]
    e1 = np.zeros(d)
    e1[0] = 1.0
    if Xn.shape[0] < 2:
        return e1
    centered = Xn - Xn.mean(axis=0)
    cov = centered.T @ centered / (Xn.shape[0] - 1)
    w, V = np.linalg.eigh(cov)
    if not w[-1] > 0:
        return e1
    v = V[:, -1]
    v = v / np.linalg.norm(v)
    if v[np.argmax(np.abs(v))] < 0:
        v = -v
    return v


def _median_split(p: np.ndarray):
    """Threshold putting ``ceil(n/2)`` projections at or below it, or None."""
    n = p.size
    n_left = (n + 1) // 2
    s = np.sort(p, kind="stable")
    a, b = s[n_left - 1], s[n_left]
    if not b > a:
        return None
    nu = a + 0.5 * (b - a)
    if not a <= nu < b:
        nu = a
    return float(nu)


def build_tree(X, K: int, min_leaf_size: int = MIN_LEAF_SIZE) -> SpatialTree:
    """Build a spatial tree with ``2**floor(log2(K))`` equally sized leaves.

    Parameters
    ----------
    X : (N, d) array
        Training inputs.
    K : int
        Requested number of regions; rounded down to a power of two.
    min_leaf_size : int
        Smallest admissible leaf.

    Raises
    ------
    ConfigurationError
        If ``N < 2**floor(log2(K)) * min_leaf_size`` or a node cannot be
        split without ties at the median along any candidate direction.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] == 0:
        raise InputError(f"X must be a non-empty (N, d) array, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise InputError("X contains non-finite values")
    levels = n_levels(K)
    N, d = X.shape
    if N < 2**levels * min_leaf_size:
        raise ConfigurationError(
            f"N={N} points cannot fill {2**levels} regions of at least {min_leaf_size}"
        )

    def new_node(idx, level, parent):
        Xn = X[idx]
        node = TreeNode(
            node_id=len(nodes),
            level=level,
            lower=Xn.min(axis=0),
            upper=Xn.max(axis=0),
            count=idx.size,
            parent=parent,
        )
        nodes.append(node)
        members.append(idx)
        return node

    nodes: list = []
    members: list = []
    new_node(np.arange(N), 0, None)
    frontier = [0]
    for level in range(levels):
        next_frontier = []
        for nid in frontier:
            node = nodes[nid]
            idx = members[nid]
            Xn = X[idx]
            pc = _principal_direction(Xn)
            spread = Xn.max(axis=0) - Xn.min(axis=0)
            candidates = [pc] + [np.eye(d)[j] for j in np.argsort(-spread, kind="stable")]
            for v in candidates:
                p = project(Xn, v)
                nu = _median_split(p)
                if nu is not None:
                    break
            else:
                raise ConfigurationError(
                    f"node {nid} (level {level}) has tied projections at its median "
                    "along every candidate direction"
                )
            go_left = p <= nu
            node.direction = v
            node.threshold = nu
            node.left = new_node(idx[go_left], level + 1, nid).node_id
            node.right = new_node(idx[~go_left], level + 1, nid).node_id
            next_frontier += [node.left, node.right]
        frontier = next_frontier

    labels = np.empty(N, dtype=int)
    for region, nid in enumerate(frontier):
        nodes[nid].region = region
        labels[members[nid]] = region
    return SpatialTree(nodes=nodes, dim=d, levels=levels, labels=labels)


@dataclass
class BoundaryEntry:
    pair: tuple
    points: np.ndarray
    node: int


@dataclass
class BoundarySet:
    """Pseudo-observation locations with their region pairs.

    Rows are grouped by pair in lexicographic ``(k, l)`` order.

    Attributes
    ----------
    points : (n, d) array
    pairs : (n, 2) int array, ``pairs[:, 0] < pairs[:, 1]``
    nodes : (n,) int array, id of the tree node whose hyperplane holds the point
    """

    points: np.ndarray
    pairs: np.ndarray
    nodes: np.ndarray

    def __len__(self):
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def pair_list(self) -> list:
        return sorted({(int(k), int(l)) for k, l in self.pairs})

    def entries(self) -> list:
        out = []
        for pair in self.pair_list():
            mask = (self.pairs[:, 0] == pair[0]) & (self.pairs[:, 1] == pair[1])
            out.append(BoundaryEntry(pair, self.points[mask], int(self.nodes[mask][0])))
        return out

    def touching(self, region: int):
        """Indices of pseudo points whose pair contains ``region`` and their signs.

        The sign is +1 when ``region`` is the smaller id of the pair and -1
        otherwise, i.e. the coefficient of ``f_region`` in ``f_k - f_l``.
        """
        first = self.pairs[:, 0] == region
        second = self.pairs[:, 1] == region
        idx = np.flatnonzero(first | second)
        signs = np.where(first[idx], 1.0, -1.0)
        return idx, signs

    def to_dict(self) -> dict:
        return {
            "points": self.points.tolist(),
            "pairs": self.pairs.tolist(),
            "nodes": self.nodes.tolist(),
            "dim": int(self.points.shape[1]),
        }

    @classmethod
    def from_dict(cls, d) -> "BoundarySet":
        dim = d["dim"]
        return cls(
            points=np.asarray(d["points"], dtype=float).reshape(-1, dim),
            pairs=np.asarray(d["pairs"], dtype=int).reshape(-1, 2),
            nodes=np.asarray(d["nodes"], dtype=int).reshape(-1),
        )

    @classmethod
    def empty(cls, dim: int) -> "BoundarySet":
        return cls(np.zeros((0, dim)), np.zeros((0, 2), dtype=int), np.zeros(0, dtype=int))


def sample_on_hyperplane(tree: SpatialTree, node_id: int, count: int, rng, max_fail=None):
    """Draw ``count`` points on a node's hyperplane inside its region.

    Candidates are uniform in the bounding box of the node's training points,
    projected orthogonally onto ``v . x = nu``; a candidate is kept when it
    stays inside the box and routes through ``node_id``.  For one-dimensional
    inputs the hyperplane is the single point ``nu / v``.
    """
    node = tree.nodes[node_id]
    v, nu = node.direction, node.threshold
    if tree.dim == 1:
        return np.full((min(count, 1), 1), nu / v[0])
    if count <= 0:
        return np.zeros((0, tree.dim))
    if max_fail is None:
        max_fail = 1000 * count
    lo, hi = node.lower, node.upper
    slack = 1e-12 * (1.0 + np.abs(lo) + np.abs(hi))
    out = []
    fails = 0
    batch = max(16, 4 * count)
    while len(out) < count:
        u = rng.uniform(lo, hi, size=(batch, tree.dim))
        x = u - np.outer(project(u, v) - nu, v)
        inside = np.all((x >= lo - slack) & (x <= hi + slack), axis=1)
        inside &= tree.passes_through(node_id, x)
        for i in range(batch):
            if inside[i]:
                out.append(x[i])
                fails = 0
                if len(out) == count:
                    break
            else:
                fails += 1
                if fails >= max_fail:
                    raise SamplingError(
                        f"could not place points on the hyperplane of node {node_id} "
                        f"after {fails} consecutive draws"
                    )
    return np.array(out)


def place_pseudo_points(tree: SpatialTree, B: int, rng_seed: int) -> BoundarySet:
    """Sample ``B`` pseudo-input locations per splitting hyperplane.

    With one-dimensional inputs the count is clamped to one point per split.
    Each point is labelled with the pair of leaves on either side of it;
    points closer than ``1e-9`` times the root box diameter to an earlier
    point are dropped.
    """
    if B < 0:
        raise InputError(f"B must be non-negative, got {B}")
    d = tree.dim
    if B == 0 or tree.levels == 0:
        return BoundarySet.empty(d)
    rng = np.random.default_rng(rng_seed)
    pts, ks, ls, owners = [], [], [], []
    for node in tree.internal_nodes():
        x = sample_on_hyperplane(tree, node.node_id, B, rng)
        pts.append(x)
        ks.append(tree.descend(node.left, x))
        ls.append(tree.descend(node.right, x))
        owners.append(np.full(x.shape[0], node.node_id))
    points = np.vstack(pts)
    k = np.concatenate(ks)
    l = np.concatenate(ls)
    owner = np.concatenate(owners)

    diam = float(np.linalg.norm(tree.root.upper - tree.root.lower))
    if points.shape[0] > 1 and diam > 0:
        close = cKDTree(points).query_pairs(1e-9 * diam, output_type="ndarray")
        if close.size:
            keep = np.ones(points.shape[0], dtype=bool)
            keep[close.max(axis=1)] = False
            points, k, l, owner = points[keep], k[keep], l[keep], owner[keep]

    order = np.lexsort((np.arange(k.size), l, k))
    return BoundarySet(
        points=points[order],
        pairs=np.column_stack([k[order], l[order]]),
        nodes=owner[order],
    )


@dataclass
class AdjacencyInfo:
    neighbors: list
    degree: np.ndarray


def adjacency(bset: BoundarySet, K: int) -> AdjacencyInfo:
    """Region neighbour lists implied by the pairs present in ``bset``."""
    neighbors = [set() for _ in range(K)]
    for k, l in bset.pair_list():
        neighbors[k].add(l)
        neighbors[l].add(k)
    lists = [sorted(s) for s in neighbors]
    return AdjacencyInfo(lists, np.array([len(s) for s in lists], dtype=int))
