"""Binary AABB tree with margin-inflated boxes, batched box queries, and
level-order refitting."""

from __future__ import annotations

import numpy as np

_LEAF_SIZE = 4


class Bvh:
    """Median-split AABB hierarchy over primitive boxes.

    Nodes are stored in flat arrays; children always have larger indices than
    their parent, and each leaf owns a contiguous slice of the primitive
    permutation, so refits run level by level with vectorized min/max.
    """

    def __init__(self, prim_min: np.ndarray, prim_max: np.ndarray, margin: float):
        n = len(prim_min)
        if n == 0:
            raise ValueError("empty primitive set")
        self.margin = float(margin)
        self.n_prims = n

        centroids = 0.5 * (prim_min + prim_max)
        perm = np.arange(n, dtype=np.int64)

        node_left, node_right, node_start, node_end, node_depth = [], [], [], [], []

        # iterative median-split; children are appended after their parent
        stack = [(0, n, 0, -1, False)]  # (start, end, depth, parent, is_right)
        while stack:
            start, end, depth, parent, is_right = stack.pop()
            idx = len(node_left)
            node_left.append(-1)
            node_right.append(-1)
            node_start.append(start)
            node_end.append(end)
            node_depth.append(depth)
            if parent >= 0:
                if is_right:
                    node_right[parent] = idx
                else:
                    node_left[parent] = idx
            count = end - start
            if count <= _LEAF_SIZE:
                continue
            sub = perm[start:end]
            c = centroids[sub]
            axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
            half = count // 2
            order = np.argpartition(c[:, axis], half, axis=0)
            perm[start:end] = sub[order]
            mid = start + half
            # push right first so the left child is processed (and numbered) first
            stack.append((mid, end, depth + 1, idx, True))
            stack.append((start, mid, depth + 1, idx, False))

        self.perm = perm
        self.node_left = np.array(node_left, dtype=np.int64)
        self.node_right = np.array(node_right, dtype=np.int64)
        self.node_start = np.array(node_start, dtype=np.int64)
        self.node_end = np.array(node_end, dtype=np.int64)
        self.is_leaf = self.node_left < 0
        self._leaf_ids = np.nonzero(self.is_leaf)[0]

        # internal node ids grouped by depth, deepest group first, for refits
        depth = np.array(node_depth, dtype=np.int64)
        internal = np.nonzero(~self.is_leaf)[0]
        self._internal_levels = [
            internal[depth[internal] == d]
            for d in range(depth.max() if len(depth) else 0, -1, -1)
            if (depth[internal] == d).any()
        ]

        m = len(self.node_left)
        self.node_min = np.empty((m, 3), dtype=np.float64)
        self.node_max = np.empty((m, 3), dtype=np.float64)
        self.refit(prim_min, prim_max)

    # ------------------------------------------------------------------

    def refit(self, prim_min: np.ndarray, prim_max: np.ndarray) -> None:
        """Recompute node boxes from current primitive boxes (topology kept)."""
        leaves = self._leaf_ids
        pmin = prim_min[self.perm] - self.margin
        pmax = prim_max[self.perm] + self.margin
        self._pmin, self._pmax = pmin, pmax  # perm order, for exact leaf tests
        starts = self.node_start[leaves]
        self.node_min[leaves] = np.minimum.reduceat(pmin, starts, axis=0)
        self.node_max[leaves] = np.maximum.reduceat(pmax, starts, axis=0)
        for ids in self._internal_levels:
            l, r = self.node_left[ids], self.node_right[ids]
            self.node_min[ids] = np.minimum(self.node_min[l], self.node_min[r])
            self.node_max[ids] = np.maximum(self.node_max[l], self.node_max[r])

    # ------------------------------------------------------------------

    def query(self, box_min: np.ndarray, box_max: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Find primitives whose inflated boxes overlap the query boxes.

        Args:
            box_min, box_max: (m, 3) query boxes.

        Returns:
            (query_ids, prim_ids) int64 arrays of overlapping pairs, sorted.
        """
        m = len(box_min)
        if m == 0:
            return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
        q = np.arange(m, dtype=np.int64)  # frontier query ids
        nodes = np.zeros(m, dtype=np.int64)  # frontier node ids (root = 0)
        out_q, out_p = [], []
        while len(q):
            nmin = self.node_min[nodes]
            nmax = self.node_max[nodes]
            hit = ((box_min[q] <= nmax) & (box_max[q] >= nmin)).all(axis=1)
            q, nodes = q[hit], nodes[hit]
            leaf = self.is_leaf[nodes]
            if leaf.any():
                lq, ln = q[leaf], nodes[leaf]
                counts = (self.node_end[ln] - self.node_start[ln]).astype(np.int64)
                rep_q = np.repeat(lq, counts)
                offs = np.concatenate([np.arange(c, dtype=np.int64) for c in counts])
                slot = np.repeat(self.node_start[ln], counts) + offs
                # exact per-primitive test so output equals the O(n^2) filter
                ok = (
                    (box_min[rep_q] <= self._pmax[slot])
                    & (box_max[rep_q] >= self._pmin[slot])
                ).all(axis=1)
                out_q.append(rep_q[ok])
                out_p.append(self.perm[slot[ok]])
            qi, ni = q[~leaf], nodes[~leaf]
            q = np.concatenate([qi, qi])
            nodes = np.concatenate([self.node_left[ni], self.node_right[ni]])
        if not out_q:
            return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
        qa = np.concatenate(out_q)
        pa = np.concatenate(out_p)
        order = np.lexsort((pa, qa))
        return qa[order], pa[order]
