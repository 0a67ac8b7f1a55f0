"""
Median-split bounding volume hierarchy over mesh triangles with batched
closest-point queries.
"""
import numpy as np
from scipy.spatial import cKDTree

from .geometry import closest_point_on_triangles

LEAF_SIZE = 8


class TriangleBVH:
    def __init__(self, corners, leaf_size=LEAF_SIZE):
        self.corners = np.asarray(corners, dtype=np.float64)
        self.leaf_size = leaf_size
        self._build()
        self._centroid_tree = cKDTree(self.corners.mean(axis=1))

    def _build(self):
        lows = self.corners.min(axis=1)
        highs = self.corners.max(axis=1)
        centroids = self.corners.mean(axis=1)
        order = np.arange(len(self.corners))
        node_lo, node_hi, children, spans = [], [], [], []

        def new_node(start, stop):
            members = order[start:stop]
            node_lo.append(lows[members].min(axis=0))
            node_hi.append(highs[members].max(axis=0))
            children.append([-1, -1])
            spans.append((start, stop))
            return len(spans) - 1

        stack = [new_node(0, len(order))]
        while stack:
            node = stack.pop()
            start, stop = spans[node]
            if stop - start <= self.leaf_size:
                continue
            members = order[start:stop]
            spread = centroids[members].max(axis=0) - centroids[members].min(axis=0)
            axis = int(np.argmax(spread))
            # Stable sort keeps the build deterministic for equal centroids
            order[start:stop] = members[np.argsort(centroids[members, axis], kind='stable')]
            middle = (start + stop) // 2
            left = new_node(start, middle)
            right = new_node(middle, stop)
            children[node] = [left, right]
            stack += [right, left]

        self.order = order
        self.node_lo = np.array(node_lo)
        self.node_hi = np.array(node_hi)
        self.children = np.array(children, dtype=np.int64)
        self.spans = np.array(spans, dtype=np.int64)

    def closest(self, points):
        """Closest triangle, point and feature for every query point.

        Returns (squared distance, triangle index, closest point, feature).
        """
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        corners = self.corners

        # Seed the bound with the triangle whose centroid is nearest
        _, seed = self._centroid_tree.query(points)
        best_point, best_feature = closest_point_on_triangles(
            points, corners[seed, 0], corners[seed, 1], corners[seed, 2],
        )
        best_d2 = np.einsum('ij,ij->i', best_point - points, best_point - points)
        best_tri = seed.astype(np.int64)

        stack = [(0, np.arange(len(points)))]
        while stack:
            node, idx = stack.pop()
            excess = np.maximum(self.node_lo[node] - points[idx], 0.0) + np.maximum(points[idx] - self.node_hi[node], 0.0)
            bound = np.einsum('ij,ij->i', excess, excess)
            idx = idx[bound < best_d2[idx]]
            if len(idx) == 0:
                continue
            left, right = self.children[node]
            if left >= 0:
                stack.append((right, idx))
                stack.append((left, idx))
                continue
            start, stop = self.spans[node]
            for triangle in self.order[start:stop]:
                point, feature = closest_point_on_triangles(
                    points[idx], corners[triangle, 0], corners[triangle, 1], corners[triangle, 2],
                )
                d2 = np.einsum('ij,ij->i', point - points[idx], point - points[idx])
                better = d2 < best_d2[idx]
                if not better.any():
                    continue
                update = idx[better]
                best_d2[update] = d2[better]
                best_tri[update] = triangle
                best_point[update] = point[better]
                best_feature[update] = feature[better]
        return best_d2, best_tri, best_point, best_feature
