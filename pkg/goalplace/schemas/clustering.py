from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import sparse

from goalplace.schemas.arrays import FloatArray, IntArray


class TrieNode(BaseModel):
    segment: str = ""
    path: str = ""
    count: int = 0
    cell_id: Optional[int] = None
    children: dict[str, "TrieNode"] = {}

    def cells(self) -> list[int]:
        """Every cell id in this subtree."""
        found, stack = [], [self]
        while stack:
            node = stack.pop()
            if node.cell_id is not None:
                found.append(node.cell_id)
            stack.extend(node.children.values())
        return sorted(found)

    def walk(self):
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(node.children.values())


class WeightedGraph(BaseModel):
    """Undirected graph over ``vertices`` (cell ids); ``adjacency`` is symmetric CSR."""

    vertices: IntArray
    adjacency: sparse.csr_matrix

    model_config = ConfigDict(arbitrary_types_allowed=True)

    @property
    def n(self) -> int:
        return int(self.vertices.size)


class Partition(BaseModel):
    membership: IntArray
    quality_history: list[float] = []

    model_config = ConfigDict(arbitrary_types_allowed=True)

    @property
    def n_communities(self) -> int:
        return int(self.membership.max()) + 1 if self.membership.size else 0


class ClusterStat(BaseModel):
    cluster: int
    size: int
    mean_density: float
    density_std: Optional[float] = None
    mean_slack: Optional[float] = None


class Clustering(BaseModel):
    assignment: IntArray
    n_clusters: int = Field(ge=0)
    stats: list[ClusterStat] = []
    dbi: Optional[float] = None
    rho_DT: Optional[float] = None
    rho_DT_timcrit: Optional[float] = None
    sigma_cluster_density: Optional[float] = None
    flags: list[str] = []
    quality_history: list[list[float]] = []

    model_config = ConfigDict(arbitrary_types_allowed=True)

    def cluster_means(self, values: np.ndarray) -> np.ndarray:
        counts = np.bincount(self.assignment, minlength=self.n_clusters)
        sums = np.bincount(self.assignment, weights=values, minlength=self.n_clusters)
        return sums / np.maximum(counts, 1)


class ClusterReport(BaseModel):
    cells: int
    clusters: int
    rho_DT: Optional[float]
    rho_DT_timcrit: Optional[float]
    sigma_cluster_density: Optional[float]
    dbi: Optional[float]
    flags: list[str] = []
