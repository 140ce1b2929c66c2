from dataclasses import dataclass, field
from typing import Dict, List, Optional, Set

import numpy as np

from app.configs.config import MeshPrepConstants

DEGENERATE_AREA = MeshPrepConstants.DEGENERATE_AREA


@dataclass
class TrianglePatch:
    """
    Cache por triângulo: geometria, visibilidade, confiança unária e fulfillment.
    """

    index: int
    corners: np.ndarray
    centroid: np.ndarray
    normal: np.ndarray
    area3d: float
    visible_cameras: Set[int] = field(default_factory=set)
    # id da câmera -> vetor de 9 probabilidades (bins de ângulo de triangulação)
    unary_confidence: Dict[int, np.ndarray] = field(default_factory=dict)
    current_fulfillment: float = 0.0
    # id do view cluster -> f(t, v)
    cluster_fulfillment: Dict[int, float] = field(default_factory=dict)


@dataclass
class SurfaceMesh:
    vertices: np.ndarray
    triangles: np.ndarray
    metadata: Dict[str, object] = field(default_factory=dict)
    _patches: Optional[List[TrianglePatch]] = field(default=None, repr=False)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if len(self.triangles) and (
            self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices)
        ):
            raise ValueError("[mesh] índice de triângulo fora do intervalo de vértices")

    # -------------------------
    # Construção
    # -------------------------

    @classmethod
    def from_arrays(cls, vertices, triangles, drop_degenerate: bool = True) -> "SurfaceMesh":
        mesh = cls(vertices=vertices, triangles=triangles)
        if drop_degenerate and len(mesh.triangles):
            keep = mesh.triangle_areas() > DEGENERATE_AREA
            if not keep.all():
                mesh = cls(vertices=mesh.vertices, triangles=mesh.triangles[keep])
        return mesh

    @classmethod
    def empty(cls) -> "SurfaceMesh":
        return cls(vertices=np.zeros((0, 3)), triangles=np.zeros((0, 3), dtype=np.int64))

    def compact(self) -> "SurfaceMesh":
        """Remove vértices não referenciados, preservando a ordem dos restantes."""
        used = np.unique(self.triangles.ravel())
        remap = -np.ones(len(self.vertices), dtype=np.int64)
        remap[used] = np.arange(len(used))
        return SurfaceMesh(
            vertices=self.vertices[used],
            triangles=remap[self.triangles],
            metadata=dict(self.metadata),
        )

    # -------------------------
    # Geometria
    # -------------------------

    def __len__(self) -> int:
        return len(self.triangles)

    @property
    def triangle_count(self) -> int:
        return len(self.triangles)

    def triangle_corners(self) -> np.ndarray:
        """(M, 3, 3): vértices de cada triângulo."""
        return self.vertices[self.triangles]

    def triangle_normals_raw(self) -> np.ndarray:
        corners = self.triangle_corners()
        return np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])

    def triangle_areas(self) -> np.ndarray:
        return 0.5 * np.linalg.norm(self.triangle_normals_raw(), axis=1)

    def triangle_normals(self) -> np.ndarray:
        raw = self.triangle_normals_raw()
        norms = np.linalg.norm(raw, axis=1, keepdims=True)
        return raw / np.where(norms > 0, norms, 1.0)

    def centroids(self) -> np.ndarray:
        return self.triangle_corners().mean(axis=1)

    def edges(self) -> np.ndarray:
        """Arestas únicas (E, 2) com índices ordenados."""
        if not len(self.triangles):
            return np.zeros((0, 2), dtype=np.int64)
        tri = self.triangles
        pairs = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
        pairs = np.sort(pairs, axis=1)
        return np.unique(pairs, axis=0)

    def edge_lengths(self) -> np.ndarray:
        edges = self.edges()
        if not len(edges):
            return np.zeros(0)
        return np.linalg.norm(self.vertices[edges[:, 0]] - self.vertices[edges[:, 1]], axis=1)

    def surface_area(self) -> float:
        return float(self.triangle_areas().sum())

    def diameter(self) -> float:
        if not len(self.vertices):
            return 0.0
        return float(np.linalg.norm(self.vertices.max(axis=0) - self.vertices.min(axis=0)))

    # -------------------------
    # Cache por triângulo
    # -------------------------

    @property
    def patches(self) -> List[TrianglePatch]:
        if self._patches is None:
            self._patches = self._build_patches()
        return self._patches

    def _build_patches(self) -> List[TrianglePatch]:
        corners = self.triangle_corners()
        normals = self.triangle_normals()
        areas = self.triangle_areas()
        return [
            TrianglePatch(
                index=i,
                corners=corners[i],
                centroid=corners[i].mean(axis=0),
                normal=normals[i],
                area3d=float(areas[i]),
            )
            for i in range(len(self.triangles))
        ]

    def reset_fulfillment(self) -> None:
        for patch in self.patches:
            patch.current_fulfillment = 0.0
            patch.cluster_fulfillment.clear()


@dataclass
class MeshStats:
    edge_lengths: np.ndarray
    triangle_count: int
    percentile_05: float

    @classmethod
    def from_mesh(cls, mesh: SurfaceMesh, percentile: float = MeshPrepConstants.EDGE_PERCENTILE) -> "MeshStats":
        lengths = mesh.edge_lengths()
        p05 = float(np.percentile(lengths, percentile)) if len(lengths) else 0.0
        return cls(edge_lengths=lengths, triangle_count=mesh.triangle_count, percentile_05=p05)

    @property
    def max_edge(self) -> float:
        return float(self.edge_lengths.max()) if len(self.edge_lengths) else 0.0

    def fraction_above(self, threshold: float) -> float:
        if not len(self.edge_lengths):
            return 1.0
        return float(np.mean(self.edge_lengths > threshold))
