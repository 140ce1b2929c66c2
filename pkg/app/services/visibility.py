"""
Visibilidade câmera × triângulo: BVH com divisão pela mediana e lançamento de raios
em pacotes (numpy), com um caster força-bruta como oráculo.
"""
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np

from app.configs.config import VisibilityConstants
from app.configs.logging_config import configurar_logger
from app.model.mesh import SurfaceMesh
from app.model.scene import Camera
from app.services.geometry import inside_image, project_points

logger = configurar_logger(__name__)

T_MIN = 1e-12
DET_EPS = 1e-14
PACKET_SIZE = 65536
COS_MAX_VIEW_ANGLE = math.cos(math.radians(VisibilityConstants.MAX_VIEW_ANGLE_DEG))


# ==============================================================
# INTERSEÇÃO RAIO × TRIÂNGULO
# ==============================================================


def _moller_trumbore(
    origins: np.ndarray, dirs: np.ndarray, v0: np.ndarray, e1: np.ndarray, e2: np.ndarray
) -> np.ndarray:
    """Distâncias t (R, L) dos raios aos triângulos; +inf quando não há interseção."""
    d = dirs[:, None, :]
    pvec = np.cross(d, e2[None])
    det = np.einsum("rlk,lk->rl", pvec, e1)
    valid = np.abs(det) > DET_EPS
    inv_det = np.where(valid, 1.0 / np.where(valid, det, 1.0), 0.0)
    tvec = origins[:, None, :] - v0[None]
    u = np.einsum("rlk,rlk->rl", tvec, pvec) * inv_det
    qvec = np.cross(tvec, e1[None])
    v = np.einsum("rlk,rlk->rl", np.broadcast_to(d, qvec.shape), qvec) * inv_det
    t = np.einsum("rlk,lk->rl", qvec, e2) * inv_det
    hit = valid & (u >= 0.0) & (v >= 0.0) & (u + v <= 1.0) & (t > T_MIN)
    return np.where(hit, t, np.inf)


def _update_closest(
    best_t: np.ndarray, best_id: np.ndarray, rays: np.ndarray, t: np.ndarray, tri_ids: np.ndarray
) -> None:
    """Atualiza o hit mais próximo; empates em t ficam com o menor índice de triângulo."""
    if t.shape[1] == 0:
        return
    order = np.argsort(tri_ids, kind="stable")
    t = t[:, order]
    tri_ids = tri_ids[order]
    local = np.argmin(t, axis=1)
    cand_t = t[np.arange(len(rays)), local]
    cand_id = tri_ids[local]
    cur_t = best_t[rays]
    cur_id = best_id[rays]
    better = (cand_t < cur_t) | ((cand_t == cur_t) & np.isfinite(cand_t) & (cand_id < cur_id))
    best_t[rays[better]] = cand_t[better]
    best_id[rays[better]] = cand_id[better]


def _normalize_rays(origins, dirs, t_max) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    origins = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
    dirs = np.asarray(dirs, dtype=np.float64).reshape(-1, 3)
    if t_max is None:
        t_max = np.full(len(origins), np.inf)
    else:
        t_max = np.broadcast_to(np.asarray(t_max, dtype=np.float64), (len(origins),)).copy()
    return origins, dirs, t_max


def intersect_brute_force(
    corners: np.ndarray, origins, dirs, t_max=None, chunk: int = 2_000_000
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Oráculo: testa todo raio contra todo triângulo.
    Retorna (t, triângulo) do hit mais próximo com t < t_max; (-1, inf) em caso de miss.
    """
    origins, dirs, t_max = _normalize_rays(origins, dirs, t_max)
    corners = np.asarray(corners, dtype=np.float64).reshape(-1, 3, 3)
    best_t = t_max.copy()
    best_id = np.full(len(origins), -1, dtype=np.int64)
    if not len(corners) or not len(origins):
        return np.where(best_id >= 0, best_t, np.inf), best_id
    v0 = corners[:, 0]
    e1 = corners[:, 1] - v0
    e2 = corners[:, 2] - v0
    ids = np.arange(len(corners))
    step = max(1, chunk // len(corners))
    for start in range(0, len(origins), step):
        rays = np.arange(start, min(start + step, len(origins)))
        t = _moller_trumbore(origins[rays], dirs[rays], v0, e1, e2)
        _update_closest(best_t, best_id, rays, t, ids)
    return np.where(best_id >= 0, best_t, np.inf), best_id


# ==============================================================
# BVH
# ==============================================================


@dataclass
class Bvh:
    """
    Árvore de caixas alinhadas aos eixos em arrays planos.
    Nós folha têm left == -1 e cobrem order[start:start + count].
    """

    box_min: np.ndarray
    box_max: np.ndarray
    left: np.ndarray
    right: np.ndarray
    start: np.ndarray
    count: np.ndarray
    order: np.ndarray
    v0: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    leaf_size: int = VisibilityConstants.LEAF_SIZE

    @property
    def node_count(self) -> int:
        return len(self.left)

    @property
    def triangle_count(self) -> int:
        return len(self.order)

    def is_leaf(self, node: int) -> bool:
        return self.left[node] < 0

    def leaves(self) -> List[int]:
        return [int(n) for n in np.flatnonzero(self.left < 0)]

    def leaf_triangles(self, node: int) -> np.ndarray:
        return self.order[self.start[node]:self.start[node] + self.count[node]]

    def intersect(self, origins, dirs, t_max=None) -> Tuple[np.ndarray, np.ndarray]:
        """Hit mais próximo por raio (mesma semântica de intersect_brute_force)."""
        origins, dirs, t_max = _normalize_rays(origins, dirs, t_max)
        best_t = t_max.copy()
        best_id = np.full(len(origins), -1, dtype=np.int64)
        if not self.node_count or not len(origins):
            return np.where(best_id >= 0, best_t, np.inf), best_id

        with np.errstate(divide="ignore"):
            inv_dirs = 1.0 / dirs

        stack: List[Tuple[int, np.ndarray]] = [(0, np.arange(len(origins)))]
        while stack:
            node, rays = stack.pop()
            rays = self._rays_hitting_box(node, rays, origins, inv_dirs, best_t)
            if not len(rays):
                continue
            if self.left[node] < 0:
                tri_ids = self.leaf_triangles(node)
                t = _moller_trumbore(
                    origins[rays], dirs[rays], self.v0[tri_ids], self.e1[tri_ids], self.e2[tri_ids]
                )
                _update_closest(best_t, best_id, rays, t, tri_ids)
            else:
                stack.append((int(self.right[node]), rays))
                stack.append((int(self.left[node]), rays))
        return np.where(best_id >= 0, best_t, np.inf), best_id

    def _rays_hitting_box(self, node, rays, origins, inv_dirs, best_t) -> np.ndarray:
        o = origins[rays]
        inv = inv_dirs[rays]
        with np.errstate(invalid="ignore"):
            t1 = (self.box_min[node] - o) * inv
            t2 = (self.box_max[node] - o) * inv
        lo = np.minimum(t1, t2)
        hi = np.maximum(t1, t2)
        # 0 * inf (origem sobre o plano da caixa, direção paralela) vira NaN: trata como sem restrição
        lo = np.where(np.isnan(lo), -np.inf, lo)
        hi = np.where(np.isnan(hi), np.inf, hi)
        t_near = lo.max(axis=1)
        t_far = hi.min(axis=1)
        keep = (t_near <= t_far) & (t_far >= 0.0) & (t_near <= best_t[rays])
        return rays[keep]


def build_bvh(mesh: SurfaceMesh, leaf_size: int = VisibilityConstants.LEAF_SIZE) -> Bvh:
    """BVH por mediana dos centroides no eixo mais longo; folhas com no máximo leaf_size triângulos."""
    corners = mesh.triangle_corners()
    m = len(corners)
    tri_min = corners.min(axis=1) if m else np.zeros((0, 3))
    tri_max = corners.max(axis=1) if m else np.zeros((0, 3))
    centroids = corners.mean(axis=1) if m else np.zeros((0, 3))
    pad = 1e-9 * max(mesh.diameter(), 1.0)

    order = np.arange(m)
    box_min: List[np.ndarray] = []
    box_max: List[np.ndarray] = []
    left: List[int] = []
    right: List[int] = []
    start: List[int] = []
    count: List[int] = []

    def new_node(lo: int, hi: int) -> int:
        idx = order[lo:hi]
        box_min.append(tri_min[idx].min(axis=0) - pad)
        box_max.append(tri_max[idx].max(axis=0) + pad)
        left.append(-1)
        right.append(-1)
        start.append(lo)
        count.append(hi - lo)
        return len(left) - 1

    if m:
        stack = [(new_node(0, m), 0, m)]
        while stack:
            node, lo, hi = stack.pop()
            if hi - lo <= leaf_size:
                continue
            idx = order[lo:hi]
            extent = centroids[idx].max(axis=0) - centroids[idx].min(axis=0)
            axis = int(np.argmax(extent))
            mid = (hi - lo) // 2
            part = np.argpartition(centroids[idx, axis], mid, kind="introselect")
            order[lo:hi] = idx[part]
            left_child = new_node(lo, lo + mid)
            right_child = new_node(lo + mid, hi)
            left[node] = left_child
            right[node] = right_child
            count[node] = 0
            stack.append((right_child, lo + mid, hi))
            stack.append((left_child, lo, lo + mid))

    v0 = corners[:, 0] if m else np.zeros((0, 3))
    bvh = Bvh(
        box_min=np.asarray(box_min).reshape(-1, 3),
        box_max=np.asarray(box_max).reshape(-1, 3),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        start=np.asarray(start, dtype=np.int64),
        count=np.asarray(count, dtype=np.int64),
        order=order,
        v0=v0,
        e1=(corners[:, 1] - v0) if m else np.zeros((0, 3)),
        e2=(corners[:, 2] - v0) if m else np.zeros((0, 3)),
        leaf_size=leaf_size,
    )
    logger.debug("[bvh] %d triângulos, %d nós, %d folhas", m, bvh.node_count, len(bvh.leaves()))
    return bvh


# ==============================================================
# TABELA DE VISIBILIDADE
# ==============================================================


@dataclass
class VisibilityTable:
    by_triangle: List[Set[int]]
    by_camera: Dict[int, Set[int]] = field(default_factory=dict)

    @classmethod
    def from_pairs(cls, triangle_count: int, camera_ids: Iterable[int], pairs: Iterable[Tuple[int, int]]) -> "VisibilityTable":
        by_triangle: List[Set[int]] = [set() for _ in range(triangle_count)]
        by_camera: Dict[int, Set[int]] = {int(c): set() for c in camera_ids}
        for cam, tri in pairs:
            by_triangle[tri].add(cam)
            by_camera.setdefault(cam, set()).add(tri)
        return cls(by_triangle=by_triangle, by_camera=by_camera)

    def cameras_of(self, triangle: int) -> Set[int]:
        return self.by_triangle[triangle]

    def triangles_of(self, camera: int) -> Set[int]:
        return self.by_camera.get(camera, set())

    def sees(self, camera: int, triangle: int) -> bool:
        return camera in self.by_triangle[triangle]

    def view_counts(self) -> np.ndarray:
        return np.array([len(cams) for cams in self.by_triangle], dtype=np.int64)

    def is_consistent(self) -> bool:
        """Os dois índices precisam ser transpostos exatos um do outro."""
        forward = {(c, t) for t, cams in enumerate(self.by_triangle) for c in cams}
        backward = {(c, t) for c, tris in self.by_camera.items() for t in tris}
        return forward == backward


# ==============================================================
# VISIBILIDADE
# ==============================================================


def _candidate_triangles(camera: Camera, centroids: np.ndarray, normals: np.ndarray) -> np.ndarray:
    """Triângulos com centroide projetado dentro da imagem e voltados para a câmera (< 89°)."""
    pixels, depth = project_points(camera, centroids)
    in_view = (depth > 0) & inside_image(camera, pixels)
    to_camera = camera.center - centroids
    dist = np.linalg.norm(to_camera, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        cosine = np.einsum("ij,ij->i", normals, to_camera) / dist
    front = (dist > 0) & (cosine > COS_MAX_VIEW_ANGLE)
    return np.flatnonzero(in_view & front)


def compute_visibility(
    mesh: SurfaceMesh,
    bvh: Optional[Bvh],
    cameras: Sequence[Camera],
    workers: int = 1,
    use_bvh: bool = True,
) -> VisibilityTable:
    """
    Câmera c vê t sse o centroide projeta dentro da imagem com profundidade positiva,
    a normal está a menos de 89° da direção para c e nenhum outro triângulo intercepta
    o raio centro→centroide antes de (distância − ε), ε = 1e-4·diâmetro.
    Também preenche TrianglePatch.visible_cameras.
    """
    centroids = mesh.centroids()
    normals = mesh.triangle_normals()
    corners = mesh.triangle_corners()
    eps = VisibilityConstants.EPSILON_FRACTION * mesh.diameter()

    ray_cam: List[np.ndarray] = []
    ray_tri: List[np.ndarray] = []
    for camera in cameras:
        tris = _candidate_triangles(camera, centroids, normals)
        ray_cam.append(np.full(len(tris), camera.id, dtype=np.int64))
        ray_tri.append(tris)
    cam_ids = np.concatenate(ray_cam) if ray_cam else np.zeros(0, dtype=np.int64)
    tri_ids = np.concatenate(ray_tri) if ray_tri else np.zeros(0, dtype=np.int64)

    centers = {camera.id: camera.center for camera in cameras}
    origins = np.array([centers[int(c)] for c in cam_ids]).reshape(-1, 3)
    delta = centroids[tri_ids] - origins
    dist = np.linalg.norm(delta, axis=1)
    dirs = delta / np.where(dist > 0, dist, 1.0)[:, None]
    t_max = dist - eps

    if use_bvh and bvh is None:
        bvh = build_bvh(mesh)

    def cast(bounds: Tuple[int, int]) -> np.ndarray:
        lo, hi = bounds
        if use_bvh:
            _, hit = bvh.intersect(origins[lo:hi], dirs[lo:hi], t_max[lo:hi])
        else:
            _, hit = intersect_brute_force(corners, origins[lo:hi], dirs[lo:hi], t_max[lo:hi])
        return hit < 0

    packets = [(lo, min(lo + PACKET_SIZE, len(origins))) for lo in range(0, len(origins), PACKET_SIZE)]
    if workers > 1 and len(packets) > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            unoccluded = list(executor.map(cast, packets))
    else:
        unoccluded = [cast(p) for p in packets]
    clear = np.concatenate(unoccluded) if unoccluded else np.zeros(0, dtype=bool)

    table = VisibilityTable.from_pairs(
        len(mesh),
        [camera.id for camera in cameras],
        zip(cam_ids[clear].tolist(), tri_ids[clear].tolist()),
    )
    for patch, cams in zip(mesh.patches, table.by_triangle):
        patch.visible_cameras = set(cams)

    counts = table.view_counts()
    logger.info(
        "[visibility] ✅ %d câmeras × %d triângulos: %d raios, %d pares visíveis, média %.1f câmeras/triângulo",
        len(cameras), len(mesh), len(origins), int(clear.sum()), float(counts.mean()) if len(counts) else 0.0,
    )
    return table
