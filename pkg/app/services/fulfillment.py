"""
Fulfillment de qualidade por triângulo e por view cluster:
resolução, incerteza 3D, cobertura e confiança de match, combinados em f(t, v);
score do cluster, objetivo global e ganho.
"""
import math
import threading
from dataclasses import dataclass
from typing import Dict, Iterable, Mapping, Optional, Sequence, Tuple

import numpy as np

from app.configs.logging_config import configurar_logger
from app.model.errors import InvalidClusterError
from app.model.mesh import SurfaceMesh, TrianglePatch
from app.model.quality import QualityConfig
from app.model.ranking import FulfillmentBreakdown, ViewCluster
from app.model.scene import Camera
from app.services.confidence import (
    BIN_COUNT,
    ConfidenceModel,
    angle_bins,
    k_partner_confidence,
    k_partner_confidence_batch,
    pairwise_confidence,
)
from app.services.geometry import (
    estimate_resolution,
    estimate_resolution_batch,
    information_matrices,
    max_covariance_eigenvalue,
    triangulation_angles,
    triangulation_uncertainty,
)

logger = configurar_logger(__name__)


# ==============================================================
# FUNÇÕES ESCALARES (um triângulo)
# ==============================================================


def f_res(triangle: TrianglePatch, c_key: Camera, g_d: float) -> float:
    if c_key.id not in triangle.visible_cameras:
        return 0.0
    return min(estimate_resolution(c_key, triangle) * g_d * g_d, 1.0)


def f_unc(triangle: TrianglePatch, cameras: Iterable[Camera], a_d: float, pixel_noise: float) -> float:
    seeing = [c for c in cameras if c.id in triangle.visible_cameras]
    u = triangulation_uncertainty(seeing, triangle.centroid, pixel_noise)
    if not math.isfinite(u) or u <= 0:
        return 0.0
    return min(a_d / math.sqrt(u), 1.0)


def f_cov(triangle: TrianglePatch, cluster: ViewCluster, x: int) -> float:
    """1 sse a key view vê o triângulo e pelo menos x câmeras do cluster o veem."""
    if cluster.key_view not in triangle.visible_cameras:
        return 0.0
    seeing = sum(1 for cam in cluster.cameras if cam in triangle.visible_cameras)
    return 1.0 if seeing >= x else 0.0


def f_conf(
    triangle: TrianglePatch,
    cluster: ViewCluster,
    cameras: Mapping[int, Camera],
    model: Optional[ConfidenceModel] = None,
) -> float:
    c_key = cameras[cluster.key_view]
    pairwise = [pairwise_confidence(model, c_key, cameras[p], triangle) for p in cluster.partners]
    return k_partner_confidence(pairwise)


def triangle_fulfillment(
    triangle: TrianglePatch,
    cluster: ViewCluster,
    cameras: Mapping[int, Camera],
    quality: QualityConfig,
    model: Optional[ConfidenceModel] = None,
) -> FulfillmentBreakdown:
    if cluster.k < 2:
        raise InvalidClusterError(f"[cluster:{cluster.id}] k = {cluster.k} < 2")
    c_key = cameras[cluster.key_view]
    members = [cameras[c] for c in cluster.cameras]
    return FulfillmentBreakdown(
        f_res=f_res(triangle, c_key, quality.gsd_desired),
        f_unc=f_unc(triangle, members, quality.accuracy_desired, quality.pixel_noise),
        f_cov=f_cov(triangle, cluster, quality.min_cameras),
        f_conf=f_conf(triangle, cluster, cameras, model) if quality.use_confidence else 1.0,
        alpha=quality.alpha,
    )


def cluster_score(
    c_key: int,
    partners: Sequence[int],
    sampled_triangles: Iterable[TrianglePatch],
    cameras: Mapping[int, Camera],
    quality: QualityConfig,
    model: Optional[ConfidenceModel] = None,
) -> float:
    """Σ_t f(t, c_key, partners) sobre os triângulos amostrados."""
    cluster = ViewCluster(id=c_key, key_view=c_key, partners=tuple(partners))
    return float(sum(
        triangle_fulfillment(t, cluster, cameras, quality, model).f_total for t in sampled_triangles
    ))


# ==============================================================
# AVALIAÇÃO VETORIZADA
# ==============================================================


@dataclass
class CameraCache:
    """Termos por câmera para os triângulos que ela vê (ids ordenados)."""

    triangles: np.ndarray
    resolution: np.ndarray
    information: np.ndarray
    unary: np.ndarray

    def lookup(self, tids: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """(máscara de visibilidade, posição no cache) para cada triângulo pedido."""
        if not len(self.triangles):
            return np.zeros(len(tids), dtype=bool), np.zeros(len(tids), dtype=np.int64)
        pos = np.searchsorted(self.triangles, tids)
        pos = np.minimum(pos, len(self.triangles) - 1)
        return self.triangles[pos] == tids, pos


def _gather(values: np.ndarray, mask: np.ndarray, pos: np.ndarray) -> np.ndarray:
    """values[pos] onde mask é verdadeiro, zeros no resto."""
    out = np.zeros((len(mask),) + values.shape[1:])
    if len(values) and mask.any():
        out[mask] = values[pos[mask]]
    return out


@dataclass
class ClusterTerms:
    """Termos de f(t, v) para os triângulos `triangles` de um cluster."""

    triangles: np.ndarray
    geometric: np.ndarray
    pairwise: np.ndarray
    confidence: np.ndarray

    @property
    def values(self) -> np.ndarray:
        return self.geometric * self.confidence


@dataclass
class ClusterFulfillment:
    """f(t, v) > 0 de um cluster: ids de triângulo ordenados e valores."""

    cluster_id: int
    triangles: np.ndarray
    values: np.ndarray


class FulfillmentEvaluator:
    """
    Avaliação vetorizada de f(t, v) sobre muitos triângulos.
    Requer visibilidade e cache de unários já populados nos patches da malha.
    """

    def __init__(self, mesh: SurfaceMesh, cameras: Mapping[int, Camera], quality: QualityConfig):
        self.mesh = mesh
        self.cameras = dict(cameras)
        self.quality = quality
        self.patches = mesh.patches
        self.corners = mesh.triangle_corners()
        self.areas = mesh.triangle_areas()
        self.centroids = mesh.centroids()
        self._caches: Dict[int, CameraCache] = {}
        self._lock = threading.Lock()

    def camera_cache(self, camera_id: int) -> CameraCache:
        cache = self._caches.get(camera_id)
        if cache is not None:
            return cache
        with self._lock:
            cache = self._caches.get(camera_id)
            if cache is None:
                cache = self._build_cache(camera_id)
                self._caches[camera_id] = cache
        return cache

    def _build_cache(self, camera_id: int) -> CameraCache:
        camera = self.cameras[camera_id]
        tids = np.array(
            sorted(i for i, p in enumerate(self.patches) if camera_id in p.visible_cameras),
            dtype=np.int64,
        )
        zeros = np.zeros(BIN_COUNT)
        unary = np.array([self.patches[t].unary_confidence.get(camera_id, zeros) for t in tids]).reshape(-1, BIN_COUNT)
        return CameraCache(
            triangles=tids,
            resolution=estimate_resolution_batch(camera, self.corners[tids], self.areas[tids]),
            information=information_matrices(camera, self.centroids[tids], self.quality.pixel_noise),
            unary=unary,
        )

    def visible_triangles(self, camera_id: int) -> np.ndarray:
        return self.camera_cache(camera_id).triangles

    def cluster_terms(self, key_view: int, partners: Sequence[int], tids: Optional[np.ndarray] = None) -> ClusterTerms:
        """
        Termos para os triângulos `tids` (padrão: os vistos pela key view).
        Triângulos não vistos pela key view recebem fulfillment 0.
        """
        if len(partners) < 2:
            raise InvalidClusterError(f"[key:{key_view}] k = {len(partners)} < 2")
        q = self.quality
        key = self.camera_cache(key_view)
        tids = key.triangles if tids is None else np.asarray(tids, dtype=np.int64)
        n = len(tids)

        key_mask, key_pos = key.lookup(tids)
        resolution = _gather(key.resolution, key_mask, key_pos)
        f_res_values = np.minimum(resolution * q.gsd_desired ** 2, 1.0)

        info = _gather(key.information, key_mask, key_pos)
        seeing = key_mask.astype(np.int64)
        key_unary = _gather(key.unary, key_mask, key_pos)
        key_center = self.cameras[key_view].center
        pairwise = np.zeros((n, len(partners)))
        rows = np.arange(n)
        for j, partner in enumerate(partners):
            cache = self.camera_cache(partner)
            mask, pos = cache.lookup(tids)
            info = info + _gather(cache.information, mask, pos)
            seeing += mask
            bins = angle_bins(triangulation_angles(key_center, self.cameras[partner].center, self.centroids[tids]))
            partner_unary = _gather(cache.unary, mask, pos)
            values = 0.5 * (key_unary[rows, bins] + partner_unary[rows, bins])
            pairwise[:, j] = np.where(mask & key_mask, values, 0.0)

        u = max_covariance_eigenvalue(info) if n else np.zeros(0)
        u = np.where(seeing >= 2, u, np.inf)
        finite = np.isfinite(u) & (u > 0)
        f_unc_values = np.zeros(n)
        f_unc_values[finite] = np.minimum(q.accuracy_desired / np.sqrt(u[finite]), 1.0)
        f_cov_values = (key_mask & (seeing >= q.min_cameras)).astype(np.float64)

        geometric = (q.alpha * f_res_values + (1.0 - q.alpha) * f_unc_values) * f_cov_values
        if q.use_confidence:
            confidence = k_partner_confidence_batch(pairwise) if n else np.zeros(0)
        else:
            confidence = np.ones(n)
        return ClusterTerms(triangles=tids, geometric=geometric, pairwise=pairwise, confidence=confidence)

    def score(self, key_view: int, partners: Sequence[int], tids: np.ndarray) -> float:
        if not len(tids):
            return 0.0
        return float(self.cluster_terms(key_view, partners, tids).values.sum())

    def cluster_fulfillment(self, cluster: ViewCluster, eligible: Optional[np.ndarray] = None) -> ClusterFulfillment:
        """f(t, v) > 0 para os triângulos vistos pela key view (e elegíveis, se houver filtro)."""
        tids = self.visible_triangles(cluster.key_view)
        if eligible is not None:
            tids = tids[eligible[tids]]
        terms = self.cluster_terms(cluster.key_view, cluster.partners, tids)
        values = terms.values
        keep = values > 0
        return ClusterFulfillment(cluster_id=cluster.id, triangles=tids[keep], values=values[keep])


# ==============================================================
# OBJETIVO E GANHO
# ==============================================================


def objective(
    selected: Iterable[int],
    fulfillments: Mapping[int, ClusterFulfillment],
    triangle_count: int,
    size: Optional[int] = None,
) -> float:
    """
    (1/|T|) Σ_t max_{v selecionado} f(t, v); seleção vazia -> 0.
    `size` é o tamanho do array de triângulos (padrão: maior id usado + 1).
    """
    selected = list(selected)
    if not selected or triangle_count <= 0:
        return 0.0
    if size is None:
        size = max((int(fulfillments[c].triangles.max()) + 1 for c in selected if len(fulfillments[c].triangles)), default=0)
    best = np.zeros(size)
    for cluster_id in selected:
        entry = fulfillments[cluster_id]
        np.maximum.at(best, entry.triangles, entry.values)
    return float(best.sum() / triangle_count)


def gain(candidate: ClusterFulfillment, current: np.ndarray, triangle_count: int) -> float:
    """Σ_t max(0, f(t, v) − current(t)) / |T|"""
    if triangle_count <= 0 or not len(candidate.triangles):
        return 0.0
    delta = candidate.values - current[candidate.triangles]
    return float(np.maximum(delta, 0.0).sum() / triangle_count)


def current_from_mesh(mesh: SurfaceMesh) -> np.ndarray:
    return np.array([p.current_fulfillment for p in mesh.patches], dtype=np.float64)
