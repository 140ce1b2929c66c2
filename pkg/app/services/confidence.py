"""
Confiança de match MVS: modelos unários (grade em arquivo ou heurística),
confiança par a par e extensão para k matching partners
(probabilidade de pelo menos dois matches bem-sucedidos).
"""
import math
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, Iterable, Mapping, Optional, Sequence

import numpy as np

from app.configs.config import ConfidenceConstants
from app.configs.logging_config import configurar_logger
from app.model.errors import InvalidClusterError, InvariantViolation
from app.model.mesh import SurfaceMesh, TrianglePatch
from app.model.scene import Camera
from app.services.geometry import inside_image, project_points, triangulation_angle, triangulation_angles

logger = configurar_logger(__name__)

BIN_COUNT = ConfidenceConstants.BIN_COUNT
BIN_WIDTH = ConfidenceConstants.BIN_WIDTH_DEG


def angle_bin(angle_deg: float) -> int:
    """clamp(floor(ângulo / 5°), 0, 8)"""
    return int(min(max(math.floor(angle_deg / BIN_WIDTH), 0), BIN_COUNT - 1))


def angle_bins(angles_deg: np.ndarray) -> np.ndarray:
    return np.clip(np.floor(np.asarray(angles_deg) / BIN_WIDTH), 0, BIN_COUNT - 1).astype(np.int64)


def bin_centers() -> np.ndarray:
    return (np.arange(BIN_COUNT) + 0.5) * BIN_WIDTH


# ==============================================================
# MODELOS
# ==============================================================


class ConfidenceModel(ABC):
    """Interface: probabilidade de match em [0, 1] por (câmera, triângulo, bin de ângulo)."""

    @abstractmethod
    def unary_vector(self, camera: Camera, triangle: TrianglePatch) -> np.ndarray:
        """Vetor com BIN_COUNT probabilidades."""

    def predict_unary(self, camera: Camera, triangle: TrianglePatch, angle_bin_index: int) -> float:
        return float(self.unary_vector(camera, triangle)[angle_bin_index])


def _projected_triangle(camera: Camera, triangle: TrianglePatch):
    """(cantos 2D, centroide 2D) ou None quando o triângulo não projeta dentro da imagem."""
    pixels, depth = project_points(camera, np.vstack([triangle.corners, triangle.centroid]))
    if np.any(depth <= 0) or not inside_image(camera, pixels[3:])[0]:
        return None
    return pixels[:3], pixels[3]


def _points_in_triangle(points: np.ndarray, tri: np.ndarray) -> np.ndarray:
    """Teste baricêntrico (bordas incluídas) para pontos (N, 2)."""
    a, b, c = tri
    v0, v1 = b - a, c - a
    v2 = points - a
    den = v0[0] * v1[1] - v1[0] * v0[1]
    if abs(den) < 1e-18:
        return np.zeros(len(points), dtype=bool)
    s = (v2[:, 0] * v1[1] - v1[0] * v2[:, 1]) / den
    t = (v0[0] * v2[:, 1] - v2[:, 0] * v0[1]) / den
    tol = 1e-12
    return (s >= -tol) & (t >= -tol) & (s + t <= 1.0 + tol)


@dataclass
class ConfidenceGrid:
    """
    Grade de confiança de uma câmera: values (bins, altura, largura) em [0, 1],
    uma célula a cada `stride` pixels.
    """

    width_cells: int
    height_cells: int
    stride: int
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        expected = (BIN_COUNT, self.height_cells, self.width_cells)
        if self.values.shape != expected:
            raise InvariantViolation(
                "confidence-grid", f"dimensões {self.values.shape} diferentes do cabeçalho {expected}"
            )
        if self.stride <= 0:
            raise InvariantViolation("confidence-grid", f"stride inválido: {self.stride}")
        if self.values.size and (np.nanmin(self.values) < 0 or np.nanmax(self.values) > 1 or np.isnan(self.values).any()):
            raise InvariantViolation("confidence-grid", "valores fora de [0, 1]")

    @classmethod
    def for_image(cls, width_px: int, height_px: int, stride: int, values: np.ndarray) -> "ConfidenceGrid":
        return cls(
            width_cells=math.ceil(width_px / stride),
            height_cells=math.ceil(height_px / stride),
            stride=stride,
            values=values,
        )

    @classmethod
    def constant(cls, width_px: int, height_px: int, value: float, stride: int = ConfidenceConstants.GRID_STRIDE) -> "ConfidenceGrid":
        w, h = math.ceil(width_px / stride), math.ceil(height_px / stride)
        return cls(width_cells=w, height_cells=h, stride=stride, values=np.full((BIN_COUNT, h, w), value))

    def cell_centers(self) -> np.ndarray:
        """(altura·largura, 2) centros das células em pixels, ordem linha a linha."""
        xs = (np.arange(self.width_cells) + 0.5) * self.stride
        ys = (np.arange(self.height_cells) + 0.5) * self.stride
        grid_x, grid_y = np.meshgrid(xs, ys)
        return np.stack([grid_x.ravel(), grid_y.ravel()], axis=1)

    def nearest_cell(self, pixel: np.ndarray) -> tuple:
        col = int(np.clip(math.floor(pixel[0] / self.stride), 0, self.width_cells - 1))
        row = int(np.clip(math.floor(pixel[1] / self.stride), 0, self.height_cells - 1))
        return row, col

    def average_inside(self, tri2d: np.ndarray, centroid2d: np.ndarray) -> np.ndarray:
        """Média por bin das células cujo centro cai no triângulo; sem nenhuma, a célula mais próxima do centroide."""
        flat = self.values.reshape(BIN_COUNT, -1)
        centers = self.cell_centers()
        lo, hi = tri2d.min(axis=0), tri2d.max(axis=0)
        near = np.flatnonzero(np.all((centers >= lo) & (centers <= hi), axis=1))
        inside = near[_points_in_triangle(centers[near], tri2d)] if len(near) else near
        if len(inside):
            return flat[:, inside].astype(np.float64).mean(axis=1)
        row, col = self.nearest_cell(centroid2d)
        return self.values[:, row, col].astype(np.float64)


class FileBackedModel(ConfidenceModel):
    """Confiança lida de grades pré-computadas, uma por câmera."""

    def __init__(self, grids: Mapping[int, ConfidenceGrid]):
        self.grids: Dict[int, ConfidenceGrid] = dict(grids)

    def unary_vector(self, camera: Camera, triangle: TrianglePatch) -> np.ndarray:
        grid = self.grids.get(camera.id)
        if grid is None:
            return np.zeros(BIN_COUNT)
        projected = _projected_triangle(camera, triangle)
        if projected is None:
            return np.zeros(BIN_COUNT)
        tri2d, centroid2d = projected
        return np.clip(grid.average_inside(tri2d, centroid2d), 0.0, 1.0)


def hat_response(angle_deg) -> np.ndarray:
    """0 em 0°, sobe até 1 em 10°, platô até 25°, desce até 0 em 45°."""
    a = np.asarray(angle_deg, dtype=np.float64)
    rise = ConfidenceConstants.HAT_RISE_END_DEG
    plateau = ConfidenceConstants.HAT_PLATEAU_END_DEG
    zero = ConfidenceConstants.HAT_ZERO_DEG
    return np.interp(a, [0.0, rise, plateau, zero], [0.0, 1.0, 1.0, 0.0], left=0.0, right=0.0)


class HeuristicModel(ConfidenceModel):
    """
    Resposta em chapéu sobre o ângulo de triangulação (avaliada no centro de cada bin),
    opcionalmente multiplicada por um ganho de textura vindo do gradiente da imagem.
    """

    def __init__(self, gradients: Optional[Mapping[int, np.ndarray]] = None):
        self.gradients: Dict[int, np.ndarray] = dict(gradients or {})
        self.response = hat_response(bin_centers())

    @staticmethod
    def gradient_magnitude(image: np.ndarray) -> np.ndarray:
        gy, gx = np.gradient(np.asarray(image, dtype=np.float64))
        return np.hypot(gx, gy)

    @classmethod
    def from_images(cls, images: Mapping[int, np.ndarray]) -> "HeuristicModel":
        return cls({cam: cls.gradient_magnitude(img) for cam, img in images.items()})

    def texture_gain(self, camera: Camera, tri2d: np.ndarray) -> float:
        gradient = self.gradients.get(camera.id)
        if gradient is None:
            return 1.0
        h, w = gradient.shape
        lo = np.clip(np.floor(tri2d.min(axis=0)).astype(int), 0, [w - 1, h - 1])
        hi = np.clip(np.ceil(tri2d.max(axis=0)).astype(int), 0, [w - 1, h - 1])
        window = gradient[lo[1]:hi[1] + 1, lo[0]:hi[0] + 1]
        if not window.size:
            return 0.0
        return float(min(window.mean() / ConfidenceConstants.GRADIENT_SATURATION, 1.0))

    def unary_vector(self, camera: Camera, triangle: TrianglePatch) -> np.ndarray:
        projected = _projected_triangle(camera, triangle)
        if projected is None:
            return np.zeros(BIN_COUNT)
        gain = self.texture_gain(camera, projected[0])
        return np.clip(self.response * gain, 0.0, 1.0)


# ==============================================================
# OPERAÇÕES
# ==============================================================


def unary_confidence(model: ConfidenceModel, camera: Camera, triangle: TrianglePatch) -> np.ndarray:
    """Vetor de 9 bins; zeros quando a câmera não vê o triângulo."""
    if camera.id not in triangle.visible_cameras:
        return np.zeros(BIN_COUNT)
    return np.clip(np.asarray(model.unary_vector(camera, triangle), dtype=np.float64), 0.0, 1.0)


def _unary(model: Optional[ConfidenceModel], camera: Camera, triangle: TrianglePatch) -> np.ndarray:
    cached = triangle.unary_confidence.get(camera.id)
    if cached is not None:
        return cached
    if model is None:
        return np.zeros(BIN_COUNT)
    return unary_confidence(model, camera, triangle)


def pairwise_confidence(
    model: Optional[ConfidenceModel], c_key: Camera, partner: Camera, triangle: TrianglePatch
) -> float:
    """Média dos valores unários das duas câmeras no bin do ângulo de triangulação."""
    if c_key.id not in triangle.visible_cameras or partner.id not in triangle.visible_cameras:
        return 0.0
    b = angle_bin(triangulation_angle(c_key, partner, triangle.centroid))
    return 0.5 * (float(_unary(model, c_key, triangle)[b]) + float(_unary(model, partner, triangle)[b]))


def pairwise_confidence_batch(
    c_key: Camera, partner: Camera, patches: Sequence[TrianglePatch]
) -> np.ndarray:
    """Versão vetorizada sobre triângulos com cache de unários já populado."""
    if not patches:
        return np.zeros(0)
    centroids = np.array([p.centroid for p in patches])
    bins = angle_bins(triangulation_angles(c_key.center, partner.center, centroids))
    zeros = np.zeros(BIN_COUNT)
    key_u = np.array([p.unary_confidence.get(c_key.id, zeros) for p in patches])
    partner_u = np.array([p.unary_confidence.get(partner.id, zeros) for p in patches])
    rows = np.arange(len(patches))
    values = 0.5 * (key_u[rows, bins] + partner_u[rows, bins])
    visible = np.array([c_key.id in p.visible_cameras and partner.id in p.visible_cameras for p in patches])
    return np.where(visible, values, 0.0)


def _check_probabilities(pairwise) -> np.ndarray:
    p = np.asarray(pairwise, dtype=np.float64)
    if p.shape[-1] < 2:
        raise InvalidClusterError(f"são necessários pelo menos 2 matching partners, recebeu {p.shape[-1]}")
    if np.any((p < 0) | (p > 1)) or np.isnan(p).any():
        raise ValueError("probabilidades par a par precisam estar em [0, 1]")
    return p


def k_partner_confidence_batch(pairwise: np.ndarray) -> np.ndarray:
    """
    P(pelo menos 2 sucessos independentes) por linha de uma matriz (N, k):
    1 − Π(1 − p) − Σⱼ pⱼ Π_{m≠j}(1 − p_m), com produtos de prefixo e sufixo.
    """
    p = _check_probabilities(pairwise)
    p = p.reshape(-1, p.shape[-1])
    q = 1.0 - p
    ones = np.ones((len(p), 1))
    prefix = np.cumprod(np.hstack([ones, q[:, :-1]]), axis=1)
    suffix = np.cumprod(np.hstack([ones, q[:, :0:-1]]), axis=1)[:, ::-1]
    none = prefix[:, -1] * q[:, -1]
    exactly_one = np.sum(p * prefix * suffix, axis=1)
    return np.clip(1.0 - none - exactly_one, 0.0, 1.0)


def k_partner_confidence(pairwise: Sequence[float]) -> float:
    return float(k_partner_confidence_batch(np.asarray(pairwise, dtype=np.float64)[None, :])[0])


def k_partner_confidence_alternating(pairwise: Sequence[float]) -> float:
    """Σ_{i=2..k} (−1)^i (i−1) e_i(p), com e_i os polinômios simétricos elementares."""
    p = _check_probabilities(pairwise)
    k = len(p)
    elementary = np.zeros(k + 1)
    elementary[0] = 1.0
    for value in p:
        elementary[1:] = elementary[1:] + value * elementary[:-1]
    total = 0.0
    for i in range(2, k + 1):
        total += (-1) ** i * (i - 1) * elementary[i]
    return float(total)


def tree_oracle(pairwise: Sequence[float]) -> float:
    """
    Árvore binária de eventos de match: cada ramo para de crescer após 2 sucessos;
    soma a probabilidade de todos os ramos bem-sucedidos. Exponencial em k.
    """
    p = _check_probabilities(pairwise)

    def grow(index: int, successes: int, probability: float) -> float:
        if successes == 2:
            return probability
        if index == len(p) or probability == 0.0:
            return 0.0
        return grow(index + 1, successes + 1, probability * p[index]) + grow(
            index + 1, successes, probability * (1.0 - p[index])
        )

    return grow(0, 0, 1.0)


def cache_unaries(
    model: ConfidenceModel,
    mesh: SurfaceMesh,
    cameras: Iterable[Camera],
    visibility,
    workers: int = 1,
) -> int:
    """Popula TrianglePatch.unary_confidence para todo par (câmera visível, triângulo)."""
    cameras = list(cameras)
    patches = mesh.patches

    def predict(camera: Camera) -> Dict[int, np.ndarray]:
        return {
            tri: unary_confidence(model, camera, patches[tri])
            for tri in sorted(visibility.triangles_of(camera.id))
        }

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            results = list(executor.map(predict, cameras))
    else:
        results = [predict(camera) for camera in cameras]

    cached = 0
    for camera, unaries in zip(cameras, results):
        for tri, vector in unaries.items():
            patches[tri].unary_confidence[camera.id] = vector
            cached += 1
    logger.info("[confidence] ✅ %d vetores unários em cache (%s)", cached, type(model).__name__)
    return cached
