"""
Geometria de câmera compartilhada por todos os serviços:
projeção pinhole, resolução estimada, incerteza de triangulação e ângulo de triangulação.
"""
import math
from typing import Iterable, Optional, Tuple

import numpy as np

from app.configs.config import RankingConstants
from app.model.mesh import TrianglePatch
from app.model.scene import Camera

MAX_CONDITION_NUMBER = RankingConstants.MAX_CONDITION_NUMBER


# ==============================================================
# PROJEÇÃO
# ==============================================================


def to_camera_frame(camera: Camera, points: np.ndarray) -> np.ndarray:
    """Pontos (N, 3) do mundo para o referencial da câmera: R (X - C)."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    return (points - camera.center) @ camera.rotation.T


def project(camera: Camera, point) -> Optional[np.ndarray]:
    """
    x = K [R | -RC] X. Retorna None quando o ponto está atrás da câmera (profundidade <= 0).
    """
    local = to_camera_frame(camera, point)[0]
    depth = local[2]
    if depth <= 0:
        return None
    return np.array([
        camera.fx * local[0] / depth + camera.cx,
        camera.fy * local[1] / depth + camera.cy,
    ])


def project_points(camera: Camera, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Versão vetorizada: retorna (pixels (N, 2), profundidade (N,)).
    Pixels de pontos atrás da câmera são NaN.
    """
    local = to_camera_frame(camera, points)
    depth = local[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = camera.fx * local[:, 0] / depth + camera.cx
        v = camera.fy * local[:, 1] / depth + camera.cy
    pixels = np.stack([u, v], axis=1)
    pixels[depth <= 0] = np.nan
    return pixels, depth


def inside_image(camera: Camera, pixels: np.ndarray) -> np.ndarray:
    pixels = np.atleast_2d(pixels)
    with np.errstate(invalid="ignore"):
        return (
            (pixels[:, 0] >= 0) & (pixels[:, 0] < camera.width)
            & (pixels[:, 1] >= 0) & (pixels[:, 1] < camera.height)
        )


# ==============================================================
# RESOLUÇÃO
# ==============================================================


def _projected_area(camera: Camera, corners: np.ndarray) -> float:
    pixels, depth = project_points(camera, corners)
    if np.any(depth <= 0):
        return 0.0
    a, b, c = pixels
    return 0.5 * abs((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))


def estimate_resolution(camera: Camera, triangle: TrianglePatch) -> float:
    """Área 2D projetada (px²) dividida pela área 3D (m²); 0 se algum vértice está atrás."""
    if triangle.area3d <= 0:
        return 0.0
    return _projected_area(camera, triangle.corners) / triangle.area3d


def estimate_resolution_batch(camera: Camera, corners: np.ndarray, areas: np.ndarray) -> np.ndarray:
    """corners (M, 3, 3), areas (M,) -> resolução (M,) em px/m²."""
    corners = np.asarray(corners, dtype=np.float64)
    m = len(corners)
    if m == 0:
        return np.zeros(0)
    pixels, depth = project_points(camera, corners.reshape(-1, 3))
    pixels = pixels.reshape(m, 3, 2)
    depth = depth.reshape(m, 3)
    ab = pixels[:, 1] - pixels[:, 0]
    ac = pixels[:, 2] - pixels[:, 0]
    area2d = 0.5 * np.abs(ab[:, 0] * ac[:, 1] - ab[:, 1] * ac[:, 0])
    resolution = np.where(areas > 0, area2d / np.where(areas > 0, areas, 1.0), 0.0)
    resolution[np.any(depth <= 0, axis=1)] = 0.0
    return np.nan_to_num(resolution, nan=0.0)


# ==============================================================
# INCERTEZA DE TRIANGULAÇÃO
# ==============================================================


def projection_jacobian(camera: Camera, point) -> Optional[np.ndarray]:
    """Jacobiana 2x3 da projeção em relação ao ponto 3D; None atrás da câmera."""
    local = to_camera_frame(camera, point)[0]
    x, y, z = local
    if z <= 0:
        return None
    d_local = np.array([
        [camera.fx / z, 0.0, -camera.fx * x / (z * z)],
        [0.0, camera.fy / z, -camera.fy * y / (z * z)],
    ])
    return d_local @ camera.rotation


def information_matrix(camera: Camera, point, pixel_noise: float) -> Optional[np.ndarray]:
    """Contribuição JᵀJ / σ² de uma câmera; None se o ponto está atrás dela."""
    jacobian = projection_jacobian(camera, point)
    if jacobian is None:
        return None
    return jacobian.T @ jacobian / (pixel_noise ** 2)


def information_matrices(camera: Camera, points: np.ndarray, pixel_noise: float) -> np.ndarray:
    """(N, 3, 3) com JᵀJ/σ² por ponto; matrizes nulas para pontos atrás da câmera."""
    local = to_camera_frame(camera, points)
    x, y, z = local[:, 0], local[:, 1], local[:, 2]
    valid = z > 0
    z_safe = np.where(valid, z, 1.0)
    n = len(local)
    d_local = np.zeros((n, 2, 3))
    d_local[:, 0, 0] = camera.fx / z_safe
    d_local[:, 0, 2] = -camera.fx * x / (z_safe * z_safe)
    d_local[:, 1, 1] = camera.fy / z_safe
    d_local[:, 1, 2] = -camera.fy * y / (z_safe * z_safe)
    jacobians = d_local @ camera.rotation
    info = np.einsum("nij,nik->njk", jacobians, jacobians) / (pixel_noise ** 2)
    info[~valid] = 0.0
    return info


def max_covariance_eigenvalue(info: np.ndarray) -> np.ndarray:
    """
    u = λ_max((Σ JᵀJ/σ²)⁻¹) para uma pilha (N, 3, 3) de matrizes de informação.
    Geometria singular (condição > 1e12) devolve +inf.
    """
    info = np.asarray(info, dtype=np.float64).reshape(-1, 3, 3)
    if len(info) == 0:
        return np.zeros(0)
    eigenvalues = np.linalg.eigvalsh(info)
    smallest = eigenvalues[:, 0]
    largest = eigenvalues[:, -1]
    singular = (smallest <= 0) | (largest <= 0) | (largest > MAX_CONDITION_NUMBER * np.maximum(smallest, 0.0))
    with np.errstate(divide="ignore"):
        u = np.where(singular, np.inf, 1.0 / np.where(singular, 1.0, smallest))
    return u


def triangulation_uncertainty(cameras: Iterable[Camera], point, pixel_noise: float) -> float:
    """
    Maior autovalor da covariância 3D por propagação de primeira ordem.
    Câmeras com o ponto atrás são ignoradas; menos de duas câmeras válidas -> +inf.
    """
    total = np.zeros((3, 3))
    used = 0
    for camera in cameras:
        info = information_matrix(camera, point, pixel_noise)
        if info is None:
            continue
        total += info
        used += 1
    if used < 2:
        return math.inf
    return float(max_covariance_eigenvalue(total[None])[0])


# ==============================================================
# ÂNGULO DE TRIANGULAÇÃO
# ==============================================================


def triangulation_angle(cam_a: Camera, cam_b: Camera, point) -> float:
    """Ângulo (graus) no ponto entre os raios para os dois centros; 0 para centros coincidentes."""
    point = np.asarray(point, dtype=np.float64)
    if np.allclose(cam_a.center, cam_b.center, rtol=0.0, atol=1e-15):
        return 0.0
    ray_a = cam_a.center - point
    ray_b = cam_b.center - point
    norm_a = np.linalg.norm(ray_a)
    norm_b = np.linalg.norm(ray_b)
    if norm_a == 0 or norm_b == 0:
        return 0.0
    cosine = float(np.clip(ray_a @ ray_b / (norm_a * norm_b), -1.0, 1.0))
    return math.degrees(math.acos(cosine))


def triangulation_angles(center_a: np.ndarray, center_b: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Versão vetorizada sobre pontos (N, 3)."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if np.allclose(center_a, center_b, rtol=0.0, atol=1e-15):
        return np.zeros(len(points))
    ray_a = center_a - points
    ray_b = center_b - points
    norms = np.linalg.norm(ray_a, axis=1) * np.linalg.norm(ray_b, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        cosine = np.einsum("ij,ij->i", ray_a, ray_b) / norms
    cosine = np.where(norms > 0, np.clip(cosine, -1.0, 1.0), 1.0)
    return np.degrees(np.arccos(cosine))


# ==============================================================
# POSES
# ==============================================================


def look_at_rotation(eye, target, up=(0.0, 0.0, 1.0)) -> np.ndarray:
    """
    Rotação mundo→câmera com o eixo z da câmera apontando para o alvo
    (convenção OpenCV: x para a direita, y para baixo na imagem).
    """
    eye = np.asarray(eye, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - eye
    forward /= np.linalg.norm(forward)
    up = np.asarray(up, dtype=np.float64)
    if abs(forward @ up) > 1.0 - 1e-9:
        up = np.array([0.0, 1.0, 0.0])
    right = np.cross(forward, up)
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    return np.stack([right, down, forward])
