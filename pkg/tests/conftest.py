import numpy as np
import pytest

from app.model.mesh import SurfaceMesh
from app.model.quality import QualityConfig
from app.model.requests.scene_spec import SceneSpec
from app.model.scene import Camera, SparsePoint, SparsePointCloud
from app.services.geometry import look_at_rotation


# ---------------------------------------------------------------------------
# Construtores de cena
# ---------------------------------------------------------------------------


def camera_at(camera_id, eye, target=None, focal=500.0, size=(1000, 1000)) -> Camera:
    """Câmera pinhole em `eye` olhando para `target` (padrão: nadir)."""
    eye = np.asarray(eye, dtype=np.float64)
    target = eye - np.array([0.0, 0.0, 1.0]) if target is None else np.asarray(target, dtype=np.float64)
    return Camera.from_pose(camera_id, look_at_rotation(eye, target), eye, focal, size)


def grid_mesh(cells: int, spacing: float, z: float = 0.0, origin=(0.0, 0.0)) -> SurfaceMesh:
    """Plano z = const com cells × cells quadrados, dois triângulos cada, normais +z."""
    coords_x = origin[0] + spacing * np.arange(cells + 1)
    coords_y = origin[1] + spacing * np.arange(cells + 1)
    xs, ys = np.meshgrid(coords_x, coords_y, indexing="ij")
    vertices = np.stack([xs.ravel(), ys.ravel(), np.full(xs.size, z)], axis=1)
    i, j = np.meshgrid(np.arange(cells), np.arange(cells), indexing="ij")
    v00 = (i * (cells + 1) + j).ravel()
    v01 = v00 + 1
    v10 = v00 + (cells + 1)
    v11 = v10 + 1
    triangles = np.concatenate([
        np.stack([v00, v10, v11], axis=1),
        np.stack([v00, v11, v01], axis=1),
    ])
    return SurfaceMesh.from_arrays(vertices, triangles)


def ring_cameras(count: int, radius: float, height: float, target=(0.0, 0.0, 0.0), focal=800.0, start_id=0):
    """Câmeras num anel acima do alvo, todas apontando para ele."""
    cameras = []
    for k in range(count):
        angle = 2.0 * np.pi * k / count
        eye = np.array([radius * np.cos(angle), radius * np.sin(angle), height]) + np.asarray(target)
        cameras.append(camera_at(start_id + k, eye, target, focal=focal))
    return cameras


def full_track_cloud(cameras, points: int = 3) -> SparsePointCloud:
    """Nuvem em que todo ponto é visto por todas as câmeras."""
    ids = tuple(c.id for c in cameras)
    return SparsePointCloud(points=[SparsePoint(xyz=(0.0, 0.0, 0.0), track=ids) for _ in range(points)])


# ---------------------------------------------------------------------------
# Fixtures
# ---------------------------------------------------------------------------


@pytest.fixture
def make_camera():
    return camera_at


@pytest.fixture
def make_grid():
    return grid_mesh


@pytest.fixture
def unit_square() -> SurfaceMesh:
    """Dois triângulos cobrindo [0, 1]² em z = 0."""
    return grid_mesh(1, 1.0)


@pytest.fixture
def nadir_camera() -> Camera:
    return camera_at(0, (0.5, 0.5, 10.0))


@pytest.fixture
def plane_rig():
    """Plano 2 m × 2 m (8 × 8 células) observado por 6 câmeras num anel."""
    mesh = grid_mesh(8, 0.25, origin=(-1.0, -1.0))
    cameras = ring_cameras(6, radius=3.0, height=6.0)
    return mesh, cameras


@pytest.fixture
def quality() -> QualityConfig:
    return QualityConfig(
        gsd_desired=0.01,
        accuracy_desired=0.01,
        alpha=0.5,
        min_cameras=3,
        partners=2,
        top_connected=5,
        combinations=10,
        triangle_fraction=1,
        rng_seed=0,
    )


@pytest.fixture
def small_scene_spec() -> SceneSpec:
    """Cena sintética pequena o bastante para testes rápidos."""
    return SceneSpec(
        terrain_size=10.0,
        grid_cells=6,
        height_amplitude=0.3,
        occluders=1,
        occluder_size=2.0,
        occluder_height=1.5,
        rig="grid",
        rig_rows=3,
        rig_cols=3,
        altitude=8.0,
        focal=400.0,
        image_width=800,
        image_height=800,
        sparse_points=300,
        low_texture_fraction=0.3,
    )
