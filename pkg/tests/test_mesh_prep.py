import math
import time

import numpy as np
import pytest

from app.model.mesh import MeshStats, SurfaceMesh
from app.model.quality import QualityConfig
from app.services.mesh_prep import mesh_stats, prepare_mesh, simplify, subdivide


def _equilateral(side: float) -> SurfaceMesh:
    vertices = [[0.0, 0.0, 0.0], [side, 0.0, 0.0], [side / 2.0, side * math.sqrt(3) / 2.0, 0.0]]
    return SurfaceMesh.from_arrays(vertices, [[0, 1, 2]])


class TestMeshStats:
    def test_percentile_and_fraction(self, make_grid):
        stats = mesh_stats(make_grid(2, 1.0))
        # 12 arestas de 1 m e 4 diagonais de √2 m
        assert stats.triangle_count == 8
        assert stats.percentile_05 == pytest.approx(1.0)
        assert stats.fraction_above(1.1) == pytest.approx(4 / 16)
        assert stats.max_edge == pytest.approx(math.sqrt(2))

    def test_empty_mesh(self):
        stats = MeshStats.from_mesh(SurfaceMesh.empty())
        assert stats.triangle_count == 0 and stats.percentile_05 == 0.0


class TestSimplify:
    def test_empty_mesh_stays_empty(self):
        assert len(simplify(SurfaceMesh.empty(), 0.01, 20)) == 0

    def test_mesh_meeting_criterion_is_unchanged(self, make_grid):
        mesh = make_grid(3, 1.0)
        result = simplify(mesh, g_d=0.01, r=20)
        assert np.array_equal(result.vertices, mesh.vertices)
        assert np.array_equal(result.triangles, mesh.triangles)
        assert result.metadata["simplify_collapses"] == 0

    def test_two_triangles_cannot_collapse(self, make_grid):
        mesh = make_grid(1, 0.05)
        result = simplify(mesh, g_d=0.01, r=20)
        assert len(result) == 2
        assert result.metadata["simplify_exhausted"] is True

    def test_dense_grid_reaches_criterion_or_flags_exhaustion(self, make_grid):
        mesh = make_grid(16, 0.05)
        threshold = 0.2
        result = simplify(mesh, g_d=0.01, r=20, check_interval=16)

        assert len(result) < len(mesh)
        assert result.metadata["simplify_collapses"] > 0
        stats = mesh_stats(result)
        assert stats.fraction_above(threshold) >= 0.95 or result.metadata["simplify_exhausted"]
        assert np.all(result.triangle_areas() > 1e-12)

    def test_planar_grid_stays_planar(self, make_grid):
        result = simplify(make_grid(12, 0.05), g_d=0.01, r=20, check_interval=16)
        assert np.allclose(result.vertices[:, 2], 0.0, atol=1e-9)
        normals = result.triangle_normals()
        assert np.all(normals[:, 2] > 0.99)

    def test_boundary_square_is_preserved(self, make_grid):
        result = simplify(make_grid(12, 0.05), g_d=0.01, r=20, check_interval=16)
        lo, hi = result.vertices.min(axis=0), result.vertices.max(axis=0)
        assert lo[:2] == pytest.approx([0.0, 0.0], abs=1e-9)
        assert hi[:2] == pytest.approx([0.6, 0.6], abs=1e-9)
        assert result.surface_area() == pytest.approx(0.36, rel=1e-6)


class TestSubdivide:
    def test_short_edges_are_identity(self, make_grid):
        mesh = make_grid(2, 0.1)
        result = subdivide(mesh, g_d=0.01, e=100)
        assert np.array_equal(result.triangles, mesh.triangles)
        assert result.metadata["subdivide_passes"] == 0

    def test_equilateral_triangle_splits_one_to_four(self):
        # limite e·g_d = 1 m; 3.6 -> 1.8 -> 0.9
        mesh = _equilateral(3.6)
        result = subdivide(mesh, g_d=0.01, e=100)
        assert len(result) == 16
        assert mesh_stats(result).max_edge < 1.0
        assert result.surface_area() == pytest.approx(mesh.surface_area(), rel=1e-9)

    def test_input_vertices_are_preserved(self, make_grid):
        mesh = make_grid(3, 0.5)
        result = subdivide(mesh, g_d=0.01, e=30)
        assert np.array_equal(result.vertices[: len(mesh.vertices)], mesh.vertices)
        assert mesh_stats(result).max_edge < 0.3

    def test_result_is_conforming(self):
        vertices = np.array([[0, 0, 0], [4.0, 0, 0], [0, 1.0, 0], [4.0, 1.0, 0]])
        mesh = SurfaceMesh.from_arrays(vertices, [[0, 1, 3], [0, 3, 2]])
        result = subdivide(mesh, g_d=0.01, e=90)
        edges = np.sort(np.concatenate([
            result.triangles[:, [0, 1]], result.triangles[:, [1, 2]], result.triangles[:, [2, 0]],
        ]), axis=1)
        unique, counts = np.unique(edges, axis=0, return_counts=True)
        assert counts.max() <= 2
        # vértice pendurado criaria arestas de borda internas
        boundary = unique[counts == 1]
        perimeter = np.linalg.norm(result.vertices[boundary[:, 0]] - result.vertices[boundary[:, 1]], axis=1).sum()
        assert perimeter == pytest.approx(10.0, rel=1e-9)
        assert result.surface_area() == pytest.approx(4.0, rel=1e-9)
        assert mesh_stats(result).max_edge < 0.9

    def test_degenerate_triangles_are_dropped(self):
        vertices = [[0, 0, 0], [1, 0, 0], [2, 0, 0], [0, 1, 0]]
        mesh = SurfaceMesh.from_arrays(vertices, [[0, 1, 2], [0, 1, 3]])
        assert len(mesh) == 1
        assert len(subdivide(mesh, g_d=0.01, e=1000)) == 1

    def test_jittered_grid_stays_conforming_and_oriented(self, make_grid):
        grid = make_grid(6, 1.0)
        rng = np.random.default_rng(3)
        vertices = grid.vertices.copy()
        interior = np.all((vertices[:, :2] > 0.0) & (vertices[:, :2] < 6.0), axis=1)
        vertices[interior, :2] += rng.uniform(-0.15, 0.15, size=(int(interior.sum()), 2))
        mesh = SurfaceMesh.from_arrays(vertices, grid.triangles)

        result = subdivide(mesh, g_d=0.01, e=40)
        edges = np.sort(np.concatenate([
            result.triangles[:, [0, 1]], result.triangles[:, [1, 2]], result.triangles[:, [2, 0]],
        ]), axis=1)
        unique, counts = np.unique(edges, axis=0, return_counts=True)
        assert counts.max() <= 2
        boundary = unique[counts == 1]
        perimeter = np.linalg.norm(result.vertices[boundary[:, 0]] - result.vertices[boundary[:, 1]], axis=1).sum()
        assert perimeter == pytest.approx(24.0, rel=1e-9)
        assert result.surface_area() == pytest.approx(36.0, rel=1e-9)
        corners = result.vertices[result.triangles]
        normals = np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])
        assert np.all(normals[:, 2] > 0)
        assert mesh_stats(result).max_edge < 0.4

    @pytest.mark.slow
    def test_large_mesh_subdivides_quickly(self, make_grid):
        mesh = make_grid(100, 0.1)
        started = time.perf_counter()
        result = subdivide(mesh, g_d=0.01, e=4)
        assert time.perf_counter() - started < 15.0
        assert len(result) >= 16 * len(mesh)
        assert mesh_stats(result).max_edge < 0.04


def test_prepare_mesh_runs_simplify_then_subdivide(make_grid):
    quality = QualityConfig(gsd_desired=0.01, simplify_factor=20, subdivide_factor=30)
    result = prepare_mesh(make_grid(12, 0.05), quality)
    assert mesh_stats(result).max_edge < 0.3
    assert "simplify_collapses" in result.metadata
    assert "subdivide_passes" in result.metadata
