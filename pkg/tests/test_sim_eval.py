import math

import numpy as np
import pytest

from app.model.errors import ConfigError
from app.model.ranking import RankingEntry, RankingResult, ViewCluster
from app.model.requests.scene_spec import SceneSpec
from app.model.scene import SparsePoint, SparsePointCloud
from app.services.confidence import ConfidenceGrid, FileBackedModel, k_partner_confidence
from app.services.fulfillment import ClusterFulfillment
from app.services.prioritizer import Prioritizer
from app.services.ranking import FulfillmentTable
from app.services.sim_eval import (
    ComparisonResult,
    StrategyComparison,
    clusters_per_decile,
    compare_strategies,
    complete_order,
    export_scene,
    generate_scene,
    max_points_order,
    objective_curve,
    realized_table,
    simulate_match_success,
    simulate_realized,
)
from app.utils.scene_io import load_scene


class TestSceneGeneration:
    def test_same_seed_same_scene(self, small_scene_spec):
        a = generate_scene(small_scene_spec, seed=4)
        b = generate_scene(small_scene_spec, seed=4)
        assert np.array_equal(a.mesh.vertices, b.mesh.vertices)
        assert np.array_equal(a.mesh.triangles, b.mesh.triangles)
        assert [p.track for p in a.cloud.points] == [p.track for p in b.cloud.points]
        assert np.array_equal(a.occluded, b.occluded)

    def test_different_seed_changes_terrain(self, small_scene_spec):
        a = generate_scene(small_scene_spec, seed=1)
        b = generate_scene(small_scene_spec, seed=2)
        assert not np.array_equal(a.mesh.vertices, b.mesh.vertices)

    def test_layout(self, small_scene_spec):
        scene = generate_scene(small_scene_spec, seed=0)
        cells = small_scene_spec.grid_cells
        assert scene.terrain_triangles == 2 * cells * cells
        assert len(scene.mesh) == scene.terrain_triangles + 10 * small_scene_spec.occluders
        assert scene.camera_ids == list(range(small_scene_spec.camera_count))
        assert len(scene.texture) == len(scene.mesh)
        assert all(len(p.track) >= 2 for p in scene.cloud.points)
        assert scene.visibility.is_consistent()

    def test_dome_rig_looks_at_the_terrain(self):
        spec = SceneSpec(
            terrain_size=10.0, grid_cells=4, occluders=0, rig="dome",
            dome_rings=2, dome_per_ring=6, dome_radius=12.0, sparse_points=50,
        )
        scene = generate_scene(spec, seed=0)
        assert len(scene.cameras) == 12
        for camera in scene.cameras:
            # eixo óptico (terceira linha de R) aponta para o centro
            to_center = -camera.center / np.linalg.norm(camera.center)
            assert float(camera.rotation[2] @ to_center) > 0.95

    def test_dome_radius_must_exceed_relief(self):
        spec = SceneSpec(rig="dome", dome_radius=0.5, height_amplitude=1.0)
        with pytest.raises(ConfigError):
            generate_scene(spec, seed=0)

    def test_scene_yaml_without_path_uses_defaults(self):
        assert SceneSpec.from_yaml(None) == SceneSpec()

    @pytest.mark.parametrize("content", ["grid_cells: [4\n", "- 1\n- 2\n"])
    def test_scene_yaml_must_be_a_valid_mapping(self, tmp_path, content):
        path = tmp_path / "scene.yaml"
        path.write_text(content, encoding="utf-8")
        with pytest.raises(ConfigError):
            SceneSpec.from_yaml(path)

    def test_missing_scene_yaml(self, tmp_path):
        with pytest.raises(ConfigError):
            SceneSpec.from_yaml(tmp_path / "none.yaml")

    def test_export_round_trip(self, small_scene_spec, tmp_path):
        scene = generate_scene(small_scene_spec, seed=0)
        paths = export_scene(scene, tmp_path)
        cameras, cloud, mesh = load_scene(paths["cameras"], paths["cloud"], paths["mesh"])
        assert [c.id for c in cameras] == scene.camera_ids
        assert len(cloud.points) == len(scene.cloud.points)
        assert np.allclose(mesh.vertices, scene.mesh.vertices)


class TestMatchSimulation:
    def test_success_frequency_matches_k_partner_confidence(self):
        p = [0.6, 0.7, 0.5]
        trials = 20000
        success = simulate_match_success(p, trials, seed=9)
        expected = k_partner_confidence(p)
        sigma = math.sqrt(expected * (1 - expected) / trials)
        assert abs(success.mean() - expected) < 4 * sigma

    def test_certain_and_impossible_matches(self):
        assert simulate_match_success([1.0, 1.0], 100, seed=0).all()
        assert not simulate_match_success([1.0, 0.0], 100, seed=0).any()


class TestCurves:
    def test_objective_curve_accumulates(self):
        table = FulfillmentTable(
            clusters={
                0: ClusterFulfillment(0, np.array([0, 1]), np.array([0.5, 1.0])),
                1: ClusterFulfillment(1, np.array([1, 2]), np.array([0.8, 0.4])),
            },
            triangle_count=4,
            size=4,
        )
        assert objective_curve([1, 0], table) == pytest.approx([1.2 / 4, 1.9 / 4])

    def test_clusters_per_decile(self):
        curve = np.array([0.2, 0.5, 0.5, 1.0])
        assert clusters_per_decile(curve, (0.1, 0.5, 1.0)).tolist() == [1, 2, 4]

    def test_decile_of_flat_curve_is_zero(self):
        assert not clusters_per_decile(np.zeros(3), (0.5, 1.0)).any()

    def test_complete_order_appends_unranked(self):
        entry = RankingEntry(
            rank=1, cluster=ViewCluster(id=4, key_view=4, partners=(1, 2)),
            gain_at_selection=0.3, cumulative_fulfillment=0.3,
        )
        assert complete_order(RankingResult(entries=[entry]), [7, 4, 2]) == [4, 2, 7]

    def test_max_points_order(self):
        cloud = SparsePointCloud(points=[
            SparsePoint(xyz=(0, 0, 0), track=(0, 1)),
            SparsePoint(xyz=(1, 0, 0), track=(0, 1)),
            SparsePoint(xyz=(2, 0, 0), track=(0, 3)),
            SparsePoint(xyz=(3, 0, 0), track=(2, 3)),
        ])
        # cluster id -> key view
        assert max_points_order({10: 0, 11: 1, 12: 2}, cloud) == [10, 12, 11]


class TestComparison:
    def test_rows_summarize_per_seed_counts(self):
        per_seed = [
            {"ours": np.array([1, 3]), "random": np.array([2, 6])},
            {"ours": np.array([1, 5]), "random": np.array([4, 6])},
        ]
        result = ComparisonResult.from_seeds(["ours", "random"], (0.5, 1.0), per_seed)
        rows = {(r["strategy"], r["decile"]): r for r in result.rows()}
        assert len(rows) == 4
        assert rows[("ours", 1.0)]["clusters_mean"] == pytest.approx(4.0)
        assert rows[("ours", 1.0)]["clusters_std"] == pytest.approx(1.0)
        assert rows[("random", 0.5)]["clusters_mean"] == pytest.approx(3.0)

    def test_needs_two_strategies(self, small_scene_spec):
        scene = generate_scene(small_scene_spec, seed=0)
        with pytest.raises(ConfigError):
            compare_strategies(scene, strategies=["ours"])

    def test_unknown_strategy(self, small_scene_spec, quality):
        scene = generate_scene(small_scene_spec, seed=0)
        with pytest.raises(ConfigError):
            StrategyComparison(scene, quality, strategies=["ours", "oracle"])

    def test_small_comparison(self, small_scene_spec, quality):
        scene = generate_scene(small_scene_spec, seed=0)
        deciles = (0.5, 1.0)
        comparison = StrategyComparison(scene, quality, deciles=deciles)
        result = comparison.run([0, 1])

        assert set(result.per_seed) == {"ours", "no-confidence", "random", "max-points", "optimum"}
        clusters = len(comparison.ours.table.clusters)
        for counts in result.per_seed.values():
            assert counts.shape == (2, 2)
            assert np.all(counts <= clusters)
            # decil maior nunca precisa de menos clusters
            assert np.all(counts[:, 0] <= counts[:, 1])

    def test_seed_results_are_reproducible(self, small_scene_spec, quality):
        scene = generate_scene(small_scene_spec, seed=0)
        comparison = StrategyComparison(scene, quality, strategies=["ours", "random"])
        first = comparison.run_seed(3)
        second = comparison.run_seed(3)
        for strategy in first:
            assert np.array_equal(first[strategy], second[strategy])

    @pytest.mark.slow
    def test_parallel_seeds_match_serial(self, small_scene_spec, quality):
        scene = generate_scene(small_scene_spec, seed=0)
        serial = StrategyComparison(scene, quality, workers=1).run(range(4))
        parallel = StrategyComparison(scene, quality, workers=3).run(range(4))
        for strategy in serial.per_seed:
            assert np.array_equal(serial.per_seed[strategy], parallel.per_seed[strategy])

    @pytest.mark.slow
    def test_default_scene_ranking_beats_random(self):
        scene = generate_scene(SceneSpec(), seed=0)
        result = compare_strategies(scene, strategies=["ours", "random"], seeds=range(20))
        ours, random_order = result.per_seed["ours"], result.per_seed["random"]
        assert ours.shape == (20, len(result.deciles))
        half = result.deciles.index(0.5)
        assert np.mean(np.all(ours <= random_order, axis=1)) >= 0.9
        assert np.mean(ours[:, half] < random_order[:, half]) >= 0.8


class TestRealizedFulfillment:
    @staticmethod
    def _prioritizer(scene, quality, value):
        grids = {c.id: ConfidenceGrid.constant(c.width, c.height, value) for c in scene.cameras}
        prioritizer = Prioritizer(scene.cameras, scene.cloud, scene.mesh, quality, FileBackedModel(grids))
        prioritizer.prepare()
        return prioritizer, prioritizer.execute()

    def test_flat_nadir_grid_sees_every_triangle(self):
        spec = SceneSpec(
            terrain_size=10.0, grid_cells=4, height_amplitude=0.0, occluders=0, rig="grid",
            rig_rows=5, rig_cols=5, altitude=10.0, focal=1000.0, sparse_points=100,
        )
        scene = generate_scene(spec, seed=0)
        assert np.all(scene.visibility.view_counts() >= 4)
        assert not scene.occluded.any()

    def test_certain_matches_reproduce_the_prediction(self, small_scene_spec, quality):
        scene = generate_scene(small_scene_spec, seed=0)
        prioritizer, ranking = self._prioritizer(scene, quality, 1.0)
        realized = realized_table(prioritizer, seed=5)
        for cid, predicted in prioritizer.table.clusters.items():
            assert np.array_equal(realized.clusters[cid].triangles, predicted.triangles)
            assert realized.clusters[cid].values == pytest.approx(predicted.values)
        result = simulate_realized(ranking, prioritizer, seed=5)
        assert result.final == pytest.approx(ranking.entries[-1].cumulative_fulfillment)

    def test_impossible_matches_realize_nothing(self, small_scene_spec, quality):
        scene = generate_scene(small_scene_spec, seed=0)
        prioritizer, ranking = self._prioritizer(scene, quality, 0.0)
        assert len(ranking) == 0
        result = simulate_realized(ranking, prioritizer, seed=1)
        assert result.final == 0.0
        assert not result.per_triangle.any()
