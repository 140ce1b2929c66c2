import json

import pytest
import yaml

from app.services.sim_eval import export_scene, generate_scene
from app.utils.output_writer import COMPARISON_FILE, RANKING_FILE, load_ranking
from app.utils.scene_io import read_ply, write_ply
from main import build_parser, main, quality_overrides

FAST_FLAGS = ["--partners", "2", "--top-n", "5", "--combinations", "10", "--triangle-fraction", "2"]


@pytest.fixture
def exported_scene(tmp_path, small_scene_spec):
    paths = export_scene(generate_scene(small_scene_spec, seed=0), tmp_path / "scene")
    config_path = tmp_path / "run.yaml"
    config_path.write_text(
        yaml.safe_dump({
            "cameras": str(paths["cameras"]),
            "cloud": str(paths["cloud"]),
            "mesh": str(paths["mesh"]),
            "confidence": "heuristic",
        }),
        encoding="utf-8",
    )
    return config_path, paths


class TestParser:
    def test_quality_flags_map_to_fields(self):
        args = build_parser().parse_args(["rank", "--gsd", "0.02", "--top-n", "7", "--seed", "3", "--no-confidence"])
        assert quality_overrides(args) == {
            "gsd_desired": 0.02, "top_connected": 7, "rng_seed": 3, "use_confidence": False,
        }

    def test_unset_flags_are_omitted(self):
        args = build_parser().parse_args(["simulate"])
        assert quality_overrides(args) == {}


class TestExitCodes:
    def test_oracle_succeeds(self, capsys):
        assert main(["oracle", "--trials", "20", "--max-k", "6"]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["vectors"] == 20 * 5
        assert report["max_deviation"] <= 1e-12

    def test_missing_config_file(self, tmp_path):
        assert main(["rank", "--config", str(tmp_path / "missing.yaml")]) == 2

    def test_missing_input_file(self, tmp_path, exported_scene):
        config_path, _ = exported_scene
        code = main(["rank", "--config", str(config_path), "--cameras", str(tmp_path / "none.json")])
        assert code == 2

    def test_invalid_quality(self, exported_scene):
        config_path, _ = exported_scene
        assert main(["rank", "--config", str(config_path), "--partners", "1"]) == 2

    def test_unreadable_mesh(self, tmp_path, exported_scene):
        config_path, _ = exported_scene
        broken = tmp_path / "broken.ply"
        broken.write_bytes(b"garbage")
        assert main(["rank", "--config", str(config_path), "--mesh", str(broken)]) == 3

    def test_malformed_scene_config(self, tmp_path):
        scene_config = tmp_path / "scene.yaml"
        scene_config.write_text("rig: [grid\n  altitude: 3", encoding="utf-8")
        assert main(["simulate", "--scene-config", str(scene_config), "--seeds", "1"]) == 2

    def test_missing_scene_config(self, tmp_path):
        assert main(["simulate", "--scene-config", str(tmp_path / "none.yaml"), "--seeds", "1"]) == 2


class TestCommands:
    def test_prep_writes_mesh(self, tmp_path, make_grid):
        source = tmp_path / "in.ply"
        target = tmp_path / "out.ply"
        write_ply(make_grid(12, 0.05), source)
        assert main(["prep", "--mesh", str(source), "--out", str(target), "--subdivide-factor", "30"]) == 0
        assert len(read_ply(target)) > 0

    def test_rank_is_deterministic_across_workers(self, tmp_path, exported_scene):
        config_path, _ = exported_scene
        outputs = []
        for workers in ("1", "2"):
            out = tmp_path / f"out{workers}"
            code = main(["rank", "--config", str(config_path), "--output-dir", str(out), "--workers", workers, *FAST_FLAGS])
            assert code == 0
            outputs.append(out)
        first, second = (o / RANKING_FILE for o in outputs)
        assert first.read_bytes() == second.read_bytes()
        ranking = load_ranking(first)
        assert len(ranking) > 0
        gains = ranking.gains
        assert all(a >= b for a, b in zip(gains, gains[1:]))

    @pytest.mark.slow
    def test_simulate_writes_comparison(self, tmp_path, small_scene_spec):
        scene_config = tmp_path / "scene.yaml"
        scene_config.write_text(yaml.safe_dump(small_scene_spec.model_dump()), encoding="utf-8")
        out = tmp_path / "sim"
        code = main([
            "simulate", "--scene-config", str(scene_config), "--seeds", "2",
            "--strategies", "ours", "random", "--output-dir", str(out), "--export-scene", *FAST_FLAGS,
        ])
        assert code == 0
        lines = (out / COMPARISON_FILE).read_text(encoding="utf-8").splitlines()
        assert len(lines) == 1 + 2 * 10
        assert (out / "scene" / "mesh.ply").exists()
