import os
from pathlib import Path
from dataclasses import dataclass, field
from typing import Tuple
from dotenv import load_dotenv

load_dotenv()


@dataclass
class QualityDefaults:
    GSD_DESIRED: float = float(os.getenv("GSD_DESIRED", "0.01"))
    ACCURACY_DESIRED: float = float(os.getenv("ACCURACY_DESIRED", "0.01"))
    ALPHA: float = float(os.getenv("ALPHA", "0.5"))
    MIN_CAMERAS: int = int(os.getenv("MIN_CAMERAS", "3"))
    PARTNERS: int = int(os.getenv("PARTNERS", "5"))
    TOP_CONNECTED: int = int(os.getenv("TOP_CONNECTED", "22"))
    COMBINATIONS: int = int(os.getenv("COMBINATIONS", "100"))
    TRIANGLE_FRACTION: int = int(os.getenv("TRIANGLE_FRACTION", "10"))
    SIMPLIFY_FACTOR: float = float(os.getenv("SIMPLIFY_FACTOR", "20"))
    # e = 5 * r
    SUBDIVIDE_FACTOR: float = float(os.getenv("SUBDIVIDE_FACTOR", "100"))
    PIXEL_NOISE: float = float(os.getenv("PIXEL_NOISE", "1.0"))
    RNG_SEED: int = int(os.getenv("RNG_SEED", "0"))


@dataclass
class MeshPrepConstants:
    EDGE_PERCENTILE: float = float(os.getenv("EDGE_PERCENTILE", "5"))
    CHECK_INTERVAL: int = int(os.getenv("COLLAPSE_CHECK_INTERVAL", "1024"))
    MAX_NORMAL_CHANGE_DEG: float = float(os.getenv("MAX_NORMAL_CHANGE_DEG", "90"))
    DEGENERATE_AREA: float = float(os.getenv("DEGENERATE_AREA", "1e-12"))
    MIN_TRIANGLES: int = int(os.getenv("MIN_TRIANGLES", "2"))
    # peso dos planos de restrição nas arestas de borda (Garland-Heckbert)
    BOUNDARY_WEIGHT: float = float(os.getenv("BOUNDARY_WEIGHT", "1000"))


@dataclass
class VisibilityConstants:
    LEAF_SIZE: int = int(os.getenv("BVH_LEAF_SIZE", "8"))
    MAX_VIEW_ANGLE_DEG: float = float(os.getenv("MAX_VIEW_ANGLE_DEG", "89"))
    EPSILON_FRACTION: float = float(os.getenv("VISIBILITY_EPSILON_FRACTION", "1e-4"))


@dataclass
class ConfidenceConstants:
    BIN_COUNT: int = 9
    BIN_WIDTH_DEG: float = 5.0
    GRID_MAGIC: bytes = b"MVSC1"
    GRID_STRIDE: int = int(os.getenv("CONFIDENCE_GRID_STRIDE", "8"))
    HAT_RISE_END_DEG: float = float(os.getenv("HAT_RISE_END_DEG", "10"))
    HAT_PLATEAU_END_DEG: float = float(os.getenv("HAT_PLATEAU_END_DEG", "25"))
    HAT_ZERO_DEG: float = float(os.getenv("HAT_ZERO_DEG", "45"))
    # gradiente médio (níveis de cinza / pixel) que satura o ganho em 1
    GRADIENT_SATURATION: float = float(os.getenv("GRADIENT_SATURATION", "20"))


@dataclass
class RankingConstants:
    MAX_CONDITION_NUMBER: float = float(os.getenv("MAX_CONDITION_NUMBER", "1e12"))


@dataclass
class SimulationConstants:
    SEED_COUNT: int = int(os.getenv("SIM_SEED_COUNT", "20"))
    DECILES: Tuple[float, ...] = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0)
    STRATEGIES: Tuple[str, ...] = ("ours", "no-confidence", "random", "max-points", "optimum")


@dataclass
class PathConstants:
    RUN_TEMPLATE_PATH: Path = Path(os.getenv("RUN_TEMPLATE_PATH", "app/templates/run.yaml"))
    SCENE_TEMPLATE_PATH: Path = Path(os.getenv("SCENE_TEMPLATE_PATH", "app/templates/scene.yaml"))
    OUTPUT_DIR: Path = Path(os.getenv("OUTPUT_DIR", "output"))
    LOG_DIR: Path = Path(os.getenv("LOG_DIR", "logs"))


@dataclass
class RuntimeConstants:
    WORKERS: int = int(os.getenv("WORKERS", "1"))
    LOG_LEVEL: str = os.getenv("LOG_LEVEL", "INFO")


# ===========================
# CONFIG FINAL
# ===========================
@dataclass
class AppConfig:
    quality: QualityDefaults = field(default_factory=QualityDefaults)
    mesh: MeshPrepConstants = field(default_factory=MeshPrepConstants)
    visibility: VisibilityConstants = field(default_factory=VisibilityConstants)
    confidence: ConfidenceConstants = field(default_factory=ConfidenceConstants)
    ranking: RankingConstants = field(default_factory=RankingConstants)
    simulation: SimulationConstants = field(default_factory=SimulationConstants)
    paths: PathConstants = field(default_factory=PathConstants)
    runtime: RuntimeConstants = field(default_factory=RuntimeConstants)


config = AppConfig()
