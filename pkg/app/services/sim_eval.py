"""
Avaliação sintética: gera cenas (terreno + obstáculos + rig de câmeras), sorteia o
sucesso dos matches a partir das confianças par a par e compara estratégias de ranking
pelo número de clusters necessários para atingir cada decil de fulfillment realizado.
"""
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.configs.config import QualityDefaults, SimulationConstants
from app.configs.logging_config import configurar_logger
from app.model.errors import ConfigError
from app.model.mesh import SurfaceMesh, TrianglePatch
from app.model.quality import QualityConfig
from app.model.ranking import RankingResult
from app.model.requests.scene_spec import SceneSpec
from app.model.scene import Camera, SparsePoint, SparsePointCloud
from app.services.confidence import ConfidenceModel, bin_centers, hat_response
from app.services.fulfillment import ClusterFulfillment, FulfillmentEvaluator
from app.services.geometry import look_at_rotation
from app.services.prioritizer import Prioritizer
from app.services.ranking import FulfillmentTable, rank
from app.services.visibility import VisibilityTable, build_bvh, compute_visibility
from app.utils.rng_utils import Stream, derive_rng
from app.utils.scene_io import write_cameras, write_cloud, write_ply

logger = configurar_logger(__name__)

STRATEGIES = SimulationConstants.STRATEGIES
LOW_TEXTURE = 0.15
HIGH_TEXTURE = 0.9
OCCLUDER_SINK = 0.25



# ==============================================================
# CENA SINTÉTICA
# ==============================================================


class PlantedFieldModel(ConfidenceModel):
    """Confiança conhecida: textura do triângulo × chapéu do ângulo × obliquidade da visada."""

    def __init__(self, texture: np.ndarray):
        self.texture = np.asarray(texture, dtype=np.float64)
        self.response = hat_response(bin_centers())

    def unary_vector(self, camera: Camera, triangle: TrianglePatch) -> np.ndarray:
        to_camera = camera.center - triangle.centroid
        dist = np.linalg.norm(to_camera)
        obliqueness = max(float(triangle.normal @ to_camera / dist), 0.0) if dist > 0 else 0.0
        return np.clip(self.texture[triangle.index] * self.response * obliqueness, 0.0, 1.0)


@dataclass
class SyntheticScene:
    spec: SceneSpec
    seed: int
    mesh: SurfaceMesh
    cameras: List[Camera]
    cloud: SparsePointCloud
    model: PlantedFieldModel
    texture: np.ndarray
    occluded: np.ndarray
    visibility: VisibilityTable
    terrain_triangles: int = 0

    @property
    def camera_ids(self) -> List[int]:
        return [camera.id for camera in self.cameras]


def _height_field(spec: SceneSpec, rng: np.random.Generator):
    size = spec.terrain_size
    freqs = rng.uniform(0.5, 2.0, size=3)
    phases = rng.uniform(0.0, 2.0 * math.pi, size=3)

    def height(x, y):
        return spec.height_amplitude * (
            0.6 * np.sin(2 * math.pi * freqs[0] * x / size + phases[0])
            * np.cos(2 * math.pi * freqs[1] * y / size + phases[1])
            + 0.4 * np.sin(2 * math.pi * freqs[2] * (x + y) / size + phases[2])
        )

    return height


def _terrain(spec: SceneSpec, height) -> Tuple[np.ndarray, np.ndarray]:
    n = spec.grid_cells
    coords = np.linspace(-spec.terrain_size / 2.0, spec.terrain_size / 2.0, n + 1)
    xs, ys = np.meshgrid(coords, coords)
    vertices = np.stack([xs.ravel(), ys.ravel(), height(xs, ys).ravel()], axis=1)
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    v00 = (i * (n + 1) + j).ravel()
    v01 = v00 + 1
    v10 = v00 + (n + 1)
    v11 = v10 + 1
    triangles = np.concatenate([
        np.stack([v00, v01, v11], axis=1),
        np.stack([v00, v11, v10], axis=1),
    ])
    return vertices, triangles


def _box(center_xy: np.ndarray, half: float, z_bottom: float, z_top: float, offset: int):
    """Caixa sem fundo: topo + 4 laterais, normais para fora."""
    x0, y0 = center_xy - half
    x1, y1 = center_xy + half
    footprint = [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]
    bottom = [(x, y, z_bottom) for x, y in footprint]
    top = [(x, y, z_top) for x, y in footprint]
    vertices = np.array(bottom + top)
    b = [offset + i for i in range(4)]
    t = [offset + 4 + i for i in range(4)]
    triangles = [(t[0], t[1], t[2]), (t[0], t[2], t[3])]
    for i in range(4):
        nxt = (i + 1) % 4
        triangles += [(b[i], b[nxt], t[nxt]), (b[i], t[nxt], t[i])]
    return vertices, np.array(triangles)


def _rig(spec: SceneSpec, height) -> List[Camera]:
    size = spec.terrain_size
    image = (spec.image_width, spec.image_height)
    cameras: List[Camera] = []
    if spec.rig == "grid":
        xs = np.linspace(-size / 2.0, size / 2.0, spec.rig_cols)
        ys = np.linspace(-size / 2.0, size / 2.0, spec.rig_rows)
        for row, y in enumerate(ys):
            for col, x in enumerate(xs):
                eye = np.array([x, y, float(height(x, y)) + spec.altitude])
                rotation = look_at_rotation(eye, eye - np.array([0.0, 0.0, 1.0]))
                cameras.append(Camera.from_pose(len(cameras), rotation, eye, spec.focal, image))
        return cameras

    target = np.array([0.0, 0.0, float(height(0.0, 0.0))])
    rings = spec.dome_rings
    for ring in range(rings):
        elevation = math.radians(30.0 + (45.0 * ring / (rings - 1) if rings > 1 else 0.0))
        for k in range(spec.dome_per_ring):
            azimuth = 2.0 * math.pi * k / spec.dome_per_ring
            eye = target + spec.dome_radius * np.array([
                math.cos(elevation) * math.cos(azimuth),
                math.cos(elevation) * math.sin(azimuth),
                math.sin(elevation),
            ])
            rotation = look_at_rotation(eye, target)
            cameras.append(Camera.from_pose(len(cameras), rotation, eye, spec.focal, image))
    return cameras


def _texture(spec: SceneSpec, centroids: np.ndarray, terrain_count: int, rng: np.random.Generator) -> np.ndarray:
    """Regiões contíguas de baixa textura cobrindo `low_texture_fraction` do terreno."""
    size = spec.terrain_size
    a, b = rng.uniform(1.0, 3.0, size=2)
    psi = rng.uniform(0.0, 2.0 * math.pi, size=2)
    field_values = (
        np.sin(2 * math.pi * a * centroids[:, 0] / size + psi[0])
        + np.sin(2 * math.pi * b * centroids[:, 1] / size + psi[1])
    )
    texture = np.full(len(centroids), HIGH_TEXTURE)
    if spec.low_texture_fraction > 0 and terrain_count:
        cut = np.quantile(field_values[:terrain_count], spec.low_texture_fraction)
        low = np.zeros(len(centroids), dtype=bool)
        low[:terrain_count] = field_values[:terrain_count] <= cut
        texture[low] = LOW_TEXTURE
    return texture


def _sparse_cloud(
    spec: SceneSpec, mesh: SurfaceMesh, visibility: VisibilityTable, texture: np.ndarray, rng: np.random.Generator
) -> SparsePointCloud:
    """Pontos em triângulos vistos por ≥ 2 câmeras; cada câmera entra na track com probabilidade = textura."""
    counts = visibility.view_counts()
    candidates = np.flatnonzero(counts >= 2)
    if not len(candidates) or spec.sparse_points == 0:
        return SparsePointCloud(points=[])
    areas = mesh.triangle_areas()[candidates]
    chosen = rng.choice(candidates, size=spec.sparse_points, p=areas / areas.sum())
    corners = mesh.triangle_corners()
    points: List[SparsePoint] = []
    for tri in chosen.tolist():
        r1, r2 = rng.random(2)
        s = math.sqrt(r1)
        xyz = (1 - s) * corners[tri, 0] + s * (1 - r2) * corners[tri, 1] + s * r2 * corners[tri, 2]
        cams = sorted(visibility.cameras_of(tri))
        keep = rng.random(len(cams)) < texture[tri]
        track = [c for c, k in zip(cams, keep) if k]
        if len(track) >= 2:
            points.append(SparsePoint(xyz=tuple(float(v) for v in xyz), track=tuple(track)))
    return SparsePointCloud(points=points)


def generate_scene(spec: SceneSpec, seed: int, min_cameras: int = QualityDefaults.MIN_CAMERAS) -> SyntheticScene:
    """Cena determinística para (spec, seed)."""
    if not isinstance(spec, SceneSpec):
        spec = SceneSpec.parse(spec)
    if spec.rig == "dome" and spec.dome_radius <= spec.height_amplitude:
        raise ConfigError("[scene-spec] dome_radius precisa exceder height_amplitude")

    height = _height_field(spec, derive_rng(seed, Stream.TERRAIN))
    vertices, triangles = _terrain(spec, height)
    terrain_count = len(triangles)

    occluder_rng = derive_rng(seed, Stream.OCCLUDERS)
    half = spec.occluder_size / 2.0
    limit = spec.terrain_size / 2.0 - spec.occluder_size
    footprints = []
    all_vertices, all_triangles = [vertices], [triangles]
    offset = len(vertices)
    for _ in range(spec.occluders):
        center = occluder_rng.uniform(-max(limit, 0.0), max(limit, 0.0), size=2)
        base = float(height(center[0], center[1]))
        box_v, box_t = _box(center, half, base - OCCLUDER_SINK, base + spec.occluder_height, offset)
        all_vertices.append(box_v)
        all_triangles.append(box_t)
        footprints.append((center, half))
        offset += len(box_v)
    mesh = SurfaceMesh.from_arrays(np.vstack(all_vertices), np.vstack(all_triangles))
    cameras = _rig(spec, height)

    visibility = compute_visibility(mesh, build_bvh(mesh), cameras)
    cloud_rng = derive_rng(seed, Stream.CLOUD)
    texture = _texture(spec, mesh.centroids(), terrain_count, cloud_rng)
    cloud = _sparse_cloud(spec, mesh, visibility, texture, cloud_rng)

    centroids = mesh.centroids()
    under_box = np.zeros(len(mesh), dtype=bool)
    for center, h in footprints:
        inside = np.all(np.abs(centroids[:terrain_count, :2] - center) <= h, axis=1)
        under_box[:terrain_count] |= inside
    occluded = under_box | (visibility.view_counts() < min_cameras)

    logger.info(
        "[sim] ✅ cena seed=%d: %d triângulos (%d terreno), %d câmeras (%s), %d pontos, %d ocultos",
        seed, len(mesh), terrain_count, len(cameras), spec.rig, len(cloud.points), int(occluded.sum()),
    )
    return SyntheticScene(
        spec=spec, seed=seed, mesh=mesh, cameras=cameras, cloud=cloud, model=PlantedFieldModel(texture),
        texture=texture, occluded=occluded, visibility=visibility, terrain_triangles=terrain_count,
    )


def export_scene(scene: SyntheticScene, directory: Path) -> Dict[str, Path]:
    """cameras.json, cloud.json e mesh.ply para uso com o subcomando rank."""
    directory = Path(directory)
    paths = {
        "cameras": directory / "cameras.json",
        "cloud": directory / "cloud.json",
        "mesh": directory / "mesh.ply",
    }
    write_cameras(scene.cameras, paths["cameras"])
    write_cloud(scene.cloud, paths["cloud"])
    write_ply(scene.mesh, paths["mesh"], text=False)
    return paths


# ==============================================================
# SIMULAÇÃO DE MATCHES
# ==============================================================


def simulate_match_success(pairwise: Sequence[float], trials: int, seed: int) -> np.ndarray:
    """Sorteios independentes de sucesso por partner; True quando ≥ 2 matches dão certo."""
    p = np.asarray(pairwise, dtype=np.float64)
    rng = derive_rng(seed, Stream.MATCH_TRIALS)
    outcomes = rng.random((trials, len(p))) < p
    return outcomes.sum(axis=1) >= 2


def realize_cluster(
    evaluator: FulfillmentEvaluator,
    cluster_id: int,
    key: int,
    partners: Sequence[int],
    eligible: np.ndarray,
    seed: int,
) -> ClusterFulfillment:
    """
    f realizado de um cluster: f_conf substituído pelo resultado 0/1 dos matches.
    O sorteio de cada par (key, partner) é fixo por seed, independente da estratégia.
    """
    tids = evaluator.visible_triangles(key)
    tids = tids[eligible[tids]]
    terms = evaluator.cluster_terms(key, partners, tids)
    successes = np.zeros(len(tids), dtype=np.int64)
    for j, partner in enumerate(partners):
        draws = derive_rng(seed, Stream.MATCH_DRAWS, key, partner).random(len(eligible))[tids]
        successes += draws < terms.pairwise[:, j]
    values = terms.geometric * (successes >= 2)
    keep = values > 0
    return ClusterFulfillment(cluster_id=cluster_id, triangles=tids[keep], values=values[keep])


def realized_table(prioritizer: Prioritizer, seed: int) -> FulfillmentTable:
    table = prioritizer.table
    values = {
        cid: realize_cluster(
            prioritizer.evaluator, cid, cluster.key_view, cluster.partners, prioritizer.eligible, seed
        )
        for cid, cluster in table.view_clusters.items()
    }
    return table.with_values(values)


def objective_curve(order: Sequence[int], table: FulfillmentTable) -> np.ndarray:
    """Objetivo acumulado após cada cluster da ordem dada."""
    current = np.zeros(table.size)
    curve = np.zeros(len(order))
    total = 0.0
    for i, cluster_id in enumerate(order):
        entry = table.clusters[cluster_id]
        if len(entry.triangles):
            before = current[entry.triangles]
            after = np.maximum(before, entry.values)
            total += float((after - before).sum())
            current[entry.triangles] = after
        curve[i] = total / table.triangle_count if table.triangle_count else 0.0
    return curve


@dataclass
class RealizedFulfillment:
    order: List[int]
    curve: np.ndarray
    per_triangle: np.ndarray

    @property
    def final(self) -> float:
        return float(self.curve[-1]) if len(self.curve) else 0.0


def complete_order(ranking: RankingResult, cluster_ids: Sequence[int]) -> List[int]:
    """Ordem do ranking seguida dos clusters não emitidos (ganho 0), por id."""
    order = list(ranking.cluster_ids)
    chosen = set(order)
    return order + [c for c in sorted(cluster_ids) if c not in chosen]


def simulate_realized(ranking: RankingResult, prioritizer: Prioritizer, seed: int) -> RealizedFulfillment:
    """Curva de fulfillment realizado do ranking, com os matches sorteados por seed."""
    table = realized_table(prioritizer, seed)
    order = complete_order(ranking, table.cluster_ids)
    curve = objective_curve(order, table)
    per_triangle = np.zeros(table.size)
    for cluster_id in order:
        entry = table.clusters[cluster_id]
        np.maximum.at(per_triangle, entry.triangles, entry.values)
    return RealizedFulfillment(order=order, curve=curve, per_triangle=per_triangle)


# ==============================================================
# COMPARAÇÃO DE ESTRATÉGIAS
# ==============================================================


def clusters_per_decile(curve: np.ndarray, deciles: Sequence[float]) -> np.ndarray:
    """Primeiro rank (1-based) que atinge decil × máximo da curva; 0 para curva nula."""
    final = float(curve.max()) if len(curve) else 0.0
    counts = np.zeros(len(deciles))
    if final <= 0:
        return counts
    for i, decile in enumerate(deciles):
        target = decile * final - 1e-12 * final
        counts[i] = int(np.argmax(curve >= target)) + 1
    return counts


def max_points_order(cluster_keys: Dict[int, int], cloud: SparsePointCloud) -> List[int]:
    """
    Escolhe sempre a key view com mais pontos esparsos ainda não cobertos; empate pelo menor id.
    Contagem dinâmica: pontos já cobertos por key views escolhidas antes não contam de novo.
    """
    per_camera = cloud.points_per_camera()
    remaining = dict(cluster_keys)
    covered: set = set()
    order: List[int] = []
    while remaining:
        best = min(
            remaining,
            key=lambda cid: (-len(per_camera.get(remaining[cid], set()) - covered), cid),
        )
        order.append(best)
        covered |= per_camera.get(remaining.pop(best), set())
    return order


@dataclass
class ComparisonResult:
    deciles: Tuple[float, ...]
    per_seed: Dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def from_seeds(
        cls, strategies: Sequence[str], deciles: Sequence[float], per_seed: Sequence[Dict[str, np.ndarray]]
    ) -> "ComparisonResult":
        result = cls(deciles=tuple(deciles))
        for strategy in strategies:
            counts = [r[strategy] for r in per_seed]
            result.per_seed[strategy] = np.array(counts).reshape(len(counts), len(deciles))
        return result

    def rows(self) -> List[Dict]:
        rows = []
        for strategy, counts in self.per_seed.items():
            mean = counts.mean(axis=0)
            std = counts.std(axis=0)
            for i, decile in enumerate(self.deciles):
                rows.append({
                    "strategy": strategy,
                    "decile": decile,
                    "clusters_mean": float(mean[i]),
                    "clusters_std": float(std[i]),
                })
        return rows


class StrategyComparison:
    """Rankings preditos calculados uma vez; cada seed sorteia os matches e reavalia as ordens."""

    def __init__(
        self,
        scene: SyntheticScene,
        quality: QualityConfig,
        strategies: Sequence[str] = STRATEGIES,
        deciles: Sequence[float] = SimulationConstants.DECILES,
        workers: int = 1,
    ):
        unknown = [s for s in strategies if s not in STRATEGIES]
        if unknown:
            raise ConfigError(f"[sim] estratégias desconhecidas: {unknown}; válidas: {list(STRATEGIES)}")
        self.scene = scene
        self.quality = quality
        self.strategies = list(strategies)
        self.deciles = tuple(deciles)
        self.workers = workers
        self.ours: Optional[Prioritizer] = None
        self.ours_ranking: Optional[RankingResult] = None
        self.no_confidence: Optional[Prioritizer] = None
        self.no_confidence_ranking: Optional[RankingResult] = None

    def _prioritizer(self, quality: QualityConfig) -> Tuple[Prioritizer, RankingResult]:
        prioritizer = Prioritizer(
            self.scene.cameras, self.scene.cloud, self.scene.mesh, quality, self.scene.model, workers=self.workers
        )
        prioritizer.prepare()
        return prioritizer, prioritizer.execute()

    def prepare(self) -> None:
        self.ours, self.ours_ranking = self._prioritizer(self.quality.model_copy(update={"use_confidence": True}))
        if "no-confidence" in self.strategies:
            self.no_confidence, self.no_confidence_ranking = self._prioritizer(
                self.quality.model_copy(update={"use_confidence": False})
            )

    def run_seed(self, seed: int) -> Dict[str, np.ndarray]:
        if self.ours is None:
            self.prepare()
        realized = realized_table(self.ours, seed)
        cluster_ids = realized.cluster_ids
        counts: Dict[str, np.ndarray] = {}
        for strategy in self.strategies:
            table = realized
            if strategy == "ours":
                order = complete_order(self.ours_ranking, cluster_ids)
            elif strategy == "no-confidence":
                table = realized_table(self.no_confidence, seed)
                order = complete_order(self.no_confidence_ranking, table.cluster_ids)
            elif strategy == "random":
                order = [int(c) for c in derive_rng(seed, Stream.RANDOM_ORDER).permutation(cluster_ids)]
            elif strategy == "max-points":
                keys = {cid: realized.view_clusters[cid].key_view for cid in cluster_ids}
                order = max_points_order(keys, self.scene.cloud)
            else:
                order = complete_order(rank(realized), cluster_ids)
            counts[strategy] = clusters_per_decile(objective_curve(order, table), self.deciles)
        return counts

    def run(self, seeds: Sequence[int]) -> ComparisonResult:
        if self.ours is None:
            self.prepare()
        if self.workers > 1:
            with ThreadPoolExecutor(max_workers=self.workers) as executor:
                per_seed = list(executor.map(self.run_seed, seeds))
        else:
            per_seed = [self.run_seed(seed) for seed in seeds]
        result = ComparisonResult.from_seeds(self.strategies, self.deciles, per_seed)
        logger.info("[sim] ✅ %d estratégias comparadas em %d seeds", len(self.strategies), len(seeds))
        return result


def compare_strategies(
    scene: SyntheticScene,
    strategies: Sequence[str] = STRATEGIES,
    deciles: Sequence[float] = SimulationConstants.DECILES,
    seeds: Optional[Sequence[int]] = None,
    quality: Optional[QualityConfig] = None,
    workers: int = 1,
) -> ComparisonResult:
    """Clusters necessários por decil de fulfillment realizado, média e desvio sobre as seeds."""
    if len(strategies) < 2:
        raise ConfigError("[sim] são necessárias pelo menos 2 estratégias para comparar")
    seeds = list(range(SimulationConstants.SEED_COUNT)) if seeds is None else list(seeds)
    comparison = StrategyComparison(scene, quality or QualityConfig(), strategies, deciles, workers)
    return comparison.run(seeds)
