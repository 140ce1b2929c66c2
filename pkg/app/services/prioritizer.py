from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Sequence

import numpy as np

from app.configs.logging_config import configurar_logger
from app.model.errors import InsufficientConnectivityError
from app.model.mesh import SurfaceMesh
from app.model.quality import QualityConfig
from app.model.ranking import RankingResult, ViewCluster
from app.model.requests.run_config import RunConfig
from app.model.scene import Camera, SparsePointCloud
from app.services.confidence import ConfidenceModel, cache_unaries
from app.services.fulfillment import FulfillmentEvaluator
from app.services.mesh_prep import prepare_mesh
from app.services.partner_selection import ConnectivityIndex, build_cluster, build_connectivity, sample_triangles
from app.services.ranking import (
    FulfillmentTable,
    eligible_triangles,
    fulfillment_curve,
    precompute_cluster_fulfillments,
    rank,
)
from app.services.visibility import Bvh, VisibilityTable, build_bvh, compute_visibility
from app.utils.scene_io import load_confidence_model, load_scene

logger = configurar_logger(__name__)


class Prioritizer:
    """
    Pipeline completo: (preparação da malha) -> visibilidade -> cache de confiança ->
    seleção de partners por key view -> fulfillments -> ranking guloso.
    """

    def __init__(
        self,
        cameras: Sequence[Camera],
        cloud: SparsePointCloud,
        mesh: SurfaceMesh,
        quality: QualityConfig,
        model: ConfidenceModel,
        workers: int = 1,
        prepare: bool = False,
        config_echo: Optional[dict] = None,
    ):
        self.cameras: Dict[int, Camera] = {camera.id: camera for camera in cameras}
        self.cloud = cloud
        self.mesh = mesh
        self.quality = quality
        self.model = model
        self.workers = workers
        self.prepare_mesh = prepare
        self.config_echo = config_echo if config_echo is not None else {"quality": quality.model_dump()}

        self.bvh: Optional[Bvh] = None
        self.visibility: Optional[VisibilityTable] = None
        self.evaluator: Optional[FulfillmentEvaluator] = None
        self.connectivity: Optional[ConnectivityIndex] = None
        self.eligible: Optional[np.ndarray] = None
        self.sample: Optional[np.ndarray] = None
        self.clusters: List[ViewCluster] = []
        self.skipped: List[int] = []
        self.table: Optional[FulfillmentTable] = None
        self.is_prepared = False
        logger.info("[prioritizer] ✨ inicializado com %d câmeras", len(self.cameras))

    @classmethod
    def from_run_config(cls, run_config: RunConfig) -> "Prioritizer":
        cameras, cloud, mesh = load_scene(run_config.cameras, run_config.cloud, run_config.mesh)
        model = load_confidence_model(run_config.confidence, cameras)
        echo = {
            "quality": run_config.quality.model_dump(),
            "confidence": "heuristic" if run_config.uses_heuristic else "file",
            "prepare_mesh": run_config.prepare_mesh,
        }
        return cls(
            cameras, cloud, mesh, run_config.quality, model,
            workers=run_config.workers, prepare=run_config.prepare_mesh, config_echo=echo,
        )

    # -------------------------
    # Preparação
    # -------------------------

    def prepare(self) -> None:
        """Pré-processamento: malha, visibilidade, confiança, conectividade e amostra T_z."""
        logger.info("[prioritizer] 🔧 iniciando prepare()")
        if self.prepare_mesh:
            self.mesh = prepare_mesh(self.mesh, self.quality)

        cameras = [self.cameras[c] for c in sorted(self.cameras)]
        self.bvh = build_bvh(self.mesh)
        self.visibility = compute_visibility(self.mesh, self.bvh, cameras, workers=self.workers)
        cache_unaries(self.model, self.mesh, cameras, self.visibility, workers=self.workers)

        self.evaluator = FulfillmentEvaluator(self.mesh, self.cameras, self.quality)
        self.connectivity = build_connectivity(self.cloud)
        self.eligible = eligible_triangles(self.visibility, self.quality.min_cameras)
        self.sample = sample_triangles(
            np.flatnonzero(self.eligible), self.quality.triangle_fraction, self.quality.rng_seed
        )
        self.is_prepared = True
        logger.info(
            "[prioritizer] ✅ prepare() concluído: |T| = %d, amostra T_z = %d",
            int(self.eligible.sum()), len(self.sample),
        )

    # -------------------------
    # Seleção de clusters
    # -------------------------

    def _cluster_for(self, key: int) -> Optional[ViewCluster]:
        try:
            return build_cluster(key, self.connectivity, self.evaluator, self.sample, self.quality)
        except InsufficientConnectivityError as e:
            logger.warning("⚠️ %s; key view ignorada", e.message)
            return None

    def select_clusters(self) -> List[ViewCluster]:
        if not self.is_prepared:
            self.prepare()
        keys = sorted(self.cameras)
        if self.workers > 1:
            with ThreadPoolExecutor(max_workers=self.workers) as executor:
                results = list(executor.map(self._cluster_for, keys))
        else:
            results = [self._cluster_for(key) for key in keys]
        self.clusters = [c for c in results if c is not None]
        self.skipped = [key for key, c in zip(keys, results) if c is None]
        logger.info(
            "[prioritizer] %d view clusters selecionados (%d key views ignoradas)",
            len(self.clusters), len(self.skipped),
        )
        return self.clusters

    # -------------------------
    # Execução
    # -------------------------

    def execute(self) -> RankingResult:
        if not self.clusters:
            self.select_clusters()
        self.mesh.reset_fulfillment()
        self.table = precompute_cluster_fulfillments(
            self.clusters, self.evaluator, self.eligible, self.mesh, workers=self.workers
        )
        ranking = rank(self.table, self.mesh, config_echo=self.config_echo)
        logger.log_contexto("rank", f"{len(ranking)} clusters ranqueados de {len(self.clusters)}")
        return ranking

    def final_fulfillment(self) -> np.ndarray:
        return np.array([p.current_fulfillment for p in self.mesh.patches], dtype=np.float64)

    def curve(self, ranking: RankingResult, normalize: bool = False):
        return fulfillment_curve(ranking, normalize=normalize)
