"""
Ranking guloso dos view clusters pelo ganho de fulfillment, com atualização preguiçosa
(lazy greedy) sobre uma fila de prioridade.
"""
import heapq
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from app.configs.logging_config import configurar_logger
from app.model.mesh import SurfaceMesh
from app.model.ranking import CurvePoint, RankingEntry, RankingResult, ViewCluster
from app.services.fulfillment import ClusterFulfillment, FulfillmentEvaluator, gain, objective

logger = configurar_logger(__name__)


@dataclass
class FulfillmentTable:
    """
    f(t, v) pré-computado por cluster. triangle_count é |T| (triângulos que passam o
    filtro de cobertura global); size é o número de triângulos da malha.
    """

    clusters: Dict[int, ClusterFulfillment]
    triangle_count: int
    size: int
    view_clusters: Dict[int, ViewCluster] = field(default_factory=dict)

    @property
    def cluster_ids(self) -> List[int]:
        return sorted(self.clusters)

    def objective(self, selected: Iterable[int]) -> float:
        return objective(selected, self.clusters, self.triangle_count, self.size)

    def gain(self, cluster_id: int, current: np.ndarray) -> float:
        return gain(self.clusters[cluster_id], current, self.triangle_count)

    def cluster(self, cluster_id: int) -> ViewCluster:
        return self.view_clusters[cluster_id]

    def with_values(self, values: Dict[int, ClusterFulfillment]) -> "FulfillmentTable":
        """Mesma estrutura com outros valores (ex.: fulfillment realizado)."""
        return FulfillmentTable(
            clusters=values, triangle_count=self.triangle_count, size=self.size, view_clusters=self.view_clusters
        )


def eligible_triangles(visibility, min_cameras: int) -> np.ndarray:
    """Máscara dos triângulos vistos globalmente por pelo menos x câmeras."""
    return visibility.view_counts() >= min_cameras


def precompute_cluster_fulfillments(
    clusters: Sequence[ViewCluster],
    evaluator: FulfillmentEvaluator,
    eligible: np.ndarray,
    mesh: Optional[SurfaceMesh] = None,
    workers: int = 1,
) -> FulfillmentTable:
    """f(t, v) para todo triângulo elegível visto pela key view de cada cluster."""
    clusters = sorted(clusters, key=lambda c: c.id)

    def compute(cluster: ViewCluster) -> ClusterFulfillment:
        return evaluator.cluster_fulfillment(cluster, eligible)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            results = list(executor.map(compute, clusters))
    else:
        results = [compute(c) for c in clusters]

    table = FulfillmentTable(
        clusters={c.id: r for c, r in zip(clusters, results)},
        triangle_count=int(np.count_nonzero(eligible)),
        size=len(eligible),
        view_clusters={c.id: c for c in clusters},
    )
    if mesh is not None:
        patches = mesh.patches
        for entry in results:
            for tri, value in zip(entry.triangles.tolist(), entry.values.tolist()):
                patches[tri].cluster_fulfillment[entry.cluster_id] = value
    logger.info(
        "[rank] fulfillments pré-computados: %d clusters, |T| = %d", len(clusters), table.triangle_count
    )
    return table


# ==============================================================
# FILA PREGUIÇOSA
# ==============================================================


class LazyQueue:
    """
    Max-heap de (ganho possivelmente desatualizado, id, carimbo).
    O carimbo é o número de seleções feitas quando o ganho foi calculado;
    empates no ganho saem pelo menor id.
    """

    def __init__(self):
        self._heap: List[Tuple[float, int, int]] = []

    def __len__(self) -> int:
        return len(self._heap)

    def push(self, cluster_id: int, gain_value: float, stamp: int) -> None:
        heapq.heappush(self._heap, (-gain_value, cluster_id, stamp))

    def peek(self) -> Tuple[int, float, int]:
        neg, cluster_id, stamp = self._heap[0]
        return cluster_id, -neg, stamp

    def pop(self) -> Tuple[int, float, int]:
        neg, cluster_id, stamp = heapq.heappop(self._heap)
        return cluster_id, -neg, stamp


def _beats(a: Tuple[float, int], b: Tuple[float, int]) -> bool:
    """(ganho, id) a vem antes de b: maior ganho, depois menor id."""
    return a[0] > b[0] or (a[0] == b[0] and a[1] < b[1])


def _entry(rank: int, table: FulfillmentTable, cluster_id: int, gain_value: float, cumulative: float) -> RankingEntry:
    cluster = table.view_clusters.get(cluster_id) or ViewCluster(id=cluster_id, key_view=cluster_id, partners=())
    return RankingEntry(rank=rank, cluster=cluster, gain_at_selection=gain_value, cumulative_fulfillment=cumulative)


def _apply(table: FulfillmentTable, cluster_id: int, current: np.ndarray, mesh: Optional[SurfaceMesh]) -> None:
    entry = table.clusters[cluster_id]
    np.maximum.at(current, entry.triangles, entry.values)
    if mesh is not None:
        patches = mesh.patches
        for tri in entry.triangles.tolist():
            patches[tri].current_fulfillment = float(current[tri])


def rank(
    table: FulfillmentTable,
    mesh: Optional[SurfaceMesh] = None,
    config_echo: Optional[dict] = None,
    limit: Optional[int] = None,
) -> RankingResult:
    """
    Guloso com atualização preguiçosa: retira o topo; se desatualizado, recalcula e
    guarda em V_u; para quando o melhor recalculado supera o limite do novo topo.
    Seleciona o melhor de V_u, reinsere o resto e termina com ganho 0 ou fila vazia.
    """
    current = np.zeros(table.size)
    queue = LazyQueue()
    for cluster_id in table.cluster_ids:
        queue.push(cluster_id, table.gain(cluster_id, current), 0)

    entries: List[RankingEntry] = []
    cumulative = 0.0
    step = 0
    recomputed = 0
    while len(queue) and (limit is None or step < limit):
        held: List[Tuple[float, int]] = []
        best: Optional[Tuple[float, int]] = None
        while len(queue):
            top_id, bound, stamp = queue.peek()
            if best is not None and _beats(best, (bound, top_id)):
                break
            queue.pop()
            if stamp == step:
                value = bound
            else:
                value = table.gain(top_id, current)
                recomputed += 1
            held.append((value, top_id))
            if best is None or _beats((value, top_id), best):
                best = (value, top_id)

        best_gain, best_id = best
        if best_gain <= 0.0:
            break
        _apply(table, best_id, current, mesh)
        cumulative += best_gain
        step += 1
        entries.append(_entry(step, table, best_id, best_gain, cumulative))
        for value, cluster_id in held:
            if cluster_id != best_id:
                queue.push(cluster_id, value, step - 1)

    logger.info(
        "[rank] ✅ %d de %d clusters ranqueados (%d recálculos de ganho), fulfillment final %.4f",
        len(entries), len(table.clusters), recomputed, cumulative,
    )
    return RankingResult(config_echo=config_echo or {}, entries=entries)


def rank_eager(table: FulfillmentTable, limit: Optional[int] = None) -> RankingResult:
    """Oráculo: recalcula o ganho de todos os clusters restantes a cada iteração."""
    current = np.zeros(table.size)
    remaining = set(table.cluster_ids)
    entries: List[RankingEntry] = []
    cumulative = 0.0
    while remaining and (limit is None or len(entries) < limit):
        best: Optional[Tuple[float, int]] = None
        for cluster_id in sorted(remaining):
            candidate = (table.gain(cluster_id, current), cluster_id)
            if best is None or _beats(candidate, best):
                best = candidate
        best_gain, best_id = best
        if best_gain <= 0.0:
            break
        _apply(table, best_id, current, None)
        remaining.discard(best_id)
        cumulative += best_gain
        entries.append(_entry(len(entries) + 1, table, best_id, best_gain, cumulative))
    return RankingResult(entries=entries)


def fulfillment_curve(ranking: RankingResult, normalize: bool = False) -> List[CurvePoint]:
    """Somas de prefixo dos ganhos; `normalized` divide pelo valor final."""
    points: List[CurvePoint] = []
    total = 0.0
    cumulative = []
    for entry in ranking.entries:
        total += entry.gain_at_selection
        cumulative.append(total)
    final = cumulative[-1] if cumulative else 0.0
    for rank_index, value in enumerate(cumulative, start=1):
        normalized = value / final if final > 0 else 0.0
        points.append(CurvePoint(
            rank=rank_index,
            cumulative_fulfillment=value / final if normalize and final > 0 else value,
            normalized=normalized,
        ))
    return points
