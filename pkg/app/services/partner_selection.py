"""
Seleção de matching partners por key view: conectividade a partir das tracks,
sorteio de combinações entre as câmeras mais conectadas e escolha pelo score.
"""
import math
from collections import Counter
from dataclasses import dataclass, field
from itertools import combinations as iter_combinations
from typing import Dict, List, Optional, Sequence, Set, Tuple

import numpy as np

from app.configs.logging_config import configurar_logger
from app.model.errors import InsufficientConnectivityError
from app.model.quality import QualityConfig
from app.model.ranking import ViewCluster
from app.model.scene import SparsePointCloud
from app.services.fulfillment import FulfillmentEvaluator
from app.utils.rng_utils import Stream, derive_rng

logger = configurar_logger(__name__)


# ==============================================================
# CONECTIVIDADE
# ==============================================================


@dataclass
class ConnectivityIndex:
    """Número de pontos esparsos compartilhados por par de câmeras (chave (a, b) com a < b)."""

    counts: Dict[Tuple[int, int], int] = field(default_factory=dict)
    _neighbors: Dict[int, Dict[int, int]] = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        for (a, b), value in self.counts.items():
            self._neighbors.setdefault(a, {})[b] = value
            self._neighbors.setdefault(b, {})[a] = value

    def count(self, a: int, b: int) -> int:
        if a == b:
            return 0
        return self.counts.get((a, b) if a < b else (b, a), 0)

    def neighbors(self, camera: int) -> Dict[int, int]:
        return dict(self._neighbors.get(camera, {}))

    def ranked_neighbors(self, camera: int, n: Optional[int] = None) -> List[int]:
        """Câmeras conectadas em ordem decrescente de pontos compartilhados; empate pelo menor id."""
        ranked = sorted(self._neighbors.get(camera, {}).items(), key=lambda item: (-item[1], item[0]))
        ids = [cam for cam, value in ranked if value > 0]
        return ids if n is None else ids[:n]

    def total(self, key: int, partners: Sequence[int]) -> int:
        return sum(self.count(key, p) for p in partners)


def build_connectivity(cloud: SparsePointCloud) -> ConnectivityIndex:
    counter: Counter = Counter()
    for point in cloud.points:
        counter.update(iter_combinations(point.track, 2))
    return ConnectivityIndex(counts=dict(counter))


def points_per_camera(cloud: SparsePointCloud) -> Dict[int, Set[int]]:
    return cloud.points_per_camera()


# ==============================================================
# SORTEIO DE COMBINAÇÕES
# ==============================================================


def exhaustive_pool_size(k: int, y: int) -> int:
    """Maior q com C(q, k) ≤ y/4 (0 se nem C(k, k) cabe)."""
    budget = y / 4.0
    if math.comb(k, k) > budget:
        return 0
    q = k
    while math.comb(q + 1, k) <= budget:
        q += 1
    return q


def draw_combinations(
    key: int,
    connectivity: ConnectivityIndex,
    n: int,
    k: int,
    y: int,
    seed: int,
) -> List[Tuple[int, ...]]:
    """
    Todas as C(q, k) combinações das q câmeras mais conectadas, completadas até y
    com k-subconjuntos aleatórios distintos das top-n. Cada combinação é uma tupla ordenada por id.
    """
    pool = connectivity.ranked_neighbors(key, n)
    if len(pool) < k:
        raise InsufficientConnectivityError(key, len(pool), k)

    if math.comb(len(pool), k) <= y:
        return [tuple(sorted(c)) for c in iter_combinations(pool, k)]

    q = min(exhaustive_pool_size(k, y), len(pool))
    drawn: List[Tuple[int, ...]] = [tuple(sorted(c)) for c in iter_combinations(pool[:q], k)]
    seen = set(drawn)
    rng = derive_rng(seed, Stream.COMBINATIONS, key)
    pool_array = np.asarray(pool)
    while len(drawn) < y:
        combo = tuple(sorted(int(c) for c in rng.choice(pool_array, size=k, replace=False)))
        if combo in seen:
            continue
        seen.add(combo)
        drawn.append(combo)
    return drawn


# ==============================================================
# AMOSTRA T_z
# ==============================================================


def sample_triangles(eligible: np.ndarray, z: int, seed: int) -> np.ndarray:
    """Amostra uniforme sem reposição de ⌈|T|/z⌉ triângulos elegíveis (ids ordenados)."""
    eligible = np.asarray(eligible, dtype=np.int64)
    size = math.ceil(len(eligible) / z)
    if size >= len(eligible):
        return np.sort(eligible)
    rng = derive_rng(seed, Stream.TRIANGLE_SAMPLE)
    return np.sort(rng.choice(eligible, size=size, replace=False))


# ==============================================================
# SELEÇÃO
# ==============================================================


def select_partners(
    key: int,
    combinations: Sequence[Tuple[int, ...]],
    evaluator: FulfillmentEvaluator,
    sampled_triangles: np.ndarray,
    connectivity: ConnectivityIndex,
) -> ViewCluster:
    """
    Argmax do score sobre as combinações; empates pela maior conectividade total
    e depois pelos menores ids.
    """
    if not combinations:
        raise ValueError(f"[key:{key}] nenhuma combinação para avaliar")
    visible = evaluator.visible_triangles(key)
    tids = np.intersect1d(visible, sampled_triangles, assume_unique=True)

    best: Optional[Tuple[int, ...]] = None
    best_score = -math.inf
    best_conn = -1
    for combo in combinations:
        combo = tuple(sorted(combo))
        score = evaluator.score(key, combo, tids)
        conn = connectivity.total(key, combo)
        if (
            best is None
            or score > best_score
            or (score == best_score and conn > best_conn)
            or (score == best_score and conn == best_conn and combo < best)
        ):
            best, best_score, best_conn = combo, score, conn
    return ViewCluster(id=key, key_view=key, partners=best, score=best_score)


def max_connectivity_partners(key: int, connectivity: ConnectivityIndex, k: int) -> Tuple[int, ...]:
    pool = connectivity.ranked_neighbors(key)
    if len(pool) < k:
        raise InsufficientConnectivityError(key, len(pool), k)
    return tuple(sorted(pool[:k]))


def random_partners(key: int, connectivity: ConnectivityIndex, n: int, k: int, seed: int) -> Tuple[int, ...]:
    pool = connectivity.ranked_neighbors(key, n)
    if len(pool) < k:
        raise InsufficientConnectivityError(key, len(pool), k)
    rng = derive_rng(seed, Stream.RANDOM_PARTNERS, key)
    return tuple(sorted(int(c) for c in rng.choice(np.asarray(pool), size=k, replace=False)))


def build_cluster(
    key: int,
    connectivity: ConnectivityIndex,
    evaluator: FulfillmentEvaluator,
    sampled_triangles: np.ndarray,
    quality: QualityConfig,
) -> ViewCluster:
    """View cluster da key view conforme quality.partner_strategy."""
    k = quality.partners
    if quality.partner_strategy == "fulfillment":
        combos = draw_combinations(
            key, connectivity, quality.top_connected, k, quality.combinations, quality.rng_seed
        )
        cluster = select_partners(key, combos, evaluator, sampled_triangles, connectivity)
        logger.debug("[key:%s] %d combinações avaliadas, score %.4f", key, len(combos), cluster.score)
        return cluster

    if quality.partner_strategy == "max-connectivity":
        partners = max_connectivity_partners(key, connectivity, k)
    else:
        partners = random_partners(key, connectivity, quality.top_connected, k, quality.rng_seed)
    tids = np.intersect1d(evaluator.visible_triangles(key), sampled_triangles, assume_unique=True)
    return ViewCluster(id=key, key_view=key, partners=partners, score=evaluator.score(key, partners, tids))
