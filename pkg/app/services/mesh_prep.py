"""
Balanceamento da malha: decimação por colapso de arestas com quádricas de erro
seguida de subdivisão iterativa pela maior aresta.
"""
import heapq
import math
from typing import Dict, List, Set, Tuple

import numpy as np

from app.configs.config import MeshPrepConstants
from app.configs.logging_config import configurar_logger
from app.model.mesh import MeshStats, SurfaceMesh
from app.model.quality import QualityConfig

logger = configurar_logger(__name__)

TARGET_FRACTION = 1.0 - MeshPrepConstants.EDGE_PERCENTILE / 100.0
COS_MAX_NORMAL_CHANGE = math.cos(math.radians(MeshPrepConstants.MAX_NORMAL_CHANGE_DEG))


def mesh_stats(mesh: SurfaceMesh) -> MeshStats:
    return MeshStats.from_mesh(mesh)


def _criterion_met(vertices: np.ndarray, faces: np.ndarray, threshold: float) -> bool:
    if not len(faces):
        return True
    stats = MeshStats.from_mesh(SurfaceMesh(vertices=vertices, triangles=faces))
    return stats.fraction_above(threshold) >= TARGET_FRACTION


# ==============================================================
# SIMPLIFICAÇÃO (colapso de arestas por quádricas)
# ==============================================================


class _QuadricDecimator:
    """
    Estado mutável da decimação. Arestas não manifold nunca são colapsadas;
    colapsos que invertem normais (> 90°) ou criam triângulos degenerados são rejeitados.
    """

    def __init__(self, mesh: SurfaceMesh, threshold: float):
        self.threshold = threshold
        self.vertices = mesh.vertices.copy()
        self.faces = mesh.triangles.copy()
        self.face_alive = np.ones(len(self.faces), dtype=bool)
        self.alive_faces = len(self.faces)
        self.version = np.zeros(len(self.vertices), dtype=np.int64)
        self.vertex_faces: List[Set[int]] = [set() for _ in range(len(self.vertices))]
        for f, tri in enumerate(self.faces):
            for v in tri:
                self.vertex_faces[v].add(f)
        self.quadrics = np.zeros((len(self.vertices), 4, 4))
        self._init_quadrics()
        self.heap: List[Tuple[float, float, int, int, int, int]] = []
        self.collapses = 0

    # -------------------------
    # Quádricas
    # -------------------------

    def _init_quadrics(self) -> None:
        corners = self.vertices[self.faces]
        raw = np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])
        norms = np.linalg.norm(raw, axis=1)
        normals = raw / np.where(norms > 0, norms, 1.0)[:, None]
        areas = 0.5 * norms
        d = -np.einsum("ij,ij->i", normals, corners[:, 0])
        planes = np.concatenate([normals, d[:, None]], axis=1)
        face_q = areas[:, None, None] * np.einsum("ni,nj->nij", planes, planes)
        for corner in range(3):
            np.add.at(self.quadrics, self.faces[:, corner], face_q)

        # planos de restrição perpendiculares nas arestas de borda
        for (a, b), faces in self._edge_faces().items():
            if len(faces) != 1:
                continue
            f = faces[0]
            edge = self.vertices[b] - self.vertices[a]
            length = np.linalg.norm(edge)
            if length == 0:
                continue
            normal = np.cross(edge, normals[f])
            n_len = np.linalg.norm(normal)
            if n_len == 0:
                continue
            normal /= n_len
            plane = np.append(normal, -normal @ self.vertices[a])
            q = MeshPrepConstants.BOUNDARY_WEIGHT * length * length * np.outer(plane, plane)
            self.quadrics[a] += q
            self.quadrics[b] += q

    def _edge_faces(self) -> Dict[Tuple[int, int], List[int]]:
        edges: Dict[Tuple[int, int], List[int]] = {}
        for f in np.flatnonzero(self.face_alive):
            tri = self.faces[f]
            for i in range(3):
                a, b = int(tri[i]), int(tri[(i + 1) % 3])
                key = (a, b) if a < b else (b, a)
                edges.setdefault(key, []).append(int(f))
        return edges

    def _optimal_position(self, a: int, b: int) -> Tuple[np.ndarray, float]:
        q = self.quadrics[a] + self.quadrics[b]
        midpoint = 0.5 * (self.vertices[a] + self.vertices[b])
        candidates = [midpoint, self.vertices[a], self.vertices[b]]
        A = q[:3, :3]
        if np.linalg.cond(A) < 1e8:
            candidates.insert(0, np.linalg.solve(A, -q[:3, 3]))
        best, best_cost = None, math.inf
        for position in candidates:
            h = np.append(position, 1.0)
            cost = float(h @ q @ h)
            if cost < best_cost - 1e-15:
                best, best_cost = position, cost
        return best, max(best_cost, 0.0)

    # -------------------------
    # Vizinhança
    # -------------------------

    def _neighbors(self, v: int) -> Set[int]:
        result: Set[int] = set()
        for f in self.vertex_faces[v]:
            result.update(int(x) for x in self.faces[f])
        result.discard(v)
        return result

    def _is_boundary_vertex(self, v: int) -> bool:
        counts: Dict[int, int] = {}
        for f in self.vertex_faces[v]:
            for w in self.faces[f]:
                if w != v:
                    counts[int(w)] = counts.get(int(w), 0) + 1
        return any(c == 1 for c in counts.values())

    def _push_edge(self, a: int, b: int) -> None:
        if a > b:
            a, b = b, a
        length = float(np.linalg.norm(self.vertices[a] - self.vertices[b]))
        if length > self.threshold:
            return
        _, cost = self._optimal_position(a, b)
        heapq.heappush(self.heap, (cost, length, a, b, int(self.version[a]), int(self.version[b])))

    def seed_heap(self) -> None:
        for a, b in self._edge_faces():
            self._push_edge(a, b)

    # -------------------------
    # Colapso
    # -------------------------

    def _is_legal(self, a: int, b: int, position: np.ndarray) -> bool:
        shared = self.vertex_faces[a] & self.vertex_faces[b]
        if not shared or len(shared) > 2:
            return False
        if self.alive_faces - len(shared) < MeshPrepConstants.MIN_TRIANGLES:
            return False
        # condição de link: evita arestas não manifold após o colapso
        if len(self._neighbors(a) & self._neighbors(b)) != len(shared):
            return False
        if len(shared) == 2 and self._is_boundary_vertex(a) and self._is_boundary_vertex(b):
            return False
        for f in (self.vertex_faces[a] | self.vertex_faces[b]) - shared:
            tri = self.faces[f]
            old = self.vertices[tri]
            new = old.copy()
            for i in range(3):
                if tri[i] == a or tri[i] == b:
                    new[i] = position
            n_old = np.cross(old[1] - old[0], old[2] - old[0])
            n_new = np.cross(new[1] - new[0], new[2] - new[0])
            len_new = np.linalg.norm(n_new)
            if 0.5 * len_new <= MeshPrepConstants.DEGENERATE_AREA:
                return False
            if n_old @ n_new <= COS_MAX_NORMAL_CHANGE * np.linalg.norm(n_old) * len_new:
                return False
        return True

    def _collapse(self, a: int, b: int, position: np.ndarray) -> None:
        shared = self.vertex_faces[a] & self.vertex_faces[b]
        for f in shared:
            self.face_alive[f] = False
            for x in self.faces[f]:
                self.vertex_faces[x].discard(f)
        self.alive_faces -= len(shared)
        for f in self.vertex_faces[b]:
            tri = self.faces[f]
            tri[tri == b] = a
            self.vertex_faces[a].add(f)
        self.vertex_faces[b] = set()
        self.vertices[a] = position
        self.quadrics[a] += self.quadrics[b]
        self.version[a] += 1
        self.version[b] += 1
        self.collapses += 1
        for w in self._neighbors(a):
            self._push_edge(a, w)

    def current_faces(self) -> np.ndarray:
        return self.faces[self.face_alive]

    def run(self, check_interval: int) -> bool:
        """Executa colapsos; retorna True se o critério dos 95% foi atingido."""
        self.seed_heap()
        since_check = 0
        while self.heap:
            _, _, a, b, stamp_a, stamp_b = heapq.heappop(self.heap)
            if self.version[a] != stamp_a or self.version[b] != stamp_b:
                continue
            if not self.vertex_faces[a] or not self.vertex_faces[b]:
                continue
            position, _ = self._optimal_position(a, b)
            if not self._is_legal(a, b, position):
                continue
            self._collapse(a, b, position)
            since_check += 1
            if since_check >= check_interval:
                since_check = 0
                if _criterion_met(self.vertices, self.current_faces(), self.threshold):
                    return True
        return _criterion_met(self.vertices, self.current_faces(), self.threshold)


def simplify(
    mesh: SurfaceMesh,
    g_d: float,
    r: float,
    check_interval: int = MeshPrepConstants.CHECK_INTERVAL,
) -> SurfaceMesh:
    """
    Decimação por quádricas em ordem crescente de erro até que 95% das arestas
    excedam r·g_d ou não reste colapso legal (metadata['simplify_exhausted']).
    """
    mesh = SurfaceMesh.from_arrays(mesh.vertices, mesh.triangles)
    threshold = r * g_d
    if not len(mesh.triangles):
        return SurfaceMesh.empty()
    if _criterion_met(mesh.vertices, mesh.triangles, threshold):
        logger.info("[mesh] ✅ critério de simplificação já satisfeito (%d triângulos)", len(mesh))
        mesh.metadata.update(simplify_collapses=0, simplify_exhausted=False)
        return mesh

    decimator = _QuadricDecimator(mesh, threshold)
    reached = decimator.run(check_interval)
    result = SurfaceMesh(vertices=decimator.vertices, triangles=decimator.current_faces()).compact()
    result = SurfaceMesh.from_arrays(result.vertices, result.triangles)
    result.metadata.update(simplify_collapses=decimator.collapses, simplify_exhausted=not reached)

    if reached:
        logger.info(
            "[mesh] ✅ simplificação: %d -> %d triângulos (%d colapsos)",
            len(mesh), len(result), decimator.collapses,
        )
    else:
        logger.warning(
            "[mesh] ⚠️ colapsos esgotados antes de 95%% das arestas > %.4f m (%d -> %d triângulos)",
            threshold, len(mesh), len(result),
        )
    return result


# ==============================================================
# SUBDIVISÃO (bissecção pela maior aresta, conforme)
# ==============================================================


_EDGE_PAIRS = np.array([[0, 1], [1, 2], [2, 0]])


def _edge_keys(triangles: np.ndarray) -> np.ndarray:
    """(M, 3, 2) com as chaves ordenadas das arestas e0=(v0,v1), e1=(v1,v2), e2=(v2,v0)."""
    pairs = triangles[:, _EDGE_PAIRS]
    return np.sort(pairs, axis=2)


def _split_pass(vertices: np.ndarray, triangles: np.ndarray, bound: float) -> Tuple[np.ndarray, np.ndarray, bool]:
    corners = vertices[triangles]
    lengths = np.linalg.norm(corners[:, [1, 2, 0]] - corners, axis=2)
    too_long = lengths >= bound
    if not too_long.any():
        return vertices, triangles, False

    count = len(triangles)
    rows = np.arange(count)
    edges, inverse = np.unique(_edge_keys(triangles).reshape(-1, 2), axis=0, return_inverse=True)
    edge_ids = inverse.reshape(count, 3)
    marked = np.zeros(len(edges), dtype=bool)
    marked[edge_ids[too_long]] = True
    longest = np.argmax(lengths, axis=1)
    longest_edge = edge_ids[rows, longest]

    # fechamento: todo triângulo com aresta marcada também divide sua maior aresta
    while True:
        pending = longest_edge[marked[edge_ids].any(axis=1) & ~marked[longest_edge]]
        if not len(pending):
            break
        marked[pending] = True

    split_edges = np.flatnonzero(marked)
    midpoint = np.full(len(edges), -1, dtype=np.int64)
    midpoint[split_edges] = len(vertices) + np.arange(len(split_edges))
    ends = edges[split_edges]
    vertices = np.vstack([vertices, 0.5 * (vertices[ends[:, 0]] + vertices[ends[:, 1]])])

    # rotação que põe a maior aresta em (a, b)
    order = (longest[:, None] + np.arange(3)) % 3
    a, b, c = np.take_along_axis(triangles, order, axis=1).T
    m_ab, m_bc, m_ca = midpoint[np.take_along_axis(edge_ids, order, axis=1)].T
    ab, bc, ca = m_ab >= 0, m_bc >= 0, m_ca >= 0

    children = np.full((count, 4, 3), -1, dtype=np.int64)
    whole = ~ab
    children[whole, 0] = np.column_stack([a, b, c])[whole]
    four = ab & bc & ca
    children[four] = np.stack([
        np.column_stack([a, m_ab, m_ca]), np.column_stack([m_ab, b, m_bc]),
        np.column_stack([m_ca, m_bc, c]), np.column_stack([m_ab, m_bc, m_ca]),
    ], axis=1)[four]
    three_bc = ab & bc & ~ca
    children[three_bc, :3] = np.stack([
        np.column_stack([a, m_ab, c]), np.column_stack([m_ab, b, m_bc]), np.column_stack([m_ab, m_bc, c]),
    ], axis=1)[three_bc]
    three_ca = ab & ~bc & ca
    children[three_ca, :3] = np.stack([
        np.column_stack([a, m_ab, m_ca]), np.column_stack([m_ab, c, m_ca]), np.column_stack([m_ab, b, c]),
    ], axis=1)[three_ca]
    two = ab & ~bc & ~ca
    children[two, :2] = np.stack([
        np.column_stack([a, m_ab, c]), np.column_stack([m_ab, b, c]),
    ], axis=1)[two]
    return vertices, children[children[:, :, 0] >= 0], True


def subdivide(mesh: SurfaceMesh, g_d: float, e: float) -> SurfaceMesh:
    """
    Subdivide até toda aresta ficar < e·g_d. Vértices de entrada são preservados
    (novos vértices são apenas anexados) e a área total é conservada.
    """
    mesh = SurfaceMesh.from_arrays(mesh.vertices, mesh.triangles)
    bound = e * g_d
    if not len(mesh.triangles):
        return mesh

    vertices = np.asarray(mesh.vertices, dtype=np.float64)
    triangles = mesh.triangles.copy()
    passes = 0
    while True:
        vertices, triangles, split = _split_pass(vertices, triangles, bound)
        if not split:
            break
        passes += 1

    result = SurfaceMesh(vertices=vertices, triangles=triangles)
    result.metadata.update(subdivide_passes=passes)
    stats = MeshStats.from_mesh(result)
    assert stats.max_edge < bound, "subdivisão terminou com aresta acima do limite"
    if passes:
        logger.info(
            "[mesh] ✅ subdivisão: %d -> %d triângulos em %d passadas (limite %.4f m)",
            len(mesh), len(result), passes, bound,
        )
    return result


def prepare_mesh(mesh: SurfaceMesh, quality: QualityConfig) -> SurfaceMesh:
    """Simplifica e depois subdivide, nessa ordem."""
    simplified = simplify(mesh, quality.gsd_desired, quality.simplify_factor)
    prepared = subdivide(simplified, quality.gsd_desired, quality.subdivide_factor)
    prepared.metadata.update(
        {k: v for k, v in simplified.metadata.items() if k.startswith("simplify_")}
    )
    stats = mesh_stats(prepared)
    logger.info(
        "[mesh] malha preparada: %d triângulos | p05 aresta %.4f m | maior aresta %.4f m",
        stats.triangle_count, stats.percentile_05, stats.max_edge,
    )
    return prepared
