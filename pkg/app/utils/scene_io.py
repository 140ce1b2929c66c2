"""
Leitura e escrita dos arquivos de entrada: câmeras e nuvem esparsa (JSON),
malha (PLY ascii / binary_little_endian), grades de confiança (MVSC1) e imagens PGM.
"""
import json
import struct
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from PIL import Image, UnidentifiedImageError
from plyfile import PlyData, PlyElement, PlyParseError
from pydantic import ValidationError

from app.configs.config import ConfidenceConstants
from app.configs.logging_config import configurar_logger
from app.model.errors import InvariantViolation, OutputError, SceneParseError
from app.model.mesh import SurfaceMesh
from app.model.requests.run_config import HEURISTIC_CONFIDENCE
from app.model.scene import Camera, SparsePoint, SparsePointCloud
from app.services.confidence import ConfidenceGrid, ConfidenceModel, FileBackedModel, HeuristicModel

logger = configurar_logger(__name__)

GRID_HEADER = struct.Struct("<5sIIII")
GRID_SUFFIX = ".mvsc"


def _first_error(e: ValidationError) -> str:
    err = e.errors()[0]
    where = ".".join(str(p) for p in err.get("loc", ())) or "registro"
    return f"{where}: {err.get('msg')}"


def _read_json(path: Path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise SceneParseError(f"não foi possível ler o arquivo: {e}", path=str(path)) from e
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise SceneParseError(f"JSON inválido: {e.msg}", path=str(path), line=e.lineno, offset=e.pos) from e


def _write_text(path: Path, text: str) -> None:
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text, encoding="utf-8")
    except OSError as e:
        raise OutputError(f"falha ao escrever {path}: {e}") from e


# ==============================================================
# CÂMERAS
# ==============================================================


def parse_cameras(document, source: str = "cameras") -> List[Camera]:
    if not isinstance(document, list):
        raise SceneParseError("esperado um array JSON de câmeras", path=source)
    cameras: List[Camera] = []
    seen = set()
    for index, record in enumerate(document):
        try:
            camera = Camera.model_validate(record)
        except ValidationError as e:
            ident = record.get("id", "?") if isinstance(record, dict) else "?"
            raise InvariantViolation(f"camera[{index}] id={ident}", _first_error(e)) from e
        if camera.id in seen:
            raise InvariantViolation(f"camera[{index}] id={camera.id}", "id de câmera duplicado")
        seen.add(camera.id)
        cameras.append(camera)
    return cameras


def load_cameras(path: Path) -> List[Camera]:
    return parse_cameras(_read_json(path), str(path))


def write_cameras(cameras: Sequence[Camera], path: Path) -> None:
    records = [camera.model_dump(exclude_none=True) for camera in cameras]
    for record in records:
        record["R"] = list(record["R"])
        record["C"] = list(record["C"])
    _write_text(path, json.dumps(records, indent=2))


# ==============================================================
# NUVEM ESPARSA
# ==============================================================


def parse_cloud(document, source: str = "cloud") -> SparsePointCloud:
    if not isinstance(document, dict) or not isinstance(document.get("points"), list):
        raise SceneParseError("esperado um objeto JSON com a chave 'points'", path=source)
    points: List[SparsePoint] = []
    for index, record in enumerate(document["points"]):
        try:
            points.append(SparsePoint.model_validate(record))
        except ValidationError as e:
            raise InvariantViolation(f"point[{index}]", _first_error(e)) from e
    return SparsePointCloud(points=points)


def load_cloud(path: Path) -> SparsePointCloud:
    return parse_cloud(_read_json(path), str(path))


def write_cloud(cloud: SparsePointCloud, path: Path) -> None:
    document = {"points": [{"xyz": list(p.xyz), "track": list(p.track)} for p in cloud.points]}
    _write_text(path, json.dumps(document))


# ==============================================================
# MALHA (PLY)
# ==============================================================


def _face_triangles(faces) -> np.ndarray:
    """Listas de índices por face; polígonos viram leques de triângulos."""
    triangles: List[Tuple[int, int, int]] = []
    for face in faces:
        face = [int(v) for v in face]
        for i in range(1, len(face) - 1):
            triangles.append((face[0], face[i], face[i + 1]))
    return np.asarray(triangles, dtype=np.int64).reshape(-1, 3)


def read_ply(path: Path) -> SurfaceMesh:
    path = Path(path)
    try:
        ply = PlyData.read(str(path))
    except PlyParseError as e:
        raise SceneParseError(f"PLY inválido: {e}", path=str(path), line=getattr(e, "line", None)) from e
    except (OSError, ValueError, EOFError, struct.error) as e:
        raise SceneParseError(f"PLY inválido: {e}", path=str(path)) from e

    names = [element.name for element in ply.elements]
    if "vertex" not in names:
        raise SceneParseError("PLY sem elemento 'vertex'", path=str(path))
    vertex = ply["vertex"]
    vertices = np.stack([vertex["x"], vertex["y"], vertex["z"]], axis=1).astype(np.float64)

    triangles = np.zeros((0, 3), dtype=np.int64)
    if "face" in names:
        face = ply["face"]
        prop = next((p.name for p in face.properties if p.name in ("vertex_indices", "vertex_index")), None)
        if prop is None:
            raise SceneParseError("PLY sem propriedade vertex_indices nas faces", path=str(path))
        triangles = _face_triangles(face[prop])

    if len(triangles) and (triangles.min() < 0 or triangles.max() >= len(vertices)):
        raise InvariantViolation("mesh", f"face referencia vértice inexistente (|V| = {len(vertices)})")
    return SurfaceMesh.from_arrays(vertices, triangles)


def write_ply(
    mesh: SurfaceMesh,
    path: Path,
    colors: Optional[np.ndarray] = None,
    text: bool = True,
) -> None:
    """Escreve vértices e faces; `colors` (M, 3) uint8 opcional por triângulo."""
    vertex = np.empty(len(mesh.vertices), dtype=[("x", "f8"), ("y", "f8"), ("z", "f8")])
    vertex["x"], vertex["y"], vertex["z"] = mesh.vertices.T
    face_dtype = [("vertex_indices", "i4", (3,))]
    if colors is not None:
        face_dtype += [("red", "u1"), ("green", "u1"), ("blue", "u1")]
    face = np.empty(len(mesh.triangles), dtype=face_dtype)
    face["vertex_indices"] = mesh.triangles
    if colors is not None:
        colors = np.asarray(colors, dtype=np.uint8).reshape(-1, 3)
        face["red"], face["green"], face["blue"] = colors.T
    ply = PlyData(
        [PlyElement.describe(vertex, "vertex"), PlyElement.describe(face, "face")],
        text=text,
        byte_order="<",
    )
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        ply.write(str(path))
    except OSError as e:
        raise OutputError(f"falha ao escrever {path}: {e}") from e


# ==============================================================
# GRADE DE CONFIANÇA (MVSC1)
# ==============================================================


def read_confidence_grid(path: Path) -> ConfidenceGrid:
    """
    Layout little-endian: magic "MVSC1", u32 width_cells, u32 height_cells,
    u32 stride_px, u32 bin_count, depois float32 por bin (bin-major, linha a linha).
    """
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise SceneParseError(f"não foi possível ler a grade: {e}", path=str(path)) from e
    if len(data) < GRID_HEADER.size:
        raise SceneParseError("cabeçalho truncado", path=str(path), offset=len(data))
    magic, width, height, stride, bins = GRID_HEADER.unpack_from(data, 0)
    if magic != ConfidenceConstants.GRID_MAGIC:
        raise SceneParseError(f"magic inválido {magic!r}", path=str(path), offset=0)
    if bins != ConfidenceConstants.BIN_COUNT:
        raise SceneParseError(f"bin_count {bins} != {ConfidenceConstants.BIN_COUNT}", path=str(path), offset=17)
    expected = GRID_HEADER.size + 4 * bins * width * height
    if len(data) != expected:
        raise SceneParseError(
            f"tamanho {len(data)} incompatível com o cabeçalho (esperado {expected})",
            path=str(path), offset=min(len(data), expected),
        )
    values = np.frombuffer(data, dtype="<f4", offset=GRID_HEADER.size).reshape(bins, height, width)
    return ConfidenceGrid(width_cells=width, height_cells=height, stride=stride, values=values.copy())


def write_confidence_grid(grid: ConfidenceGrid, path: Path) -> None:
    header = GRID_HEADER.pack(
        ConfidenceConstants.GRID_MAGIC, grid.width_cells, grid.height_cells, grid.stride, grid.values.shape[0]
    )
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_bytes(header + grid.values.astype("<f4").tobytes())
    except OSError as e:
        raise OutputError(f"falha ao escrever {path}: {e}") from e


def confidence_grid_path(directory: Path, camera_id: int) -> Path:
    return Path(directory) / f"{camera_id}{GRID_SUFFIX}"


# ==============================================================
# IMAGENS
# ==============================================================


def read_pgm(path: Path) -> np.ndarray:
    """Imagem 8 bits em tons de cinza (PGM) como array (altura, largura)."""
    try:
        with Image.open(path) as image:
            return np.asarray(image.convert("L"), dtype=np.float64)
    except (OSError, UnidentifiedImageError) as e:
        raise SceneParseError(f"imagem ilegível: {e}", path=str(path)) from e


# ==============================================================
# CENA
# ==============================================================


def load_scene(cameras_path: Path, cloud_path: Path, mesh_path: Path) -> Tuple[List[Camera], SparsePointCloud, SurfaceMesh]:
    """Carrega e valida câmeras, nuvem esparsa e malha, incluindo referências cruzadas."""
    cameras = load_cameras(cameras_path)
    cloud = load_cloud(cloud_path)
    by_id: Dict[int, Camera] = {camera.id: camera for camera in cameras}
    missing = cloud.unknown_cameras(by_id)
    if missing:
        index, camera_id = missing[0]
        raise InvariantViolation(f"point[{index}]", f"track referencia câmera inexistente {camera_id}")
    mesh = read_ply(mesh_path)
    logger.info(
        "[scene] ✅ %d câmeras, %d pontos esparsos, %d triângulos", len(cameras), len(cloud.points), len(mesh)
    )
    return cameras, cloud, mesh


def load_confidence_model(source: str, cameras: Sequence[Camera]) -> ConfidenceModel:
    """'heuristic' (com gradiente das imagens PGM quando existirem) ou diretório de grades <id>.mvsc."""
    if source == HEURISTIC_CONFIDENCE:
        images = {}
        for camera in cameras:
            if camera.image_path and camera.image_path.lower().endswith(".pgm") and Path(camera.image_path).exists():
                images[camera.id] = read_pgm(Path(camera.image_path))
        if images:
            logger.info("[confidence] ganho de gradiente a partir de %d imagens PGM", len(images))
        return HeuristicModel.from_images(images)

    grids: Dict[int, ConfidenceGrid] = {}
    for camera in cameras:
        grid_path = confidence_grid_path(Path(source), camera.id)
        if grid_path.exists():
            grids[camera.id] = read_confidence_grid(grid_path)
        else:
            logger.warning("[confidence] ⚠️ grade ausente para a câmera %s; confiança 0", camera.id)
    return FileBackedModel(grids)
