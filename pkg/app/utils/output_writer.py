"""
Artefatos de saída: ranking.json, curve.csv, fulfillment.ply e a tabela de comparação de estratégias.
Toda escrita é determinística para as mesmas entradas.
"""
import csv
import io
import json
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from app.configs.logging_config import configurar_logger
from app.model.errors import OutputError, SceneParseError
from app.model.mesh import SurfaceMesh
from app.model.ranking import CurvePoint, RankingResult
from app.utils.scene_io import write_ply

logger = configurar_logger(__name__)

RANKING_FILE = "ranking.json"
CURVE_FILE = "curve.csv"
FULFILLMENT_FILE = "fulfillment.ply"
COMPARISON_FILE = "comparison.csv"
CURVE_HEADER = ["rank", "cumulative_fulfillment", "normalized"]
COMPARISON_HEADER = ["strategy", "decile", "clusters_mean", "clusters_std"]


def _write(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as file:
            file.write(text)
    except OSError as e:
        raise OutputError(f"falha ao escrever {path}: {e}") from e


def _csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buffer.getvalue()


def fulfillment_colors(values: np.ndarray) -> np.ndarray:
    """Azul (0) -> vermelho (1), uint8 (M, 3)."""
    f = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    red = np.round(255.0 * f)
    blue = 255.0 - red
    return np.stack([red, np.zeros_like(f), blue], axis=1).astype(np.uint8)


def write_ranking(ranking: RankingResult, path: Path) -> None:
    _write(path, json.dumps(ranking.to_document(), indent=2) + "\n")


def write_curve(curve: Sequence[CurvePoint], path: Path) -> None:
    rows = [[p.rank, repr(p.cumulative_fulfillment), repr(p.normalized)] for p in curve]
    _write(path, _csv_text(CURVE_HEADER, rows))


def write_outputs(
    ranking: RankingResult,
    curve: Sequence[CurvePoint],
    mesh: SurfaceMesh,
    directory: Path,
    final_fulfillment: Optional[np.ndarray] = None,
) -> Dict[str, Path]:
    """ranking.json, curve.csv e fulfillment.ply (triângulos coloridos pelo f final)."""
    directory = Path(directory)
    paths = {
        "ranking": directory / RANKING_FILE,
        "curve": directory / CURVE_FILE,
        "mesh": directory / FULFILLMENT_FILE,
    }
    write_ranking(ranking, paths["ranking"])
    write_curve(curve, paths["curve"])
    if final_fulfillment is None:
        final_fulfillment = np.array([p.current_fulfillment for p in mesh.patches], dtype=np.float64)
    write_ply(mesh, paths["mesh"], colors=fulfillment_colors(final_fulfillment), text=True)
    logger.info("[output] ✅ %d entradas escritas em %s", len(ranking), directory)
    return paths


def load_ranking(path: Path) -> RankingResult:
    path = Path(path)
    try:
        document = json.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise SceneParseError(f"não foi possível ler o ranking: {e}", path=str(path)) from e
    except json.JSONDecodeError as e:
        raise SceneParseError(f"JSON inválido: {e.msg}", path=str(path), line=e.lineno, offset=e.pos) from e
    return RankingResult.from_document(document)


def read_curve(path: Path) -> List[CurvePoint]:
    with open(path, "r", encoding="utf-8", newline="") as file:
        return [
            CurvePoint(
                rank=int(row["rank"]),
                cumulative_fulfillment=float(row["cumulative_fulfillment"]),
                normalized=float(row["normalized"]),
            )
            for row in csv.DictReader(file)
        ]


def write_comparison(rows: Iterable[Dict], path: Path) -> Path:
    """Tabela de clusters necessários por decil: strategy, decile, clusters_mean, clusters_std."""
    path = Path(path)
    body = [[r["strategy"], f"{r['decile']:.1f}", f"{r['clusters_mean']:.4f}", f"{r['clusters_std']:.4f}"] for r in rows]
    _write(path, _csv_text(COMPARISON_HEADER, body))
    logger.info("[output] ✅ tabela de comparação escrita em %s", path)
    return path
