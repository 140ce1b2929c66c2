import asyncio
import traceback
from pathlib import Path
from typing import Any, Dict, Optional, Sequence


from app.configs.config import SimulationConstants
from app.configs.logging_config import configurar_logger
from app.model.errors import InvariantViolation, PrioritizerError
from app.model.quality import QualityConfig
from app.model.requests.run_config import RunConfig
from app.model.requests.scene_spec import SceneSpec
from app.services.confidence import k_partner_confidence, k_partner_confidence_alternating, tree_oracle
from app.services.mesh_prep import mesh_stats, prepare_mesh
from app.services.prioritizer import Prioritizer
from app.services.sim_eval import ComparisonResult, StrategyComparison, export_scene, generate_scene
from app.utils.output_writer import COMPARISON_FILE, write_comparison, write_outputs
from app.utils.rng_utils import Stream, derive_rng
from app.utils.scene_io import read_ply, write_ply

logger = configurar_logger(__name__)

ORACLE_TOLERANCE = 1e-12


###############################################################################
# PREP
###############################################################################


async def run_prep(mesh_path: Path, output_path: Path, quality: QualityConfig) -> Dict[str, Any]:
    """Simplifica e subdivide a malha de entrada, gravando o PLY resultante."""
    logger.info("[prep] ▶️ preparando malha %s", mesh_path)
    mesh = await asyncio.to_thread(read_ply, mesh_path)
    prepared = await asyncio.to_thread(prepare_mesh, mesh, quality)
    await asyncio.to_thread(write_ply, prepared, output_path, None, False)
    stats = mesh_stats(prepared)
    logger.log_contexto("prep", f"{len(mesh)} -> {len(prepared)} triângulos em {output_path}")
    return {
        "status": "success",
        "triangles_in": len(mesh),
        "triangles_out": stats.triangle_count,
        "percentile_05": stats.percentile_05,
        "max_edge": stats.max_edge,
        "simplify_exhausted": bool(prepared.metadata.get("simplify_exhausted", False)),
        "output": str(output_path),
    }


###############################################################################
# RANK
###############################################################################


def _rank_blocking(run_config: RunConfig) -> Dict[str, Any]:
    prioritizer = Prioritizer.from_run_config(run_config)
    prioritizer.prepare()
    ranking = prioritizer.execute()
    curve = prioritizer.curve(ranking)
    paths = write_outputs(
        ranking, curve, prioritizer.mesh, run_config.output_dir, prioritizer.final_fulfillment()
    )
    return {
        "status": "success",
        "clusters": len(prioritizer.clusters),
        "ranked": len(ranking),
        "skipped_key_views": prioritizer.skipped,
        "final_fulfillment": ranking.entries[-1].cumulative_fulfillment if ranking.entries else 0.0,
        "outputs": {k: str(v) for k, v in paths.items()},
    }


async def run_rank(run_config: RunConfig) -> Dict[str, Any]:
    """Pipeline completo do ranking, executado fora do event loop."""
    logger.info("[rank] ▶️ iniciando ranking (workers=%d)", run_config.workers)
    try:
        result = await asyncio.to_thread(_rank_blocking, run_config)
    except PrioritizerError:
        raise
    except Exception:
        logger.error("[rank] ❌ ERRO crítico no pipeline:\n%s", traceback.format_exc())
        raise
    logger.log_contexto("rank", f"{result['ranked']} clusters ranqueados")
    return result


###############################################################################
# SIMULATE
###############################################################################


async def run_simulate(
    spec: SceneSpec,
    scene_seed: int,
    seeds: Sequence[int],
    quality: QualityConfig,
    output_dir: Path,
    strategies: Sequence[str] = SimulationConstants.STRATEGIES,
    workers: int = 1,
    export: bool = False,
) -> Dict[str, Any]:
    """Gera a cena, ranqueia com cada estratégia e compara por decil; seeds rodam em paralelo."""
    logger.info("[sim] ▶️ cena seed=%d, %d seeds de simulação", scene_seed, len(seeds))
    scene = await asyncio.to_thread(generate_scene, spec, scene_seed, quality.min_cameras)
    comparison = StrategyComparison(scene, quality, strategies, workers=workers)
    await asyncio.to_thread(comparison.prepare)

    per_seed = await asyncio.gather(*(asyncio.to_thread(comparison.run_seed, seed) for seed in seeds))
    result = ComparisonResult.from_seeds(comparison.strategies, comparison.deciles, per_seed)

    output_dir = Path(output_dir)
    table_path = write_comparison(result.rows(), output_dir / COMPARISON_FILE)
    exported = {}
    if export:
        exported = {k: str(v) for k, v in export_scene(scene, output_dir / "scene").items()}
    logger.log_contexto("simulate", f"{len(comparison.strategies)} estratégias × {len(seeds)} seeds")
    return {"status": "success", "table": str(table_path), "rows": result.rows(), "scene": exported}


###############################################################################
# ORACLE
###############################################################################


def _oracle_blocking(trials: int, max_k: int, seed: int) -> Dict[str, Any]:
    rng = derive_rng(seed, Stream.ORACLE)
    worst = 0.0
    checked = 0
    for k in range(2, max_k + 1):
        for _ in range(trials):
            p = rng.random(k)
            stable = k_partner_confidence(p)
            worst = max(worst, abs(stable - tree_oracle(p)), abs(stable - k_partner_confidence_alternating(p)))
            checked += 1
    if worst > ORACLE_TOLERANCE:
        raise InvariantViolation("oracle", f"divergência {worst:.3e} > {ORACLE_TOLERANCE:.0e}")
    return {"status": "success", "vectors": checked, "max_deviation": worst}


async def run_oracle(trials: int = 1000, max_k: int = 12, seed: int = 0) -> Dict[str, Any]:
    """Confere a forma estável contra a árvore de probabilidades e a soma alternada."""
    result = await asyncio.to_thread(_oracle_blocking, trials, max_k, seed)
    logger.log_contexto("oracle", f"{result['vectors']} vetores, desvio máximo {result['max_deviation']:.3e}")
    return result
