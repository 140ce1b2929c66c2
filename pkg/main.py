import argparse
import asyncio
import json
import sys
import traceback
from pathlib import Path
from typing import Any, Dict, List, Optional

from dotenv import load_dotenv

load_dotenv()

from app.configs.config import config
from app.configs.logging_config import configurar_logger
from app.model.errors import ConfigError, PrioritizerError
from app.model.quality import QualityConfig
from app.model.requests.run_config import RunConfig
from app.model.requests.scene_spec import SceneSpec
import tasks

logger = configurar_logger(__name__)

# flag da CLI -> campo de QualityConfig
QUALITY_FLAGS = {
    "gsd": "gsd_desired",
    "accuracy": "accuracy_desired",
    "alpha": "alpha",
    "min_cameras": "min_cameras",
    "partners": "partners",
    "top_n": "top_connected",
    "combinations": "combinations",
    "triangle_fraction": "triangle_fraction",
    "seed": "rng_seed",
    "partner_strategy": "partner_strategy",
    "simplify_factor": "simplify_factor",
    "subdivide_factor": "subdivide_factor",
}


def _add_quality_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("qualidade")
    group.add_argument("--gsd", type=float, help="GSD desejado g_d (m)")
    group.add_argument("--accuracy", type=float, help="acurácia desejada a_d (m)")
    group.add_argument("--alpha", type=float, help="peso entre resolução e incerteza")
    group.add_argument("--min-cameras", type=int, help="câmeras mínimas por triângulo (x)")
    group.add_argument("--partners", type=int, help="partners por cluster (k)")
    group.add_argument("--top-n", type=int, help="câmeras mais conectadas consideradas (n)")
    group.add_argument("--combinations", type=int, help="combinações avaliadas por key view (y)")
    group.add_argument("--triangle-fraction", type=int, help="1/z dos triângulos na amostra T_z")
    group.add_argument("--seed", type=int, help="semente do gerador")
    group.add_argument("--simplify-factor", type=float, help="fator r da simplificação")
    group.add_argument("--subdivide-factor", type=float, help="fator e da subdivisão")
    group.add_argument("--partner-strategy", choices=["fulfillment", "max-connectivity", "random"])
    group.add_argument("--no-confidence", action="store_true", help="f_conf fixo em 1")


def quality_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    overrides = {field: getattr(args, flag, None) for flag, field in QUALITY_FLAGS.items()}
    if getattr(args, "no_confidence", False):
        overrides["use_confidence"] = False
    return {k: v for k, v in overrides.items() if v is not None}


def build_quality(args: argparse.Namespace) -> QualityConfig:
    try:
        return QualityConfig(**quality_overrides(args))
    except ValueError as e:
        raise ConfigError(f"[quality] parâmetros inválidos: {e}") from e


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mvs-prioritizer",
        description="Priorização de depth maps para MVS por view clusters",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    prep = sub.add_parser("prep", help="simplifica e subdivide a malha")
    prep.add_argument("--mesh", type=Path, required=True)
    prep.add_argument("--out", type=Path, required=True)
    _add_quality_flags(prep)

    rank = sub.add_parser("rank", help="pipeline completo de ranking")
    rank.add_argument("--config", type=Path, default=config.paths.RUN_TEMPLATE_PATH)
    rank.add_argument("--cameras", type=Path)
    rank.add_argument("--cloud", type=Path)
    rank.add_argument("--mesh", type=Path)
    rank.add_argument("--confidence", help="'heuristic' ou diretório com grades <id>.mvsc")
    rank.add_argument("--output-dir", type=Path)
    rank.add_argument("--workers", type=int)
    rank.add_argument("--prep", action="store_true", help="prepara a malha antes do ranking")
    _add_quality_flags(rank)

    simulate = sub.add_parser("simulate", help="comparação de estratégias em cena sintética")
    simulate.add_argument("--scene-config", type=Path, default=config.paths.SCENE_TEMPLATE_PATH)
    simulate.add_argument("--scene-seed", type=int, default=0)
    simulate.add_argument("--seeds", type=int, default=config.simulation.SEED_COUNT)
    simulate.add_argument(
        "--strategies", nargs="+", choices=list(config.simulation.STRATEGIES),
        default=list(config.simulation.STRATEGIES),
    )
    simulate.add_argument("--output-dir", type=Path, default=config.paths.OUTPUT_DIR)
    simulate.add_argument("--export-scene", action="store_true")
    simulate.add_argument("--workers", type=int, default=config.runtime.WORKERS)
    _add_quality_flags(simulate)

    oracle = sub.add_parser("oracle", help="confere a confiança de k partners contra a árvore")
    oracle.add_argument("--trials", type=int, default=1000)
    oracle.add_argument("--max-k", type=int, default=12)
    oracle.add_argument("--seed", type=int, default=0)
    return parser


async def dispatch(args: argparse.Namespace) -> Dict[str, Any]:
    if args.command == "prep":
        return await tasks.run_prep(args.mesh, args.out, build_quality(args))

    if args.command == "rank":
        overrides = quality_overrides(args)
        overrides.update({
            "cameras": args.cameras,
            "cloud": args.cloud,
            "mesh": args.mesh,
            "confidence": args.confidence,
            "output_dir": args.output_dir,
            "workers": args.workers,
            "prepare_mesh": True if args.prep else None,
        })
        run_config = RunConfig.from_yaml(args.config, overrides)
        return await tasks.run_rank(run_config)

    if args.command == "simulate":
        spec = SceneSpec.from_yaml(args.scene_config)
        return await tasks.run_simulate(
            spec,
            args.scene_seed,
            list(range(args.seeds)),
            build_quality(args),
            args.output_dir,
            strategies=args.strategies,
            workers=args.workers,
            export=args.export_scene,
        )

    return await tasks.run_oracle(args.trials, args.max_k, args.seed)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        result = asyncio.run(dispatch(args))
    except PrioritizerError as e:
        logger.error("❌ [%s] %s", args.command, e.message)
        return e.exit_code
    except Exception:
        logger.error("❌ [%s] erro inesperado:\n%s", args.command, traceback.format_exc())
        return 1
    print(json.dumps(result, indent=2, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
