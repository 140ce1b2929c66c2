from pathlib import Path
from typing import Any, Dict, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from app.configs.config import PathConstants, RuntimeConstants
from app.model.errors import ConfigError
from app.model.quality import QualityConfig

HEURISTIC_CONFIDENCE = "heuristic"


class RunConfig(BaseModel):
    """
    Configuração completa de uma execução do subcomando `rank`.
    Todos os caminhos referenciados precisam existir no momento da carga.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    quality: QualityConfig = Field(default_factory=QualityConfig)
    cameras: Path
    cloud: Path
    mesh: Path
    confidence: str = HEURISTIC_CONFIDENCE
    output_dir: Path = PathConstants.OUTPUT_DIR
    workers: int = Field(default=RuntimeConstants.WORKERS, ge=1)
    prepare_mesh: bool = False

    @model_validator(mode="after")
    def _check_paths(self):
        for name in ("cameras", "cloud", "mesh"):
            path = getattr(self, name)
            if not path.exists():
                raise ValueError(f"{name}: arquivo não encontrado em {path}")
        if self.confidence != HEURISTIC_CONFIDENCE and not Path(self.confidence).is_dir():
            raise ValueError(
                f"confidence: esperado '{HEURISTIC_CONFIDENCE}' ou diretório existente, recebeu {self.confidence}"
            )
        return self

    @property
    def uses_heuristic(self) -> bool:
        return self.confidence == HEURISTIC_CONFIDENCE

    @classmethod
    def build(cls, document: Dict[str, Any], overrides: Optional[Dict[str, Any]] = None) -> "RunConfig":
        """
        Mescla o documento (YAML) com overrides da CLI.
        Overrides de qualidade vão para a seção `quality`; valores None são ignorados.
        """
        merged: Dict[str, Any] = dict(document or {})
        quality = dict(merged.get("quality") or {})
        for key, value in (overrides or {}).items():
            if value is None:
                continue
            if key in QualityConfig.model_fields:
                quality[key] = value
            else:
                merged[key] = value
        merged["quality"] = quality
        try:
            return cls.model_validate(merged)
        except ValidationError as e:
            raise ConfigError(f"[run-config] configuração inválida: {e}") from e

    @classmethod
    def from_yaml(cls, path: Optional[Path], overrides: Optional[Dict[str, Any]] = None) -> "RunConfig":
        document: Dict[str, Any] = {}
        if path is not None:
            path = Path(path)
            if not path.exists():
                raise ConfigError(f"[run-config] arquivo de configuração não encontrado: {path}")
            try:
                with open(path, "r", encoding="utf-8") as file:
                    document = yaml.safe_load(file) or {}
            except yaml.YAMLError as e:
                raise ConfigError(f"[run-config] YAML inválido em {path}: {e}") from e
            if not isinstance(document, dict):
                raise ConfigError(f"[run-config] esperado um mapeamento em {path}")
        return cls.build(document, overrides)
