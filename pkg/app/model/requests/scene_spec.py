from pathlib import Path
from typing import Any, Dict, Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from app.model.errors import ConfigError


class SceneSpec(BaseModel):
    """
    Parâmetros da cena sintética: terreno (heightfield), obstáculos e rig de câmeras.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    terrain_size: float = Field(default=20.0, gt=0)
    grid_cells: int = Field(default=32, ge=1)
    height_amplitude: float = Field(default=1.0, ge=0)
    occluders: int = Field(default=6, ge=0)
    occluder_size: float = Field(default=1.5, gt=0)
    occluder_height: float = Field(default=3.0, gt=0)
    rig: Literal["grid", "dome"] = "grid"
    rig_rows: int = Field(default=10, ge=1)
    rig_cols: int = Field(default=20, ge=1)
    altitude: float = Field(default=8.0, gt=0)
    dome_rings: int = Field(default=4, ge=1)
    dome_per_ring: int = Field(default=50, ge=1)
    dome_radius: float = Field(default=15.0, gt=0)
    focal: float = Field(default=1000.0, gt=0)
    image_width: int = Field(default=1000, gt=0)
    image_height: int = Field(default=1000, gt=0)
    sparse_points: int = Field(default=3000, ge=0)
    low_texture_fraction: float = Field(default=0.3, ge=0, le=1)

    @property
    def camera_count(self) -> int:
        if self.rig == "grid":
            return self.rig_rows * self.rig_cols
        return self.dome_rings * self.dome_per_ring

    @classmethod
    def parse(cls, document: Optional[Dict[str, Any]] = None) -> "SceneSpec":
        try:
            return cls.model_validate(document or {})
        except ValidationError as e:
            raise ConfigError(f"[scene-spec] especificação de cena inválida: {e}") from e

    @classmethod
    def from_yaml(cls, path: Optional[Path], overrides: Optional[Dict[str, Any]] = None) -> "SceneSpec":
        """Sem caminho usa os defaults; caminho ausente ou YAML inválido vira ConfigError."""
        document: Dict[str, Any] = {}
        if path is not None:
            path = Path(path)
            if not path.exists():
                raise ConfigError(f"[scene-spec] arquivo de cena não encontrado: {path}")
            try:
                with open(path, "r", encoding="utf-8") as file:
                    document = yaml.safe_load(file) or {}
            except yaml.YAMLError as e:
                raise ConfigError(f"[scene-spec] YAML inválido em {path}: {e}") from e
            if not isinstance(document, dict):
                raise ConfigError(f"[scene-spec] esperado um mapeamento em {path}")
        document.update({k: v for k, v in (overrides or {}).items() if v is not None})
        return cls.parse(document)
