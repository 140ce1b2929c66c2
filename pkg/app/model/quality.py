from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.configs.config import QualityDefaults

PartnerStrategy = Literal["fulfillment", "max-connectivity", "random"]


class QualityConfig(BaseModel):
    """
    Requisitos de qualidade e parâmetros do ranking.
    g_d e a_d em metros; os defaults vêm de QualityDefaults (variáveis de ambiente).
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    gsd_desired: float = Field(default=QualityDefaults.GSD_DESIRED, gt=0)
    accuracy_desired: float = Field(default=QualityDefaults.ACCURACY_DESIRED, gt=0)
    alpha: float = Field(default=QualityDefaults.ALPHA, ge=0, le=1)
    min_cameras: int = Field(default=QualityDefaults.MIN_CAMERAS, ge=2)
    partners: int = Field(default=QualityDefaults.PARTNERS, ge=2)
    top_connected: int = Field(default=QualityDefaults.TOP_CONNECTED, ge=2)
    combinations: int = Field(default=QualityDefaults.COMBINATIONS, ge=1)
    triangle_fraction: int = Field(default=QualityDefaults.TRIANGLE_FRACTION, ge=1)
    simplify_factor: float = Field(default=QualityDefaults.SIMPLIFY_FACTOR, gt=0)
    subdivide_factor: float = Field(default=QualityDefaults.SUBDIVIDE_FACTOR, gt=0)
    pixel_noise: float = Field(default=QualityDefaults.PIXEL_NOISE, gt=0)
    rng_seed: int = QualityDefaults.RNG_SEED
    use_confidence: bool = True
    partner_strategy: PartnerStrategy = "fulfillment"

    @model_validator(mode="after")
    def _check_partner_pool(self):
        if self.partners > self.top_connected:
            raise ValueError(
                f"partners (k={self.partners}) não pode exceder top_connected (n={self.top_connected})"
            )
        return self

    @property
    def resolution_desired(self) -> float:
        """r_d = 1 / g_d² em px/m²."""
        return 1.0 / (self.gsd_desired ** 2)
