from typing import Any, Dict, List, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class ViewCluster(BaseModel):
    """Key view + k matching partners (ids ordenados) e o score no momento da seleção."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    id: int
    key_view: int
    partners: Tuple[int, ...]
    score: float = 0.0

    @field_validator("partners")
    @classmethod
    def _check_partners(cls, value):
        if len(set(value)) != len(value):
            raise ValueError("partners repetidos no view cluster")
        return tuple(int(v) for v in value)

    @model_validator(mode="after")
    def _check_key_not_partner(self):
        if self.key_view in self.partners:
            raise ValueError(f"key view {self.key_view} não pode ser seu próprio partner")
        return self

    @property
    def cameras(self) -> Tuple[int, ...]:
        return (self.key_view,) + self.partners

    @property
    def k(self) -> int:
        return len(self.partners)


class FulfillmentBreakdown(BaseModel):
    model_config = ConfigDict(frozen=True)

    f_res: float = Field(ge=0, le=1)
    f_unc: float = Field(ge=0, le=1)
    f_cov: float = Field(ge=0, le=1)
    f_conf: float = Field(ge=0, le=1)
    alpha: float = Field(ge=0, le=1)

    @property
    def f_total(self) -> float:
        return (self.alpha * self.f_res + (1.0 - self.alpha) * self.f_unc) * self.f_cov * self.f_conf


class RankingEntry(BaseModel):
    model_config = ConfigDict(frozen=True)

    rank: int = Field(ge=1)
    cluster: ViewCluster
    gain_at_selection: float
    cumulative_fulfillment: float

    def to_record(self) -> Dict[str, Any]:
        return {
            "rank": self.rank,
            "key_view": self.cluster.key_view,
            "partners": list(self.cluster.partners),
            "gain": self.gain_at_selection,
            "cumulative_fulfillment": self.cumulative_fulfillment,
            "cluster_id": self.cluster.id,
            "score": self.cluster.score,
        }

    @classmethod
    def from_record(cls, record: Dict[str, Any]) -> "RankingEntry":
        cluster = ViewCluster(
            id=record.get("cluster_id", record["key_view"]),
            key_view=record["key_view"],
            partners=tuple(record["partners"]),
            score=record.get("score", 0.0),
        )
        return cls(
            rank=record["rank"],
            cluster=cluster,
            gain_at_selection=record["gain"],
            cumulative_fulfillment=record["cumulative_fulfillment"],
        )


class RankingResult(BaseModel):
    config_echo: Dict[str, Any] = Field(default_factory=dict)
    entries: List[RankingEntry] = Field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def gains(self) -> List[float]:
        return [entry.gain_at_selection for entry in self.entries]

    @property
    def cluster_ids(self) -> List[int]:
        return [entry.cluster.id for entry in self.entries]

    def to_document(self) -> Dict[str, Any]:
        return {
            "config_echo": self.config_echo,
            "entries": [entry.to_record() for entry in self.entries],
        }

    @classmethod
    def from_document(cls, document: Dict[str, Any]) -> "RankingResult":
        return cls(
            config_echo=document.get("config_echo", {}),
            entries=[RankingEntry.from_record(record) for record in document.get("entries", [])],
        )


class CurvePoint(BaseModel):
    model_config = ConfigDict(frozen=True)

    rank: int
    cumulative_fulfillment: float
    normalized: float
