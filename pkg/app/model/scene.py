from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

ORTHONORMAL_TOLERANCE = 1e-9


class Camera(BaseModel):
    """
    Câmera pinhole calibrada.
    R é a rotação mundo→câmera (row-major, 9 valores) e C o centro em metros.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    id: int
    fx: float = Field(gt=0)
    fy: float = Field(gt=0)
    cx: float
    cy: float
    width: int = Field(gt=0)
    height: int = Field(gt=0)
    R: Tuple[float, ...]
    C: Tuple[float, ...]
    image_path: Optional[str] = None

    @field_validator("R")
    @classmethod
    def _check_rotation_size(cls, value):
        if len(value) != 9:
            raise ValueError(f"R precisa de 9 valores, recebeu {len(value)}")
        return tuple(float(v) for v in value)

    @field_validator("C")
    @classmethod
    def _check_center_size(cls, value):
        if len(value) != 3:
            raise ValueError(f"C precisa de 3 valores, recebeu {len(value)}")
        return tuple(float(v) for v in value)

    @model_validator(mode="after")
    def _check_orthonormal(self):
        rotation = np.asarray(self.R, dtype=np.float64).reshape(3, 3)
        deviation = np.abs(rotation.T @ rotation - np.eye(3)).max()
        if deviation >= ORTHONORMAL_TOLERANCE:
            raise ValueError(f"rotação não ortonormal (desvio {deviation:.3e})")
        if np.linalg.det(rotation) <= 0:
            raise ValueError("rotação com determinante negativo")
        return self

    @property
    def rotation(self) -> np.ndarray:
        return np.asarray(self.R, dtype=np.float64).reshape(3, 3)

    @property
    def center(self) -> np.ndarray:
        return np.asarray(self.C, dtype=np.float64)

    @property
    def focal(self) -> Tuple[float, float]:
        return (self.fx, self.fy)

    @property
    def principal_point(self) -> Tuple[float, float]:
        return (self.cx, self.cy)

    @property
    def image_size(self) -> Tuple[int, int]:
        return (self.width, self.height)

    @property
    def optical_axis(self) -> np.ndarray:
        """Direção de visada no referencial do mundo."""
        return self.rotation[2]

    @classmethod
    def from_pose(
        cls,
        camera_id: int,
        rotation: np.ndarray,
        center: np.ndarray,
        focal: float,
        image_size: Tuple[int, int],
        principal_point: Optional[Tuple[float, float]] = None,
        image_path: Optional[str] = None,
    ) -> "Camera":
        width, height = image_size
        cx, cy = principal_point if principal_point is not None else (width / 2.0, height / 2.0)
        return cls(
            id=camera_id,
            fx=focal,
            fy=focal,
            cx=cx,
            cy=cy,
            width=width,
            height=height,
            R=tuple(np.asarray(rotation, dtype=np.float64).ravel()),
            C=tuple(np.asarray(center, dtype=np.float64).ravel()),
            image_path=image_path,
        )


class SparsePoint(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    xyz: Tuple[float, float, float]
    track: Tuple[int, ...]

    @field_validator("track")
    @classmethod
    def _check_track(cls, value):
        unique = tuple(sorted(set(int(v) for v in value)))
        if len(unique) < 2:
            raise ValueError("track precisa de pelo menos 2 câmeras distintas")
        return unique


class SparsePointCloud(BaseModel):
    model_config = ConfigDict(extra="forbid")

    points: List[SparsePoint] = Field(default_factory=list)

    def camera_ids(self) -> set:
        ids = set()
        for point in self.points:
            ids.update(point.track)
        return ids

    def unknown_cameras(self, cameras: Dict[int, Camera]) -> List[Tuple[int, int]]:
        """(índice do ponto, id da câmera) para toda referência a câmera inexistente."""
        missing = []
        for index, point in enumerate(self.points):
            for camera_id in point.track:
                if camera_id not in cameras:
                    missing.append((index, camera_id))
        return missing

    def points_per_camera(self) -> Dict[int, set]:
        per_camera: Dict[int, set] = {}
        for index, point in enumerate(self.points):
            for camera_id in point.track:
                per_camera.setdefault(camera_id, set()).add(index)
        return per_camera
