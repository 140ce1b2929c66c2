from typing import Optional


class PrioritizerError(Exception):
    """Erro base do pipeline; exit_code é o código devolvido pela CLI."""

    exit_code: int = 1

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message


class ConfigError(PrioritizerError, ValueError):
    exit_code = 2


class SceneParseError(PrioritizerError):
    """Falha de leitura de arquivo; informa linha ou byte onde o parse parou."""

    exit_code = 3

    def __init__(
        self,
        message: str,
        path: Optional[str] = None,
        line: Optional[int] = None,
        offset: Optional[int] = None,
    ):
        where = []
        if path:
            where.append(str(path))
        if line is not None:
            where.append(f"linha {line}")
        if offset is not None:
            where.append(f"byte {offset}")
        prefix = f"[{' | '.join(where)}] " if where else ""
        super().__init__(f"{prefix}{message}")
        self.path = path
        self.line = line
        self.offset = offset


class InvariantViolation(PrioritizerError, ValueError):
    """Entidade carregada que não respeita os invariantes do modelo."""

    exit_code = 4

    def __init__(self, entity: str, message: str):
        super().__init__(f"[{entity}] {message}")
        self.entity = entity


class InsufficientConnectivityError(PrioritizerError, ValueError):
    exit_code = 4

    def __init__(self, key_view: int, available: int, required: int):
        super().__init__(
            f"[key:{key_view}] apenas {available} câmeras conectadas, {required} necessárias"
        )
        self.key_view = key_view
        self.available = available
        self.required = required


class InvalidClusterError(PrioritizerError, ValueError):
    exit_code = 4


class OutputError(PrioritizerError, OSError):
    exit_code = 5
