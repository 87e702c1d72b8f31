#!/usr/bin/env python3
"""
Иерархия ошибок toolkit'а. Каждая ошибка несёт стабильный код для JSON-вывода CLI.
"""

from __future__ import annotations

from typing import Any, Dict, Optional


class SpatialGenError(Exception):
    """Базовая доменная ошибка (exit code 1 в CLI)."""

    code = "spatialgen-error"

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.details = details or {}

    def to_dict(self) -> Dict[str, Any]:
        return {
            "error": self.code,
            "message": self.message,
            "details": self.details,
        }


class InvalidInputError(SpatialGenError):
    code = "invalid-input"


class LayoutSchemaError(SpatialGenError):
    """Документ не соответствует layout-JSON схеме."""

    code = "layout-schema"

    def __init__(self, message: str, field_path: str):
        super().__init__(f"{field_path}: {message}", {"field_path": field_path})
        self.field_path = field_path


class LayoutInvariantError(SpatialGenError):
    """Нарушен инвариант типа; box_id указывает на виновный бокс (если есть)."""

    code = "layout-invariant"

    def __init__(self, message: str, box_id: Optional[int] = None, where: Optional[str] = None):
        details: Dict[str, Any] = {}
        if box_id is not None:
            details["box_id"] = box_id
            message = f"box {box_id}: {message}"
        elif where:
            details["where"] = where
            message = f"{where}: {message}"
        super().__init__(message, details)
        self.box_id = box_id


class PlacementError(SpatialGenError):
    code = "placement-failure"

    def __init__(self, pattern: str, message: str):
        super().__init__(f"{pattern}: {message}", {"pattern": pattern})
        self.pattern = pattern


class TrainingDivergedError(SpatialGenError):
    code = "training-diverged"

    def __init__(self, step: int, message: str = "loss is not finite"):
        super().__init__(f"step {step}: {message}", {"step": step})
        self.step = step


class BackendError(SpatialGenError):
    code = "backend-failure"


class PipelineError(SpatialGenError):
    code = "pipeline-failure"

    def __init__(self, message: str, completed_iterations: int):
        super().__init__(message, {"completed_iterations": completed_iterations})
        self.completed_iterations = completed_iterations


class FormatError(SpatialGenError):
    """Файл не читается или не пишется: нет доступа, обрезан, не тот формат."""

    code = "format-error"

    def __init__(self, message: str, path: str):
        super().__init__(f"{path}: {message}", {"path": path})
        self.path = path
