#!/usr/bin/env python3
"""
Состояния итераций пайплайна и журнал их прохождения.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional

import structlog

logger = structlog.get_logger(__name__)


class IterationStatus(str, Enum):
    """
    PLANNED    -> WARPING      (облако фильтруется по tau и сплэтится в целевые виды)
    WARPING    -> GENERATING   (бэкенд получил источники, варпы и условия)
    GENERATING -> INSERTED     (SCM целевых видов добавлены в облако)
    INSERTED   -> CHECKPOINTED (итерация записана на диск)
    любое      -> FAILED       (ошибка бэкенда или записи; пайплайн прерывается)
    """

    PLANNED = "planned"
    WARPING = "warping"
    GENERATING = "generating"
    INSERTED = "inserted"
    CHECKPOINTED = "checkpointed"
    FAILED = "failed"


@dataclass
class IterationRecord:
    index: int
    views: List[int]
    status: IterationStatus = IterationStatus.PLANNED
    points_before: int = 0
    points_after: int = 0
    coverage: List[float] = field(default_factory=list)
    checkpoint: Optional[str] = None
    error: Optional[str] = None

    def to_dict(self) -> Dict:
        return {
            "index": self.index,
            "views": list(self.views),
            "status": self.status.value,
            "points_before": self.points_before,
            "points_after": self.points_after,
            "coverage": [round(c, 6) for c in self.coverage],
            "checkpoint": self.checkpoint,
            "error": self.error,
        }


class IterationLog:
    """Записи итераций по индексу; индекс 0: инициализация по источникам."""

    def __init__(self):
        self.records: Dict[int, IterationRecord] = {}

    def register(self, index: int, views: List[int]) -> IterationRecord:
        record = IterationRecord(index=index, views=list(views))
        self.records[index] = record
        logger.debug("iteration.registered", iteration=index, views=list(views))
        return record

    def mark(self, index: int, status: IterationStatus, **changes) -> IterationRecord:
        record = self.records[index]
        record.status = status
        for key, value in changes.items():
            setattr(record, key, value)
        logger.debug("iteration.status", iteration=index, status=status.value)
        return record

    def mark_failed(self, index: int, error: str) -> IterationRecord:
        return self.mark(index, IterationStatus.FAILED, error=error)

    def completed(self) -> int:
        """Число завершённых итераций по целевым батчам (без инициализации)."""
        done = {IterationStatus.INSERTED, IterationStatus.CHECKPOINTED}
        return sum(1 for r in self.records.values() if r.index > 0 and r.status in done)

    def status_counters(self) -> Dict[IterationStatus, int]:
        counters: Dict[IterationStatus, int] = dict.fromkeys(IterationStatus, 0)
        for record in self.records.values():
            counters[record.status] += 1
        return counters

    def to_event_list(self) -> List[Dict]:
        return [self.records[k].to_dict() for k in sorted(self.records)]
