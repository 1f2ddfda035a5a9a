import json
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, validator

from analysis.csv_utils import write_rows
from training.constants import DECISION_THRESHOLD

logger = logging.getLogger(__name__)


def accuracy(predictions: Sequence, labels: Sequence) -> float:
    """
    Mean of (label_hat == label).
    """
    predictions = np.asarray(predictions).astype(int).reshape(-1)
    labels = np.asarray(labels).astype(int).reshape(-1)
    if predictions.size == 0:
        raise ValueError('Cannot compute accuracy of an empty prediction list.')
    if predictions.size != labels.size:
        raise ValueError(f'Got {predictions.size} predictions for {labels.size} labels.')
    return float(np.mean(predictions == labels))


def average_precision(scores: Sequence[float], labels: Sequence[int]) -> float:
    """
    Step-interpolated area under the precision-recall curve, fake (1) as the positive class.
    Equal scores form a single threshold.
    """
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).astype(int).reshape(-1)
    if scores.size != labels.size:
        raise ValueError(f'Got {scores.size} scores for {labels.size} labels.')
    positives = int(labels.sum())
    if positives == 0 or positives == labels.size:
        raise ValueError('Average precision needs at least one positive and one negative sample.')
    order = np.argsort(-scores, kind='stable')
    sorted_scores, sorted_labels = scores[order], labels[order]
    true_positives = np.cumsum(sorted_labels)
    seen = np.arange(1, labels.size + 1)
    # Last index of every tie group
    ends = np.append(np.nonzero(np.diff(sorted_scores))[0], labels.size - 1)
    precision = true_positives[ends] / seen[ends]
    recall = true_positives[ends] / positives
    return float(np.clip(np.sum(np.diff(recall, prepend=0.0) * precision), 0.0, 1.0))


class SourceMetrics(BaseModel):
    source: str
    n: int
    acc: float
    ap: Optional[float] = None

    @validator('acc', 'ap')
    def check_unit_range(cls, value) -> Optional[float]:
        if value is not None and (value < 0 or value > 1):
            raise ValueError(f'field value {value} is invalid. Should be in 0 to 1 range.')
        return value


class EvalReport(BaseModel):
    """
    Per-source ACC/AP plus the mean over sources and the pooled ACC over all records.
    """
    variant: str = 'clean'
    degradation: Optional[Dict[str, Union[float, str]]] = None
    sources: List[SourceMetrics]
    mean_acc: float
    mean_ap: Optional[float] = None
    pooled_acc: float
    pooled_ap: Optional[float] = None
    n: int

    def to_json(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.json(indent=2))
        return path

    def rows(self) -> List[Dict[str, object]]:
        kind = self.degradation['kind'] if self.degradation else ''
        value = self.degradation['value'] if self.degradation else ''
        rows = [{'variant': self.variant, 'degradation': kind, 'value': value, 'source': item.source,
                 'n': item.n, 'acc': item.acc, 'ap': '' if item.ap is None else item.ap}
                for item in self.sources]
        rows.append({'variant': self.variant, 'degradation': kind, 'value': value, 'source': '__mean__',
                     'n': self.n, 'acc': self.mean_acc, 'ap': '' if self.mean_ap is None else self.mean_ap})
        rows.append({'variant': self.variant, 'degradation': kind, 'value': value, 'source': '__pooled__',
                     'n': self.n, 'acc': self.pooled_acc, 'ap': '' if self.pooled_ap is None else self.pooled_ap})
        return rows

    def to_csv(self, path: Union[str, Path]) -> Path:
        return write_rows(path, self.rows())

    @classmethod
    def from_json(cls, path: Union[str, Path]) -> 'EvalReport':
        return cls.parse_obj(json.loads(Path(path).read_text()))


def _safe_ap(scores: np.ndarray, labels: np.ndarray, source: str) -> Optional[float]:
    try:
        return average_precision(scores, labels)
    except ValueError:
        logger.info('metrics source=%s ap=undefined (single class)', source)
        return None


def build_eval_report(probs: Sequence[float], labels: Sequence[int], sources: Sequence[str],
                      variant: str = 'clean', degradation: Optional[Dict[str, Union[float, str]]] = None
                      ) -> EvalReport:
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels).astype(int)
    sources = np.asarray(sources, dtype=object)
    predictions = (probs >= DECISION_THRESHOLD).astype(int)
    per_source = []
    for source in sorted(set(sources.tolist())):
        selected = sources == source
        per_source.append(SourceMetrics(source=source, n=int(selected.sum()),
                                        acc=accuracy(predictions[selected], labels[selected]),
                                        ap=_safe_ap(probs[selected], labels[selected], source)))
    aps = [item.ap for item in per_source if item.ap is not None]
    return EvalReport(
        variant=variant,
        degradation=degradation,
        sources=per_source,
        mean_acc=float(np.mean([item.acc for item in per_source])),
        mean_ap=float(np.mean(aps)) if aps else None,
        pooled_acc=accuracy(predictions, labels),
        pooled_ap=_safe_ap(probs, labels, '__pooled__'),
        n=int(labels.size),
    )
