"""What may cross the client/server boundary.

Only these four payload types are ever handed to the server or recorded in a
ledger. None of them can hold raw features or per-example labels: model
payloads hold parameters, a logit matrix holds model outputs on the shared
proxy set, and a label histogram holds per-class counts.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Union

import numpy as np

from .models import DenseLayer, ModelParams, predictor_size


class PayloadKind(str, enum.Enum):
    FULL_MODEL = "FullModel"
    PREDICTOR_ONLY = "PredictorOnly"
    LOGIT_MATRIX = "LogitMatrix"
    LABEL_HISTOGRAM = "LabelHistogram"


@dataclass(frozen=True)
class FullModel:
    params: ModelParams
    kind = PayloadKind.FULL_MODEL

    def __post_init__(self):
        if not isinstance(self.params, ModelParams):
            raise TypeError("FullModel carries ModelParams only")

    @property
    def num_elements(self) -> int:
        return self.params.num_params


@dataclass(frozen=True)
class PredictorOnly:
    layers: tuple[DenseLayer, ...]
    kind = PayloadKind.PREDICTOR_ONLY

    def __post_init__(self):
        if not all(isinstance(l, DenseLayer) for l in self.layers):
            raise TypeError("PredictorOnly carries predictor layers only")

    @property
    def num_elements(self) -> int:
        return predictor_size(self.layers)


@dataclass(frozen=True)
class LogitMatrix:
    logits: np.ndarray
    kind = PayloadKind.LOGIT_MATRIX

    def __post_init__(self):
        if not isinstance(self.logits, np.ndarray) or self.logits.ndim != 2:
            raise TypeError("LogitMatrix carries a 2-D array of logits")

    @property
    def num_elements(self) -> int:
        return int(self.logits.size)


@dataclass(frozen=True)
class LabelHistogram:
    counts: np.ndarray
    kind = PayloadKind.LABEL_HISTOGRAM

    def __post_init__(self):
        c = self.counts
        if not isinstance(c, np.ndarray) or c.ndim != 1 or not np.issubdtype(c.dtype, np.integer):
            raise TypeError("LabelHistogram carries a 1-D vector of integer counts")
        if (c < 0).any():
            raise ValueError("label counts must be non-negative")

    @property
    def num_elements(self) -> int:
        return int(self.counts.size)


Payload = Union[FullModel, PredictorOnly, LogitMatrix, LabelHistogram]
PAYLOAD_TYPES = (FullModel, PredictorOnly, LogitMatrix, LabelHistogram)
