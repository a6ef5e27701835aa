"""
Feature pipeline: vocabularies, categorical indexing and numeric standardization
"""

import logging
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from app.core.errors import ContractViolation, EncodeError
from app.schemas.checkpoint import NumericStats
from app.schemas.events import InteractionEvent
from app.schemas.features import FeatureSchema

logger = logging.getLogger(__name__)

OOV_INDEX = 0
WEEKDAY_NAMES = ["Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"]

Records = Union[pd.DataFrame, Iterable[Union[InteractionEvent, Mapping]]]


class FieldVocab:
    """Sorted bijection between raw values and indices 1..n; 0 is out-of-vocabulary"""

    def __init__(self, name: str, values: Sequence[str]):
        self.name = name
        self.values: List[str] = list(values)
        self._index = {v: i + 1 for i, v in enumerate(self.values)}

    @classmethod
    def from_values(cls, name: str, raw: Iterable) -> "FieldVocab":
        return cls(name, sorted({str(v) for v in raw}))

    @property
    def size(self) -> int:
        return len(self.values) + 1

    def index(self, value) -> int:
        return self._index.get(str(value), OOV_INDEX)

    def value_of(self, index: int) -> Optional[str]:
        if index == OOV_INDEX:
            return None
        return self.values[index - 1]

    def encode(self, column: pd.Series) -> np.ndarray:
        """Vectorised index lookup; unseen values map to the OOV index"""
        codes = pd.Categorical(column.astype(str), categories=self.values).codes
        return codes.astype(np.int64) + 1

    def __contains__(self, value) -> bool:
        return str(value) in self._index

    def __eq__(self, other) -> bool:
        return isinstance(other, FieldVocab) and self.name == other.name and self.values == other.values

    def __repr__(self) -> str:
        return f"<FieldVocab {self.name} size={self.size}>"


@dataclass
class ExampleBatch:
    """Encoded examples: categorical indices, standardized numerics and labels"""
    categorical: np.ndarray
    numeric: np.ndarray
    labels: np.ndarray
    fingerprint: str
    content_ids: Optional[np.ndarray] = None
    user_ids: Optional[np.ndarray] = None
    reference_dates: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    def take(self, rows: np.ndarray) -> "ExampleBatch":
        def pick(arr):
            return None if arr is None else arr[rows]

        return ExampleBatch(
            categorical=self.categorical[rows],
            numeric=self.numeric[rows],
            labels=self.labels[rows],
            fingerprint=self.fingerprint,
            content_ids=pick(self.content_ids),
            user_ids=pick(self.user_ids),
            reference_dates=pick(self.reference_dates),
        )


def calendar_fields(dates: pd.Series) -> Tuple[pd.Series, pd.Series]:
    """Day-of-week name and two-digit month for each date"""
    stamps = pd.to_datetime(dates)
    day = stamps.dt.dayofweek.map(lambda i: WEEKDAY_NAMES[i])
    month = stamps.dt.month.map(lambda m: f"{m:02d}")
    return day, month


def _as_frame(records: Records) -> pd.DataFrame:
    if isinstance(records, pd.DataFrame):
        return records
    rows = [r.model_dump(mode="json") if isinstance(r, InteractionEvent) else dict(r) for r in records]
    return pd.DataFrame(rows)


def build_vocabs(records: Records, schema: FeatureSchema) -> Dict[str, FieldVocab]:
    """
    One vocabulary per categorical field.

    Values are sorted as strings before indices are assigned, so the result
    does not depend on input order. Calendar fields are derived from a
    ``timestamp`` or ``reference_date`` column when not present directly.
    """
    frame = _as_frame(records)
    calendar: Dict[str, pd.Series] = {}
    if len(frame):
        source = next((c for c in ("reference_date", "timestamp") if c in frame.columns), None)
        if source is not None:
            day, month = calendar_fields(frame[source])
            calendar = {"day": day, "month": month}

    vocabs: Dict[str, FieldVocab] = {}
    for spec in schema.categorical:
        if spec.name in frame.columns:
            column = frame[spec.name]
        elif spec.name in calendar:
            column = calendar[spec.name]
        else:
            column = pd.Series([], dtype=object)
        vocabs[spec.name] = FieldVocab.from_values(spec.name, column.dropna().unique())
        logger.debug("Vocabulary %s: %d values", spec.name, vocabs[spec.name].size - 1)
    return vocabs


def fit_numeric_stats(frame: pd.DataFrame, schema: FeatureSchema) -> NumericStats:
    """Mean and population std per numeric field; a zero std becomes 1"""
    stats = NumericStats()
    for spec in schema.numeric:
        if spec.name not in frame.columns:
            raise EncodeError(spec.name)
        values = frame[spec.name].to_numpy(dtype=np.float64)
        mean = float(values.mean()) if values.size else 0.0
        std = float(values.std()) if values.size else 1.0
        stats.mean[spec.name] = mean
        stats.std[spec.name] = std if std > 0.0 else 1.0
    return stats


def encode_row(
    row: Mapping,
    schema: FeatureSchema,
    vocabs: Dict[str, FieldVocab],
    stats: NumericStats,
) -> Tuple[np.ndarray, np.ndarray]:
    """Categorical indices and standardized numerics for one raw row"""
    categorical: List[int] = []
    numeric: List[float] = []
    for spec in schema.fields:
        if spec.name not in row or row[spec.name] is None:
            raise EncodeError(spec.name)
        value = row[spec.name]
        if spec.is_categorical:
            categorical.append(vocabs[spec.name].index(value))
        else:
            mean = stats.mean.get(spec.name, 0.0)
            std = stats.std.get(spec.name, 1.0)
            numeric.append((float(value) - mean) / std)
    return np.asarray(categorical, dtype=np.int64), np.asarray(numeric, dtype=np.float64)


class FeaturePipeline:
    """Schema plus fitted vocabularies and statistics; stateless once fitted"""

    def __init__(
        self,
        schema: FeatureSchema,
        vocabs: Optional[Dict[str, FieldVocab]] = None,
        stats: Optional[NumericStats] = None,
    ):
        self.schema = schema
        self.vocabs = vocabs or {}
        self.stats = stats or NumericStats()

    @classmethod
    def fit(cls, schema: FeatureSchema, vocab_records: Records, train_frame: pd.DataFrame) -> "FeaturePipeline":
        """Vocabularies from the given records, statistics from the training split only"""
        vocabs = build_vocabs(vocab_records, schema)
        stats = fit_numeric_stats(train_frame, schema)
        return cls(schema, vocabs, stats)

    @property
    def resolved_schema(self) -> FeatureSchema:
        return self.schema.with_vocab_sizes({name: v.size for name, v in self.vocabs.items()})

    @property
    def fingerprint(self) -> str:
        return self.resolved_schema.fingerprint()

    def vocab_sizes(self) -> List[int]:
        return [self.vocabs[f.name].size for f in self.schema.categorical]

    def encode_row(self, row: Mapping) -> Tuple[np.ndarray, np.ndarray]:
        return encode_row(row, self.schema, self.vocabs, self.stats)

    def encode_frame(self, frame: pd.DataFrame, dtype=np.float32) -> ExampleBatch:
        """Vectorised encode_row over every row of an example frame"""
        for spec in self.schema.fields:
            if spec.name not in frame.columns:
                raise EncodeError(spec.name)
            if frame[spec.name].isna().any():
                raise EncodeError(spec.name)

        n = len(frame)
        cat_fields = self.schema.categorical
        num_fields = self.schema.numeric
        categorical = np.zeros((n, len(cat_fields)), dtype=np.int64)
        for j, spec in enumerate(cat_fields):
            if spec.name not in self.vocabs:
                raise ContractViolation(f"No vocabulary fitted for field '{spec.name}'")
            categorical[:, j] = self.vocabs[spec.name].encode(frame[spec.name])

        numeric = np.zeros((n, len(num_fields)), dtype=np.float64)
        for j, spec in enumerate(num_fields):
            mean = self.stats.mean.get(spec.name, 0.0)
            std = self.stats.std.get(spec.name, 1.0)
            numeric[:, j] = (frame[spec.name].to_numpy(dtype=np.float64) - mean) / std

        labels = frame["label"].to_numpy(dtype=np.float64) if "label" in frame.columns else np.zeros(n)
        return ExampleBatch(
            categorical=categorical,
            numeric=numeric.astype(dtype),
            labels=labels,
            fingerprint=self.fingerprint,
            content_ids=frame["content_id"].astype(str).to_numpy() if "content_id" in frame.columns else None,
            user_ids=frame["user_id"].astype(str).to_numpy() if "user_id" in frame.columns else None,
            reference_dates=frame["reference_date"].to_numpy() if "reference_date" in frame.columns else None,
        )
