"""
Dataset builder: log ingestion, next-day labels, behavioral features and splits
"""

import json
import logging
from dataclasses import dataclass
from datetime import date
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from app.core.config import settings
from app.core.errors import DataError
from app.schemas.config import SplitSpec
from app.schemas.events import ContentType, InteractionEvent
from app.services.feature_service import WEEKDAY_NAMES

logger = logging.getLogger(__name__)

LOG_COLUMNS = ["user_id", "content_id", "content_type", "timestamp"]
FEATURE_COLUMNS = ["connection_frequency", "content_total_clicks", "user_content_clicks"]
EXAMPLE_COLUMNS = [
    "user_id",
    "content_id",
    "content_type",
    "reference_date",
    *FEATURE_COLUMNS,
    "day",
    "month",
    "label",
]
# trailing window for connection frequency, in days, including the reference day
CONNECTION_WINDOW = 28
MONTH_NAMES = [f"{m:02d}" for m in range(1, 13)]


@dataclass
class EventLog:
    """Validated events sorted by timestamp, plus the count of rejected rows"""
    frame: pd.DataFrame
    malformed: int = 0
    total_rows: int = 0

    def __len__(self) -> int:
        return len(self.frame)

    def __iter__(self) -> Iterator[InteractionEvent]:
        for row in self.frame.itertuples(index=False):
            yield InteractionEvent(
                user_id=row.user_id,
                content_id=row.content_id,
                content_type=row.content_type,
                timestamp=row.timestamp.to_pydatetime(),
            )

    @property
    def last_date(self) -> Optional[date]:
        if self.frame.empty:
            return None
        return self.frame["timestamp"].max().date()


def _read_raw(path: Path) -> Tuple[pd.DataFrame, int]:
    """Raw string columns and the number of unparseable JSON lines"""
    suffix = path.suffix.lower()
    if suffix in (".jsonl", ".json", ".ndjson"):
        rows, broken = [], 0
        with path.open("r", encoding="utf-8") as handle:
            for line in handle:
                if not line.strip():
                    continue
                try:
                    item = json.loads(line)
                    if not isinstance(item, dict):
                        raise ValueError("not an object")
                    rows.append(item)
                except ValueError:
                    broken += 1
        frame = pd.DataFrame(rows, columns=LOG_COLUMNS) if rows else pd.DataFrame(columns=LOG_COLUMNS)
        return frame.astype(object), broken
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    return frame, 0


def ingest_logs(path, malformed_threshold: Optional[float] = None) -> EventLog:
    """
    Read a CSV or JSONL behavioral log.

    Malformed rows are skipped and counted; more than ``malformed_threshold``
    of them (default from settings) aborts with a DataError.
    """
    path = Path(path)
    threshold = settings.MALFORMED_ROW_THRESHOLD if malformed_threshold is None else malformed_threshold
    try:
        raw, broken = _read_raw(path)
    except (OSError, UnicodeDecodeError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise DataError(f"Cannot read log file {path}: {e}") from e

    missing = [c for c in LOG_COLUMNS if c not in raw.columns]
    if missing:
        raise DataError(f"Log file {path} lacks columns: {missing}")

    total = len(raw) + broken
    users = raw["user_id"].fillna("").astype(str).str.strip()
    contents = raw["content_id"].fillna("").astype(str).str.strip()
    types = raw["content_type"].fillna("").astype(str).str.strip()
    stamps = pd.to_datetime(raw["timestamp"], utc=True, errors="coerce", format="ISO8601")

    valid_types = {t.value for t in ContentType}
    ok = (users != "") & (contents != "") & types.isin(valid_types) & stamps.notna()
    malformed = int((~ok).sum()) + broken

    if total and malformed / total > threshold:
        raise DataError(
            f"{malformed} of {total} rows in {path} are malformed "
            f"(threshold {threshold:.1%})"
        )
    if malformed:
        logger.warning("Skipped %d malformed rows in %s", malformed, path)

    frame = pd.DataFrame(
        {
            "user_id": users[ok].to_numpy(),
            "content_id": contents[ok].to_numpy(),
            "content_type": types[ok].to_numpy(),
            "timestamp": stamps[ok].to_numpy(),
        }
    )
    frame["timestamp"] = pd.to_datetime(frame["timestamp"], utc=True)
    frame = frame.sort_values(
        ["timestamp", "user_id", "content_type", "content_id"], kind="mergesort"
    ).reset_index(drop=True)

    logger.info("Ingested %d events from %s", len(frame), path)
    return EventLog(frame=frame, malformed=malformed, total_rows=total)


def _day_numbers(stamps: pd.Series) -> np.ndarray:
    """Days since 1970-01-01 (UTC) for each timestamp"""
    naive = stamps.dt.tz_convert(None) if stamps.dt.tz is not None else stamps
    return naive.to_numpy().astype("datetime64[D]").astype(np.int64)


def _as_day_number(value) -> int:
    return int(np.datetime64(pd.Timestamp(value).date(), "D").astype(np.int64))


def _count_upto(sorted_keys: np.ndarray, key: np.ndarray, lo_day: np.ndarray, hi_day: np.ndarray, span: int) -> np.ndarray:
    """Occurrences of ``key`` with day offset in [lo_day, hi_day] via two binary searches"""
    lo = np.searchsorted(sorted_keys, key * span + lo_day, side="left")
    hi = np.searchsorted(sorted_keys, key * span + hi_day, side="right")
    return (hi - lo).astype(np.int64)


class BehaviorIndex:
    """
    Sorted per-key day lists for one content type.

    Every counter reads only days up to and including the queried reference
    day, so feature values never see events after it.
    """

    def __init__(self, events: pd.DataFrame, content_type: ContentType):
        self.content_type = ContentType(content_type)
        days = _day_numbers(events["timestamp"]) if len(events) else np.zeros(0, dtype=np.int64)
        self.day0 = int(days.min()) if days.size else 0
        # room for one day past the last event plus the label day
        self.span = int(days.max() - self.day0 + 3) if days.size else 3

        self.users = np.unique(events["user_id"].astype(str).to_numpy())
        user_codes = np.searchsorted(self.users, events["user_id"].astype(str).to_numpy())

        of_type = (events["content_type"].astype(str) == self.content_type.value).to_numpy()
        self.catalog = np.unique(events.loc[of_type, "content_id"].astype(str).to_numpy())
        click_users = user_codes[of_type]
        click_contents = np.searchsorted(self.catalog, events.loc[of_type, "content_id"].astype(str).to_numpy())
        click_days = days[of_type] - self.day0

        c = max(len(self.catalog), 1)
        self._pair_keys = np.sort((click_users * c + click_contents) * self.span + click_days)
        self._content_keys = np.sort(click_contents * self.span + click_days)

        active = np.unique(user_codes * self.span + (days - self.day0))
        self._active_keys = active
        self.active_users = active // self.span
        self.active_days = active % self.span + self.day0

    def user_code(self, user_id: str) -> Optional[int]:
        pos = int(np.searchsorted(self.users, user_id))
        if pos < len(self.users) and self.users[pos] == user_id:
            return pos
        return None

    def features(self, users: np.ndarray, contents: np.ndarray, days: np.ndarray) -> dict:
        c = max(len(self.catalog), 1)
        offset = days - self.day0
        zero = np.zeros_like(offset)
        return {
            "connection_frequency": _count_upto(
                self._active_keys, users, np.maximum(offset - (CONNECTION_WINDOW - 1), 0), offset, self.span
            ),
            "content_total_clicks": _count_upto(self._content_keys, contents, zero, offset, self.span),
            "user_content_clicks": _count_upto(self._pair_keys, users * c + contents, zero, offset, self.span),
        }

    def labels(self, users: np.ndarray, contents: np.ndarray, days: np.ndarray) -> np.ndarray:
        c = max(len(self.catalog), 1)
        nxt = days - self.day0 + 1
        clicks = _count_upto(self._pair_keys, users * c + contents, nxt, nxt, self.span)
        return (clicks > 0).astype(np.int64)

    def frame(self, users: np.ndarray, days: np.ndarray, with_labels: bool = True) -> pd.DataFrame:
        """Cross (user, day) pairs with the whole catalog and attach features"""
        n_c = len(self.catalog)
        u = np.repeat(users, n_c)
        d = np.repeat(days, n_c)
        c = np.tile(np.arange(n_c, dtype=np.int64), len(users))

        # deterministic order: user_id, content_id, reference date
        order = np.lexsort((d, c, u))
        u, c, d = u[order], c[order], d[order]

        feats = self.features(u, c, d)
        weekday = (d + 3) % 7  # 1970-01-01 was a Thursday
        month = d.astype("datetime64[D]").astype("datetime64[M]").astype(np.int64) % 12

        out = pd.DataFrame(
            {
                "user_id": pd.Categorical.from_codes(u, categories=self.users),
                "content_id": pd.Categorical.from_codes(c, categories=self.catalog),
                "content_type": self.content_type.value,
                "reference_date": d.astype("datetime64[D]").astype("datetime64[ns]"),
                **feats,
                "day": pd.Categorical.from_codes(weekday, categories=WEEKDAY_NAMES),
                "month": pd.Categorical.from_codes(month, categories=MONTH_NAMES),
            }
        )
        out["label"] = self.labels(u, c, d) if with_labels else 0
        return out


def _empty_examples() -> pd.DataFrame:
    return pd.DataFrame({c: pd.Series(dtype=object) for c in EXAMPLE_COLUMNS})


def build_examples(
    events: pd.DataFrame,
    content_type: ContentType,
    as_of_dates: Optional[Sequence[date]] = None,
) -> pd.DataFrame:
    """
    Labeled examples for one content type.

    One row per (user active on d, catalog content) with d in ``as_of_dates``
    (default: every day before the last logged day). Label is 1 iff the user
    clicked the content on d + 1.
    """
    if isinstance(events, EventLog):
        events = events.frame
    index = BehaviorIndex(events, content_type)
    if len(index.catalog) == 0:
        logger.warning("Empty catalog for content type %s; no examples built", ContentType(content_type).value)
        return _empty_examples()

    if as_of_dates is None:
        last = index.day0 + index.span - 3
        wanted = np.unique(index.active_days[index.active_days < last])
    else:
        wanted = np.unique([_as_day_number(d) for d in as_of_dates]).astype(np.int64)
        last = index.day0 + index.span - 3
        if wanted.size and wanted.max() >= last:
            logger.warning("Reference dates on or after the last logged day have no next-day labels")

    keep = np.isin(index.active_days, wanted)
    frame = index.frame(index.active_users[keep], index.active_days[keep])
    logger.info(
        "Built %d %s examples (%d positive) from %d active user-days",
        len(frame), index.content_type.value, int(frame["label"].sum()), int(keep.sum()),
    )
    return frame


def build_candidates(events: pd.DataFrame, content_type: ContentType, user_id: str, as_of: date) -> pd.DataFrame:
    """Features for one user against the full catalog as of a date (labels unset)"""
    if isinstance(events, EventLog):
        events = events.frame
    index = BehaviorIndex(events, content_type)
    day = _as_day_number(as_of)
    code = index.user_code(user_id)
    if code is None:
        # unknown user: no history, every counter is zero except content totals
        users = np.append(index.users, user_id)
        index.users = users
        code = len(users) - 1
    frame = index.frame(np.array([code], dtype=np.int64), np.array([day], dtype=np.int64), with_labels=False)
    return frame


def split(examples: pd.DataFrame, spec: SplitSpec) -> Tuple[pd.DataFrame, pd.DataFrame, pd.DataFrame]:
    """
    Temporal split.

    Test is every example dated ``test_date``; examples dated before the
    cutoff are shuffled with the split seed and divided train/validation.
    Anything else is left out and logged.
    """
    ref = pd.to_datetime(examples["reference_date"])
    test_mask = (ref == pd.Timestamp(spec.test_date)).to_numpy()
    pool_mask = ((ref < pd.Timestamp(spec.train_cutoff_date)).to_numpy()) & ~test_mask

    if not test_mask.any():
        raise DataError(f"No examples dated {spec.test_date.isoformat()} for the test slice")

    pool = np.flatnonzero(pool_mask)
    rng = np.random.default_rng(spec.seed)
    shuffled = pool[rng.permutation(len(pool))]
    n_val = int(round(len(pool) * spec.validation_fraction))
    val_rows = np.sort(shuffled[:n_val])
    train_rows = np.sort(shuffled[n_val:])

    left_out = len(examples) - int(test_mask.sum()) - len(pool)
    if left_out:
        logger.info("Left %d examples between cutoff and test date out of every split", left_out)

    return (
        examples.iloc[train_rows],
        examples.iloc[val_rows],
        examples.iloc[np.flatnonzero(test_mask)],
    )


def downsample_negatives(frame: pd.DataFrame, ratio: float, seed: int) -> pd.DataFrame:
    """Keep every positive and at most ratio x positives uniformly sampled negatives"""
    labels = frame["label"].to_numpy()
    positives = np.flatnonzero(labels == 1)
    negatives = np.flatnonzero(labels == 0)
    if positives.size == 0:
        logger.warning("No positives to balance against; keeping all %d negatives", negatives.size)
        return frame

    budget = min(negatives.size, int(np.floor(ratio * positives.size)))
    rng = np.random.default_rng(seed)
    sampled = rng.choice(negatives, size=budget, replace=False) if budget else np.zeros(0, dtype=np.int64)
    rows = np.sort(np.concatenate([positives, sampled]))
    return frame.iloc[rows]


def catalog_of(events: pd.DataFrame, content_type: ContentType) -> List[str]:
    if isinstance(events, EventLog):
        events = events.frame
    mask = events["content_type"].astype(str) == ContentType(content_type).value
    return sorted(events.loc[mask, "content_id"].astype(str).unique())


def strip_after(events: pd.DataFrame, cutoff: date) -> pd.DataFrame:
    """Events on or before the given day"""
    days = _day_numbers(events["timestamp"])
    return events[days <= _as_day_number(cutoff)]
