"""
Seeded synthetic behavioral logs with planted, recoverable preferences
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from app.core.errors import ConfigError
from app.schemas.config import SynthConfig
from app.schemas.events import ContentType

logger = logging.getLogger(__name__)

LOGS_FILE = "logs.csv"
GROUND_TRUTH_FILE = "ground_truth.csv"
CATALOG_FILE = "catalog.csv"
SECONDS_PER_DAY = 24 * 60 * 60


def _ids(prefix: str, n: int) -> List[str]:
    width = max(len(str(n)), 2)
    return [f"{prefix}_{i:0{width}d}" for i in range(1, n + 1)]


@dataclass
class Catalog:
    """Leaf contents (drugs, chapters), their parents and archetype tags"""
    frame: pd.DataFrame

    def of_type(self, content_type: ContentType) -> pd.DataFrame:
        return self.frame[self.frame["content_type"] == ContentType(content_type).value]

    @property
    def leaves(self) -> pd.DataFrame:
        return self.frame[self.frame["parent_id"] != ""]

    @property
    def parents(self) -> pd.DataFrame:
        return self.frame[self.frame["parent_id"] == ""]


@dataclass
class SynthResult:
    logs: pd.DataFrame
    ground_truth: pd.DataFrame
    catalog: Catalog

    def write(self, directory, force: bool = False) -> Dict[str, Path]:
        """Write the three CSVs; refuses to overwrite without ``force``"""
        directory = Path(directory)
        paths = {
            "logs": directory / LOGS_FILE,
            "ground_truth": directory / GROUND_TRUTH_FILE,
            "catalog": directory / CATALOG_FILE,
        }
        existing = [str(p) for p in paths.values() if p.exists()]
        if existing and not force:
            raise ConfigError(f"Refusing to overwrite {', '.join(existing)} (use --force)")
        directory.mkdir(parents=True, exist_ok=True)
        self.logs.to_csv(paths["logs"], index=False, lineterminator="\n")
        self.ground_truth.to_csv(paths["ground_truth"], index=False, float_format="%.6f", lineterminator="\n")
        self.catalog.frame.to_csv(paths["catalog"], index=False, lineterminator="\n")
        return paths


def _build_catalog(config: SynthConfig, rng: np.random.Generator) -> Catalog:
    """Parents get archetypes; children join a parent and inherit its archetype with the coherence probability"""
    rows = []
    plan = [
        (ContentType.DRUG_FAMILY, "family", config.num_drug_families, ContentType.DRUG, "drug", config.num_drugs),
        (ContentType.VIDEO_MODULE, "module", config.num_video_modules, ContentType.VIDEO_CHAPTER, "chapter", config.num_video_chapters),
    ]
    for parent_type, parent_prefix, n_parents, child_type, child_prefix, n_children in plan:
        parent_ids = _ids(parent_prefix, n_parents)
        parent_arch = rng.integers(config.num_archetypes, size=n_parents)
        # every parent gets at least one child
        owner = np.concatenate([np.arange(n_parents), rng.integers(n_parents, size=n_children - n_parents)])
        coherent = rng.random(n_children) < config.hierarchy_coherence
        child_arch = np.where(coherent, parent_arch[owner], rng.integers(config.num_archetypes, size=n_children))

        for pid, arch in zip(parent_ids, parent_arch):
            rows.append((pid, parent_type.value, "", int(arch)))
        for cid, parent, arch in zip(_ids(child_prefix, n_children), owner, child_arch):
            rows.append((cid, child_type.value, parent_ids[parent], int(arch)))

    frame = pd.DataFrame(rows, columns=["content_id", "content_type", "parent_id", "archetype"])
    return Catalog(frame)


def click_probabilities(
    user_archetypes: np.ndarray,
    content_archetypes: np.ndarray,
    familiar: np.ndarray,
    config: SynthConfig,
) -> np.ndarray:
    """(users, contents) probability of a click on a day the user is online"""
    match = (user_archetypes[:, None] == content_archetypes[None, :]).astype(np.float64)
    affinity = match + config.familiarity_boost * familiar
    return np.clip(config.base_click_prob + config.signal_strength * affinity, 0.0, 1.0)


def parent_probabilities(probs: np.ndarray, catalog: Catalog, leaf_ids: List[str]) -> Dict[str, np.ndarray]:
    """A parent is viewed when any of its children is clicked: 1 - prod(1 - p_child)"""
    leaves = catalog.leaves.set_index("content_id").loc[leaf_ids]
    out: Dict[str, np.ndarray] = {}
    for parent_id in catalog.parents["content_id"]:
        cols = np.flatnonzero((leaves["parent_id"] == parent_id).to_numpy())
        out[parent_id] = 1.0 - np.prod(1.0 - probs[:, cols], axis=1)
    return out


def generate_logs(config: SynthConfig) -> SynthResult:
    """
    Simulate users clicking drugs and video chapters day by day.

    Each user belongs to an archetype, has an activity rate and a few
    familiar drugs and chapters; on a day the user is online every leaf
    content is clicked independently with probability
    base + signal * (archetype match + boost * familiar), capped at 1.
    A leaf click also logs a view of its parent at the same instant.
    """
    if config.num_users < 1:
        raise ConfigError("num_users must be at least 1")
    if min(config.num_drugs, config.num_video_chapters) < 1:
        raise ConfigError("Catalog must not be empty")

    rng = np.random.default_rng(config.seed)
    catalog = _build_catalog(config, rng)
    leaves = catalog.leaves.reset_index(drop=True)
    leaf_ids = leaves["content_id"].tolist()
    leaf_types = leaves["content_type"].to_numpy()
    leaf_parents = leaves["parent_id"].to_numpy()
    parent_type = dict(zip(catalog.parents["content_id"], catalog.parents["content_type"]))
    leaf_parent_types = np.array([parent_type[p] for p in leaf_parents], dtype=object)

    users = _ids("user", config.num_users)
    mix = rng.dirichlet(np.ones(config.num_archetypes))
    user_arch = rng.choice(config.num_archetypes, size=config.num_users, p=mix)
    activity = rng.beta(config.activity_alpha, config.activity_beta, size=config.num_users)

    familiar = np.zeros((config.num_users, len(leaf_ids)))
    habits = [(ContentType.DRUG, config.familiar_drugs), (ContentType.VIDEO_CHAPTER, config.familiar_chapters)]
    for leaf_type, wanted in habits:
        cols = np.flatnonzero(leaf_types == leaf_type.value)
        n_familiar = min(wanted, cols.size)
        if n_familiar == 0:
            continue
        for u in range(config.num_users):
            familiar[u, rng.choice(cols, size=n_familiar, replace=False)] = 1.0

    probs = click_probabilities(user_arch, leaves["archetype"].to_numpy(), familiar, config)

    user_parts, leaf_parts, second_parts = [], [], []
    for day in range(config.num_days):
        online = np.flatnonzero(rng.random(config.num_users) < activity)
        if online.size == 0:
            continue
        clicks = rng.random((online.size, len(leaf_ids))) < probs[online]
        rows, cols = np.nonzero(clicks)
        seconds = rng.integers(0, SECONDS_PER_DAY, size=rows.size)
        user_parts.append(online[rows])
        leaf_parts.append(cols)
        second_parts.append(day * SECONDS_PER_DAY + seconds)

    who = np.concatenate(user_parts) if user_parts else np.zeros(0, dtype=np.int64)
    what = np.concatenate(leaf_parts) if leaf_parts else np.zeros(0, dtype=np.int64)
    when = np.concatenate(second_parts) if second_parts else np.zeros(0, dtype=np.int64)
    start = np.datetime64(config.start_date, "s")
    stamps = np.char.add(np.datetime_as_string(start + when.astype("timedelta64[s]"), unit="s"), "Z")

    user_names = np.array(users, dtype=object)
    leaf_names = np.array(leaf_ids, dtype=object)
    clicked = pd.DataFrame(
        {
            "user_id": user_names[who],
            "content_id": leaf_names[what],
            "content_type": leaf_types[what],
            "timestamp": stamps.astype(object),
        }
    )
    viewed = clicked.assign(content_id=leaf_parents[what], content_type=leaf_parent_types[what])
    logs = pd.concat([clicked, viewed], ignore_index=True)
    logs = logs.sort_values(["timestamp", "user_id", "content_type", "content_id"], kind="mergesort")
    logs = logs.reset_index(drop=True)

    truth = {"user_id": users, "archetype": user_arch, "activity_rate": activity}
    truth.update({cid: probs[:, j] for j, cid in enumerate(leaf_ids)})
    truth.update(parent_probabilities(probs, catalog, leaf_ids))
    ground_truth = pd.DataFrame(truth)

    logger.info(
        "Generated %d events for %d users over %d days (%d leaf contents)",
        len(logs), config.num_users, config.num_days, len(leaf_ids),
    )
    return SynthResult(logs=logs, ground_truth=ground_truth, catalog=catalog)


def load_ground_truth(path) -> Optional[pd.DataFrame]:
    path = Path(path)
    if not path.exists():
        return None
    return pd.read_csv(path, dtype={"user_id": str})


def oracle_scores(ground_truth: pd.DataFrame, user_ids: np.ndarray, content_ids: np.ndarray) -> np.ndarray:
    """
    Expected next-day click probability from ground truth: online rate times click probability.
    Pairs missing from the ground truth score 0.
    """
    truth = ground_truth.set_index("user_id")
    content_cols = [c for c in truth.columns if c not in ("archetype", "activity_rate")]
    matrix = truth[content_cols].to_numpy(dtype=np.float64) * truth["activity_rate"].to_numpy()[:, None]
    row_of = pd.Index(truth.index.astype(str))
    col_of = pd.Index(content_cols)
    rows = row_of.get_indexer(pd.Index(np.asarray(user_ids, dtype=str)))
    cols = col_of.get_indexer(pd.Index(np.asarray(content_ids, dtype=str)))
    scores = np.zeros(len(rows))
    ok = (rows >= 0) & (cols >= 0)
    scores[ok] = matrix[rows[ok], cols[ok]]
    return scores
