"""Dataset directories: CSEQ1 files plus an index JSON."""

import json
import logging
from pathlib import Path
from typing import Any

import numpy as np
from pydantic import ValidationError

from tfdiff.constants import Cseq, Files
from tfdiff.errors import DatasetError, FormatError
from tfdiff.models import ConditionLabel, DatasetEntry, DatasetIndex, LabeledSequence
from tfdiff.signal.cseq import read_cseq, write_cseq
from tfdiff.signal.sequence import preprocess
from tfdiff.utils import digest_arrays

logger = logging.getLogger(__name__)


def write_dataset(
    dataset: list[LabeledSequence], out_dir: str | Path, spec: dict[str, Any] | None = None
) -> Path:
    """Write one CSEQ1 file per item and ``index.json``.

    Returns:
        Path of the index file
    """
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, item in enumerate(dataset):
        name = f"seq_{i:05d}{Cseq.SUFFIX}"
        write_cseq(root / name, item.sequence, {"condition": item.condition.values, "id": item.item_id})
        entries.append(DatasetEntry(path=name, condition=item.condition.values))
    index = DatasetIndex(entries=entries, spec=spec)
    index_path = root / Files.DATASET_INDEX
    index_path.write_text(index.model_dump_json(indent=2), encoding="utf-8")
    logger.info(f"Wrote {len(entries)} sequences to {root}")
    return index_path


def read_index(index_path: str | Path) -> DatasetIndex:
    """Parse a dataset index.

    Raises:
        FileNotFoundError: If the index is missing
        DatasetError: If it is not a valid index
    """
    text = Path(index_path).read_text(encoding="utf-8")
    try:
        return DatasetIndex.model_validate_json(text)
    except ValidationError as e:
        raise DatasetError(f"Invalid dataset index {index_path}: {e}") from e


def load_dataset(index_path: str | Path, length: int | None = None) -> list[LabeledSequence]:
    """Load every sequence listed in an index.

    Paths are resolved relative to the index file. With ``length`` set, each
    sequence is resampled to it and power-normalized.

    Raises:
        DatasetError: If the index is empty or a file cannot be decoded
    """
    path = Path(index_path)
    index = read_index(path)
    if not index.entries:
        raise DatasetError(f"Dataset {path} is empty")
    items = []
    for entry in index.entries:
        file_path = (path.parent / entry.path).resolve()
        try:
            seq, _ = read_cseq(file_path)
        except (FileNotFoundError, FormatError) as e:
            raise DatasetError(f"Cannot read dataset entry {entry.path}: {e}") from e
        if length is not None:
            seq = preprocess(seq, length)
        items.append(
            LabeledSequence(
                sequence=seq, condition=ConditionLabel(values=entry.condition), item_id=entry.path
            )
        )
    logger.info(f"Loaded {len(items)} sequences from {path}")
    return items


def dataset_digest(dataset: list[LabeledSequence]) -> str:
    """Order-sensitive digest of samples and labels."""
    labels = json.dumps([item.condition.key() for item in dataset]).encode("utf-8")
    return digest_arrays([np.frombuffer(labels, dtype=np.uint8), *(i.sequence.data for i in dataset)])


def condition_vocab(dataset: list[LabeledSequence]) -> dict[str, list[str]]:
    """Sorted distinct values per condition field.

    Raises:
        DatasetError: If items disagree on the set of condition fields
    """
    fields = {tuple(sorted(item.condition.values)) for item in dataset}
    if len(fields) > 1:
        raise DatasetError(f"Dataset items use different condition fields: {sorted(fields)}")
    vocab: dict[str, set[str]] = {}
    for item in dataset:
        for field, value in item.condition.values.items():
            vocab.setdefault(field, set()).add(value)
    return {field: sorted(values) for field, values in sorted(vocab.items())}
