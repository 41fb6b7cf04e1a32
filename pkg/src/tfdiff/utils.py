"""Shared utility functions."""

import hashlib
import math
import os
from collections.abc import Iterable

import numpy as np


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    """Create a PCG64 generator for a seed and an optional stream path.

    Streams derived from ``(seed, key, ...)`` are statistically independent,
    so per-item generators can be built in any order or in parallel.

    Args:
        seed: Base seed
        keys: Stream identifiers (e.g. item index)

    Returns:
        Seeded numpy Generator
    """
    return np.random.default_rng(np.random.SeedSequence([seed, *keys]))


def parse_key_values(
    text: str | None, param_name: str
) -> tuple[dict[str, str] | None, str | None]:
    """Parse a ``"k=v,k2=v2"`` string.

    Args:
        text: Comma-separated key=value pairs
        param_name: Parameter name for error messages

    Returns:
        Tuple of (parsed mapping, error message or None)
    """
    if not text:
        return {}, None
    result: dict[str, str] = {}
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        key, sep, value = part.partition("=")
        if not sep or not key.strip() or not value.strip():
            return None, f"Invalid {param_name} entry '{part}': expected key=value"
        result[key.strip()] = value.strip()
    return result, None


def parse_int_list(text: str | None, param_name: str) -> tuple[list[int] | None, str | None]:
    """Parse a comma-separated list of non-negative integers.

    Args:
        text: e.g. ``"0,10,300"``
        param_name: Parameter name for error messages

    Returns:
        Tuple of (parsed integers, error message or None)
    """
    if not text:
        return None, f"{param_name} must not be empty"
    values: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            value = int(part)
        except ValueError as e:
            return None, f"Invalid {param_name} value '{part}': {e}"
        if value < 0:
            return None, f"Invalid {param_name} value '{part}': must be >= 0"
        values.append(value)
    if not values:
        return None, f"{param_name} must not be empty"
    return values, None


def json_float(value: float) -> float | str:
    """Return a JSON-safe float; infinities become ``"inf"``/``"-inf"``."""
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    if math.isnan(value):
        return "nan"
    return value


def worker_count(cap: int | None) -> int:
    """Number of worker threads, bounded by ``cap`` and the CPU count."""
    cpus = os.cpu_count() or 1
    if cap is None:
        return cpus
    return max(1, min(cap, cpus))


def digest_arrays(arrays: Iterable[np.ndarray]) -> str:
    """SHA-256 over the raw bytes of a sequence of arrays (order-sensitive)."""
    h = hashlib.sha256()
    for arr in arrays:
        contiguous = np.ascontiguousarray(arr)
        h.update(str(contiguous.shape).encode())
        h.update(str(contiguous.dtype).encode())
        h.update(contiguous.tobytes())
    return h.hexdigest()
