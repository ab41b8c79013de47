"""Recorded-response stores for external clients, keyed by request hashes."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .core import Waveform


class FixtureError(RuntimeError):
    """Missing or malformed fixture data."""


def request_key(payload: dict) -> str:
    """Stable hex key for a JSON-serializable request description."""
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def audio_payload(w: Waveform) -> dict:
    """Request description of a waveform: rate plus a content digest."""
    digest = hashlib.sha256(np.asarray(w.samples, dtype="<f8").tobytes()).hexdigest()
    return {"sample_rate": w.sample_rate, "samples_sha256": digest}


class FixtureStore:
    """JSONL file of {"key": ..., "response": ...} records."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.responses: dict[str, str] = {}
        try:
            text = self.path.read_text()
        except OSError as e:
            raise FixtureError(f"cannot read fixture file {self.path}: {e}")
        for i, line in enumerate(text.splitlines()):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                self.responses[str(row["key"])] = str(row["response"])
            except (json.JSONDecodeError, KeyError, TypeError) as e:
                raise FixtureError(f"{self.path}:{i + 1}: bad fixture record: {e}")

    def lookup(self, payload: dict) -> str:
        key = request_key(payload)
        if key not in self.responses:
            raise FixtureError(f"no recorded response for request {key} in {self.path}")
        return self.responses[key]


def write_fixtures(path: str | Path, records: list[tuple[dict, str]]) -> None:
    """Record (request payload, response) pairs for later FixtureStore use."""
    lines = [
        json.dumps({"key": request_key(payload), "response": response}, sort_keys=True)
        for payload, response in records
    ]
    Path(path).write_text("\n".join(lines) + "\n" if lines else "")
