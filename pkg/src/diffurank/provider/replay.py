"""JSON-lines fixture store for provider responses."""

from __future__ import annotations

import json
import os
import tempfile
import threading
from pathlib import Path

import numpy as np

from ..errors import CacheMissError, ParseError
from .base import LogitsResponse, MaskPredictor, MaskQuery, PromptContext, payload_key, replay_key, request_payload


class ReplayProvider:
    """Serves recorded responses keyed by a digest of (context, mask query).

    Records are held in memory and the whole file is rewritten on each
    :meth:`record`, so re-recording a key replaces its line in place.
    """

    def __init__(self, path: str | os.PathLike, *, create: bool = False) -> None:
        self.path = Path(path)
        self._records: dict[str, dict] = {}
        self._lock = threading.Lock()
        if self.path.exists():
            self._load()
        elif not create:
            raise FileNotFoundError(f"replay file {self.path} does not exist")

    def _load(self) -> None:
        with self.path.open(encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                    key = rec["key"]
                    rows = rec["rows"]
                except (json.JSONDecodeError, KeyError, TypeError) as exc:
                    raise ParseError(self.path, lineno, f"bad replay record: {exc}") from None
                if not isinstance(rows, list):
                    raise ParseError(self.path, lineno, "rows must be a list")
                self._records[key] = rec

    def __len__(self) -> int:
        return len(self._records)

    def keys(self) -> list[str]:
        return list(self._records)

    def request_of(self, key: str) -> dict:
        return dict(self._records[key].get("request", {}))

    def problems(self) -> list[str]:
        """Records whose key or row shape disagrees with the stored request."""
        out = []
        for key, rec in self._records.items():
            req = rec.get("request")
            if req is None:
                out.append(f"{key[:16]}: no request stored")
                continue
            if payload_key(req) != key:
                out.append(f"{key[:16]}: key does not match request digest")
            shape = (len(req.get("masked_positions", [])), len(req.get("allowed_tokens", [])))
            rows = np.asarray(rec["rows"], dtype=np.float64)
            if rows.shape != shape:
                out.append(f"{key[:16]}: rows shaped {rows.shape}, request implies {shape}")
        return out

    def provide(self, ctx: PromptContext, mq: MaskQuery) -> LogitsResponse:
        key = replay_key(ctx, mq)
        rec = self._records.get(key)
        if rec is None:
            raise CacheMissError(f"no recorded response for key {key[:16]}...")
        rows = np.array(rec["rows"], dtype=np.float64).reshape(
            len(mq.masked_positions), len(mq.allowed_tokens)
        )
        meta = dict(rec.get("meta", {}))
        meta["replay_key"] = key
        return LogitsResponse(rows, meta)

    def record(self, ctx: PromptContext, mq: MaskQuery, resp: LogitsResponse) -> str:
        key = replay_key(ctx, mq)
        rec = {
            "key": key,
            "request": request_payload(ctx, mq),
            "rows": resp.rows.tolist(),
            "meta": {k: v for k, v in resp.provider_meta.items() if k != "replay_key"},
        }
        with self._lock:
            self._records[key] = rec
            self._flush()
        return key

    def _flush(self) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=self.path.parent, prefix=".replay-")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                for rec in self._records.values():
                    fh.write(json.dumps(rec, ensure_ascii=False, separators=(",", ":")) + "\n")
            os.replace(tmp, self.path)
        except BaseException:
            os.unlink(tmp)
            raise


class RecordingProvider:
    """Forwards to ``inner`` and stores every response in ``store``."""

    def __init__(self, inner: MaskPredictor, store: ReplayProvider) -> None:
        self.inner = inner
        self.store = store

    def provide(self, ctx: PromptContext, mq: MaskQuery) -> LogitsResponse:
        resp = self.inner.provide(ctx, mq)
        self.store.record(ctx, mq, resp)
        return resp
