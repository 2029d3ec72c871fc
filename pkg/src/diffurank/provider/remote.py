"""HTTP client for a remote mask-predictor server.

Wire format (POST ``{base}/v1/mask_logits``)::

    {"template_id": str, "query_text": str,
     "docs": [{"label": str, "text": str}],
     "masked_positions": [int], "filled": [{"pos": int, "label": str}],
     "allowed_tokens": [str]}

The server answers ``{"rows": [[float]]}`` with probabilities, one row per
masked position and one column per allowed token.
"""

from __future__ import annotations

import math
import os
import threading

import numpy as np
import requests

from ..errors import DimensionMismatchError, MalformedResponseError, TransportError, ValidationError
from .base import LogitsResponse, MaskQuery, PromptContext

ENV_URL = "DIFFURANK_REMOTE_URL"
ENDPOINT = "/v1/mask_logits"


def wire_request(ctx: PromptContext, mq: MaskQuery) -> dict:
    return {
        "template_id": ctx.template_id,
        "query_text": ctx.query.text,
        "docs": [{"label": label, "text": doc.text} for label, doc in ctx.tagged_docs],
        "masked_positions": list(mq.masked_positions),
        "filled": [{"pos": p, "label": t} for p, t in mq.filled_slots],
        "allowed_tokens": list(mq.allowed_tokens),
    }


def parse_rows(payload: object, mq: MaskQuery) -> np.ndarray:
    if not isinstance(payload, dict) or "rows" not in payload:
        raise MalformedResponseError("response JSON has no 'rows' field")
    rows = payload["rows"]
    if not isinstance(rows, list) or not all(isinstance(r, list) for r in rows):
        raise MalformedResponseError("'rows' must be a list of lists")
    expected_rows, expected_cols = len(mq.masked_positions), len(mq.allowed_tokens)
    if len(rows) != expected_rows or any(len(r) != expected_cols for r in rows):
        shape = (len(rows), sorted({len(r) for r in rows}))
        raise DimensionMismatchError(
            f"server returned rows {shape}, expected ({expected_rows}, {expected_cols})"
        )
    out = np.empty((expected_rows, expected_cols))
    for i, row in enumerate(rows):
        for j, v in enumerate(row):
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v) or v < 0:
                raise MalformedResponseError(f"rows[{i}][{j}] is not a nonnegative finite number: {v!r}")
            out[i, j] = v
    if expected_cols and not np.all(out.max(axis=1) > 0):
        raise MalformedResponseError("a probability row is all zeros")
    return out


class RemoteProvider:
    """Posts each request to the server; one ``requests.Session`` per thread."""

    def __init__(self, base_url: str | None = None, timeout: float = 30.0) -> None:
        base_url = base_url or os.environ.get(ENV_URL)
        if not base_url:
            raise ValidationError(f"no remote URL given and ${ENV_URL} is unset")
        self.url = base_url.rstrip("/") + ENDPOINT
        self.timeout = timeout
        self._local = threading.local()

    def _session(self) -> requests.Session:
        session = getattr(self._local, "session", None)
        if session is None:
            session = self._local.session = requests.Session()
        return session

    def provide(self, ctx: PromptContext, mq: MaskQuery) -> LogitsResponse:
        try:
            resp = self._session().post(self.url, json=wire_request(ctx, mq), timeout=self.timeout)
        except requests.RequestException as exc:
            raise TransportError(f"POST {self.url} failed: {exc}") from exc
        if resp.status_code != 200:
            raise TransportError(f"POST {self.url} returned HTTP {resp.status_code}")
        try:
            payload = resp.json()
        except ValueError as exc:
            raise MalformedResponseError(f"response is not JSON: {exc}") from exc
        rows = parse_rows(payload, mq)
        return LogitsResponse(rows, {"backend": "remote", "url": self.url})
