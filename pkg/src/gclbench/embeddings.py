"""Node-embedding providers (precomputed file or HTTP service) with a cache.

The HTTP source speaks the common embeddings wire format: POST
{endpoint}/embeddings with {"model": str, "input": [str, ...]} and a bearer
token from EMBEDDINGS_API_KEY; responses carry {"data": [{"index", "embedding"}]}.
Vectors are float32 end to end so cached and fresh results are bit-identical.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import struct
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import requests

from .graph import read_features_bin

log = logging.getLogger(__name__)

CACHE_KEY_BYTES = 32


class EmbeddingProviderError(RuntimeError):
    pass


@dataclass
class FileSource:
    """Precomputed embeddings: a features.bin matrix plus a node-id index."""

    matrix_path: str
    index_path: str

    kind = "file"

    def __post_init__(self):
        index = json.loads(Path(self.index_path).read_text(encoding="utf-8"))
        self._row_of = {int(node): row for row, node in enumerate(index)}
        self._matrix = read_features_bin(Path(self.matrix_path), expected_rows=len(index))

    @property
    def source_id(self) -> str:
        return f"file:{self.matrix_path}"

    @property
    def model(self) -> str:
        return ""

    def embed_nodes(self, node_ids) -> np.ndarray:
        rows = []
        for n in node_ids:
            if int(n) not in self._row_of:
                raise EmbeddingProviderError(f"node {n} missing from embedding index")
            rows.append(self._row_of[int(n)])
        return self._matrix[rows].astype(np.float32)


@dataclass
class HttpSource:
    """Batched, retried client for an embeddings endpoint."""

    endpoint: str
    model: str
    batch_size: int = 16
    max_in_flight: int = 2
    retries: int = 3
    backoff: float = 0.5
    timeout: float = 30.0

    kind = "http"

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")

    @property
    def source_id(self) -> str:
        return f"http:{self.endpoint}"

    def _post_batch(self, batch: list[str]) -> np.ndarray:
        url = self.endpoint.rstrip("/") + "/embeddings"
        headers = {"Content-Type": "application/json"}
        token = os.environ.get("EMBEDDINGS_API_KEY")
        if token:
            headers["Authorization"] = f"Bearer {token}"
        body = {"model": self.model, "input": batch}
        last_err = None
        for attempt in range(self.retries):
            try:
                resp = requests.post(url, json=body, headers=headers, timeout=self.timeout)
                if 200 <= resp.status_code < 300:
                    return self._parse(resp.json(), len(batch))
                last_err = EmbeddingProviderError(
                    f"embedding endpoint returned status {resp.status_code}"
                )
            except requests.RequestException as exc:
                last_err = EmbeddingProviderError(f"embedding request failed: {exc}")
            if attempt + 1 < self.retries:
                time.sleep(self.backoff * (2**attempt))
        raise last_err

    @staticmethod
    def _parse(payload: dict, expected: int) -> np.ndarray:
        data = payload.get("data")
        if not isinstance(data, list) or len(data) != expected:
            raise EmbeddingProviderError("malformed embedding response")
        rows: list[np.ndarray | None] = [None] * expected
        for item in data:
            rows[int(item["index"])] = np.asarray(item["embedding"], dtype=np.float32)
        if any(r is None for r in rows):
            raise EmbeddingProviderError("embedding response missing indices")
        dims = {r.shape[0] for r in rows}
        if len(dims) != 1:
            raise EmbeddingProviderError("dimension drift within one response")
        return np.stack(rows)

    def embed(self, texts: list[str]) -> np.ndarray:
        """Embed texts in request order; batches may run concurrently."""
        if not texts:
            return np.zeros((0, 0), dtype=np.float32)
        batches = [texts[i:i + self.batch_size] for i in range(0, len(texts), self.batch_size)]
        if self.max_in_flight > 1 and len(batches) > 1:
            with ThreadPoolExecutor(max_workers=self.max_in_flight) as pool:
                parts = list(pool.map(self._post_batch, batches))
        else:
            parts = [self._post_batch(b) for b in batches]
        dims = {p.shape[1] for p in parts}
        if len(dims) != 1:
            raise EmbeddingProviderError(f"dimension drift across batches: {sorted(dims)}")
        return np.concatenate(parts, axis=0)


def embed_texts(src, texts: list[str]) -> np.ndarray:
    """Embedding matrix for a text list, one row per input, via any source."""
    if src.kind == "http":
        return src.embed(list(texts))
    raise EmbeddingProviderError(
        "file sources are keyed by node id; use embed_nodes or get_or_embed"
    )


# ---------------------------------------------------------------------------
# Persistent cache: repeated records [32-byte key][u32 dim][dim * f32 LE]
# ---------------------------------------------------------------------------


def cache_key(source_id: str, model: str, prompt: str) -> bytes:
    h = hashlib.sha256()
    for part in (source_id.encode(), model.encode(), prompt.encode()):
        h.update(struct.pack("<Q", len(part)))
        h.update(part)
    return h.digest()


class EmbeddingCache:
    """Append-only on-disk store; corrupt files are reported and rebuilt."""

    def __init__(self, path):
        self.path = Path(path)
        self._entries: dict[bytes, np.ndarray] = {}
        self._load()

    def _load(self) -> None:
        if not self.path.exists():
            return
        data = self.path.read_bytes()
        off = 0
        entries: dict[bytes, np.ndarray] = {}
        while off < len(data):
            if off + CACHE_KEY_BYTES + 4 > len(data):
                self._rebuild("truncated record header")
                return
            key = data[off:off + CACHE_KEY_BYTES]
            off += CACHE_KEY_BYTES
            (dim,) = struct.unpack_from("<I", data, off)
            off += 4
            if off + dim * 4 > len(data):
                self._rebuild("truncated record payload")
                return
            entries[key] = np.frombuffer(data, dtype="<f4", count=dim, offset=off).copy()
            off += dim * 4
        self._entries = entries

    def _rebuild(self, reason: str) -> None:
        log.warning("embedding cache %s corrupt (%s); rebuilding", self.path, reason)
        self._entries = {}
        self.path.unlink(missing_ok=True)

    def get(self, key: bytes) -> np.ndarray | None:
        return self._entries.get(key)

    def put(self, key: bytes, vec: np.ndarray) -> None:
        vec = np.ascontiguousarray(vec, dtype="<f4")
        self._entries[key] = vec
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "ab") as fh:
            fh.write(key)
            fh.write(struct.pack("<I", vec.size))
            fh.write(vec.tobytes())

    def __len__(self) -> int:
        return len(self._entries)


def get_or_embed(src, node_ids, prompt_renderer, cache_path) -> np.ndarray:
    """Embedding rows for node ids, served from cache where possible.

    Keys hash (source id, model name, exact prompt bytes); identical prompts
    share one provider slot. Misses are fetched in input order and appended.
    """
    node_ids = [int(n) for n in node_ids]
    cache = EmbeddingCache(cache_path)
    prompts = [prompt_renderer(n) for n in node_ids]
    model = getattr(src, "model", "")
    keys = [cache_key(src.source_id, model, p) for p in prompts]

    missing_keys: list[bytes] = []
    missing_prompt: dict[bytes, str] = {}
    missing_node: dict[bytes, int] = {}
    for n, p, k in zip(node_ids, prompts, keys):
        if cache.get(k) is None and k not in missing_prompt:
            missing_keys.append(k)
            missing_prompt[k] = p
            missing_node[k] = n

    if missing_keys:
        if src.kind == "http":
            fetched = src.embed([missing_prompt[k] for k in missing_keys])
        else:
            fetched = src.embed_nodes([missing_node[k] for k in missing_keys])
        for k, row in zip(missing_keys, fetched):
            cache.put(k, row)

    rows = [cache.get(k) for k in keys]
    dims = {r.shape[0] for r in rows}
    if len(dims) != 1:
        raise EmbeddingProviderError(f"dimension drift across cached vectors: {sorted(dims)}")
    return np.stack(rows)
