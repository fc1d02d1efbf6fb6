"""Text-attributed graphs: loading, validation, subgraphs, smoothing, ego sampling."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

FEATURES_MAGIC = b"TAGF"
FEATURES_VERSION = 1


class TagFormatError(ValueError):
    """Raised when a dataset directory violates the on-disk format."""


@dataclass(frozen=True)
class TextAttributedGraph:
    """Undirected graph whose nodes carry raw text, a feature row, and a class label.

    Edges are canonical (min, max) pairs, deduplicated and lexicographically
    sorted. Instances are immutable after construction and safe to share
    across workers.
    """

    features: np.ndarray  # (n, d) float32
    texts: tuple[str, ...]
    labels: np.ndarray  # (n,) int64
    class_names: tuple[str, ...]
    edges: np.ndarray  # (m, 2) int64, canonicalized

    def __post_init__(self):
        self.features.setflags(write=False)
        self.labels.setflags(write=False)
        self.edges.setflags(write=False)

    @property
    def node_count(self) -> int:
        return len(self.texts)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def edge_count(self) -> int:
        return self.edges.shape[0]

    def neighbor_lists(self) -> list[np.ndarray]:
        """Sorted neighbor array per node (self-loops appear as own id)."""
        n = self.node_count
        nbrs: list[list[int]] = [[] for _ in range(n)]
        for a, b in self.edges:
            nbrs[a].append(int(b))
            if a != b:
                nbrs[b].append(int(a))
        return [np.array(sorted(lst), dtype=np.int64) for lst in nbrs]


@dataclass(frozen=True)
class SparseAdjacency:
    """CSR operator with symmetric (undirected) semantics."""

    indptr: np.ndarray  # (n+1,) int64
    indices: np.ndarray  # (nnz,) int64, strictly increasing within each row
    values: np.ndarray  # (nnz,) float64

    def __post_init__(self):
        self.indptr.setflags(write=False)
        self.indices.setflags(write=False)
        self.values.setflags(write=False)

    @property
    def shape(self) -> tuple[int, int]:
        n = len(self.indptr) - 1
        return (n, n)

    def to_scipy(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.values, self.indices, self.indptr), shape=self.shape)

    def to_dense(self) -> np.ndarray:
        return self.to_scipy().toarray()


@dataclass(frozen=True)
class EgoGraph:
    """Seeded hop-limited neighborhood sample around a center node."""

    center: int
    hop_nodes: tuple[tuple[int, ...], ...]
    hop_texts: tuple[tuple[str, ...], ...] = field(default=())
    center_text: str = ""
    hop_label_names: tuple[tuple[str, ...], ...] = field(default=())


def canonicalize_edges(edges: np.ndarray, node_count: int) -> tuple[np.ndarray, int]:
    """Return ((min,max)-ordered, deduped, sorted) edges and the duplicate count."""
    if edges.size == 0:
        return np.zeros((0, 2), dtype=np.int64), 0
    edges = np.asarray(edges, dtype=np.int64)
    if edges.ndim != 2 or edges.shape[1] != 2:
        raise TagFormatError("edge array must have shape (m, 2)")
    if edges.min() < 0 or edges.max() >= node_count:
        bad = int(np.argmax((edges < 0).any(axis=1) | (edges >= node_count).any(axis=1)))
        raise TagFormatError(f"edge endpoint out of range at record {bad}")
    lo = edges.min(axis=1)
    hi = edges.max(axis=1)
    canon = np.unique(np.stack([lo, hi], axis=1), axis=0)
    return canon, edges.shape[0] - canon.shape[0]


def make_graph(
    features: np.ndarray,
    texts: list[str] | tuple[str, ...],
    labels: np.ndarray,
    class_names: list[str] | tuple[str, ...],
    edges: np.ndarray,
) -> TextAttributedGraph:
    """Validate invariants and build a graph (edges are canonicalized here)."""
    features = np.ascontiguousarray(features, dtype=np.float32)
    labels = np.asarray(labels, dtype=np.int64)
    n = len(texts)
    if features.ndim != 2 or features.shape[0] != n:
        raise TagFormatError("feature-count mismatch")
    if labels.shape != (n,):
        raise TagFormatError("label-count mismatch")
    if n > 0 and (labels.min() < 0 or labels.max() >= len(class_names)):
        bad = int(np.argmax((labels < 0) | (labels >= len(class_names))))
        raise TagFormatError(f"label out of range at record {bad}")
    canon, _ = canonicalize_edges(np.asarray(edges), n)
    return TextAttributedGraph(
        features=features,
        texts=tuple(texts),
        labels=labels,
        class_names=tuple(class_names),
        edges=canon,
    )


# ---------------------------------------------------------------------------
# Dataset directory format:
#   nodes.jsonl       one {"id": int, "text": str, "label": int} per line
#   edges.tsv         two tab-separated ints per line
#   class_names.json  array of strings
#   features.bin      "TAGF" | u32 version | u64 rows | u64 cols | f32 LE row-major
# ---------------------------------------------------------------------------


@dataclass
class LoadReport:
    node_count: int = 0
    edge_count: int = 0
    duplicate_edges: int = 0
    self_loops: int = 0


def load_tag_with_report(directory) -> tuple[TextAttributedGraph, LoadReport]:
    d = Path(directory)
    for name in ("nodes.jsonl", "edges.tsv", "class_names.json", "features.bin"):
        if not (d / name).exists():
            raise TagFormatError(f"missing file: {d / name}")

    texts: list[str] = []
    labels: list[int] = []
    with open(d / "nodes.jsonl", encoding="utf-8") as fh:
        for i, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                node_id, text, label = int(rec["id"]), str(rec["text"]), int(rec["label"])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise TagFormatError(f"nodes.jsonl: malformed record {i}: {exc}") from exc
            if node_id != len(texts):
                raise TagFormatError(f"nodes.jsonl: non-contiguous id at record {i}")
            texts.append(text)
            labels.append(label)
    n = len(texts)

    raw_edges = []
    with open(d / "edges.tsv", encoding="utf-8") as fh:
        for i, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise TagFormatError(f"edges.tsv: malformed record {i}")
            try:
                a, b = int(parts[0]), int(parts[1])
            except ValueError as exc:
                raise TagFormatError(f"edges.tsv: malformed record {i}") from exc
            if not (0 <= a < n and 0 <= b < n):
                raise TagFormatError(f"edges.tsv: edge endpoint out of range at record {i}")
            raw_edges.append((a, b))
    edges = np.array(raw_edges, dtype=np.int64) if raw_edges else np.zeros((0, 2), np.int64)

    with open(d / "class_names.json", encoding="utf-8") as fh:
        class_names = json.load(fh)
    if not isinstance(class_names, list) or not all(isinstance(c, str) for c in class_names):
        raise TagFormatError("class_names.json: expected an array of strings")

    features = read_features_bin(d / "features.bin", expected_rows=n)

    canon, dupes = canonicalize_edges(edges, n) if n else (np.zeros((0, 2), np.int64), 0)
    graph = make_graph(features, texts, np.array(labels, np.int64), class_names, canon)
    report = LoadReport(
        node_count=n,
        edge_count=graph.edge_count,
        duplicate_edges=dupes,
        self_loops=int((graph.edges[:, 0] == graph.edges[:, 1]).sum()),
    )
    return graph, report


def load_tag(directory) -> TextAttributedGraph:
    """Load and fully validate a dataset directory."""
    return load_tag_with_report(directory)[0]


def read_features_bin(path, expected_rows: int) -> np.ndarray:
    """Parse a TAGF matrix file, checking header and row count."""
    path = Path(path)
    data = path.read_bytes()
    header = struct.calcsize("<4sIQQ")
    if len(data) < header:
        raise TagFormatError(f"{path}: malformed binary header (truncated)")
    magic, version, rows, cols = struct.unpack_from("<4sIQQ", data, 0)
    if magic != FEATURES_MAGIC:
        raise TagFormatError(f"{path}: malformed binary header (bad magic {magic!r})")
    if version != FEATURES_VERSION:
        raise TagFormatError(f"{path}: unsupported version {version}")
    if rows != expected_rows:
        raise TagFormatError(f"{path}: feature-count mismatch ({rows} rows for {expected_rows} nodes)")
    expected_len = header + rows * cols * 4
    if len(data) != expected_len:
        raise TagFormatError(f"{path}: payload length {len(data)} != expected {expected_len}")
    flat = np.frombuffer(data, dtype="<f4", offset=header)
    return flat.reshape(rows, cols).astype(np.float32)


def save_tag(g: TextAttributedGraph, directory) -> None:
    """Write a graph as a dataset directory (byte-stable for identical graphs)."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    with open(d / "nodes.jsonl", "w", encoding="utf-8") as fh:
        for i, text in enumerate(g.texts):
            fh.write(json.dumps({"id": i, "text": text, "label": int(g.labels[i])},
                                ensure_ascii=False, sort_keys=True) + "\n")
    with open(d / "edges.tsv", "w", encoding="utf-8") as fh:
        for a, b in g.edges:
            fh.write(f"{a}\t{b}\n")
    with open(d / "class_names.json", "w", encoding="utf-8") as fh:
        json.dump(list(g.class_names), fh, ensure_ascii=False)
    with open(d / "features.bin", "wb") as fh:
        rows, cols = g.features.shape
        fh.write(struct.pack("<4sIQQ", FEATURES_MAGIC, FEATURES_VERSION, rows, cols))
        fh.write(np.ascontiguousarray(g.features, dtype="<f4").tobytes())


# ---------------------------------------------------------------------------
# Structure operations
# ---------------------------------------------------------------------------


def induced_subgraph(
    g: TextAttributedGraph, nodes
) -> tuple[TextAttributedGraph, np.ndarray]:
    """Subgraph on `nodes` with only fully-internal edges.

    Returns the re-indexed graph and the id-remap table: an array where entry
    `local` holds the original node id. Node order is ascending original id.
    """
    keep = np.unique(np.asarray(list(nodes), dtype=np.int64))
    if keep.size and (keep.min() < 0 or keep.max() >= g.node_count):
        raise ValueError("node id out of range")
    local_of = np.full(g.node_count, -1, dtype=np.int64)
    local_of[keep] = np.arange(keep.size)
    if g.edges.size:
        mask = (local_of[g.edges[:, 0]] >= 0) & (local_of[g.edges[:, 1]] >= 0)
        sub_edges = local_of[g.edges[mask]]
    else:
        sub_edges = np.zeros((0, 2), np.int64)
    sub = make_graph(
        g.features[keep],
        [g.texts[i] for i in keep],
        g.labels[keep],
        g.class_names,
        sub_edges,
    )
    return sub, keep


def degrees(g: TextAttributedGraph, self_loops: bool = True) -> np.ndarray:
    """Node degrees of the adjacency, optionally augmented with self-loops."""
    deg = np.zeros(g.node_count, dtype=np.float64)
    for a, b in g.edges:
        deg[a] += 1.0
        if a != b:
            deg[b] += 1.0
    if self_loops:
        deg += 1.0
    return deg


def _adjacency_coo(g: TextAttributedGraph, self_loops: bool) -> sp.coo_matrix:
    n = g.node_count
    if g.edges.size:
        a, b = g.edges[:, 0], g.edges[:, 1]
        off = a != b
        rows = np.concatenate([a, b[off]])
        cols = np.concatenate([b, a[off]])
        vals = np.ones(rows.size, dtype=np.float64)
    else:
        rows = np.zeros(0, np.int64)
        cols = np.zeros(0, np.int64)
        vals = np.zeros(0, np.float64)
    if self_loops:
        rows = np.concatenate([rows, np.arange(n)])
        cols = np.concatenate([cols, np.arange(n)])
        vals = np.concatenate([vals, np.ones(n)])
    return sp.coo_matrix((vals, (rows, cols)), shape=(n, n))


def _csr_to_sparse_adjacency(m: sp.csr_matrix) -> SparseAdjacency:
    m = m.tocsr()
    m.sum_duplicates()
    m.sort_indices()
    return SparseAdjacency(
        indptr=m.indptr.astype(np.int64),
        indices=m.indices.astype(np.int64),
        values=m.data.astype(np.float64),
    )


def gcn_normalized_adjacency(g: TextAttributedGraph) -> SparseAdjacency:
    """S = D^{-1/2} (A + I) D^{-1/2}, degrees taken from A + I.

    Self-loops keep isolated nodes well-defined; the operator is symmetric
    with spectral radius <= 1.
    """
    ahat = _adjacency_coo(g, self_loops=True).tocsr()
    deg = np.asarray(ahat.sum(axis=1)).ravel()
    dinv = 1.0 / np.sqrt(deg)
    s = sp.diags(dinv) @ ahat @ sp.diags(dinv)
    return _csr_to_sparse_adjacency(s.tocsr())


def smoothing_operator(
    g: TextAttributedGraph, weighting: str = "laplacian", self_loops: bool = True
) -> SparseAdjacency:
    """Propagation operator used by laplacian_smooth.

    laplacian:  S = I - D^{-1/2} L D^{-1/2} = D^{-1/2} A_hat D^{-1/2}
    plain-mean: S = D^{-1} A_hat  (row-normalized adjacency)

    Degrees come from A_hat = A + I when `self_loops` is set; rows of
    isolated nodes without self-loops are zero.
    """
    if weighting not in ("laplacian", "plain-mean"):
        raise ValueError(f"unknown weighting {weighting!r}")
    ahat = _adjacency_coo(g, self_loops=self_loops).tocsr()
    deg = np.asarray(ahat.sum(axis=1)).ravel()
    with np.errstate(divide="ignore"):
        dinv = np.where(deg > 0, 1.0 / deg, 0.0)
        dinv_sqrt = np.where(deg > 0, 1.0 / np.sqrt(deg), 0.0)
    if weighting == "laplacian":
        s = sp.diags(dinv_sqrt) @ ahat @ sp.diags(dinv_sqrt)
    else:
        s = sp.diags(dinv) @ ahat
    return _csr_to_sparse_adjacency(s.tocsr())


def laplacian_smooth(
    X: np.ndarray,
    g: TextAttributedGraph,
    k: int,
    weighting: str = "laplacian",
    self_loops: bool = True,
) -> np.ndarray:
    """Z = S^k X. k=0 returns X unchanged (as float64) for both weightings."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] != g.node_count:
        raise ValueError(f"feature rows {X.shape[0]} != node count {g.node_count}")
    if k < 0:
        raise ValueError("k must be >= 0")
    if k == 0:
        return X.copy()
    s = smoothing_operator(g, weighting, self_loops).to_scipy()
    z = X
    for _ in range(k):
        z = s @ z
    return np.asarray(z)


def sample_ego_graph(
    g: TextAttributedGraph, v: int, fanouts, seed: int
) -> EgoGraph:
    """Breadth-first seeded neighborhood sample without replacement.

    Hop h holds at most fanouts[h] previously unvisited neighbors of hop h-1
    (hop -1 being the center). Deterministic for fixed (g, v, fanouts, seed).
    """
    if not (0 <= v < g.node_count):
        raise ValueError(f"invalid node id {v}")
    fanouts = list(fanouts)
    if not fanouts:
        raise ValueError("fanouts must be non-empty")
    nbrs = g.neighbor_lists()
    rng = np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, v])
    visited = {v}
    frontier = [v]
    hops: list[tuple[int, ...]] = []
    for cap in fanouts:
        candidates = sorted({int(u) for w in frontier for u in nbrs[w]} - visited)
        if len(candidates) > cap:
            picked_idx = rng.choice(len(candidates), size=cap, replace=False)
            picked = [candidates[i] for i in picked_idx]
        else:
            picked = candidates
        hops.append(tuple(picked))
        visited.update(picked)
        frontier = picked
    return EgoGraph(
        center=v,
        hop_nodes=tuple(hops),
        hop_texts=tuple(tuple(g.texts[u] for u in hop) for hop in hops),
        center_text=g.texts[v],
        hop_label_names=tuple(
            tuple(g.class_names[g.labels[u]] for u in hop) for hop in hops
        ),
    )
