"""Prototype classifiers, task prototypes with task-ID routing, and calibration.

Class prototypes are unweighted means over (seeded subsets of) per-class
embeddings, written once in the session their class appears and never
updated afterwards; classification scores each embedding by scaled cosine
similarity against every stored prototype.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .graph import TextAttributedGraph, degrees, laplacian_smooth


@dataclass
class PrototypeBank:
    """class id -> prototype vector, with session provenance and temperature."""

    temperature: float = 1.0
    prototypes: dict[int, np.ndarray] = field(default_factory=dict)
    source_session: dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError("temperature must be > 0")

    @property
    def dim(self) -> int | None:
        for v in self.prototypes.values():
            return v.shape[0]
        return None

    @property
    def class_ids(self) -> list[int]:
        return sorted(self.prototypes)

    def subset(self, class_ids) -> "PrototypeBank":
        """Read-only restriction to the given classes (shared vectors)."""
        keep = set(int(c) for c in class_ids)
        return PrototypeBank(
            temperature=self.temperature,
            prototypes={c: v for c, v in self.prototypes.items() if c in keep},
            source_session={c: s for c, s in self.source_session.items() if c in keep},
        )


def build_prototypes(
    bank: PrototypeBank,
    embeddings: np.ndarray,
    labels: np.ndarray,
    sample_num: int,
    seed: int,
    session: int = 0,
) -> PrototypeBank:
    """Add one mean prototype per class present in `labels`.

    Each class uses a seeded sample of at most sample_num member rows.
    Classes already in the bank are never overwritten (training-free
    guarantee across sessions).
    """
    if sample_num < 1:
        raise ValueError("sample_num must be >= 1")
    embeddings = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if embeddings.shape[0] != labels.shape[0]:
        raise ValueError("one label per embedding row required")
    if bank.dim is not None and embeddings.shape[1] != bank.dim:
        raise ValueError("embedding dim does not match bank")
    rng = np.random.default_rng(seed)
    for c in sorted(set(int(x) for x in labels)):
        members = np.flatnonzero(labels == c)
        if members.size == 0:
            raise ValueError(f"class {c} has no members")
        if c in bank.prototypes:
            continue
        if members.size > sample_num:
            members = np.sort(rng.choice(members, size=sample_num, replace=False))
        bank.prototypes[c] = embeddings[members].mean(axis=0)
        bank.source_session[c] = session
    return bank


def _cosine_row(h: np.ndarray, protos: np.ndarray) -> np.ndarray:
    hn = np.linalg.norm(h)
    pn = np.linalg.norm(protos, axis=1)
    scores = np.zeros(protos.shape[0])
    if hn == 0.0:
        return scores
    ok = pn > 0
    scores[ok] = (protos[ok] @ h) / (pn[ok] * hn)
    return scores


def classify(bank: PrototypeBank, h: np.ndarray) -> tuple[dict[int, float], int]:
    """Scores tau * cos(h, c_j) per class and the argmax prediction.

    Ties break toward the lowest class id; zero-norm vectors score 0.
    """
    if not bank.prototypes:
        raise ValueError("empty prototype bank")
    h = np.asarray(h, dtype=np.float64)
    ids = bank.class_ids
    protos = np.stack([bank.prototypes[c] for c in ids])
    if h.shape[0] != protos.shape[1]:
        raise ValueError("embedding dim mismatch")
    scores = bank.temperature * _cosine_row(h, protos)
    best = ids[int(np.argmax(scores))]
    return {c: float(s) for c, s in zip(ids, scores)}, best


def classify_batch(bank: PrototypeBank, H: np.ndarray) -> np.ndarray:
    """Vectorized argmax predictions for many embeddings (same tie rule)."""
    if not bank.prototypes:
        raise ValueError("empty prototype bank")
    H = np.asarray(H, dtype=np.float64)
    ids = np.array(bank.class_ids)
    protos = np.stack([bank.prototypes[c] for c in ids])
    pn = np.linalg.norm(protos, axis=1)
    hn = np.linalg.norm(H, axis=1)
    sim = H @ protos.T
    denom = np.outer(hn, pn)
    scores = np.divide(sim, denom, out=np.zeros_like(sim), where=denom > 0)
    return ids[np.argmax(scores, axis=1)]


def teen_calibrate(
    bank: PrototypeBank,
    base_classes,
    novel_classes,
    softmax_T: float = 16.0,
    shift_weight: float = 0.5,
) -> PrototypeBank:
    """Shift each novel prototype toward base prototypes it resembles.

    On L2-normalized vectors: p_hat = alpha * p_c + (1 - alpha) * sum_b w_b p_b
    with w = softmax(softmax_T * cos(p_c, p_b)) over base classes; the result
    is re-normalized. Base prototypes are never touched.
    """
    base = sorted(int(c) for c in base_classes)
    novel = sorted(int(c) for c in novel_classes)
    if not base:
        raise ValueError("empty base class set")
    if set(base) & set(novel):
        raise ValueError("base and novel class sets must be disjoint")
    for c in (*base, *novel):
        if c not in bank.prototypes:
            raise ValueError(f"missing prototype for class {c}")

    def unit(v):
        n = np.linalg.norm(v)
        return v / n if n > 0 else v

    base_mat = np.stack([unit(bank.prototypes[b]) for b in base])
    alpha = shift_weight
    for c in novel:
        pc = unit(bank.prototypes[c])
        sims = base_mat @ pc
        logits = softmax_T * sims
        w = np.exp(logits - logits.max())
        w /= w.sum()
        shifted = alpha * pc + (1 - alpha) * (w @ base_mat)
        bank.prototypes[c] = unit(shifted)
    return bank


@dataclass
class TaskPrototypeSet:
    """Ordered per-task aggregate vectors used for session-ID prediction."""

    vectors: list[np.ndarray] = field(default_factory=list)
    k: int = 8
    weighting: str = "laplacian"

    def add(self, v: np.ndarray) -> None:
        v = np.asarray(v, dtype=np.float64)
        if self.vectors and v.shape != self.vectors[0].shape:
            raise ValueError("task prototype dim mismatch")
        self.vectors.append(v)

    def __len__(self) -> int:
        return len(self.vectors)


def task_prototype(
    g: TextAttributedGraph,
    nodes,
    X: np.ndarray,
    k: int,
    weighting: str = "laplacian",
    self_loops: bool = True,
) -> np.ndarray:
    """Aggregate vector for a node set.

    laplacian:  smooth X for k steps, then mean of z_j * d_j^{-1/2} over the
                set (degrees from the self-loop-augmented graph).
    plain-mean: raw feature mean; k is ignored.
    """
    nodes = np.asarray(list(nodes), dtype=np.int64)
    if nodes.size == 0:
        raise ValueError("empty node set")
    X = np.asarray(X, dtype=np.float64)
    if weighting == "plain-mean":
        return X[nodes].mean(axis=0)
    if weighting != "laplacian":
        raise ValueError(f"unknown weighting {weighting!r}")
    z = laplacian_smooth(X, g, k, "laplacian", self_loops)
    deg = degrees(g, self_loops)
    with np.errstate(divide="ignore"):
        dinv_sqrt = np.where(deg > 0, 1.0 / np.sqrt(deg), 0.0)
    return (z[nodes] * dinv_sqrt[nodes, None]).mean(axis=0)


def predict_task_id(query: np.ndarray, prototypes: TaskPrototypeSet) -> int:
    """0-based index of the nearest task prototype (Euclidean, ties -> lowest)."""
    if len(prototypes) == 0:
        raise ValueError("empty task prototype set")
    query = np.asarray(query, dtype=np.float64)
    if query.shape != prototypes.vectors[0].shape:
        raise ValueError("query dim mismatch")
    dists = [float(np.linalg.norm(query - p)) for p in prototypes.vectors]
    return int(np.argmin(dists))


# ---------------------------------------------------------------------------
# Serialization: bank.json (ids, sessions, temperature) + bank.bin (vectors)
# ---------------------------------------------------------------------------


def save_bank(bank: PrototypeBank, json_path, bin_path) -> None:
    """bank.json holds ids/sessions/temperature/dim; bank.bin is the f64 LE
    vectors concatenated in bank.json order."""
    ids = bank.class_ids
    meta = {
        "temperature": bank.temperature,
        "dim": bank.dim or 0,
        "classes": [
            {"class_id": c, "session": bank.source_session.get(c, 0)} for c in ids
        ],
    }
    Path(json_path).write_text(json.dumps(meta, indent=1, sort_keys=True), encoding="utf-8")
    with open(bin_path, "wb") as fh:
        for c in ids:
            fh.write(np.ascontiguousarray(bank.prototypes[c], dtype="<f8").tobytes())


def load_bank(json_path, bin_path) -> PrototypeBank:
    meta = json.loads(Path(json_path).read_text(encoding="utf-8"))
    bank = PrototypeBank(temperature=meta["temperature"])
    dim = meta["dim"]
    data = Path(bin_path).read_bytes()
    expected = dim * 8 * len(meta["classes"])
    if len(data) != expected:
        raise ValueError(f"bank.bin length {len(data)} != expected {expected}")
    for i, rec in enumerate(meta["classes"]):
        vec = np.frombuffer(data, dtype="<f8", count=dim, offset=i * dim * 8).copy()
        bank.prototypes[rec["class_id"]] = vec
        bank.source_session[rec["class_id"]] = rec["session"]
    return bank
