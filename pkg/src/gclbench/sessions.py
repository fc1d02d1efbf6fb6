"""Session planning for class-incremental scenarios and eval-task derivation.

A plan assigns disjoint class blocks to ordered sessions, samples exact
per-class train shots, and induces per-session subgraphs on train+test nodes
only, which removes every edge between nodes of different sessions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graph import TextAttributedGraph, induced_subgraph, make_graph

NCIL = "ncil"
FSNCIL = "fsncil"
EVAL_EDGES_INTRA = "intra_only"
EVAL_EDGES_FULL = "full_union"


class PlanError(ValueError):
    """Raised when a scenario cannot be built from the given graph/config."""


@dataclass(frozen=True)
class Session:
    class_ids: tuple[int, ...]
    train_nodes: tuple[int, ...]  # original graph ids
    test_nodes: tuple[int, ...]  # original graph ids
    subgraph: TextAttributedGraph
    node_map: np.ndarray  # local id -> original id

    def local_ids(self, original_ids) -> np.ndarray:
        lookup = {int(o): i for i, o in enumerate(self.node_map)}
        return np.array([lookup[int(o)] for o in original_ids], dtype=np.int64)


@dataclass(frozen=True)
class SessionPlan:
    scenario: str
    seed: int
    class_order: tuple[int, ...]  # retained classes in assignment order
    sessions: tuple[Session, ...]
    graph: TextAttributedGraph
    eval_edges: str = EVAL_EDGES_INTRA

    @property
    def num_sessions(self) -> int:
        return len(self.sessions)

    def cumulative_classes(self, upto: int) -> tuple[int, ...]:
        """Union of class sets of sessions 1..upto (1-based, ascending ids)."""
        out: set[int] = set()
        for s in self.sessions[:upto]:
            out.update(s.class_ids)
        return tuple(sorted(out))


@dataclass(frozen=True)
class EvalTask:
    session_index: int  # 1-based
    mode: str  # "local" | "global"
    graph: TextAttributedGraph
    eval_nodes: np.ndarray  # ids local to `graph`
    node_sources: np.ndarray  # local id -> original graph id
    class_ids: tuple[int, ...]


def filter_classes(g: TextAttributedGraph, min_samples: int) -> list[int]:
    """Classes with at least min_samples member nodes, ascending by id."""
    if min_samples < 1:
        raise ValueError("min_samples must be >= 1")
    counts = np.bincount(g.labels, minlength=len(g.class_names))
    return [c for c in range(len(g.class_names)) if counts[c] >= min_samples]


def _sample_class_nodes(
    g: TextAttributedGraph, class_id: int, shots: int, test_cap: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    members = np.flatnonzero(g.labels == class_id)
    if members.size < shots + 1:
        raise PlanError(
            f"class {class_id} has {members.size} samples; needs {shots} train + 1 test"
        )
    perm = rng.permutation(members)
    train = np.sort(perm[:shots])
    rest = perm[shots:]
    test = np.sort(rest[: min(test_cap, rest.size)])
    return train, test


def _build_sessions(
    g: TextAttributedGraph,
    blocks: list[list[int]],
    shots_per_block: list[int],
    test_cap: int,
    rng: np.random.Generator,
) -> tuple[Session, ...]:
    sessions = []
    for block, shots in zip(blocks, shots_per_block):
        train_all: list[int] = []
        test_all: list[int] = []
        for c in block:
            tr, te = _sample_class_nodes(g, c, shots, test_cap, rng)
            train_all.extend(int(x) for x in tr)
            test_all.extend(int(x) for x in te)
        nodes = sorted(set(train_all) | set(test_all))
        sub, node_map = induced_subgraph(g, nodes)
        sessions.append(
            Session(
                class_ids=tuple(block),
                train_nodes=tuple(sorted(train_all)),
                test_nodes=tuple(sorted(test_all)),
                subgraph=sub,
                node_map=node_map,
            )
        )
    return tuple(sessions)


def plan_ncil(
    g: TextAttributedGraph,
    classes_per_session: int,
    num_sessions: int,
    shots: int,
    test_cap: int = 500,
    seed: int = 0,
    eval_edges: str = EVAL_EDGES_INTRA,
) -> SessionPlan:
    """Uniform class-incremental plan: equal class blocks, exact shot counts."""
    retained = filter_classes(g, shots + 1)
    needed = classes_per_session * num_sessions
    if len(retained) < needed:
        raise PlanError(
            f"insufficient classes: need {needed}, only {len(retained)} have >= {shots + 1} samples"
        )
    rng = np.random.default_rng(seed)
    order = [retained[i] for i in rng.permutation(len(retained))][:needed]
    blocks = [order[i * classes_per_session:(i + 1) * classes_per_session]
              for i in range(num_sessions)]
    sessions = _build_sessions(g, blocks, [shots] * num_sessions, test_cap, rng)
    return SessionPlan(NCIL, seed, tuple(order), sessions, g, eval_edges)


def plan_fsncil(
    g: TextAttributedGraph,
    base_classes: int,
    ways: int,
    num_sessions: int,
    shots_base: int,
    shots_novel: int,
    test_cap: int = 500,
    seed: int = 0,
    eval_edges: str = EVAL_EDGES_INTRA,
) -> SessionPlan:
    """Few-shot plan: a large base session, then m-way k-shot increments."""
    min_samples = max(shots_base, shots_novel) + 1
    retained = filter_classes(g, min_samples)
    needed = base_classes + ways * (num_sessions - 1)
    if len(retained) < needed:
        raise PlanError(
            f"insufficient classes: need {needed}, only {len(retained)} have >= {min_samples} samples"
        )
    rng = np.random.default_rng(seed)
    order = [retained[i] for i in rng.permutation(len(retained))][:needed]
    blocks = [order[:base_classes]]
    shots_per_block = [shots_base]
    for i in range(num_sessions - 1):
        start = base_classes + i * ways
        blocks.append(order[start:start + ways])
        shots_per_block.append(shots_novel)
    sessions = _build_sessions(g, blocks, shots_per_block, test_cap, rng)
    return SessionPlan(FSNCIL, seed, tuple(order), sessions, g, eval_edges)


def _disjoint_union(parts: list[TextAttributedGraph], class_names) -> tuple[TextAttributedGraph, np.ndarray]:
    feats = np.concatenate([p.features for p in parts], axis=0)
    texts: list[str] = []
    labels = np.concatenate([p.labels for p in parts])
    edges = []
    offset = 0
    offsets = []
    for p in parts:
        offsets.append(offset)
        texts.extend(p.texts)
        if p.edges.size:
            edges.append(p.edges + offset)
        offset += p.node_count
    all_edges = np.concatenate(edges, axis=0) if edges else np.zeros((0, 2), np.int64)
    g = make_graph(feats, texts, labels, class_names, all_edges)
    return g, np.array(offsets, dtype=np.int64)


def build_eval_task(plan: SessionPlan, i: int, mode: str) -> EvalTask:
    """Evaluation task after training session i (1-based).

    local:  session-i subgraph, its test nodes, classes of sessions 1..i.
    global: union of session subgraphs 1..i (disjoint under intra_only; edges
            between sessions restored under full_union), union of test nodes.
    """
    if not (1 <= i <= plan.num_sessions):
        raise IndexError(f"session index {i} out of range 1..{plan.num_sessions}")
    if mode not in ("local", "global"):
        raise ValueError(f"unknown mode {mode!r}")
    class_ids = plan.cumulative_classes(i)

    if mode == "local":
        s = plan.sessions[i - 1]
        eval_local = s.local_ids(s.test_nodes)
        return EvalTask(i, mode, s.subgraph, eval_local, s.node_map, class_ids)

    active = plan.sessions[:i]
    if plan.eval_edges == EVAL_EDGES_FULL:
        all_nodes = sorted({n for s in active for n in (*s.train_nodes, *s.test_nodes)})
        g, node_map = induced_subgraph(plan.graph, all_nodes)
        lookup = {int(o): j for j, o in enumerate(node_map)}
        eval_local = np.array(
            sorted(lookup[n] for s in active for n in s.test_nodes), dtype=np.int64
        )
        return EvalTask(i, mode, g, eval_local, node_map, class_ids)

    g, offsets = _disjoint_union([s.subgraph for s in active], plan.graph.class_names)
    node_sources = np.concatenate([s.node_map for s in active])
    eval_local = np.concatenate(
        [s.local_ids(s.test_nodes) + offsets[j] for j, s in enumerate(active)]
    )
    return EvalTask(i, mode, g, np.sort(eval_local), node_sources, class_ids)


def plan_digest(plan: SessionPlan) -> str:
    """Canonical text summary: one header line plus one line per session."""
    lines = [
        f"{plan.scenario} seed={plan.seed} sessions={plan.num_sessions} "
        f"eval_edges={plan.eval_edges} class_order={','.join(map(str, plan.class_order))}"
    ]
    for idx, s in enumerate(plan.sessions, start=1):
        names = ",".join(f"{c}:{plan.graph.class_names[c]}" for c in s.class_ids)
        lines.append(
            f"session {idx}: classes=[{names}] train={len(s.train_nodes)} test={len(s.test_nodes)}"
        )
    return "\n".join(lines) + "\n"


def save_plan(plan: SessionPlan, path) -> None:
    """plan.json: config + node assignments; subgraphs are rebuilt on load."""
    doc = {
        "scenario": plan.scenario,
        "seed": plan.seed,
        "eval_edges": plan.eval_edges,
        "class_order": list(plan.class_order),
        "sessions": [
            {
                "class_ids": list(s.class_ids),
                "train_nodes": list(s.train_nodes),
                "test_nodes": list(s.test_nodes),
            }
            for s in plan.sessions
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True), encoding="utf-8")


def load_plan(path, g: TextAttributedGraph) -> SessionPlan:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    sessions = []
    for rec in doc["sessions"]:
        nodes = sorted(set(rec["train_nodes"]) | set(rec["test_nodes"]))
        sub, node_map = induced_subgraph(g, nodes)
        sessions.append(
            Session(
                class_ids=tuple(rec["class_ids"]),
                train_nodes=tuple(sorted(rec["train_nodes"])),
                test_nodes=tuple(sorted(rec["test_nodes"])),
                subgraph=sub,
                node_map=node_map,
            )
        )
    return SessionPlan(
        scenario=doc["scenario"],
        seed=doc["seed"],
        class_order=tuple(doc["class_order"]),
        sessions=tuple(sessions),
        graph=g,
        eval_edges=doc.get("eval_edges", EVAL_EDGES_INTRA),
    )
