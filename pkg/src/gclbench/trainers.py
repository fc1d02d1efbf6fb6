"""Sequential continual-learning methods over the numerics core.

Covers plain fine-tuning, EWC (online Fisher), LwF distillation, frozen-GNN
prototype classifiers (with optional TEEN calibration), provider-embedding
prototype classifiers, and task-prototype-routed per-session MLP heads. One
run walks the session sequence once and records an accuracy matrix.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .embeddings import FileSource, HttpSource, get_or_embed
from .evaluation import (
    GLOBAL,
    LOCAL,
    AccuracyMatrix,
    evaluate,
    lenient_accuracy,
    summarize,
)
from .graph import TextAttributedGraph, gcn_normalized_adjacency, sample_ego_graph
from .nn import (
    ARCH_GCN,
    ARCH_MLP,
    ModelParams,
    adam_step,
    cross_entropy,
    grow_output,
    init_adam,
    init_params,
    model_backward,
    model_embed,
    model_forward,
)
from .prompts import default_template, render_prompt
from .prototypes import (
    PrototypeBank,
    TaskPrototypeSet,
    build_prototypes,
    classify_batch,
    predict_task_id,
    task_prototype,
    teen_calibrate,
)
from .sessions import EvalTask, SessionPlan, build_eval_task

METHOD_IDS = (
    "gcn",
    "ewc",
    "lwf",
    "cosine",
    "teen",
    "simplecil",
    "simgcl_proto",
    "tpp_heads",
    "meanpool_tpp",
)


class TrainingError(RuntimeError):
    pass


def _mix(*parts: int) -> int:
    """Stable derived seed from integer parts."""
    return int(np.random.SeedSequence([abs(int(p)) for p in parts]).generate_state(1)[0])


# ---------------------------------------------------------------------------
# Regularizers
# ---------------------------------------------------------------------------


@dataclass
class EwcAnchor:
    """Post-session parameter snapshot with a running Fisher diagonal."""

    params_star: dict[str, np.ndarray]
    fisher: dict[str, np.ndarray]
    strength: float

    def __post_init__(self):
        if self.strength < 0:
            raise ValueError("strength must be >= 0")
        for k, f in self.fisher.items():
            if (f < 0).any():
                raise ValueError(f"negative Fisher entry in {k}")


@dataclass
class DistillSource:
    """Frozen pre-session model for logit distillation."""

    frozen: ModelParams
    temperature: float
    weight: float
    old_class_mask: np.ndarray  # bool over the grown head's columns

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError("temperature must be > 0")
        if self.weight < 0:
            raise ValueError("weight must be >= 0")
        if not self.old_class_mask.any():
            raise ValueError("old-class mask is empty")


def ewc_penalty(p: ModelParams, anchor: EwcAnchor) -> tuple[float, dict[str, np.ndarray]]:
    """loss = strength * sum F (theta - theta*)^2, grad = 2 strength F (theta - theta*)."""
    loss = 0.0
    grads: dict[str, np.ndarray] = {}
    for k, w in p.weights.items():
        if anchor.params_star[k].shape != w.shape:
            raise ValueError(f"anchor shape mismatch for {k}")
        delta = w - anchor.params_star[k]
        f = anchor.fisher[k]
        loss += float(anchor.strength * np.sum(f * delta * delta))
        grads[k] = 2.0 * anchor.strength * f * delta
    return loss, grads


def fisher_diagonal(
    p: ModelParams,
    S,
    X: np.ndarray,
    rows: np.ndarray,
    labels: np.ndarray,
) -> dict[str, np.ndarray]:
    """Mean over samples of the squared per-sample log-likelihood gradient."""
    rows = np.asarray(rows, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if rows.size == 0:
        raise ValueError("empty session: no rows for Fisher estimation")
    logits, cache = model_forward(p, S, X, dropout_seed=None)
    shifted = logits - logits.max(axis=1, keepdims=True)
    probs = np.exp(shifted)
    probs /= probs.sum(axis=1, keepdims=True)
    fisher = {k: np.zeros_like(w) for k, w in p.weights.items()}
    for r, y in zip(rows, labels):
        dlogits = np.zeros_like(logits)
        dlogits[r] = probs[r]
        dlogits[r, y] -= 1.0  # gradient of -log p(y); sign vanishes when squared
        g = model_backward(cache, dlogits)
        for k in fisher:
            fisher[k] += g[k] * g[k]
    for k in fisher:
        fisher[k] /= rows.size
    return fisher


def distill_loss(
    new_logits: np.ndarray,
    old_logits: np.ndarray,
    old_mask: np.ndarray,
    temperature: float,
    weight: float,
) -> tuple[float, np.ndarray]:
    """weight * T^2 * KL(softmax(old/T) || softmax(new/T)) over old-class columns.

    Returns the row-averaged loss and its gradient w.r.t. new_logits (zero at
    non-old columns).
    """
    T = temperature
    cols = np.flatnonzero(old_mask)
    po = _softmax(old_logits[:, cols] / T)
    qn = _softmax(new_logits[:, cols] / T)
    n = new_logits.shape[0]
    with np.errstate(divide="ignore", invalid="ignore"):
        logratio = np.where(po > 0, np.log(po) - np.log(qn), 0.0)
    kl = float((po * logratio).sum(axis=1).mean())
    loss = weight * T * T * kl
    dl = np.zeros_like(new_logits)
    dl[:, cols] = weight * T * (qn - po) / n
    return loss, dl


def lwf_distill(
    new_logits: np.ndarray, source: DistillSource, inputs: tuple
) -> tuple[float, np.ndarray]:
    """Distillation against the frozen copy evaluated on `inputs` = (S, X)."""
    S, X = inputs
    old_logits, _ = model_forward(source.frozen, S, X, dropout_seed=None)
    pad = new_logits.shape[1] - old_logits.shape[1]
    if pad:
        old_logits = np.concatenate([old_logits, np.zeros((old_logits.shape[0], pad))], axis=1)
    return distill_loss(new_logits, old_logits, source.old_class_mask,
                        source.temperature, source.weight)


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# Session training loop
# ---------------------------------------------------------------------------


def train_session(
    p: ModelParams,
    S,
    X: np.ndarray,
    labels: np.ndarray,
    train_rows: np.ndarray,
    epochs: int,
    lr: float,
    extra_loss=None,
    seed: int = 0,
) -> ModelParams:
    """Full-batch Adam over one session's labeled nodes.

    `labels` are head-column indices aligned with `train_rows`. The optional
    extra_loss(p, logits, train_rows) returns (loss, dlogits_extra or None,
    param_grads or None) and is added to the cross-entropy objective.
    Deterministic under a fixed seed.
    """
    p = p.copy()
    if epochs == 0:
        return p
    train_rows = np.asarray(train_rows, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    X = np.asarray(X, dtype=np.float64)
    st = init_adam(p, lr)
    for epoch in range(epochs):
        dropout_seed = _mix(seed, epoch)
        logits, cache = model_forward(p, S, X, dropout_seed=dropout_seed)
        loss, dl_rows = cross_entropy(logits[train_rows], labels)
        dlogits = np.zeros_like(logits)
        dlogits[train_rows] = dl_rows
        if extra_loss is not None:
            extra, dl_extra, g_extra = extra_loss(p, logits, train_rows)
            loss += extra
            if dl_extra is not None:
                dlogits += dl_extra
        else:
            g_extra = None
        if not np.isfinite(loss):
            raise TrainingError(f"non-finite loss at epoch {epoch}")
        grads = model_backward(cache, dlogits)
        if g_extra is not None:
            for k in grads:
                if k in g_extra:
                    grads[k] = grads[k] + g_extra[k]
        p, st = adam_step(p, grads, st)
    return p


# ---------------------------------------------------------------------------
# Task-specific MLP heads routed by task-ID prediction
# ---------------------------------------------------------------------------


@dataclass
class TaskHead:
    params: ModelParams
    class_ids: np.ndarray  # head column -> original class id


def _fit_head(
    plan: SessionPlan, session_idx: int, X: np.ndarray | None, config: dict, seed: int
) -> TaskHead:
    s = plan.sessions[session_idx]
    feats = s.subgraph.features if X is None else X[s.node_map]
    feats = np.asarray(feats, dtype=np.float64)
    class_ids = np.array(sorted(s.class_ids), dtype=np.int64)
    col_of = {int(c): j for j, c in enumerate(class_ids)}
    rows = s.local_ids(s.train_nodes)
    labels = np.array([col_of[int(s.subgraph.labels[r])] for r in rows], dtype=np.int64)
    p = init_params(
        ARCH_MLP,
        in_dim=feats.shape[1],
        hidden_dim=int(config.get("hidden_dim", 64)),
        num_classes=len(class_ids),
        seed=_mix(seed, 7, session_idx),
        dropout_rate=float(config.get("dropout", 0.5)),
    )
    p = train_session(
        p, None, feats, labels, rows,
        epochs=int(config.get("epochs", 200)),
        lr=float(config.get("lr", 1e-2)),
        seed=_mix(seed, 11, session_idx),
    )
    return TaskHead(params=p, class_ids=class_ids)


def fit_task_heads(plan: SessionPlan, X: np.ndarray | None = None,
                   config: dict | None = None, seed: int = 0) -> list[TaskHead]:
    """One two-layer MLP per session, trained on that session's classes only."""
    config = dict(config or {})
    return [_fit_head(plan, i, X, config, seed) for i in range(plan.num_sessions)]


def predict_routed(
    graph: TextAttributedGraph,
    nodes: np.ndarray,
    heads: list[TaskHead],
    protos: TaskPrototypeSet,
    X: np.ndarray | None = None,
) -> tuple[np.ndarray, int]:
    """Route a query node set to one session head and classify with it.

    The query prototype is matched against stored train prototypes; the
    winning session's head then predicts among its own classes only (the
    class-incremental -> task-incremental collapse this measures).
    """
    nodes = np.asarray(nodes, dtype=np.int64)
    feats = graph.features if X is None else X
    feats = np.asarray(feats, dtype=np.float64)
    query = task_prototype(graph, nodes, feats, protos.k, protos.weighting)
    tid = predict_task_id(query, protos)
    if tid >= len(heads):
        raise ValueError(f"missing head for predicted task {tid}")
    head = heads[tid]
    logits, _ = model_forward(head.params, None, feats[nodes], dropout_seed=None)
    return head.class_ids[np.argmax(logits, axis=1)], tid


def route_eval(
    plan: SessionPlan,
    j: int,
    heads: list[TaskHead],
    protos: TaskPrototypeSet,
    X: np.ndarray | None = None,
) -> float:
    """Lenient accuracy of routed heads on local task j (1-based)."""
    task = build_eval_task(plan, j, LOCAL)
    feats = None if X is None else X[task.node_sources]
    preds, _ = predict_routed(task.graph, task.eval_nodes, heads, protos, X=feats)
    return lenient_accuracy(preds, task.graph.labels[task.eval_nodes])


# ---------------------------------------------------------------------------
# Method runners
# ---------------------------------------------------------------------------


class _GcnFamily:
    """Sequential GCN fine-tuning, optionally with EWC and/or LwF terms."""

    lenient = False

    def __init__(self, plan: SessionPlan, config: dict, seed: int,
                 use_ewc: bool = False, use_lwf: bool = False):
        self.plan = plan
        self.config = config
        self.seed = seed
        self.use_ewc = use_ewc
        self.use_lwf = use_lwf
        self.params: ModelParams | None = None
        self.head_classes: list[int] = []
        self.anchor: EwcAnchor | None = None
        self.strength = float(config.get("strength", 100.0))
        self.lwf_weight = float(config.get("lwf_lambda", 1.0))
        self.lwf_T = float(config.get("lwf_T", 2.0))

    def fit_session(self, i: int) -> None:
        s = self.plan.sessions[i - 1]
        sub = s.subgraph
        S = gcn_normalized_adjacency(sub)
        X = np.asarray(sub.features, dtype=np.float64)
        new_classes = [c for c in s.class_ids if c not in self.head_classes]

        frozen_before = self.params.copy() if self.params is not None else None
        n_old = len(self.head_classes)
        self.head_classes.extend(new_classes)
        if self.params is None:
            self.params = init_params(
                ARCH_GCN,
                in_dim=X.shape[1],
                hidden_dim=int(self.config.get("hidden_dim", 64)),
                num_classes=len(self.head_classes),
                seed=_mix(self.seed, 1),
                dropout_rate=float(self.config.get("dropout", 0.5)),
                conv_bias=bool(self.config.get("conv_bias", False)),
            )
        else:
            self.params = grow_output(self.params, len(new_classes), seed=_mix(self.seed, 2, i))
            if self.anchor is not None:
                self.anchor = EwcAnchor(
                    params_star=_pad_all(self.anchor.params_star, self.params),
                    fisher=_pad_all(self.anchor.fisher, self.params),
                    strength=self.anchor.strength,
                )

        col_of = {c: j for j, c in enumerate(self.head_classes)}
        rows = s.local_ids(s.train_nodes)
        labels = np.array([col_of[int(sub.labels[r])] for r in rows], dtype=np.int64)

        source = None
        if self.use_lwf and frozen_before is not None and self.lwf_weight > 0:
            mask = np.zeros(len(self.head_classes), dtype=bool)
            mask[:n_old] = True
            source = DistillSource(frozen_before, self.lwf_T, self.lwf_weight, mask)

        anchor = self.anchor if (self.use_ewc and self.strength > 0) else None
        extra = None
        if anchor is not None or source is not None:
            # Old logits are fixed within the session; compute them once.
            old_logits = None
            if source is not None:
                ol, _ = model_forward(source.frozen, S, X, dropout_seed=None)
                pad = len(self.head_classes) - ol.shape[1]
                old_logits = np.concatenate([ol, np.zeros((ol.shape[0], pad))], axis=1)

            def extra(p, logits, train_rows, _anchor=anchor, _src=source, _old=old_logits):
                loss = 0.0
                dl = None
                g = None
                if _anchor is not None:
                    pl, g = ewc_penalty(p, _anchor)
                    loss += pl
                if _src is not None:
                    dloss, dl_rows = distill_loss(
                        logits[train_rows], _old[train_rows],
                        _src.old_class_mask, _src.temperature, _src.weight,
                    )
                    loss += dloss
                    dl = np.zeros_like(logits)
                    dl[train_rows] = dl_rows
                return loss, dl, g

        self.params = train_session(
            self.params, S, X, labels, rows,
            epochs=int(self.config.get("epochs", 200)),
            lr=float(self.config.get("lr", 1e-2)),
            extra_loss=extra,
            seed=_mix(self.seed, 3, i),
        )

        if self.use_ewc and self.strength > 0:
            fisher = fisher_diagonal(self.params, S, X, rows, labels)
            if self.anchor is None:
                self.anchor = EwcAnchor(
                    params_star={k: v.copy() for k, v in self.params.weights.items()},
                    fisher=fisher,
                    strength=self.strength,
                )
            else:
                # Online EWC: one running Fisher sum, latest anchor.
                self.anchor = EwcAnchor(
                    params_star={k: v.copy() for k, v in self.params.weights.items()},
                    fisher={k: self.anchor.fisher[k] + fisher[k] for k in fisher},
                    strength=self.strength,
                )

    def predict(self, task: EvalTask) -> np.ndarray:
        S = gcn_normalized_adjacency(task.graph)
        X = np.asarray(task.graph.features, dtype=np.float64)
        logits, _ = model_forward(self.params, S, X, dropout_seed=None)
        head = np.array(self.head_classes)
        col_mask = np.isin(head, np.array(task.class_ids))
        masked = np.where(col_mask, logits[task.eval_nodes], -np.inf)
        return head[np.argmax(masked, axis=1)]


def _pad_all(old: dict[str, np.ndarray], p: ModelParams) -> dict[str, np.ndarray]:
    out = {}
    for k, w in p.weights.items():
        src = old.get(k)
        buf = np.zeros_like(w)
        if src is not None:
            buf[tuple(slice(0, s) for s in src.shape)] = src
        out[k] = buf
    return out


class _FrozenGnnPrototypes:
    """Train once on session 1, then training-free cosine prototypes."""

    lenient = False

    def __init__(self, plan: SessionPlan, config: dict, seed: int, use_teen: bool = False):
        self.plan = plan
        self.config = config
        self.seed = seed
        self.use_teen = use_teen
        self.params: ModelParams | None = None
        self.head_classes: list[int] = []
        self.bank = PrototypeBank(temperature=float(config.get("tau", 1.0)))
        self.sample_num = int(config.get("sample_num", 100))
        self.base_classes: list[int] = []

    def fit_session(self, i: int) -> None:
        s = self.plan.sessions[i - 1]
        sub = s.subgraph
        S = gcn_normalized_adjacency(sub)
        X = np.asarray(sub.features, dtype=np.float64)
        if i == 1:
            self.head_classes = list(s.class_ids)
            self.base_classes = sorted(s.class_ids)
            col_of = {c: j for j, c in enumerate(self.head_classes)}
            rows = s.local_ids(s.train_nodes)
            labels = np.array([col_of[int(sub.labels[r])] for r in rows], dtype=np.int64)
            p = init_params(
                ARCH_GCN,
                in_dim=X.shape[1],
                hidden_dim=int(self.config.get("hidden_dim", 64)),
                num_classes=len(self.head_classes),
                seed=_mix(self.seed, 1),
                dropout_rate=float(self.config.get("dropout", 0.5)),
            )
            self.params = train_session(
                p, S, X, labels, rows,
                epochs=int(self.config.get("epochs", 200)),
                lr=float(self.config.get("lr", 1e-2)),
                seed=_mix(self.seed, 3, 1),
            )
        emb = model_embed(self.params, S, X)
        rows = s.local_ids(s.train_nodes)
        build_prototypes(
            self.bank, emb[rows], sub.labels[rows],
            sample_num=self.sample_num, seed=_mix(self.seed, 5, i), session=i,
        )
        if self.use_teen and i > 1:
            teen_calibrate(
                self.bank,
                base_classes=self.base_classes,
                novel_classes=sorted(s.class_ids),
                softmax_T=float(self.config.get("softmax_T", 16.0)),
                shift_weight=float(self.config.get("shift_weight", 0.5)),
            )

    def predict(self, task: EvalTask) -> np.ndarray:
        S = gcn_normalized_adjacency(task.graph)
        X = np.asarray(task.graph.features, dtype=np.float64)
        emb = model_embed(self.params, S, X)
        return classify_batch(self.bank.subset(task.class_ids), emb[task.eval_nodes])


class _ProviderPrototypes:
    """Training-free prototypes over provider embeddings (text or ego prompt)."""

    lenient = False

    def __init__(self, plan: SessionPlan, config: dict, seed: int,
                 prompt_mode: str, dataset_name: str):
        self.plan = plan
        self.config = config
        self.seed = seed
        self.prompt_mode = prompt_mode  # "text" | "ego"
        self.bank = PrototypeBank(temperature=float(config.get("tau", 1.0)))
        self.sample_num = int(config.get("sample_num", 50 if prompt_mode == "ego" else 20))
        self.fanouts = tuple(config.get("fanouts", (20, 20)))
        self.cache_path = config.get("cache_path", "embeddings.cache.bin")
        self.source = make_embedding_source(config.get("provider"))
        self.template = default_template(dataset_name, hops=len(self.fanouts))
        if "max_node_text_len" in config:
            self.template = replace(
                self.template, max_node_text_len=int(config["max_node_text_len"])
            )

    def _embed(self, graph, local_ids: np.ndarray, node_sources: np.ndarray,
               class_ids, stage_seed: int) -> np.ndarray:
        names = [self.plan.graph.class_names[c] for c in class_ids]
        local_of = {int(node_sources[l]): int(l) for l in local_ids}

        def renderer(parent_id: int) -> str:
            local = local_of[parent_id]
            if self.prompt_mode == "text":
                return graph.texts[local]
            ego = sample_ego_graph(graph, local, self.fanouts, stage_seed)
            return render_prompt(ego, self.template, names)

        parents = [int(node_sources[l]) for l in local_ids]
        return get_or_embed(self.source, parents, renderer, self.cache_path)

    def fit_session(self, i: int) -> None:
        s = self.plan.sessions[i - 1]
        rows = s.local_ids(s.train_nodes)
        emb = self._embed(s.subgraph, rows, s.node_map,
                          self.plan.cumulative_classes(i), _mix(self.seed, 21, i))
        build_prototypes(
            self.bank, emb, s.subgraph.labels[rows],
            sample_num=self.sample_num, seed=_mix(self.seed, 5, i), session=i,
        )

    def predict(self, task: EvalTask) -> np.ndarray:
        emb = self._embed(task.graph, task.eval_nodes, task.node_sources,
                          task.class_ids, _mix(self.seed, 23, task.session_index))
        return classify_batch(self.bank.subset(task.class_ids), emb)


class _RoutedHeads:
    """Per-session MLP heads behind task-prototype routing."""

    lenient = True  # misrouted predictions fall outside local class sets

    def __init__(self, plan: SessionPlan, config: dict, seed: int, weighting: str):
        self.plan = plan
        self.config = config
        self.seed = seed
        self.k = int(config.get("k_smooth", 8))
        self.weighting = weighting
        self.heads: list[TaskHead] = []
        self.protos = TaskPrototypeSet(k=self.k, weighting=weighting)

    def fit_session(self, i: int) -> None:
        s = self.plan.sessions[i - 1]
        self.heads.append(_fit_head(self.plan, i - 1, None, self.config, self.seed))
        self.protos.add(
            task_prototype(
                s.subgraph, s.local_ids(s.train_nodes),
                np.asarray(s.subgraph.features, dtype=np.float64),
                self.k, self.weighting,
            )
        )

    def predict(self, task: EvalTask) -> np.ndarray:
        preds, _ = predict_routed(task.graph, task.eval_nodes, self.heads, self.protos)
        return preds


# ---------------------------------------------------------------------------
# Orchestration
# ---------------------------------------------------------------------------


def make_embedding_source(cfg: dict | None):
    if not cfg:
        raise TrainingError("embedding-based method needs a provider config")
    kind = cfg.get("kind")
    if kind == "file":
        return FileSource(matrix_path=cfg["matrix"], index_path=cfg["index"])
    if kind == "http":
        return HttpSource(
            endpoint=cfg["endpoint"],
            model=cfg.get("model", "stub"),
            batch_size=int(cfg.get("batch_size", 16)),
            max_in_flight=int(cfg.get("max_in_flight", 2)),
        )
    raise TrainingError(f"unknown provider kind {kind!r}")


def _make_runner(method: str, plan: SessionPlan, config: dict, seed: int, dataset: str):
    if method == "gcn":
        return _GcnFamily(plan, config, seed)
    if method == "ewc":
        return _GcnFamily(plan, config, seed, use_ewc=True)
    if method == "lwf":
        return _GcnFamily(plan, config, seed, use_lwf=True)
    if method == "cosine":
        return _FrozenGnnPrototypes(plan, config, seed)
    if method == "teen":
        return _FrozenGnnPrototypes(plan, config, seed, use_teen=True)
    if method == "simplecil":
        return _ProviderPrototypes(plan, config, seed, "text", dataset)
    if method == "simgcl_proto":
        return _ProviderPrototypes(plan, config, seed, "ego", dataset)
    if method == "tpp_heads":
        return _RoutedHeads(plan, config, seed, "laplacian")
    if method == "meanpool_tpp":
        return _RoutedHeads(plan, config, seed, "plain-mean")
    raise ValueError(f"unknown method {method!r}; valid ids: {', '.join(METHOD_IDS)}")


@dataclass
class RunResult:
    method: str
    scenario: str
    mode: str
    seed: int
    dataset: str
    config_hash: str
    session_seconds: list[float]
    matrix: AccuracyMatrix
    summary: dict = field(default_factory=dict)

    def to_doc(self) -> dict:
        return {
            "run": {
                "method": self.method,
                "scenario": self.scenario,
                "mode": self.mode,
                "seed": self.seed,
                "dataset": self.dataset,
                "config_hash": self.config_hash,
                "session_seconds": self.session_seconds,
            },
            "matrix": self.matrix.to_dict(),
            "summary": self.summary,
        }


def config_hash(config: dict) -> str:
    return hashlib.sha256(
        json.dumps(config, sort_keys=True, default=str).encode()
    ).hexdigest()[:16]


def run_method(
    method: str,
    plan: SessionPlan,
    config: dict | None = None,
    mode: str = GLOBAL,
    seed: int = 0,
    dataset: str = "dataset",
) -> RunResult:
    """Walk the session sequence with one method and record its accuracy matrix.

    After each session i the method is evaluated on the cumulative union task
    (global mode) or on every past local task j <= i (local mode, one triangle
    row). Deterministic for fixed (plan, config, seed).
    """
    if method not in METHOD_IDS:
        raise ValueError(f"unknown method {method!r}; valid ids: {', '.join(METHOD_IDS)}")
    if mode not in (LOCAL, GLOBAL):
        raise ValueError(f"unknown mode {mode!r}")
    config = dict(config or {})
    runner = _make_runner(method, plan, config, seed, dataset)
    matrix = AccuracyMatrix(mode=mode)
    times: list[float] = []
    for i in range(1, plan.num_sessions + 1):
        t0 = time.perf_counter()
        runner.fit_session(i)
        if mode == GLOBAL:
            task = build_eval_task(plan, i, GLOBAL)
            row = [_score(runner, task)]
        else:
            row = [_score(runner, build_eval_task(plan, j, LOCAL)) for j in range(1, i + 1)]
        matrix.add_row(row)
        times.append(time.perf_counter() - t0)

    return RunResult(
        method=method,
        scenario=plan.scenario,
        mode=mode,
        seed=seed,
        dataset=dataset,
        config_hash=config_hash(config),
        session_seconds=[round(t, 6) for t in times],
        matrix=matrix,
        summary=summarize(matrix),
    )


def _score(runner, task: EvalTask) -> float:
    if runner.lenient:
        preds = runner.predict(task)
        return lenient_accuracy(preds, task.graph.labels[task.eval_nodes])
    return evaluate(runner.predict, task)
