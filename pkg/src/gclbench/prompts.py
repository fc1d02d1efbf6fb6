"""Ego-graph prompt rendering and instruction-tuning dataset emission.

Prompts list the center node and its sampled neighbors hop by hop in
[Node ID][Node Text] form with ego-local sequential ids, then ask for one of
the class names currently known. The emitted JSONL feeds an external tuner;
no language model runs here.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

from .graph import EgoGraph, sample_ego_graph
from .sessions import SessionPlan

DEFAULT_SYSTEM = (
    "You are a good graph reasoner. Given a graph description from the {dataset} "
    "dataset, understand the structure and answer the question."
)
DEFAULT_TASK = (
    "The description lists a target node and its sampled neighbors, "
    "each in the format of [Node ID][Node Text]."
)
DEFAULT_QUESTION = (
    "Question: Please predict which of the following categories this node "
    "belongs to. Choose from the following categories: {labels}."
)
NO_NEIGHBOR_SENTINEL = "no known neighbors."


@dataclass(frozen=True)
class PromptTemplate:
    system_text: str
    task_description: str
    question_text: str  # must contain exactly one {labels} slot
    hop_framings: tuple[str, ...]
    max_node_text_len: int = 128
    include_label: bool = False

    def __post_init__(self):
        if self.question_text.count("{labels}") != 1:
            raise ValueError("question_text needs exactly one {labels} slot")
        if self.max_node_text_len < 1:
            raise ValueError("max_node_text_len must be >= 1")


@dataclass(frozen=True)
class PromptRecord:
    node: int
    prompt: str
    answer: str


def default_template(dataset_name: str = "Cora", hops: int = 2) -> PromptTemplate:
    framings = tuple(f"known neighbors at hop {h}:" for h in range(1, hops + 1))
    return PromptTemplate(
        system_text=DEFAULT_SYSTEM.format(dataset=dataset_name),
        task_description=DEFAULT_TASK,
        question_text=DEFAULT_QUESTION,
        hop_framings=framings,
    )


def truncate_tokens(text: str, max_tokens: int) -> str:
    """Keep at most max_tokens whitespace-delimited tokens."""
    tokens = text.split()
    return " ".join(tokens[:max_tokens])


def render_prompt(ego: EgoGraph, template: PromptTemplate, class_names) -> str:
    """Deterministic prompt string for one ego graph and a class-name list.

    Node ids are ego-local: 0 for the center, then sequential through the
    hops. Empty neighborhoods collapse to a sentinel sentence.
    """
    names = list(class_names)
    if not names:
        raise ValueError("empty class list")
    if len(ego.hop_nodes) > len(template.hop_framings):
        raise ValueError(
            f"ego graph has {len(ego.hop_nodes)} hops; template frames {len(template.hop_framings)}"
        )
    cap = template.max_node_text_len
    center_text = truncate_tokens(ego.center_text, cap)
    parts = [template.system_text, template.task_description]
    lines = [f"[0][{center_text}]"]
    next_id = 1
    if all(len(h) == 0 for h in ego.hop_nodes):
        lines.append(NO_NEIGHBOR_SENTINEL)
    else:
        for h, hop in enumerate(ego.hop_nodes):
            entries = []
            for j in range(len(hop)):
                text = truncate_tokens(ego.hop_texts[h][j], cap)
                entry = f"[{next_id}][{text}]"
                if template.include_label and h < len(ego.hop_label_names):
                    entry += f" (label: {ego.hop_label_names[h][j]})"
                entries.append(entry)
                next_id += 1
            body = " ".join(entries) if entries else NO_NEIGHBOR_SENTINEL
            lines.append(f"{template.hop_framings[h]} {body}")
    parts.append(" ".join(lines))
    parts.append(template.question_text.format(labels=", ".join(names)))
    return "\n".join(parts)


def render_node_prompt(
    graph,
    node: int,
    template: PromptTemplate,
    class_names,
    fanouts=(20, 20),
    seed: int = 0,
) -> str:
    """Sample the node's ego graph and render it in one step."""
    ego = sample_ego_graph(graph, node, fanouts, seed)
    return render_prompt(ego, template, class_names)


def emit_instruction_jsonl(
    plan: SessionPlan,
    session_index: int,
    template: PromptTemplate,
    path,
    seed: int,
    fanouts=(20, 20),
) -> int:
    """Write one {"node", "prompt", "answer"} line per train node of a session.

    `session_index` is 0-based. Prompts carry the cumulative class names up
    to that session; answers are class display strings. Output bytes are
    stable under a fixed seed. Returns the line count.
    """
    if not (0 <= session_index < plan.num_sessions):
        raise IndexError(f"session index {session_index} out of range")
    session = plan.sessions[session_index]
    g = plan.graph
    class_ids = plan.cumulative_classes(session_index + 1)
    names = [g.class_names[c] for c in class_ids]
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(out, "w", encoding="utf-8") as fh:
        for node in session.train_nodes:
            ego = sample_ego_graph(g, node, fanouts, seed)
            rec = PromptRecord(
                node=int(node),
                prompt=render_prompt(ego, template, names),
                answer=g.class_names[int(g.labels[node])],
            )
            fh.write(json.dumps(asdict(rec), ensure_ascii=False) + "\n")
            count += 1
    sidecar = {
        "records": count,
        "session_index": session_index,
        "scenario": plan.scenario,
        "seed": seed,
        "fanouts": list(fanouts),
        "max_node_text_len": template.max_node_text_len,
        "include_label": template.include_label,
        # Consumed by the external tuner, not by this package.
        "lora": {"r": 5, "alpha": 16, "dropout": 0.05},
    }
    out.with_suffix(".meta.json").write_text(
        json.dumps(sidecar, indent=1, sort_keys=True), encoding="utf-8"
    )
    return count
