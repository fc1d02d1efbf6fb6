"""Run configuration: one versioned JSON document, validated strictly.

List-valued hyperparameters expand into a cross-product of runs (grid
search); scalar values pin a single point. Unknown keys are rejected.
"""

from __future__ import annotations

import itertools
import json
from pathlib import Path

import jsonschema

SYNTH_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "num_classes": {"type": "integer", "minimum": 1},
        "nodes_per_class": {"type": "integer", "minimum": 1},
        "feature_dim": {"type": "integer", "minimum": 1},
        "class_sep": {"type": "number", "minimum": 0},
        "noise_sigma": {"type": "number", "exclusiveMinimum": 0},
        "intra_p": {"type": "number", "minimum": 0, "maximum": 1},
        "inter_p": {"type": "number", "minimum": 0, "maximum": 1},
        "seed": {"type": "integer", "minimum": 0},
    },
}

_num_or_grid = {"oneOf": [{"type": "number"}, {"type": "array", "items": {"type": "number"}, "minItems": 1}]}
_int_or_grid = {"oneOf": [{"type": "integer"}, {"type": "array", "items": {"type": "integer"}, "minItems": 1}]}

PROVIDER_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["file", "http"]},
        "matrix": {"type": "string"},
        "index": {"type": "string"},
        "endpoint": {"type": "string"},
        "model": {"type": "string"},
        "batch_size": {"type": "integer", "minimum": 1},
        "max_in_flight": {"type": "integer", "minimum": 1},
    },
}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["version"],
    "properties": {
        "version": {"const": 1},
        "dataset": {
            "oneOf": [
                {"type": "string"},
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["synth"],
                    "properties": {"synth": SYNTH_SCHEMA},
                },
            ]
        },
        "dataset_name": {"type": "string"},
        "scenario": {"enum": ["ncil", "fsncil"]},
        "mode": {"enum": ["local", "global"]},
        "methods": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        "seeds": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
        "eval_edges": {"enum": ["intra_only", "full_union"]},
        "plan": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "classes_per_session": {"type": "integer", "minimum": 1},
                "num_sessions": {"type": "integer", "minimum": 1},
                "shots": {"type": "integer", "minimum": 1},
                "base_classes": {"type": "integer", "minimum": 1},
                "ways": {"type": "integer", "minimum": 1},
                "shots_base": {"type": "integer", "minimum": 1},
                "shots_novel": {"type": "integer", "minimum": 1},
                "test_cap": {"type": "integer", "minimum": 1},
            },
        },
        "hyperparameters": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "lr": _num_or_grid,
                "hidden_dim": _int_or_grid,
                "epochs": _int_or_grid,
                "dropout": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "strength": _num_or_grid,
                "lwf_lambda": _num_or_grid,
                "lwf_T": _num_or_grid,
                "tau": {"type": "number", "exclusiveMinimum": 0},
                "sample_num": {"type": "integer", "minimum": 1},
                "k_smooth": _int_or_grid,
                "softmax_T": {"type": "number"},
                "shift_weight": {"type": "number", "minimum": 0, "maximum": 1},
                "fanouts": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
                "max_node_text_len": {"type": "integer", "minimum": 1},
                "conv_bias": {"type": "boolean"},
                "provider": PROVIDER_SCHEMA,
                "cache_path": {"type": "string"},
            },
        },
    },
}

# Desk-scale defaults; grid sweeps ([1e-5, 1e-4, 1e-3] etc.) go in as list
# values where a sweep is wanted.
DEFAULT_PLAN_NCIL = {"classes_per_session": 2, "num_sessions": 3, "shots": 100, "test_cap": 500}
DEFAULT_PLAN_FSNCIL = {
    "base_classes": 3, "ways": 2, "num_sessions": 3,
    "shots_base": 100, "shots_novel": 5, "test_cap": 500,
}
DEFAULT_HYPERS = {
    "lr": 1e-2,
    "hidden_dim": 64,
    "epochs": 200,
    "dropout": 0.5,
    "strength": 100.0,
    "lwf_lambda": 1.0,
    "lwf_T": 2.0,
    "tau": 1.0,
    # sample_num intentionally has no global default: cosine/teen cap at 100,
    # simplecil at 20, simgcl_proto at 50 unless the config pins one value.
    "k_smooth": 8,
    "softmax_T": 16.0,
    "shift_weight": 0.5,
    "fanouts": [20, 20],
    "max_node_text_len": 128,
    "conv_bias": False,
}

_GRID_KEYS = ("lr", "hidden_dim", "epochs", "strength", "lwf_lambda", "lwf_T", "k_smooth")


class ConfigError(ValueError):
    pass


def validate_config(doc: dict) -> dict:
    try:
        jsonschema.validate(doc, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {exc.message}") from exc
    return doc


def load_config(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return validate_config(doc)


def resolve_hypers(doc: dict) -> dict:
    """Defaults overlaid with the config's hyperparameters (grids kept as lists)."""
    out = dict(DEFAULT_HYPERS)
    out.update(doc.get("hyperparameters", {}))
    return out


def expand_grid(hypers: dict) -> list[dict]:
    """Cross-product of all list-valued grid keys; scalars pass through."""
    fixed = {k: v for k, v in hypers.items() if k not in _GRID_KEYS or not isinstance(v, list)}
    grids = {k: v for k, v in hypers.items() if k in _GRID_KEYS and isinstance(v, list)}
    if not grids:
        return [dict(hypers)]
    keys = sorted(grids)
    points = []
    for combo in itertools.product(*(grids[k] for k in keys)):
        pt = dict(fixed)
        pt.update(dict(zip(keys, combo)))
        points.append(pt)
    return points
