"""JSON experiment configuration: schema, defaults and resolution.

A configuration document has sections model, graph, weights, rule, run and
output.  Unknown keys anywhere are rejected.  Defaults: horizon 100, one
replicate, seed 0, stride 1.  Sections not consumed by the chosen rule are
shape-checked but otherwise ignored.
"""

from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path
from typing import Any, Mapping

import jsonschema

from .graphs import (
    Graph,
    GraphSequence,
    WeightSchedule,
    complete_graph,
    directed_cycle,
    edgeless_graph,
    path_graph,
    ring_graph,
)
from .hypotheses import HypothesisSpace, LikelihoodModel, SignalSpace
from .simulate import RULE_NAMES, WEIGHTED_RULES, ExperimentConfig


class ConfigError(ValueError):
    """A configuration document is malformed or inconsistent."""


_NUMBER_ROW = {"type": "array", "items": {"type": "number"}, "minItems": 1}
_MATRIX = {"type": "array", "items": _NUMBER_ROW, "minItems": 1}
_EDGE_LIST = {
    "type": "array",
    "items": {
        "type": "array",
        "items": {"type": "integer", "minimum": 0},
        "minItems": 2,
        "maxItems": 2,
    },
}

_GRAPH_BODY = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "family": {
            "enum": ["ring", "path", "complete", "directed-cycle", "edgeless", "gossip"]
        },
        "n": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "edges": _EDGE_LIST,
        "directed": {"type": "boolean"},
    },
}

CONFIG_SCHEMA: dict = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["model", "rule"],
    "properties": {
        "model": {
            "type": "object",
            "additionalProperties": False,
            "required": ["agents"],
            "properties": {
                "hypotheses": {
                    "type": "array",
                    "items": {"type": "string"},
                    "minItems": 1,
                },
                "agents": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["truth", "likelihoods"],
                        "properties": {
                            "truth": _NUMBER_ROW,
                            "likelihoods": _MATRIX,
                            "signals": {
                                "type": "array",
                                "items": {"type": "string"},
                                "minItems": 1,
                            },
                        },
                    },
                },
                "alpha": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "graph": {
            **_GRAPH_BODY,
            "properties": {
                **_GRAPH_BODY["properties"],
                "cycle": {"type": "array", "items": _GRAPH_BODY, "minItems": 1},
            },
        },
        "weights": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["metropolis", "lazy-metropolis", "explicit"]},
                "matrices": {"type": "array", "items": _MATRIX, "minItems": 1},
                "eta": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
            },
        },
        "rule": {
            "type": "object",
            "additionalProperties": False,
            "required": ["name"],
            "properties": {
                "name": {"enum": list(RULE_NAMES)},
                "gamma": {"type": "number", "maximum": 1},
                "u": {"type": "number", "exclusiveMinimum": 0},
                "sigma": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "step_size": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "run": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "horizon": {"type": "integer", "minimum": 1},
                "replicates": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
                "stride": {"type": "integer", "minimum": 1},
                "rho": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "b_window": {"type": "integer", "minimum": 1},
                "waive": {"type": "boolean"},
                "initial_beliefs": _MATRIX,
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"directory": {"type": "string", "minLength": 1}},
        },
    },
}

RUN_DEFAULTS = {
    "horizon": 100,
    "replicates": 1,
    "seed": 0,
    "stride": 1,
    "rho": 0.1,
    "b_window": 1,
    "waive": False,
}

_FAMILIES = {
    "ring": ring_graph,
    "path": path_graph,
    "complete": complete_graph,
    "directed-cycle": directed_cycle,
    "edgeless": edgeless_graph,
}


def _load_document(source: Any) -> tuple[dict, bytes]:
    """Turn the accepted source kinds into (document, exact bytes)."""
    if isinstance(source, Path):
        raw = source.read_bytes()
    elif isinstance(source, bytes):
        raw = source
    elif isinstance(source, str):
        raw = source.encode("utf-8")
    elif isinstance(source, Mapping):
        raw = json.dumps(source, sort_keys=True, separators=(",", ":")).encode("utf-8")
    else:
        raise ConfigError(f"unsupported configuration source {type(source).__name__}")
    try:
        doc = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise ConfigError(f"configuration is not valid JSON: {err}") from err
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a JSON object")
    return doc, raw


def _build_graph(body: Mapping, n_agents: int) -> Graph:
    family = body.get("family")
    edges = body.get("edges")
    if family is not None and edges is not None and family != "gossip":
        raise ConfigError("graph: give either a family or an edge list, not both")
    if family is None and edges is None:
        raise ConfigError("graph: needs a family or an edge list")
    n = body.get("n", n_agents)
    if n != n_agents:
        raise ConfigError(f"graph: n={n} does not match the model's {n_agents} agents")
    if family == "gossip":
        if edges is not None:
            return Graph.undirected(n, [tuple(e) for e in edges])
        return complete_graph(n)
    if family is not None:
        return _FAMILIES[family](n)
    pairs = [tuple(int(v) for v in e) for e in edges]
    try:
        if body.get("directed", False):
            return Graph.from_arcs(n, pairs)
        return Graph.undirected(n, pairs)
    except ValueError as err:
        raise ConfigError(f"graph: {err}") from err


def _build_graph_sequence(doc: Mapping, n_agents: int) -> tuple[GraphSequence, int]:
    """Graph sequence plus the gossip activation salt declared on the section."""
    body = doc.get("graph")
    if body is None:
        return GraphSequence.static(edgeless_graph(n_agents)), 0
    salt = int(body.get("seed", 0))
    if "cycle" in body:
        extra = {key for key in body if key not in ("cycle", "seed")}
        if extra:
            raise ConfigError(f"graph: cycle cannot be combined with {sorted(extra)}")
        graphs = [_build_graph(member, n_agents) for member in body["cycle"]]
        return GraphSequence.cyclic(graphs), salt
    try:
        return GraphSequence.static(_build_graph(body, n_agents)), salt
    except ValueError as err:
        raise ConfigError(f"graph: {err}") from err


def _build_model(body: Mapping) -> LikelihoodModel:
    agents = body["agents"]
    likelihoods = [agent["likelihoods"] for agent in agents]
    truth = [agent["truth"] for agent in agents]
    hypotheses = None
    if "hypotheses" in body:
        try:
            hypotheses = HypothesisSpace(tuple(body["hypotheses"]))
        except ValueError as err:
            raise ConfigError(f"model: {err}") from err
    signal_spaces = None
    if any("signals" in agent for agent in agents):
        spaces = []
        for i, agent in enumerate(agents):
            if "signals" not in agent:
                raise ConfigError(
                    f"model: agent {i} omits signal labels while other agents declare them"
                )
            try:
                spaces.append(SignalSpace(tuple(agent["signals"])))
            except ValueError as err:
                raise ConfigError(f"model: agent {i}: {err}") from err
        signal_spaces = spaces
    try:
        return LikelihoodModel.from_arrays(
            likelihoods,
            truth,
            hypotheses=hypotheses,
            signal_spaces=signal_spaces,
            alpha=body.get("alpha"),
        )
    except ValueError as err:
        raise ConfigError(f"model: {err}") from err


def _build_weights(
    doc: Mapping, graphs: GraphSequence, rule: str
) -> WeightSchedule | None:
    body = doc.get("weights")
    if rule not in WEIGHTED_RULES:
        return None
    kind = (body or {}).get("kind", "lazy-metropolis")
    if kind == "explicit":
        if body is None or "matrices" not in body:
            raise ConfigError("weights: explicit kind needs matrices")
        try:
            return WeightSchedule.cyclic(body["matrices"], eta=body.get("eta"))
        except ValueError as err:
            raise ConfigError(f"weights: {err}") from err
    if body is not None and "matrices" in body:
        raise ConfigError(f"weights: matrices are only accepted with kind 'explicit'")
    try:
        schedule = WeightSchedule.from_graphs(graphs, kind)
    except ValueError as err:
        raise ConfigError(f"weights: {err}") from err
    if body is not None and "eta" in body:
        declared = float(body["eta"])
        if declared > schedule.eta + 1e-12:
            raise ConfigError(
                f"weights: declared floor {declared} exceeds the schedule minimum {schedule.eta}"
            )
        schedule = WeightSchedule(
            schedule.n, schedule.matrix_fn, declared, schedule.period
        )
    return schedule


def parse_config(source: Any) -> ExperimentConfig:
    """Validate a configuration document and resolve it to an ExperimentConfig.

    Accepts a Path, raw bytes, JSON text or a mapping.  Raises ConfigError
    on schema violations (with a JSON path), unknown keys, or semantically
    inconsistent sections.
    """
    doc, raw = _load_document(source)
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    error = next(iter(validator.iter_errors(doc)), None)
    if error is not None:
        raise ConfigError(f"{error.json_path}: {error.message}")
    resolved = copy.deepcopy(doc)
    run = {**RUN_DEFAULTS, **resolved.get("run", {})}
    initial = run.pop("initial_beliefs", None)
    resolved["run"] = {**run, **({"initial_beliefs": initial} if initial is not None else {})}
    resolved.setdefault("output", {}).setdefault("directory", "out")

    model = _build_model(resolved["model"])
    graphs, gossip_salt = _build_graph_sequence(resolved, model.n)
    rule_body = resolved["rule"]
    rule = rule_body["name"]
    if initial is not None and (
        len(initial) != model.n or any(len(row) != model.m for row in initial)
    ):
        raise ConfigError(
            f"run.initial_beliefs must be {model.n} rows of {model.m} entries"
        )
    if rule == "accelerated" and "u" not in rule_body and "sigma" not in rule_body:
        raise ConfigError(
            "rule: accelerated needs its scale parameter u (at least the agent count) or sigma"
        )
    if rule == "accelerated" and "u" in rule_body and rule_body["u"] < model.n:
        raise ConfigError(
            f"rule: scale parameter u={rule_body['u']} must be at least the agent count {model.n}"
        )
    weights = _build_weights(resolved, graphs, rule)
    try:
        return ExperimentConfig(
            model=model,
            graphs=graphs,
            rule=rule,
            weights=weights,
            horizon=int(run["horizon"]),
            replicates=int(run["replicates"]),
            seed=int(run["seed"]),
            stride=int(run["stride"]),
            rho=float(run["rho"]),
            b_window=int(run["b_window"]),
            reaction_gamma=float(rule_body.get("gamma", 0.0)),
            sigma=rule_body.get("sigma"),
            grid_size=rule_body.get("u"),
            step_size=float(rule_body.get("step_size", 1.0)),
            gossip_salt=gossip_salt,
            initial_rows=initial,
            waive=bool(run["waive"]),
            document=resolved,
            source_sha256=hashlib.sha256(raw).hexdigest(),
        )
    except ValueError as err:
        raise ConfigError(str(err)) from err


def serialize_config(config: ExperimentConfig) -> str:
    """Resolved document as canonical JSON; parsing it again is an identity."""
    if config.document is None:
        raise ConfigError("this configuration was built directly and has no document")
    return json.dumps(config.document, sort_keys=True, indent=2)


def output_directory(config: ExperimentConfig) -> str:
    if config.document is None:
        return "out"
    return config.document.get("output", {}).get("directory", "out")
