"""JSON problem files.

Layout::

    {
      "agents": [0, 1, ...],
      "domains": [{"lower": -180, "upper": 180}, ...],
      "functions": [{"scope": [0, 1], "kind": "sensor-target",
                     "params": {...}, "lipschitz": [0.0277, 0.0277]}, ...],
      "operator": "sum"
    }

``lipschitz`` may be omitted when the evaluator can derive slope bounds.
"""

from __future__ import annotations

import json
from pathlib import Path

from .dcop import ContinuousDomain, DcopInstance, Operator, UtilityFunction
from .exceptions import InvalidInstance
from .functions import make_evaluator


def instance_from_dict(doc: dict) -> DcopInstance:
    try:
        agents = doc["agents"]
        domains = [ContinuousDomain(float(d["lower"]), float(d["upper"])) for d in doc["domains"]]
        functions = []
        for n, spec in enumerate(doc.get("functions", [])):
            evaluator = make_evaluator(spec["kind"], spec.get("params", {}))
            lip = spec.get("lipschitz")
            if lip is None:
                lip = evaluator.slope_bounds()
            functions.append(UtilityFunction(n, tuple(spec["scope"]), evaluator, tuple(lip)))
        operator = Operator.parse(doc.get("operator", "sum"))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, InvalidInstance):
            raise
        raise InvalidInstance(f"malformed problem document: {exc}") from exc
    return DcopInstance(tuple(agents), tuple(domains), tuple(functions), operator=operator)


def instance_to_dict(instance: DcopInstance) -> dict:
    functions = []
    for f in instance.functions:
        ev = f.evaluator
        if not hasattr(ev, "kind"):
            raise InvalidInstance(f"function {f.id} uses an evaluator without a registered kind")
        functions.append(
            {"scope": list(f.scope), "kind": ev.kind, "params": ev.params(), "lipschitz": list(f.lipschitz)}
        )
    return {
        "agents": list(instance.agents),
        "domains": [{"lower": d.lower, "upper": d.upper} for d in instance.domains],
        "functions": functions,
        "operator": instance.operator.value,
    }


def load_problem(path) -> DcopInstance:
    with open(path) as fh:
        return instance_from_dict(json.load(fh))


def save_problem(instance: DcopInstance, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(instance_to_dict(instance), indent=2) + "\n")
    return path
