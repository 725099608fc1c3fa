"""JSON instance, assignment and table files.

Numbers may be written as JSON numbers or as ``"p/q"`` strings. An instance
is exact (rational arithmetic) when it sets ``"exact": true`` or when every
prior entry is an integer or a fraction string.

Instance schema::

    {
      "name": "demo",
      "feasibility": "partition" | "matroid-free" | {"explicit": [[...], ...]},
      "items": 2,                       # partition only
      "services": [[0, 1, 2], ...],     # other feasibility kinds
      "null_service": 0,
      "supports": [[valuation, ...], ...],
      "priors": [["1/2", "1/2"], ...]
    }

Partition valuations are ``{"kind": "additive", "weights": [...]}``,
``{"kind": "unit-demand", "weights": [...]}``,
``{"kind": "budget-additive", "weights": [...], "budget": b}`` or
``{"kind": "xos", "clauses": [[...], ...]}``. Other instances give each
valuation as a list aligned with that agent's services.

An assignment problem is ``{"assignment": {"demands": [...], "supplies":
[...], "values": [[...], ...]}}``.
"""

from __future__ import annotations

import hashlib
import json
from fractions import Fraction
from pathlib import Path

from .assignment import AssignmentProblem
from .interim import InterimTable
from .model import (
    Explicit,
    MechanismInstance,
    Partition,
    SetValuation,
    TableValuation,
    Unrestricted,
    build_instance,
    to_number,
)
from .reduction_sw import ReductionTables


def read_json(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _is_exact_literal(x) -> bool:
    return isinstance(x, str) or (isinstance(x, int) and not isinstance(x, bool))


def instance_from_dict(data: dict) -> MechanismInstance:
    priors = data["priors"]
    exact = data.get("exact")
    if exact is None:
        exact = all(_is_exact_literal(p) for f in priors for p in f)
    num = lambda x: to_number(x, exact)  # noqa: E731
    feas = data.get("feasibility", "partition")
    name = data.get("name", "")

    if feas == "partition":
        m = int(data["items"])
        supports = [[_set_valuation(v, num, m) for v in sup] for sup in data["supports"]]
        services = [tuple(range(1 << m)) for _ in supports]
        return build_instance(services, Partition(), supports, priors, null_service=0,
                              exact=exact, items=m, name=name)

    services = [tuple(s) for s in data["services"]]
    supports = []
    for i, sup in enumerate(data["supports"]):
        row = []
        for v in sup:
            if isinstance(v, dict):
                v = [v.get(str(s), 0) for s in services[i]]
            row.append(TableValuation({s: num(x) for s, x in zip(services[i], v)}))
        supports.append(row)
    if feas == "matroid-free":
        feasibility = Unrestricted()
    elif isinstance(feas, dict) and "explicit" in feas:
        feasibility = Explicit(feas["explicit"])
    else:
        raise ValueError(f"unknown feasibility {feas!r}")
    return build_instance(services, feasibility, supports, priors,
                          null_service=data.get("null_service"), exact=exact, name=name)


def _set_valuation(spec: dict, num, m: int) -> SetValuation:
    kind = spec["kind"]
    if kind == "xos":
        clauses = tuple(tuple(num(w) for w in c) for c in spec["clauses"])
        if any(len(c) != m for c in clauses):
            raise ValueError(f"xos clauses must have {m} entries")
        return SetValuation("xos", clauses=clauses)
    weights = tuple(num(w) for w in spec["weights"])
    if len(weights) != m:
        raise ValueError(f"weights must have {m} entries")
    budget = num(spec["budget"]) if "budget" in spec else None
    return SetValuation(kind, weights, budget=budget)


def load_instance(path) -> MechanismInstance:
    return instance_from_dict(read_json(path))


def assignment_from_dict(data: dict) -> AssignmentProblem:
    data = data.get("assignment", data)
    entries = [*data["demands"], *data["supplies"], *(w for r in data["values"] for w in r)]
    exact = data.get("exact", all(_is_exact_literal(e) for e in entries))
    num = lambda x: to_number(x, exact)  # noqa: E731
    return AssignmentProblem([num(a) for a in data["demands"]], [num(b) for b in data["supplies"]],
                             [[num(w) for w in r] for r in data["values"]])


def load_assignment(path) -> AssignmentProblem:
    return assignment_from_dict(read_json(path))


# --------------------------------------------------------------------------
# output


def encode(x):
    """JSON-ready form: Fractions become exact strings, containers recurse."""
    if isinstance(x, Fraction):
        return str(x) if x.denominator != 1 else x.numerator
    if isinstance(x, (list, tuple)):
        return [encode(v) for v in x]
    if isinstance(x, dict):
        return {str(k): encode(v) for k, v in x.items()}
    if hasattr(x, "item"):  # numpy scalar
        return x.item()
    return x


def decode_number(x):
    return Fraction(x) if isinstance(x, str) else x


def fmt(x) -> str:
    """12 significant digits, the repo-wide print format."""
    return format(float(x), ".12g")


def content_hash(*parts) -> str:
    blob = json.dumps([encode(p) for p in parts], sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def file_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]


def interim_to_dict(table: InterimTable) -> dict:
    return {"values": encode(table.values), "mode": table.mode,
            "epsilon": encode(table.epsilon), "samples": encode(table.samples)}


def interim_from_dict(data: dict) -> InterimTable:
    values = [[[decode_number(x) for x in row] for row in w] for w in data["values"]]
    samples = data.get("samples")
    return InterimTable(values, data["mode"], decode_number(data.get("epsilon")),
                        None if samples is None else tuple(tuple(s) for s in samples))


def tables_to_dict(tables: ReductionTables) -> dict:
    agents = [{"x": encode(a.x), "p": encode(a.p), "w": encode(a.w),
               "prior": encode(a.prior), "leftover": encode(a.leftover)}
              for a in tables.agents]
    return {"mode": tables.mode, "epsilon": encode(tables.epsilon), "agents": agents}


def write_json(path, data) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(encode(data), fh, indent=2, sort_keys=True)
        fh.write("\n")
