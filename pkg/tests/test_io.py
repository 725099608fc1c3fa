import json
from fractions import Fraction as F

import pytest
from conftest import INSTANCES

from bicforge import io
from bicforge.algorithms import RandomSerialDictator
from bicforge.interim import exact_interim
from bicforge.model import Explicit


def test_load_partition_instance():
    inst = io.load_instance(INSTANCES / "demo_2x2.json")
    assert inst.exact and inst.items == 1 and inst.n == 2
    assert inst.priors[1] == (F(1, 3), F(2, 3))
    assert inst.value(1, 1, 1) == F(1, 2)


def test_load_explicit_instance():
    inst = io.load_instance(INSTANCES / "explicit_3svc.json")
    assert isinstance(inst.feasibility, Explicit)
    assert inst.null_service == 0


def test_float_instance_when_priors_are_floats():
    data = {"feasibility": "partition", "items": 1,
            "supports": [[{"kind": "additive", "weights": [2]}]], "priors": [[1.0]]}
    inst = io.instance_from_dict(data)
    assert not inst.exact


def test_bad_inputs():
    with pytest.raises(ValueError):
        io.instance_from_dict({"feasibility": "matroid", "services": [[0]],
                               "supports": [[[0]]], "priors": [[1]]})
    with pytest.raises(ValueError):
        io.instance_from_dict({"items": 2, "supports": [[{"kind": "additive", "weights": [1]}]],
                               "priors": [[1]]})


def test_assignment_file():
    prob = io.load_assignment(INSTANCES / "anti_diagonal.json")
    assert prob.exact and prob.values == ((0, 1), (1, 0))


def test_encode_and_fmt():
    assert io.encode({"a": (F(1, 3), F(2))}) == {"a": ["1/3", 2]}
    assert io.fmt(F(1, 3)) == "0.333333333333"
    assert io.fmt(2) == "2"


def test_interim_round_trip(tmp_path):
    inst = io.load_instance(INSTANCES / "demo_2x2.json")
    table = exact_interim(inst, RandomSerialDictator(inst))
    path = tmp_path / "t.json"
    io.write_json(path, io.interim_to_dict(table))
    assert io.interim_from_dict(json.loads(path.read_text())) == table


def test_content_hash_stable():
    assert io.content_hash({"a": 1}, F(1, 2)) == io.content_hash({"a": 1}, F(1, 2))
    assert io.content_hash({"a": 1}) != io.content_hash({"a": 2})
