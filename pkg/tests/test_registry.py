import json

import pytest

from flowforge.errors import DuplicateApi, SchemaError
from flowforge.registry import (
    ApiDoc, ApiParam, ApiRegistry, dumps_registry, is_builtin, load_registry, loads_registry,
)


def _entry(api_id, app="is.workflow.actions", **extra):
    return {"id": api_id, "app_id": app, **extra}


def test_load_fixture(fixtures):
    r = load_registry(fixtures / "reference_registry.json")
    assert len(r) == 8
    doc = r.lookup("is_workflow_actions_detect_link")
    assert doc is not None and doc.id == "is.workflow.actions.detect.link"
    assert r.is_builtin(doc)


def test_dump_and_load_round_trip(fixtures):
    r = load_registry(fixtures / "sampling_registry.json")
    assert loads_registry(dumps_registry(r)) == r


def test_duplicate_id_rejected():
    with pytest.raises(DuplicateApi):
        loads_registry(json.dumps({"apis": [_entry("a.b"), _entry("a.b")]}))


def test_underscore_collision_rejected():
    with pytest.raises(DuplicateApi):
        loads_registry(json.dumps({"apis": [_entry("a.b_c"), _entry("a_b.c")]}))


def test_repeated_param_rejected():
    params = [{"name": "x"}, {"name": "x"}]
    with pytest.raises(SchemaError):
        loads_registry(json.dumps({"apis": [_entry("a.b", params=params)]}))


@pytest.mark.parametrize("doc", [
    {"apis": [{"app_id": "x"}]},
    {"apis": [{"id": "a", "app_id": 3}]},
    {"apis": [_entry("a", params=[{"name": "p", "default": 1, "required": True}])]},
    {"nope": []},
    [],
])
def test_schema_errors(doc):
    with pytest.raises(SchemaError):
        loads_registry(json.dumps(doc))


def test_invalid_json_is_schema_error():
    with pytest.raises(SchemaError):
        loads_registry("{")


def test_builtin_needs_nonempty_app_id():
    assert not is_builtin(ApiDoc("x", ""), "")
    assert is_builtin(ApiDoc("x", "is.workflow.actions"))


def test_third_party_apps_listed():
    r = ApiRegistry.from_docs([ApiDoc("is.workflow.actions.a", "is.workflow.actions"),
                               ApiDoc("com.x.b", "com.x"), ApiDoc("com.y.c", "com.y")])
    assert r.third_party_apps() == ["com.x", "com.y"]
    assert [d.id for d in r.builtin_docs()] == ["is.workflow.actions.a"]


def test_prompt_stub():
    doc = ApiDoc("com.x.send", "com.x", "send", "Send a message.",
                 (ApiParam("to", "Text", required=True), ApiParam("cc", "Text", "me", has_default=True)),
                 "Bool", "Sent")
    assert doc.to_prompt() == (
        "def com_x_send(to: Text, cc: Text = 'me') -> Bool:\n"
        '    """Send a message.\nReturns: Sent"""'
    )
