"""The JSON schema documents in schemas/ stay true to the serializers."""

import json
from pathlib import Path

import pytest

jsonschema = pytest.importorskip("jsonschema")
referencing = pytest.importorskip("referencing")

from rlhf_forge import RunConfig, generate_task
from rlhf_forge.core import config_to_dict, history_to_dict, rubric_to_dict
from rlhf_forge.toyenv import task_to_dict

SCHEMA_DIR = Path(__file__).resolve().parents[1] / "schemas"


@pytest.fixture(scope="module")
def validators():
    schemas = {p.name: json.loads(p.read_text()) for p in SCHEMA_DIR.glob("*.schema.json")}
    registry = referencing.Registry().with_resources(
        (name, referencing.Resource.from_contents(s)) for name, s in schemas.items()
    )
    return {
        name: jsonschema.Draft202012Validator(schema, registry=registry)
        for name, schema in schemas.items()
    }


def test_generated_tasks_validate_against_the_schemas(validators):
    for seed in range(10):
        for regime in ("rubric", "pairwise"):
            for difficulty in (1, 2, 3):
                task = generate_task(seed, regime, difficulty, audio_prob=0.5)
                validators["task.schema.json"].validate(task_to_dict(task))
                validators["history.schema.json"].validate(history_to_dict(task.history))
                if task.rubric is not None:
                    validators["rubric.schema.json"].validate(rubric_to_dict(task.rubric))


def test_config_serialization_validates_and_rejects_extras(validators):
    validator = validators["run_config.schema.json"]
    validator.validate(config_to_dict(RunConfig()))
    validator.validate({"seed": 3, "rlhf_steps": 10})
    with pytest.raises(jsonschema.ValidationError):
        validator.validate({"seed": 3, "momentum": 0.9})


def test_schema_documents_cover_every_config_field(validators):
    documented = set(validators["run_config.schema.json"].schema["properties"])
    assert documented == set(config_to_dict(RunConfig()))
