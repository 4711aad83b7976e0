"""Tests for DAG document parsing and emission."""

import json

import pytest

from distflow.dag.models import NodeRole, NodeType, default_func_key
from distflow.dag.parser import dump_dag_config, load_dag_file, parse_dag_config
from distflow.dag.presets import Algorithm, preset_dag
from distflow.errors import DagSyntaxError, SchemaError


def _document(nodes, name="g"):
    return json.dumps({"name": name, "nodes": nodes})


class TestParseDagConfig:
    """Test parse_dag_config functionality."""

    def test_parses_nodes_in_declaration_order(self):
        """Test that nodes keep the order they were declared in."""
        graph = parse_dag_config(_document([
            {"id": "b", "role": "REWARD", "type": "COMPUTE", "deps": ["a"]},
            {"id": "a", "role": "ACTOR", "type": "MODEL_INFERENCE", "func": "generate", "deps": []},
        ]))

        assert graph.name == "g"
        assert graph.node_ids == ["b", "a"]
        assert graph.nodes[0].deps == ("a",)
        assert graph.nodes[1].func_tag == "generate"
        assert graph.roots() == ["a"]
        assert graph.sinks() == ["b"]

    def test_accepts_bytes(self):
        """Test that UTF-8 bytes are accepted as a document."""
        graph = parse_dag_config(_document([{"id": "a", "role": "ACTOR", "type": "MODEL_INFERENCE"}]).encode())
        assert graph.node_ids == ["a"]

    def test_func_key_defaults_to_role_and_type(self):
        """Test that a node without a func tag dispatches on ROLE:TYPE."""
        graph = parse_dag_config(_document([{"id": "a", "role": "REWARD", "type": "COMPUTE"}]))
        assert graph.nodes[0].func_key == default_func_key(NodeRole.REWARD, NodeType.COMPUTE)
        assert graph.nodes[0].func_key == "REWARD:COMPUTE"

    def test_malformed_json(self):
        """Test that invalid JSON raises DagSyntaxError."""
        with pytest.raises(DagSyntaxError):
            parse_dag_config('{"name": "g", "nodes": [')

    def test_non_object_document(self):
        """Test that a JSON array is rejected."""
        with pytest.raises(SchemaError):
            parse_dag_config("[]")

    def test_no_nodes(self):
        """Test that a document without nodes is a schema error."""
        with pytest.raises(SchemaError, match="no nodes"):
            parse_dag_config(_document([]))

    def test_unknown_field(self):
        """Test that unknown node keys are rejected."""
        with pytest.raises(SchemaError):
            parse_dag_config(_document([{"id": "a", "role": "ACTOR", "type": "MODEL_TRAIN", "gpu": 1}]))

    def test_unknown_top_level_field(self):
        """Test that unknown document keys are rejected."""
        document = json.dumps({"name": "g", "nodes": [{"id": "a", "role": "ACTOR", "type": "COMPUTE"}], "x": 1})
        with pytest.raises(SchemaError):
            parse_dag_config(document)

    def test_bad_role(self):
        """Test that a role outside the enum is rejected."""
        with pytest.raises(SchemaError):
            parse_dag_config(_document([{"id": "a", "role": "JUDGE", "type": "COMPUTE"}]))

    def test_missing_type(self):
        """Test that a node without a type is rejected."""
        with pytest.raises(SchemaError):
            parse_dag_config(_document([{"id": "a", "role": "ACTOR"}]))

    def test_undeclared_dependency(self):
        """Test that a dependency on an undeclared node is rejected."""
        with pytest.raises(SchemaError, match="undeclared node 'ghost'"):
            parse_dag_config(_document([{"id": "a", "role": "ACTOR", "type": "COMPUTE", "deps": ["ghost"]}]))


class TestDumpDagConfig:
    """Test dump_dag_config functionality."""

    @pytest.mark.parametrize("algorithm", [Algorithm.GRPO, Algorithm.PPO])
    def test_dump_parses_back_to_same_graph(self, algorithm):
        """Test that an emitted preset parses back to an equal graph."""
        graph = preset_dag(algorithm)
        assert parse_dag_config(dump_dag_config(graph)) == graph

    def test_func_omitted_when_absent(self):
        """Test that nodes without a func tag are emitted without the key."""
        graph = parse_dag_config(_document([{"id": "a", "role": "ACTOR", "type": "MODEL_TRAIN"}]))
        document = json.loads(dump_dag_config(graph))
        assert "func" not in document["nodes"][0]


class TestLoadDagFile:
    """Test load_dag_file functionality."""

    def test_load_from_disk(self, temp_data_dir):
        """Test reading a DAG document from a file."""
        path = temp_data_dir / "dag.json"
        path.write_text(dump_dag_config(preset_dag(Algorithm.GRPO)), encoding="utf-8")
        assert load_dag_file(path).name == "grpo"

    def test_missing_file(self, temp_data_dir):
        """Test that a missing file is reported as a schema error."""
        with pytest.raises(SchemaError, match="Cannot read"):
            load_dag_file(temp_data_dir / "missing.json")
