"""Toolbox persistence, stats, and similarity ranking."""

import json
import math

import pytest

from bookforge.errors import ToolboxFormatError, ToolboxVersionError
from bookforge.store import (
    SCHEMA_VERSION,
    SimilarityIndex,
    build_similarity_index,
    load_similarity_index,
    load_toolbox,
    nearest_tools,
    save_similarity_index,
    save_toolbox,
    table_of_contents,
    toolbox_from_dict,
    toolbox_stats,
    toolbox_to_dict,
)
from bookforge.synthetic import HashEmbedder, random_toolbox


def test_round_trip_is_byte_identical(tmp_path):
    path = tmp_path / "box.json"
    for seed in range(10):
        toolbox = random_toolbox(seed)
        save_toolbox(toolbox, path)
        first = path.read_bytes()
        save_toolbox(load_toolbox(path), path)
        assert path.read_bytes() == first, f"seed {seed}"


def test_loaded_toolbox_equals_original(tmp_path):
    toolbox = random_toolbox(3)
    path = tmp_path / "box.json"
    save_toolbox(toolbox, path)
    assert load_toolbox(path) == toolbox


def test_future_schema_version_names_versions(tmp_path):
    toolbox = random_toolbox(1)
    data = toolbox_to_dict(toolbox)
    data["schema_version"] = SCHEMA_VERSION + 5
    with pytest.raises(ToolboxVersionError) as excinfo:
        toolbox_from_dict(data)
    assert str(SCHEMA_VERSION) in str(excinfo.value)
    assert str(SCHEMA_VERSION + 5) in str(excinfo.value)


def test_missing_schema_version_rejected():
    data = toolbox_to_dict(random_toolbox(1))
    del data["schema_version"]
    with pytest.raises(ToolboxVersionError):
        toolbox_from_dict(data)


def test_duplicate_tool_id_rejected():
    data = toolbox_to_dict(random_toolbox(2, n_categories=1, tools_per_category=2))
    tools = data["categories"][0]["tools"]
    tools[1]["id"] = tools[0]["id"]
    with pytest.raises(ToolboxFormatError, match="duplicate tool id"):
        toolbox_from_dict(data)


def test_duplicate_category_rejected():
    data = toolbox_to_dict(random_toolbox(2, n_categories=2, tools_per_category=1))
    data["categories"][1]["name"] = data["categories"][0]["name"]
    with pytest.raises(ToolboxFormatError, match="duplicate category"):
        toolbox_from_dict(data)


def test_category_field_must_match_home_category():
    data = toolbox_to_dict(random_toolbox(2, n_categories=2, tools_per_category=1))
    data["categories"][0]["tools"][0]["category"] = data["categories"][1]["name"]
    with pytest.raises(ToolboxFormatError, match="claims category"):
        toolbox_from_dict(data)


def test_lineage_consistency_enforced():
    data = toolbox_to_dict(random_toolbox(2, n_categories=1, tools_per_category=1))
    tool = data["categories"][0]["tools"][0]
    tool["status"] = "verified"
    tool["lineage"] = "abc123"
    with pytest.raises(ToolboxFormatError, match="lineage"):
        toolbox_from_dict(data)


def test_malformed_file_is_format_error(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{]")
    with pytest.raises(ToolboxFormatError, match="not valid JSON"):
        load_toolbox(path)
    with pytest.raises(ToolboxFormatError, match="not found"):
        load_toolbox(tmp_path / "absent.json")


def test_stats_count_distinct_sections_and_exact_mean(forged_toolbox):
    toolbox, _ = forged_toolbox
    stats = toolbox_stats(toolbox)
    assert stats.n_categories == 3
    assert stats.n_sections == 3  # six tools, two per section, three sections
    assert stats.n_tools == 6
    expected = sum(t.function_line_count for t in toolbox.all_tools()) / 6
    assert stats.avg_function_lines == expected


def test_stats_on_empty_categories():
    toolbox = random_toolbox(5, n_categories=2, tools_per_category=0)
    stats = toolbox_stats(toolbox)
    assert stats.n_tools == 0 and stats.avg_function_lines == 0.0
    assert stats.n_categories == 2


def test_table_of_contents_format(forged_toolbox):
    toolbox, _ = forged_toolbox
    assert table_of_contents(toolbox) == (
        "0. Offset Correction\n1. Scale Correction\n2. Drift Correction"
    )


def test_table_of_contents_empty():
    from bookforge.store import Toolbox, ToolboxMeta

    empty = Toolbox(
        meta=ToolboxMeta("t", "m", "now", "d"),
        categories=(),
    )
    assert table_of_contents(empty) == ""


# --- similarity ----------------------------------------------------------------


def _oracle_ranking(index: SimilarityIndex, query, k):
    """Independent reimplementation: same arithmetic, written fresh."""
    scores = []
    for position, vector in enumerate(index.vectors):
        dot = 0.0
        qq = 0.0
        vv = 0.0
        for a, b in zip(query, vector):
            dot += a * b
            qq += a * a
            vv += b * b
        score = 0.0 if qq == 0.0 or vv == 0.0 else dot / math.sqrt(qq * vv)
        scores.append((score, position))
    ordered = sorted(scores, key=lambda pair: (-pair[0], pair[1]))
    return [position for _, position in ordered[:k]]


def test_nearest_matches_exhaustive_scan_for_all_k():
    toolbox = random_toolbox(11, n_categories=5, tools_per_category=10)
    tools = toolbox.all_tools()
    assert len(tools) == 50
    embedder = HashEmbedder()
    index = build_similarity_index(toolbox, embedder)
    question = "which calibration applies to a drifting gauge?"
    query = embedder.embed(question)
    for k in list(range(1, 51)) + [60]:
        got = [t.id for t in nearest_tools(index, toolbox, embedder, question, k)]
        want = [index.tool_ids[p] for p in _oracle_ranking(index, query, k)]
        assert got == want, f"k={k}"


def test_nearest_nonpositive_k_is_empty():
    toolbox = random_toolbox(7, n_categories=1, tools_per_category=3)
    embedder = HashEmbedder()
    index = build_similarity_index(toolbox, embedder)
    assert nearest_tools(index, toolbox, embedder, "q", 0) == []


def test_similarity_index_round_trip(tmp_path):
    toolbox = random_toolbox(9, n_categories=2, tools_per_category=3)
    embedder = HashEmbedder()
    index = build_similarity_index(toolbox, embedder)
    path = tmp_path / "index.json"
    save_similarity_index(index, path)
    again = load_similarity_index(path)
    assert again == index


def test_ties_break_toward_earlier_tool():
    toolbox = random_toolbox(13, n_categories=1, tools_per_category=4)

    class ConstantEmbedder:
        def embed(self, text):
            return [1.0, 0.0]

    index = build_similarity_index(toolbox, ConstantEmbedder())
    top = nearest_tools(index, toolbox, ConstantEmbedder(), "q", 2)
    all_ids = [t.id for t in toolbox.all_tools()]
    assert [t.id for t in top] == all_ids[:2]
