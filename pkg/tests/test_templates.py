"""Renderer semantics and the shipped template files."""

import pytest
from hypothesis import given
from hypothesis import strategies as st

from bookforge.errors import TemplateError
from bookforge.templates import (
    TEMPLATE_NAMES,
    TemplateSet,
    placeholders,
    render_template,
)

EXPECTED_PLACEHOLDERS = {
    "category_generation": {"task", "segments"},
    "segment_assignment": {"task", "categories", "rule"},
    "tool_generation": {"chapter", "book", "text"},
    "tool_refinement": {"skill", "feedback"},
    "category_selection": {"book", "max_categories", "question", "table_of_content"},
    "tool_selection": {"max_tools", "question", "tools"},
    "solution_with_tools": {"question", "tools"},
    "pot": {"question"},
    "react": {"question"},
    "react_with_tools": {"question", "tools"},
    "react_observation": {"observation"},
    "tool_template": {"description", "function", "example_question", "example_solution"},
}


def test_every_template_loads_with_expected_slots(templates):
    assert set(TEMPLATE_NAMES) == set(EXPECTED_PLACEHOLDERS)
    for name in TEMPLATE_NAMES:
        assert placeholders(templates.texts[name]) == EXPECTED_PLACEHOLDERS[name], name


def test_render_fills_all_slots():
    assert render_template("a {x} b {y}", {"x": 1, "y": "two"}) == "a 1 b two"


def test_missing_value_is_fatal_and_named():
    with pytest.raises(TemplateError, match="question"):
        render_template("Q: {question}", {})


def test_extra_values_are_ignored():
    assert render_template("{a}", {"a": "x", "unused": "y"}) == "x"


def test_literal_braces_pass_through():
    template = "{{\n  \"Category 1\": \"name\"\n}}\nuse {slot} and '[' and ']'"
    out = render_template(template, {"slot": "v"})
    assert out.startswith("{{\n")
    assert "}}" in out and "use v" in out


def test_substituted_values_are_not_rescanned():
    assert render_template("{a}", {"a": "{b}"}) == "{b}"


def test_json_in_templates_is_not_a_placeholder(templates):
    # The generation template embeds a JSON example full of braces; only
    # real slots may be picked up.
    assert placeholders(templates.texts["tool_generation"]) == {"chapter", "book", "text"}


def test_unknown_template_name(templates):
    with pytest.raises(TemplateError, match="unknown template"):
        templates.render("nonexistent")


def test_missing_file_is_a_template_error(tmp_path):
    with pytest.raises(TemplateError, match="category_generation"):
        TemplateSet.load(tmp_path)


def test_digest_stable_and_sensitive(templates, tmp_path):
    assert templates.digest() == TemplateSet.load().digest()
    for name in TEMPLATE_NAMES:
        (tmp_path / f"{name}.txt").write_text(templates.texts[name], encoding="utf-8")
    assert TemplateSet.load(tmp_path).digest() == templates.digest()
    (tmp_path / "pot.txt").write_text(templates.texts["pot"] + "x", encoding="utf-8")
    assert TemplateSet.load(tmp_path).digest() != templates.digest()


@given(
    st.dictionaries(
        st.from_regex(r"[a-z_][a-z0-9_]{0,8}", fullmatch=True),
        st.text(max_size=20),
        min_size=1,
        max_size=4,
    )
)
def test_render_round_trips_any_mapping(values):
    template = " | ".join("{" + name + "}" for name in sorted(values))
    rendered = render_template(template, values)
    assert rendered == " | ".join(str(values[name]) for name in sorted(values))
