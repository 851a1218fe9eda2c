"""Index-list parsing and two-phase tool selection."""

import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from bookforge.errors import MockMissError, SelectionParseError
from bookforge.selection import (
    SelectionConfig,
    parse_index_list,
    render_index_list,
    render_tool_listing,
    select_tools,
    selected_tools,
)
from bookforge.synthetic import random_toolbox
from tests.conftest import ScriptedLlm


# --- parse_index_list ------------------------------------------------------------


def test_bare_list_parses():
    assert parse_index_list("[0]") == [0]
    assert parse_index_list("[1, 3, 2]") == [1, 3, 2]


def test_rationale_before_list_is_ignored():
    reply = "The question concerns rates of return.\nI pick the first one.\n[0, 2]"
    assert parse_index_list(reply) == [0, 2]


def test_last_bracketed_line_wins():
    reply = "[9]\nOn reflection the better choice is:\n[1]"
    assert parse_index_list(reply) == [1]


def test_empty_brackets_mean_no_selection():
    assert parse_index_list("None of these apply.\n[]") == []
    assert parse_index_list("[ ]") == []


def test_trailing_blank_lines_tolerated():
    assert parse_index_list("[2]\n\n   \n") == [2]


def test_non_integer_token_raises_with_raw_tail():
    with pytest.raises(SelectionParseError) as excinfo:
        parse_index_list("pick these\n[0, two]")
    assert "two" in str(excinfo.value)
    assert excinfo.value.raw.endswith("[0, two]")


def test_negative_index_rejected():
    with pytest.raises(SelectionParseError):
        parse_index_list("[-1]")


def test_no_bracket_line_raises():
    with pytest.raises(SelectionParseError, match="no line"):
        parse_index_list("I would use the bond pricing tools for this.")


def test_brackets_inside_prose_do_not_count():
    # The bracketed text must be the whole line, not embedded mid-sentence.
    with pytest.raises(SelectionParseError):
        parse_index_list("tool [0] looks good but I cannot decide")


@given(st.lists(st.integers(min_value=0, max_value=99), max_size=8))
def test_render_parse_round_trip(indices):
    assert parse_index_list(render_index_list(indices)) == indices


# --- select_tools ----------------------------------------------------------------


def _scripted_selection(replies):
    return ScriptedLlm(replies=list(replies))


@pytest.fixture(scope="module")
def box():
    return random_toolbox(21, n_categories=4, tools_per_category=3)


def test_happy_path_selects_category_then_tools(box, templates):
    llm = _scripted_selection(["Let me think.\n[1]", "[0, 2]"])
    trace = select_tools("q", box, SelectionConfig(max_categories=1, max_tools=2), llm, templates)
    assert trace.categories == [box.categories[1].name]
    expected = [box.categories[1].tools[0].id, box.categories[1].tools[2].id]
    assert trace.tool_ids == expected
    assert not trace.empty
    assert [t.id for t in selected_tools(trace, box)] == expected


def test_caps_truncate_extra_indices(box, templates):
    llm = _scripted_selection(["[0, 1, 2, 3]", "[0, 1, 2]"])
    trace = select_tools("q", box, SelectionConfig(max_categories=1, max_tools=1), llm, templates)
    assert len(trace.categories) == 1
    assert len(trace.tool_ids) == 1


def test_two_categories_two_tools_each(box, templates):
    llm = _scripted_selection(["[0, 2]", "[1, 0]", "[2]"])
    trace = select_tools("q", box, SelectionConfig(max_categories=2, max_tools=2), llm, templates)
    assert trace.categories == [box.categories[0].name, box.categories[2].name]
    assert trace.tool_ids == [
        box.categories[0].tools[1].id,
        box.categories[0].tools[0].id,
        box.categories[2].tools[2].id,
    ]


def test_out_of_range_dropped_with_note(box, templates):
    llm = _scripted_selection(["[7]", "[0]"])
    trace = select_tools("q", box, SelectionConfig(), llm, templates)
    assert trace.categories == []
    assert trace.empty
    assert any("out of range" in note for note in trace.notes)
    # Phase two never runs when no category survives.
    assert len(llm.requests) == 1


def test_duplicate_indices_deduped(box, templates):
    llm = _scripted_selection(["[2, 2, 2]", "[1, 1, 0]"])
    trace = select_tools("q", box, SelectionConfig(max_categories=2, max_tools=2), llm, templates)
    assert trace.categories == [box.categories[2].name]
    assert trace.tool_ids == [
        box.categories[2].tools[1].id,
        box.categories[2].tools[0].id,
    ]


def test_unparseable_category_reply_selects_nothing(box, templates):
    llm = _scripted_selection(["I really cannot choose here."])
    trace = select_tools("q", box, SelectionConfig(), llm, templates)
    assert trace.empty
    assert any("unparseable" in note for note in trace.notes)


def test_explicit_empty_category_reply(box, templates):
    llm = _scripted_selection(["None are relevant.\n[]"])
    trace = select_tools("q", box, SelectionConfig(), llm, templates)
    assert trace.empty and trace.categories == []
    assert trace.notes == []


def test_unparseable_tool_reply_selects_nothing(box, templates):
    llm = _scripted_selection(["[0]", "no brackets here"])
    trace = select_tools("q", box, SelectionConfig(), llm, templates)
    assert trace.categories == [box.categories[0].name]
    assert trace.empty
    assert any("unparseable" in note for note in trace.notes)


def test_empty_category_skips_phase_two(templates):
    box = random_toolbox(4, n_categories=2, tools_per_category=0)
    llm = _scripted_selection(["[0]"])
    trace = select_tools("q", box, SelectionConfig(), llm, templates)
    assert trace.categories == [box.categories[0].name]
    assert trace.empty
    assert any("holds no tools" in note for note in trace.notes)
    assert len(llm.requests) == 1


def test_empty_toolbox_is_an_error(templates):
    from bookforge.store import Toolbox, ToolboxMeta

    empty = Toolbox(meta=ToolboxMeta("t", "m", "now", "d"), categories=())
    with pytest.raises(ValueError, match="empty toolbox"):
        select_tools("q", empty, SelectionConfig(), ScriptedLlm(replies=[]), templates)


def test_selection_prompts_embed_caps_and_listing(box, templates):
    llm = _scripted_selection(["[0]", "[0]"])
    config = SelectionConfig(max_categories=2, max_tools=1)
    select_tools("what is the rate?", box, config, llm, templates)
    category_prompt = llm.requests[0].prompt
    assert "at most 2" in category_prompt
    assert box.meta.book_title in category_prompt
    assert "0. " + box.categories[0].name in category_prompt
    tool_prompt = llm.requests[1].prompt
    assert "at most 1" in tool_prompt
    assert "Skill 0:" in tool_prompt
    assert box.categories[0].tools[0].description in tool_prompt


def test_listing_omits_examples_when_asked(box, templates):
    tools = list(box.categories[0].tools)
    with_examples = render_tool_listing(tools, templates, True)
    without = render_tool_listing(tools, templates, False)
    assert tools[0].example.question in with_examples
    assert tools[0].example.question not in without
    assert "(omitted)" in without


def test_config_rejects_nonpositive_caps():
    with pytest.raises(ValueError):
        SelectionConfig(max_categories=0)
    with pytest.raises(ValueError):
        SelectionConfig(max_tools=0)


def test_fuzzed_replies_never_break_invariants(box, templates):
    """Arbitrary reply text narrows the selection but never corrupts it."""
    rng = random.Random(2026)
    fragments = [
        "[0]", "[1, 2]", "[]", "[9, 0]", "[0, 0, 1]", "[-3]", "[1, two]",
        "no selection", "Answer: [1]", "the list [0] is inline and ignored",
        "[2]\n[0]", "   [1]   ", "[0,1,2,3,4]", "[1]\ntrailing prose",
    ]
    valid_ids = {t.id for t in box.all_tools()}
    for trial in range(500):
        n_replies = rng.randint(1, 4)
        llm = _scripted_selection([rng.choice(fragments) for _ in range(n_replies)])
        config = SelectionConfig(
            max_categories=rng.randint(1, 2), max_tools=rng.randint(1, 2)
        )
        try:
            trace = select_tools("q", box, config, llm, templates)
        except MockMissError:
            # ScriptedLlm ran out of replies: selection asked for more
            # phase-two calls than we scripted. Not a selection bug.
            continue
        assert len(trace.categories) <= config.max_categories, f"trial {trial}"
        for choice in trace.per_category:
            assert len(choice.tool_ids) <= config.max_tools, f"trial {trial}"
        assert set(trace.tool_ids) <= valid_ids, f"trial {trial}"
        assert trace.empty == (trace.tool_ids == []), f"trial {trial}"
