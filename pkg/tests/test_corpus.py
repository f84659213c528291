"""Benchmark loading, embedded-test extraction, and suite conversion."""

import json

import pytest

from mufix.corpus import (
    EvaluationSuite,
    extract_embedded_tests,
    limit_tests,
    load_apps,
    load_benchmark,
    load_humaneval,
    load_mbpp,
    parse_assertion_line,
)
from mufix.errors import FormatError, IoError

from mufix_helpers import HE84_BENCHMARK, TOY_BENCHMARK


def test_session_style_extraction():
    spec = (
        "def inc(x):\n"
        '    """Add one.\n'
        "\n"
        "    >>> inc(1)\n"
        "    2\n"
        "    >>> inc(41)\n"
        "    42\n"
        '    """\n'
    )
    tests = extract_embedded_tests(spec, "inc")
    assert [(t.call_expr, t.expected_literal) for t in tests] == [("inc(1)", "2"), ("inc(41)", "42")]
    assert all(t.provenance == "embedded" for t in tests)


def test_session_continuation_lines():
    spec = (
        ">>> merge([1, 2],\n"
        "...       [3, 4])\n"
        "[1, 2, 3, 4]\n"
    )
    tests = extract_embedded_tests(spec, "merge")
    assert len(tests) == 1
    assert tests[0].call_expr == "merge([1, 2], [3, 4])"
    assert tests[0].expected_literal == "[1, 2, 3, 4]"


def test_session_multiline_output():
    spec = ">>> rows(2)\n[1]\n[1, 1]\n\nmore prose\n"
    tests = extract_embedded_tests(spec, "rows")
    assert tests[0].expected_literal == "[1]\n[1, 1]"


def test_session_without_output_is_skipped():
    spec = ">>> setup()\n>>> f(1)\n2\n"
    tests = extract_embedded_tests(spec, "f")
    assert [(t.call_expr, t.expected_literal) for t in tests] == [("f(1)", "2")]


def test_assertion_style_extraction():
    spec = 'assert f(1, "a") == [1]\nassert g(2) == 3\nassert f(2) != 4\n'
    tests = extract_embedded_tests(spec, "f")
    assert [(t.call_expr, t.expected_literal) for t in tests] == [('f(1, "a")', "[1]")]


def test_unparseable_lines_never_fatal():
    spec = ">>> f(\nassert f( == ==\n@@@@\n"
    assert extract_embedded_tests(spec, "f") == ()


def test_parse_assertion_line_verbatim_segments():
    case = parse_assertion_line("assert f( 1,  2 ) == { 'a' : 1 }", "f")
    assert case.call_expr == "f( 1,  2 )"
    assert case.expected_literal == "{ 'a' : 1 }"


def test_limit_tests():
    tests = extract_embedded_tests("assert f(1) == 1\nassert f(2) == 2\nassert f(3) == 3\n", "f")
    assert len(limit_tests(tests, None)) == 3
    assert len(limit_tests(tests, 2)) == 2
    assert len(limit_tests(tests, 10)) == 3


def test_load_humaneval_toy():
    specs = load_benchmark(TOY_BENCHMARK, "humaneval")
    assert [s.task_id for s in specs] == ["toy/1", "toy/2", "toy/3"]
    by_id = {s.task_id: s for s in specs}
    assert by_id["toy/1"].embedded_tests[0].call_expr == "double(2)"
    assert by_id["toy/2"].embedded_tests[0].expected_literal == '"abcd"'
    # check() split into per-assert suite entries with candidate renamed
    assert by_id["toy/1"].eval_suite.count == 3
    assert "double(2) == 4" in by_id["toy/1"].eval_suite.assertions[0]
    assert "candidate" not in by_id["toy/1"].eval_suite.assertions[0]


def test_load_digit_sum_record():
    spec = load_humaneval(HE84_BENCHMARK)[0]
    assert spec.task_id == "HumanEval/84"
    assert spec.entry_point == "solve"
    assert spec.eval_suite.count == 7
    assert any('solve(1000) == ' in a and "'1'" in a for a in spec.eval_suite.assertions)
    # the prose-style examples in this prompt match neither extraction form
    assert spec.embedded_tests == ()


def test_check_with_loop_falls_back_to_whole_suite(tmp_path):
    record = {
        "task_id": "t",
        "prompt": "def f(x):\n    pass\n",
        "entry_point": "f",
        "test": "def check(candidate):\n    for i in range(3):\n        assert candidate(i) == i\n",
    }
    path = tmp_path / "b.jsonl"
    path.write_text(json.dumps(record) + "\n")
    suite = load_humaneval(str(path))[0].eval_suite
    assert suite.count == 1
    assert "check(f)" in suite.assertions[0]


def test_check_setup_statements_carried_into_assertions(tmp_path):
    record = {
        "task_id": "t",
        "prompt": "def f(x):\n    pass\n",
        "entry_point": "f",
        "test": "def check(candidate):\n    import math\n    x = 4\n    assert candidate(x) == math.sqrt(16)\n",
    }
    path = tmp_path / "b.jsonl"
    path.write_text(json.dumps(record) + "\n")
    suite = load_humaneval(str(path))[0].eval_suite
    assert suite.count == 1
    assert "import math" in suite.assertions[0]
    assert "f(x)" in suite.assertions[0]


def test_load_mbpp(tmp_path):
    record = {
        "task_id": 11,
        "text": "Write a function to remove first and last occurrence of a given character from the string.",
        "code": "def remove_Occ(s, ch):\n    ...",
        "test_list": [
            'assert remove_Occ("hello","l") == "heo"',
            'assert remove_Occ("abcda","a") == "bcd"',
        ],
    }
    path = tmp_path / "mbpp.jsonl"
    path.write_text(json.dumps(record) + "\n")
    spec = load_mbpp(str(path))[0]
    assert spec.task_id == "11"
    assert spec.entry_point == "remove_Occ"
    assert spec.eval_suite.count == 2


def test_load_apps_call_form(tmp_path):
    problem = tmp_path / "0001"
    problem.mkdir()
    (problem / "question.txt").write_text("Return the sum of a list.\n")
    (problem / "input_output.json").write_text(
        json.dumps({"fn_name": "list_sum", "inputs": [[[1, 2, 3]], [[0]]], "outputs": [[6], [0]]})
    )
    spec = load_apps(str(tmp_path))[0]
    assert spec.entry_point == "list_sum"
    assert spec.eval_suite.assertions == (
        "assert list_sum([1, 2, 3]) == 6",
        "assert list_sum([0]) == 0",
    )


def test_load_apps_stdin_style_rejected(tmp_path):
    problem = tmp_path / "0001"
    problem.mkdir()
    (problem / "question.txt").write_text("Read numbers from stdin.\n")
    (problem / "input_output.json").write_text(json.dumps({"inputs": ["1 2\n"], "outputs": ["3\n"]}))
    with pytest.raises(FormatError):
        load_apps(str(tmp_path))


def test_missing_file_is_io_error():
    with pytest.raises(IoError):
        load_benchmark("/nonexistent/path.jsonl", "humaneval")


def test_unknown_format_rejected():
    with pytest.raises(FormatError):
        load_benchmark(TOY_BENCHMARK, "livecode")


def test_suite_count_property():
    suite = EvaluationSuite(assertions=("assert True", "assert 1"))
    assert suite.count == 2
