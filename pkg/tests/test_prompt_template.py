import pytest

from search_accelerator.prompt_template import PromptTemplate


def test_get_variables_in_order():
    template = PromptTemplate("Give {{k}} ideas for {{ topic }}; again {{k}}.")
    assert template.get_variables() == ["k", "topic"]


def test_compile_substitutes_every_occurrence():
    template = PromptTemplate("{{k}} / {{topic}} / {{k}}")
    assert template.compile(k="3", topic="rings") == "3 / rings / 3"


def test_compile_missing_variable():
    with pytest.raises(ValueError, match="Missing variable"):
        PromptTemplate("{{a}} {{b}}").compile(a="x")


def test_compile_extra_variable():
    with pytest.raises(ValueError, match="Extra variable"):
        PromptTemplate("{{a}}").compile(a="x", b="y")


def test_compile_rejects_non_string():
    with pytest.raises(ValueError, match="must be a string"):
        PromptTemplate("{{a}}").compile(a=3)


def test_values_are_not_re_expanded():
    assert PromptTemplate("{{a}}|{{b}}").compile(a="{{b}}", b="x") == "{{b}}|x"


def test_default_template_variables():
    assert PromptTemplate.default().get_variables() == ["k", "examples", "journey"]


def test_from_file(tmp_path):
    path = tmp_path / "custom.txt"
    path.write_text("Alternates for {{journey}}", encoding="utf-8")
    assert PromptTemplate.from_file(path).compile(journey="{}") == "Alternates for {}"
