import argparse

import pytest
from pydantic import ValidationError

from phase_ranging.settings import ExperimentConfig
from phase_ranging.utils import (
    CommaListAction,
    describe_validation_error,
    format_meters,
    make_pretty_md_table,
    make_pretty_md_table_from_dict,
)


def test_md_table_alignment():
    table = make_pretty_md_table(["Mode", "RMSE (m)"], [["mps", "0.120"], ["wps", "n/a"]])
    assert table.splitlines() == [
        "| Mode | RMSE (m) |",
        "|------|---------:|",
        "| mps  |    0.120 |",
        "| wps  |      n/a |",
    ]


def test_md_table_without_rows():
    assert make_pretty_md_table(["Tone", "Re h^2"], []) == "| Tone | Re h^2 |\n|------|--------|"


def test_md_table_from_dict():
    table = make_pretty_md_table_from_dict([{"F": "0.1", "L": "9"}, {"F": "0.5", "Note": "x"}])
    assert table.splitlines()[0] == "| F   | L | Note |"
    assert table.splitlines()[3] == "| 0.5 |   | x    |"


def test_format_meters():
    assert format_meters(0.12345) == "0.123"
    assert format_meters(float("nan")) == "n/a"


def test_comma_list_action():
    parser = argparse.ArgumentParser()
    parser.add_argument("--mode", action=CommaListAction, allowed=["mps", "wps"], default=["mps"])
    assert parser.parse_args([]).mode == ["mps"]
    assert parser.parse_args(["--mode", "wps, mps", "--mode", "wps"]).mode == ["wps", "mps", "wps"]
    with pytest.raises(SystemExit):
        parser.parse_args(["--mode", "omp"])


def test_describe_validation_error():
    with pytest.raises(ValidationError) as exc_info:
        ExperimentConfig(realizations=0, workers=0)
    message = describe_validation_error(exc_info.value)
    assert message.startswith("You have 2 invalid settings:")
    assert "`ExperimentConfig.realizations`" in message
