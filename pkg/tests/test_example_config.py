from importlib import resources

import pytest

from ltcs.cli import ConfigFile, build_parser, main
from ltcs.model import desk_preset
from ltcs.training import TrainConfig
from ltcs.world import WorldConfig


@pytest.fixture(scope="module")
def example():
    return ConfigFile(str(resources.files("ltcs") / "data" / "example.yaml"))


def test_example_matches_defaults(example):
    assert example.build("world", WorldConfig) == WorldConfig()
    assert example.build("model", type(desk_preset()), base=desk_preset()) == desk_preset()
    assert example.build("train", TrainConfig) == TrainConfig()


def test_example_sections_accepted_by_commands(example, tmp_path):
    assert set(example.sections) == {"world", "model", "train", "sweep", "stability",
                                     "serve", "bayes"}
    path = str(resources.files("ltcs") / "data" / "example.yaml")
    assert main(["bayes-check", "--config", path, "--out", str(tmp_path)]) == 0


def test_flags_override_file(example):
    args = build_parser().parse_args(["gen-data", "--seed", "9"])
    assert example.build("world", WorldConfig, seed=args.seed).seed == 9
