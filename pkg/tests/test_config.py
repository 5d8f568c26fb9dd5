import pytest

from ultratongue.config import (
    DEFAULT_SYSTEMS, ExperimentConfig, SweepGrid, load_config, parse_system_name, parse_widths,
)
from ultratongue.errors import ConfigError
from ultratongue.mlp import MlpSpec


def test_defaults_are_the_three_reference_systems():
    cfg = load_config()
    assert tuple(s.name for s in cfg.systems) == DEFAULT_SYSTEMS
    assert cfg.n_components == 128 and cfg.mfcc.n_mfcc == 25
    assert cfg.validation_fraction == 0.1


@pytest.mark.parametrize("name, dims, target", [
    ("2x1000+ET", (50, 1000, 1000, 128), "et"),
    ("2x1000+pixels", (50, 1000, 1000, 4096), "pixels"),
    ("5x5000+ET", (50, 5000, 5000, 5000, 5000, 5000, 128), "et"),
])
def test_system_names_map_to_layer_sizes(name, dims, target):
    s = parse_system_name(name)
    out = 128 if s.target == "et" else 4096
    assert s.target == target
    assert MlpSpec(50, s.hidden, out).layer_dims == dims


def test_table_labels():
    s = parse_system_name("2x1000+pixels")
    assert s.hidden_text == "2 x 1000 units" and s.features_text(128) == "64x64 pixels"
    assert parse_system_name("5x5000+ET").features_text(128) == "128 ETs"


@pytest.mark.parametrize("text, widths", [("5x256", (256,) * 5), ("300, 200", (300, 200)), ("7", (7,))])
def test_parse_widths(text, widths):
    assert parse_widths(text) == widths


@pytest.mark.parametrize("bad", ["0x5", "abc", "5,-1", ""])
def test_bad_widths(bad):
    with pytest.raises(ConfigError):
        parse_widths(bad)


def test_tiny_config(tiny_cfg, tmp_path):
    assert tiny_cfg.out == tmp_path / "out"
    assert tiny_cfg.seed == 5 and tiny_cfg.train.seed == 5
    assert [s.name for s in tiny_cfg.systems] == ["2x16+ET", "1x8+pixels"]
    assert tiny_cfg.sweep == SweepGrid(("sgd", "rmsprop", "adam"), (16, 32), ((8,),), "et")
    assert len(tiny_cfg.sweep.cells()) == 6


def test_overrides(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text("[experiment]\nseed = 1\n")
    cfg = load_config(path, {"seed": 9, "out": str(tmp_path / "o")})
    assert cfg.seed == 9 and cfg.train.seed == 9 and cfg.out == tmp_path / "o"


def test_system_section_overrides_widths(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text("[systems]\nnames = 5x5000+ET, mine\n[system 5x5000+ET]\nhidden = 5x64\n"
                    "[system mine]\nhidden = 10,20\ntarget = pixels\n")
    cfg = load_config(path)
    assert cfg.system("5x5000+ET").hidden == (64,) * 5
    assert cfg.system("mine").hidden == (10, 20) and cfg.system("mine").target == "pixels"
    with pytest.raises(ConfigError):
        cfg.system("other")


@pytest.mark.parametrize("text", [
    "[train]\noptimizer = lbfgs\n",
    "[train]\nbatch_size = many\n",
    "[features]\nn_bananas = 3\n",
    "[systems]\nnames = 2x10+sound\n",
    "[sweep]\noptimizers = adagrad\n",
    "[evaluate]\ndump_frames = perhaps\n",
    "not an ini file",
    "[train]\nvalidation_fraction = 1.5\n",
])
def test_bad_configs(tmp_path, text):
    path = tmp_path / "bad.ini"
    path.write_text(text)
    with pytest.raises(ConfigError):
        load_config(path)


def test_missing_file():
    with pytest.raises(ConfigError):
        load_config("/nonexistent/x.ini")


def test_empty_system_list():
    with pytest.raises(ConfigError):
        ExperimentConfig(systems=())
