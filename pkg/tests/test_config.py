import json

import numpy as np
import pytest

from saddle_exit.config import dump_config, load_config, parse_config, resolve
from saddle_exit.errors import ConfigError

BASE = {"model": {"name": "linear-saddle", "params": {"lam": 1.0, "mu": 2.0}},
        "domain": {"kind": "ball", "radius": 1.0}, "eps": 1e-3, "n": 10, "seed": 3}


def with_(**kw):
    d = json.loads(json.dumps(BASE))
    d.update(kw)
    return d


def test_round_trip():
    cfg = parse_config(json.dumps(with_(eps_list=[1e-2, 1e-3, 1e-4], tolerances={"K": 5})))
    again = parse_config(dump_config(cfg))
    assert again.raw == cfg.raw
    assert dump_config(again) == dump_config(cfg)
    assert again.tolerances["K"] == 5 and again.tolerances["rtol"] == 1e-9


def test_shipped_configs_parse():
    for name in ("linear_saddle", "cubic_saddle", "shifted_custom"):
        cfg = load_config(f"configs/{name}.json")
        resolve(cfg)


@pytest.mark.parametrize("patch,field", [
    ({"eps": 0}, "eps"),
    ({"eps": -1e-3}, "eps"),
    ({"n": 0}, "n"),
    ({"seed": -1}, "seed"),
    ({"colour": "red"}, "colour"),
    ({"tolerances": {"rtol": 1e-9, "bogus": 1}}, "bogus"),
    ({"domain": {"kind": "ball", "radius": 1.0, "extra": 2}}, "domain"),
    ({"domain": {"kind": "ball", "radius": -1.0}}, "radius"),
    ({"model": {"name": "no-such-model"}}, "model"),
    ({"eps_list": [1e-3, 1e-2, 1e-4]}, "eps_list"),
    ({"x0": [0.0, 0.0, 0.0]}, "x0"),
])
def test_invalid_configs_name_the_field(patch, field):
    with pytest.raises(ConfigError) as exc:
        parse_config(with_(**patch))
    assert field in str(exc.value)


def test_unknown_model_parameter():
    with pytest.raises(ConfigError, match="unknown parameters"):
        resolve(parse_config(with_(model={"name": "linear-saddle", "params": {"R": 2.0}})))


def test_x0_outside_domain():
    with pytest.raises(ConfigError, match="x0"):
        resolve(parse_config(with_(x0=[2.0, 0.0])))


def test_invalid_json_text():
    with pytest.raises(ConfigError, match="JSON"):
        parse_config("{not json")


def test_degree_limit():
    table = {"dim": 1, "components": [[{"coef": 1.0, "powers": [5]}]]}
    with pytest.raises(ConfigError, match="degree"):
        resolve(parse_config({"model": {"polynomial": table},
                              "domain": {"kind": "ball", "radius": 1.0}}))


def test_box_bounds_checked():
    with pytest.raises(ConfigError, match="lower"):
        parse_config(with_(domain={"kind": "box", "lower": [1, -1], "upper": [-1, 1]}))


def test_level_set_domain():
    dom = {"kind": "level-set", "terms": [{"coef": 1, "powers": [2, 0]}, {"coef": 1, "powers": [0, 2]},
                                          {"coef": -1, "powers": [0, 0]}]}
    exp = resolve(parse_config(with_(domain=dom)))
    assert exp.model.domain.g(np.zeros(2)) == -1.0
    assert exp.model.domain.diameter == pytest.approx(2.0, rel=1e-6)


def test_shifted_fixed_point():
    exp = resolve(load_config("configs/shifted_custom.json"))
    assert np.allclose(exp.offset, [1.0, 2.0], atol=1e-12)
    assert np.allclose(exp.model.b(np.zeros(2)), 0, atol=1e-12)
    assert np.allclose(exp.x0, 0, atol=1e-12)


def test_overrides():
    cfg = parse_config(with_()).with_overrides(seed=42, n=None)
    assert cfg.seed == 42 and cfg.n == 10
