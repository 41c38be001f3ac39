import numpy as np
import pytest
import yaml

from cltlab.billiard import BilliardMap
from cltlab.config import load_config, parse_config, sympy_branch
from cltlab.errors import ConfigError
from cltlab.systems import DoublingMap, IteratedMap, PiecewiseExpandingMap, ToralAutomorphism


def base(**over):
    d = {"seed": 1, "system": {"name": "doubling"}, "observable": {"name": "sawtooth"}}
    d.update(over)
    return d


def field_of(data):
    with pytest.raises(ConfigError) as ei:
        parse_config(data)
    return ei.value.field


def test_minimal():
    cfg = parse_config(base())
    assert isinstance(cfg.system, DoublingMap)
    assert (cfg.schedule.p, cfg.schedule.q, cfg.schedule.k) == (39, 6, 222)
    assert cfg.budgets["samples"] == 100_000
    assert len(cfg.config_hash) == 64


def test_hash_is_content_addressed():
    assert parse_config(base()).config_hash == parse_config(base()).config_hash
    assert parse_config(base()).config_hash != parse_config(base(seed=2)).config_hash


def test_errors_name_the_field():
    assert field_of({"system": {"name": "doubling"}, "observable": {"name": "sawtooth"}}) == "seed"
    assert field_of(base(schedule={"a": 0.2, "b": 0.3})) == "schedule.a"
    assert field_of(base(schedule={"a": 0.3, "b": 0.3})) == "schedule.a"
    assert field_of(base(schedule={"a": 0.3, "b": -0.1})) == "schedule.b"
    assert field_of(base(system={"name": "henon"})) == "system.name"
    assert field_of(base(observable={"name": "nope"})) == "observable.name"
    assert field_of(base(budgets={"samples": 0})) == "budgets.samples"
    assert field_of(base(budgets={"widgets": 5})) == "budgets.widgets"
    assert field_of(base(seed=-1)) == "seed"
    assert field_of(base(system={"name": "cat", "matrix": [[1, 1], [0, 1]]})) == "system.matrix"
    assert field_of(base(system={"name": "billiard", "scatterers": [
        {"center": [0, 0], "radius": 0.4}, {"center": [0.5, 0.5], "radius": 0.4}]})) == "system.scatterers"
    assert field_of(base(constants={"pw": {"Lambda": 0.5}})) == "constants.pw"
    assert field_of(base(regularity={"f": {"K": 1, "theta": 2, "sup_norm": 1}})) == "regularity.f"


def test_systems_build():
    cat = parse_config(base(system={"name": "cat"}, observable={"name": "cos-first-coordinate"}))
    assert isinstance(cat.system, ToralAutomorphism)
    sq = parse_config(base(system={"name": "doubling", "power": 2}))
    assert isinstance(sq.system, IteratedMap) and sq.system.expansion == 4
    b = parse_config(base(system={"name": "billiard", "scatterers": [{"center": [0.5, 0.5], "radius": 0.25}]},
                          observable={"name": "free-path"}))
    assert isinstance(b.system, BilliardMap)


def test_piecewise_from_formulas():
    cfg = parse_config(base(system={"name": "piecewise", "branches": [
        {"domain": [0, 0.5], "formula": "2*x"}, {"domain": [0.5, 1], "formula": "2 - 2*x"}]}))
    s = cfg.system
    assert isinstance(s, PiecewiseExpandingMap) and s.expansion == pytest.approx(2)
    assert s.inverse_branch_check() < 1e-12
    assert field_of(base(system={"name": "piecewise", "branches": [
        {"domain": [0, 1], "formula": "2*x + y"}]})) == "system.branches[0].formula"


def test_sympy_branch_nonlinear():
    br = sympy_branch((0.0, 1.0), "(3*x + x**2) / 4 * 4 / 4")
    y = np.linspace(0.05, 0.95, 7)
    x = br.inverse(y)
    np.testing.assert_allclose(br.forward(x), y, atol=1e-12)
    np.testing.assert_allclose(br.dabs(x), (3 + 2 * x) / 4, atol=1e-12)


def test_load_config(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text(yaml.safe_dump(base()))
    assert load_config(p).seed == 1
    p.write_text("seed: [unclosed")
    with pytest.raises(ConfigError):
        load_config(p)


def test_hash_ignores_output_and_workers():
    a = parse_config(base(output="x", workers=1)).config_hash
    assert a == parse_config(base(output="y", workers=4)).config_hash == parse_config(base()).config_hash
