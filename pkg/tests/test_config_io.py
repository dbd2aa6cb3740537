import json
import os

import numpy as np
import pytest

from fermikin.config import ConfigError, parse_config_text
from fermikin.config import test_function as named_test_function
from fermikin.fields_io import (
    FIELD_CSV_HEADER,
    atomic_write_text,
    field_csv_text,
    read_field_csv,
    write_field_csv,
)
from fermikin.lattice import ScalarField, make_grid
from fermikin.runner import compare_fields, compare_csv

MINIMAL_MICRO = """
[run]
experiment = micro
seed = 7

[grid]
L = 8

[physics]
eta = 0.5
lambda = 0.25
T = 0.2
dt = 0.02
samples = 4
"""


def test_minimal_micro_config_defaults():
    cfg = parse_config_text(MINIMAL_MICRO)
    assert cfg.experiment == "micro"
    assert cfg.seed == 7
    assert cfg.get("physics", "scaling") == "eta2"
    assert cfg.get("picard", "tol") == 1e-3
    assert cfg.get("initial", "kind") == "cosine_bump"
    assert cfg.get("potential", "kind") == "cosine_bump"


def test_odd_l_rejected_with_line():
    text = MINIMAL_MICRO.replace("L = 8", "L = 15")
    with pytest.raises(ConfigError) as err:
        parse_config_text(text, origin="demo.ini")
    assert "L must be even" in str(err.value)
    assert "demo.ini:7" in str(err.value)


def test_scaling_lambda_requires_delta():
    text = MINIMAL_MICRO + "scaling = lambda\n"
    with pytest.raises(ConfigError) as err:
        parse_config_text(text)
    assert "delta" in str(err.value)


def test_unknown_key_and_section():
    with pytest.raises(ConfigError) as err:
        parse_config_text(MINIMAL_MICRO + "bogus = 1\n", origin="x.ini")
    assert "unknown key 'bogus'" in str(err.value)
    with pytest.raises(ConfigError) as err:
        parse_config_text("[nope]\nkey = 1\n", origin="x.ini")
    assert "unknown section" in str(err.value)


def test_type_mismatch_reports_key_and_line():
    text = MINIMAL_MICRO.replace("samples = 4", "samples = four")
    with pytest.raises(ConfigError) as err:
        parse_config_text(text, origin="bad.ini")
    assert "samples" in str(err.value) and "bad.ini:14" in str(err.value)


def test_duplicate_key_rejected():
    with pytest.raises(ConfigError) as err:
        parse_config_text(MINIMAL_MICRO + "eta = 0.4\n")
    assert "duplicate" in str(err.value)


def test_experiment_required_and_alias():
    with pytest.raises(ConfigError):
        parse_config_text("[grid]\nL = 8\n")
    cfg = parse_config_text(
        "[run]\nexperiment = fixed-point-theorem3\n[grid]\nL = 8\n[physics]\nlambda = 0.1\n"
    )
    assert cfg.experiment == "fixed-point"


def test_field_csv_roundtrip(tmp_path, rng):
    g = make_grid(4)
    f = ScalarField(g, rng.random(g.shape))
    path = str(tmp_path / "f.csv")
    write_field_csv(path, f)
    back = read_field_csv(path, expected_grid=g)
    assert np.array_equal(back.values, f.values)
    # text round trip is byte-identical
    assert field_csv_text(back) == open(path).read()
    first = open(path).readline().strip()
    assert first == FIELD_CSV_HEADER


def test_field_csv_rejects_corruption(tmp_path, rng):
    g = make_grid(4)
    f = ScalarField(g, rng.random(g.shape))
    path = str(tmp_path / "f.csv")
    write_field_csv(path, f)
    lines = open(path).read().splitlines()
    lines[1], lines[2] = lines[2], lines[1]  # break ordering
    bad = str(tmp_path / "bad.csv")
    open(bad, "w").write("\n".join(lines) + "\n")
    with pytest.raises(ValueError):
        read_field_csv(bad)


def test_atomic_write_leaves_no_temp(tmp_path):
    path = str(tmp_path / "out.txt")
    atomic_write_text(path, "hello\n")
    assert open(path).read() == "hello\n"
    leftovers = [n for n in os.listdir(tmp_path) if n.startswith(".tmp-")]
    assert leftovers == []


def test_compare_trivials(rng):
    g = make_grid(4)
    mu = ScalarField(g, rng.random(g.shape))
    rep = compare_fields(mu, mu, "one", "one")
    assert rep.weak_error == 0.0 and rep.sup_error == 0.0
    c = 0.123
    shifted = ScalarField(g, mu.values + c)
    rep = compare_fields(shifted, mu, "one", "one")
    assert rep.weak_error == pytest.approx(c, rel=1e-12)


def test_compare_csv_and_grid_mismatch(tmp_path, rng):
    g = make_grid(4)
    mu = ScalarField(g, rng.random(g.shape))
    ref = ScalarField(g, rng.random(g.shape))
    p1, p2 = str(tmp_path / "a.csv"), str(tmp_path / "b.csv")
    write_field_csv(p1, mu)
    write_field_csv(p2, ref)
    rep = compare_csv(p1, p2, "one", "cos1")
    direct = compare_fields(mu, ref, "one", "cos1")
    assert rep.weak_error == direct.weak_error
    other = ScalarField(make_grid(6), np.zeros((6, 6, 6)))
    p3 = str(tmp_path / "c.csv")
    write_field_csv(p3, other)
    with pytest.raises(ValueError):
        compare_csv(p1, p3, "one", "one")


def test_test_function_names():
    g = make_grid(4)
    assert np.all(named_test_function(g, "one").values == 1.0)
    f = named_test_function(g, "cos1").values
    assert f[0, 0, 0] == pytest.approx(1.0)
    with pytest.raises(ConfigError):
        named_test_function(g, "bogus")


def test_regression_fixture():
    # frozen small-run fixture: comparing the stored mu against the stored
    # kinetic field must reproduce the stored error numbers exactly
    here = os.path.dirname(__file__)
    mu_csv = os.path.join(here, "fixtures", "mu_fixture.csv")
    fk_csv = os.path.join(here, "fixtures", "ft_fixture.csv")
    expected = json.load(open(os.path.join(here, "fixtures", "compare_expected.json")))
    for pair, exp in expected.items():
        f_name, g_name = pair.split(":")
        rep = compare_csv(mu_csv, fk_csv, f_name, g_name)
        assert abs(rep.weak_error - exp["weak_error"]) < 1e-12
        assert abs(rep.sup_error - exp["sup_error"]) < 1e-12
