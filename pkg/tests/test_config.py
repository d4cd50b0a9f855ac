import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from morawetz_lab.config import (
    CHECKS,
    SCHEMA,
    ConvergeSpec,
    DataSpec,
    GridConfig,
    ScenarioConfig,
    SweepSpec,
    emit_config,
    load_config,
    parse_config,
    shipped_scenarios,
)
from morawetz_lab.errors import ConfigError
from morawetz_lab.model import ModelParams

BASE = f'''schema = "{SCHEMA}"
id = "demo"

[model]
epsilon = 0.01

[grid]
spacing = 0.1

[checks]
enabled = ["noether"]
'''


def test_shipped_scenarios_present():
    names = set(shipped_scenarios())
    assert {"conservation", "lemma_only", "t_sweep", "trapped_packet", "traveling_packet", "balance_ladder"} <= names


@pytest.mark.parametrize("name", sorted(shipped_scenarios()))
def test_shipped_round_trip(name):
    cfg = load_config(shipped_scenarios()[name])
    assert cfg.id == name
    assert parse_config(emit_config(cfg)) == cfg


def test_minimal_defaults():
    cfg = parse_config(BASE)
    assert cfg.modes == (0,)
    assert cfg.checks == ("noether",)
    assert cfg.sweep is None and cfg.converge is None
    assert cfg.grid == GridConfig(spacing=0.1)


def err(text):
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    return str(exc.value)


def test_unknown_key_names_field_and_line():
    msg = err(BASE.replace("spacing = 0.1", "spacing = 0.1\nspcing = 0.2"))
    assert "[grid].spcing" in msg and "line 9" in msg


def test_unknown_section():
    msg = err(BASE + "\n[solver]\norder = 4\n")
    assert "[solver]" in msg and "line 13" in msg


def test_unknown_top_level_key():
    assert "colour" in err(BASE.replace('id = "demo"', 'id = "demo"\ncolour = 1'))


def test_schema_errors():
    assert "schema" in err(BASE.replace(f'schema = "{SCHEMA}"\n', ""))
    msg = err(BASE.replace("@1", "@2"))
    assert "unsupported schema" in msg and "line 1" in msg


def test_missing_id():
    assert "id" in err(BASE.replace('id = "demo"\n', ""))


def test_bad_value_names_field():
    msg = err(BASE.replace("epsilon = 0.01", "epsilon = -1.0"))
    assert "epsilon" in msg and "[model]" in msg


def test_wrong_type_list():
    msg = err(BASE + "\n[sweep]\naxis = \"T\"\nvalues = 3\n")
    assert "[sweep].values" in msg and "expected a list" in msg


def test_unknown_check():
    msg = err(BASE.replace('["noether"]', '["noether", "vibes"]'))
    assert "vibes" in msg and "[checks].enabled" in msg


def test_conservation_needs_eps_zero():
    assert "epsilon = 0" in err(BASE.replace('["noether"]', '["energy_conservation"]'))


def test_non_halving_spacings():
    msg = err(BASE + "\n[converge]\nspacings = [0.1, 0.05, 0.02]\n")
    assert "halve" in msg and "[converge]" in msg


def test_bad_diagnostics():
    assert "diagnostics" in err(BASE + '\n[converge]\ndiagnostics = ["vibes"]\n')
    assert "list of strings" in err(BASE + "\n[converge]\ndiagnostics = [1]\n")


def test_modes_validation():
    assert "modes" in err(BASE + "\n[modes]\nell = [1, 1]\n")
    assert "list of int" in err(BASE + "\n[modes]\nell = [0.5]\n")


def test_syntax_error():
    assert "TOML syntax error" in err("schema = ")


def test_load_error_names_path(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text(BASE.replace("@1", "@9"))
    with pytest.raises(ConfigError, match="bad.toml"):
        load_config(p)
    with pytest.raises(ConfigError, match="missing.toml"):
        load_config(tmp_path / "missing.toml")


def test_sweep_needs_two_values():
    with pytest.raises(ValueError):
        SweepSpec("T", (25.0,))


configs = st.builds(
    ScenarioConfig,
    id=st.text("abcxyz_", min_size=1, max_size=8),
    model=st.builds(ModelParams, epsilon=st.just(0.0) | st.floats(1e-3, 0.1), alpha=st.floats(0.05, 0.5), t_horizon=st.floats(50.0, 200.0)),
    grid=st.builds(GridConfig, spacing=st.floats(0.01, 0.5), cfl=st.floats(0.1, 1.0)),
    modes=st.lists(st.integers(0, 6), min_size=1, max_size=4, unique=True).map(tuple),
    data=st.builds(DataSpec, center=st.floats(-5, 5), width=st.floats(0.1, 3), phase=st.sampled_from(["real", "imaginary", "complex"])),
    checks=st.lists(st.sampled_from([c for c in CHECKS if c != "energy_conservation"]), unique=True).map(tuple),
    sweep=st.none() | st.builds(SweepSpec, axis=st.just("ell"), values=st.lists(st.floats(0, 5), min_size=2, max_size=4).map(tuple)),
    converge=st.none() | st.builds(ConvergeSpec, spacings=st.floats(0.05, 0.4).map(lambda h: (h, h / 2, h / 4))),
)


@settings(max_examples=50, deadline=None)
@given(configs)
def test_round_trip_property(cfg):
    assert parse_config(emit_config(cfg)) == cfg
