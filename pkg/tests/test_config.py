import pytest
from hypothesis import given, settings, strategies as st

from levyasym.catalog import M1, S5, fixtures, power_law, pure_jump
from levyasym.config import (SCHEMA, ConfigError, RunConfig, config_for_model, format_config,
                             load_config, parse_config)


def test_defaults_fill_every_key():
    cfg = RunConfig()
    assert set(cfg.values) == {f"{s}.{k}" for s, keys in SCHEMA.items() for k in keys}
    assert cfg["run.n_paths"] == 256 and cfg["run.step"] == 2.0**-6


def test_parse_values_and_comments():
    cfg = parse_config('''
        # sub-linear drift
        model.g = "(1+x^2)^0.25"   # quoted expression
        model.horizon = 2^10
        run.step = 2^-6
        run.section5 = true
        run.wiener_resolution = none
        measure.family = atoms
        measure.atoms = "1:2, -0.5:0.25"
        model.cutoff = 2
        probe.viii_c = 0.5, 3
    ''')
    assert cfg["model.g"] == "(1+x^2)^0.25"
    assert cfg["model.horizon"] == 1024.0
    assert cfg["run.step"] == 2.0**-6
    assert cfg["run.section5"] is True
    assert cfg["run.wiener_resolution"] is None
    assert cfg["measure.atoms"] == ((1.0, 2.0), (-0.5, 0.25))
    assert cfg["probe.viii_c"] == (0.5, 3.0)
    assert cfg.measure().total_mass == 2.25


def test_hash_inside_quotes_is_kept():
    # '#' is not in the expression grammar, so it survives only to be rejected by the parser
    with pytest.raises(ConfigError) as exc:
        parse_config('model.g = "1 # 2"')
    assert exc.value.line == 1


@pytest.mark.parametrize("text,line", [
    ("model.nope = 1", 1),
    ("bogus.g = 1", 1),
    ("model.g", 1),
    ('\nmodel.g = "x +"', 2),
    ("model.g = x", 1),
    ('model.g = "t + 1"', 1),
    ("run.n_paths = 2.5", 1),
    ("run.section5 = yes", 1),
    ("model.x0 = x", 1),
    ("run.seed = 1\nrun.seed = 2", 2),
    ('measure.atoms = "1"', 1),
])
def test_config_errors_carry_line_numbers(text, line):
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert exc.value.line == line


def test_expression_error_reports_position():
    with pytest.raises(ConfigError) as exc:
        parse_config('model.sigma = "0.2*(1+x^^2)"')
    assert "offset 9" in str(exc.value)


def test_unknown_override_raises():
    with pytest.raises(ConfigError):
        RunConfig().replace(run__nope=1)
    with pytest.raises(ConfigError):
        RunConfig({"x.y": 1})


def test_bad_measure_becomes_config_error():
    with pytest.raises(ConfigError):
        parse_config("measure.family = stable").measure()


@pytest.mark.parametrize("spec,T,step,expected", [
    ("dyadic:4:13", 2.0**13, 2.0**-6, [2.0**k for k in range(4, 14)]),
    ("dyadic", 8.0, 0.5, [1.0, 2.0, 4.0, 8.0]),
    ("1, 3, 2.5", 4.0, 0.5, [1.0, 2.5, 3.0]),
])
def test_checkpoint_policies(spec, T, step, expected):
    cfg = RunConfig().replace(run__checkpoints=spec, model__horizon=T, run__step=step)
    assert cfg.checkpoints() == expected


@pytest.mark.parametrize("spec,T,step", [
    ("5", 4.0, 0.5),          # beyond the horizon
    ("0.3", 4.0, 0.5),        # off the step grid
    ("dyadic:x:3", 8.0, 0.5),
    ("", 8.0, 0.5),
])
def test_bad_checkpoints(spec, T, step):
    cfg = RunConfig().replace(run__checkpoints=spec, model__horizon=T, run__step=step)
    with pytest.raises(ConfigError):
        cfg.checkpoints()


@pytest.mark.parametrize("model", [M1(), S5(), power_law(), pure_jump()]
                         + [f.model for f in fixtures()], ids=lambda m: m.name)
def test_catalog_models_round_trip(model):
    cfg = config_for_model(model, run__seed=3)
    back = parse_config(format_config(cfg))
    assert back.values == cfg.values
    m2 = back.model()
    assert m2.strings() == model.strings()
    assert (m2.x0, m2.b, m2.horizon) == (model.x0, model.b, model.horizon)
    assert m2.measure.total_mass == pytest.approx(model.measure.total_mass, rel=1e-12)


_floats = st.floats(allow_nan=False, allow_infinity=False, min_value=-1e300, max_value=1e300)


@settings(max_examples=200, deadline=None)
@given(st.fixed_dictionaries({
    "model.x0": _floats,
    "model.b": _floats,
    "model.horizon": st.floats(min_value=1e-6, max_value=1e12),
    "run.n_paths": st.integers(min_value=1, max_value=10**9),
    "run.seed": st.integers(min_value=0, max_value=2**63),
    "run.section5": st.booleans(),
    "run.wiener_resolution": st.none() | st.floats(min_value=1e-9, max_value=1.0),
    "run.checkpoints": st.sampled_from(["dyadic:4:13", "dyadic", "1, 2, 4"]),
    "tol.ratio": st.floats(min_value=0, max_value=1),
    "probe.viii_c": st.lists(st.floats(min_value=0.01, max_value=100), min_size=1,
                             max_size=4).map(tuple),
    "measure.atoms": st.lists(st.tuples(st.floats(min_value=0.01, max_value=0.99),
                                        st.floats(min_value=0, max_value=10)),
                              max_size=3).map(tuple),
    "model.g": st.sampled_from(["(1+x^2)^0.25", "max(1, x^0.5)", "1", "-x^-2 + exp(-x)"]),
    "output.dir": st.sampled_from(["run", "out/a b", "x=1"]),
}))
def test_format_parse_round_trip(values):
    cfg = RunConfig(values)
    assert parse_config(format_config(cfg)).values == cfg.values


def test_load_config(tmp_path):
    p = tmp_path / "c.txt"
    p.write_text('model.g = "1"\nrun.n_paths = 8\n', encoding="utf-8")
    cfg = load_config(p)
    assert cfg["model.g"] == "1" and cfg["run.n_paths"] == 8
