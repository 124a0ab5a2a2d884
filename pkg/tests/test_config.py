import pytest
from hypothesis import given, settings, strategies as st

from screened_landau.config import SCHEMA, defaults, emit_config, parse_config
from screened_landau.errors import ConfigError


def test_minimal_config_fills_defaults():
    cfg = parse_config("[equilibrium]\nkind = maxwellian\n")
    assert cfg["domain.nx"] == 256 and cfg.dimension == 3 and cfg["solver.picard_tol"] == 1e-8


def test_sections_and_dotted_keys_agree():
    a = parse_config("[domain]\nnx = 64  # comment\n")
    b = parse_config("domain.nx = 64\n")
    assert a == b


def test_grid_solver_rejects_d3_with_line_number():
    with pytest.raises(ConfigError, match=r"line 2: nonlinear grid path supports d in \{1, 2\}"):
        parse_config("experiment = nonlinear-evolve\nequilibrium.dimension = 3\n")


@pytest.mark.parametrize("text, pattern", [
    ("domain.nx = 64\nfoo = 1\n", "line 2: unknown key"),
    ("domain.nx = sixty\n", "line 1: domain.nx expects int"),
    ("domain.nx = 1\ndomain.nx = 2\n", "line 2: duplicate key"),
    ("equilibrium.kind = bump\n", "equilibrium.bump.u"),
    ("just words\n", "line 1: expected"),
    ("domain.L = -3\n", "line 1: domain.L must be positive"),
])
def test_errors_are_descriptive(text, pattern):
    with pytest.raises(ConfigError, match=pattern):
        parse_config(text)


finite = st.floats(min_value=1e-6, max_value=1e6, allow_nan=False, allow_infinity=False)


@settings(max_examples=60, deadline=None)
@given(nx=st.integers(4, 4096), L=finite, theta=finite, tol=finite, seed=st.integers(0, 2**31),
       exp=st.sampled_from(["penrose", "kernel-decay", "linear-evolve", "characteristics", "accept"]),
       out=st.text(alphabet="abcxyz_/-.0123456789", min_size=1, max_size=12))
def test_round_trip(nx, L, theta, tol, seed, exp, out):
    cfg = defaults().replace(domain__nx=nx, domain__L=L, equilibrium__theta=theta, solver__tol=tol,
                             seed=seed, experiment=exp, output__dir=out)
    assert parse_config(emit_config(cfg)) == cfg


def test_every_schema_key_round_trips():
    text = emit_config(defaults())
    assert parse_config(text) == defaults()
    assert all(k in SCHEMA for k in defaults().values)
