import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from onmf import divergence as dv
from onmf.config import (SCHEMA, Config, ConfigError, apply_overrides, parse_config, parse_text,
                         render, sweep_grid)


def test_empty_file_gives_canonical_defaults(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("")
    c = parse_config(p)
    assert c == Config()
    assert c["K"] == 40 and c["a"] == 2e4 and c["b"] == 2e4
    assert c["eps"] == 1e-8 and c["eps_prime"] == 1e-8 and c["u_bound"] == 1e8
    assert c["divergence"] is None


def test_beta_parse():
    c = parse_text("divergence = beta:1.5\n")
    assert dv.parse_divergence(c["divergence"]) == dv.DivergenceSpec("beta", 1.5)


def test_comments_quotes_and_auto():
    c = parse_text('# run\n\ndivergence = "kl"\ntau = auto\nT = 50\nwarm_start = yes\n')
    assert c["divergence"] == "kl" and c.is_auto("tau") and c["T"] == 50 and c["warm_start"]


@pytest.mark.parametrize("text", ["eps = 1.5", "eps = 0", "K = 2.5", "K = x", "bogus = 1",
                                  "divergence = nope", "h_policy = newton", "noise = laplace",
                                  "eps_prime = 1e9", "tau = 0", "K = 3\nK = 4", "just text",
                                  "armijo_alpha = 0.7", "outlier_frac = 0"])
def test_rejections(text):
    with pytest.raises(ConfigError):
        parse_text(text)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        parse_config(tmp_path / "none.cfg")


def test_overrides_win_and_are_case_tolerant():
    c = parse_text("K = 5\nT = 10\n")
    c2 = apply_overrides(c, [("K", "7"), ("t", "3"), ("h-max-iters", "9")])
    assert (c2["K"], c2["T"], c2["h_max_iters"]) == (7, 3, 9)
    with pytest.raises(ConfigError):
        apply_overrides(c, [("nope", "1")])


def test_sweep_grid():
    grid = sweep_grid(["K=3,5", "a=1,2,3"])
    assert len(grid) == 6
    assert grid[0] == [("K", "3"), ("a", "1")]
    assert sweep_grid([]) == [[]]
    with pytest.raises(ConfigError):
        sweep_grid(["K"])


def test_render_header_and_round_trip():
    c = Config({"divergence": "huber:0.01", "data": "my data.txt", "tau": 25})
    text = render(c, ["hello"])
    assert text.startswith("# hello\n")
    assert parse_text(text) == c


values = {
    "divergence": st.sampled_from(["kl", "is", "sql2", "l1", "huber:0.5", "beta:1.5", "alpha:0.3"]),
    "K": st.integers(1, 100),
    "a": st.floats(1e-3, 1e6),
    "eps": st.floats(1e-12, 0.5),
    "tau": st.one_of(st.just("auto"), st.integers(1, 100)),
    "h_tol": st.floats(0, 1),
    "warm_start": st.booleans(),
    "data": st.text("abc d#'\"/", max_size=8),
    "noise": st.sampled_from(["matched", "gamma", "outliers"]),
    "clip_hi": st.one_of(st.just("auto"), st.floats(1.0, 1e4)),
}


@settings(max_examples=200, deadline=None)
@given(st.fixed_dictionaries({}, optional=values))
def test_render_parse_round_trip(vals):
    c = Config(vals)
    assert parse_text(render(c)) == c


def test_every_key_is_documented_in_render():
    text = render(Config({"divergence": "kl"}))
    keys = {line.split(" = ")[0] for line in text.splitlines()}
    assert keys == set(SCHEMA)
