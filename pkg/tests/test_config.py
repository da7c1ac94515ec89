import pytest

from netctl.config import (PINNED, ConfigError, ExperimentSpec, dump_config, load_config,
                           parse_config)


def test_pinned_duffing_n10():
    s = load_config("duffing-n10")
    assert (s.model, s.N, s.T, s.h, s.scheme) == ("duffing", 10, 10, 1e-4, "TI")
    assert s.budget == 4 and s.mode == "exactly"


def test_pinned_duffing_n60():
    s = load_config("duffing-n60")
    assert s.N == 60 and s.M_max == 30 and s.mode == "at-most" and s.baseline_count == 500


def test_pinned_memory_n25():
    s = load_config("memory-n25")
    assert (s.N, s.T, s.h, s.scheme, s.epsilon) == (25, 10, 1e-2, "FE", 0.8)
    assert s.baseline_count == 1000


def test_all_pinned_parse():
    for name in PINNED:
        assert isinstance(load_config(name), ExperimentSpec)


def test_model_defaults():
    s = parse_config("model.kind = memory\n")
    assert (s.N, s.scheme, s.h, s.xd_policy) == (25, "FE", 1e-2, "pattern")


def test_errors_cite_lines():
    with pytest.raises(ConfigError) as exc:
        parse_config("seed = 1\n\n# comment\nbogus.key = 3\n")
    assert exc.value.line == 4 and "bogus.key" in str(exc.value)
    with pytest.raises(ConfigError) as exc:
        parse_config("scheme.h = 0.1\nscheme.h = 0.2\n")
    assert exc.value.line == 2
    with pytest.raises(ConfigError) as exc:
        parse_config("seed = 1\nscheme.h = 0\n")
    assert exc.value.line == 2 and "positive" in str(exc.value)
    with pytest.raises(ConfigError) as exc:
        parse_config("scheme.h = -1e-3\n")
    assert exc.value.line == 1
    with pytest.raises(ConfigError) as exc:
        parse_config("model.N = ten\n")
    assert exc.value.line == 1
    with pytest.raises(ConfigError):
        parse_config("just text\n")
    with pytest.raises(ConfigError):
        parse_config("budget.M_max = 11\nmodel.N = 10\n")
    with pytest.raises(ConfigError):
        load_config("/nonexistent/file.cfg")


def test_dump_roundtrip(tmp_path):
    for name in PINNED:
        s = load_config(name)
        p = tmp_path / f"{name}.cfg"
        p.write_text(dump_config(s))
        assert load_config(p) == s
        assert dump_config(load_config(p)) == dump_config(s)
