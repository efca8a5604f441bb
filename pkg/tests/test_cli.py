import filecmp
import os

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from emfsg.analytic import DistributionCurve
from emfsg.cli import (
    EXIT_CONFIG,
    EXIT_IO,
    EXIT_NUMERIC,
    EXIT_OK,
    ConfigError,
    CurveFormatError,
    build_config,
    main,
    parse_config_text,
    read_curve,
    write_curve,
)

SMALL = """\
preset = table1   # reference parameters
rat = 4g
model = ppp
tau_points = 21
n_realizations = 3000
seed = 3
"""


def cfg_file(tmp_path, text=SMALL, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


class TestConfig:
    def test_units_converted(self):
        cfg = build_config(parse_config_text(SMALL + "lambda4_per_km2 = 5\nP4_dBm = 30\nW4_MHz = 10\n"), "rebt")
        assert cfg.params.lambda4 == pytest.approx(5e-6)
        assert cfg.params.P4_eff == pytest.approx(1.0)
        assert cfg.params.W4 == pytest.approx(10e6)
        assert cfg.rats == ("4g",) and cfg.models == ("ppp",)

    @pytest.mark.parametrize("text,match", [
        ("foo = 1\n", "unknown field 'foo'"),
        ("preset = table1\nalpha = four\n", "alpha"),
        ("preset = table1\np = 2\n", "p must lie"),
        ("preset = table1\nrat = 3g\n", "rat"),
        ("alpha = 4\n", "required"),
        ("preset = table1\nlambda4_per_m2 = 1e-6\nlambda4_per_km2 = 1\n", "given twice"),
        ("preset = table1\npreset = table1\n", "duplicate"),
        ("just words\n", "key = value"),
    ])
    def test_errors_name_the_field(self, text, match):
        with pytest.raises(ConfigError, match=match):
            build_config(parse_config_text(text), "analytic")

    def test_bandwidth_only_needed_for_rebt(self):
        text = "".join(f"{k} = {v}\n" for k, v in [
            ("alpha", 4), ("D_m", 40), ("P4_dBm", 45), ("P5_dBm", 51), ("lambda4_per_m2", 7.5e-6),
            ("lambda5_per_m2", 5e-6), ("beta4", 0.75), ("beta5", 0.83), ("eta", 0.05), ("p", 0.7)])
        build_config(parse_config_text(text), "analytic")
        with pytest.raises(ConfigError, match="W4_MHz"):
            build_config(parse_config_text(text), "rebt")


class TestCurveFiles:
    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(-1e300, 1e300), min_size=1, max_size=40))
    def test_roundtrip_exact(self, xs):
        import tempfile

        g = np.sort(np.array(xs))
        c = DistributionCurve(g, np.linspace(0, 1, g.size), "cdf", "analytic", {"k": 1.5})
        with tempfile.TemporaryDirectory() as d:
            path = os.path.join(d, "c.csv")
            write_curve(path, c, {"note": "x"})
            back = read_curve(path)
        np.testing.assert_array_equal(back.grid, c.grid)
        np.testing.assert_array_equal(back.values, c.values)
        assert back.kind == "cdf" and back.provenance == "analytic"

    def test_bad_file(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("x,value\n1,0.5\n2\n")
        with pytest.raises(CurveFormatError, match="line 3"):
            read_curve(str(p))


class TestCommands:
    def test_analytic_deterministic(self, tmp_path):
        cfg = cfg_file(tmp_path)
        a, b = str(tmp_path / "a"), str(tmp_path / "b")
        assert main(["analytic", "--config", cfg, "--out", a]) == EXIT_OK
        assert main(["analytic", "--config", cfg, "--out", b]) == EXIT_OK
        names = sorted(os.listdir(a))
        assert "exposure_4g_ppp_cdf.csv" in names and "exposure_4g_ppp_pdf.csv.json" in names
        match, mismatch, errors = filecmp.cmpfiles(a, b, names, shallow=False)
        assert not mismatch and not errors

    def test_simulate_and_compare(self, tmp_path, capsys):
        cfg = cfg_file(tmp_path)
        out = str(tmp_path / "o")
        assert main(["analytic", "--config", cfg, "--out", out]) == EXIT_OK
        assert main(["simulate", "--config", cfg, "--out", out]) == EXIT_OK
        ana = os.path.join(out, "exposure_4g_ppp_cdf.csv")
        sim = os.path.join(out, "sim_4g_ppp_exposure_ecdf.csv")
        assert main(["compare", ana, sim, "--max-ks", "0.05"]) == EXIT_OK
        assert "ks = " in capsys.readouterr().out
        assert main(["compare", ana, sim, "--max-ks", "1e-9"]) == EXIT_NUMERIC
        with open(os.path.join(out, "sim_4g_ppp_samples.csv")) as fh:
            assert fh.readline().strip() == "S4,I4,S5,I5,exposure,rebt"

    def test_exit_codes(self, tmp_path):
        out = str(tmp_path / "o")
        assert main(["analytic", "--config", cfg_file(tmp_path, "bogus = 1\n"), "--out", out]) == EXIT_CONFIG
        assert main(["analytic", "--config", str(tmp_path / "missing.cfg"), "--out", out]) == EXIT_IO
        assert main(["compare", str(tmp_path / "x.csv"), str(tmp_path / "y.csv")]) == EXIT_IO

    def test_fit_reports_missing_tech(self, tmp_path):
        data = tmp_path / "bs.csv"
        data.write_text("id,lat_deg,lon_deg,tech\na,48.86,2.33,4G\n")
        out = str(tmp_path / "f")
        assert main(["fit", str(data), "--out", out]) == EXIT_OK
        text = open(os.path.join(out, "fit_summary.txt")).read()
        assert "n_4g = 1" in text and "n_5g = 0" in text and "beta_4g" not in text
