import csv
import json
import shutil
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from donorspin.cli import main, parse_field_grid

PROTOCOLS = Path(__file__).resolve().parents[1] / "protocols"


def rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def run(*argv):
    return main([str(a) for a in argv])


class TestGrid:
    def test_range_inclusive(self):
        assert parse_field_grid("2.25:7:0.25") == pytest.approx(np.arange(2.25, 7.01, 0.25))

    def test_list_and_scalar(self):
        assert parse_field_grid("1,3,5") == [1.0, 3.0, 5.0]
        assert parse_field_grid("1.75") == [1.75]


class TestTheory:
    def test_voigt_sweep(self, tmp_path, capsys):
        assert run("theory", "--geometry", "voigt", "--b", "2.25:7:0.25", "--temp", "1.5", "--out", tmp_path) == 0
        table = rows(tmp_path / "theory_voigt.csv")
        row = next(r for r in table if float(r["B_T"]) == 5.0)
        assert float(row["T1_s"]) == pytest.approx(7.8e-3, abs=0.8e-3)
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert all(r["run_id"] == manifest["run_id"] for r in table)
        assert "LWA warning" in capsys.readouterr().err

    def test_faraday_single_field(self, tmp_path):
        assert run("theory", "--geometry", "faraday", "--b", "1.75", "--temp", "1.5", "--out", tmp_path) == 0
        (row,) = rows(tmp_path / "theory_faraday.csv")
        assert float(row["T1_s"]) == pytest.approx(0.50, abs=0.05)

    def test_csv_dialect(self, tmp_path):
        run("theory", "--geometry", "both", "--b", "1:3:1", "--out", tmp_path)
        raw = (tmp_path / "theory_faraday.csv").read_bytes()
        assert b"\r" not in raw and raw.endswith(b"\n")
        raw.decode("utf-8")

    def test_missing_geometry(self, tmp_path, capsys):
        assert run("theory", "--b", "1", "--out", tmp_path) == 2
        assert "usage" in capsys.readouterr().err

    def test_bad_grid(self, tmp_path):
        assert run("theory", "--geometry", "voigt", "--b", "a:b", "--out", tmp_path) == 2

    def test_unwritable_output(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        assert run("theory", "--geometry", "voigt", "--b", "1", "--out", blocker / "sub") == 3

    def test_missing_config(self, tmp_path):
        assert run("theory", "--geometry", "voigt", "--b", "1", "--config", tmp_path / "nope.json",
                   "--out", tmp_path) == 3

    def test_invalid_config(self, tmp_path, capsys):
        cfg = tmp_path / "m.json"
        cfg.write_text(json.dumps({"s_t_m_s": 0}))
        assert run("theory", "--geometry", "voigt", "--b", "1", "--config", cfg, "--out", tmp_path) == 1
        assert "s_t" in capsys.readouterr().err

    def test_global_flags_either_side(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert run("--seed", "3", "--out", a, "theory", "--geometry", "voigt", "--b", "5") == 0
        assert run("theory", "--geometry", "voigt", "--b", "5", "--seed", "3", "--out", b) == 0
        assert (a / "theory_voigt.csv").read_bytes() == (b / "theory_voigt.csv").read_bytes()

    def test_negative_seed(self, tmp_path):
        assert run("theory", "--geometry", "voigt", "--b", "5", "--seed", "-1", "--out", tmp_path) == 2


class TestOracle:
    def test_published_closed_form_deviates(self, tmp_path, capsys):
        # the closed form drops interference terms that the full average keeps
        assert run("oracle", "--out", tmp_path) == 1
        assert "1.049e-01" in capsys.readouterr().out
        table = rows(tmp_path / "oracle.csv")
        assert len(table) == 8

    def test_interference_pairing(self, tmp_path):
        assert run("oracle", "--analytic", "interference", "--out", tmp_path) == 0

    def test_tight_tolerance(self, tmp_path):
        assert run("oracle", "--tolerance", "1e-9", "--out", tmp_path) == 1

    def test_low_order(self, tmp_path):
        assert run("oracle", "--quad-order", "4", "--out", tmp_path) == 2


class TestSimulate:
    def test_seeded_outputs_identical(self, tmp_path):
        for d in ("a", "b"):
            assert run("simulate", "--protocol", PROTOCOLS / "t1_voigt.json", "--seed", 42, "--out", tmp_path / d) == 0
        for name in ("recovery.csv", "fit.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_t1_round_trip(self, tmp_path):
        run("simulate", "--protocol", PROTOCOLS / "t1_voigt.json", "--seed", 42, "--out", tmp_path)
        fit = json.loads((tmp_path / "fit.json").read_text())
        assert fit["params"]["T1"] == pytest.approx(0.01, rel=0.05)

    def test_op_trace_decays(self, tmp_path):
        assert run("simulate", "--protocol", PROTOCOLS / "op_trace_voigt.json", "--out", tmp_path) == 0
        y = np.array([float(r["expected_counts"]) for r in rows(tmp_path / "trace.csv")])
        assert np.all(np.diff(y) <= 0)
        assert y[-1] < 0.5 * y[0]

    def test_pump_probe_recovers_t1(self, tmp_path):
        assert run("simulate", "--protocol", PROTOCOLS / "pump_probe_faraday.json", "--seed", 1,
                   "--out", tmp_path) == 0
        summary = json.loads((tmp_path / "manifest.json").read_text())["summary"]
        assert summary["fitted_t1_s"] == pytest.approx(summary["system_t1_s"], rel=0.05)

    @pytest.mark.parametrize("name", ["spectrum_faraday.json", "ple_voigt.json"])
    def test_spectral_protocols(self, tmp_path, name):
        assert run("simulate", "--protocol", PROTOCOLS / name, "--out", tmp_path) == 0

    def test_malformed_segment(self, tmp_path, capsys):
        doc = json.loads((PROTOCOLS / "op_trace_voigt.json").read_text())
        doc["sequence"]["segments"][1]["duration_s"] = -1
        p = tmp_path / "bad.json"
        p.write_text(json.dumps(doc))
        assert run("simulate", "--protocol", p, "--out", tmp_path) == 1
        assert "segments[1]" in capsys.readouterr().err

    def test_unparseable(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{not json")
        assert run("simulate", "--protocol", p, "--out", tmp_path) == 1

    def test_missing_protocol_file(self, tmp_path):
        assert run("simulate", "--protocol", tmp_path / "none.json", "--out", tmp_path) == 3


class TestFit:
    def test_exp_from_simulation(self, tmp_path, capsys):
        run("simulate", "--protocol", PROTOCOLS / "t1_voigt.json", "--seed", 42, "--out", tmp_path / "sim")
        capsys.readouterr()
        assert run("fit", "--model", "exp", "--in", tmp_path / "sim" / "recovery.csv", "--out", tmp_path) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["converged"]
        assert doc["params"]["T1"] == pytest.approx(0.01, rel=0.05)
        assert set(doc) >= {"params", "std_errors", "residual_norm", "converged"}

    def test_powerlaw(self, tmp_path):
        B = np.linspace(1, 7, 7)
        p = tmp_path / "d.csv"
        p.write_text("B_T,T1_s\n" + "".join(f"{b},{2e-3 * b ** -5}\n" for b in B))
        assert run("fit", "--model", "powerlaw", "--in", p, "--out", tmp_path) == 0
        doc = json.loads((tmp_path / "fit.json").read_text())
        assert doc["params"]["n"] == pytest.approx(5.0, abs=1e-6)

    def test_temp_needs_field(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("T_K,T1_s\n1.5,1\n2,0.9\n3,0.8\n")
        assert run("fit", "--model", "temp", "--in", p, "--out", tmp_path) == 2

    def test_degenerate(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("tau_s,y\n" + "".join(f"{t},5\n" for t in range(6)))
        assert run("fit", "--model", "exp", "--in", p, "--out", tmp_path) == 1

    def test_ragged_csv(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("x,y\n1,2\n3\n")
        assert run("fit", "--model", "zeeman", "--in", p, "--out", tmp_path) == 1

    def test_unknown_model(self, tmp_path):
        assert run("fit", "--model", "cubic", "--in", "x.csv", "--out", tmp_path) == 2


class TestReproduce:
    def test_fig3(self, tmp_path):
        assert run("reproduce", "fig3", "--out", tmp_path) == 0
        ratio = [float(r["T1_ratio_faraday_voigt"]) for r in rows(tmp_path / "fig3_theory.csv")]
        assert ratio == pytest.approx([0.5] * len(ratio), rel=1e-6)
        assert (tmp_path / "fig3.svg").stat().st_size > 0

    def test_fig5(self, tmp_path):
        assert run("reproduce", "fig5", "--out", tmp_path) == 0
        fits = json.loads((tmp_path / "fig5_fits.json").read_text())["fits"]
        on = fits["faraday_on"]
        assert abs(on["fit_ms-1"]["gamma_down_up"] - 0.1531) <= on["std_errors_ms-1"]["gamma_down_up"]
        assert all(f["within_1sigma"] for f in fits.values())

    def test_fig9(self, tmp_path):
        assert run("reproduce", "fig9", "--out", tmp_path) == 0
        g = json.loads((tmp_path / "fig9_fit.json").read_text())["g_eff"]
        assert g == pytest.approx(3.19, abs=0.02)

    def test_svg_reproducible(self, tmp_path):
        run("reproduce", "fig3", "--out", tmp_path / "a")
        run("reproduce", "fig3", "--out", tmp_path / "b")
        assert (tmp_path / "a" / "fig3.svg").read_bytes() == (tmp_path / "b" / "fig3.svg").read_bytes()

    def test_unknown_target(self, tmp_path):
        assert run("reproduce", "fig4", "--out", tmp_path) == 2


@pytest.mark.skipif(shutil.which("donorspin") is None, reason="console script not installed")
def test_console_script(tmp_path):
    out = subprocess.run(["donorspin", "theory", "--geometry", "voigt", "--b", "5", "--out", str(tmp_path)],
                         capture_output=True, text=True)
    assert out.returncode == 0
    assert "T1 =" in out.stdout


def test_module_entry(tmp_path):
    out = subprocess.run([sys.executable, "-m", "donorspin", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.strip().startswith("donorspin")
