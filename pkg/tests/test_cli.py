import json
from pathlib import Path

import numpy as np
import pytest

from vortsel import cli
from vortsel import io as vio

GOLDEN = Path(__file__).parent / "golden" / "spectrum_n128.csv"
SMALL = ["--n=128", "--r_max=6", "--m0_min=2", "--m0_max=4"]


def _run(tmp_path, *args):
    code = cli.main([*args, "--run-root", str(tmp_path)])
    dirs = sorted(p for p in tmp_path.iterdir() if p.is_dir())
    return code, dirs


def test_spectrum_matches_golden(tmp_path, capsys):
    code, dirs = _run(tmp_path, "spectrum", *SMALL)
    assert code == 0
    assert "m0=3" in capsys.readouterr().out
    cols, rows = vio.read_csv(dirs[0] / "spectrum.csv")
    gcols, grows = vio.read_csv(GOLDEN)
    assert cols == gcols
    got, want = np.array(rows, float), np.array(grows, float)
    assert np.allclose(got[:, :4], want[:, :4], rtol=1e-8)
    assert np.all(got[:, 4] < 1e-10)
    assert np.array_equal(got[:, 5], want[:, 5])


def test_manifest_lists_artifacts(tmp_path):
    _, dirs = _run(tmp_path, "spectrum", *SMALL)
    man = json.loads((dirs[0] / "manifest.json").read_text())
    assert man["command"] == "spectrum"
    assert man["config"]["n"] == "128"
    names = {a["file"] for a in man["artifacts"]}
    assert names == {"spectrum.csv", "eta_m3.vshk"}
    for a in man["artifacts"]:
        assert vio.sha256_file(dirs[0] / a["file"]) == a["sha256"]
    assert vio.load_field(dirs[0] / "eta_m3.vshk").m0 == 3


def test_same_config_same_directory_and_bytes(tmp_path):
    _, d1 = _run(tmp_path, "spectrum", *SMALL)
    first = (d1[0] / "spectrum.csv").read_bytes()
    _, d2 = _run(tmp_path, "spectrum", *SMALL)
    assert d1 == d2
    assert (d2[0] / "spectrum.csv").read_bytes() == first
    _, d3 = _run(tmp_path, "spectrum", *SMALL, "--m0_max=3")
    assert len(d3) == 2


def test_config_file_and_space_separated_override(tmp_path):
    ini = tmp_path / "c.ini"
    ini.write_text("[experiment]\nn = 128\nr_max = 6\n")
    code, dirs = _run(tmp_path / "runs", "spectrum", "--config", str(ini), "--m0_min", "3", "--m0_max", "3")
    assert code == 0
    _, rows = vio.read_csv(dirs[0] / "spectrum.csv")
    assert [r[0] for r in rows] == [3]


def test_unknown_key_is_an_error(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["spectrum", "--bogus=1", "--run-root", str(tmp_path)])
    assert exc.value.code == 2
    assert "bogus" in capsys.readouterr().err


def test_missing_value_is_an_error(tmp_path):
    with pytest.raises(SystemExit):
        cli.main(["spectrum", "--n", "--run-root", str(tmp_path)][:2])


def test_report_rerenders_plot_data(tmp_path):
    src = tmp_path / "src"
    src.mkdir()
    vio.write_csv(src / "demo_plot.csv", ["series", "x", "y"], [["s", 1.0, 2.0], ["s", 10.0, 20.0]])
    code, dirs = _run(tmp_path / "out", "report", "--from", str(src))
    assert code == 0
    assert (dirs[0] / "demo_s.png").exists()


def test_report_without_inputs_fails(tmp_path, capsys):
    code, _ = _run(tmp_path / "out", "report", "--from", str(tmp_path / "empty"))
    assert code == 2
    assert "no plot-data" in capsys.readouterr().err


def test_evolve_rejects_bad_horizon(tmp_path):
    code, dirs = _run(tmp_path, "evolve", *SMALL, "--tau0=3", "--tau_end=2")
    assert code == 2
    assert (dirs[0] / "manifest.json").exists()
