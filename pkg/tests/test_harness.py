import csv
import io
import json

import numpy as np
import pytest

from multilattice.cli import main
from multilattice.errors import ValidationError
from multilattice.harness import ExperimentConfig, csv_body, format_result, load_config, resolve_threads, run_experiment
from multilattice.spectral import read_coefficients


def rows(text):
    return list(csv.DictReader(io.StringIO(csv_body(text))))


def test_oversampling_rows():
    cfg = ExperimentConfig("oversampling-full", dims=[2], radii=[1, 2, 4, 8, 16])
    out = rows(format_result(run_experiment(cfg), timestamp=False))
    assert [(int(r["size"]), int(r["total_samples"])) for r in out] == [(1, 2), (5, 7), (13, 53), (29, 99), (65, 215)]
    assert all(r["bound_ok"] == "true" for r in out)


def test_random_rows_report_maximum():
    cfg = ExperimentConfig("oversampling-reduction", family="random", source="cbc", dims=[10], sizes=[100], repetitions=3)
    (r,) = rows(format_result(run_experiment(cfg), timestamp=False))
    reps = [int(v) for v in r["rep_samples"].split(";")]
    assert len(reps) == 3 and int(r["total_samples"]) == max(reps)
    assert float(r["oversampling"]) < 4


def test_provenance_and_timestamp():
    cfg = ExperimentConfig("sample-ratio", dims=[2], radii=[4])
    text = format_result(run_experiment(cfg), timestamp=True)
    assert "# generated=" in text and f"# config_hash={cfg.digest()}" in text
    assert "# generated=" not in format_result(run_experiment(cfg), timestamp=False)
    doc = json.loads(format_result(run_experiment(cfg), "structured", timestamp=False))
    assert doc["rows"][0]["samples_over_M"] == pytest.approx(53 / 81)


def test_threads_identical():
    cfg = ExperimentConfig("roundtrip", family="random", source="cbc", dims=[3, 6], sizes=[10, 50], repetitions=2)
    a = format_result(run_experiment(cfg, threads=1), timestamp=False)
    b = format_result(run_experiment(cfg, threads=4), timestamp=False)
    assert a == b
    assert all(r["pass"] == "true" for r in rows(a))


def test_config_validation(tmp_path):
    with pytest.raises(ValidationError):
        ExperimentConfig("nope")
    with pytest.raises(ValidationError):
        ExperimentConfig("roundtrip", dims=[])
    with pytest.raises(ValidationError):
        ExperimentConfig("roundtrip", repetitions=0)
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"experiment": "approx-g3", "dims": [2], "radii": [2, 4], "bogus": 1}))
    with pytest.raises(ValidationError):
        load_config(p)
    p.write_text(json.dumps({"experiment": "approx-g3", "dims": [2], "radii": [2, 4]}))
    cfg = load_config(p, {"radii": [8], "dims": None})
    assert cfg.radii == [8] and cfg.dims == [2]


def test_resolve_threads(monkeypatch):
    monkeypatch.setenv("MULTILATTICE_THREADS", "3")
    assert resolve_threads(None) == 3
    assert resolve_threads(2) == 2
    monkeypatch.setenv("MULTILATTICE_THREADS", "x")
    with pytest.raises(ValidationError):
        resolve_threads(None)


def test_cli_pipeline(tmp_path, capsys):
    f, lat, plan = tmp_path / "f.txt", tmp_path / "lat.json", tmp_path / "plan.json"
    assert main(["genfreq", "--dim", "2", "--radius", "16", "-o", str(f)]) == 0
    assert main(["lattice", "--freq", str(f), "--source", "lat1", "-o", str(lat)]) == 0
    assert main(["plan", "--freq", str(f), "--lattice", str(lat), "-o", str(plan), "--format", "structured"]) == 0
    out = capsys.readouterr().out.strip().splitlines()[-1]
    assert json.loads(out)["total_samples"] == 215
    s, c = tmp_path / "s.txt", tmp_path / "c.txt"
    assert main(["sample", "--plan", str(plan), "-o", str(s)]) == 0
    assert main(["reconstruct", "--freq", str(f), "--plan", str(plan), "--samples", str(s), "--method", "average", "-o", str(c)]) == 0
    coeffs = read_coefficients(c, 65)
    assert np.abs(coeffs.imag).max() < 1e-12


def test_cli_poly_roundtrip(tmp_path):
    f, lat, plan = tmp_path / "f.txt", tmp_path / "lat.json", tmp_path / "plan.json"
    main(["genfreq", "--family", "random", "--dim", "5", "--radius", "64", "--size", "40", "-o", str(f)])
    main(["lattice", "--freq", str(f), "--source", "cbc", "-o", str(lat)])
    main(["plan", "--freq", str(f), "--lattice", str(lat), "--variant", "reduction", "-o", str(plan)])
    truth = np.exp(2j * np.pi * np.arange(40) / 40)
    cin = tmp_path / "in.txt"
    cin.write_text("".join(f"{float(v.real)!r} {float(v.imag)!r}\n" for v in truth))
    s, c = tmp_path / "s.txt", tmp_path / "c.txt"
    assert main(["sample", "--plan", str(plan), "--function", "poly", "--freq", str(f), "--coeffs", str(cin), "-o", str(s)]) == 0
    assert main(["reconstruct", "--freq", str(f), "--plan", str(plan), "--samples", str(s), "-o", str(c)]) == 0
    assert np.abs(read_coefficients(c) - truth).max() < 1e-10


def test_cli_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.txt"
    bad.write_text("2 2\n0 0\n0 0\n")
    assert main(["lattice", "--freq", str(bad), "-o", str(tmp_path / "x")]) == 2
    assert main(["lattice", "--freq", str(tmp_path / "missing"), "-o", str(tmp_path / "x")]) == 2
    f, lat = tmp_path / "f.txt", tmp_path / "lat.json"
    main(["genfreq", "--dim", "2", "--radius", "8", "-o", str(f)])
    lat.write_text('{"z": ["1", "1"], "M": "3", "source": "user"}')
    assert main(["plan", "--freq", str(f), "--lattice", str(lat), "-o", str(tmp_path / "p")]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["experiment", "--id", "nope"])
    assert exc.value.code == 2


def test_cli_internal_error(tmp_path, monkeypatch):
    from multilattice import mr1l
    from multilattice.errors import CandidateExhausted

    def boom(*a, **k):
        raise CandidateExhausted("forced", {"s": 1})

    monkeypatch.setattr(mr1l, "build_full", boom)
    f, lat = tmp_path / "f.txt", tmp_path / "lat.json"
    main(["genfreq", "--dim", "2", "--radius", "8", "-o", str(f)])
    main(["lattice", "--freq", str(f), "-o", str(lat)])
    assert main(["plan", "--freq", str(f), "--lattice", str(lat), "-o", str(tmp_path / "p")]) == 3


def test_cli_experiment_file_output(tmp_path):
    out = tmp_path / "o.csv"
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"experiment": "approx-g3", "dims": [2], "radii": [2, 4, 8]}))
    assert main(["experiment", "--config", str(cfg), "--no-timestamp", "-o", str(out)]) == 0
    got = rows(out.read_text())
    assert [r["R"] for r in got] == ["2", "4", "8"]
    assert float(got[0]["rel_l2_error"]) == pytest.approx(8.314e-2, rel=1e-3)
