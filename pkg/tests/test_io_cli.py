import json
import math

import numpy as np
import pytest

from grouptomo.cli import main, parse_config
from grouptomo.io import (
    RecordBatch,
    matrix_from_json_dict,
    matrix_to_json_dict,
    read_matrix_json,
    read_records_csv,
    write_matrix_json,
    write_records_csv,
)
from grouptomo.validation import ValidationError


class TestMatrixJson:
    def test_bit_exact_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        m = rng.standard_normal((5, 5)) * 10.0 ** rng.integers(-200, 200, (5, 5))
        m = m + 1j * rng.standard_normal((5, 5))
        path = tmp_path / "m.json"
        write_matrix_json(path, m)
        back = read_matrix_json(path)
        assert np.array_equal(back, m.astype(complex))

    def test_dict_round_trip_through_text(self):
        m = np.array([[0.1 + 0.2j, 3e-300], [-1e300, 7.0]], dtype=complex)
        doc = json.loads(json.dumps(matrix_to_json_dict(m)))
        assert np.array_equal(matrix_from_json_dict(doc), m)

    def test_malformed_rejected(self):
        with pytest.raises(ValidationError):
            matrix_from_json_dict({"dim": 2, "re": [[1.0]], "im": [[0.0]]})


class TestRecordsCsv:
    def test_round_trip(self, tmp_path):
        rows = np.array([[0.1, 2.2, 0.5], [1.3, 4.4, -0.5]])
        batch = RecordBatch("spin-sphere", rows, np.array([1.0, 3.0]))
        path = tmp_path / "records.csv"
        write_records_csv(path, batch)
        back = read_records_csv(path)
        assert back.scheme == "spin-sphere"
        assert np.array_equal(back.columns, rows)
        assert np.array_equal(back.counts, [1.0, 3.0])

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        with pytest.raises(ValidationError):
            read_records_csv(path)

    def test_header_only_rejected(self, tmp_path):
        path = tmp_path / "records.csv"
        path.write_text("scheme,theta,phi,m,count\n")
        with pytest.raises(ValidationError, match="no records"):
            read_records_csv(path)

    def test_negative_counts_rejected(self):
        with pytest.raises(ValidationError):
            RecordBatch("homodyne", np.array([[0.0, 1.0]]), np.array([-1.0]))


def write_config(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


class TestConfigParsing:
    def test_unknown_key_rejected(self, tmp_path):
        cfg = write_config(tmp_path, "scheme = spin-sphere\ntwo_s = 1\nbogus = 3\n")
        with pytest.raises(ValidationError, match="unknown config keys"):
            parse_config(cfg)

    def test_missing_required(self, tmp_path):
        cfg = write_config(tmp_path, "scheme = homodyne\n")
        with pytest.raises(ValidationError, match="required key"):
            parse_config(cfg)

    def test_comments_and_types(self, tmp_path):
        cfg = write_config(tmp_path,
                           "# a comment\nscheme = spin-sphere\ntwo_s = 2  # inline\n")
        parsed = parse_config(cfg)
        assert parsed["two_s"] == 2

    def test_duplicate_key(self, tmp_path):
        cfg = write_config(tmp_path, "scheme = spin-sphere\ntwo_s = 1\ntwo_s = 2\n")
        with pytest.raises(ValidationError, match="duplicate"):
            parse_config(cfg)


class TestCliRun:
    def test_exact_spin_sphere(self, tmp_path):
        cfg = write_config(tmp_path, "scheme = spin-sphere\ntwo_s = 1\nseed = 5\n")
        out = tmp_path / "out"
        assert main(["run", "--config", cfg, "--out", str(out)]) == 0
        metrics = json.loads((out / "metrics.json").read_text())
        assert metrics["trace_distance"] <= 1e-8
        assert (out / "rho_true.json").exists()
        assert (out / "rho_est.json").exists()
        assert (out / "trace.csv").exists()

    def test_negative_shots_exit_2_no_artifacts(self, tmp_path):
        cfg = write_config(tmp_path, "scheme = spin-sphere\ntwo_s = 1\nshots = -4\n")
        out = tmp_path / "bad"
        assert main(["run", "--config", cfg, "--out", str(out)]) == 2
        assert not out.exists()

    def test_byte_identical_reruns(self, tmp_path):
        cfg = write_config(tmp_path,
                           "scheme = spin-sphere\ntwo_s = 1\nshots = 5000\nseed = 9\n")
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert main(["run", "--config", cfg, "--out", str(out1)]) == 0
        assert main(["run", "--config", cfg, "--out", str(out2)]) == 0
        assert (out1 / "rho_est.json").read_bytes() == (out2 / "rho_est.json").read_bytes()

    def test_seed_override_changes_output(self, tmp_path):
        cfg = write_config(tmp_path,
                           "scheme = spin-sphere\ntwo_s = 1\nshots = 2000\nseed = 1\n")
        out1, out2 = tmp_path / "a", tmp_path / "b"
        main(["run", "--config", cfg, "--out", str(out1)])
        main(["run", "--config", cfg, "--out", str(out2), "--seed-override", "2"])
        assert (out1 / "rho_est.json").read_bytes() != (out2 / "rho_est.json").read_bytes()

    def test_mass_deficit_exit_3(self, tmp_path):
        cfg = write_config(tmp_path,
                           "scheme = displaced-count\nnmax = 6\nstate = fock:0\n"
                           "radius = 4.0\nsteps = 30\n")
        out = tmp_path / "out"
        with pytest.warns(RuntimeWarning):
            assert main(["run", "--config", cfg, "--out", str(out)]) == 3

    def test_homodyne_exact_writes_kmax_trace(self, tmp_path):
        cfg = write_config(tmp_path,
                           "scheme = homodyne\nnmax = 8\nstate = thermal:0.3\n"
                           "x_nodes = 201\nphi_nodes = 20\nk_max = 8\n")
        out = tmp_path / "out"
        assert main(["run", "--config", cfg, "--out", str(out)]) == 0
        lines = (out / "trace.csv").read_text().strip().splitlines()
        assert lines[0] == "k_max,fidelity,trace_distance"
        assert len(lines) == 4


class TestCliIngest:
    def test_round_trip_bit_exact(self, tmp_path):
        cfg = write_config(tmp_path,
                           "scheme = spin-sphere\ntwo_s = 1\nshots = 3000\nseed = 4\n")
        out = tmp_path / "sim"
        assert main(["run", "--config", cfg, "--out", str(out)]) == 0
        ing = tmp_path / "ing"
        assert main(["ingest", "--config", cfg, "--out", str(ing),
                     "--records", str(out / "records.csv")]) == 0
        assert (out / "rho_est.json").read_bytes() == (ing / "rho_est.json").read_bytes()

    def test_finite_labels_config(self, tmp_path):
        # certainties along z plus fair coins along x and y pin spin-up
        labels = "0,0,1.5707963267948966; 1.5707963267948966,0,1.5707963267948966; " \
                 "1.5707963267948966,1.5707963267948966,1.5707963267948966; 0,0,3.141592653589793"
        cfg = write_config(tmp_path,
                           f"scheme = spin-finite\ntwo_s = 1\nlabels = {labels}\n")
        rows = []
        probs = [(1.0, 0.0), (0.5, 0.5), (0.5, 0.5), (1.0, 0.0)]
        for i, (up, dn) in enumerate(probs):
            rows.append(f"spin-finite,{i!r},0.5,{1000 * up!r}")
            rows.append(f"spin-finite,{i!r},-0.5,{1000 * dn!r}")
        rec = tmp_path / "records.csv"
        rec.write_text("scheme,label_index,m,count\n" + "\n".join(rows) + "\n")
        out = tmp_path / "out"
        assert main(["ingest", "--config", cfg, "--out", str(out),
                     "--records", str(rec)]) == 0
        est = read_matrix_json(out / "rho_est.json")
        assert np.linalg.norm(est - np.diag([1.0, 0.0])) <= 1e-9

    def test_scheme_mismatch_exit_2(self, tmp_path):
        cfg = write_config(tmp_path, "scheme = homodyne\nnmax = 4\n")
        rec = tmp_path / "records.csv"
        rec.write_text("scheme,theta,phi,m,count\nspin-sphere,0.0,0.0,0.5,1.0\n")
        assert main(["ingest", "--config", cfg, "--out", str(tmp_path / "o"),
                     "--records", str(rec)]) == 2

    def test_empty_records_exit_2(self, tmp_path):
        cfg = write_config(tmp_path, "scheme = spin-sphere\ntwo_s = 1\n")
        rec = tmp_path / "records.csv"
        rec.write_text("")
        assert main(["ingest", "--config", cfg, "--out", str(tmp_path / "o"),
                     "--records", str(rec)]) == 2

    def test_unknown_setting_exit_2(self, tmp_path):
        cfg = write_config(tmp_path,
                           "scheme = homodyne\nnmax = 4\nx_max = 4\nx_nodes = 101\n")
        rec = tmp_path / "records.csv"
        rec.write_text("scheme,phi,x,count\nhomodyne,0.0,0.123456789,1.0\n")
        assert main(["ingest", "--config", cfg, "--out", str(tmp_path / "o"),
                     "--records", str(rec)]) == 2


class TestCliVerifyFrame:
    def test_pauli(self, tmp_path):
        cfg = write_config(tmp_path, "scheme = verify-frame\nframe = pauli\n")
        out = tmp_path / "out"
        assert main(["verify-frame", "--config", cfg, "--out", str(out)]) == 0
        metrics = json.loads((out / "metrics.json").read_text())
        assert metrics["k_tilde_estimate"] == pytest.approx(2.0, abs=1e-12)
        assert metrics["closure_residual_max"] <= 1e-12

    def test_spin(self, tmp_path):
        cfg = write_config(tmp_path,
                           "scheme = verify-frame\nframe = spin\ntwo_s = 1\ntrials = 4\n"
                           "checks = 5\n")
        out = tmp_path / "out"
        assert main(["verify-frame", "--config", cfg, "--out", str(out)]) == 0
        metrics = json.loads((out / "metrics.json").read_text())
        assert metrics["k_tilde_estimate"] == pytest.approx(0.5, abs=1e-6)

    def test_list_schemes(self, capsys):
        assert main(["list-schemes"]) == 0
        out = capsys.readouterr().out
        for scheme in ("spin-sphere", "spin-finite", "homodyne",
                       "displaced-count", "verify-frame"):
            assert scheme in out
