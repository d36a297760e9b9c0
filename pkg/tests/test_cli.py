"""CLI subcommands drive the library end to end."""

import json
import os

from pncsim import cli, reports


def run_cli(args):
    return cli.main(args)


class TestCatalogCommands:
    def test_build_and_check(self, tmp_path, capsys):
        out = tmp_path / "catalog.txt"
        assert run_cli(["catalog", "build", "--out", str(out)]) == 0
        assert out.exists()
        assert run_cli(["catalog", "check", "--path", str(out)]) == 0
        assert "catalog check OK" in capsys.readouterr().out

    def test_check_flags_tampering(self, tmp_path, capsys):
        out = tmp_path / "catalog.txt"
        run_cli(["catalog", "build", "--out", str(out)])
        lines = out.read_text().splitlines()
        k = next(i for i, ln in enumerate(lines) if ln.startswith("dmin "))
        parts = lines[k].split()
        lines[k] = f"dmin 0.125 {parts[2]}"
        out.write_text("\n".join(lines) + "\n")
        assert run_cli(["catalog", "check", "--path", str(out)]) == 1


class TestSweepCommands:
    def test_ser_run(self, tmp_path, capsys):
        out = tmp_path / "ser.csv"
        rc = run_cli([
            "ser", "run", "--ebno", "12", "--trials", "25", "--seed", "3",
            "--out", str(out),
        ])
        assert rc == 0
        assert out.exists()
        assert (tmp_path / "ser.png").exists()
        rep = reports.report_from_csv(out)
        assert len(rep.points) == 1
        assert rep.points[0].symbols > 0

    def test_comp_run(self, tmp_path):
        out = tmp_path / "comp.csv"
        rc = run_cli([
            "comp", "run", "--ebno", "12", "--trials", "25", "--seed", "3",
            "--out", str(out),
        ])
        assert rc == 0
        rep = reports.report_from_csv(out)
        assert rep.includes_baseline
        assert rep.points[0].baseline_ser <= rep.points[0].ser

    def test_config_file(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"ebno_db": "14", "trials": 10, "seed": 1}))
        out = tmp_path / "ser.csv"
        rc = run_cli(["ser", "run", "--config", str(cfg), "--out", str(out)])
        assert rc == 0
        rep = reports.report_from_csv(out)
        assert rep.points[0].ebno_db == 14.0

    def test_usage_error_exit_code(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"nonsense": True}))
        rc = run_cli(["ser", "run", "--config", str(cfg)])
        assert rc == 2
        assert "nonsense" in capsys.readouterr().err


class TestDumpCommands:
    def test_constellation(self, tmp_path):
        out = tmp_path / "con.csv"
        rc = run_cli([
            "dump", "constellation", "--sfs-i", "3", "--sfs-j", "1",
            "--ap", "2", "--out", str(out),
        ])
        assert rc == 0
        lines = out.read_text().splitlines()
        assert len(lines) == 17
        assert (tmp_path / "con.png").exists()

    def test_channels(self, tmp_path):
        out = tmp_path / "ch.csv"
        rc = run_cli(["dump", "channels", "--delay1", "0.25", "--out", str(out)])
        assert rc == 0
        assert len(out.read_text().splitlines()) == 33


class TestTraceCommand:
    def test_round_trace(self, tmp_path, capsys):
        out = tmp_path / "trace.txt"
        rc = run_cli([
            "trace", "round", "--sfs-i", "3", "--sfs-j", "1", "--loss", "0.2",
            "--seed", "5", "--out", str(out),
        ])
        assert rc == 0
        captured = capsys.readouterr().out
        assert "outcome:" in captured
        assert "mapping=11" in captured
        assert out.exists()
