import pytest

from cgrafab.arch import SBTopology
from cgrafab.bench import crafted_track_change_fabric
from cgrafab.cli import (
    CSV_COLUMNS,
    DseSweep,
    main,
    parse_csv,
    parse_sweep_spec,
    rows_to_csv,
    run_sweep,
    summarize_csv,
)
from cgrafab.ir import serialize_graph

ARCH_4x4 = """\
[array]
width = 4
height = 4

[layer.16]
tracks = 3
topology = wilton
reg_density = 0.0
"""

TWO_PE_PIPELINE = """\
inst io_in IO
inst io_out IO
inst pe0 PE
inst pe1 PE
net io_in.out0 -> pe0.in0
net pe0.out0 -> pe1.in0
net pe1.out0 -> io_out.in0
"""

TRACK_CHANGE_APP = """\
inst a PE
inst b PE
net a.out0 -> b.in0
"""


@pytest.fixture()
def workdir(tmp_path):
    (tmp_path / "arch.cfg").write_text(ARCH_4x4)
    (tmp_path / "two_pe.app").write_text(TWO_PE_PIPELINE)
    return tmp_path


def run(args):
    return main([str(a) for a in args])


class TestGen:
    def test_minimal_spec(self, tmp_path):
        (tmp_path / "min.cfg").write_text(
            "[array]\nwidth = 1\nheight = 1\n[layer.16]\ntracks = 1\n")
        rc = run(["gen", "--spec", tmp_path / "min.cfg",
                  "--out-dir", tmp_path / "out"])
        assert rc == 0
        for name in ("fabric.graph", "fabric.rtl", "fabric.cfgmap"):
            assert (tmp_path / "out" / name).exists()

    def test_4x4_artifacts_verified(self, workdir, capsys):
        rc = run(["gen", "--spec", workdir / "arch.cfg",
                  "--out-dir", workdir / "out"])
        assert rc == 0
        assert "PASS" in capsys.readouterr().out

    def test_ready_valid_gen(self, tmp_path):
        (tmp_path / "rv.cfg").write_text(
            "[array]\nwidth = 3\nheight = 3\n"
            "[layer.16]\ntracks = 2\nreg_density = 1.0\n")
        rc = run(["gen", "--spec", tmp_path / "rv.cfg", "--rv",
                  "--fifo-mode", "split", "--out-dir", tmp_path / "out"])
        assert rc == 0
        rtl = (tmp_path / "out" / "fabric.rtl").read_text()
        assert "FIFO_REG" in rtl and "vmux_" in rtl

    def test_large_registered_fabric(self, tmp_path, capsys):
        # 32x32, five 16-bit tracks, wilton, register on every slot
        (tmp_path / "big.cfg").write_text(
            "[array]\nwidth = 32\nheight = 32\n"
            "[layer.16]\ntracks = 5\ntopology = wilton\nreg_density = 1.0\n")
        rc = run(["gen", "--spec", tmp_path / "big.cfg",
                  "--out-dir", tmp_path / "out"])
        assert rc == 0
        assert "PASS" in capsys.readouterr().out
        for name in ("fabric.graph", "fabric.rtl", "fabric.cfgmap"):
            assert (tmp_path / "out" / name).stat().st_size > 0

    def test_corrupted_spec_exit_2(self, tmp_path, capsys):
        (tmp_path / "bad.cfg").write_text("width=8\n[array\n")
        rc = run(["gen", "--spec", tmp_path / "bad.cfg",
                  "--out-dir", tmp_path / "out"])
        assert rc == 2
        assert "error" in capsys.readouterr().err

    def test_unknown_spec_content_exit_2(self, tmp_path):
        (tmp_path / "bad.cfg").write_text("[bogus]\nx = 1\n")
        assert run(["gen", "--spec", tmp_path / "bad.cfg",
                    "--out-dir", tmp_path / "out"]) == 2


class TestPnr:
    def gen(self, workdir):
        assert run(["gen", "--spec", workdir / "arch.cfg",
                    "--out-dir", workdir / "out"]) == 0
        return workdir / "out" / "fabric.graph"

    def test_two_pe_pipeline_succeeds(self, workdir, capsys):
        graph = self.gen(workdir)
        rc = run(["pnr", "--graph", graph, "--app", workdir / "two_pe.app",
                  "--out-dir", workdir / "out", "--seed", 1])
        assert rc == 0
        out = capsys.readouterr().out
        assert "critical_path=" in out
        for ext in (".place", ".route", ".timing"):
            assert (workdir / "out" / f"two_pe{ext}").exists()

    def test_same_seed_identical_outputs(self, workdir):
        graph = self.gen(workdir)
        for d in ("a", "b"):
            assert run(["pnr", "--graph", graph,
                        "--app", workdir / "two_pe.app",
                        "--out-dir", workdir / d, "--seed", 7]) == 0
        for ext in (".place", ".route", ".timing"):
            assert (workdir / "a" / f"two_pe{ext}").read_text() == \
                (workdir / "b" / f"two_pe{ext}").read_text()

    def test_capacity_exit_5(self, workdir):
        graph = self.gen(workdir)
        app = workdir / "big.app"
        lines = []
        for i in range(9):   # 9 PEs on a 4x4 fabric with 4 PE tiles
            lines.append(f"inst p{i} PE")
        lines.append("net p0.out0 -> " +
                     ", ".join(f"p{i}.in0" for i in range(1, 5)))
        lines.append("net p0.out1 -> " +
                     ", ".join(f"p{i}.in0" for i in range(5, 9)))
        app.write_text("\n".join(lines) + "\n")
        assert run(["pnr", "--graph", graph, "--app", app,
                    "--out-dir", workdir / "out"]) == 5

    def test_track_change_disjoint_exit_6_wilton_ok(self, tmp_path):
        app = tmp_path / "tc.app"
        app.write_text(TRACK_CHANGE_APP)
        for topo, expect in ((SBTopology.Disjoint, 6), (SBTopology.Wilton, 0)):
            g = crafted_track_change_fabric(topo)
            gpath = tmp_path / f"{topo.value}.graph"
            gpath.write_text(serialize_graph(g))
            rc = run(["pnr", "--graph", gpath, "--app", app,
                      "--out-dir", tmp_path / topo.value])
            assert rc == expect, topo

    def test_alpha_sweep_flag(self, workdir, capsys):
        graph = self.gen(workdir)
        rc = run(["pnr", "--graph", graph, "--app", workdir / "two_pe.app",
                  "--out-dir", workdir / "out", "--alpha-sweep", "1,2"])
        assert rc == 0
        assert "alpha=" in capsys.readouterr().out


class TestBitstreamSimVerify:
    def test_full_flow(self, workdir, capsys):
        out = workdir / "out"
        assert run(["gen", "--spec", workdir / "arch.cfg",
                    "--out-dir", out]) == 0
        assert run(["pnr", "--graph", out / "fabric.graph",
                    "--app", workdir / "two_pe.app",
                    "--out-dir", out]) == 0
        assert run(["bitstream", "--graph", out / "fabric.graph",
                    "--cfgmap", out / "fabric.cfgmap",
                    "--app", workdir / "two_pe.app",
                    "--place", out / "two_pe.place",
                    "--route", out / "two_pe.route",
                    "--out", out / "two_pe.bs"]) == 0
        assert run(["sim", "--graph", out / "fabric.graph",
                    "--cfgmap", out / "fabric.cfgmap",
                    "--bitstream", out / "two_pe.bs",
                    "--route", out / "two_pe.route"]) == 0
        assert run(["verify", "--graph", out / "fabric.graph",
                    "--cfgmap", out / "fabric.cfgmap"]) == 0
        assert "PASS" in capsys.readouterr().out

    def test_pipeline_determinism_end_to_end(self, workdir):
        texts = []
        for d in ("r1", "r2"):
            out = workdir / d
            assert run(["gen", "--spec", workdir / "arch.cfg",
                        "--out-dir", out]) == 0
            assert run(["pnr", "--graph", out / "fabric.graph",
                        "--app", workdir / "two_pe.app",
                        "--out-dir", out, "--seed", 5]) == 0
            assert run(["bitstream", "--graph", out / "fabric.graph",
                        "--cfgmap", out / "fabric.cfgmap",
                        "--app", workdir / "two_pe.app",
                        "--place", out / "two_pe.place",
                        "--route", out / "two_pe.route",
                        "--out", out / "two_pe.bs"]) == 0
            texts.append("".join(
                (out / name).read_text()
                for name in ("fabric.graph", "fabric.rtl", "fabric.cfgmap",
                             "two_pe.place", "two_pe.route", "two_pe.bs")))
        assert texts[0] == texts[1]


SWEEP_CFG = """\
[base]
width = 6
height = 6

[axes]
tracks = 2,3
topology = wilton

[run]
benchmarks = pipeline
seeds = 1,2
"""


class TestDse:
    def test_sweep_spec_parse(self):
        sweep = parse_sweep_spec(SWEEP_CFG)
        assert sweep.tracks == (2, 3)
        assert sweep.benchmarks == ("pipeline",)
        assert len(sweep.cells()) == 2

    def test_rows_sorted_and_schema_stable(self, tmp_path):
        sweep = parse_sweep_spec(SWEEP_CFG)
        rows = run_sweep(sweep)
        assert len(rows) == 4
        keys = [(r["tracks"], r["benchmark"], r["seed"]) for r in rows]
        assert keys == sorted(keys)
        csv_text = rows_to_csv(rows)
        assert csv_text.splitlines()[0] == ",".join(CSV_COLUMNS)
        back = parse_csv(csv_text)
        assert len(back) == 4
        assert back[0]["topology"] == "wilton"
        # summarizer consumes the parsed CSV
        summary = summarize_csv(back)
        assert "median_cp" in summary

    def test_partial_failures_recorded_not_fatal(self):
        # pipeline (6 PEs) cannot place on a 4x4 fabric: capacity failure
        # is recorded per row, the sweep completes
        sweep = DseSweep(width=4, height=4, tracks=(2,),
                         benchmarks=("pipeline",), seeds=(1, 2))
        rows = run_sweep(sweep)
        assert len(rows) == 2
        assert all(r["success"] == 0 for r in rows)
        assert all(r["critical_path"] == "" for r in rows)
        assert all(r["sb_mux_inputs"] > 0 for r in rows)

    def test_cli_dse_writes_csv(self, tmp_path):
        (tmp_path / "sweep.cfg").write_text(SWEEP_CFG)
        rc = run(["dse", "--sweep", tmp_path / "sweep.cfg",
                  "--out", tmp_path / "dse.csv"])
        assert rc == 0
        text = (tmp_path / "dse.csv").read_text()
        assert len(text.splitlines()) == 5

    def test_fifo_axis_storage_ordering(self):
        sweep = DseSweep(width=5, height=5, tracks=(2,),
                         fifos=("none", "split", "full2"),
                         reg_densities=(1.0,),
                         benchmarks=("pipeline",), seeds=(1,))
        rows = run_sweep(sweep)
        storage = {r["fifo"]: r["storage_bits"] for r in rows}
        assert storage["none"] < storage["split"] < storage["full2"]

    def test_parallel_jobs_same_result(self, tmp_path):
        sweep = parse_sweep_spec(SWEEP_CFG)

        def normalized(rows):
            return rows_to_csv([{**r, "wall_ms": ""} for r in rows])

        seq = normalized(run_sweep(sweep, jobs=1))
        par = normalized(run_sweep(sweep, jobs=2))
        assert seq == par
