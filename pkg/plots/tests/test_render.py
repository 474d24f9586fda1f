"""Smoke and contract tests for the figure renderer.

The golden CSVs are produced by the lab CLI itself (subprocess, module
invocation), so these tests exercise exactly the interface a user has:
CSV files in, image files out.  No simulation library imports here.
"""

import subprocess
import sys
from pathlib import Path

import pytest

from snlab_plots import FigureSpec, SchemaError, read_table, render
from snlab_plots.render import main

CLI = [sys.executable, "-m", "snlab.cli"]
RENDER = [sys.executable, "-m", "snlab_plots.render"]

KIND_TO_CSV = {
    "width_vs_time": ("evolve", "trajectory.csv"),
    "decay": ("ensemble", "decay.csv"),
    "phasevar_ladder": ("phasevar", "phasevar.csv"),
    "scaling_fit": ("sweep", "sweep.csv"),
}


def _cli(args):
    proc = subprocess.run(CLI + args, capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    return proc


@pytest.fixture(scope="session")
def golden(tmp_path_factory):
    """One small CLI run per subcommand whose CSV feeds a figure kind."""
    base = tmp_path_factory.mktemp("golden")
    _cli(["evolve", "--T", "0.5", "--steps", "50", "--grid-n", "128",
          "--box", "16", "--out-dir", str(base / "evolve")])
    _cli(["ensemble", "--N", "8", "--T", "2", "--steps", "40",
          "--out-dir", str(base / "ensemble")])
    _cli(["phasevar", "--r1", "8", "--r2", "16", "--T", "0.05",
          "--out-dir", str(base / "phasevar")])
    _cli(["sweep", "--masses", "1,2", "--N", "6",
          "--out-dir", str(base / "sweep")])
    return {kind: base / sub / name
            for kind, (sub, name) in KIND_TO_CSV.items()}


@pytest.mark.parametrize("kind", sorted(KIND_TO_CSV))
def test_each_kind_renders_pdf(golden, tmp_path, kind):
    out = render(FigureSpec(inputs=(str(golden[kind]),), kind=kind,
                            out=str(tmp_path / f"{kind}.pdf")))
    assert out.exists() and out.stat().st_size > 0
    assert out.read_bytes()[:5] == b"%PDF-"


@pytest.mark.parametrize("kind", sorted(KIND_TO_CSV))
def test_each_kind_renders_svg(golden, tmp_path, kind):
    out = render(FigureSpec(inputs=(str(golden[kind]),), kind=kind,
                            out=str(tmp_path / f"{kind}.svg")))
    head = out.read_bytes()[:512]
    assert b"<svg" in head


def test_png_output_also_accepted(golden, tmp_path):
    out = render(FigureSpec(inputs=(str(golden["decay"]),), kind="decay",
                            out=str(tmp_path / "decay.png")))
    assert out.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_svg_output_deterministic(golden, tmp_path):
    spec = lambda name: FigureSpec(inputs=(str(golden["decay"]),),
                                   kind="decay", out=str(tmp_path / name))
    a = render(spec("a.svg")).read_bytes()
    b = render(spec("b.svg")).read_bytes()
    assert a == b


def test_inputs_never_mutated(golden, tmp_path):
    before = {k: p.read_bytes() for k, p in golden.items()}
    for kind, path in golden.items():
        render(FigureSpec(inputs=(str(path),), kind=kind,
                          out=str(tmp_path / f"{kind}.pdf")))
    assert {k: p.read_bytes() for k, p in golden.items()} == before


def test_multiple_inputs_overlay(golden, tmp_path):
    second = tmp_path / "ens_seed1"
    _cli(["ensemble", "--N", "8", "--T", "2", "--steps", "40", "--seed", "1",
          "--out-dir", str(second)])
    out = render(FigureSpec(
        inputs=(str(golden["decay"]), str(second / "decay.csv")),
        kind="decay", out=str(tmp_path / "two.pdf")))
    assert out.stat().st_size > 0


def test_header_params_parsed(golden):
    tb = read_table(golden["decay"])
    assert tb.param("r1") == 8.0 and tb.param("r2") == 16.0
    assert tb.param("predicted_T") is not None
    assert "manifest" in tb.params
    assert tb.param("no_such_key") is None


def test_cli_entry_point(golden, tmp_path):
    out = tmp_path / "fig.pdf"
    rc = main(["--kind", "decay", "--in", str(golden["decay"]),
               "--out", str(out), "--title", "decay check"])
    assert rc == 0
    assert out.exists()


def test_module_invocation(golden, tmp_path):
    out = tmp_path / "fig.svg"
    proc = subprocess.run(
        RENDER + ["--kind", "phasevar_ladder", "--in",
                  str(golden["phasevar_ladder"]), "--out", str(out)],
        capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert out.exists()


def test_schema_mismatch_fails_cleanly(golden, tmp_path):
    # a valid CSV of the wrong kind: decay needs t/D/stderr, the ladder file
    # has method/dphi2/... instead
    out = tmp_path / "fig.pdf"
    with pytest.raises(SchemaError, match="missing column"):
        render(FigureSpec(inputs=(str(golden["phasevar_ladder"]),),
                          kind="decay", out=str(out)))
    rc = main(["--kind", "decay", "--in", str(golden["phasevar_ladder"]),
               "--out", str(out)])
    assert rc == 2
    assert not out.exists()


def test_empty_csv_nonzero_exit_no_file(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    headers_only = tmp_path / "headers_only.csv"
    headers_only.write_text("# manifest=0123456789abcdef\n# m=1\nt,D,stderr\n")
    for bad in (empty, headers_only):
        out = tmp_path / (bad.stem + ".pdf")
        rc = main(["--kind", "decay", "--in", str(bad), "--out", str(out)])
        assert rc == 2
        assert not out.exists()


def test_missing_input_file(tmp_path):
    out = tmp_path / "fig.pdf"
    rc = main(["--kind", "decay", "--in", str(tmp_path / "nope.csv"),
               "--out", str(out)])
    assert rc == 2
    assert not out.exists()


def test_ragged_row_rejected(tmp_path):
    bad = tmp_path / "ragged.csv"
    bad.write_text("t,D,stderr\n0.0,1.0,0.1\n0.1,0.9\n")
    with pytest.raises(SchemaError, match="row 3"):
        read_table(bad)


def test_unknown_kind_rejected(golden, tmp_path):
    with pytest.raises(SchemaError, match="unknown figure kind"):
        FigureSpec(inputs=(str(golden["decay"]),), kind="pie",
                   out=str(tmp_path / "x.pdf"))
    with pytest.raises(SystemExit) as exc:  # argparse choices guard the CLI
        main(["--kind", "pie", "--in", str(golden["decay"]),
              "--out", str(tmp_path / "x.pdf")])
    assert exc.value.code == 2


def test_output_needs_extension(golden, tmp_path):
    rc = main(["--kind", "decay", "--in", str(golden["decay"]),
               "--out", str(tmp_path / "figure")])
    assert rc == 2
    assert not (tmp_path / "figure").exists()
