"""Rendering smoke tests over golden simulator CSVs, plus schema errors."""

from pathlib import Path

import pytest
from PIL import Image

from specplot import PLOT_KINDS, PlotJob, SchemaError, read_csv, render
from specplot.cli import main as cli_main

DATA = Path(__file__).parent / "data"
GOLDEN = {
    "coefficients": DATA / "golden_trajectory.csv",
    "loss_align": DATA / "golden_trajectory.csv",
    "heatmap": DATA / "golden_sweep.csv",
    "stage_scaling": DATA / "golden_stages.csv",
}


@pytest.mark.parametrize("kind", PLOT_KINDS)
def test_each_kind_renders_nonempty_image(kind, tmp_path):
    out = tmp_path / f"{kind}.png"
    render(PlotJob(input_csv=GOLDEN[kind], kind=kind, output_path=out))
    assert out.exists() and out.stat().st_size > 0
    with Image.open(out) as img:
        assert img.size[0] > 100 and img.size[1] > 100
    print(f"ACCEPTANCE 14 PASS plot kind '{kind}' renders from golden CSV")


def test_heatmap_axes_carry_eta_and_lambda_labels(tmp_path):
    out = tmp_path / "heatmap.png"
    render(PlotJob(input_csv=GOLDEN["heatmap"], kind="heatmap", output_path=out))
    with Image.open(out) as img:
        description = img.info.get("Description", "")
    assert "η" in description and "λ" in description


def test_header_only_csv_errors_without_writing(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("k,a,b,c,r,loss,align\n")
    out = tmp_path / "never.png"
    with pytest.raises(SchemaError):
        render(PlotJob(input_csv=empty, kind="coefficients", output_path=out))
    assert not out.exists()

    synthetic = tmp_path / "three.csv"
    synthetic.write_text("k,a,b,c,r\n0,1e-4,1e-4,1e-4,3e-4\n"
                         "1,2e-4,3e-4,1e-4,6e-4\n2,4e-4,9e-4,1e-4,1.4e-3\n")
    render(PlotJob(input_csv=synthetic, kind="coefficients", output_path=out))
    assert out.exists() and out.stat().st_size > 0


def test_schema_mismatch_names_missing_columns(tmp_path):
    wrong = tmp_path / "wrong.csv"
    wrong.write_text("x,y\n1,2\n")
    with pytest.raises(SchemaError, match="final_align"):
        render(PlotJob(input_csv=wrong, kind="heatmap",
                       output_path=tmp_path / "x.png"))


def test_identical_input_gives_identical_bytes(tmp_path):
    a, b = tmp_path / "a.png", tmp_path / "b.png"
    render(PlotJob(input_csv=GOLDEN["coefficients"], kind="coefficients",
                   output_path=a))
    render(PlotJob(input_csv=GOLDEN["coefficients"], kind="coefficients",
                   output_path=b))
    assert a.read_bytes() == b.read_bytes()


def test_reader_skips_comments_and_parses_blanks_as_nan(tmp_path):
    csv = tmp_path / "c.csv"
    csv.write_text("# config_digest=abc\nd,T1,T2\n50,10,\n100,20,400\n")
    columns = read_csv(csv)
    assert columns["T1"].tolist() == [10.0, 20.0]
    assert columns["T2"][0] != columns["T2"][0]  # NaN


class TestCli:
    def test_success_path(self, tmp_path, capsys):
        out = tmp_path / "fig.png"
        code = cli_main(["heatmap", str(GOLDEN["heatmap"]), "-o", str(out)])
        assert code == 0 and out.exists()

    def test_bad_schema_exits_nonzero(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("a,b\n1,2\n")
        out = tmp_path / "fig.png"
        code = cli_main(["heatmap", str(bad), "-o", str(out)])
        assert code == 1 and not out.exists()
        assert "missing columns" in capsys.readouterr().err

    def test_missing_file_exits_nonzero(self, tmp_path):
        code = cli_main(["coefficients", str(tmp_path / "nope.csv"),
                         "-o", str(tmp_path / "x.png")])
        assert code == 1
