"""Frontend tests: rendering, schema rejection, determinism."""

import json
from pathlib import Path

import numpy as np
import pytest

from mcre_plots import PlotJob, SchemaError, render, template_curve
from mcre_plots.render import main

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.mark.parametrize(
    "kind,files",
    [
        ("decay", ["tv.csv"]),
        ("decay", ["tv.csv", "fit.csv"]),
        ("bound-comparison", ["couple.csv"]),
        ("histogram", ["meeting_times.csv"]),
    ],
)
def test_render_produces_image(tmp_path, kind, files):
    out = tmp_path / "fig.png"
    job = PlotJob(kind=kind, inputs=[FIXTURES / f for f in files], output=out)
    assert render(job) == out
    assert out.exists() and out.stat().st_size > 1000


def test_cli_render_exit_codes(tmp_path):
    out = tmp_path / "fig.png"
    code = main(["render", "--kind", "decay", "--in", str(FIXTURES / "tv.csv"),
                 "--out", str(out)])
    assert code == 0
    assert out.exists()


def test_rejects_corrupted_header(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    lines = (FIXTURES / "tv.csv").read_text().splitlines()
    bad.write_text("\n".join(["idx,est,sd"] + lines[1:]) + "\n")
    code = main(["render", "--kind", "decay", "--in", str(bad),
                 "--out", str(tmp_path / "fig.png")])
    assert code != 0
    err = capsys.readouterr().err
    assert "idx,est,sd" in err  # names the offending header
    assert "index,estimate,std_error" in err


def test_rejects_schema_mismatch_across_kinds(tmp_path):
    job = PlotJob(kind="histogram", inputs=[FIXTURES / "couple.csv"],
                  output=tmp_path / "fig.png")
    with pytest.raises(SchemaError):
        render(job)


def test_unknown_kind_rejected(tmp_path):
    with pytest.raises(ValueError):
        PlotJob(kind="pie", inputs=[FIXTURES / "tv.csv"], output=tmp_path / "f.png")


def test_missing_input_exit_nonzero(tmp_path, capsys):
    code = main(["render", "--kind", "decay", "--in", str(tmp_path / "absent.csv"),
                 "--out", str(tmp_path / "fig.png")])
    assert code == 1
    assert "absent.csv" in capsys.readouterr().err


def test_rendering_is_deterministic(tmp_path):
    outs = []
    for i in range(2):
        out = tmp_path / f"fig{i}.png"
        render(PlotJob(kind="bound-comparison", inputs=[FIXTURES / "couple.csv"],
                       output=out))
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_svg_output_has_no_timestamp(tmp_path):
    out = tmp_path / "fig.svg"
    render(PlotJob(kind="decay", inputs=[FIXTURES / "tv.csv"], output=out))
    text = out.read_text()
    assert "dc:date" not in text


def test_template_curve_matches_fit_at_endpoints():
    # the overlay must pass through the fitted values at the grid endpoints
    rows = (FIXTURES / "fit.csv").read_text().splitlines()[1].split(",", 2)
    name, params = rows[0], json.loads(rows[2].strip('"').replace('""', '"'))
    tv = np.loadtxt(FIXTURES / "tv.csv", delimiter=",", skiprows=1)
    ns = tv[:, 0]
    fitted = template_curve(name, params, ns)
    # least-squares fit in log space: endpoints agree to within the fit's
    # own residual scale
    log_err = np.abs(np.log2(fitted) - np.log2(tv[:, 1]))
    assert np.all(log_err < 1.5)
    # exact evaluation identity for the geometric family
    assert fitted[0] == pytest.approx(
        2.0 ** params["log2_amplitude"] * params["lam"] ** ns[0], rel=1e-12
    )


def test_template_curve_families():
    ns = np.array([8.0, 64.0, 512.0])
    geo = template_curve("geometric", {"lam": 0.9, "log2_amplitude": 0.0}, ns)
    assert np.allclose(geo, 0.9**ns)
    poly = template_curve("polynomial", {"gamma": 2.0, "log2_amplitude": 0.0}, ns)
    assert np.allclose(poly, (np.log2(ns) / ns) ** 2.0)
    with pytest.raises(SchemaError):
        template_curve("nope", {}, ns)
