import re
import xml.etree.ElementTree as ET

import pytest

from vitray import plots
from vitray.plots import ROC_FRAME, Frame

SVG = "{http://www.w3.org/2000/svg}"


def log_rows(n):
    return [
        {"epoch": e, "train_loss": 1 / e, "train_acc": 1 - 1 / (e + 1), "test_loss": 1.2 / e, "test_acc": 0.9 - 0.5 / e}
        for e in range(1, n + 1)
    ]


def polylines(root):
    return root.iter(f"{SVG}polyline")


def points(poly):
    return [tuple(map(float, p.split(","))) for p in poly.get("points").split()]


def test_frame_maps_corners():
    f = Frame(100, 50, 400, 300, (0, 10), (-1, 1))
    assert f.map(0, -1) == (100, 350)
    assert f.map(10, 1) == (500, 50)
    assert f.map(5, 0) == (300, 200)


def test_training_curves_structure():
    root = ET.fromstring(plots.training_curves_svg(log_rows(50)))
    assert (root.get("width"), root.get("height")) == ("800", "600")
    panels = root.findall(f"{SVG}g")
    assert [p.get("data-panel") for p in panels] == ["accuracy", "loss"]
    for panel in panels:
        series = [p.get("data-series") for p in panel.iter(f"{SVG}polyline")]
        assert series == ["train", "test"]
        assert all(len(points(p)) == 50 for p in panel.iter(f"{SVG}polyline"))


def test_single_epoch_log():
    root = ET.fromstring(plots.training_curves_svg(log_rows(1)))
    assert len(list(polylines(root))) == 4


def test_roc_diagonal_endpoints():
    root = ET.fromstring(plots.roc_svg([(0.0, 0.0), (1.0, 1.0)], 0.5))
    (poly,) = polylines(root)
    assert points(poly) == [ROC_FRAME.map(0, 0), ROC_FRAME.map(1, 1)]
    assert "AUC = 0.5000" in ET.tostring(root, encoding="unicode")


def test_confusion_annotations():
    svg = plots.confusion_svg([[5, 1], [0, 8]], [[0.833333, 0.166667], [0.0, 1.0]])
    ET.fromstring(svg)
    assert "5 (83.33%)" in svg and "8 (100.00%)" in svg
    assert svg.count("<rect") == 1 + 4


@pytest.mark.parametrize(
    "render",
    [
        lambda: plots.training_curves_svg(log_rows(7)),
        lambda: plots.roc_svg([(0, 0), (0.25, 0.5), (1, 1)], 0.7),
        lambda: plots.confusion_svg([[1, 2], [3, 4]], [[1 / 3, 2 / 3], [3 / 7, 4 / 7]]),
    ],
)
def test_deterministic(render):
    assert render() == render()


def test_coordinates_have_two_decimals():
    svg = plots.roc_svg([(0, 0), (1 / 3, 2 / 3), (1, 1)])
    pts = re.search(r'points="([^"]+)"', svg).group(1)
    assert all(re.fullmatch(r"\d+\.\d{2},\d+\.\d{2}", p) for p in pts.split())
