import xml.etree.ElementTree as ET

from flora.svg import line_plot, write_line_plot


def test_well_formed_and_deterministic(tmp_path):
    series = {"a<b": [(0, 1.0), (1, 2.0)], "c": [(0, 0.5), (2, 0.5)]}
    text = line_plot(series, title="t & u", xlabel="step", ylabel="acc")
    root = ET.fromstring(text)
    assert root.tag.endswith("svg")
    assert len(root.findall("{http://www.w3.org/2000/svg}polyline")) == 2
    assert text == line_plot(series, title="t & u", xlabel="step", ylabel="acc")
    write_line_plot(tmp_path / "p.svg", series)
    assert (tmp_path / "p.svg").read_text() == line_plot(series)


def test_degenerate_ranges():
    ET.fromstring(line_plot({"flat": [(3, 1.0), (3, 1.0)]}))
    ET.fromstring(line_plot({}))
