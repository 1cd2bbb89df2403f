import math
import re
from dataclasses import replace

import numpy as np
import pytest

from trussketch import annotator, pipeline, solver, synth
from trussketch import textreader as tr
from trussketch.annotator import OverlayStyle
from trussketch.trussmodel import LoadSpec, MemberSpec, Node, SupportSpec, TrussModel, load_model, with_scale

STYLE = OverlayStyle()
NUMBER = re.compile(r"\d+\.\d\d")


def a_frame_px(P=10.0):
    """A-frame drawn at 200 px per meter: A=1, B=2, C=3 (apex)."""
    nodes = (Node(1, (200.0, 500.0)), Node(2, (600.0, 500.0)), Node(3, (400.0, 300.0)))
    members = (MemberSpec(1, 1, 3, "AC"), MemberSpec(2, 2, 3, "CB"), MemberSpec(3, 1, 2, "AB"))
    supports = (SupportSpec(1, "pinned"), SupportSpec(2, "roller", 0.0))
    loads = (LoadSpec(1, 3, P, 270.0),)
    return with_scale(TrussModel(nodes, members, supports, loads), 1 / 200)


def blank(h=700, w=800):
    return np.full((h, w), 255, np.uint8)


def force_words(rgb):
    ink = np.all(rgb == STYLE.tension_color, axis=2) | np.all(rgb == STYLE.compression_color, axis=2)
    words = tr.read_words(tr.group_words(ink))
    return [w.text for w in words]


# the template OCR reads the glyphs exactly at their native 24 px
NATIVE = OverlayStyle(font_size=24)


# -- overlay ------------------------------------------------------------------


def test_three_members_give_three_labels():
    m = a_frame_px()
    out = annotator.render_overlay(blank(), m, solver.solve(m), NATIVE)
    numbers = [t for t in force_words(out) if NUMBER.search(t)]
    assert len(numbers) == 3
    values = sorted(float(NUMBER.search(t).group()) for t in numbers)
    assert values == pytest.approx([5.0, 7.07, 7.07])


def test_default_size_gives_one_word_per_member():
    m = a_frame_px()
    words = force_words(annotator.render_overlay(blank(), m, solver.solve(m)))
    assert len(words) == 3
    assert all(w.endswith("kN") for w in words)


def test_compression_and_tension_colors():
    m = a_frame_px()
    out = annotator.render_overlay(blank(), m, solver.solve(m))
    assert np.all(out == STYLE.compression_color, axis=2).any()
    assert np.all(out == STYLE.tension_color, axis=2).any()


def test_geometry_only_without_result():
    out = annotator.render_overlay(blank(), a_frame_px(), None)
    assert force_words(out) == []
    assert np.all(out == STYLE.member_color, axis=2).any()
    assert np.all(out == STYLE.joint_color, axis=2).any()
    assert np.all(out == STYLE.support_color, axis=2).any()
    assert np.all(out == STYLE.arrow_color, axis=2).any()


def test_empty_model_is_identity():
    gray = np.random.default_rng(0).integers(0, 256, (40, 60)).astype(np.uint8)
    out = annotator.render_overlay(gray, TrussModel())
    assert out.shape == (40, 60, 3)
    assert all(np.array_equal(out[..., c], gray) for c in range(3))


def test_dimensions_kept_and_labels_clamped():
    m = a_frame_px()
    # push the structure against the top-left corner
    moved = replace(m, nodes=tuple(replace(n, pos_px=(n.pos_px[0] - 190, n.pos_px[1] - 290)) for n in m.nodes))
    gray = blank(260, 460)
    out = annotator.render_overlay(gray, moved, solver.solve(m))
    assert out.shape == (260, 460, 3)
    assert len(force_words(out)) == 3
    # at 24 px the space before "kN" splits it off as its own word
    out = annotator.render_overlay(gray, moved, solver.solve(m), NATIVE)
    assert len([t for t in force_words(out) if NUMBER.search(t)]) == 3


def test_label_format():
    assert annotator.force_label(5.0, STYLE) == "+5.00 kN"
    assert annotator.force_label(-7.0711, STYLE) == "−7.07 kN"
    assert annotator.force_label(-1e-16, STYLE) == "0.00 kN"


def test_style_invariants():
    with pytest.raises(ValueError, match="distinct"):
        OverlayStyle(arrow_color=OverlayStyle().joint_color)
    with pytest.raises(ValueError, match="font size"):
        OverlayStyle(font_size=6)


def test_overlay_deterministic(tmp_path):
    m = a_frame_px()
    r = solver.solve(m)
    a, b = tmp_path / "a.png", tmp_path / "b.png"
    annotator.save_png(annotator.render_overlay(blank(), m, r), a)
    annotator.save_png(annotator.render_overlay(blank(), m, r), b)
    assert a.read_bytes() == b.read_bytes()


# -- export -------------------------------------------------------------------


def test_a_frame_export_by_member_name():
    m = a_frame_px()
    doc = annotator.export_results(m, solver.solve(m))
    got = {k: round(v, 4) for k, v in doc["results"]["axial_kN"].items()}
    assert got == {"AC": -7.0711, "CB": -7.0711, "AB": 5.0}
    assert doc["results"]["sign_convention"] == "tension positive"


def test_export_import_and_bytes(tmp_path):
    m = a_frame_px()
    r = solver.solve(m)
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    annotator.write_results(a, m, r)
    annotator.write_results(b, m, r)
    assert a.read_bytes() == b.read_bytes()
    assert load_model(a) == m


def test_unnamed_members_keyed_by_id():
    m = a_frame_px()
    m = replace(m, members=tuple(replace(x, name=None) for x in m.members))
    assert set(annotator.export_results(m, solver.solve(m))["results"]["axial_kN"]) == {"1", "2", "3"}


def test_forces_table_and_figure(tmp_path):
    m = a_frame_px()
    r = solver.solve(m)
    rows = annotator.forces_table(m, r).splitlines()
    assert rows[0] == "member,node_a,node_b,length_m,axial_kN,state"
    assert rows[3].startswith("AB,1,2,2,5,tension")
    annotator.report_figure(m, r, tmp_path / "f.png")
    annotator.report_figure(m, r, tmp_path / "g.png")
    assert (tmp_path / "f.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
    assert (tmp_path / "f.png").read_bytes() == (tmp_path / "g.png").read_bytes()


# -- generator ----------------------------------------------------------------


def triangle_px():
    nodes = (Node(1, (300.0, 450.0)), Node(2, (700.0, 450.0)), Node(3, (500.0, 220.0)))
    members = (MemberSpec(1, 1, 2), MemberSpec(2, 1, 3), MemberSpec(3, 2, 3))
    supports = (SupportSpec(1, "pinned"), SupportSpec(2, "roller", 0.0))
    loads = (LoadSpec(1, 3, 12.0, 270.0),)
    return TrussModel(nodes, members, supports, loads)


def test_triangle_round_trip():
    src = triangle_px()
    got = pipeline.analyze(synth.generate_sketch(src), scale=(1, 2, 4.0)).model
    assert len(got.nodes) == 3
    match = {}
    for n in src.nodes:
        g = min(got.nodes, key=lambda q: math.dist(q.pos_px, n.pos_px))
        assert math.dist(g.pos_px, n.pos_px) <= 3.0
        match[n.id] = g.id
    assert {tuple(sorted((match[m.node_a], match[m.node_b]))) for m in src.members} == {m.pair for m in got.members}
    assert {(match[s.node], s.kind) for s in src.supports} == {(s.node, s.kind) for s in got.supports}
    assert [(match[l.node], l.magnitude) for l in src.loads] == [(l.node, l.magnitude) for l in got.loads]
    assert got.loads[0].direction_deg == pytest.approx(270.0, abs=2.0)


def test_generator_deterministic():
    a = synth.generate_sketch(triangle_px(), seed=3)
    b = synth.generate_sketch(triangle_px(), seed=3)
    assert a.dtype == np.uint8 and np.array_equal(a, b)


def test_coincident_nodes_rejected():
    m = triangle_px()
    m = replace(m, nodes=m.nodes[:2] + (Node(3, m.nodes[0].pos_px),))
    with pytest.raises(synth.LayoutError, match="coincident"):
        synth.generate_sketch(m)


def test_symbol_off_canvas_rejected():
    m = triangle_px()
    m = replace(m, nodes=(Node(1, (300.0, 690.0)),) + m.nodes[1:])
    with pytest.raises(synth.LayoutError, match="unrenderable layout"):
        synth.generate_sketch(m)


def test_degenerate_random_truss():
    with pytest.raises(Exception, match="degenerate truss"):
        synth.random_sketch_model(1, n_joints=1)


def test_random_models_are_determinate():
    for seed in range(10):
        model, sk = synth.random_sketch_model(seed)
        assert solver.classify_determinacy(model).kind == "determinate"
        assert sk.gray.shape == (700, 1000)
