import math

import numpy as np
import pytest

from trussketch import solver
from trussketch.solver import SolverError, SolveResult
from trussketch.trussmodel import TrussModel

from oracles import method_of_joints
from trusses import random_determinate_truss


def a_frame(P=10.0):
    # members: 1 = AC, 2 = CB, 3 = AB
    return TrussModel.from_geometry(
        {1: (0, 0), 2: (2, 0), 3: (1, 1)},
        [(1, 3), (3, 2), (1, 2)],
        {1: "pinned", 2: 0.0},
        [(3, P, 270.0)],
    )


def oracle_forces(model):
    nodes = {n.id: n.pos_m for n in model.nodes}
    members = {m.id: (m.node_a, m.node_b) for m in model.members}
    supports = {s.node: (s.kind, s.roll_angle_deg) for s in model.supports}
    loads = [(l.node, *l.components) for l in model.loads]
    return method_of_joints(nodes, members, supports, loads)


def test_classify_determinacy():
    assert solver.classify_determinacy(a_frame()).kind == "determinate"
    m = TrussModel.from_geometry({1: (0, 0), 2: (2, 0), 3: (1, 1)}, [(1, 3), (3, 2)], {1: "pinned", 2: 0.0})
    assert solver.classify_determinacy(m) == solver.Determinacy("mechanism", 1)
    quad = TrussModel.from_geometry(
        {1: (0, 0), 2: (1, 0), 3: (1, 1), 4: (0, 1)},
        [(1, 2), (2, 3), (3, 4), (4, 1), (1, 3), (2, 4)],
        {1: "pinned", 2: 0.0},
    )
    assert solver.classify_determinacy(quad) == solver.Determinacy("indeterminate", 1)


def test_assemble_single_horizontal_member():
    m = TrussModel.from_geometry({1: (0, 0), 2: (2, 0)}, [(1, 2)])
    sys = solver.assemble(m)
    expected = np.array([[0.5, 0, -0.5, 0], [0, 0, 0, 0], [-0.5, 0, 0.5, 0], [0, 0, 0, 0]])
    assert np.allclose(sys.K, expected, atol=0, rtol=0)


def test_assemble_symmetric_on_random_trusses():
    rng = np.random.default_rng(5)
    for _ in range(20):
        model = random_determinate_truss(rng)
        K = solver.assemble(model).K
        assert np.max(np.abs(K - K.T)) <= 1e-12 * np.max(np.abs(K))


def test_assemble_zero_length_member():
    m = TrussModel.from_geometry({1: (0, 0), 2: (0, 0)}, [(1, 2)], {1: "pinned"})
    with pytest.raises(SolverError):
        solver.assemble(m)


def test_a_frame_forces():
    res = solver.solve(a_frame())
    assert res.axial[1] == pytest.approx(-10 / math.sqrt(2), rel=1e-12)
    assert res.axial[2] == pytest.approx(-10 / math.sqrt(2), rel=1e-12)
    assert res.axial[3] == pytest.approx(5.0, rel=1e-12)
    assert res.reactions[1] == pytest.approx((0.0, 5.0), abs=1e-12)
    assert res.reactions[2] == pytest.approx((0.0, 5.0), abs=1e-12)
    assert solver.equilibrium_residual(a_frame(), res) <= 1e-9


def test_zero_loads_give_zero_everything():
    m = TrussModel.from_geometry({1: (0, 0), 2: (2, 0), 3: (1, 1)}, [(1, 3), (3, 2), (1, 2)], {1: "pinned", 2: 0.0})
    res = solver.solve(m)
    assert all(v == 0 for v in res.axial.values())
    assert all(d == (0.0, 0.0) for d in res.displacements.values())
    assert all(r == (0.0, 0.0) for r in res.reactions.values())


def test_two_node_bar_tension():
    m = TrussModel.from_geometry({1: (0, 0), 2: (3, 0)}, [(1, 2)], {1: "pinned", 2: 0.0}, [(2, 10.0, 0.0)])
    # roller at node 2 only restrains y, so m + r = 1 + 3 = 2j: determinate
    res = solver.solve(m)
    assert res.axial[1] == pytest.approx(10.0, rel=1e-12)
    assert res.reactions[1] == pytest.approx((-10.0, 0.0), abs=1e-12)


def test_inclined_roller_reaction_is_normal_to_rolling_line():
    m = TrussModel.from_geometry(
        {1: (0, 0), 2: (4, 0), 3: (2, 1.5)},
        [(1, 2), (2, 3), (1, 3)],
        {1: "pinned", 2: 30.0},
        [(3, 12.0, 250.0)],
    )
    res = solver.solve(m)
    rx, ry = res.reactions[2]
    # reaction has no component along the rolling direction
    assert rx * math.cos(math.radians(30)) + ry * math.sin(math.radians(30)) == pytest.approx(0.0, abs=1e-9)
    ux, uy = res.displacements[2]
    assert -ux * math.sin(math.radians(30)) + uy * math.cos(math.radians(30)) == pytest.approx(0.0, abs=1e-12)
    want = oracle_forces(m)
    for k, v in want.items():
        assert res.axial[k] == pytest.approx(v, rel=1e-9, abs=1e-12)


def test_parallel_rollers_are_unstable():
    # three horizontal rollers: the count says determinate, but nothing resists sliding in x
    m = TrussModel.from_geometry(
        {1: (0, 0), 2: (2, 0), 3: (1, 1)},
        [(1, 3), (3, 2), (1, 2)],
        {1: 0.0, 2: 0.0, 3: 0.0},
        [(3, 1.0, 270.0)],
    )
    assert solver.classify_determinacy(m).kind == "determinate"
    with pytest.raises(SolverError, match="unstable geometry"):
        solver.solve(m)


def test_concurrent_reactions_are_unstable():
    # roller normal passes through the pin: rotation about the pin is free
    m = TrussModel.from_geometry(
        {1: (0, 0), 2: (2, 0), 3: (1, 1)},
        [(1, 3), (3, 2), (1, 2)],
        {1: "pinned", 2: 90.0},
        [(3, 1.0, 270.0)],
    )
    with pytest.raises(SolverError, match="unstable geometry"):
        solver.solve(m)


def test_mechanism_rejected():
    m = TrussModel.from_geometry({1: (0, 0), 2: (2, 0), 3: (1, 1)}, [(1, 3), (3, 2)], {1: "pinned", 2: 0.0})
    with pytest.raises(SolverError):
        solver.solve(m)


def test_perturbed_force_shows_in_residual():
    m = a_frame()
    res = solver.solve(m)
    bad = SolveResult(res.displacements, {**res.axial, 3: res.axial[3] + 1.0}, res.reactions)
    assert solver.equilibrium_residual(m, bad) >= 0.5


@pytest.mark.parametrize("seed", range(25))
def test_random_determinate_trusses_match_method_of_joints(seed):
    rng = np.random.default_rng(seed)
    model = random_determinate_truss(rng)
    assert solver.classify_determinacy(model).kind == "determinate"
    res = solver.solve(model)
    want = oracle_forces(model)
    scale = max(1.0, max(abs(v) for v in want.values()))
    for k, v in want.items():
        assert abs(res.axial[k] - v) <= 1e-9 * scale
    max_load = max([l.magnitude for l in model.loads] + [1.0])
    assert solver.equilibrium_residual(model, res) <= 1e-9 * max_load


@pytest.mark.parametrize("seed", range(10))
def test_global_balance_and_invariance(seed):
    rng = np.random.default_rng(100 + seed)
    model = random_determinate_truss(rng)
    res = solver.solve(model)
    total = sum(l.magnitude for l in model.loads) or 1.0
    fx = sum(l.components[0] for l in model.loads) + sum(r[0] for r in res.reactions.values())
    fy = sum(l.components[1] for l in model.loads) + sum(r[1] for r in res.reactions.values())
    mz = 0.0
    for l in model.loads:
        x, y = model.node(l.node).pos_m
        mz += x * l.components[1] - y * l.components[0]
    for nid, (rx, ry) in res.reactions.items():
        x, y = model.node(nid).pos_m
        mz += x * ry - y * rx
    assert abs(fx) <= 1e-9 * total and abs(fy) <= 1e-9 * total
    assert abs(mz) <= 1e-9 * total * max(1.0, max(abs(c) for n in model.nodes for c in n.pos_m))

    from dataclasses import replace

    stiff = replace(model, members=tuple(replace(m, EA=m.EA * 37.5) for m in model.members))
    res2 = solver.solve(stiff)
    for k in res.axial:
        assert res2.axial[k] == pytest.approx(res.axial[k], rel=1e-12, abs=1e-12 * total)

    from trussketch.trussmodel import with_scale

    res3 = solver.solve(with_scale(model, model.scale_m_per_px * 0.013))
    for k in res.axial:
        assert res3.axial[k] == pytest.approx(res.axial[k], rel=1e-12, abs=1e-12 * total)


def test_result_dict_marks_sign_convention():
    d = solver.solve(a_frame()).to_dict()
    assert d["sign_convention"] == "tension positive"
    assert d["axial_kN"]["3"] == pytest.approx(5.0)
