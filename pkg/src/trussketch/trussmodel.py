"""The planar truss model assembled from a parsed sketch.

Two coordinate frames are in play.  Image space is pixels with y pointing
down; model space is meters with y pointing up.  A node keeps both; the
meter position exists only once a scale has been calibrated.

Models are immutable: every operation returns a new :class:`TrussModel`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional

SCHEMA = "trussketch-model/1"

PINNED = "pinned"
ROLLER = "roller"


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class Node:
    id: int
    pos_px: tuple[float, float]
    pos_m: Optional[tuple[float, float]] = None


@dataclass(frozen=True)
class MemberSpec:
    id: int
    node_a: int
    node_b: int
    name: Optional[str] = None
    EA: float = 1.0

    @property
    def pair(self) -> tuple[int, int]:
        return (min(self.node_a, self.node_b), max(self.node_a, self.node_b))


@dataclass(frozen=True)
class SupportSpec:
    node: int
    kind: str
    roll_angle_deg: Optional[float] = None

    @property
    def reaction_count(self) -> int:
        return 2 if self.kind == PINNED else 1


@dataclass(frozen=True)
class LoadSpec:
    """A nodal point load.  ``direction_deg`` is measured CCW from +x with y
    up; ``magnitude`` is in kN and may be ``None`` until a label supplies it."""

    id: int
    node: int
    magnitude: Optional[float]
    direction_deg: float

    @property
    def components(self) -> tuple[float, float]:
        a = math.radians(self.direction_deg)
        m = self.magnitude or 0.0
        return m * math.cos(a), m * math.sin(a)


@dataclass(frozen=True)
class ValidationIssue:
    severity: str  # "error" | "warning"
    code: str
    subject: str
    message: str
    remedy: str = ""

    def to_dict(self) -> dict:
        return {
            "severity": self.severity,
            "code": self.code,
            "subject": self.subject,
            "message": self.message,
            "remedy": json.loads(self.remedy) if self.remedy.startswith("{") else self.remedy,
        }


@dataclass(frozen=True)
class TrussModel:
    nodes: tuple[Node, ...] = ()
    members: tuple[MemberSpec, ...] = ()
    supports: tuple[SupportSpec, ...] = ()
    loads: tuple[LoadSpec, ...] = ()
    scale_m_per_px: Optional[float] = None

    # -- lookups ---------------------------------------------------------

    def node(self, node_id: int) -> Node:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise ModelError(f"no such node {node_id}")

    def node_ids(self) -> list[int]:
        return [n.id for n in self.nodes]

    def member_by_pair(self, a: int, b: int) -> Optional[MemberSpec]:
        key = (min(a, b), max(a, b))
        for m in self.members:
            if m.pair == key:
                return m
        return None

    def support_at(self, node_id: int) -> Optional[SupportSpec]:
        for s in self.supports:
            if s.node == node_id:
                return s
        return None

    def length_m(self, member: MemberSpec) -> float:
        (xa, ya), (xb, yb) = self.node(member.node_a).pos_m, self.node(member.node_b).pos_m
        return math.hypot(xb - xa, yb - ya)

    def distance_m(self, i: int, j: int) -> float:
        a, b = self.node(i).pos_m, self.node(j).pos_m
        if a is None or b is None:
            raise ModelError("model has no scale")
        return math.hypot(b[0] - a[0], b[1] - a[1])

    # -- construction helpers ---------------------------------------------

    @classmethod
    def from_geometry(
        cls,
        nodes: dict[int, tuple[float, float]],
        members: Iterable[tuple[int, int]],
        supports: dict[int, object] | None = None,
        loads: Iterable[tuple[int, float, float]] = (),
        EA: float = 1.0,
    ) -> "TrussModel":
        """Build a calibrated model straight from meter coordinates (y up).

        ``supports`` maps node id to ``"pinned"`` or to a roll angle in degrees
        for a roller.  Pixel positions mirror the meter ones at 1 px = 1 m.
        """
        ns = tuple(Node(i, (float(x), -float(y)), (float(x), float(y))) for i, (x, y) in sorted(nodes.items()))
        ms = tuple(MemberSpec(k, a, b, None, EA) for k, (a, b) in enumerate(members, start=1))
        ss = []
        for n, kind in sorted((supports or {}).items()):
            if kind == PINNED:
                ss.append(SupportSpec(n, PINNED))
            else:
                ss.append(SupportSpec(n, ROLLER, float(kind) % 180.0))
        ls = tuple(LoadSpec(k, n, float(mag), float(d) % 360.0) for k, (n, mag, d) in enumerate(loads, start=1))
        return cls(ns, ms, tuple(ss), ls, 1.0)

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "scale_m_per_px": self.scale_m_per_px,
            "nodes": [
                {"id": n.id, "px": list(n.pos_px), "m": None if n.pos_m is None else list(n.pos_m)}
                for n in self.nodes
            ],
            "members": [{"id": m.id, "a": m.node_a, "b": m.node_b, "name": m.name, "EA": m.EA} for m in self.members],
            "supports": [
                {"node": s.node, "kind": s.kind, **({"roll_angle_deg": s.roll_angle_deg} if s.kind == ROLLER else {})}
                for s in self.supports
            ],
            "loads": [
                {"id": l.id, "node": l.node, "magnitude_kN": l.magnitude, "direction_deg": l.direction_deg}
                for l in self.loads
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TrussModel":
        if doc.get("schema") != SCHEMA:
            raise ModelError(f"unsupported schema {doc.get('schema')!r}, expected {SCHEMA!r}")
        try:
            nodes = tuple(
                Node(int(n["id"]), _pair(n["px"]), None if n.get("m") is None else _pair(n["m"])) for n in doc["nodes"]
            )
            members = tuple(
                MemberSpec(int(m["id"]), int(m["a"]), int(m["b"]), m.get("name"), float(m.get("EA", 1.0)))
                for m in doc["members"]
            )
            supports = tuple(
                SupportSpec(
                    int(s["node"]),
                    s["kind"],
                    None if s.get("roll_angle_deg") is None else float(s["roll_angle_deg"]),
                )
                for s in doc["supports"]
            )
            loads = tuple(
                LoadSpec(
                    int(l.get("id", k)),
                    int(l["node"]),
                    None if l.get("magnitude_kN") is None else float(l["magnitude_kN"]),
                    float(l["direction_deg"]),
                )
                for k, l in enumerate(doc["loads"], start=1)
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ModelError(f"malformed model document: {exc}") from exc
        for s in supports:
            if s.kind not in (PINNED, ROLLER):
                raise ModelError(f"unknown support kind {s.kind!r}")
        scale = doc.get("scale_m_per_px")
        return cls(nodes, members, supports, loads, None if scale is None else float(scale))


def _pair(v) -> tuple[float, float]:
    x, y = v
    return (float(x), float(y))


def dumps(doc: dict) -> str:
    """Canonical JSON text used for every file the package writes."""
    return json.dumps(doc, indent=2, sort_keys=False, allow_nan=False) + "\n"


def save_model(model: TrussModel, path: str | Path, results: dict | None = None) -> None:
    doc = model.to_dict()
    if results is not None:
        doc["results"] = results
    Path(path).write_text(dumps(doc), encoding="utf-8")


def load_model(path: str | Path) -> TrussModel:
    return TrussModel.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


# ---------------------------------------------------------------------------
# Assembly from segmentation


def build_model(joints, members, supports, arrows, labels) -> TrussModel:
    """Turn segmentation output into a model.

    ``labels`` are recognized labels already snapped to arrows or members;
    an arrow without a parsed magnitude yields a load whose magnitude is
    ``None`` for :func:`validate` to report.
    """
    id_map = {j.id: k for k, j in enumerate(sorted(joints, key=lambda j: j.id), start=1)}
    nodes = tuple(Node(id_map[j.id], (float(j.center[0]), float(j.center[1]))) for j in sorted(joints, key=lambda j: j.id))

    names = {}
    magnitudes = {}
    flipped = set()
    for lab in labels:
        kind, ref = lab.attached_to if lab.attached_to else (None, None)
        if kind == "member":
            names[ref] = lab.text
        elif kind == "arrow" and lab.magnitude_kN is not None and ref not in magnitudes:
            magnitudes[ref] = lab.magnitude_kN
            if getattr(lab, "reversed", False):
                flipped.add(ref)

    ms = tuple(
        MemberSpec(k, id_map[m.joint_a], id_map[m.joint_b], names.get(m.id))
        for k, m in enumerate(sorted(members, key=lambda m: m.id), start=1)
    )
    ss = tuple(
        SupportSpec(id_map[s.apex_joint], s.kind, s.roll_angle_deg)
        for s in sorted(supports, key=lambda s: (id_map[s.apex_joint], s.id))
        if s.apex_joint in id_map
    )
    ls = tuple(
        LoadSpec(
            k,
            id_map[a.target_joint],
            magnitudes.get(a.id),
            (float(a.orientation_deg) + (180.0 if a.id in flipped else 0.0)) % 360.0,
        )
        for k, a in enumerate(sorted(arrows, key=lambda a: a.id), start=1)
    )
    return TrussModel(nodes, ms, ss, ls, None)


# ---------------------------------------------------------------------------
# Validation


def _remedy(op: str, target: str, value) -> str:
    return json.dumps({"op": op, "target": target, "value": value})


def validate(model: TrussModel) -> list[ValidationIssue]:
    """List every problem that blocks (error) or qualifies (warning) a solve."""
    from .solver import classify_determinacy

    issues: list[ValidationIssue] = []

    def err(code, subject, message, remedy=""):
        issues.append(ValidationIssue("error", code, subject, message, remedy))

    def warn(code, subject, message, remedy=""):
        issues.append(ValidationIssue("warning", code, subject, message, remedy))

    if not model.nodes:
        err("no-nodes", "model", "no nodes", "re-draw the joints as filled circles or add them to the sketch")
        return issues

    ids = set(model.node_ids())
    for m in model.members:
        if m.node_a not in ids or m.node_b not in ids:
            err("bad-member-ref", f"member {m.id}", f"member {m.id} references a missing node",
                _remedy("delete", f"member {m.id}", None))
        elif m.node_a == m.node_b:
            err("self-member", f"member {m.id}", f"member {m.id} connects node {m.node_a} to itself",
                _remedy("delete", f"member {m.id}", None))
        elif model.node(m.node_a).pos_px == model.node(m.node_b).pos_px:
            err("zero-length-member", f"member {m.id}", f"member {m.id} has zero length",
                _remedy("delete", f"member {m.id}", None))
        if m.EA <= 0:
            err("bad-section", f"member {m.id}", f"member {m.id} has non-positive EA",
                _remedy("set", f"member {m.id}", {"EA": 1.0}))
    seen_pairs = {}
    for m in model.members:
        if m.pair in seen_pairs:
            err("duplicate-member", f"member {m.id}", f"member {m.id} duplicates member {seen_pairs[m.pair]}",
                _remedy("delete", f"member {m.id}", None))
        else:
            seen_pairs[m.pair] = m.id

    for l in model.loads:
        if l.node not in ids:
            err("bad-load-ref", f"load {l.id}", f"load {l.id} references missing node {l.node}",
                _remedy("set", f"load {l.id}", {"node": min(ids)}))
        if l.magnitude is None:
            err("missing-load-magnitude", f"load {l.id}", f"missing load magnitude for load {l.id} at node {l.node}",
                _remedy("set", f"load {l.id}", {"magnitude_kN": 10.0}))
        elif l.magnitude < 0 or not math.isfinite(l.magnitude):
            err("bad-load-magnitude", f"load {l.id}", f"load {l.id} magnitude must be finite and >= 0",
                _remedy("set", f"load {l.id}", {"magnitude_kN": abs(l.magnitude)}))

    supported = {}
    for s in model.supports:
        if s.node not in ids:
            err("bad-support-ref", f"support {s.node}", f"support references missing node {s.node}",
                _remedy("delete", f"support {s.node}", None))
        if s.node in supported:
            err("duplicate-support", f"support {s.node}", f"node {s.node} carries more than one support",
                _remedy("delete", f"support {s.node}", None))
        supported[s.node] = s
        if s.kind == ROLLER and s.roll_angle_deg is None:
            err("missing-roll-angle", f"support {s.node}", f"roller at node {s.node} has no roll angle",
                _remedy("set", f"support {s.node}", {"kind": ROLLER, "roll_angle_deg": 0.0}))

    reactions = sum(s.reaction_count for s in model.supports)
    if not model.supports:
        err("no-supports", "model", "no supports", _remedy("add", "support 1", {"kind": PINNED}))
    elif reactions < 3:
        err("insufficient-supports", "model",
            f"insufficient supports: {reactions} reaction components, at least 3 needed",
            _remedy("set", f"support {model.supports[0].node}", {"kind": PINNED}))

    if model.scale_m_per_px is None:
        a, b = model.nodes[0].id, model.nodes[-1].id
        err("missing-scale", "model", "missing scale: the real distance between two nodes is required",
            _remedy("scale_ref", "", {"nodes": [a, b], "distance_m": 1.0}))

    used = {m.node_a for m in model.members} | {m.node_b for m in model.members}
    for n in model.nodes:
        if len(model.nodes) > 1 and n.id not in used:
            warn("isolated-node", f"node {n.id}", f"node {n.id} is not connected to any member")

    if not any(i.severity == "error" and i.code in ("bad-member-ref", "insufficient-supports", "no-supports")
               for i in issues):
        det = classify_determinacy(model)
        if det.kind == "mechanism":
            err("mechanism", "model", f"structure is a mechanism (degree {det.degree}): add members or supports")
        elif det.kind == "indeterminate":
            warn("indeterminate", "model",
                 f"statically indeterminate (degree {det.degree}); forces depend on the uniform EA assumption")
    return issues


def has_errors(issues: Iterable[ValidationIssue]) -> bool:
    return any(i.severity == "error" for i in issues)


# ---------------------------------------------------------------------------
# Corrections and scale


def calibrate_scale(model: TrussModel, node_i: int, node_j: int, distance_m: float) -> TrussModel:
    """Fix the meters-per-pixel ratio from one known node-to-node distance."""
    if distance_m is None or not distance_m > 0:
        raise ModelError("reference distance must be > 0")
    a, b = model.node(node_i), model.node(node_j)
    px = math.hypot(b.pos_px[0] - a.pos_px[0], b.pos_px[1] - a.pos_px[1])
    if node_i == node_j or px == 0.0:
        raise ModelError("zero-length reference")
    return with_scale(model, distance_m / px)


def with_scale(model: TrussModel, scale: float) -> TrussModel:
    nodes = tuple(replace(n, pos_m=(n.pos_px[0] * scale, -n.pos_px[1] * scale)) for n in model.nodes)
    return replace(model, nodes=nodes, scale_m_per_px=scale)


class CorrectionError(ModelError):
    pass


def load_corrections(path: str | Path) -> list[dict]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(doc, dict) or not isinstance(doc.get("directives"), list):
        raise CorrectionError("corrections file must be an object with a 'directives' list")
    return doc["directives"]


def _parse_target(target: str) -> tuple[str, Optional[str]]:
    parts = str(target or "").split(None, 1)
    if not parts:
        return "", None
    return parts[0].lower(), parts[1].strip() if len(parts) > 1 else None


def _member_key(model: TrussModel, ref: str) -> Optional[MemberSpec]:
    if ref is None:
        return None
    ref = ref.strip("() ")
    for sep in ("-", ","):
        if sep in ref:
            a, b = (int(t) for t in ref.split(sep))
            return model.member_by_pair(a, b)
    mid = int(ref)
    return next((m for m in model.members if m.id == mid), None)


def _member_pair(ref: str) -> tuple[int, int]:
    ref = ref.strip("() ")
    for sep in ("-", ","):
        if sep in ref:
            a, b = (int(t) for t in ref.split(sep))
            return a, b
    raise ValueError("member to add must be given as a node pair 'a-b'")


def _free_id(used: Iterable[int]) -> int:
    used = set(used)
    k = 1
    while k in used:
        k += 1
    return k


def apply_corrections(model: TrussModel, directives: list[dict]) -> TrussModel:
    """Apply user directives in order.

    Each directive is ``{"op": ..., "target": ..., "value": ...}``:

    ========== ================= =============================================
    op         target            value
    ========== ================= =============================================
    set        ``load K``        ``{"magnitude_kN", "direction_deg", "node"}``
    set        ``support N``     ``{"kind", "roll_angle_deg"}`` (adds if absent)
    set        ``member K``      ``{"name", "EA"}``
    set        ``node N``        ``{"px": [x, y]}``
    delete     ``load K`` / ``support N`` / ``member K`` / ``member A-B``
    add        ``member A-B``    ``{"name", "EA"}`` or null
    add        ``support N``     ``{"kind", "roll_angle_deg"}``
    add        ``load``          ``{"node", "magnitude_kN", "direction_deg"}``
    scale_ref  (ignored)         ``{"nodes": [i, j], "distance_m": d}``
    ========== ================= =============================================
    """
    for idx, d in enumerate(directives, start=1):
        try:
            model = _apply_one(model, d)
        except CorrectionError as exc:
            raise CorrectionError(f"directive {idx}: {exc}") from None
        except (ModelError, KeyError, TypeError, ValueError) as exc:
            raise CorrectionError(f"directive {idx}: {exc}") from None
    return model


def _apply_one(model: TrussModel, d: dict) -> TrussModel:
    op = d.get("op")
    kind, ref = _parse_target(d.get("target", ""))
    value = d.get("value")

    if op == "scale_ref":
        (i, j), dist = value["nodes"], value["distance_m"]
        return calibrate_scale(model, int(i), int(j), float(dist))

    if kind == "load":
        if op == "add":
            new = LoadSpec(_free_id(l.id for l in model.loads), int(value["node"]),
                           None if value.get("magnitude_kN") is None else float(value["magnitude_kN"]),
                           float(value.get("direction_deg", 270.0)) % 360.0)
            _require_node(model, new.node)
            return replace(model, loads=tuple(sorted(model.loads + (new,), key=lambda l: l.id)))
        lid = int(ref)
        load = next((l for l in model.loads if l.id == lid), None)
        if load is None:
            raise CorrectionError("no such load")
        if op == "delete":
            return replace(model, loads=tuple(l for l in model.loads if l.id != lid))
        if op == "set":
            changes = {}
            if "magnitude_kN" in value or "magnitude" in value:
                mag = value.get("magnitude_kN", value.get("magnitude"))
                changes["magnitude"] = None if mag is None else float(mag)
            if "direction_deg" in value:
                changes["direction_deg"] = float(value["direction_deg"]) % 360.0
            if "node" in value:
                _require_node(model, int(value["node"]))
                changes["node"] = int(value["node"])
            new = replace(load, **changes)
            return replace(model, loads=tuple(new if l.id == lid else l for l in model.loads))

    elif kind == "support":
        nid = int(ref)
        current = model.support_at(nid)
        if op == "delete":
            if current is None:
                raise CorrectionError("no such support")
            return replace(model, supports=tuple(s for s in model.supports if s.node != nid))
        if op in ("set", "add"):
            _require_node(model, nid)
            if op == "add" and current is not None:
                raise CorrectionError(f"node {nid} already has a support")
            skind = value.get("kind", current.kind if current else PINNED)
            if skind not in (PINNED, ROLLER):
                raise CorrectionError(f"unknown support kind {skind!r}")
            angle = None
            if skind == ROLLER:
                angle = float(value.get("roll_angle_deg", current.roll_angle_deg if current and current.roll_angle_deg is not None else 0.0)) % 180.0
            new = SupportSpec(nid, skind, angle)
            rest = tuple(s for s in model.supports if s.node != nid)
            return replace(model, supports=tuple(sorted(rest + (new,), key=lambda s: s.node)))

    elif kind == "member":
        if op == "add":
            a, b = _member_pair(ref)
            _require_node(model, a)
            _require_node(model, b)
            if a == b:
                raise CorrectionError("member must join two different nodes")
            if model.member_by_pair(a, b) is not None:
                raise CorrectionError(f"member {a}-{b} already exists")
            value = value or {}
            new = MemberSpec(_free_id(m.id for m in model.members), min(a, b), max(a, b),
                             value.get("name"), float(value.get("EA", 1.0)))
            return replace(model, members=tuple(sorted(model.members + (new,), key=lambda m: m.id)))
        member = _member_key(model, ref)
        if member is None:
            raise CorrectionError("no such member")
        if op == "delete":
            return replace(model, members=tuple(m for m in model.members if m.id != member.id))
        if op == "set":
            changes = {}
            if "name" in value:
                changes["name"] = value["name"]
            if "EA" in value:
                changes["EA"] = float(value["EA"])
            new = replace(member, **changes)
            return replace(model, members=tuple(new if m.id == member.id else m for m in model.members))

    elif kind == "node":
        nid = int(ref)
        node = next((n for n in model.nodes if n.id == nid), None)
        if node is None:
            raise CorrectionError("no such node")
        if op == "set" and "px" in value:
            new = replace(node, pos_px=_pair(value["px"]))
            model = replace(model, nodes=tuple(new if n.id == nid else n for n in model.nodes))
            return with_scale(model, model.scale_m_per_px) if model.scale_m_per_px else model

    raise CorrectionError(f"unsupported directive op={op!r} target={d.get('target')!r}")


def _require_node(model: TrussModel, nid: int) -> None:
    if nid not in model.node_ids():
        raise CorrectionError(f"no such node {nid}")
