"""URDF subset loader for gripper models.

Supported: <link> with box or OBJ mesh geometry (collision preferred over
visual, all geometries of the chosen kind merged), <joint> of type fixed,
prismatic, or revolute with origin/axis/limit. Inertial blocks are ignored;
masses come from the mesh volume and a caller-supplied density.
Transmissions, sensors, and materials are out of scope.
"""

from __future__ import annotations

import os
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field

import numpy as np

from ..geometry.mesh import SurfaceMesh, box_surface, load_obj

JOINT_TYPES = ("fixed", "prismatic", "revolute")


def rpy_matrix(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """URDF fixed-axis convention: R = Rz(yaw) @ Ry(pitch) @ Rx(roll)."""
    cr, sr = np.cos(roll), np.sin(roll)
    cp, sp = np.cos(pitch), np.sin(pitch)
    cy, sy = np.cos(yaw), np.sin(yaw)
    rx = np.array([[1, 0, 0], [0, cr, -sr], [0, sr, cr]])
    ry = np.array([[cp, 0, sp], [0, 1, 0], [-sp, 0, cp]])
    rz = np.array([[cy, -sy, 0], [sy, cy, 0], [0, 0, 1]])
    return rz @ ry @ rx


def _origin_transform(elem) -> np.ndarray:
    t = np.eye(4)
    if elem is None:
        return t
    xyz = [float(v) for v in elem.get("xyz", "0 0 0").split()]
    rpy = [float(v) for v in elem.get("rpy", "0 0 0").split()]
    t[:3, :3] = rpy_matrix(*rpy)
    t[:3, 3] = xyz
    return t


def _merge(meshes: list[SurfaceMesh]) -> SurfaceMesh:
    if len(meshes) == 1:
        return meshes[0]
    verts, tris, base = [], [], 0
    for m in meshes:
        verts.append(m.vertices)
        tris.append(np.asarray(m.triangles, dtype=np.int64) + base)
        base += len(m.vertices)
    return SurfaceMesh(np.concatenate(verts), np.concatenate(tris))


@dataclass
class UrdfLink:
    name: str
    mesh: SurfaceMesh | None  # None: pure frame, no collision geometry


@dataclass
class UrdfJoint:
    name: str
    type: str
    parent: str
    child: str
    origin: np.ndarray  # (4, 4) parent-to-child at zero joint value
    axis: np.ndarray  # (3,) unit, child frame
    lower: float = 0.0
    upper: float = 0.0


@dataclass
class UrdfModel:
    name: str
    links: dict[str, UrdfLink]
    joints: list[UrdfJoint] = field(default_factory=list)
    root: str = ""

    def children_of(self, link: str) -> list[UrdfJoint]:
        return [j for j in self.joints if j.parent == link]

    def actuated(self) -> list[UrdfJoint]:
        return [j for j in self.joints if j.type != "fixed"]


def _link_geometry(link_elem, base_dir: str, name: str) -> SurfaceMesh | None:
    geoms = link_elem.findall("collision") or link_elem.findall("visual")
    meshes = []
    for g in geoms:
        geometry = g.find("geometry")
        if geometry is None:
            continue
        t = _origin_transform(g.find("origin"))
        box = geometry.find("box")
        mesh_ref = geometry.find("mesh")
        if box is not None:
            size = [float(v) for v in box.get("size", "").split()]
            if len(size) != 3 or min(size) <= 0:
                raise ValueError(f"link '{name}': box size must be 3 positive values")
            m = box_surface(size)
        elif mesh_ref is not None:
            fname = mesh_ref.get("filename", "")
            path = fname if os.path.isabs(fname) else os.path.join(base_dir, fname)
            if not os.path.exists(path):
                raise FileNotFoundError(f"link '{name}': mesh file not found: {path}")
            m = load_obj(path)
            scale = mesh_ref.get("scale")
            if scale is not None:
                s = np.array([float(v) for v in scale.split()])
                m = SurfaceMesh(m.vertices * s, m.triangles)
        else:
            raise ValueError(f"link '{name}': unsupported geometry (box or mesh only)")
        v = m.vertices @ t[:3, :3].T + t[:3, 3]
        meshes.append(SurfaceMesh(v, m.triangles))
    return _merge(meshes) if meshes else None


def parse_urdf(path) -> UrdfModel:
    tree = ET.parse(path)
    robot = tree.getroot()
    if robot.tag != "robot":
        raise ValueError(f"{path}: root element must be <robot>")
    base_dir = os.path.dirname(os.path.abspath(path))

    links: dict[str, UrdfLink] = {}
    for le in robot.findall("link"):
        name = le.get("name")
        if not name:
            raise ValueError(f"{path}: link without a name")
        if name in links:
            raise ValueError(f"{path}: duplicate link '{name}'")
        links[name] = UrdfLink(name, _link_geometry(le, base_dir, name))

    joints: list[UrdfJoint] = []
    for je in robot.findall("joint"):
        name = je.get("name", "")
        jtype = je.get("type", "")
        if jtype not in JOINT_TYPES:
            raise ValueError(f"{path}: joint '{name}' has unsupported type '{jtype}'")
        parent = je.find("parent")
        child = je.find("child")
        if parent is None or child is None:
            raise ValueError(f"{path}: joint '{name}' missing parent or child")
        pname, cname = parent.get("link"), child.get("link")
        for ln in (pname, cname):
            if ln not in links:
                raise ValueError(f"{path}: joint '{name}' references unknown link '{ln}'")
        axis_elem = je.find("axis")
        axis = np.array(
            [float(v) for v in axis_elem.get("xyz", "1 0 0").split()]
            if axis_elem is not None
            else (1.0, 0.0, 0.0)
        )
        lower = upper = 0.0
        if jtype != "fixed":
            n = np.linalg.norm(axis)
            if n == 0:
                raise ValueError(f"{path}: joint '{name}' has zero axis")
            axis = axis / n
            limit = je.find("limit")
            if limit is None:
                raise ValueError(f"{path}: {jtype} joint '{name}' requires <limit>")
            lower = float(limit.get("lower", "0"))
            upper = float(limit.get("upper", "0"))
            if lower > upper:
                raise ValueError(f"{path}: joint '{name}' has lower > upper")
        joints.append(
            UrdfJoint(name, jtype, pname, cname, _origin_transform(je.find("origin")), axis, lower, upper)
        )

    children = {j.child for j in joints}
    if len(children) != len(joints):
        raise ValueError(f"{path}: a link has multiple parent joints")
    roots = [n for n in links if n not in children]
    if len(roots) != 1:
        raise ValueError(f"{path}: expected exactly one root link, found {roots}")

    # reachability doubles as the acyclicity check given unique parents
    seen, stack = set(), [roots[0]]
    while stack:
        cur = stack.pop()
        seen.add(cur)
        stack.extend(j.child for j in joints if j.parent == cur)
    unreachable = set(links) - seen
    if unreachable:
        raise ValueError(f"{path}: links not reachable from root: {sorted(unreachable)}")

    return UrdfModel(robot.get("name", ""), links, joints, roots[0])
