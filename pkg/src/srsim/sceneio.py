"""Declarative scene files and trajectory export.

A scene file is one JSON document: bodies (procedural or file meshes, with
materials and placements), contact and solver overrides, gravity, ground,
seed. Validation happens against a JSON schema first, so errors carry the
field path; semantic checks (duplicate names, mesh kind vs body type) follow
during construction. A soft body may give a list for one material scalar,
which expands the file into one scene variant per value.

Trajectories record world vertex positions per body per step plus the solver
step reports; export writes one OBJ per body per frame (9 significant digits)
and an NDJSON metrics log, so a run is replayable from files alone.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import jsonschema
import numpy as np

from .bodies import AffineBody, GlobalState, Material, Shell, SoftBody
from .constraints import KinematicConstraint, default_kinematic_stiffness
from .geometry.mesh import (
    box_surface,
    box_tet,
    cloth_grid,
    cone_surface,
    fibonacci_sphere,
    load_obj,
    load_tetgen,
    save_obj,
)
from .robot.urdf import rpy_matrix
from .scene import Scene, make_scene
from .solver import SolverConfig, simulate

_NUM3 = {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3}
_POS = {"type": "number", "exclusiveMinimum": 0}

_MESH_SCHEMA = {
    "type": "object",
    "minProperties": 1,
    "maxProperties": 1,
    "properties": {
        "obj": {"type": "string"},
        "box": _NUM3,
        "sphere": {
            "type": "object",
            "required": ["vertices", "radius"],
            "additionalProperties": False,
            "properties": {
                "vertices": {"type": "integer", "minimum": 4},
                "radius": _POS,
            },
        },
        "cone": {
            "type": "object",
            "required": ["radius", "height"],
            "additionalProperties": False,
            "properties": {
                "radius": _POS,
                "height": _POS,
                "segments": {"type": "integer", "minimum": 3},
            },
        },
        "cloth": {
            "type": "object",
            "required": ["nx", "nz", "spacing"],
            "additionalProperties": False,
            "properties": {
                "nx": {"type": "integer", "minimum": 2},
                "nz": {"type": "integer", "minimum": 2},
                "spacing": _POS,
            },
        },
        "tet_box": {
            "type": "object",
            "required": ["size", "divisions"],
            "additionalProperties": False,
            "properties": {
                "size": {"oneOf": [_POS, _NUM3]},
                "divisions": {"type": "integer", "minimum": 1},
            },
        },
        "tetgen": {
            "type": "object",
            "required": ["node", "ele"],
            "additionalProperties": False,
            "properties": {"node": {"type": "string"}, "ele": {"type": "string"}},
        },
    },
    "additionalProperties": False,
}

_SCALAR_OR_LIST = {
    "oneOf": [
        {"type": "number"},
        {"type": "array", "items": {"type": "number"}, "minItems": 1},
    ]
}

_BODY_SCHEMA = {
    "type": "object",
    "required": ["name", "type", "mesh"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string", "minLength": 1},
        "type": {"enum": ["soft", "affine", "kinematic", "shell"]},
        "mesh": _MESH_SCHEMA,
        "material": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "model": {"type": "string"},
                "youngs_modulus": _SCALAR_OR_LIST,
                "poisson_ratio": _SCALAR_OR_LIST,
                "density": _POS,
            },
        },
        "shell": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "stretch_stiffness": _SCALAR_OR_LIST,
                "shear_stiffness": _POS,
                "bend_stiffness": {"type": "number", "minimum": 0},
                "density": _POS,
                "thickness": _POS,
            },
        },
        "density": _POS,
        "stiffness": _POS,
        "translate": _NUM3,
        "rotate_rpy": _NUM3,
        "target_translate": _NUM3,
        "target_rotate_rpy": _NUM3,
    },
}

SCENE_SCHEMA = {
    "type": "object",
    "required": ["name", "bodies"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string", "minLength": 1},
        "seed": {"type": "integer", "minimum": 0},
        "steps": {"type": "integer", "minimum": 1},
        "gravity": _NUM3,
        "ground_y": {"type": ["number", "null"]},
        "contact": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dhat": _POS,
                "kappa": _POS,
                "mu": {"type": "number", "minimum": 0},
                "eps_v": _POS,
            },
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "h": _POS,
                "newton_tol": _POS,
                "max_newton_iters": {"type": "integer", "minimum": 1},
                "max_line_search_halvings": {"type": "integer", "minimum": 1},
                "friction_fixed_point_iters": {"type": "integer", "minimum": 1},
                "al_max_outer": {"type": "integer", "minimum": 1},
            },
        },
        "gripper": {
            "type": "object",
            "required": ["urdf"],
            "additionalProperties": False,
            "properties": {"urdf": {"type": "string"}, "density": _POS},
        },
        "bodies": {"type": "array", "minItems": 1, "items": _BODY_SCHEMA},
    },
}


class SceneConfigError(ValueError):
    """Scene file rejected; the message carries the offending field path."""


def load_config(path) -> dict:
    """Parse and schema-validate one scene file; returns the raw config dict."""
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise SceneConfigError(f"{path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SceneConfigError(f"{path}: invalid JSON: {exc}") from exc
    validator = jsonschema.Draft202012Validator(SCENE_SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        raise SceneConfigError(f"{path}: {e.json_path}: {e.message}")
    names = [b["name"] for b in cfg["bodies"]]
    if len(set(names)) != len(names):
        dup = sorted({n for n in names if names.count(n) > 1})
        raise SceneConfigError(f"{path}: duplicate body names {dup}")
    return cfg


_VARIANT_FIELDS = (
    ("material", "youngs_modulus", "E"),
    ("material", "poisson_ratio", "nu"),
    ("shell", "stretch_stiffness", "S"),
)


def expand_variants(cfg: dict) -> list[dict]:
    """One config per value of the (single) list-valued stiffness field.

    A soft body's youngs_modulus / poisson_ratio or a shell's
    stretch_stiffness may be a list; the file then expands into one config
    per value, named with a suffix like -E1e+05 so exported directories and
    logs stay distinguishable. A config with no list passes through as a
    single-element list.
    """
    found = None
    for bi, body in enumerate(cfg["bodies"]):
        for section, fname, tag in _VARIANT_FIELDS:
            if isinstance(body.get(section, {}).get(fname), list):
                if found is not None:
                    raise SceneConfigError(
                        f"{cfg['name']}: more than one list-valued stiffness field"
                    )
                found = (bi, section, fname, tag, body[section][fname])
    if found is None:
        return [cfg]
    bi, section, fname, tag, values = found
    out = []
    for v in values:
        var = json.loads(json.dumps(cfg))  # deep copy, JSON types only
        var["bodies"][bi][section][fname] = v
        var["name"] = f"{cfg['name']}-{tag}{v:g}"
        out.append(var)
    return out


def _resolve(path: str, base_dir: str) -> str:
    return path if os.path.isabs(path) else os.path.join(base_dir, path)


def _build_mesh(spec: dict, base_dir: str, name: str):
    """Returns (kind, mesh) where kind is 'surface' or 'tet'."""
    key, val = next(iter(spec.items()))
    if key == "obj":
        path = _resolve(val, base_dir)
        if not os.path.exists(path):
            raise SceneConfigError(f"body '{name}': mesh file not found: {path}")
        return "surface", load_obj(path)
    if key == "box":
        return "surface", box_surface(val)
    if key == "sphere":
        return "surface", fibonacci_sphere(val["vertices"], val["radius"])
    if key == "cone":
        return "surface", cone_surface(
            val["radius"], val["height"], val.get("segments", 32)
        )
    if key == "cloth":
        return "surface", cloth_grid(val["nx"], val["nz"], val["spacing"])
    if key == "tet_box":
        return "tet", box_tet(val["size"], val["divisions"])
    if key == "tetgen":
        node = _resolve(val["node"], base_dir)
        ele = _resolve(val["ele"], base_dir)
        for p in (node, ele):
            if not os.path.exists(p):
                raise SceneConfigError(f"body '{name}': mesh file not found: {p}")
        return "tet", load_tetgen(node, ele)
    raise SceneConfigError(f"body '{name}': unknown mesh kind '{key}'")


def _placement(body_cfg: dict, prefix: str = ""):
    r = rpy_matrix(*body_cfg[f"{prefix}rotate_rpy"]) if f"{prefix}rotate_rpy" in body_cfg else None
    t = np.asarray(body_cfg[f"{prefix}translate"], dtype=np.float64) if f"{prefix}translate" in body_cfg else None
    return r, t


def _build_body(body_cfg: dict, base_dir: str):
    name = body_cfg["name"]
    btype = body_cfg["type"]
    kind, mesh = _build_mesh(body_cfg["mesh"], base_dir, name)
    rot, trans = _placement(body_cfg)

    if btype == "soft":
        if kind != "tet":
            raise SceneConfigError(f"body '{name}': soft bodies need a tet mesh")
        try:
            mat = Material(**body_cfg.get("material", {}))
        except ValueError as exc:
            raise SceneConfigError(f"body '{name}': {exc}") from exc
        body = SoftBody(mesh, mat, name=name)
        if rot is not None:
            body.x = body.x @ rot.T
        if trans is not None:
            body.x = body.x + trans
        return body

    if kind != "surface":
        raise SceneConfigError(f"body '{name}': {btype} bodies need a surface mesh")

    if btype == "shell":
        try:
            body = Shell(mesh, name=name, **body_cfg.get("shell", {}))
        except ValueError as exc:
            raise SceneConfigError(f"body '{name}': {exc}") from exc
        if rot is not None:
            body.x = body.x @ rot.T
        if trans is not None:
            body.x = body.x + trans
        return body

    body = AffineBody(
        mesh,
        density=body_cfg.get("density", 1000.0),
        stiffness=body_cfg.get("stiffness", 1e8),
        kinematic=(btype == "kinematic"),
        name=name,
    )
    body.set_pose(rot if rot is not None else np.eye(3), trans if trans is not None else np.zeros(3))
    if btype == "kinematic":
        trot, ttrans = _placement(body_cfg, prefix="target_")
        tq = body.q.copy()
        if trot is not None:
            tq[3:] = trot.ravel()
        if ttrans is not None:
            tq[:3] = ttrans
        body.target_q = tq
    return body


def solver_config(cfg: dict) -> SolverConfig:
    return SolverConfig(**cfg.get("solver", {}))


def build_scene(cfg: dict, base_dir: str = ".") -> Scene:
    """Construct a Scene from one (already expanded) validated config."""
    soft, shells, affine = [], [], []
    bodies = {}
    for bc in cfg["bodies"]:
        body = _build_body(bc, base_dir)
        bodies[bc["name"]] = body
        if isinstance(body, SoftBody):
            soft.append(body)
        elif isinstance(body, Shell):
            shells.append(body)
        else:
            affine.append(body)
    state = GlobalState(soft_bodies=soft, shells=shells, affine_bodies=affine)

    h = solver_config(cfg).h
    constraints = [
        KinematicConstraint(
            b,
            b.q.copy(),
            kappa=default_kinematic_stiffness(b.mass, h),
            mass_scale=b.mass,
        )
        for b in affine
        if b.kinematic
    ]

    contact = cfg.get("contact", {})
    kwargs = dict(
        dhat=contact.get("dhat"),
        kappa=contact.get("kappa"),
        mu=contact.get("mu", 0.4),
        eps_v=contact.get("eps_v", 1e-3),
        ground_y=cfg.get("ground_y"),
        constraints=constraints,
        name=cfg["name"],
        seed=cfg.get("seed", 0),
    )
    if "gravity" in cfg:
        kwargs["gravity"] = np.asarray(cfg["gravity"], dtype=np.float64)
    return make_scene(state, **kwargs)


def load_scenes(path) -> list[Scene]:
    """Load a scene file into one Scene per variant."""
    cfg = load_config(path)
    base = os.path.dirname(os.path.abspath(path))
    return [build_scene(c, base) for c in expand_variants(cfg)]


def load_scene(path) -> Scene:
    """Load a scene file that must describe exactly one variant."""
    cfg = load_config(path)
    variants = expand_variants(cfg)
    if len(variants) != 1:
        raise SceneConfigError(
            f"{path}: expands to {len(variants)} variants; expected a single scene"
        )
    base = os.path.dirname(os.path.abspath(path))
    return build_scene(variants[0], base)


# =============================================================================
# Trajectory recording and export
# =============================================================================


def _body_name(body, index: int) -> str:
    return body.name if body.name else f"body{index}"


def _surface_of(body):
    if isinstance(body, SoftBody):
        return body.mesh.surface.triangles
    return body.mesh.triangles


def _positions_of(body) -> np.ndarray:
    if isinstance(body, AffineBody):
        return body.world_vertices()
    return body.x.copy()


@dataclass
class Trajectory:
    """Per-frame world positions for every body plus step reports."""

    body_names: list[str]
    triangles: dict  # name -> (m, 3) surface triangles, fixed over time
    frames: list = field(default_factory=list)  # [{name: (n,3)}, ...]
    affine_states: list = field(default_factory=list)  # [{name: (12,)}, ...]
    reports: list = field(default_factory=list)  # StepReport dicts

    @classmethod
    def for_scene(cls, scene: Scene) -> "Trajectory":
        names, tris = [], {}
        for i, blk in enumerate(scene.state.blocks):
            name = _body_name(blk.body, i)
            names.append(name)
            tris[name] = np.asarray(_surface_of(blk.body), dtype=np.int64)
        return cls(names, tris)

    def record(self, scene: Scene, report) -> None:
        frame, aff = {}, {}
        for i, blk in enumerate(scene.state.blocks):
            name = _body_name(blk.body, i)
            frame[name] = _positions_of(blk.body)
            if isinstance(blk.body, AffineBody):
                aff[name] = blk.body.q.copy()
        self.frames.append(frame)
        self.affine_states.append(aff)
        self.reports.append(report.as_dict())

    @property
    def n_frames(self) -> int:
        return len(self.frames)


def simulate_recorded(scene: Scene, config: SolverConfig, n_steps: int) -> Trajectory:
    """Run n_steps and record every frame."""
    traj = Trajectory.for_scene(scene)
    simulate(scene, config, n_steps, callback=lambda i, sc, rep: traj.record(sc, rep))
    return traj


def export_trajectory(traj: Trajectory, out_dir) -> list[str]:
    """Write one OBJ per body per frame plus metrics.ndjson; returns paths."""
    if traj.n_frames == 0:
        raise ValueError("empty trajectory")
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for fi, frame in enumerate(traj.frames):
        for name in traj.body_names:
            path = os.path.join(out_dir, f"{name}_{fi:04d}.obj")
            save_obj(path, frame[name], traj.triangles[name])
            written.append(path)
    log_path = os.path.join(out_dir, "metrics.ndjson")
    with open(log_path, "w") as fh:
        for fi, rep in enumerate(traj.reports):
            aff = {k: v.tolist() for k, v in traj.affine_states[fi].items()}
            fh.write(json.dumps({"frame": fi, "affine": aff, **rep}) + "\n")
    written.append(log_path)
    return written


# =============================================================================
# Grasp record I/O (line-delimited JSON)
# =============================================================================

_GRASP_SCHEMA = {
    "type": "object",
    "required": ["object", "pose", "joints"],
    "properties": {
        "object": {"type": "string", "minLength": 1},
        "pose": {
            "type": "array",
            "minItems": 4,
            "maxItems": 4,
            "items": {
                "type": "array",
                "items": {"type": "number"},
                "minItems": 4,
                "maxItems": 4,
            },
        },
        "joints": {"type": "array", "items": {"type": "number"}},
        "label": {"type": "boolean"},
    },
}


def load_grasps(path) -> list[dict]:
    """Read line-delimited grasp records {object, pose 4x4, joints, label?}."""
    validator = jsonschema.Draft202012Validator(_GRASP_SCHEMA)
    out = []
    try:
        fh = open(path)
    except OSError as exc:
        raise SceneConfigError(f"{path}: {exc}") from exc
    with fh:
        for ln, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SceneConfigError(f"{path}:{ln}: invalid JSON: {exc}") from exc
            err = jsonschema.exceptions.best_match(validator.iter_errors(rec))
            if err is not None:
                raise SceneConfigError(f"{path}:{ln}: {err.json_path}: {err.message}")
            out.append(rec)
    if not out:
        raise SceneConfigError(f"{path}: no grasp records")
    return out


def save_grasps(path, records) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")
