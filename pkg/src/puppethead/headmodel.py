"""Simplified parametric head model.

A procedurally built template mesh (subdivided icosahedron shaped into a
head) carries linear shape/expression blendshapes and a 3-joint rig
(global -> neck -> jaw) deformed by linear blend skinning:

    vertices(beta, theta, psi) = skin(template + S.beta + E.psi, joints(beta), theta, W)

All arrays are float64 numpy; every function is pure.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import lpmv

N_EXPRESSION = 50
N_SHAPE_DEFAULT = 10
N_JOINTS = 3
JOINT_NAMES = ("global", "neck", "jaw")
JOINT_PARENTS = (-1, 0, 1)
N_LANDMARKS_DEFAULT = 16

# Overall head size in model units; camera scales in synthdata assume this.
HEAD_SCALE = 0.6
# Column norms of the orthonormalized blendshape bases after scaling.
SHAPE_BASIS_SCALE = 1.0 * HEAD_SCALE
EXPRESSION_BASIS_SCALE = 0.35 * HEAD_SCALE
_SH_MAX_DEGREE = 4

# Rest-pose joint centers (head occupies roughly [-0.5, 0.7] in y at scale 0.6;
# chin points toward +y, nose toward +z).
_JOINT_CENTERS = HEAD_SCALE * np.array(
    [[0.0, 0.05, 0.0], [0.0, 0.8, -0.25], [0.0, 0.35, 0.15]]
)
_JOINT_SPREAD = HEAD_SCALE * np.array([0.9, 0.35, 0.35])


def _as_f64(a, name, shape=None):
    arr = np.asarray(a, dtype=np.float64)
    if shape is not None and arr.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True)
class ShapeParams:
    """Blendshape coefficients for identity shape (length = shape-basis rank)."""

    beta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "beta", _as_f64(self.beta, "beta"))
        if self.beta.ndim != 1:
            raise ValueError("beta must be a 1-D vector")

    @classmethod
    def zeros(cls, n=N_SHAPE_DEFAULT):
        return cls(np.zeros(n))


@dataclass(frozen=True)
class ExpressionParams:
    """Expression coefficients, fixed width 50."""

    psi: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "psi", _as_f64(self.psi, "psi", shape=(N_EXPRESSION,))
        )

    @classmethod
    def zeros(cls):
        return cls(np.zeros(N_EXPRESSION))


@dataclass(frozen=True)
class PoseParams:
    """Axis-angle rotation per joint (global, neck, jaw), radians."""

    theta: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "theta", _as_f64(self.theta, "theta", shape=(N_JOINTS, 3))
        )
        mags = np.linalg.norm(self.theta, axis=1)
        if np.any(mags > np.pi + 1e-9):
            raise ValueError(f"per-joint rotation magnitude must be <= pi, got {mags}")

    @classmethod
    def zeros(cls):
        return cls(np.zeros((N_JOINTS, 3)))


@dataclass(frozen=True)
class Mesh:
    """Triangle mesh; ``normals`` (per-vertex, unit) is optional."""

    vertices: np.ndarray
    faces: np.ndarray
    normals: np.ndarray | None = None

    def __post_init__(self):
        v = _as_f64(self.vertices, "vertices")
        f = np.asarray(self.faces, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise ValueError("vertices must be (V, 3)")
        if f.ndim != 2 or f.shape[1] != 3:
            raise ValueError("faces must be (F, 3)")
        if f.min(initial=0) < 0 or f.max(initial=-1) >= len(v):
            raise ValueError("face indices out of range")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)
        if self.normals is not None:
            n = _as_f64(self.normals, "normals", shape=v.shape)
            norms = np.linalg.norm(n, axis=1)
            if np.any(np.abs(norms - 1.0) > 1e-6):
                raise ValueError("normals must be unit length within 1e-6")
            object.__setattr__(self, "normals", n)


@dataclass(frozen=True)
class HeadTemplate:
    """Template geometry plus blendshape bases and the 3-joint rig."""

    vertices: np.ndarray          # (V, 3)
    faces: np.ndarray             # (F, 3) int
    shape_basis: np.ndarray       # (V, 3, K_s)
    expression_basis: np.ndarray  # (V, 3, 50)
    joint_regressor: np.ndarray   # (J, V), rows sum to 1
    blendweights: np.ndarray      # (V, J), rows convex
    landmark_indices: tuple       # L vertex indices
    seed: int = 0

    def __post_init__(self):
        v = _as_f64(self.vertices, "vertices")
        nv = len(v)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", np.asarray(self.faces, dtype=np.int64))
        if self.faces.min() < 0 or self.faces.max() >= nv:
            raise ValueError("face indices out of range")
        object.__setattr__(self, "shape_basis", _as_f64(self.shape_basis, "shape_basis"))
        object.__setattr__(
            self,
            "expression_basis",
            _as_f64(self.expression_basis, "expression_basis", shape=(nv, 3, N_EXPRESSION)),
        )
        jr = _as_f64(self.joint_regressor, "joint_regressor", shape=(N_JOINTS, nv))
        bw = _as_f64(self.blendweights, "blendweights", shape=(nv, N_JOINTS))
        if np.any(np.abs(jr.sum(axis=1) - 1.0) > 1e-9) or np.any(jr < -1e-12):
            raise ValueError("joint_regressor rows must be convex combinations")
        if np.any(np.abs(bw.sum(axis=1) - 1.0) > 1e-9) or np.any(bw < -1e-12):
            raise ValueError("blendweight rows must be convex combinations")
        object.__setattr__(self, "joint_regressor", jr)
        object.__setattr__(self, "blendweights", bw)
        lm = tuple(int(i) for i in self.landmark_indices)
        if any(i < 0 or i >= nv for i in lm):
            raise ValueError("landmark index out of range")
        object.__setattr__(self, "landmark_indices", lm)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_shape(self):
        return self.shape_basis.shape[2]


# ---------------------------------------------------------------------------
# template construction


def _icosphere(subdivisions):
    """Unit icosphere; V = 10 * 4**s + 2."""
    phi = (1.0 + math.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
            [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
            [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
        ],
        dtype=np.float64,
    )
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = list(verts)
    for _ in range(subdivisions):
        midpoint = {}

        def mid(i, j):
            key = (min(i, j), max(i, j))
            if key not in midpoint:
                p = verts[i] + verts[j]
                verts.append(p / np.linalg.norm(p))
                midpoint[key] = len(verts) - 1
            return midpoint[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new_faces += [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)]
        faces = new_faces
    return np.array(verts), np.array(faces, dtype=np.int64)


def _head_surface(dirs):
    """Map unit sphere directions to head-shaped positions (chin +y, nose +z)."""
    pos = dirs * np.array([0.78, 1.0, 0.88])
    nose_dir = np.array([0.0, 0.35, 1.0])
    nose_dir /= np.linalg.norm(nose_dir)
    t = dirs @ nose_dir
    pos += (0.22 * np.exp((t - 1.0) / 0.02))[:, None] * dirs
    chin_dir = np.array([0.0, 0.97, 0.25])
    chin_dir /= np.linalg.norm(chin_dir)
    t = dirs @ chin_dir
    pos += (0.10 * np.exp((t - 1.0) / 0.05))[:, None] * dirs
    return HEAD_SCALE * pos


def _real_sph_harm_basis(dirs, max_degree=_SH_MAX_DEGREE):
    """Real spherical harmonics up to ``max_degree`` evaluated at unit dirs."""
    x, y, z = dirs[:, 0], dirs[:, 1], dirs[:, 2]
    phi = np.arctan2(y, x)
    cols = []
    for ell in range(max_degree + 1):
        for m in range(-ell, ell + 1):
            am = abs(m)
            norm = math.sqrt(
                (2 * ell + 1)
                / (4 * math.pi)
                * math.factorial(ell - am)
                / math.factorial(ell + am)
            )
            leg = lpmv(am, ell, z)
            if m == 0:
                cols.append(norm * leg)
            elif m > 0:
                cols.append(math.sqrt(2) * norm * leg * np.cos(am * phi))
            else:
                cols.append(math.sqrt(2) * norm * leg * np.sin(am * phi))
    return np.stack(cols, axis=1)


def _smooth_orthonormal_bases(dirs, n_shape, rng):
    """Random smooth displacement fields, jointly orthonormalized.

    Columns are low-frequency spherical-harmonic combinations per axis; QR
    makes shape and expression subspaces mutually orthogonal, which keeps
    parameter fitting well conditioned.
    """
    sh = _real_sph_harm_basis(dirs)
    n_total = n_shape + N_EXPRESSION
    coeff = rng.standard_normal((sh.shape[1], 3, n_total))
    raw = np.einsum("vp,pak->vak", sh, coeff).reshape(len(dirs) * 3, n_total)
    q, r = np.linalg.qr(raw)
    q = q * np.sign(np.diag(r))
    fields = q.reshape(len(dirs), 3, n_total)
    shape_basis = fields[:, :, :n_shape] * SHAPE_BASIS_SCALE
    expr_basis = fields[:, :, n_shape:] * EXPRESSION_BASIS_SCALE
    return shape_basis, expr_basis


def _smoothstep(x, edge0, edge1):
    t = np.clip((x - edge0) / (edge1 - edge0), 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def _rig_weights(vertices):
    """Blendweights with compact support: jaw only in the lower-front region."""
    y = vertices[:, 1] / HEAD_SCALE
    z = vertices[:, 2] / HEAD_SCALE
    jaw_score = _smoothstep(y, 0.25, 0.62) * _smoothstep(z, -0.12, 0.35)
    neck_score = _smoothstep(y, 0.55, 0.95)
    w_jaw = 0.9 * jaw_score
    w_neck = (1.0 - w_jaw) * 0.85 * neck_score
    w_global = 1.0 - w_jaw - w_neck
    return np.stack([w_global, w_neck, w_jaw], axis=1)


def _joint_regressor(vertices):
    rows = []
    for center, spread in zip(_JOINT_CENTERS, _JOINT_SPREAD):
        d2 = np.sum((vertices - center) ** 2, axis=1)
        w = np.exp(-d2 / (2.0 * spread**2))
        rows.append(w / w.sum())
    return np.stack(rows, axis=0)


def _pick_landmarks(vertices, count):
    """Farthest-point sampling over the front of the face (deterministic)."""
    front = np.where(vertices[:, 2] > 0.25 * HEAD_SCALE)[0]
    nose_tip = front[np.argmax(vertices[front, 2])]
    chosen = [int(nose_tip)]
    dist = np.linalg.norm(vertices[front] - vertices[nose_tip], axis=1)
    while len(chosen) < count:
        nxt = front[np.argmax(dist)]
        chosen.append(int(nxt))
        dist = np.minimum(dist, np.linalg.norm(vertices[front] - vertices[nxt], axis=1))
    return tuple(chosen)


def build_template(seed: int, v_target: int = 642) -> HeadTemplate:
    """Build the procedural head template; deterministic for a given seed.

    ``v_target`` picks the smallest icosphere subdivision with at least that
    many vertices (42, 162, 642, 2562, ...). Must be >= 42.
    """
    if v_target < 42:
        raise ValueError(f"v_target must be >= 42, got {v_target}")
    subdivisions = 1
    while 10 * 4**subdivisions + 2 < v_target:
        subdivisions += 1
    dirs, faces = _icosphere(subdivisions)
    vertices = _head_surface(dirs)

    # enforce outward winding so screen-space orientation culling is valid
    v0, v1, v2 = (vertices[faces[:, k]] for k in range(3))
    outward = np.einsum(
        "fi,fi->f", np.cross(v1 - v0, v2 - v0), (v0 + v1 + v2) / 3.0
    )
    flip = outward < 0
    faces[flip] = faces[flip][:, [0, 2, 1]]

    rng = np.random.default_rng(seed)
    shape_basis, expr_basis = _smooth_orthonormal_bases(dirs, N_SHAPE_DEFAULT, rng)
    return HeadTemplate(
        vertices=vertices,
        faces=faces,
        shape_basis=shape_basis,
        expression_basis=expr_basis,
        joint_regressor=_joint_regressor(vertices),
        blendweights=_rig_weights(vertices),
        landmark_indices=_pick_landmarks(vertices, N_LANDMARKS_DEFAULT),
        seed=seed,
    )


# ---------------------------------------------------------------------------
# deformation


def blend_shapes(template: HeadTemplate, beta: ShapeParams, psi: ExpressionParams) -> Mesh:
    """Apply linear blendshapes: template + S.beta + E.psi."""
    if len(beta.beta) != template.n_shape:
        raise ValueError(
            f"beta has length {len(beta.beta)}, template expects {template.n_shape}"
        )
    verts = (
        template.vertices
        + template.shape_basis @ beta.beta
        + template.expression_basis @ psi.psi
    )
    return Mesh(vertices=verts, faces=template.faces)


def compute_joints(template: HeadTemplate, beta: ShapeParams) -> np.ndarray:
    """Joint centers of the shaped (expression-free) mesh, (J, 3)."""
    shaped = blend_shapes(template, beta, ExpressionParams.zeros())
    return template.joint_regressor @ shaped.vertices


def rodrigues(axis_angle) -> np.ndarray:
    """3x3 rotation matrix from an axis-angle vector."""
    v = np.asarray(axis_angle, dtype=np.float64)
    angle = np.linalg.norm(v)
    if angle < 1e-12:
        return np.eye(3)
    axis = v / angle
    kx, ky, kz = axis
    k = np.array([[0.0, -kz, ky], [kz, 0.0, -kx], [-ky, kx, 0.0]])
    return np.eye(3) + math.sin(angle) * k + (1.0 - math.cos(angle)) * (k @ k)


def _rigid(rot, trans):
    m = np.eye(4)
    m[:3, :3] = rot
    m[:3, 3] = trans
    return m


def joint_transforms(theta: PoseParams, joints: np.ndarray) -> np.ndarray:
    """Per-joint 4x4 transforms acting on rest-space points, chained
    global -> neck -> jaw."""
    world = []
    for j, parent in enumerate(JOINT_PARENTS):
        rot = rodrigues(theta.theta[j])
        local_t = joints[j] - (joints[parent] if parent >= 0 else 0.0)
        local = _rigid(rot, local_t)
        world.append(local if parent < 0 else world[parent] @ local)
    return np.stack(
        [world[j] @ _rigid(np.eye(3), -joints[j]) for j in range(N_JOINTS)]
    )


def skin(shaped: Mesh, theta: PoseParams, joints, blendweights) -> Mesh:
    """Linear blend skinning of an already-shaped mesh."""
    joints = _as_f64(joints, "joints", shape=(N_JOINTS, 3))
    weights = _as_f64(blendweights, "blendweights", shape=(len(shaped.vertices), N_JOINTS))
    transforms = joint_transforms(theta, joints)
    per_vertex = np.einsum("vj,jab->vab", weights, transforms)
    verts = (
        np.einsum("vab,vb->va", per_vertex[:, :3, :3], shaped.vertices)
        + per_vertex[:, :3, 3]
    )
    return Mesh(vertices=verts, faces=shaped.faces)


def vertex_normals(vertices, faces) -> np.ndarray:
    """Area-weighted average of face normals, normalized per vertex."""
    v0, v1, v2 = (vertices[faces[:, k]] for k in range(3))
    fn = np.cross(v1 - v0, v2 - v0)  # magnitude = 2 * area
    out = np.zeros_like(vertices)
    for k in range(3):
        np.add.at(out, faces[:, k], fn)
    norms = np.linalg.norm(out, axis=1, keepdims=True)
    norms[norms < 1e-20] = 1.0
    return out / norms


def build_head(
    template: HeadTemplate,
    beta: ShapeParams,
    theta: PoseParams,
    psi: ExpressionParams,
) -> Mesh:
    """Full deformation: blendshapes, joints, skinning, vertex normals."""
    shaped = blend_shapes(template, beta, psi)
    joints = compute_joints(template, beta)
    posed = skin(shaped, theta, joints, template.blendweights)
    normals = vertex_normals(posed.vertices, posed.faces)
    return Mesh(vertices=posed.vertices, faces=posed.faces, normals=normals)


def landmark_positions(template: HeadTemplate, mesh: Mesh) -> np.ndarray:
    """3D positions of the template's landmark vertices on a deformed mesh."""
    return mesh.vertices[list(template.landmark_indices)]


# ---------------------------------------------------------------------------
# serialization (OBJ subset + JSON sidecar; field order documented in README)


def save_template(template: HeadTemplate, obj_path, sidecar_path) -> None:
    """Write geometry as an OBJ subset and bases/weights as JSON."""
    with open(obj_path, "w") as fh:
        fh.write("# puppethead template geometry\n")
        for v in template.vertices:
            fh.write(f"v {v[0]!r} {v[1]!r} {v[2]!r}\n")
        for f in template.faces:
            fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")
    sidecar = {
        "format_version": 1,
        "seed": template.seed,
        "n_vertices": template.n_vertices,
        "n_shape": template.n_shape,
        "n_expression": N_EXPRESSION,
        "shape_basis": template.shape_basis.tolist(),
        "expression_basis": template.expression_basis.tolist(),
        "joint_regressor": template.joint_regressor.tolist(),
        "blendweights": template.blendweights.tolist(),
        "landmark_indices": list(template.landmark_indices),
    }
    with open(sidecar_path, "w") as fh:
        json.dump(sidecar, fh)


def load_template(obj_path, sidecar_path) -> HeadTemplate:
    verts, faces = [], []
    with open(obj_path) as fh:
        for line in fh:
            parts = line.split()
            if not parts or parts[0] == "#":
                continue
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                faces.append([int(x) - 1 for x in parts[1:4]])
    with open(sidecar_path) as fh:
        side = json.load(fh)
    if side.get("format_version") != 1:
        raise ValueError(f"unsupported template format: {side.get('format_version')}")
    return HeadTemplate(
        vertices=np.array(verts),
        faces=np.array(faces, dtype=np.int64),
        shape_basis=np.array(side["shape_basis"]),
        expression_basis=np.array(side["expression_basis"]),
        joint_regressor=np.array(side["joint_regressor"]),
        blendweights=np.array(side["blendweights"]),
        landmark_indices=tuple(side["landmark_indices"]),
        seed=side["seed"],
    )
