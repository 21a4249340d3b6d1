"""Weak-perspective projection and z-buffered software rasterization.

Conventions:
  - camera looks down -z; depth = -v_z, smaller depth is nearer
  - x_pix = (s*v_x + tx + 1) * W/2, y_pix = (s*v_y + ty + 1) * H/2
  - pixel centers at (col + 0.5, row + 0.5); z-fights resolved in favor of
    the lower face index (determinism over realism)
  - normal snapshots store camera-frame normals, no shading
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image

from .errors import EmptyForegroundError
from .headmodel import Mesh

AMBIENT = 0.2
DEFAULT_SIZE = 64


@dataclass(frozen=True)
class Camera:
    """Weak-perspective camera: scale plus translation in normalized coords."""

    s: float
    tx: float = 0.0
    ty: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.s) and self.s > 0):
            raise ValueError(f"camera scale must be positive, got {self.s}")
        if not (np.isfinite(self.tx) and np.isfinite(self.ty)):
            raise ValueError("camera translation must be finite")


@dataclass(frozen=True)
class NormalSnapshot:
    """Rendered surface-normal map: unit normals on the foreground, zeros off."""

    image: np.ndarray  # (H, W, 3) in [-1, 1]
    mask: np.ndarray   # (H, W) bool

    def __post_init__(self):
        img = np.asarray(self.image, dtype=np.float64)
        mask = np.asarray(self.mask, dtype=bool)
        if img.ndim != 3 or img.shape[2] != 3 or mask.shape != img.shape[:2]:
            raise ValueError("snapshot image must be (H, W, 3) with matching mask")
        object.__setattr__(self, "image", img)
        object.__setattr__(self, "mask", mask)


@dataclass(frozen=True)
class BBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(
                f"degenerate bbox ({self.x_min}, {self.y_min}, {self.x_max}, {self.y_max})"
            )

    @property
    def width(self):
        return self.x_max - self.x_min

    @property
    def height(self):
        return self.y_max - self.y_min

    @property
    def area(self):
        return self.width * self.height


def project(mesh: Mesh, camera: Camera, H: int, W: int) -> np.ndarray:
    """Per-vertex (x_pix, y_pix, depth), shape (V, 3)."""
    if H < 16 or W < 16:
        raise ValueError(f"image size must be >= 16, got {H}x{W}")
    v = mesh.vertices
    x = (camera.s * v[:, 0] + camera.tx + 1.0) * (W / 2.0)
    y = (camera.s * v[:, 1] + camera.ty + 1.0) * (H / 2.0)
    return np.stack([x, y, -v[:, 2]], axis=1)


def _rasterize(mesh: Mesh, camera: Camera, H: int, W: int, attributes: dict):
    """Z-buffer rasterization core, interpolating per-vertex attributes.

    ``attributes`` maps name -> (V, k) array. Faces are culled when their
    projected winding faces away from the camera; outward-wound meshes
    render their camera side. Returns (interpolated dict, mask).
    """
    pts = project(mesh, camera, H, W)
    faces = mesh.faces
    zbuf = np.full((H, W), np.inf)
    mask = np.zeros((H, W), dtype=bool)
    out = {k: np.zeros((H, W, a.shape[1])) for k, a in attributes.items()}

    tri = pts[faces]  # (F, 3, 3)
    x0, y0 = tri[:, 0, 0], tri[:, 0, 1]
    x1, y1 = tri[:, 1, 0], tri[:, 1, 1]
    x2, y2 = tri[:, 2, 0], tri[:, 2, 1]
    area2 = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)

    for f in range(len(faces)):
        a2 = area2[f]
        if a2 <= 1e-12:  # backfacing or degenerate
            continue
        xs = tri[f, :, 0]
        ys = tri[f, :, 1]
        cx0 = max(0, int(np.ceil(xs.min() - 0.5)))
        cx1 = min(W - 1, int(np.floor(xs.max() - 0.5)))
        cy0 = max(0, int(np.ceil(ys.min() - 0.5)))
        cy1 = min(H - 1, int(np.floor(ys.max() - 0.5)))
        if cx0 > cx1 or cy0 > cy1:
            continue
        px = np.arange(cx0, cx1 + 1) + 0.5
        py = np.arange(cy0, cy1 + 1) + 0.5
        gx, gy = np.meshgrid(px, py)
        w0 = (x2[f] - x1[f]) * (gy - y1[f]) - (y2[f] - y1[f]) * (gx - x1[f])
        w1 = (x0[f] - x2[f]) * (gy - y2[f]) - (y0[f] - y2[f]) * (gx - x2[f])
        w2 = (x1[f] - x0[f]) * (gy - y0[f]) - (y1[f] - y0[f]) * (gx - x0[f])
        inside = (w0 >= 0) & (w1 >= 0) & (w2 >= 0)
        if not inside.any():
            continue
        l0, l1, l2 = w0 / a2, w1 / a2, w2 / a2
        depth = l0 * tri[f, 0, 2] + l1 * tri[f, 1, 2] + l2 * tri[f, 2, 2]
        win = zbuf[cy0 : cy1 + 1, cx0 : cx1 + 1]
        update = inside & (depth < win)
        if not update.any():
            continue
        win[update] = depth[update]
        mask[cy0 : cy1 + 1, cx0 : cx1 + 1][update] = True
        vi = faces[f]
        for name, vals in attributes.items():
            interp = (
                l0[..., None] * vals[vi[0]]
                + l1[..., None] * vals[vi[1]]
                + l2[..., None] * vals[vi[2]]
            )
            out[name][cy0 : cy1 + 1, cx0 : cx1 + 1][update] = interp[update]

    if not mask.any():
        raise EmptyForegroundError("mesh produced no foreground pixels")
    return out, mask


def rasterize_normals(mesh: Mesh, camera: Camera, H: int, W: int) -> NormalSnapshot:
    """Render interpolated (renormalized) camera-frame normals; no shading."""
    if mesh.normals is None:
        raise ValueError("mesh must carry unit vertex normals")
    out, mask = _rasterize(mesh, camera, H, W, {"normal": mesh.normals})
    n = out["normal"]
    norms = np.linalg.norm(n, axis=2, keepdims=True)
    safe = np.where(norms > 1e-12, norms, 1.0)
    n = np.where(mask[..., None], n / safe, 0.0)
    return NormalSnapshot(image=n, mask=mask)


def shade_rgb(
    mesh: Mesh,
    camera: Camera,
    vertex_colors,
    light_dir,
    H: int,
    W: int,
    background=(0.0, 0.0, 0.0),
) -> np.ndarray:
    """Lambertian shading (max(0, n.l) * color + ambient) over a solid background."""
    if mesh.normals is None:
        raise ValueError("mesh must carry unit vertex normals")
    light = np.asarray(light_dir, dtype=np.float64)
    if abs(np.linalg.norm(light) - 1.0) > 1e-6:
        raise ValueError("light_dir must be unit length")
    colors = np.asarray(vertex_colors, dtype=np.float64)
    if colors.shape != mesh.vertices.shape:
        raise ValueError("vertex_colors must be (V, 3)")
    out, mask = _rasterize(
        mesh, camera, H, W, {"normal": mesh.normals, "color": colors}
    )
    n = out["normal"]
    norms = np.linalg.norm(n, axis=2, keepdims=True)
    n = n / np.where(norms > 1e-12, norms, 1.0)
    diffuse = np.clip(np.einsum("hwc,c->hw", n, light), 0.0, None)
    shaded = np.clip(out["color"] * diffuse[..., None] + AMBIENT, 0.0, 1.0)
    bg = np.clip(np.asarray(background, dtype=np.float64), 0.0, 1.0)
    return np.where(mask[..., None], shaded, bg)


def face_bbox(mesh: Mesh, camera: Camera, H: int, W: int) -> BBox:
    """Tight box over the mesh vertices that project inside the image."""
    pts = project(mesh, camera, H, W)
    inside = (
        (pts[:, 0] >= 0) & (pts[:, 0] <= W) & (pts[:, 1] >= 0) & (pts[:, 1] <= H)
    )
    if not inside.any():
        raise EmptyForegroundError("no vertex projects inside the image")
    sel = pts[inside]
    x_min, y_min = sel[:, 0].min(), sel[:, 1].min()
    x_max, y_max = sel[:, 0].max(), sel[:, 1].max()
    if not (x_min < x_max and y_min < y_max):
        raise EmptyForegroundError("projected foreground is degenerate")
    return BBox(x_min=x_min, y_min=y_min, x_max=x_max, y_max=y_max)


# ---------------------------------------------------------------------------
# PNG I/O: normals mapped [-1, 1] -> [0, 255], mask in the alpha channel


def snapshot_to_png(snapshot: NormalSnapshot, path) -> None:
    rgb = np.round((snapshot.image * 0.5 + 0.5) * 255.0).astype(np.uint8)
    alpha = np.where(snapshot.mask, 255, 0).astype(np.uint8)
    Image.fromarray(np.dstack([rgb, alpha]), mode="RGBA").save(path)


def snapshot_from_png(path) -> NormalSnapshot:
    arr = np.asarray(Image.open(path).convert("RGBA"))
    mask = arr[..., 3] > 0
    n = arr[..., :3].astype(np.float64) / 255.0 * 2.0 - 1.0
    n[~mask] = 0.0
    return NormalSnapshot(image=n, mask=mask)


def snapshot_to_unit(arr_rgba: np.ndarray) -> np.ndarray:
    """uint8 RGBA snapshot -> float32 (3, H, W) in [0, 1], background zeroed."""
    mask = arr_rgba[..., 3:4] > 0
    rgb = arr_rgba[..., :3].astype(np.float32) / 255.0
    return np.transpose(np.where(mask, rgb, 0.0), (2, 0, 1)).astype(np.float32)


def rgb_to_png(image: np.ndarray, path) -> None:
    """Float image in [0, 1] (or uint8) -> PNG."""
    if image.dtype != np.uint8:
        image = np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(image, mode="RGB").save(path)


def rgb_from_png(path) -> np.ndarray:
    return np.asarray(Image.open(path).convert("RGB"))
