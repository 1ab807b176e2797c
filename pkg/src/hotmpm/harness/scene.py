"""Scene files: JSON key-value trees validated into SceneConfig."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..constitutive import Material, Plasticity, PlasticityKind
from ..grid_kernels import KernelKind
from ..objective import Collider, Motion
from ..solvers import SolverConfig, SolverKind
from ..transfer import Particles, lattice_samples


class SceneError(ValueError):
    pass


@dataclass
class SceneObject:
    shape: str
    material: str
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None
    center: np.ndarray | None = None
    radius: float = 0.0
    velocity: np.ndarray | None = None
    random_diagonal_F: tuple[float, float] | None = None


@dataclass
class SceneConfig:
    dim: int
    dx: float
    gravity: np.ndarray
    fps: float
    frames: int
    domain_lo: np.ndarray
    domain_hi: np.ndarray
    solver: SolverConfig
    materials: dict[str, Material]
    objects: list[SceneObject]
    colliders: list[Collider] = field(default_factory=list)
    seed: int = 0
    per_axis: int = 2
    jitter: float = 0.5
    name: str = "scene"

    @property
    def material_names(self) -> list[str]:
        return list(self.materials)

    @property
    def material_list(self) -> list[Material]:
        return list(self.materials.values())

    def sample_particles(self) -> Particles:
        rng = np.random.default_rng(self.seed)
        names = self.material_names
        parts = []
        cell_volume = self.dx ** self.dim
        ppc = self.per_axis ** self.dim
        for obj in self.objects:
            mat = self.materials[obj.material]
            if obj.shape == "box":
                lo, hi = obj.lo, obj.hi
            else:
                lo, hi = obj.center - obj.radius, obj.center + obj.radius
            x = lattice_samples(lo, hi, self.dx, self.per_axis, self.jitter, rng)
            if obj.shape == "sphere":
                x = x[np.sum((x - obj.center) ** 2, axis=1) <= obj.radius ** 2]
            vol = cell_volume / ppc
            p = Particles.create(x, mass=mat.density * vol, volume=vol,
                                 material=names.index(obj.material), v=obj.velocity)
            if obj.random_diagonal_F is not None:
                a, b = obj.random_diagonal_F
                diag = rng.uniform(a, b, size=(p.count, self.dim))
                p.F = np.einsum("pa,ab->pab", diag, np.eye(self.dim))
            parts.append(p)
        if not parts:
            d = self.dim
            return Particles.create(np.zeros((0, d)), mass=1.0, volume=1.0)
        return Particles.concatenate(parts)


# -- validation ---------------------------------------------------------------


class _Reader:
    def __init__(self, node, path):
        if not isinstance(node, dict):
            raise SceneError(f"{path or '<root>'}: expected an object")
        self.node = node
        self.path = path
        self.used = set()

    def _p(self, key):
        return f"{self.path}.{key}" if self.path else key

    def get(self, key, default=..., kind=None):
        self.used.add(key)
        if key not in self.node:
            if default is ...:
                raise SceneError(f"missing required key '{self._p(key)}'")
            return default
        v = self.node[key]
        if kind is not None and v is not None and not isinstance(v, kind):
            raise SceneError(f"{self._p(key)}: expected {getattr(kind, '__name__', kind)}")
        return v

    def vec(self, key, dim, default=...):
        v = self.get(key, default)
        if v is None:
            return None
        arr = np.asarray(v, dtype=float)
        if arr.shape != (dim,) or not np.all(np.isfinite(arr)):
            raise SceneError(f"{self._p(key)}: expected {dim} finite numbers")
        return arr

    def num(self, key, default=..., positive=False):
        v = self.get(key, default)
        if v is None:
            return None
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise SceneError(f"{self._p(key)}: expected a number")
        if positive and not v > 0:
            raise SceneError(f"{self._p(key)}: must be positive")
        return v

    def child(self, key, default=...):
        v = self.get(key, default)
        if v is None:
            return None
        return _Reader(v, self._p(key))

    def done(self):
        extra = sorted(set(self.node) - self.used)
        if extra:
            raise SceneError(f"unknown key '{self._p(extra[0])}'")


def _material(r: _Reader) -> Material:
    pl = r.child("plasticity", None)
    plast = Plasticity()
    if pl is not None:
        kind = pl.get("kind", kind=str)
        try:
            kind = PlasticityKind(kind)
        except ValueError:
            raise SceneError(f"{pl._p('kind')}: unknown plasticity '{kind}'") from None
        plast_kw = {}
        if kind is PlasticityKind.VON_MISES:
            plast_kw["yield_stress"] = pl.num("yield_stress", positive=True)
        elif kind is PlasticityKind.SNOW_CLAMP:
            plast_kw["lo"] = pl.num("lo")
            plast_kw["hi"] = pl.num("hi")
        pl.done()
        try:
            plast = Plasticity(kind, **plast_kw)
        except ValueError as e:
            raise SceneError(f"{pl.path}: {e}") from None
    try:
        mat = Material(density=r.num("density"), youngs=r.num("youngs"), poisson=r.num("poisson"),
                       plasticity=plast)
    except ValueError as e:
        raise SceneError(f"{r.path}: {e}") from None
    r.done()
    return mat


def _motion(r: _Reader | None, dim: int, default_pivot) -> Motion:
    if r is None:
        return Motion()
    kind = r.get("type", "static", kind=str)
    if kind == "static":
        m = Motion()
    elif kind == "linear":
        m = Motion(velocity=r.vec("velocity", dim))
    elif kind == "rotation":
        omega = r.num("omega") if dim == 2 else r.vec("omega", 3)
        pivot = r.vec("pivot", dim, None)
        m = Motion(omega=omega, pivot=default_pivot if pivot is None else pivot,
                   velocity=r.vec("velocity", dim, None))
    else:
        raise SceneError(f"{r._p('type')}: unknown motion '{kind}'")
    r.done()
    return m


def _collider(r: _Reader, dim: int) -> Collider:
    shape = r.get("shape", kind=str)
    if shape == "half_space":
        c = Collider("half_space", center=r.vec("point", dim), normal=r.vec("normal", dim))
        if np.linalg.norm(c.normal) == 0:
            raise SceneError(f"{r._p('normal')}: must be non-zero")
        c.normal = c.normal / np.linalg.norm(c.normal)
    elif shape in ("sphere", "cylinder"):
        c = Collider(shape, center=r.vec("center", dim), radius=r.num("radius", positive=True))
        if shape == "cylinder" and dim == 3:
            c.axis = r.vec("axis", 3)
    else:
        raise SceneError(f"{r._p('shape')}: unknown collider shape '{shape}'")
    c.motion = _motion(r.child("motion", None), dim, c.center)
    r.done()
    return c


def _object(r: _Reader, dim: int, materials) -> SceneObject:
    shape = r.get("shape", kind=str)
    mat = r.get("material", kind=str)
    if mat not in materials:
        raise SceneError(f"{r._p('material')}: unknown material id '{mat}'")
    obj = SceneObject(shape=shape, material=mat, velocity=r.vec("velocity", dim, None))
    if shape == "box":
        obj.lo, obj.hi = r.vec("lo", dim), r.vec("hi", dim)
        if np.any(obj.hi <= obj.lo):
            raise SceneError(f"{r.path}: box needs hi > lo")
    elif shape == "sphere":
        obj.center, obj.radius = r.vec("center", dim), r.num("radius", positive=True)
    else:
        raise SceneError(f"{r._p('shape')}: unknown object shape '{shape}'")
    rd = r.get("random_diagonal_F", None, kind=list)
    if rd is not None:
        if len(rd) != 2 or not 0 < rd[0] <= rd[1]:
            raise SceneError(f"{r._p('random_diagonal_F')}: expected [lo, hi] with 0 < lo <= hi")
        obj.random_diagonal_F = (float(rd[0]), float(rd[1]))
    r.done()
    return obj


def scene_from_dict(doc: dict) -> SceneConfig:
    r = _Reader(doc, "")
    dim = r.get("dim", 2, kind=int)
    if dim not in (2, 3):
        raise SceneError("dim: must be 2 or 3")
    dx = r.num("dx", positive=True)
    dom = r.child("domain")
    lo, hi = dom.vec("lo", dim), dom.vec("hi", dim)
    dom.done()
    if np.any(hi <= lo):
        raise SceneError("domain: hi must exceed lo")

    sr = r.child("solver", {})
    try:
        kind = SolverKind(sr.get("kind", "hot", kind=str))
    except ValueError:
        raise SceneError(f"solver.kind: expected one of {', '.join(SolverKind.names())}") from None
    try:
        solver = SolverConfig(eps=sr.num("eps", 1e-7, positive=True), tau=sr.num("tau", None),
                              levels=sr.get("levels", 3, kind=int), window=sr.get("window", 8, kind=int),
                              max_outer=sr.get("max_outer", 1000, kind=int),
                              cg_cap=sr.get("cg_cap", 10_000, kind=int), solver=kind,
                              embedding=KernelKind.parse(sr.get("embedding", "linear", kind=str)))
    except ValueError as e:
        raise SceneError(f"solver: {e}") from None
    sr.done()

    mr = r.get("materials", kind=dict)
    if not mr:
        raise SceneError("materials: at least one material is required")
    materials = {name: _material(_Reader(m, f"materials.{name}")) for name, m in mr.items()}
    orr = r.get("objects", kind=list)
    objects = [_object(_Reader(o, f"objects[{i}]"), dim, materials) for i, o in enumerate(orr)]
    for i, o in enumerate(objects):
        olo = o.lo if o.shape == "box" else o.center - o.radius
        ohi = o.hi if o.shape == "box" else o.center + o.radius
        if np.any(olo < lo) or np.any(ohi > hi):
            raise SceneError(f"objects[{i}]: shape leaves the domain box")
    colliders = [_collider(_Reader(c, f"colliders[{i}]"), dim)
                 for i, c in enumerate(r.get("colliders", [], kind=list))]
    sampling = r.child("sampling", {})
    per_axis = sampling.get("per_axis", 2, kind=int)
    jitter = sampling.num("jitter", 0.5)
    sampling.done()
    gravity = r.vec("gravity", dim, None)
    cfg = SceneConfig(
        dim=dim, dx=float(dx), gravity=np.zeros(dim) if gravity is None else gravity,
        fps=float(r.num("fps", 24, positive=True)), frames=r.get("frames", 1, kind=int),
        domain_lo=lo, domain_hi=hi, solver=solver, materials=materials, objects=objects,
        colliders=colliders, seed=r.get("seed", 0, kind=int), per_axis=per_axis, jitter=float(jitter),
        name=r.get("name", "scene", kind=str),
    )
    r.done()
    if cfg.frames < 0:
        raise SceneError("frames: must be non-negative")
    return cfg


def parse_scene(text: str) -> SceneConfig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise SceneError(f"invalid scene document: {e}") from None
    return scene_from_dict(doc)


def load_scene(path) -> SceneConfig:
    with open(path) as fh:
        return parse_scene(fh.read())
