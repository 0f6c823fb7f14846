"""Linear-elastic 2D pin-jointed truss solver for the bridge example.

The system response is the mid-span deflection of a 23-bar simply
supported bridge truss (24 m span, 2 m height): a 7-node lower chord, a
6-node upper chord carrying the six applied loads, horizontal chords with
one material/section pair and diagonals with another.

Inputs are 10-vectors ordered [P1..P6, A1, A2, E1, E2] (N, m^2, Pa):
loads P1..P6 on the load nodes, chord area/modulus (A1, E1), diagonal
area/modulus (A2, E2).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

import numpy as np

N_LOADS = 6
IDX_A1, IDX_A2, IDX_E1, IDX_E2 = 6, 7, 8, 9
DIM = 10

SECTION_KINDS = ("horizontal", "diagonal")


class TrussError(Exception):
    pass


@dataclass(frozen=True)
class TrussGeometry:
    nodes: np.ndarray  # (n_nodes, 2) coordinates, m
    elements: np.ndarray  # (n_elems, 2) node indices
    sections: tuple  # per element: "horizontal" | "diagonal"
    supports: tuple  # (node, fix_x, fix_y) triples
    load_nodes: tuple  # 6 node indices for P1..P6
    midspan_node: int

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        elements = np.asarray(self.elements, dtype=int)
        nodes.setflags(write=False)
        elements.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "elements", elements)
        object.__setattr__(self, "sections", tuple(self.sections))
        object.__setattr__(self, "supports", tuple(tuple(s) for s in self.supports))
        object.__setattr__(self, "load_nodes", tuple(int(i) for i in self.load_nodes))
        if len(self.sections) != elements.shape[0]:
            raise TrussError("one section class per element is required")
        for s in self.sections:
            if s not in SECTION_KINDS:
                raise TrussError(f"unknown section class: {s!r}")
        if len(self.load_nodes) != N_LOADS:
            raise TrussError(f"exactly {N_LOADS} load nodes are required")

    @property
    def n_dof(self) -> int:
        return 2 * self.nodes.shape[0]

    def fixed_dofs(self) -> np.ndarray:
        fixed = []
        for node, fx, fy in self.supports:
            if fx:
                fixed.append(2 * node)
            if fy:
                fixed.append(2 * node + 1)
        return np.array(sorted(set(fixed)), dtype=int)

    def free_dofs(self) -> np.ndarray:
        return np.setdiff1d(np.arange(self.n_dof), self.fixed_dofs())

    def to_json(self) -> str:
        doc = {
            "nodes": self.nodes.tolist(),
            "elements": self.elements.tolist(),
            "sections": list(self.sections),
            "supports": [list(s) for s in self.supports],
            "load_nodes": list(self.load_nodes),
            "midspan_node": self.midspan_node,
        }
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "TrussGeometry":
        doc = json.loads(text)
        return cls(
            nodes=np.asarray(doc["nodes"], dtype=float),
            elements=np.asarray(doc["elements"], dtype=int),
            sections=tuple(doc["sections"]),
            supports=tuple(tuple(s) for s in doc["supports"]),
            load_nodes=tuple(doc["load_nodes"]),
            midspan_node=int(doc["midspan_node"]),
        )


def load_geometry(path) -> TrussGeometry:
    with open(path, "r", encoding="utf-8") as fh:
        return TrussGeometry.from_json(fh.read())


def default_bridge_geometry() -> TrussGeometry:
    """The in-repo 23-bar bridge (24 m x 2 m, loads on the upper chord)."""
    text = resources.files("voikrig.data").joinpath("bridge23.json").read_text()
    return TrussGeometry.from_json(text)


def validate_bridge_input(x) -> np.ndarray:
    x = np.asarray(x, dtype=float).ravel()
    if x.size != DIM:
        raise TrussError(f"bridge input must have {DIM} entries, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise TrussError("bridge input contains non-finite entries")
    if np.any(x[IDX_A1:] <= 0.0):
        raise TrussError("areas and moduli must be strictly positive")
    return x


def with_added_area(x, a_add):
    """Imperfect-upgrade view: plate area added to both cross sections."""
    x = np.asarray(x, dtype=float)
    out = x.copy()
    if x.ndim == 1:
        out[IDX_A1] += a_add
        out[IDX_A2] += a_add
    else:
        out[:, IDX_A1] += a_add
        out[:, IDX_A2] += a_add
    return out


class _Assembly:
    """Precomputed per-element stiffness patterns restricted to free DOFs."""

    def __init__(self, geom: TrussGeometry):
        self.geom = geom
        nodes, elements = geom.nodes, geom.elements
        ne = elements.shape[0]
        free = geom.free_dofs()
        nf = free.size
        dof_map = -np.ones(geom.n_dof, dtype=int)
        dof_map[free] = np.arange(nf)
        self.free = free
        self.nf = nf
        self.lengths = np.empty(ne)
        self.horizontal = np.array([s == "horizontal" for s in geom.sections])
        # pattern[e] is the free-DOF block of the unit-EA/L element matrix
        self.patterns = np.zeros((ne, nf, nf))
        self.full_patterns = np.zeros((ne, geom.n_dof, geom.n_dof))
        for e, (i, j) in enumerate(elements):
            dx, dy = nodes[j] - nodes[i]
            ll = float(np.hypot(dx, dy))
            if ll <= 0.0:
                raise TrussError(f"element {e} has zero length")
            self.lengths[e] = ll
            c, s = dx / ll, dy / ll
            block = np.array(
                [
                    [c * c, c * s, -c * c, -c * s],
                    [c * s, s * s, -c * s, -s * s],
                    [-c * c, -c * s, c * c, c * s],
                    [-c * s, -s * s, c * s, s * s],
                ]
            )
            dofs = np.array([2 * i, 2 * i + 1, 2 * j, 2 * j + 1])
            self.full_patterns[e][np.ix_(dofs, dofs)] = block
            fsel = dof_map[dofs]
            keep = fsel >= 0
            self.patterns[e][np.ix_(fsel[keep], fsel[keep])] = block[
                np.ix_(keep, keep)
            ][:, :]
        # load vector pattern: unit of P_i -> -1 on the vertical DOF
        self.load_dofs = np.array([2 * n + 1 for n in geom.load_nodes])
        self.load_free_idx = dof_map[self.load_dofs]
        if np.any(self.load_free_idx < 0):
            raise TrussError("load nodes must not be vertically supported")

    def element_coefs(self, x: np.ndarray) -> np.ndarray:
        """EA/L per element for inputs x of shape (..., 10)."""
        ea_h = x[..., IDX_E1] * x[..., IDX_A1]
        ea_d = x[..., IDX_E2] * x[..., IDX_A2]
        ea = np.where(self.horizontal, ea_h[..., None], ea_d[..., None])
        return ea / self.lengths


_ASSEMBLY_CACHE: dict[int, _Assembly] = {}


def _assembly(geom: TrussGeometry) -> _Assembly:
    key = id(geom)
    asm = _ASSEMBLY_CACHE.get(key)
    if asm is None or asm.geom is not geom:
        asm = _Assembly(geom)
        _ASSEMBLY_CACHE[key] = asm
    return asm


def solve_truss(geom: TrussGeometry, x) -> np.ndarray:
    """Direct-stiffness solve; returns the full nodal displacement vector.

    Verifies the residual ||K u - F|| <= 1e-9 ||F|| on the free DOFs.
    """
    x = validate_bridge_input(x)
    asm = _assembly(geom)
    coefs = asm.element_coefs(x)
    k_free = np.einsum("e,eij->ij", coefs, asm.patterns)
    f_free = np.zeros(asm.nf)
    f_free[asm.load_free_idx] = -x[:N_LOADS]
    try:
        u_free = np.linalg.solve(k_free, f_free)
    except np.linalg.LinAlgError as exc:
        raise TrussError("singular stiffness matrix") from exc
    f_norm = float(np.linalg.norm(f_free))
    if f_norm > 0.0:
        resid = float(np.linalg.norm(k_free @ u_free - f_free))
        if resid > 1e-9 * f_norm:
            raise TrussError(f"stiffness solve residual too large: {resid:g}")
    u = np.zeros(geom.n_dof)
    u[asm.free] = u_free
    return u


def midspan_deflection(x, geom: TrussGeometry | None = None) -> float:
    """System response: magnitude of the vertical mid-span displacement, m."""
    geom = geom or default_bridge_geometry()
    u = solve_truss(geom, x)
    return float(abs(u[2 * geom.midspan_node + 1]))


def midspan_deflection_many(xs, geom: TrussGeometry | None = None, chunk: int = 20000) -> np.ndarray:
    """Vectorized midspan_deflection over rows of xs (n, 10)."""
    geom = geom or default_bridge_geometry()
    asm = _assembly(geom)
    xs = np.asarray(xs, dtype=float)
    if xs.ndim == 1:
        return np.array([midspan_deflection(xs, geom)])
    if xs.shape[1] != DIM:
        raise TrussError(f"expected (n, {DIM}) inputs")
    if np.any(xs[:, IDX_A1:] <= 0.0) or not np.all(np.isfinite(xs)):
        raise TrussError("invalid bridge inputs in batch")
    mid_dof = 2 * geom.midspan_node + 1
    free_list = asm.free.tolist()
    if mid_dof not in free_list:
        raise TrussError("midspan DOF is constrained")
    mid_idx = free_list.index(mid_dof)
    out = np.empty(xs.shape[0])
    for a in range(0, xs.shape[0], chunk):
        b = min(a + chunk, xs.shape[0])
        block = xs[a:b]
        coefs = asm.element_coefs(block)  # (c, e)
        k = np.einsum("ce,eij->cij", coefs, asm.patterns)
        f = np.zeros((b - a, asm.nf))
        f[:, asm.load_free_idx] = -block[:, :N_LOADS]
        u = np.linalg.solve(k, f[:, :, None])[:, :, 0]
        out[a:b] = np.abs(u[:, mid_idx])
    return out
