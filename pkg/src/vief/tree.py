"""Binary box tree over the grid: bisection, boundary-layer index splits,
1D point orderings along box boundaries and interfaces, proxy rings.

Ordering conventions (deterministic; the algorithms only need sets that are
1D-like with index locality matching spatial locality):

* Boundary bands walk the box perimeter counterclockwise starting at the
  lower-left corner; each point's primary key is its normalized position
  along its own ring's walk, with outer rings first on ties.  Interleaving
  rings by walk position keeps spatially adjacent points adjacent in index.
* Interface (residual) sets sort by the coordinate along the interface,
  then by distance from the cut.
* All keys are functions of box-local integer offsets, so congruent boxes
  at one level produce identical local orderings (required for factor
  sharing with translation-invariant kernels).
"""

import numpy as np

from .errors import ConfigError


class BoxNode:
    __slots__ = ("idx", "level", "parent", "children", "x0", "x1", "y0", "y1",
                 "full_idx", "sk_idx", "rs_idx", "work_perm", "n_interior_sk")

    def __init__(self, idx, level, parent, x0, x1, y0, y1):
        self.idx = idx
        self.level = level
        self.parent = parent
        self.children = None
        self.x0, self.x1, self.y0, self.y1 = x0, x1, y0, y1
        self.full_idx = None     # leaf: owned; non-leaf: concat child skeletons
        self.sk_idx = None
        self.rs_idx = None
        self.work_perm = None    # full_idx[work_perm] == [sk_idx, rs_idx]
        self.n_interior_sk = 0   # trailing interface-interior skeleton points

    @property
    def is_leaf(self):
        return self.children is None

    @property
    def width(self):
        return self.x1 - self.x0

    @property
    def height(self):
        return self.y1 - self.y0

    @property
    def npoints(self):
        return self.width * self.height

    @property
    def shape_key(self):
        return (self.width, self.height)

    def split_axis(self):
        # alternating axes, x first at the root
        return "x" if self.level % 2 == 0 else "y"

    def __repr__(self):
        return (f"Box({self.idx}, lvl={self.level}, "
                f"[{self.x0},{self.x1})x[{self.y0},{self.y1}))")


class BoxTree:
    def __init__(self, grid, n_max):
        self.grid = grid
        self.n_max = n_max
        self.nodes = []
        self.levels = []         # level -> list of node indices
        self.layers = 0          # set by annotate_skeletons

    @property
    def depth(self):
        return len(self.levels) - 1

    @property
    def root(self):
        return self.nodes[0]

    def leaves(self):
        return [b for b in self.nodes if b.is_leaf]

    def boxes_fine_to_coarse(self):
        for lv in range(self.depth, -1, -1):
            for i in self.levels[lv]:
                yield self.nodes[i]

    def boxes_coarse_to_fine(self):
        for lv in range(self.depth + 1):
            for i in self.levels[lv]:
                yield self.nodes[i]

    def owned_indices(self, box):
        """Row-major linear grid indices of all lattice points in the box."""
        n = self.grid.n_side
        ix = np.arange(box.x0, box.x1)
        iy = np.arange(box.y0, box.y1)
        return (iy[:, None] * n + ix[None, :]).ravel()


def build_tree(grid, n_max):
    """Bisect alternating axes (x first) until every leaf has <= n_max points."""
    if n_max < 4:
        raise ConfigError("leaf size must be at least 4 points")
    if grid.n < n_max:
        raise ConfigError("grid smaller than one leaf")
    tree = BoxTree(grid, n_max)
    root = BoxNode(0, 0, -1, 0, grid.n_side, 0, grid.n_side)
    tree.nodes.append(root)
    tree.levels.append([0])
    frontier = [root]
    while any(b.npoints > n_max for b in frontier):
        nxt = []
        tree.levels.append([])
        for b in frontier:
            if b.npoints <= n_max:
                raise ConfigError(
                    "uneven tree: box sizes at one level straddle the leaf size")
            if b.split_axis() == "x":
                cut = b.x0 + b.width // 2
                rects = [(b.x0, cut, b.y0, b.y1), (cut, b.x1, b.y0, b.y1)]
            else:
                cut = b.y0 + b.height // 2
                rects = [(b.x0, b.x1, b.y0, cut), (b.x0, b.x1, cut, b.y1)]
            kids = []
            for rect in rects:
                node = BoxNode(len(tree.nodes), b.level + 1, b.idx, *rect)
                tree.nodes.append(node)
                tree.levels[-1].append(node.idx)
                nxt.append(node)
                kids.append(node.idx)
            b.children = tuple(kids)
        frontier = nxt
    return tree


# ---------------------------------------------------------------------------
# perimeter-walk machinery (box-local integer offsets)

def ring_of(dx, dy, w, h):
    """Distance of local cell (dx,dy) to the rectangle boundary."""
    return np.minimum(np.minimum(dx, w - 1 - dx), np.minimum(dy, h - 1 - dy))


def walk_key(dx, dy, w, h):
    """(t, ring) sort keys: t is normalized CCW perimeter position of the
    point within its own ring's rectangle, starting at that ring's
    lower-left corner."""
    dx = np.asarray(dx, dtype=np.int64)
    dy = np.asarray(dy, dtype=np.int64)
    r = ring_of(dx, dy, w, h)
    rw = w - 2 * r
    rh = h - 2 * r
    lx = dx - r
    ly = dy - r
    # CCW: bottom row, right column, top row (reversed), left column (reversed)
    pos = np.where(
        ly == 0, lx,
        np.where(lx == rw - 1, (rw - 1) + ly,
                 np.where(ly == rh - 1, (rw - 1) + (rh - 1) + (rw - 1 - lx),
                          2 * (rw - 1) + (rh - 1) + (rh - 1 - ly))))
    per = np.maximum(2 * (rw - 1) + 2 * (rh - 1), 1)
    return pos / per, r


def order_boundary_cyclic(indices, box, grid):
    """Indices reordered by the perimeter-band walk (t, then outer ring first)."""
    indices = np.asarray(indices, dtype=np.int64)
    if indices.size == 0:
        return indices
    n = grid.n_side
    dx = indices % n - box.x0
    dy = indices // n - box.y0
    t, r = walk_key(dx, dy, box.width, box.height)
    order = np.lexsort((dy, dx, r, t))
    return indices[order]


def order_interface(indices, box, grid):
    """Indices sorted along the interface between the box's children."""
    indices = np.asarray(indices, dtype=np.int64)
    if indices.size == 0:
        return indices
    n = grid.n_side
    dx = indices % n - box.x0
    dy = indices // n - box.y0
    if box.split_axis() == "x":
        order = np.lexsort((dx, dy))     # along = y, then layer offset
    else:
        order = np.lexsort((dy, dx))
    return indices[order]


def boundary_layer_split(box, layers, grid, candidates=None, support_mask=None):
    """(I_sk, I_rs): candidates within `layers` of the box boundary vs rest.

    `candidates` defaults to all owned points (leaf usage).  Points where
    `support_mask` is False are never kept as skeleton candidates (scatterer
    support restriction) and are appended to the residual set.
    """
    if candidates is None:
        iy, ix = np.divmod(np.arange(grid.n), grid.n_side)
        inside = ((ix >= box.x0) & (ix < box.x1) & (iy >= box.y0) & (iy < box.y1))
        candidates = np.nonzero(inside)[0]
    candidates = np.asarray(candidates, dtype=np.int64)
    n = grid.n_side
    dx = candidates % n - box.x0
    dy = candidates // n - box.y0
    in_band = ring_of(dx, dy, box.width, box.height) < layers
    if support_mask is not None:
        in_band &= support_mask[candidates]
    sk = order_boundary_cyclic(candidates[in_band], box, grid)
    rs = order_interface(candidates[~in_band], box, grid)
    return sk, rs


def interface_interior_subset(rs_idx, box, grid, k_wave, points_per_wavelength):
    """Residual points to retain in the skeleton for oscillatory kernels:
    a sublattice along the interface at the requested per-wavelength density."""
    if rs_idx.size == 0:
        return np.zeros(0, dtype=bool)
    cells_per_wavelength = (2.0 * np.pi / k_wave) / grid.h
    stride = max(1, int(np.floor(cells_per_wavelength / points_per_wavelength)))
    if stride <= 1:
        return np.ones(rs_idx.size, dtype=bool)
    n = grid.n_side
    ix = rs_idx % n
    iy = rs_idx // n
    return (ix % stride == 0) & (iy % stride == 0)


def annotate_skeletons(tree, layers, support_mask=None, k_wave=None,
                       points_per_wavelength=0.0):
    """Fill per-box skeleton/residual splits bottom-up (a priori band choice).

    Leaves split their owned points; a parent splits the concatenation of its
    children's skeletons against its own boundary band.  `work_perm` records
    how [children-skeleton concat] maps onto [sk_idx, rs_idx].
    """
    tree.layers = layers
    keep_interior = k_wave is not None and points_per_wavelength > 0
    for box in tree.boxes_fine_to_coarse():
        if box.is_leaf:
            box.full_idx = tree.owned_indices(box)
        else:
            c1, c2 = (tree.nodes[c] for c in box.children)
            box.full_idx = np.concatenate([c1.sk_idx, c2.sk_idx])
        sk, rs = boundary_layer_split(box, layers, tree.grid,
                                      candidates=box.full_idx,
                                      support_mask=support_mask)
        box.n_interior_sk = 0
        if keep_interior and not box.is_leaf and rs.size:
            keep = interface_interior_subset(rs, box, tree.grid, k_wave,
                                             points_per_wavelength)
            extra = rs[keep]
            rs = rs[~keep]
            sk = np.concatenate([sk, extra])
            box.n_interior_sk = extra.size
        box.sk_idx = sk
        box.rs_idx = rs
        pos = {g: p for p, g in enumerate(box.full_idx)}
        box.work_perm = np.fromiter(
            (pos[g] for g in np.concatenate([sk, rs])), dtype=np.int64,
            count=box.full_idx.size)
    return tree


# ---------------------------------------------------------------------------
# proxy rings

def proxy_points(box, layers, budget=None):
    """Integer lattice coords of `layers` rings just outside the box,
    in perimeter-walk order; uniformly decimated to `budget` points if set.

    Proxy points are geometric sources, not grid samples; they may leave the
    domain."""
    coords = []
    for j in range(1, layers + 1):
        w = box.width + 2 * j
        h = box.height + 2 * j
        ring = _ring_cells(w, h)
        ring[:, 0] += box.x0 - j
        ring[:, 1] += box.y0 - j
        t = np.arange(len(ring)) / max(len(ring), 1)
        coords.append((t, j, ring))
    allc = np.concatenate([c for _, _, c in coords])
    keys_t = np.concatenate([t for t, _, _ in coords])
    keys_j = np.concatenate([np.full(len(c), j) for _, j, c in coords])
    order = np.lexsort((keys_j, keys_t))
    allc = allc[order]
    if budget is not None and budget < len(allc):
        sel = np.linspace(0, len(allc), budget, endpoint=False).astype(np.int64)
        allc = allc[sel]
    return allc


def _ring_cells(w, h):
    """Boundary cells of a w x h rectangle, CCW from (0,0)."""
    if w == 1:
        return np.column_stack([np.zeros(h, np.int64), np.arange(h)])
    if h == 1:
        return np.column_stack([np.arange(w), np.zeros(w, np.int64)])
    bottom = np.column_stack([np.arange(w - 1), np.zeros(w - 1, np.int64)])
    right = np.column_stack([np.full(h - 1, w - 1), np.arange(h - 1)])
    top = np.column_stack([np.arange(w - 1, 0, -1), np.full(w - 1, h - 1)])
    left = np.column_stack([np.zeros(h - 1, np.int64), np.arange(h - 1, 0, -1)])
    return np.concatenate([bottom, right, top, left]).astype(np.int64)
