"""Deterministic SVG renderings of landscapes and their topology.

Every renderer is a pure function returning the SVG text; identical inputs
give identical bytes. Numbers are written with 6 significant digits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UsageError
from .sampler import LandscapeGrid
from .topology import Barcode, MergeTree, StableManifolds

__all__ = [
    "BranchProfile",
    "ProfileLayout",
    "layout_profile",
    "render_profile",
    "render_barcode",
    "render_merge_tree",
    "render_contour",
    "marching_squares",
    "default_levels",
]

WIDTH, HEIGHT, MARGIN = 640, 400, 40
DEFAULT_PROFILE_LEVELS = 64

# viridis, sampled at 5 stops
_STOPS = np.array([
    [68, 1, 84], [59, 82, 139], [33, 145, 140], [94, 201, 98], [253, 231, 37],
], dtype=float)


def _num(x: float) -> str:
    out = f"{float(x):.6g}"
    return "0" if out == "-0" else out


def _color(t: float) -> str:
    t = min(max(float(t), 0.0), 1.0) * (len(_STOPS) - 1)
    i = min(int(t), len(_STOPS) - 2)
    rgb = _STOPS[i] + (t - i) * (_STOPS[i + 1] - _STOPS[i])
    return "#" + "".join(f"{int(round(c)):02x}" for c in rgb)


def _svg(body: list[str], width=WIDTH, height=HEIGHT, title="") -> str:
    head = (
        '<?xml version="1.0" encoding="UTF-8"?>\n'
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">\n'
    )
    if title:
        head += f"<title>{title}</title>\n"
    head += f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>\n'
    return head + "\n".join(body) + ("\n" if body else "") + "</svg>\n"


def _scale(lo: float, hi: float, out_lo: float, out_hi: float):
    if hi == lo:
        lo, hi = lo - 0.5, hi + 0.5
    k = (out_hi - out_lo) / (hi - lo)
    return lambda x: out_lo + (x - lo) * k


# --------------------------------------------------------------------------
# landscape profile


@dataclass(frozen=True)
class BranchProfile:
    """One basin of the profile.

    ``counts[j]`` is the number of grid points with value ``<= levels[j]`` in
    the minimum's stable manifold plus the manifolds of the branches that have
    merged into it at or below ``levels[j]``; ``widths = counts / N``, so the
    root spans unit width at ``f_max``.
    """

    minimum: int
    parent: int | None
    birth: float
    death: float
    levels: np.ndarray
    counts: np.ndarray
    widths: np.ndarray
    center: float
    depth: float

    def polygon(self) -> list[tuple[float, float]]:
        left = [(self.center - w / 2, h) for h, w in zip(self.levels, self.widths)]
        right = [(self.center + w / 2, h) for h, w in zip(self.levels[::-1], self.widths[::-1])]
        return left + right


@dataclass(frozen=True)
class ProfileLayout:
    branches: tuple[BranchProfile, ...]
    N: int
    f_min: float
    f_max: float
    _members: tuple = ()

    def branch(self, minimum: int) -> BranchProfile:
        return next(b for b in self.branches if b.minimum == minimum)

    def count_at(self, minimum: int, h: float) -> int:
        """Sublevel point count of a branch at an arbitrary level ``h``."""
        entry, sorted_vals = self._members
        b = self.branch(minimum)
        if h < b.birth or h > b.death:
            return 0
        total = 0
        for m, e in entry[minimum].items():
            if e <= h or m == minimum:
                total += int(np.searchsorted(sorted_vals[m], h, side="right"))
        return total


def layout_profile(tree: MergeTree, manifolds: StableManifolds, grid: LandscapeGrid,
                   levels: int = DEFAULT_PROFILE_LEVELS, barcode: Barcode | None = None) -> ProfileLayout:
    """Nested basin profile of a merge tree.

    Each branch runs from its minimum (birth) to the saddle where it merges
    (death; ``f_max`` for the global minimum), sampled at ``levels`` uniform
    heights. A child branch is counted inside its parent from its merge level
    upward. Children sit inside the parent's span at their merge
    level, ordered left to right by decreasing persistence.

    The branch hierarchy is read from ``barcode`` when given and otherwise
    recovered from the tree.
    """
    if levels < 2:
        raise UsageError("levels must be >= 2")
    if manifolds.grid_digest != grid.digest or tree.grid_digest != grid.digest:
        raise UsageError("tree, manifolds and grid do not come from the same grid")

    info = _branch_info(tree, barcode)  # minimum -> (parent minimum, death)
    values = grid.values
    N = grid.N
    f_min, f_max = grid.f_min, grid.f_max
    sorted_vals = {}
    for m in info:
        sorted_vals[m] = np.sort(values[manifolds.assignment == m])

    children: dict[int, list[int]] = {m: [] for m in info}
    for m, (par, _) in info.items():
        if par is not None:
            children[par].append(m)

    # entry[b][d]: level above which descendant d counts towards b
    entry: dict[int, dict[int, float]] = {}

    def collect(b, d, level):
        entry[b][d] = level
        for c in children[d]:
            collect(b, c, max(level, info[c][1]) if d != b else info[c][1])

    for b in info:
        entry[b] = {}
        collect(b, b, -np.inf)

    births = {m: float(values[tree.node(m).index]) for m in info}
    branches = {}
    for b, (par, death) in info.items():
        hs = np.linspace(births[b], death, levels)
        counts = np.zeros(levels, dtype=np.int64)
        for d, e in entry[b].items():
            n_le = np.searchsorted(sorted_vals[d], hs, side="right")
            counts += np.where((hs >= e) | (d == b), n_le, 0)
        branches[b] = [par, death, hs, counts]

    # each branch owns an interval as wide as its top width: its own basin
    # first, then the children left to right by decreasing persistence
    centers: dict[int, float] = {}
    queue = [(m, 0.0) for m, (par, _) in sorted(info.items()) if par is None]
    while queue:
        b, left = queue.pop(0)
        top = branches[b][3][-1] / N
        centers[b] = left + top / 2
        kids = sorted(children[b], key=lambda c: (-(info[c][1] - births[c]), c))
        cursor = left + top - sum(branches[c][3][-1] for c in kids) / N
        for c in kids:
            queue.append((c, cursor))
            cursor += branches[c][3][-1] / N

    out = []
    for b in sorted(info):
        par, death, hs, counts = branches[b]
        depth = 0.0 if f_max == f_min else (births[b] - f_min) / (f_max - f_min)
        out.append(BranchProfile(
            minimum=b, parent=par, birth=births[b], death=death, levels=hs,
            counts=counts, widths=counts / N, center=centers[b], depth=depth,
        ))
    return ProfileLayout(tuple(out), N, f_min, f_max, (entry, sorted_vals))


def _branch_info(tree: MergeTree, barcode: Barcode | None) -> dict[int, tuple[int | None, float]]:
    if barcode is not None:
        out = {}
        for p in barcode.pairs:
            out[p.minimum] = (None, p.death) if p.essential else (p.absorber, p.death)
        return out
    # walk the tree: at every saddle the child chain holding the oldest
    # minimum continues, the others end there
    kids = tree.children()
    nodes = tree._by_id

    def oldest(nid):
        if nodes[nid].kind == "minimum":
            return nid
        return min(oldest(c) for c in kids[nid])

    out: dict[int, tuple[int | None, float]] = {}
    root = tree.root
    (top,) = kids[root]
    out[oldest(top)] = (None, nodes[root].value)
    stack = [top]
    while stack:
        nid = stack.pop()
        if nodes[nid].kind != "saddle":
            continue
        heirs = [oldest(c) for c in kids[nid]]
        keep = min(heirs)
        for c, h in zip(kids[nid], heirs):
            if h != keep:
                out[h] = (keep, nodes[nid].value)
            stack.append(c)
    return out


def render_profile(layout: ProfileLayout, width=WIDTH, height=HEIGHT) -> str:
    sx = _scale(0.0, 1.0, MARGIN, width - MARGIN)
    sy = _scale(layout.f_min, layout.f_max, height - MARGIN, MARGIN)
    body = []
    by_min = {b.minimum: b for b in layout.branches}

    def depth_of(b):
        d = 0
        while by_min[b].parent is not None:
            b = by_min[b].parent
            d += 1
        return d

    for b in sorted(layout.branches, key=lambda b: (depth_of(b.minimum), b.minimum)):
        pts = " ".join(f"{_num(sx(x))},{_num(sy(h))}" for x, h in b.polygon())
        body.append(
            f'<polygon class="branch" data-minimum="{b.minimum}" points="{pts}" '
            f'fill="{_color(b.depth)}" fill-opacity="0.85" stroke="#222222" stroke-width="0.5"/>'
        )
    return _svg(body, width, height, title="landscape profile")


# --------------------------------------------------------------------------
# barcode and merge tree


def render_barcode(barcode: Barcode, width=WIDTH, height=None) -> str:
    """One horizontal bar per pair, birth to death; the essential bar is red and dashed."""
    pairs = sorted(barcode.pairs, key=lambda p: (p.birth, p.persistence, p.minimum))
    row = 18
    height = height or max(HEIGHT // 4, 2 * MARGIN + row * len(pairs))
    lo = min(p.birth for p in pairs)
    hi = max(p.death for p in pairs)
    sx = _scale(lo, hi, MARGIN, width - MARGIN)
    body = [
        f'<line class="axis" x1="{MARGIN}" y1="{height - MARGIN / 2}" x2="{width - MARGIN}" '
        f'y2="{height - MARGIN / 2}" stroke="#000000" stroke-width="1"/>',
        f'<text x="{MARGIN}" y="{_num(height - 6)}" font-size="10">{_num(lo)}</text>',
        f'<text x="{width - MARGIN}" y="{_num(height - 6)}" font-size="10" text-anchor="end">{_num(hi)}</text>',
    ]
    for i, p in enumerate(pairs):
        y = MARGIN / 2 + row * i + row / 2
        style = 'stroke="#d62728" stroke-dasharray="6,3"' if p.essential else 'stroke="#1f77b4"'
        cls = "bar essential" if p.essential else "bar"
        body.append(
            f'<line class="{cls}" data-minimum="{p.minimum}" data-birth="{_num(p.birth)}" '
            f'data-death="{_num(p.death)}" x1="{_num(sx(p.birth))}" y1="{_num(y)}" '
            f'x2="{_num(sx(p.death))}" y2="{_num(y)}" {style} stroke-width="6"/>'
        )
    return _svg(body, width, height, title="persistence barcode")


def tree_layout(tree: MergeTree) -> dict[int, tuple[float, float]]:
    """``node id -> (x, value)``: leaves at consecutive x in depth-first order,
    inner nodes above the mean x of their children."""
    kids = tree.children()
    nodes = tree._by_id
    pos: dict[int, tuple[float, float]] = {}
    counter = [0]

    def visit(nid):
        cs = sorted(kids[nid], key=lambda c: (nodes[c].value, c))
        if not cs:
            pos[nid] = (float(counter[0]), nodes[nid].value)
            counter[0] += 1
            return
        for c in cs:
            visit(c)
        pos[nid] = (float(np.mean([pos[c][0] for c in cs])), nodes[nid].value)

    visit(tree.root)
    return pos


def render_merge_tree(tree: MergeTree, width=WIDTH, height=HEIGHT) -> str:
    pos = tree_layout(tree)
    xs = [p[0] for p in pos.values()]
    ys = [p[1] for p in pos.values()]
    sx = _scale(min(xs) - 0.5, max(xs) + 0.5, MARGIN, width - MARGIN)
    sy = _scale(min(ys), max(ys), height - MARGIN, MARGIN)
    nodes = tree._by_id
    body = []
    for e in tree.edges:
        (xp, yp), (xc, yc) = pos[e.parent], pos[e.child]
        d = f"M{_num(sx(xc))},{_num(sy(yc))} V{_num(sy(yp))} H{_num(sx(xp))}"
        body.append(f'<path class="edge" d="{d}" fill="none" stroke="#444444" stroke-width="1.5"/>')
    fills = {"minimum": "#2ca02c", "saddle": "#ff7f0e", "root": "#000000"}
    for nid in sorted(pos):
        x, y = pos[nid]
        n = nodes[nid]
        body.append(
            f'<circle class="{n.kind}" data-id="{nid}" data-value="{_num(n.value)}" '
            f'cx="{_num(sx(x))}" cy="{_num(sy(y))}" r="4" fill="{fills[n.kind]}"/>'
        )
    return _svg(body, width, height, title="merge tree")


# --------------------------------------------------------------------------
# contours

# corner order: 0=(i,j) 1=(i,j+1) 2=(i+1,j+1) 3=(i+1,j); edges: 0=top 1=right 2=bottom 3=left
_EDGE_CORNERS = ((0, 1), (1, 2), (3, 2), (0, 3))
_SEGMENTS = {
    0: (), 15: (),
    1: ((0, 3),), 14: ((0, 3),),
    2: ((0, 1),), 13: ((0, 1),),
    4: ((1, 2),), 11: ((1, 2),),
    8: ((2, 3),), 7: ((2, 3),),
    3: ((1, 3),), 12: ((1, 3),),
    6: ((0, 2),), 9: ((0, 2),),
}


def default_levels(grid: LandscapeGrid, count: int = 10) -> np.ndarray:
    """``count`` levels evenly spaced strictly inside ``(f_min, f_max)``; none for a constant grid."""
    if grid.R == 0:
        return np.zeros(0)
    return grid.f_min + grid.R * np.arange(1, count + 1) / (count + 1)


def marching_squares(Z: np.ndarray, level: float) -> list[np.ndarray]:
    """Iso-lines of a 2D array at ``level`` as polylines in (row, column) index space.

    A corner is inside when its value is above ``level``. The two ambiguous
    cases are split by the mean of the four corners. Closed loops repeat their
    first vertex at the end.
    """
    Z = np.asarray(Z, dtype=float)
    nr, nc = Z.shape
    if nr < 2 or nc < 2:
        return []
    above = Z > level
    code = (above[:-1, :-1] * 1 + above[:-1, 1:] * 2 + above[1:, 1:] * 4 + above[1:, :-1] * 8)
    segs: list[tuple[tuple, tuple]] = []
    for i, j in zip(*np.nonzero((code != 0) & (code != 15))):
        c = int(code[i, j])
        if c in (5, 10):
            centre_above = Z[i:i + 2, j:j + 2].mean() > level
            # cut off the two corners on the side the centre is not on
            if (c == 5) == centre_above:
                pairs = ((0, 1), (2, 3))
            else:
                pairs = ((0, 3), (1, 2))
        else:
            pairs = _SEGMENTS[c]
        for a, b in pairs:
            segs.append((_edge_key(i, j, a), _edge_key(i, j, b)))
    return [np.array([_crossing(Z, level, k) for k in chain]) for chain in _chain(segs)]


def _edge_key(i, j, edge):
    # grid edge between two corners, as a sorted pair of (row, col) points
    corners = ((i, j), (i, j + 1), (i + 1, j + 1), (i + 1, j))
    a, b = _EDGE_CORNERS[edge]
    return tuple(sorted((corners[a], corners[b])))


def _crossing(Z, level, key):
    (r0, c0), (r1, c1) = key
    z0, z1 = Z[r0, c0], Z[r1, c1]
    t = (level - z0) / (z1 - z0)
    return (r0 + t * (r1 - r0), c0 + t * (c1 - c0))


def _chain(segs):
    adj: dict[tuple, list[int]] = {}
    for s, (a, b) in enumerate(segs):
        adj.setdefault(a, []).append(s)
        adj.setdefault(b, []).append(s)
    used = [False] * len(segs)
    chains = []
    # open chains start at an endpoint used once, then loops
    starts = sorted(k for k, v in adj.items() if len(v) == 1) + sorted(adj)
    for start in starts:
        for s0 in adj[start]:
            if used[s0]:
                continue
            chain = [start]
            cur, s = start, s0
            while s is not None:
                used[s] = True
                a, b = segs[s]
                cur = b if a == cur else a
                chain.append(cur)
                s = next((t for t in adj[cur] if not used[t]), None)
            chains.append(chain)
    return chains


def render_contour(grid: LandscapeGrid, levels=None, width=WIDTH, height=WIDTH) -> str:
    """Heat map of a 2D grid with marching-squares iso-lines.

    Axis 1 (the fastest) runs left to right, axis 0 bottom to top.
    """
    if grid.ndim != 2:
        raise UsageError(f"contour rendering needs a 2D grid, this one has {grid.ndim} axes")
    levels = default_levels(grid) if levels is None else np.atleast_1d(np.asarray(levels, dtype=float))
    Z = grid.as_array()
    nr, nc = Z.shape
    cw = (width - 2 * MARGIN) / nc
    ch = (height - 2 * MARGIN) / nr
    body = []
    for i in range(nr):
        for j in range(nc):
            t = 0.0 if grid.R == 0 else (Z[i, j] - grid.f_min) / grid.R
            body.append(
                f'<rect class="cell" x="{_num(MARGIN + j * cw)}" y="{_num(height - MARGIN - (i + 1) * ch)}" '
                f'width="{_num(cw)}" height="{_num(ch)}" fill="{_color(t)}"/>'
            )

    def to_xy(r, c):
        return MARGIN + (c + 0.5) * cw, height - MARGIN - (r + 0.5) * ch

    for level in levels:
        for line in marching_squares(Z, float(level)):
            closed = len(line) > 2 and np.array_equal(line[0], line[-1])
            pts = line[:-1] if closed else line
            d = "M" + " L".join(f"{_num(x)},{_num(y)}" for x, y in (to_xy(r, c) for r, c in pts))
            if closed:
                d += " Z"
            body.append(
                f'<path class="isoline{" closed" if closed else ""}" data-level="{_num(level)}" '
                f'd="{d}" fill="none" stroke="#ffffff" stroke-width="1"/>'
            )
    return _svg(body, width, height, title="loss contour")
