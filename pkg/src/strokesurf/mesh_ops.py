"""Mesh-level operations: audits, orientation, boundary processing,
hole filling, smoothing, and OBJ round-tripping.

Everything here works on the active triangles of a SurfaceMesh and is
deterministic: iteration orders are sorted, ties broken by ids.
"""

from __future__ import annotations

from collections import deque

import numpy as np

from . import geometry
from .matcher import Chain, ChainSet


# ---------------------------------------------------------------------------
# audits


def audit_manifold(mesh):
    """Return (bad_edges, bad_vertices): edges with more than two
    incident triangles and vertices whose incident triangles split into
    multiple edge-connected fans."""
    em = mesh.edge_map()
    bad_edges = sorted(e for e, tids in em.items() if len(tids) > 2)
    bad_vertices = []
    vmap = mesh.vertex_tris(mesh.active_ids())
    for v in sorted(vmap):
        if len(vertex_fan_groups(mesh, v, vmap[v])) > 1:
            bad_vertices.append(v)
    return bad_edges, bad_vertices


def vertex_fan_groups(mesh, v, tids=None):
    """Incident triangles of v grouped by shared-edge adjacency at v."""
    if tids is None:
        tids = mesh.vertex_tris().get(v, [])
    tids = [t for t in tids if mesh.is_active(t)]
    if not tids:
        return []
    opposite = {}
    for t in tids:
        for u in mesh.tri_verts[t]:
            if u != v:
                opposite.setdefault(u, []).append(t)
    parent = {t: t for t in tids}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for group in opposite.values():
        for t in group[1:]:
            r1, r2 = find(group[0]), find(t)
            if r1 != r2:
                parent[max(r1, r2)] = min(r1, r2)
    groups = {}
    for t in tids:
        groups.setdefault(find(t), []).append(t)
    return [sorted(groups[r]) for r in sorted(groups)]


# ---------------------------------------------------------------------------
# orientation


def _directed_edge_in(verts, edge):
    a, b, c = verts
    return edge in ((a, b), (b, c), (c, a))


def orient_component(mesh, tids, em=None):
    """Flip triangles breadth-first so shared edges run in opposite
    directions. Returns True when the component is orientable."""
    if em is None:
        em = mesh.edge_map(tids)
    seed = min(tids)
    visited = {seed}
    queue = deque([seed])
    comp = set(tids)
    ok = True
    while queue:
        t = queue.popleft()
        a, b, c = mesh.tri_verts[t]
        for u, v in ((a, b), (b, c), (c, a)):
            key = (u, v) if u < v else (v, u)
            for other in em.get(key, ()):
                if other == t or other not in comp:
                    continue
                same = _directed_edge_in(mesh.tri_verts[other], (u, v))
                if other in visited:
                    if same:
                        ok = False
                else:
                    if same:
                        mesh.flip(other)
                    visited.add(other)
                    queue.append(other)
    return ok


def _align_with_source_normals(mesh, tids):
    """Flip a consistently oriented component so its area-weighted face
    normals agree with the source vertex normals."""
    tv = np.asarray([mesh.tri_verts[t] for t in tids], dtype=np.int64)
    n = geometry.triangle_normals(mesh.positions, tv)
    ref = (mesh.normals[tv[:, 0]] + mesh.normals[tv[:, 1]]
           + mesh.normals[tv[:, 2]])
    if float(np.einsum("ij,ij->", n, ref)) < 0:
        for t in tids:
            mesh.flip(t)


def orient_all(mesh):
    """Orient every component; returns the list of non-orientable
    components (as sorted tid lists)."""
    _, comps = mesh.components()
    bad = []
    for tids in comps:
        em = mesh.edge_map(tids)
        if orient_component(mesh, tids, em):
            _align_with_source_normals(mesh, tids)
        else:
            bad.append(tids)
    return bad


def break_nonorientable(mesh, frozen=frozenset()):
    """Remove triangles until every component orients. At each conflict
    the newest removable triangle on the offending edge goes."""
    removed = []
    for _ in range(len(mesh.tri_verts)):
        bad = orient_all(mesh)
        if not bad:
            break
        for tids in bad:
            em = mesh.edge_map(tids)
            victim = None
            seed = min(tids)
            visited = {seed}
            queue = deque([seed])
            comp = set(tids)
            while queue and victim is None:
                t = queue.popleft()
                a, b, c = mesh.tri_verts[t]
                for u, v in ((a, b), (b, c), (c, a)):
                    key = (u, v) if u < v else (v, u)
                    for other in em.get(key, ()):
                        if other == t or other not in comp:
                            continue
                        same = _directed_edge_in(mesh.tri_verts[other],
                                                 (u, v))
                        if other in visited:
                            if same:
                                cands = [x for x in (t, other)
                                         if x not in frozen]
                                victim = max(cands) if cands else max(t,
                                                                      other)
                                break
                        else:
                            if same:
                                mesh.flip(other)
                            visited.add(other)
                            queue.append(other)
                    if victim is not None:
                        break
            if victim is not None:
                mesh.remove(victim)
                removed.append(victim)
    return removed


def resolve_moebius(mesh, new_tids):
    """Detach strip triangles whose orientation fights the surface they
    border. Each edge-connected strip of new triangles is oriented on
    its own, then compared against prior triangles along shared edges;
    the strip triangles on the minority (inverted loses ties) are cut."""
    new_set = {t for t in new_tids if mesh.is_active(t)}
    if not new_set:
        return []
    em_all = mesh.edge_map()
    # group new triangles into strips
    parent = {t: t for t in new_set}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for tids in em_all.values():
        inside = [t for t in tids if t in new_set]
        for t in inside[1:]:
            r1, r2 = find(inside[0]), find(t)
            if r1 != r2:
                parent[max(r1, r2)] = min(r1, r2)
    strips = {}
    for t in new_set:
        strips.setdefault(find(t), []).append(t)

    removed = []
    for root in sorted(strips):
        strip = sorted(strips[root])
        orient_component(mesh, strip, mesh.edge_map(strip))
        aligned, inverted = [], []
        for t in strip:
            a, b, c = mesh.tri_verts[t]
            for u, v in ((a, b), (b, c), (c, a)):
                key = (u, v) if u < v else (v, u)
                for other in em_all.get(key, ()):
                    if other in new_set or not mesh.is_active(other):
                        continue
                    if _directed_edge_in(mesh.tri_verts[other], (u, v)):
                        inverted.append(t)
                    else:
                        aligned.append(t)
        if not aligned and not inverted:
            continue
        minority = inverted if len(inverted) <= len(aligned) else aligned
        for t in sorted(set(minority)):
            if mesh.is_active(t):
                mesh.remove(t)
                removed.append(t)
    return removed


# ---------------------------------------------------------------------------
# boundary loops and boundary chains


def boundary_loops(mesh):
    """Closed vertex loops along the surface boundary, following the
    orientation of the incident triangles. Each loop is rotated to start
    at its smallest vertex id; loops are sorted by that id."""
    em = mesh.edge_map()
    outgoing = {}
    for key, tids in em.items():
        if len(tids) != 1:
            continue
        a, b, c = mesh.tri_verts[tids[0]]
        for u, v in ((a, b), (b, c), (c, a)):
            if (min(u, v), max(u, v)) == key:
                outgoing.setdefault(u, []).append(v)
                break
    for v in outgoing:
        outgoing[v].sort()

    loops = []
    used = set()
    for start in sorted(outgoing):
        for first in outgoing[start]:
            if (start, first) in used:
                continue
            loop = [start]
            used.add((start, first))
            cur = first
            broken = False
            for _ in range(len(used) + len(em) + 2):
                if cur == start:
                    break
                loop.append(cur)
                nxt = [w for w in outgoing.get(cur, ())
                       if (cur, w) not in used]
                if not nxt:
                    broken = True
                    break
                used.add((cur, nxt[0]))
                cur = nxt[0]
            if broken or len(loop) < 3:
                continue
            k = loop.index(min(loop))
            loops.append(loop[k:] + loop[:k])
    loops.sort(key=lambda lp: lp[0])
    return loops


def _interpolation_dmax(mesh, comp_of, config):
    """Per-component acceptance radius for gap matching: the mean length
    of interpolation edges (edges not following a source polyline)."""
    lengths = {}
    for key, tids in mesh.edge_map().items():
        u, v = key
        ou, ov = mesh.origin[u], mesh.origin[v]
        structural = (ou[0] == ov[0]
                      and mesh.origin_kind[u] == mesh.origin_kind[v]
                      and abs(int(ou[1]) - int(ov[1])) == 1)
        if structural:
            continue
        d = float(np.linalg.norm(mesh.positions[u] - mesh.positions[v]))
        for c in sorted({comp_of[t] for t in tids}):
            lengths.setdefault(c, []).append(d)
    return {c: float(np.mean(ls)) for c, ls in lengths.items()}


def boundary_chain_set(mesh, config, with_dmax=False):
    """Build cyclic chains over the boundary loops, framed for matching.

    Tangents follow the loop; normals average the incident oriented face
    normals by area; binormals point away from the surface so the LEFT
    probe lands in the open gap. With with_dmax the per-component
    interpolation-edge mean becomes the acceptance radius, falling back
    to the width rule where a component has no interpolation edges.
    """
    loops = boundary_loops(mesh)
    if not loops:
        return None
    comp_of, _ = mesh.components()
    vmap = mesh.vertex_tris()
    dmax_comp = _interpolation_dmax(mesh, comp_of, config) if with_dmax \
        else {}

    chains = []
    for loop in loops:
        gids = np.asarray(loop, dtype=np.int64)
        pos = mesh.positions[gids]
        n = len(loop)
        tan = np.zeros((n, 3))
        nrm = np.zeros((n, 3))
        binorm = np.zeros((n, 3))
        ok = np.ones(n, dtype=bool)
        for i, g in enumerate(loop):
            t_vec, t_ok = geometry.unit(pos[(i + 1) % n] - pos[(i - 1) % n])
            acc = np.zeros(3)
            centroid_acc = np.zeros(3)
            count = 0
            for tid in vmap.get(g, ()):
                if not mesh.is_active(tid):
                    continue
                a, b, c = mesh.tri_verts[tid]
                acc += geometry.triangle_normal(
                    mesh.positions[a], mesh.positions[b], mesh.positions[c])
                centroid_acc += (mesh.positions[a] + mesh.positions[b]
                                 + mesh.positions[c]) / 3.0
                count += 1
            n_vec, n_ok = geometry.unit(acc)
            if not n_ok:
                n_vec, n_ok = geometry.unit(np.asarray(mesh.normals[g]))
            b_vec, b_ok = geometry.unit(np.cross(t_vec, n_vec))
            if b_ok and count:
                inward = centroid_acc / count - pos[i]
                if float(np.dot(b_vec, inward)) > 0:
                    b_vec = -b_vec
            tan[i] = t_vec
            nrm[i] = n_vec
            binorm[i] = b_vec
            ok[i] = t_ok and n_ok and b_ok
        comp = comp_of[vmap[loop[0]][0]]
        dmax = None
        if with_dmax:
            fallback = config.width_factor * float(
                np.mean(mesh.widths[gids]))
            dmax = np.full(n, dmax_comp.get(comp, fallback))
        chains.append(Chain(
            gids=gids, positions=pos, tangents=tan, normals=nrm,
            binormals=binorm, widths=mesh.widths[gids].copy(),
            colors=mesh.colors[gids].copy(), ok=ok, cyclic=True,
            component=comp, dmax=dmax))
    return ChainSet(chains)


# ---------------------------------------------------------------------------
# hole filling


def _component_vertex_sets(mesh):
    comp_of, comps = mesh.components()
    sets = []
    for tids in comps:
        verts = set()
        for t in tids:
            verts.update(mesh.tri_verts[t])
        sets.append(verts)
    return comp_of, sets


def _quad_fill(mesh, loop):
    """Split a reversed 4-loop by the diagonal giving the larger minimum
    interior angle; ties prefer the more planar split, then the lower
    diagonal ids."""
    d, c, b, a = loop[::-1][0], loop[::-1][1], loop[::-1][2], loop[::-1][3]
    # candidate diagonals of quad (d, c, b, a)
    p = {g: mesh.positions[g] for g in loop}
    splits = []
    for diag, tris in (((d, b), ((d, c, b), (d, b, a))),
                       ((c, a), ((c, b, a), (c, a, d)))):
        angles = [geometry.min_interior_angle_deg(p[t[0]], p[t[1]], p[t[2]])
                  for t in tris]
        dihed = geometry.dihedral_deg(p[diag[0]], p[diag[1]],
                                      p[_third(tris[0], diag)],
                                      p[_third(tris[1], diag)])
        low_pair = tuple(-x for x in sorted(diag))
        splits.append((min(angles), -abs(180.0 - dihed), low_pair, tris))
    splits.sort(reverse=True)
    return splits[0][3]


def _third(tri, edge):
    for v in tri:
        if v not in edge:
            return v
    return None


def close_small_holes(mesh, config, phase="fill"):
    """Fill boundary loops of up to small_hole_max_sides vertices,
    skipping loops that are the entire boundary of a sheet-like
    component (closing those would glue a pillow shut)."""
    added = 0
    for _ in range(len(mesh.tri_verts) + 1):
        loops = [lp for lp in boundary_loops(mesh)
                 if len(lp) <= config.small_hole_max_sides]
        if not loops:
            break
        comp_of, comp_verts = _component_vertex_sets(mesh)
        vmap = mesh.vertex_tris()
        em = mesh.edge_map()
        added_now = 0
        for loop in loops:
            comp = comp_of[vmap[loop[0]][0]]
            if set(loop) >= comp_verts[comp]:
                continue
            if len(loop) == 3:
                tris = [tuple(loop[::-1])]
            else:
                tris = _quad_fill(mesh, loop)
            # every edge may end up with at most two incident triangles
            gain = {}
            for tri in tris:
                for u, v in ((tri[0], tri[1]), (tri[1], tri[2]),
                             (tri[2], tri[0])):
                    key = (u, v) if u < v else (v, u)
                    gain[key] = gain.get(key, 0) + 1
            conflict = any(
                len([t for t in em.get(key, ()) if mesh.is_active(t)])
                + extra > 2 for key, extra in gain.items())
            if conflict:
                continue
            filled = 0
            for tri in tris:
                if mesh.add_triangle(*tri, phase=phase) is not None:
                    filled += 1
            if filled:
                added_now += filled
                em = mesh.edge_map()
        if not added_now:
            break
        added += added_now
    return added


def fill_hole(mesh, loop, phase="fill"):
    """Minimum-area triangulation of one boundary loop (classic interval
    DP). Triangles are wound against the loop so they join the surface
    coherently. Chords that would overload an existing mesh edge are
    infeasible; an unfillable loop is left open."""
    n = len(loop)
    if n < 3:
        return 0
    em = mesh.edge_map()
    inf = float("inf")

    def chord_ok(i, j):
        # loop edges gain one triangle, interior chords gain two
        adjacent = (j - i == 1) or (i == 0 and j == n - 1)
        key = (min(loop[i], loop[j]), max(loop[i], loop[j]))
        have = len([t for t in em.get(key, ()) if mesh.is_active(t)])
        return have <= (1 if adjacent else 0)

    pts = [mesh.positions[g] for g in loop]
    cost = [[0.0] * n for _ in range(n)]
    pick = [[-1] * n for _ in range(n)]
    for span in range(2, n):
        for i in range(0, n - span):
            j = i + span
            best, best_k = inf, -1
            if chord_ok(i, j):
                for k in range(i + 1, j):
                    c = (cost[i][k] + cost[k][j]
                         + geometry.triangle_area(pts[i], pts[k], pts[j]))
                    if c < best - 1e-15:
                        best, best_k = c, k
            cost[i][j] = best
            pick[i][j] = best_k
    if not np.isfinite(cost[0][n - 1]):
        return 0
    added = 0
    stack = [(0, n - 1)]
    while stack:
        i, j = stack.pop()
        if j - i < 2:
            continue
        k = pick[i][j]
        if mesh.add_triangle(loop[j], loop[k], loop[i],
                             phase=phase) is not None:
            added += 1
        stack.append((i, k))
        stack.append((k, j))
    return added


def fill_all_holes(mesh, config, max_sides=None, phase="fill"):
    """Triangulate remaining boundary loops (optionally only those with
    at most max_sides vertices), skipping pillow cases."""
    added = 0
    loops = boundary_loops(mesh)
    comp_of, comp_verts = _component_vertex_sets(mesh)
    vmap = mesh.vertex_tris()
    for loop in loops:
        if max_sides is not None and len(loop) > max_sides:
            continue
        comp = comp_of[vmap[loop[0]][0]]
        if set(loop) >= comp_verts[comp]:
            continue
        added += fill_hole(mesh, loop, phase=phase)
    return added


# ---------------------------------------------------------------------------
# smoothing


def _move_keeps_normals(mesh, vmap, g, proposal, cos_guard):
    """A vertex may move only if no incident triangle flips or tilts
    past the guard angle, and none collapses."""
    for tid in vmap.get(g, ()):
        if not mesh.is_active(tid):
            continue
        a, b, c = mesh.tri_verts[tid]
        before = geometry.triangle_normal(
            mesh.positions[a], mesh.positions[b], mesh.positions[c])
        pa, pb, pc = (proposal if x == g else mesh.positions[x]
                      for x in (a, b, c))
        after = geometry.triangle_normal(pa, pb, pc)
        nb, ok_b = geometry.unit(before)
        na, ok_a = geometry.unit(after)
        if not ok_a:
            return False
        if ok_b and float(np.dot(nb, na)) < cos_guard:
            return False
    return True


def smooth_boundary(mesh, config, iterations=1, lam=0.5):
    """Laplacian relaxation along boundary loops with a normal guard."""
    cos_guard = float(np.cos(np.radians(config.smoothing_normal_guard_deg)))
    moved = 0
    for _ in range(iterations):
        loops = boundary_loops(mesh)
        vmap = mesh.vertex_tris()
        proposals = []
        for loop in loops:
            n = len(loop)
            for i, g in enumerate(loop):
                target = 0.5 * (mesh.positions[loop[(i - 1) % n]]
                                + mesh.positions[loop[(i + 1) % n]])
                prop = mesh.positions[g] + lam * (target - mesh.positions[g])
                if _move_keeps_normals(mesh, vmap, g, prop, cos_guard):
                    proposals.append((g, prop))
        for g, prop in proposals:
            mesh.positions[g] = prop
            moved += 1
    return moved


def laplacian_smooth(mesh, config, iterations=1, lam=0.5):
    """Interior-vertex Laplacian smoothing; boundary vertices stay put."""
    cos_guard = float(np.cos(np.radians(config.smoothing_normal_guard_deg)))
    moved = 0
    for _ in range(iterations):
        em = mesh.edge_map()
        vmap = mesh.vertex_tris()
        boundary = set()
        neighbors = {}
        for (u, v), tids in em.items():
            if len(tids) == 1:
                boundary.add(u)
                boundary.add(v)
            neighbors.setdefault(u, set()).add(v)
            neighbors.setdefault(v, set()).add(u)
        proposals = []
        for g in sorted(neighbors):
            if g in boundary:
                continue
            ring = sorted(neighbors[g])
            target = np.mean(mesh.positions[ring], axis=0)
            prop = mesh.positions[g] + lam * (target - mesh.positions[g])
            if _move_keeps_normals(mesh, vmap, g, prop, cos_guard):
                proposals.append((g, prop))
        for g, prop in proposals:
            mesh.positions[g] = prop
            moved += 1
    return moved


# ---------------------------------------------------------------------------
# stats


def component_stats(mesh):
    """Per-component counts plus Euler characteristic and boundary loop
    tally, ordered like mesh.components()."""
    comp_of, comps = mesh.components()
    loop_count = {}
    vmap = mesh.vertex_tris()
    for loop in boundary_loops(mesh):
        comp = comp_of[vmap[loop[0]][0]]
        loop_count[comp] = loop_count.get(comp, 0) + 1
    stats = []
    for i, tids in enumerate(comps):
        verts = set()
        edges = set()
        for t in tids:
            a, b, c = mesh.tri_verts[t]
            verts.update((a, b, c))
            for u, v in ((a, b), (b, c), (c, a)):
                edges.add((u, v) if u < v else (v, u))
        loops = loop_count.get(i, 0)
        stats.append({
            "triangles": len(tids),
            "vertices": len(verts),
            "edges": len(edges),
            "euler": len(verts) - len(edges) + len(tids),
            "boundary_loops": loops,
            "closed": loops == 0,
        })
    return stats


# ---------------------------------------------------------------------------
# OBJ


def _fmt(x):
    x = float(x)
    if x == 0.0:
        x = 0.0
    return format(x, ".9g")


def _canonical_face(verts):
    """Rotate so the smallest vertex leads, preserving winding."""
    k = verts.index(min(verts))
    return verts[k:] + verts[:k]


def export_obj(mesh, path):
    """Write active triangles as a deterministic OBJ: vertices in
    ascending id order, one group per connected component, faces rotated
    to lead with their smallest vertex."""
    active = mesh.active_ids()
    comp_of, comps = mesh.components()
    used = sorted({v for t in active for v in mesh.tri_verts[t]})
    remap = {g: i + 1 for i, g in enumerate(used)}

    # area-weighted vertex normals over the oriented surface
    acc = np.zeros((len(used), 3))
    row = {g: i for i, g in enumerate(used)}
    for t in active:
        a, b, c = mesh.tri_verts[t]
        n = geometry.triangle_normal(mesh.positions[a], mesh.positions[b],
                                     mesh.positions[c])
        for g in (a, b, c):
            acc[row[g]] += n
    norms = np.zeros_like(acc)
    for i in range(len(used)):
        u, ok = geometry.unit(acc[i])
        norms[i] = u if ok else np.array([0.0, 0.0, 1.0])

    comp_faces = []
    for tids in comps:
        faces = sorted(_canonical_face(list(mesh.tri_verts[t]))
                       for t in tids)
        comp_faces.append(faces)
    comp_faces.sort(key=lambda fs: fs[0])

    lines = []
    for g in used:
        p = mesh.positions[g]
        lines.append(f"v {_fmt(p[0])} {_fmt(p[1])} {_fmt(p[2])}")
    for i in range(len(used)):
        n = norms[i]
        lines.append(f"vn {_fmt(n[0])} {_fmt(n[1])} {_fmt(n[2])}")
    for ci, faces in enumerate(comp_faces):
        lines.append(f"g component_{ci:03d}")
        for f in faces:
            ids = [remap[g] for g in f]
            lines.append("f " + " ".join(f"{i}//{i}" for i in ids))
    text = "\n".join(lines) + "\n"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
    return len(used), sum(len(fs) for fs in comp_faces)


def load_obj(path):
    """Read positions, faces, and optional normals from an OBJ file.
    Faces with more than three vertices are fanned from the first."""
    positions = []
    normals = []
    faces = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            parts = line.strip().split()
            if not parts or parts[0].startswith("#"):
                continue
            if parts[0] == "v":
                positions.append([float(x) for x in parts[1:4]])
            elif parts[0] == "vn":
                normals.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                idx = []
                for tok in parts[1:]:
                    s = tok.split("/")[0]
                    i = int(s)
                    idx.append(i - 1 if i > 0 else len(positions) + i)
                for k in range(1, len(idx) - 1):
                    faces.append((idx[0], idx[k], idx[k + 1]))
    pos = np.asarray(positions, dtype=np.float64)
    nrm = np.asarray(normals, dtype=np.float64) if normals else None
    return pos, faces, nrm


def mesh_from_arrays(positions, faces, normals=None, phase="import"):
    """Wrap raw geometry in a SurfaceMesh (for evaluating OBJ files)."""
    from .mesher import KIND_STROKE, SurfaceMesh

    mesh = SurfaceMesh()
    n = len(positions)
    if normals is None or len(normals) != n:
        normals = np.tile(np.array([0.0, 0.0, 1.0]), (n, 1))
    origin = np.stack([np.full(n, -1, dtype=np.int64),
                       np.arange(n, dtype=np.int64)], axis=1)
    mesh.add_vertices(np.asarray(positions, dtype=np.float64), normals,
                      np.ones(n), np.zeros((n, 3)), origin, KIND_STROKE)
    for f in faces:
        mesh.add_triangle(f[0], f[1], f[2], phase=phase)
    return mesh
