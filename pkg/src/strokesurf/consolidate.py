"""Consolidating overlapping strips into a manifold surface layer.

Meshing happily emits strips from both participants of a symmetric
match, around T-junctions, and across self-adjacent folds. This module
finds pairs of triangles that cannot coexist on a manifold surface,
declares everything near such conflicts undecided, and solves one
correlation-clustering problem per conflicted region: triangles
clustered together with the designated output node stay, the rest go.
Incompatible pairs may never share a cluster, which is what makes the
retained set manifold-safe. A final deterministic sweep clears any
residual non-manifold configuration the pairwise criteria cannot
express (three wide-angle sheets on one edge, pinched vertex fans).
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

from . import geometry, scoring
from .matcher import pair_sigmas
from .mesher import OUTPUT, REMOVED, UNDECIDED

OUT_NODE = -1

# largest conflict component solved exactly; bigger ones get the
# greedy contraction solver
EXACT_NODE_LIMIT = 12


class InvariantError(RuntimeError):
    """An internal guarantee was violated; indicates a pipeline bug."""


def _gid_flat_map(cs):
    """gid -> flat index for the current chain set."""
    return {int(g): i for i, g in enumerate(cs.gid)}


def _apex_side_current(cs, gid2flat, edge, apex_pos, width_hint):
    """Side of an apex against the edge chain's binormals, evaluated in
    the current phase's frames. 0 when the offset is too small to call."""
    fa = gid2flat.get(edge[0])
    fb = gid2flat.get(edge[1])
    if fa is None or fb is None:
        return 0
    off = 0.5 * (np.dot(apex_pos - cs.pos[fa], cs.bin[fa])
                 + np.dot(apex_pos - cs.pos[fb], cs.bin[fb]))
    if abs(off) < 1e-9 * max(1.0, width_hint):
        return 0
    return 1 if off > 0 else -1


def _third_vertex(tri, edge):
    for v in tri:
        if v not in edge:
            return v
    return None


def _crit1_same_edge_same_side(mesh, cs, gid2flat, t1, t2):
    """Both triangles hang on one stroke edge with apexes on one side."""
    p1 = mesh.tri_prov[t1]
    p2 = mesh.tri_prov[t2]
    if p1 is None or p2 is None:
        return False
    e1 = tuple(sorted(p1.edge))
    e2 = tuple(sorted(p2.edge))
    if e1 != e2:
        return False
    a1 = _third_vertex(mesh.tri_verts[t1], e1)
    a2 = _third_vertex(mesh.tri_verts[t2], e2)
    if a1 is None or a2 is None:
        return False
    w = float(mesh.widths[e1[0]])
    s1 = _apex_side_current(cs, gid2flat, e1, mesh.positions[a1], w)
    s2 = _apex_side_current(cs, gid2flat, e1, mesh.positions[a2], w)
    return s1 != 0 and s1 == s2


def _crit2_overlapping_fans(mesh, cs, gid2flat, t1, t2, shared_gid):
    """Triangles from different stroke edges share one vertex, lie on the
    same side of its stroke, and one's projected edge crosses the other."""
    p1 = mesh.tri_prov[t1]
    p2 = mesh.tri_prov[t2]
    if p1 is None or p2 is None:
        return False
    if tuple(sorted(p1.edge)) == tuple(sorted(p2.edge)):
        return False
    fq = gid2flat.get(shared_gid)
    if fq is None or not cs.ok[fq]:
        return False
    b = cs.bin[fq]
    bx, by, bz = float(b[0]), float(b[1]), float(b[2])
    qpos = cs.pos[fq]
    qx, qy, qz = float(qpos[0]), float(qpos[1]), float(qpos[2])
    eps = 1e-9 * max(1.0, float(cs.w[fq]))
    pos = mesh.positions

    def side_of(tid):
        va, vb, vc = mesh.tri_verts[tid]
        cx = (pos[va, 0] + pos[vb, 0] + pos[vc, 0]) / 3.0
        cy = (pos[va, 1] + pos[vb, 1] + pos[vc, 1]) / 3.0
        cz = (pos[va, 2] + pos[vb, 2] + pos[vc, 2]) / 3.0
        off = (cx - qx) * bx + (cy - qy) * by + (cz - qz) * bz
        if abs(off) < eps:
            return 0
        return 1 if off > 0 else -1

    s1 = side_of(t1)
    s2 = side_of(t2)
    if s1 == 0 or s2 == 0 or s1 != s2:
        return False

    def crosses(ta, tb):
        va = mesh.tri_verts[ta]
        pb = [mesh.positions[v] for v in mesh.tri_verts[tb]]
        for v in va:
            if v == shared_gid:
                continue
            if geometry.segment_crosses_triangle_interior(
                    mesh.positions[shared_gid], mesh.positions[v],
                    pb[0], pb[1], pb[2]):
                return True
        return False

    return crosses(t1, t2) or crosses(t2, t1)


def _crit3_sharp_shared_edge(mesh, config, t1, t2, edge):
    """Any two triangles meeting at an edge folded sharper than the
    dihedral threshold conflict."""
    a, b = edge
    c = _third_vertex(mesh.tri_verts[t1], edge)
    d = _third_vertex(mesh.tri_verts[t2], edge)
    if c is None or d is None:
        return False
    di = geometry.dihedral_deg(mesh.positions[a], mesh.positions[b],
                               mesh.positions[c], mesh.positions[d])
    return di < config.dihedral_min_deg


def incompatible(mesh, cs, config, t1, t2, gid2flat=None):
    """Full pairwise incompatibility test. Returns (flag, entity) where
    entity is ("edge", (a, b)) or ("vertex", g) naming the shared item."""
    if gid2flat is None:
        gid2flat = _gid_flat_map(cs)
    v1 = set(mesh.tri_verts[t1])
    v2 = set(mesh.tri_verts[t2])
    shared = sorted(v1 & v2)
    if len(shared) == 2:
        edge = (shared[0], shared[1])
        if _crit1_same_edge_same_side(mesh, cs, gid2flat, t1, t2):
            return True, ("edge", edge)
        if _crit3_sharp_shared_edge(mesh, config, t1, t2, edge):
            return True, ("edge", edge)
        return False, None
    if len(shared) == 1:
        q = shared[0]
        if _crit2_overlapping_fans(mesh, cs, gid2flat, t1, t2, q):
            return True, ("vertex", q)
        return False, None
    return False, None


def find_incompatible_pairs(mesh, cs, config, frozen=frozenset()):
    """All incompatible pairs among active triangles, skipping pairs
    fully inside the frozen (prior-phase) set."""
    gid2flat = _gid_flat_map(cs)
    active = mesh.active_ids()
    pairs = []
    seen = set()

    def consider(t1, t2):
        if t1 > t2:
            t1, t2 = t2, t1
        if (t1, t2) in seen:
            return
        seen.add((t1, t2))
        if t1 in frozen and t2 in frozen:
            return
        flag, entity = incompatible(mesh, cs, config, t1, t2, gid2flat)
        if flag:
            pairs.append((t1, t2, entity))

    for edge, tids in sorted(mesh.edge_map().items()):
        for i in range(len(tids)):
            fi = tids[i] in frozen
            for j in range(i + 1, len(tids)):
                if fi and tids[j] in frozen:
                    continue
                consider(tids[i], tids[j])

    for gid, tids in sorted(mesh.vertex_tris(active).items()):
        if len(tids) < 2 or all(t in frozen for t in tids):
            continue
        for i in range(len(tids)):
            fi = tids[i] in frozen
            vi = set(mesh.tri_verts[tids[i]])
            for j in range(i + 1, len(tids)):
                if fi and tids[j] in frozen:
                    continue
                if len(vi & set(mesh.tri_verts[tids[j]])) == 1:
                    consider(tids[i], tids[j])
    return pairs


def classify_undecided(mesh, pairs, frozen=frozenset()):
    """Mark conflict participants and everything touching a conflict's
    shared edge/vertex as undecided; the rest stays output."""
    active = mesh.active_ids()
    vmap = mesh.vertex_tris(active)
    undecided = set()
    for t1, t2, entity in pairs:
        for t in (t1, t2):
            if t not in frozen:
                undecided.add(t)
        verts = entity[1] if entity[0] == "edge" else (entity[1],)
        for v in verts:
            for t in vmap.get(v, ()):
                if t not in frozen:
                    undecided.add(t)
    for t in undecided:
        mesh.tri_state[t] = UNDECIDED
    for t in active:
        if t not in undecided:
            mesh.tri_state[t] = OUTPUT
    return undecided


def undecided_components(mesh, undecided):
    """Group undecided triangles connected through any shared vertex."""
    by_vertex = {}
    for t in undecided:
        for v in mesh.tri_verts[t]:
            by_vertex.setdefault(v, []).append(t)
    parent = {t: t for t in undecided}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for tids in by_vertex.values():
        for t in tids[1:]:
            r1, r2 = find(tids[0]), find(t)
            if r1 != r2:
                parent[max(r1, r2)] = min(r1, r2)
    groups = {}
    for t in undecided:
        groups.setdefault(find(t), []).append(t)
    return [sorted(groups[r]) for r in sorted(groups)]


@dataclass
class ConflictGraph:
    """Weighted arcs over undecided triangles plus the output node.
    Arcs in `hard` must end up in different clusters."""

    nodes: list
    arcs: dict = field(default_factory=dict)
    hard: set = field(default_factory=set)

    def add_arc(self, u, v, w, hard=False):
        key = (u, v) if u < v else (v, u)
        self.arcs[key] = self.arcs.get(key, 0.0) + w
        if hard:
            self.hard.add(key)


def _emission_score(mesh, cs, config, tid):
    """M(t): vertex scores of the two edge endpoints against the apex,
    on the triangle's recorded side, in linear domain."""
    prov = mesh.tri_prov[tid]
    if prov is None:
        return 0.0
    (ci, ia), (cj, ib) = prov.edge_ref
    aref = prov.apex_ref
    fa = cs.flat(ci, ia)
    fb = cs.flat(cj, ib)
    fq = cs.flat(aref.chain, aref.index)
    if not cs.ok[fq]:
        return 0.0
    total = 0.0
    for fp in (fa, fb):
        if not cs.ok[fp]:
            continue
        sig = pair_sigmas(cs, fp, np.array([fq]), config)
        log = scoring.vertex_scores_log_arrays(
            cs.pos[fp], cs.tan[fp], cs.bin[fp], cs.w[fp], prov.side,
            cs.pos[[fq]], cs.tan[[fq]], cs.bin[[fq]], cs.w[[fq]], sig)
        total += float(np.exp(log[0]))
    return total


def build_conflict_graph(mesh, cs, config, component, pairs, undecided):
    """Arc weights: incompatible pairs get incompatible_weight (hard),
    compatible shared-edge pairs get compatible_weight, and every node
    gets an output arc of M(t) plus its count of edges shared with
    already-output triangles."""
    comp = set(component)
    graph = ConflictGraph(nodes=sorted(comp))

    for t1, t2, _ in pairs:
        in1, in2 = t1 in comp, t2 in comp
        if in1 and in2:
            graph.add_arc(t1, t2, config.incompatible_weight, hard=True)
        elif in1 or in2:
            t_in = t1 if in1 else t2
            t_out = t2 if in1 else t1
            if mesh.is_active(t_out) and t_out not in comp:
                # conflicting with a kept triangle: may not join output
                graph.add_arc(OUT_NODE, t_in, config.incompatible_weight,
                              hard=True)

    em = mesh.edge_map()
    incompat_keys = {(min(a, b), max(a, b)) for a, b, _ in pairs}
    seen_edges = set()
    for t in sorted(comp):
        verts = mesh.tri_verts[t]
        for a, b in ((0, 1), (1, 2), (2, 0)):
            u, v = verts[a], verts[b]
            key = (u, v) if u < v else (v, u)
            if key in seen_edges:
                continue
            seen_edges.add(key)
            tids = em.get(key, ())
            for i in range(len(tids)):
                for j in range(i + 1, len(tids)):
                    t1, t2 = sorted((tids[i], tids[j]))
                    if (t1 in comp and t2 in comp
                            and (t1, t2) not in incompat_keys):
                        graph.add_arc(t1, t2, config.compatible_weight)

    for t in graph.nodes:
        c_count = 0
        verts = mesh.tri_verts[t]
        for a, b in ((0, 1), (1, 2), (2, 0)):
            u, v = verts[a], verts[b]
            key = (u, v) if u < v else (v, u)
            for other in em.get(key, ()):
                if other != t and mesh.tri_state[other] == OUTPUT:
                    c_count += 1
        graph.add_arc(OUT_NODE, t, _emission_score(mesh, cs, config, t)
                      + c_count)
    return graph


def clustering_objective(graph, assign):
    """Sum of arc weights whose endpoints share a cluster."""
    total = 0.0
    for (u, v), w in graph.arcs.items():
        if assign[u] == assign[v]:
            total += w
    return total


def solve_clustering(graph):
    """Partition the conflict graph, maximizing the total weight of arcs
    kept inside clusters while never merging across a hard arc.

    Small graphs are solved to optimality by branch and bound; larger
    ones by greedy additive edge contraction followed by single-node
    moves accepted only when they increase the objective, repeated to a
    fixed point. Both paths are deterministic, with ties falling to the
    smallest node id. Returns node -> cluster id; cluster ids are the
    minimum node id of each cluster."""
    if len(graph.nodes) <= EXACT_NODE_LIMIT:
        return _solve_exact(graph)
    return _solve_greedy(graph)


def _solve_exact(graph):
    """Depth-first branch and bound over set partitions.

    Entities are the output node followed by graph nodes in ascending
    id. Each node in turn joins an existing cluster or opens a new one;
    the bound credits every arc still touching an unassigned node at
    its positive part. The first optimum found is kept, so ties resolve
    toward earlier branches, i.e. smaller ids grouped with the output
    node."""
    nodes = sorted(graph.nodes)
    n = len(nodes)
    ids = [OUT_NODE] + nodes
    idx = {v: i for i, v in enumerate(ids)}
    w = [[0.0] * (n + 1) for _ in range(n + 1)]
    hard = [0] * (n + 1)
    for (u, v), arc_w in graph.arcs.items():
        a, b = idx[u], idx[v]
        w[a][b] += arc_w
        w[b][a] += arc_w
    for (u, v) in graph.hard:
        a, b = idx[u], idx[v]
        hard[a] |= 1 << b
        hard[b] |= 1 << a

    # optimistic remainder: arcs whose later endpoint is still open,
    # counted at their positive part
    suffix = [0.0] * (n + 2)
    for v in range(n, 0, -1):
        suffix[v] = suffix[v + 1] + sum(
            max(w[u][v], 0.0) for u in range(v))

    masks = [1]
    sums = [w[0][:]]
    assign = [0] * (n + 1)
    best_obj = -np.inf
    best = None

    def dfs(k, cur):
        nonlocal best_obj, best
        if cur + suffix[k] <= best_obj:
            return
        if k > n:
            best_obj = cur
            best = assign.copy()
            return
        bit = 1 << k
        row_k = w[k]
        for ci in range(len(masks)):
            if hard[k] & masks[ci]:
                continue
            assign[k] = ci
            masks[ci] |= bit
            row = sums[ci]
            gain = row[k]
            for v in range(k + 1, n + 1):
                row[v] += row_k[v]
            dfs(k + 1, cur + gain)
            for v in range(k + 1, n + 1):
                row[v] -= row_k[v]
            masks[ci] &= ~bit
        assign[k] = len(masks)
        masks.append(bit)
        sums.append([0.0] * (k + 1) + row_k[k + 1:])
        dfs(k + 1, cur)
        masks.pop()
        sums.pop()

    dfs(1, 0.0)

    groups = {}
    for i, ci in enumerate(best):
        groups.setdefault(ci, []).append(ids[i])
    cluster = {}
    for mem in groups.values():
        target = min(mem)
        for node in mem:
            cluster[node] = target
    return cluster


def _solve_greedy(graph):
    nodes = [OUT_NODE] + list(graph.nodes)
    cluster = {n: n for n in nodes}
    members = {n: {n} for n in nodes}
    weight = {}
    adj = {n: set() for n in nodes}
    forbidden = {n: set() for n in nodes}
    for (u, v), w in graph.arcs.items():
        key = (u, v)
        weight[key] = w
        adj[u].add(v)
        adj[v].add(u)
        if key in graph.hard:
            forbidden[u].add(v)
            forbidden[v].add(u)

    heap = [(-w, k) for k, w in weight.items() if w > 0]
    heapq.heapify(heap)
    while heap:
        negw, (a, b) = heapq.heappop(heap)
        if a not in members or b not in members:
            continue
        if weight.get((a, b)) != -negw or -negw <= 0:
            continue
        if b in forbidden[a]:
            continue
        # merge b into a (a < b by arc key construction)
        members[a] |= members.pop(b)
        for n in members[a]:
            cluster[n] = a
        forbidden[a] |= forbidden.pop(b)
        for c in list(forbidden):
            if b in forbidden[c]:
                forbidden[c].discard(b)
                forbidden[c].add(a)
        for c in list(adj[b]):
            adj[c].discard(b)
            if c == a:
                continue
            wkey_b = (min(b, c), max(b, c))
            w_bc = weight.pop(wkey_b, 0.0)
            wkey_a = (min(a, c), max(a, c))
            weight[wkey_a] = weight.get(wkey_a, 0.0) + w_bc
            adj[a].add(c)
            adj[c].add(a)
            if weight[wkey_a] > 0:
                heapq.heappush(heap, (-weight[wkey_a], wkey_a))
        adj.pop(b, None)

    # local moves on the original graph until stable
    arcs_of = {n: [] for n in nodes}
    for (u, v), w in graph.arcs.items():
        arcs_of[u].append((v, w))
        arcs_of[v].append((u, w))
    hard_of = {n: set() for n in nodes}
    for (u, v) in graph.hard:
        hard_of[u].add(v)
        hard_of[v].add(u)

    for _ in range(100):
        moved = False
        for n in sorted(graph.nodes):
            cur = cluster[n]
            gain_cur = sum(w for (m, w) in arcs_of[n]
                           if cluster[m] == cur and m != n)
            options = {}
            for (m, w) in arcs_of[n]:
                tgt = cluster[m]
                if tgt == cur:
                    continue
                options[tgt] = options.get(tgt, 0.0) + w
            fresh = -10 - n  # label no renormalized cluster can carry
            options.setdefault(fresh, 0.0)
            best_tgt, best_delta = None, 1e-12
            for tgt in sorted(options):
                if tgt != fresh and any(cluster[h] == tgt
                                        for h in hard_of[n]):
                    continue
                delta = options[tgt] - gain_cur
                if delta > best_delta:
                    best_tgt, best_delta = tgt, delta
            if best_tgt is not None:
                cluster[n] = best_tgt
                # renormalize: cluster ids must remain min member ids
                remap = {}
                for node in nodes:
                    remap.setdefault(cluster[node], []).append(node)
                for cid, mem in remap.items():
                    target = min(mem)
                    for node in mem:
                        cluster[node] = target
                moved = True
        if not moved:
            break

    remap = {}
    for node in nodes:
        remap.setdefault(cluster[node], []).append(node)
    for cid, mem in remap.items():
        target = min(mem)
        for node in mem:
            cluster[node] = target
    return cluster


def apply_consolidation(mesh, cluster, component):
    """Keep undecided triangles clustered with the output node, remove
    the rest of the component."""
    out_cluster = cluster[OUT_NODE]
    kept = []
    for t in component:
        if cluster[t] == out_cluster:
            mesh.tri_state[t] = OUTPUT
            kept.append(t)
        else:
            mesh.remove(t)
    return kept


def repair_nonmanifold(mesh, frozen=frozenset()):
    """Public entry for the deterministic manifold repair net; used by
    the pipeline after orientation-driven removals."""
    return _repair_nonmanifold(mesh, frozen)


def _repair_nonmanifold(mesh, frozen):
    """Deterministically remove the newest triangles at any residual
    non-manifold edge or pinched vertex. The pairwise criteria cover the
    overwhelming majority of conflicts; this net guarantees the audit."""
    from . import mesh_ops

    removed = []
    for _ in range(64):
        changed = False
        em = mesh.edge_map()
        for edge in sorted(em):
            tids = [t for t in em[edge] if mesh.is_active(t)]
            while len(tids) > 2:
                pick = max(t for t in tids if t not in frozen) \
                    if any(t not in frozen for t in tids) else max(tids)
                mesh.remove(pick)
                removed.append(pick)
                tids.remove(pick)
                changed = True
        nm_edges, nm_vertices = mesh_ops.audit_manifold(mesh)
        if nm_edges:
            continue
        for v in nm_vertices:
            groups = mesh_ops.vertex_fan_groups(mesh, v)
            if len(groups) <= 1:
                continue
            def group_key(g):
                has_frozen = any(t in frozen for t in g)
                return (not has_frozen, -len(g), min(g))
            keep = sorted(groups, key=group_key)[0]
            for g in groups:
                if g is keep:
                    continue
                # losing groups go entirely, frozen or not: the audit
                # guarantee outranks keeping prior triangles
                for t in sorted(g):
                    mesh.remove(t)
                    removed.append(t)
                    changed = True
        if not changed:
            break
    return removed


def consolidate_mesh(mesh, cs, config, frozen=frozenset()):
    """Full consolidation pass. Returns (removed_count, undecided_count)."""
    from . import mesh_ops

    pairs = find_incompatible_pairs(mesh, cs, config, frozen)
    undecided = classify_undecided(mesh, pairs, frozen)
    removed = 0
    for component in undecided_components(mesh, undecided):
        graph = build_conflict_graph(mesh, cs, config, component, pairs,
                                     undecided)
        cluster = solve_clustering(graph)
        kept = apply_consolidation(mesh, cluster, component)
        removed += len(component) - len(kept)

    # retained conflicts would be a solver bug
    for t1, t2, _ in pairs:
        if mesh.is_active(t1) and mesh.is_active(t2):
            raise InvariantError(
                f"incompatible pair ({t1}, {t2}) survived consolidation")

    removed += len(_repair_nonmanifold(mesh, frozen))
    nm_edges, nm_vertices = mesh_ops.audit_manifold(mesh)
    if nm_edges or nm_vertices:
        raise InvariantError(
            f"non-manifold after consolidation: {len(nm_edges)} edges, "
            f"{len(nm_vertices)} vertices")
    return removed, len(undecided)
