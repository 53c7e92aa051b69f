"""Triangle-strip meshing of matched chains.

Every emitted triangle connects one polyline edge (p_i, p_i+1) of a
chain to an apex vertex q: consecutive matches to the same target vertex
give a single triangle, consecutive target vertices give a quad split
along the better diagonal, and a jump across a short target section with
no internal matches gives a fan polygon. Quads folding sharper than the
dihedral threshold are discarded outright; everything else is cleaned up
later by consolidation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import geometry, scoring
from .matcher import Chain, VertexRef, pair_sigmas
from .scoring import Side

# triangle states
OUTPUT = 1
UNDECIDED = 0
REMOVED = 2

# vertex origin kinds
KIND_STROKE = 0
KIND_OFFSET = 1
KIND_RIBBON = 2


@dataclass(frozen=True)
class Provenance:
    """What a triangle hangs on: a chain edge and an apex, in the
    coordinate frame of the ChainSet of its phase."""

    phase: str
    edge: tuple                 # (gid, gid) in chain order
    apex: int                   # gid
    side: int                   # +1 / -1, apex side of the edge's chain
    edge_ref: tuple             # (VertexRef, VertexRef)
    apex_ref: VertexRef


@dataclass(frozen=True)
class Triangle:
    verts: tuple
    state: int
    phase: str
    prov: Optional[Provenance]


class SurfaceMesh:
    """Growable triangle soup over a global vertex table."""

    def __init__(self):
        self.positions = np.zeros((0, 3))
        self.normals = np.zeros((0, 3))
        self.widths = np.zeros(0)
        self.colors = np.zeros((0, 3))
        self.origin = np.zeros((0, 2), dtype=np.int64)
        self.origin_kind = np.zeros(0, dtype=np.int64)

        self.tri_verts = []
        self.tri_state = []
        self.tri_phase = []
        self.tri_prov = []
        self._key_to_id = {}
        self._em = {}
        self._scale = None
        self.duplicates_skipped = 0
        self.quads_rejected = 0

    # ---- vertices ----

    @classmethod
    def from_drawing(cls, drawing):
        mesh = cls()
        for sid, s in enumerate(drawing.strokes):
            n = len(s)
            origin = np.stack([np.full(n, sid, dtype=np.int64),
                               np.arange(n, dtype=np.int64)], axis=1)
            mesh.add_vertices(s.points, s.normals, s.widths,
                              np.tile(s.color, (n, 1)), origin, KIND_STROKE)
        return mesh

    def add_vertices(self, pos, nrm, w, col, origin, kind):
        pos = np.atleast_2d(np.asarray(pos, dtype=np.float64))
        n = len(pos)
        base = len(self.positions)
        self.positions = np.concatenate([self.positions, pos])
        self.normals = np.concatenate([self.normals,
                                       np.atleast_2d(np.asarray(nrm))])
        self.widths = np.concatenate([self.widths, np.atleast_1d(w)])
        self.colors = np.concatenate([self.colors,
                                      np.atleast_2d(np.asarray(col))])
        self.origin = np.concatenate([self.origin,
                                      np.atleast_2d(np.asarray(origin))])
        self.origin_kind = np.concatenate(
            [self.origin_kind, np.full(n, kind, dtype=np.int64)])
        self._scale = None
        return np.arange(base, base + n, dtype=np.int64)

    def vertex_count(self):
        return len(self.positions)

    def scale(self):
        if self._scale is None:
            self._scale = max(geometry.bbox_diagonal(self.positions), 1e-12)
        return self._scale

    # ---- triangles ----

    def add_triangle(self, a, b, c, phase, prov=None, state=OUTPUT):
        a, b, c = int(a), int(b), int(c)
        if a == b or b == c or a == c:
            return None
        area = geometry.triangle_area(self.positions[a], self.positions[b],
                                      self.positions[c])
        if area < (1e-12 * self.scale()) ** 2:
            return None
        key = tuple(sorted((a, b, c)))
        old = self._key_to_id.get(key)
        if old is not None and self.tri_state[old] != REMOVED:
            self.duplicates_skipped += 1
            return None
        tid = len(self.tri_verts)
        self.tri_verts.append((a, b, c))
        self.tri_state.append(state)
        self.tri_phase.append(phase)
        self.tri_prov.append(prov)
        self._key_to_id[key] = tid
        for u, v in ((a, b), (b, c), (c, a)):
            ekey = (u, v) if u < v else (v, u)
            self._em.setdefault(ekey, []).append(tid)
        return tid

    def triangle(self, tid):
        return Triangle(self.tri_verts[tid], self.tri_state[tid],
                        self.tri_phase[tid], self.tri_prov[tid])

    def remove(self, tid):
        if self.tri_state[tid] == REMOVED:
            return
        self.tri_state[tid] = REMOVED
        a, b, c = self.tri_verts[tid]
        for u, v in ((a, b), (b, c), (c, a)):
            ekey = (u, v) if u < v else (v, u)
            # empty lists stay so iterators never see a key vanish
            self._em[ekey].remove(tid)

    def is_active(self, tid):
        return self.tri_state[tid] != REMOVED

    def active_ids(self):
        return [i for i, s in enumerate(self.tri_state) if s != REMOVED]

    def active_count(self):
        return sum(1 for s in self.tri_state if s != REMOVED)

    def flip(self, tid):
        a, b, c = self.tri_verts[tid]
        self.tri_verts[tid] = (a, c, b)

    def edge_map(self, tri_ids=None):
        """Undirected edge -> list of incident active triangle ids.

        Without tri_ids this returns the live map maintained by
        add_triangle/remove; treat it as read-only. Keys whose last
        triangle was removed remain with an empty list."""
        if tri_ids is None:
            return self._em
        edges = {}
        for tid in tri_ids:
            a, b, c = self.tri_verts[tid]
            for u, v in ((a, b), (b, c), (c, a)):
                key = (u, v) if u < v else (v, u)
                edges.setdefault(key, []).append(tid)
        return edges

    def vertex_tris(self, tri_ids=None):
        if tri_ids is None:
            tri_ids = self.active_ids()
        out = {}
        for tid in tri_ids:
            for v in self.tri_verts[tid]:
                out.setdefault(v, []).append(tid)
        return out

    def components(self):
        """Edge-connected components of active triangles. Returns
        (comp_of: dict tid -> comp index, comps: list of tid lists)."""
        active = self.active_ids()
        parent = {t: t for t in active}

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        def union(x, y):
            rx, ry = find(x), find(y)
            if rx != ry:
                parent[max(rx, ry)] = min(rx, ry)

        for tids in self.edge_map().values():
            for t in tids[1:]:
                union(tids[0], t)
        groups = {}
        for t in active:
            groups.setdefault(find(t), []).append(t)
        comps = [sorted(groups[r]) for r in sorted(groups)]
        comp_of = {}
        for i, tids in enumerate(comps):
            for t in tids:
                comp_of[t] = i
        return comp_of, comps

    def triangle_normalized_normal(self, tid):
        a, b, c = self.tri_verts[tid]
        n = geometry.triangle_normal(self.positions[a], self.positions[b],
                                     self.positions[c])
        u, _ = geometry.unit(n)
        return u


def _apex_side(cs, edge_ref, apex_pos):
    """Side of an apex relative to a chain edge, against the chain's
    binormal averaged over the edge endpoints. Near-zero offsets return
    0 (no side)."""
    (ci, ia), (_, ib) = edge_ref
    base = int(cs.offsets[ci])
    fa, fb = base + ia, base + ib
    off = (np.dot(apex_pos - cs.pos[fa], cs.bin[fa])
           + np.dot(apex_pos - cs.pos[fb], cs.bin[fb])) * 0.5
    if abs(off) < 1e-9 * max(1.0, float(cs.w[fa])):
        return 0
    return 1 if off > 0 else -1


class _Emitter:
    """Shared state for one meshing invocation."""

    def __init__(self, mesh, cs, config, phase):
        self.mesh = mesh
        self.cs = cs
        self.config = config
        self.phase = phase

    def _prov(self, ci, ia, ib, apex_flat, match_side):
        cs = self.cs
        base = int(cs.offsets[ci])
        edge_ref = (VertexRef(ci, ia), VertexRef(ci, ib))
        apex_ref = cs.ref(apex_flat)
        side = _apex_side(cs, edge_ref, cs.pos[apex_flat])
        if side == 0:
            side = int(match_side)
        return Provenance(
            phase=self.phase,
            edge=(int(cs.gid[base + ia]), int(cs.gid[base + ib])),
            apex=int(cs.gid[apex_flat]),
            side=side,
            edge_ref=edge_ref,
            apex_ref=apex_ref,
        )

    def tri_on_edge(self, ci, ia, ib, apex_flat, match_side):
        cs = self.cs
        base = int(cs.offsets[ci])
        prov = self._prov(ci, ia, ib, apex_flat, match_side)
        return self.mesh.add_triangle(
            cs.gid[base + ia], cs.gid[base + ib], cs.gid[apex_flat],
            self.phase, prov)

    def quad(self, ci, ia, ib, qa_flat, qb_flat, match_side):
        """Quad cycle (p_ia, p_ib, q_b, q_a); split along the diagonal
        with the larger minimum interior angle; discard the whole quad
        when the chosen split folds sharper than the threshold."""
        cs = self.cs
        base = int(cs.offsets[ci])
        pa = cs.pos[base + ia]
        pb = cs.pos[base + ib]
        qa = cs.pos[qa_flat]
        qb = cs.pos[qb_flat]

        # diagonal 1: (p_ia, q_b) -> (pa, pb, qb) + (pa, qb, qa)
        min1 = min(geometry.min_interior_angle_deg(pa, pb, qb),
                   geometry.min_interior_angle_deg(pa, qb, qa))
        di1 = geometry.dihedral_deg(pa, qb, pb, qa)
        # diagonal 2: (p_ib, q_a) -> (pa, pb, qa) + (pb, qb, qa)
        min2 = min(geometry.min_interior_angle_deg(pa, pb, qa),
                   geometry.min_interior_angle_deg(pb, qb, qa))
        di2 = geometry.dihedral_deg(pb, qa, pa, qb)

        gid_pa = int(cs.gid[base + ia])
        gid_pb = int(cs.gid[base + ib])
        gid_qa = int(cs.gid[qa_flat])
        gid_qb = int(cs.gid[qb_flat])
        key1 = tuple(sorted((gid_pa, gid_qb)))
        key2 = tuple(sorted((gid_pb, gid_qa)))

        if abs(min1 - min2) > 1e-12:
            use1 = min1 > min2
        elif abs(abs(180.0 - di1) - abs(180.0 - di2)) > 1e-12:
            use1 = abs(180.0 - di1) < abs(180.0 - di2)
        else:
            use1 = key1 <= key2

        dihedral = di1 if use1 else di2
        if dihedral < self.config.dihedral_min_deg:
            self.mesh.quads_rejected += 1
            return

        qa_ref = cs.ref(qa_flat)
        qb_ref = cs.ref(qb_flat)
        tci = qa_ref.chain
        if use1:
            self.tri_on_edge(ci, ia, ib, qb_flat, match_side)
            self.tri_on_edge(tci, qa_ref.index, qb_ref.index,
                             int(cs.offsets[ci]) + ia, match_side)
        else:
            self.tri_on_edge(ci, ia, ib, qa_flat, match_side)
            self.tri_on_edge(tci, qa_ref.index, qb_ref.index,
                             int(cs.offsets[ci]) + ib, match_side)

    def polygon(self, ci, ia, ib, qa_flat, qb_flat, table, match_side):
        """Fan a section of the target chain between two non-consecutive
        matched vertices, provided the section has no internal matches."""
        cs = self.cs
        qa_ref = cs.ref(qa_flat)
        qb_ref = cs.ref(qb_flat)
        tci = qa_ref.chain
        tchain = cs.chains[tci]
        nt = len(tchain)
        ja, jb = qa_ref.index, qb_ref.index

        delta = jb - ja
        if tchain.cyclic:
            fwd = delta % nt
            bwd = (-delta) % nt
            if fwd <= bwd:
                steps, step = fwd, 1
            else:
                steps, step = bwd, -1
        else:
            steps, step = abs(delta), 1 if delta > 0 else -1
        if steps < 2:
            return

        idxs = [(ja + step * k) % nt if tchain.cyclic else ja + step * k
                for k in range(steps + 1)]
        inside = set(idxs[1:-1])
        tbase = int(cs.offsets[tci])
        for u in inside:
            for side_key in ((tci, 1), (tci, -1)):
                arr = table.matches.get(side_key)
                if arr is None or arr[u] < 0:
                    continue
                m = arr[u]
                if cs.chain_id[m] == tci and int(cs.index[m]) in inside:
                    return

        base = int(cs.offsets[ci])
        fa = base + ia
        fb = base + ib

        def fan_scores(p_flat):
            scores = []
            for j in idxs:
                fq = tbase + j
                if not cs.ok[fq]:
                    scores.append(0.0)
                    continue
                rel = cs.pos[p_flat] - cs.pos[fq]
                s = np.dot(rel, cs.bin[fq])
                sgn = 1 if s >= 0 else -1
                sig = pair_sigmas(cs, fq, np.array([p_flat]), self.config)
                log = scoring.vertex_scores_log_arrays(
                    cs.pos[fq], cs.tan[fq], cs.bin[fq], cs.w[fq], sgn,
                    cs.pos[[p_flat]], cs.tan[[p_flat]], cs.bin[[p_flat]],
                    cs.w[[p_flat]], sig)
                scores.append(float(np.exp(log[0])))
            return np.asarray(scores)

        s_a = fan_scores(fa)
        s_b = fan_scores(fb)
        pre = np.cumsum(s_a)
        suf = np.cumsum(s_b[::-1])[::-1]
        totals = pre + suf
        m_pos = int(np.argmax(totals))

        for k in range(len(idxs) - 1):
            j0, j1 = idxs[k], idxs[k + 1]
            apex = fa if k < m_pos else fb
            self.tri_on_edge(tci, j0, j1, apex, match_side)
        self.tri_on_edge(ci, ia, ib, tbase + idxs[m_pos], match_side)


def _emit_pairs(emitter, table, ci, side, match):
    cs = emitter.cs
    chain = cs.chains[ci]
    n = len(chain)
    pairs = [(i, i + 1) for i in range(n - 1)]
    if chain.cyclic and n > 2:
        pairs.append((n - 1, 0))
    for ia, ib in pairs:
        a = match[ia]
        b = match[ib]
        if a < 0 or b < 0:
            continue
        ca, cb = cs.chain_id[a], cs.chain_id[b]
        if ca != cb:
            continue
        if a == b:
            emitter.tri_on_edge(ci, ia, ib, a, side)
            continue
        ja, jb = int(cs.index[a]), int(cs.index[b])
        tchain = cs.chains[ca]
        dj = abs(jb - ja)
        if tchain.cyclic and len(tchain) > 2:
            dj = min(dj, len(tchain) - dj)
        if dj == 1:
            emitter.quad(ci, ia, ib, a, b, side)
        else:
            emitter.polygon(ci, ia, ib, a, b, table, side)


def mesh_from_matches(table, config, mesh=None, phase="stroke"):
    """Emit triangle strips for every matched chain pair in the table.
    Duplicate triangles (same vertex set) are inserted once."""
    cs = table.chainset
    if mesh is None:
        mesh = SurfaceMesh()
        mesh.add_vertices(cs.pos, cs.nrm, cs.w, cs.col,
                          np.stack([cs.chain_id, cs.index], axis=1),
                          KIND_STROKE)
    emitter = _Emitter(mesh, cs, config, phase)
    for (ci, side) in sorted(table.matches.keys(), key=lambda k: (k[0], -k[1])):
        _emit_pairs(emitter, table, ci, side, table.matches[(ci, side)])
    return mesh


# ---- crease-preserving variant ----

def _sections(cs, match):
    """Maximal runs of consecutive matched vertices with one target
    chain. Yields (start, end_inclusive, target_chain)."""
    n = len(match)
    i = 0
    while i < n:
        if match[i] < 0:
            i += 1
            continue
        t = int(cs.chain_id[match[i]])
        j = i
        while (j + 1 < n and match[j + 1] >= 0
               and int(cs.chain_id[match[j + 1]]) == t):
            j += 1
        yield i, j, t
        i = j + 1


def _section_is_crease(cs, base, match, i0, i1, config):
    """A matched section folds into a crease when the ribbon half-planes
    facing each other meet at a dihedral of at most crease_angle_deg,
    measured as the angle between the two facing directions."""
    cos_lim = math.cos(math.radians(config.crease_angle_deg))
    dots = []
    for x in range(i0, i1 + 1):
        fp = base + x
        fq = match[x]
        if fq < 0 or not cs.ok[fp] or not cs.ok[fq]:
            continue
        d = cs.pos[fq] - cs.pos[fp]
        sp = np.dot(d, cs.bin[fp])
        sq = np.dot(-d, cs.bin[fq])
        if abs(sp) < 1e-12 or abs(sq) < 1e-12:
            continue
        a_p = np.sign(sp) * cs.bin[fp]
        a_q = np.sign(sq) * cs.bin[fq]
        dots.append(float(np.dot(a_p, a_q)))
    if not dots:
        return False
    return float(np.mean(dots)) >= cos_lim - 1e-12


def _make_offset_chain(mesh, cs, source_ci, idx_range, dirs, offset_cache):
    """Create (or reuse) half-width offset vertices for a run of chain
    vertices and register them as a new chain with copied frames."""
    src = cs.chains[source_ci]
    base = int(cs.offsets[source_ci])
    gids = []
    pos = []
    for x, sgn in zip(idx_range, dirs):
        f = base + x
        key = (int(cs.gid[f]), int(sgn))
        if key in offset_cache:
            gids.append(offset_cache[key][0])
            pos.append(offset_cache[key][1])
            continue
        p = cs.pos[f] + 0.5 * cs.w[f] * sgn * cs.bin[f]
        gid = mesh.add_vertices(p[None, :], cs.nrm[f][None, :],
                                [cs.w[f]], cs.col[f][None, :],
                                np.asarray([(source_ci, x)]),
                                KIND_OFFSET)[0]
        offset_cache[key] = (int(gid), p)
        gids.append(int(gid))
        pos.append(p)
    idx = [base + x for x in idx_range]
    chain = Chain(
        gids=np.asarray(gids, dtype=np.int64),
        positions=np.asarray(pos),
        tangents=cs.tan[idx].copy(),
        normals=cs.nrm[idx].copy(),
        binormals=cs.bin[idx].copy(),
        widths=cs.w[idx].copy(),
        colors=cs.col[idx].copy(),
        ok=cs.ok[idx].copy(),
    )
    return cs.append_chain(chain)


def mesh_with_creases(table, config, mesh=None, phase="stroke"):
    """Like mesh_from_matches, but matched sections meeting at a sharp
    angle keep a crease: the stroke with more vertices along the section
    extends a half-width ribbon toward the partner, and that ribbon edge
    (not the spine) connects to the partner's spine."""
    cs = table.chainset
    if mesh is None:
        mesh = SurfaceMesh()
        mesh.add_vertices(cs.pos, cs.nrm, cs.w, cs.col,
                          np.stack([cs.chain_id, cs.index], axis=1),
                          KIND_STROKE)
    emitter = _Emitter(mesh, cs, config, phase)
    offset_cache = {}

    jobs = []      # (chain_id, side, working match array)
    extra = []     # synthetic jobs for offset chains

    keys = sorted(table.matches.keys(), key=lambda k: (k[0], -k[1]))
    for (ci, side) in keys:
        match = table.matches[(ci, side)].copy()
        base = int(cs.offsets[ci])
        for i0, i1, tci in _sections(cs, table.matches[(ci, side)]):
            if i1 - i0 < 1:
                continue
            if not _section_is_crease(cs, base, match, i0, i1, config):
                continue
            src_count = i1 - i0 + 1
            tidx = [int(cs.index[match[x]]) for x in range(i0, i1 + 1)]
            tgt_count = max(tidx) - min(tidx) + 1
            if src_count > tgt_count:
                keeper = ci
            elif tgt_count > src_count:
                keeper = tci
            else:
                keeper = min(ci, tci)

            run = list(range(i0, i1 + 1))
            if keeper == ci:
                # this stroke keeps its half ribbon toward the partner
                dirs = []
                for x in run:
                    f = base + x
                    d = cs.pos[match[x]] - cs.pos[f]
                    s = np.dot(d, cs.bin[f])
                    dirs.append(1 if s >= 0 else -1)
                oc = _make_offset_chain(mesh, cs, ci, run, dirs, offset_cache)
                obase = int(cs.offsets[oc])
                # ribbon quads spine -> offset polyline
                for k in range(len(run) - 1):
                    emitter.quad(ci, run[k], run[k + 1],
                                 obase + k, obase + k + 1, side)
                # strip from the ribbon edge to the partner spine
                omatch = np.full(len(run), -1, dtype=np.int64)
                for k, x in enumerate(run):
                    omatch[k] = match[x]
                extra.append((oc, side, omatch))
            else:
                # partner keeps the ribbon; redirect matches to offsets
                jmin, jmax = min(tidx), max(tidx)
                tbase = int(cs.offsets[tci])
                centroid = np.mean(
                    [cs.pos[base + x] for x in run], axis=0)
                t_run = list(range(jmin, jmax + 1))
                dirs = []
                for j in t_run:
                    f = tbase + j
                    s = np.dot(centroid - cs.pos[f], cs.bin[f])
                    dirs.append(1 if s >= 0 else -1)
                oc = _make_offset_chain(mesh, cs, tci, t_run, dirs,
                                        offset_cache)
                obase = int(cs.offsets[oc])
                for k in range(len(t_run) - 1):
                    emitter.quad(tci, t_run[k], t_run[k + 1],
                                 obase + k, obase + k + 1, side)
                for x in run:
                    j = int(cs.index[match[x]])
                    match[x] = obase + (j - jmin)
            # suppress the direct strip when this stroke was the keeper
            if keeper == ci:
                for x in run:
                    match[x] = -1
        jobs.append((ci, side, match))

    for ci, side, match in jobs:
        _emit_pairs(emitter, table, ci, side, match)
    for ci, side, match in extra:
        _emit_pairs(emitter, table, ci, side, match)
    return mesh
