"""End-to-end surfacing pipeline.

Order of operations: trim hooks, canonicalize stroke order, baseline
matching to find dominant neighbors, restricted matching, strip meshing
(optionally crease-preserving), consolidation, boundary extension
within components, small-hole closure, boundary smoothing, gap-spanning
matching across components with prior triangles frozen, orientation
repair, ribbons for strokes that contributed nothing, then optional
hole filling and smoothing.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import consolidate, matcher, mesh_ops, mesher
from .mesher import KIND_RIBBON, SurfaceMesh
from .stroke_model import (Config, Drawing, ValidationError,
                           canonical_stroke_order, ribbon_geometry,
                           trim_hooks)


@dataclass
class PipelineOptions:
    use_color: bool = False
    preserve_creases: bool = False
    skip_extension: bool = False
    close_holes_max_sides: int = 0     # 0 = only the built-in <=4 rule
    smooth_iterations: int = 0
    dump_dir: str = None
    config: Config = field(default_factory=Config)

    def __post_init__(self):
        if self.close_holes_max_sides < 0:
            raise ValidationError("close_holes_max_sides must be >= 0")
        if self.smooth_iterations < 0:
            raise ValidationError("smooth_iterations must be >= 0")


class _Tracker:
    """Collects per-stage triangle deltas and timings; optionally dumps
    the mesh after each stage (and on stage failure)."""

    def __init__(self, mesh, dump_dir):
        self.mesh = mesh
        self.dump_dir = dump_dir
        self.stats = []
        self._seq = 0

    def stage(self, name):
        return _StageScope(self, name)

    def dump_mesh(self, name, suffix="mesh"):
        if self.dump_dir is None or self.mesh.active_count() == 0:
            return
        import os
        path = os.path.join(self.dump_dir,
                            f"{self._seq:02d}_{name}_{suffix}.obj")
        mesh_ops.export_obj(self.mesh, path)

    def dump_json(self, name, suffix, payload):
        if self.dump_dir is None:
            return
        import os
        path = os.path.join(self.dump_dir,
                            f"{self._seq:02d}_{name}_{suffix}.json")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=1)


class _StageScope:
    def __init__(self, tracker, name):
        self.tracker = tracker
        self.name = name

    def __enter__(self):
        mesh = self.tracker.mesh
        self.t0 = time.perf_counter()
        self.tris_before = len(mesh.tri_verts)
        self.removed_before = sum(1 for s in mesh.tri_state
                                  if s == mesher.REMOVED)
        return self

    def __exit__(self, exc_type, exc, tb):
        mesh = self.tracker.mesh
        self.tracker.stats.append({
            "name": self.name,
            "triangles_added": len(mesh.tri_verts) - self.tris_before,
            "triangles_removed": sum(1 for s in mesh.tri_state
                                     if s == mesher.REMOVED)
            - self.removed_before,
            "seconds": time.perf_counter() - self.t0,
        })
        self.tracker._seq += 1
        if exc_type is None:
            self.tracker.dump_mesh(self.name)
        else:
            self.tracker.dump_mesh(self.name + "_failed")
        return False


def _stroke_triangle_presence(mesh, cs):
    """Which stroke chains own at least one active triangle vertex."""
    touched = set()
    for t in mesh.active_ids():
        for g in mesh.tri_verts[t]:
            touched.add(g)
    present = []
    for ci, chain in enumerate(cs.chains):
        present.append(any(int(g) in touched for g in chain.gids))
    return present


def _emit_ribbons(mesh, drawing, cs):
    """Strokes with no retained triangles contribute their original
    triangulated ribbons."""
    present = _stroke_triangle_presence(mesh, cs)
    added = 0
    for si, stroke in enumerate(drawing.strokes):
        if present[si]:
            continue
        corners, tris = ribbon_geometry(stroke)
        if len(tris) == 0:
            continue
        spine = np.repeat(np.arange(len(stroke)), 2)[:len(corners)]
        origin = np.stack([np.full(len(corners), si, dtype=np.int64),
                           np.arange(len(corners), dtype=np.int64)],
                          axis=1)
        gids = mesh.add_vertices(
            corners, stroke.normals[spine], stroke.widths[spine],
            np.tile(stroke.color, (len(corners), 1)), origin, KIND_RIBBON)
        for a, b, c in tris:
            if mesh.add_triangle(gids[a], gids[b], gids[c],
                                 phase="ribbon") is not None:
                added += 1
    return added


def _interpolated_fraction_exact(mesh, cs):
    """Fraction of trimmed stroke edges present as active mesh edges,
    by vertex id."""
    edges = {k for k, v in mesh.edge_map().items() if v}
    total = 0
    present = 0
    for chain in cs.chains:
        g = chain.gids
        for i in range(len(g) - 1):
            total += 1
            u, v = int(g[i]), int(g[i + 1])
            key = (u, v) if u < v else (v, u)
            if key in edges:
                present += 1
    return present / total if total else 0.0


def _match_stage(tracker, name, table):
    tracker.dump_json(name, "matches", _match_payload(table))


def _match_payload(table):
    payload = []
    for (ci, side) in sorted(table.matches, key=lambda k: (k[0], -k[1])):
        match = table.matches[(ci, side)]
        tag = "L" if int(side) == 1 else "R"
        for i, m in enumerate(match):
            if m >= 0:
                ref = table.chainset.ref(int(m))
                payload.append({"from": [ci, i], "side": tag,
                                "to": [int(ref.chain), int(ref.index)]})
    return payload


def run_pipeline(drawing, options=None):
    """Surface a drawing. Returns (mesh, report dict)."""
    options = options or PipelineOptions()
    config = options.config
    t_start = time.perf_counter()

    # trim hooks, then fix stroke identity by content so input order
    # cannot influence anything downstream
    trimmed = []
    dropped = 0
    for stroke in drawing.strokes:
        t = trim_hooks(stroke, config)
        if t is None:
            dropped += 1
        else:
            trimmed.append(t)
    if not trimmed:
        raise ValidationError("no strokes survive hook trimming")
    work = canonical_stroke_order(Drawing(strokes=trimmed))

    mesh = SurfaceMesh.from_drawing(work)
    tracker = _Tracker(mesh, options.dump_dir)
    if options.dump_dir is not None:
        import os
        os.makedirs(options.dump_dir, exist_ok=True)

    cs = matcher.stroke_chains(work)

    with tracker.stage("baseline_match"):
        cands = matcher.baseline_candidates(cs, config,
                                            color_cue=options.use_color)
        baseline = matcher.match_all(cands, config)
        freqs = matcher.matching_frequencies(baseline)
        neighbors = matcher.dominant_neighbors(baseline, freqs, config)
    _match_stage(tracker, "baseline_match", baseline)

    with tracker.stage("restricted_match"):
        cands = matcher.restricted_candidates(cs, config, neighbors,
                                              color_cue=options.use_color)
        table = matcher.match_all(cands, config)
    _match_stage(tracker, "restricted_match", table)

    with tracker.stage("strip_meshing"):
        if options.preserve_creases:
            mesher.mesh_with_creases(table, config, mesh=mesh)
        else:
            mesher.mesh_from_matches(table, config, mesh=mesh)

    with tracker.stage("strip_consolidation"):
        consolidate.consolidate_mesh(mesh, cs, config)
        mesh_ops.break_nonorientable(mesh)
        consolidate.repair_nonmanifold(mesh)
        mesh_ops.orient_all(mesh)

    if not options.skip_extension:
        frozen = set(mesh.active_ids())
        with tracker.stage("boundary_extension"):
            bcs = mesh_ops.boundary_chain_set(mesh, config)
            if bcs is not None:
                bcands = matcher.boundary_candidates(
                    bcs, config, "extension", color_cue=options.use_color)
                btable = matcher.match_all(bcands, config)
                mesher.mesh_from_matches(btable, config, mesh=mesh,
                                         phase="extension")
                _match_stage(tracker, "boundary_extension", btable)
        with tracker.stage("extension_consolidation"):
            if bcs is not None:
                consolidate.consolidate_mesh(mesh, bcs, config,
                                             frozen=frozen)
            mesh_ops.break_nonorientable(mesh, frozen=frozen)
            consolidate.repair_nonmanifold(mesh, frozen=frozen)
            mesh_ops.orient_all(mesh)

    with tracker.stage("small_holes"):
        mesh_ops.close_small_holes(mesh, config)
        mesh_ops.orient_all(mesh)

    with tracker.stage("boundary_smoothing"):
        mesh_ops.smooth_boundary(mesh, config)

    frozen = set(mesh.active_ids())
    tris_before_gap = len(mesh.tri_verts)
    with tracker.stage("gap_spanning"):
        gcs = mesh_ops.boundary_chain_set(mesh, config, with_dmax=True)
        if gcs is not None:
            gcands = matcher.boundary_candidates(
                gcs, config, "gap", color_cue=options.use_color)
            gtable = matcher.match_all(gcands, config)
            mesher.mesh_from_matches(gtable, config, mesh=mesh,
                                     phase="gap")
            _match_stage(tracker, "gap_spanning", gtable)
    with tracker.stage("gap_consolidation"):
        if gcs is not None:
            consolidate.consolidate_mesh(mesh, gcs, config, frozen=frozen)

    with tracker.stage("orientation"):
        new_tids = [t for t in range(tris_before_gap, len(mesh.tri_verts))
                    if mesh.is_active(t)]
        mesh_ops.resolve_moebius(mesh, new_tids)
        mesh_ops.break_nonorientable(mesh, frozen=frozen)
        # removals may leave pinched fans behind
        consolidate.repair_nonmanifold(mesh, frozen=frozen)
        mesh_ops.orient_all(mesh)
        mesh_ops.close_small_holes(mesh, config)
        consolidate.repair_nonmanifold(mesh, frozen=frozen)
        mesh_ops.orient_all(mesh)

    with tracker.stage("ribbons"):
        _emit_ribbons(mesh, work, cs)
        mesh_ops.orient_all(mesh)

    if options.close_holes_max_sides > 0:
        with tracker.stage("hole_filling"):
            mesh_ops.fill_all_holes(mesh, config,
                                    max_sides=options.close_holes_max_sides)
            mesh_ops.orient_all(mesh)

    if options.smooth_iterations > 0:
        with tracker.stage("smoothing"):
            mesh_ops.laplacian_smooth(mesh, config,
                                      iterations=options.smooth_iterations)

    bad_edges, bad_vertices = mesh_ops.audit_manifold(mesh)
    stats = mesh_ops.component_stats(mesh)
    report = {
        "stage_stats": tracker.stats,
        "interpolated_edge_fraction": _interpolated_fraction_exact(mesh,
                                                                   cs),
        "nonmanifold_edges": len(bad_edges),
        "nonmanifold_vertices": len(bad_vertices),
        "components": len(stats),
        "euler_characteristics": [s["euler"] for s in stats],
        "boundary_loops": [s["boundary_loops"] for s in stats],
        "triangles": mesh.active_count(),
        "vertices": len({v for t in mesh.active_ids()
                         for v in mesh.tri_verts[t]}),
        "strokes_in": len(drawing.strokes),
        "strokes_trimmed_away": dropped,
        "duplicates_skipped": mesh.duplicates_skipped,
        "quads_rejected": mesh.quads_rejected,
        "total_seconds": time.perf_counter() - t_start,
    }
    return mesh, report
