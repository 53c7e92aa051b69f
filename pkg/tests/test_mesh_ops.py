"""Mesh-level operations: audits, orientation, boundary loops, hole
filling, smoothing, and the OBJ round trip."""

import math

import numpy as np
import pytest

from strokesurf import mesh_ops
from strokesurf.mesh_ops import mesh_from_arrays


def grid_mesh(nx=4, ny=4, jitter=None):
    """Flat triangulated grid in z=0, source normals +z."""
    xs, ys = np.meshgrid(np.arange(nx, dtype=float),
                         np.arange(ny, dtype=float))
    pos = np.stack([xs.ravel(), ys.ravel(), np.zeros(nx * ny)], axis=1)
    if jitter is not None:
        pos = pos + jitter
    faces = []
    for j in range(ny - 1):
        for i in range(nx - 1):
            a = j * nx + i
            b = a + 1
            c = a + nx
            d = c + 1
            faces.append((a, b, d))
            faces.append((a, d, c))
    normals = np.tile([0.0, 0.0, 1.0], (nx * ny, 1))
    return mesh_from_arrays(pos, faces, normals)


def octahedron():
    pos = np.array([[1.0, 0, 0], [-1.0, 0, 0], [0, 1.0, 0],
                    [0, -1.0, 0], [0, 0, 1.0], [0, 0, -1.0]])
    faces = [(0, 2, 4), (2, 1, 4), (1, 3, 4), (3, 0, 4),
             (2, 0, 5), (1, 2, 5), (3, 1, 5), (0, 3, 5)]
    normals = pos / np.linalg.norm(pos, axis=1, keepdims=True)
    return mesh_from_arrays(pos, faces, normals)


def moebius_band(close=True):
    """Six-rung band, rails at radii 1.2 / 0.8; the closing quad swaps
    rails, which is the half twist. Returns (mesh, closing tids)."""
    rungs = 6
    pos = []
    for i in range(rungs):
        t = 2 * math.pi * i / rungs
        pos.append([1.2 * math.cos(t), 1.2 * math.sin(t), 0.0])
        pos.append([0.8 * math.cos(t), 0.8 * math.sin(t), 0.0])
    faces = []
    for i in range(rungs - 1):
        a0, b0, a1, b1 = 2 * i, 2 * i + 1, 2 * i + 2, 2 * i + 3
        faces.append((a0, b0, b1))
        faces.append((a0, b1, a1))
    mesh = mesh_from_arrays(np.asarray(pos), faces)
    closing = []
    if close:
        a5, b5, a0, b0 = 10, 11, 0, 1
        closing.append(mesh.add_triangle(a5, b5, a0, phase="gap"))
        closing.append(mesh.add_triangle(a5, a0, b0, phase="gap"))
    return mesh, closing


def face_normals(mesh):
    out = {}
    for t in mesh.active_ids():
        a, b, c = mesh.tri_verts[t]
        n = np.cross(mesh.positions[b] - mesh.positions[a],
                     mesh.positions[c] - mesh.positions[a])
        out[t] = n / np.linalg.norm(n)
    return out


# ---------------------------------------------------------------------------
# audits


def test_audit_clean_grid():
    mesh = grid_mesh()
    assert mesh_ops.audit_manifold(mesh) == ([], [])


def test_audit_overfull_edge():
    pos = np.array([[0.0, 0, 0], [1.0, 0, 0], [0.5, 1, 0],
                    [0.5, -1, 0], [0.5, 0.5, 1]])
    mesh = mesh_from_arrays(pos, [(0, 1, 2), (1, 0, 3), (0, 1, 4)])
    bad_edges, bad_vertices = mesh_ops.audit_manifold(mesh)
    assert bad_edges == [(0, 1)]
    # the three fans at 0 and 1 are edge-connected through (0, 1)
    assert bad_vertices == []


def test_audit_bowtie_vertex():
    pos = np.array([[0.0, 0, 0], [1.0, 1, 0], [1.0, -1, 0],
                    [-1.0, 1, 0], [-1.0, -1, 0]])
    mesh = mesh_from_arrays(pos, [(0, 1, 2), (0, 3, 4)])
    bad_edges, bad_vertices = mesh_ops.audit_manifold(mesh)
    assert bad_edges == []
    assert bad_vertices == [0]
    assert mesh_ops.vertex_fan_groups(mesh, 0) == [[0], [1]]


# ---------------------------------------------------------------------------
# orientation


def test_orient_all_repairs_flipped_triangle():
    mesh = grid_mesh()
    mesh.flip(3)
    assert mesh_ops.orient_all(mesh) == []
    for n in face_normals(mesh).values():
        assert n[2] > 0.99


def test_orient_all_aligns_with_source_normals():
    mesh = grid_mesh()
    for t in mesh.active_ids():
        mesh.flip(t)          # consistent but facing -z
    assert mesh_ops.orient_all(mesh) == []
    for n in face_normals(mesh).values():
        assert n[2] > 0.99


def test_moebius_band_is_nonorientable():
    mesh, _ = moebius_band()
    bad = mesh_ops.orient_all(mesh)
    assert len(bad) == 1
    assert sorted(bad[0]) == sorted(mesh.active_ids())


def test_break_nonorientable_removes_minimum():
    mesh, _ = moebius_band()
    removed = mesh_ops.break_nonorientable(mesh)
    assert len(removed) == 1
    assert mesh_ops.orient_all(mesh) == []


def test_break_nonorientable_with_frozen_still_repairs():
    # the conflict surfaces wherever the traversal fronts collide;
    # frozen only biases the pick at that edge, so repair must succeed
    # even when the preference cannot be honored
    mesh, closing = moebius_band()
    frozen = frozenset(t for t in mesh.active_ids() if t not in closing)
    removed = mesh_ops.break_nonorientable(mesh, frozen=frozen)
    assert len(removed) == 1
    assert mesh_ops.orient_all(mesh) == []


def test_resolve_moebius_cuts_inverted_side():
    mesh, closing = moebius_band()
    removed = mesh_ops.resolve_moebius(mesh, closing)
    # the closing strip touches rung 5 aligned and rung 0 inverted;
    # inverted loses the tie
    assert removed == [closing[1]]
    assert mesh.is_active(closing[0])
    assert mesh_ops.orient_all(mesh) == []


def test_resolve_moebius_keeps_flippable_strip():
    # a strip that is consistently inverted against the surface is left
    # for orient_all to flip, not cut
    pos = np.array([[0.0, 0, 0], [1.0, 0, 0], [0.0, 1, 0], [1.0, -1, 0]])
    mesh = mesh_from_arrays(pos, [(0, 1, 2)])
    t = mesh.add_triangle(0, 1, 3, phase="gap")   # same directed (0, 1)
    assert mesh_ops.resolve_moebius(mesh, [t]) == []
    assert mesh_ops.orient_all(mesh) == []


# ---------------------------------------------------------------------------
# boundary loops and chains


def test_boundary_loop_follows_winding():
    pos = np.array([[0.0, 0, 0], [1.0, 0, 0], [1.0, 1, 0], [0.0, 1, 0]])
    mesh = mesh_from_arrays(pos, [(0, 1, 2), (0, 2, 3)])
    assert mesh_ops.boundary_loops(mesh) == [[0, 1, 2, 3]]


def test_boundary_loops_sorted_and_rotated():
    mesh = grid_mesh(5, 5)
    (loop,) = mesh_ops.boundary_loops(mesh)
    assert loop[0] == min(loop) == 0
    assert len(loop) == 16
    assert mesh_ops.boundary_loops(octahedron()) == []


def test_boundary_chain_set(config):
    pos = np.array([[0.0, 0, 0], [1.0, 0, 0], [1.0, 1, 0], [0.0, 1, 0]])
    mesh = mesh_from_arrays(
        pos, [(0, 1, 2), (0, 2, 3)],
        normals=np.tile([0.0, 0.0, 1.0], (4, 1)))
    cs = mesh_ops.boundary_chain_set(mesh, config, with_dmax=True)
    assert len(cs.chains) == 1
    chain = cs.chains[0]
    assert chain.cyclic
    assert list(chain.gids) == [0, 1, 2, 3]
    # mean length of the two non-structural edges: diagonal and (0, 3)
    np.testing.assert_allclose(chain.dmax, (1 + math.sqrt(2)) / 2)
    centroid = pos.mean(axis=0)
    for k in range(4):
        outward = chain.positions[k] - centroid
        assert float(np.dot(chain.binormals[k], outward)) > 0
        assert abs(float(np.dot(chain.binormals[k], chain.tangents[k]))) < 1e-6


# ---------------------------------------------------------------------------
# hole filling


def test_close_small_holes_triangle():
    mesh = octahedron()
    mesh.remove(0)
    assert len(mesh_ops.boundary_loops(mesh)) == 1
    added = mesh_ops.close_small_holes(mesh, _cfg())
    assert added == 1
    assert mesh_ops.boundary_loops(mesh) == []
    assert mesh_ops.audit_manifold(mesh) == ([], [])


def test_close_small_holes_quad():
    mesh = octahedron()
    mesh.remove(0)
    mesh.remove(1)            # faces share edge (2, 4): 4-sided hole
    (loop,) = mesh_ops.boundary_loops(mesh)
    assert len(loop) == 4
    added = mesh_ops.close_small_holes(mesh, _cfg())
    assert added == 2
    assert mesh_ops.boundary_loops(mesh) == []
    assert mesh_ops.audit_manifold(mesh) == ([], [])


def test_close_small_holes_pillow_guard():
    pos = np.array([[0.0, 0, 0], [1.0, 0, 0], [1.0, 1, 0], [0.0, 1, 0]])
    mesh = mesh_from_arrays(pos, [(0, 1, 2), (0, 2, 3)])
    assert mesh_ops.close_small_holes(mesh, _cfg()) == 0
    assert mesh.active_count() == 2


def test_fill_hole_pentagon():
    mesh = octahedron()
    for t in (0, 1, 2):       # the hole walks over the apex
        mesh.remove(t)
    (loop,) = mesh_ops.boundary_loops(mesh)
    assert len(loop) == 5
    added = mesh_ops.fill_hole(mesh, loop)
    assert added == 3
    assert mesh_ops.boundary_loops(mesh) == []
    assert mesh_ops.audit_manifold(mesh) == ([], [])
    (stats,) = mesh_ops.component_stats(mesh)
    assert stats["euler"] == 2 and stats["closed"]


def test_fill_all_holes_respects_max_sides():
    mesh = octahedron()
    for t in (0, 1, 2):
        mesh.remove(t)
    assert mesh_ops.fill_all_holes(mesh, _cfg(), max_sides=4) == 0
    assert mesh_ops.fill_all_holes(mesh, _cfg()) == 3
    assert mesh_ops.boundary_loops(mesh) == []


# ---------------------------------------------------------------------------
# smoothing


def test_laplacian_smooth_moves_interior_only(config):
    rng = np.random.default_rng(3)
    jitter = np.zeros((25, 3))
    jitter[:, :2] = rng.uniform(-0.2, 0.2, (25, 2))
    mesh = grid_mesh(5, 5, jitter=jitter)
    before = mesh.positions.copy()
    (loop,) = mesh_ops.boundary_loops(mesh)
    moved = mesh_ops.laplacian_smooth(mesh, config, iterations=2)
    assert moved > 0
    for g in loop:
        assert np.allclose(mesh.positions[g], before[g])
    interior = sorted(set(range(25)) - set(loop))
    assert any(not np.allclose(mesh.positions[g], before[g])
               for g in interior)
    assert np.allclose(mesh.positions[:, 2], 0.0)


def test_move_guard_blocks_flips_and_collapses():
    pos = np.array([[0.0, 0, 0], [1.0, 0, 0], [0.5, 0.4, 0]])
    mesh = mesh_from_arrays(pos, [(0, 1, 2)])
    vmap = mesh.vertex_tris()
    cos_guard = math.cos(math.radians(45.0))
    ok = mesh_ops._move_keeps_normals
    assert ok(mesh, vmap, 2, np.array([0.6, 0.5, 0.0]), cos_guard)
    # crossing the opposite edge flips the normal
    assert not ok(mesh, vmap, 2, np.array([0.5, -0.4, 0.0]), cos_guard)
    # collapsing onto the edge is degenerate
    assert not ok(mesh, vmap, 2, np.array([0.5, 0.0, 0.0]), cos_guard)
    # tilting past the guard angle
    assert not ok(mesh, vmap, 2, np.array([0.5, 0.0, 0.4]), cos_guard)


def test_smooth_boundary_relaxes_flat_patch(config):
    rng = np.random.default_rng(5)
    jitter = np.zeros((16, 3))
    jitter[:, :2] = rng.uniform(-0.15, 0.15, (16, 2))
    mesh = grid_mesh(4, 4, jitter=jitter)
    (loop,) = mesh_ops.boundary_loops(mesh)
    lengths_before = _loop_length(mesh, loop)
    assert mesh_ops.smooth_boundary(mesh, config, iterations=2) > 0
    assert _loop_length(mesh, loop) < lengths_before


def _loop_length(mesh, loop):
    p = mesh.positions[loop]
    return float(np.linalg.norm(np.roll(p, -1, axis=0) - p, axis=1).sum())


def _cfg():
    from strokesurf.stroke_model import Config
    return Config()


# ---------------------------------------------------------------------------
# stats


def test_component_stats():
    mesh = octahedron()
    (closed,) = mesh_ops.component_stats(mesh)
    assert closed == {"triangles": 8, "vertices": 6, "edges": 12,
                      "euler": 2, "boundary_loops": 0, "closed": True}
    patch = grid_mesh(3, 3)
    (open_sheet,) = mesh_ops.component_stats(patch)
    assert open_sheet["euler"] == 1
    assert open_sheet["boundary_loops"] == 1
    assert not open_sheet["closed"]


# ---------------------------------------------------------------------------
# OBJ


def test_export_obj_is_deterministic(tmp_path):
    mesh = octahedron()
    p1, p2 = tmp_path / "a.obj", tmp_path / "b.obj"
    assert mesh_ops.export_obj(mesh, p1) == (6, 8)
    mesh_ops.export_obj(mesh, p2)
    assert p1.read_bytes() == p2.read_bytes()
    text = p1.read_text()
    assert text.count("\nvn ") + text.startswith("vn ") == 6
    assert "g component_000" in text


def test_export_faces_lead_with_smallest_vertex(tmp_path):
    pos = np.array([[0.0, 0, 0], [1.0, 0, 0], [1.0, 1, 0], [0.0, 1, 0]])
    mesh = mesh_from_arrays(pos, [(2, 3, 0), (1, 2, 0)])
    path = tmp_path / "m.obj"
    mesh_ops.export_obj(mesh, path)
    faces = [ln for ln in path.read_text().splitlines()
             if ln.startswith("f ")]
    # canonical rotation puts vertex 0 first; faces sort within the group
    assert faces == ["f 1//1 2//2 3//3", "f 1//1 3//3 4//4"]


def test_obj_round_trip(tmp_path):
    mesh = octahedron()
    mesh.remove(5)
    path = tmp_path / "m.obj"
    mesh_ops.export_obj(mesh, path)
    pos, faces, normals = mesh_ops.load_obj(path)
    assert pos.shape == (6, 3)
    assert normals.shape == (6, 3)
    assert len(faces) == 7
    np.testing.assert_allclose(pos, mesh.positions[:6], atol=1e-8)
    original = {tuple(mesh_ops._canonical_face(list(mesh.tri_verts[t])))
                for t in mesh.active_ids()}
    assert {tuple(mesh_ops._canonical_face(list(f))) for f in faces} \
        == original


def test_load_obj_negative_indices_and_fans(tmp_path):
    path = tmp_path / "quad.obj"
    path.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\n"
                    "f -4 -3 -2 -1\n")
    pos, faces, normals = mesh_ops.load_obj(path)
    assert normals is None
    assert faces == [(0, 1, 2), (0, 2, 3)]
    rebuilt = mesh_from_arrays(pos, faces)
    assert mesh_ops.audit_manifold(rebuilt) == ([], [])


def test_mesh_from_arrays_defaults():
    pos = np.array([[0.0, 0, 0], [1.0, 0, 0], [0.0, 1, 0]])
    mesh = mesh_from_arrays(pos, [(0, 1, 2)])
    assert mesh.active_count() == 1
    np.testing.assert_allclose(mesh.normals, [[0, 0, 1]] * 3)
