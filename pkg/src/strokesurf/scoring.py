"""Match quality scores between ribbon-stroke vertices.

A candidate match between vertices p and q is scored by a Gaussian of
three summed distances: the point distance, the mean tangential offset,
and a normal-consistency term comparing the midpoint of (p, q) with the
midpoint of their width-offset probes. The Gaussian width sigma equals
the acceptance radius for the pair, so scores die off by about three
sigma. A second score rates how well two consecutive matches persist
side by side; both are consumed in the log domain by the matcher.

Sides: LEFT probes along +binormal, RIGHT along -binormal. Flipping a
vertex normal flips the binormal and therefore swaps the two sides.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class Side(enum.IntEnum):
    LEFT = 1
    RIGHT = -1

    @property
    def sign(self):
        return int(self.value)

    @property
    def tag(self):
        return "L" if self is Side.LEFT else "R"


@dataclass(frozen=True)
class ScoreBreakdown:
    d_align: float
    d_tangent: float
    d_normal: float
    sigma: float
    log_score: float

    @property
    def score(self):
        return float(np.exp(self.log_score))


def sigma_for(w_p, w_q, config):
    """Acceptance radius (and Gaussian sigma) for a pair of widths."""
    return config.width_factor * 0.5 * (float(w_p) + float(w_q))


def _gauss_log(d, sigma):
    return -(d * d) / (2.0 * sigma * sigma)


def vertex_score(p, q, side, config, sigma=None):
    """Score q as the side-match of p. Both are StrokeVertex views with
    non-degenerate frames. Returns a ScoreBreakdown."""
    side = Side(side)
    fp = p.frame
    fq = q.frame
    if not (fp.ok and fq.ok):
        raise ValueError("vertex_score requires non-degenerate frames")
    pp = np.asarray(p.position, dtype=np.float64)
    qq = np.asarray(q.position, dtype=np.float64)
    d = pp - qq

    d_align = float(np.linalg.norm(d))
    d_tangent = 0.5 * (abs(float(np.dot(d, fp.tangent)))
                       + abs(float(np.dot(d, fq.tangent))))

    p_c = pp + side.sign * p.width * fp.binormal
    q_l = qq + q.width * fq.binormal
    q_r = qq - q.width * fq.binormal
    # nearer offset of q to p's probe; ties take the left offset
    if np.linalg.norm(q_l - p_c) <= np.linalg.norm(q_r - p_c):
        q_c = q_l
    else:
        q_c = q_r
    m_probe = 0.5 * (p_c + q_c)
    m = 0.5 * (pp + qq)
    d_normal = float(np.linalg.norm(m - m_probe))

    if sigma is None:
        sigma = sigma_for(p.width, q.width, config)
    total = d_align + d_tangent + d_normal
    return ScoreBreakdown(d_align, d_tangent, d_normal, float(sigma),
                          _gauss_log(total, float(sigma)))


def persistence_score(p_i, p_j, q_i, q_j, sigma):
    """Score the persistence of matching (p_i -> q_i) and (p_j -> q_j)
    for consecutive vertices p_i, p_j. Positions only; returns the
    linear-domain score."""
    return float(np.exp(persistence_log(p_i, p_j, q_i, q_j, sigma)))


def persistence_log(p_i, p_j, q_i, q_j, sigma):
    p_i = np.asarray(p_i, dtype=np.float64)
    p_j = np.asarray(p_j, dtype=np.float64)
    q_i = np.asarray(q_i, dtype=np.float64)
    q_j = np.asarray(q_j, dtype=np.float64)
    term1 = np.linalg.norm((p_j - p_i) - (q_j - q_i))
    term2 = np.linalg.norm((p_j - q_i) - (q_j - p_i))
    term3 = np.linalg.norm((p_j - q_j) - (p_i - q_i))
    d_p = float(term1 + term2 + term3)
    return _gauss_log(d_p, float(sigma))


# ---- vectorized kernels over raw arrays (used by the matcher) ----

def vertex_scores_log_arrays(p_pos, p_tan, p_bin, p_w, side_sign,
                             q_pos, q_tan, q_bin, q_w, sigma):
    """Log vertex scores of one source vertex against k candidates.

    q_* are (k, ...) arrays; sigma is (k,). Returns (k,) log scores.
    """
    d = p_pos[None, :] - q_pos
    d_align = np.linalg.norm(d, axis=1)
    d_tangent = 0.5 * (np.abs(d @ p_tan) +
                       np.abs(np.einsum("ij,ij->i", d, q_tan)))

    p_c = p_pos + side_sign * p_w * p_bin
    q_l = q_pos + q_w[:, None] * q_bin
    q_r = q_pos - q_w[:, None] * q_bin
    dl = np.linalg.norm(q_l - p_c[None, :], axis=1)
    dr = np.linalg.norm(q_r - p_c[None, :], axis=1)
    q_c = np.where((dl <= dr)[:, None], q_l, q_r)
    m_probe = 0.5 * (p_c[None, :] + q_c)
    m = 0.5 * (p_pos[None, :] + q_pos)
    d_normal = np.linalg.norm(m - m_probe, axis=1)

    total = d_align + d_tangent + d_normal
    return -(total * total) / (2.0 * sigma * sigma)


def persistence_log_matrix(p_i, p_j, q_i_pos, q_j_pos, sigma_rows):
    """Log persistence scores for all pairs of candidate choices.

    q_i_pos is (k1, 3) for vertex i, q_j_pos is (k2, 3) for vertex j,
    sigma_rows is (k1,) (sigma of the (p_i, q_i) pair). Returns (k1, k2).
    """
    dp = p_j - p_i
    dq = q_j_pos[None, :, :] - q_i_pos[:, None, :]
    term1 = np.linalg.norm(dp[None, None, :] - dq, axis=2)
    psum = p_i + p_j
    qsum = q_i_pos[:, None, :] + q_j_pos[None, :, :]
    term2 = np.linalg.norm(psum[None, None, :] - qsum, axis=2)
    pd = p_j - p_i
    term3 = np.linalg.norm(pd[None, None, :] - dq, axis=2)
    d_p = term1 + term2 + term3
    return -(d_p * d_p) / (2.0 * sigma_rows[:, None] ** 2)
