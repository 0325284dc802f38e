"""Scalar brute-force reference implementations.

Everything here is deliberately independent of the package's vectorized
kernels: plain loops and textbook formulas, used only to cross-check.
"""

from __future__ import annotations

import math


def sub(a, b):
    return (a[0] - b[0], a[1] - b[1], a[2] - b[2])


def add(a, b):
    return (a[0] + b[0], a[1] + b[1], a[2] + b[2])


def scale(a, s):
    return (a[0] * s, a[1] * s, a[2] * s)


def dot(a, b):
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


def cross(a, b):
    return (
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    )


def norm(a):
    return math.sqrt(dot(a, a))


def closest_point_on_triangle(p, a, b, c):
    """Ericson, Real-Time Collision Detection, scalar version."""
    ab = sub(b, a)
    ac = sub(c, a)
    ap = sub(p, a)
    d1 = dot(ab, ap)
    d2 = dot(ac, ap)
    if d1 <= 0 and d2 <= 0:
        return a
    bp = sub(p, b)
    d3 = dot(ab, bp)
    d4 = dot(ac, bp)
    if d3 >= 0 and d4 <= d3:
        return b
    vc = d1 * d4 - d3 * d2
    if vc <= 0 and d1 >= 0 and d3 <= 0:
        v = d1 / (d1 - d3)
        return add(a, scale(ab, v))
    cp = sub(p, c)
    d5 = dot(ab, cp)
    d6 = dot(ac, cp)
    if d6 >= 0 and d5 <= d6:
        return c
    vb = d5 * d2 - d1 * d6
    if vb <= 0 and d2 >= 0 and d6 <= 0:
        w = d2 / (d2 - d6)
        return add(a, scale(ac, w))
    va = d3 * d6 - d5 * d4
    if va <= 0 and (d4 - d3) >= 0 and (d5 - d6) >= 0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return add(b, scale(sub(c, b), w))
    denom = 1.0 / (va + vb + vc)
    v = vb * denom
    w = vc * denom
    return add(a, add(scale(ab, v), scale(ac, w)))


def point_triangle_distance(p, a, b, c):
    return norm(sub(p, closest_point_on_triangle(p, a, b, c)))


def segment_segment_closest(p1, q1, p2, q2):
    """Closest points between segments p1q1 and p2q2 (Ericson 5.1.9)."""
    d1 = sub(q1, p1)
    d2 = sub(q2, p2)
    r = sub(p1, p2)
    a = dot(d1, d1)
    e = dot(d2, d2)
    f = dot(d2, r)
    eps = 1e-300
    if a <= eps and e <= eps:
        return p1, p2
    if a <= eps:
        t = min(max(f / e, 0.0), 1.0)
        return p1, add(p2, scale(d2, t))
    c = dot(d1, r)
    if e <= eps:
        s = min(max(-c / a, 0.0), 1.0)
        return add(p1, scale(d1, s)), p2
    b = dot(d1, d2)
    denom = a * e - b * b
    s = min(max((b * f - c * e) / denom, 0.0), 1.0) if denom != 0 else 0.0
    t = (b * s + f) / e
    if t < 0:
        t = 0.0
        s = min(max(-c / a, 0.0), 1.0)
    elif t > 1:
        t = 1.0
        s = min(max((b - c) / a, 0.0), 1.0)
    return add(p1, scale(d1, s)), add(p2, scale(d2, t))


def segment_crosses_triangle(p, q, a, b, c):
    """Does the open segment pq pass through the triangle's interior?"""
    d = sub(q, p)
    e1 = sub(b, a)
    e2 = sub(c, a)
    h = cross(d, e1_e2 := e2)
    det = dot(e1, h)
    if abs(det) < 1e-300:
        return False
    inv = 1.0 / det
    s = sub(p, a)
    u = dot(s, h) * inv
    if u < 0 or u > 1:
        return False
    qv = cross(s, e1)
    v = dot(d, qv) * inv
    if v < 0 or u + v > 1:
        return False
    t = dot(e2, qv) * inv
    return 0.0 <= t <= 1.0


def segment_triangle_distance(p, q, a, b, c):
    """Exact segment-triangle distance: endpoint/face, edge/edge, crossing."""
    if segment_crosses_triangle(p, q, a, b, c):
        return 0.0
    best = min(point_triangle_distance(p, a, b, c),
               point_triangle_distance(q, a, b, c))
    for e0, e1 in ((a, b), (b, c), (c, a)):
        s_pt, t_pt = segment_segment_closest(p, q, e0, e1)
        best = min(best, norm(sub(s_pt, t_pt)))
    return best


def point_mesh_distance_brute(p, vertices, triangles):
    """Exhaustive per-triangle scan; returns (distance, triangle index)."""
    best = math.inf
    best_i = -1
    for i, (ia, ib, ic) in enumerate(triangles):
        d = point_triangle_distance(p, tuple(vertices[ia]), tuple(vertices[ib]),
                                    tuple(vertices[ic]))
        if d < best:
            best = d
            best_i = i
    return best, best_i


def segment_mesh_distance_brute(p, q, vertices, triangles):
    best = math.inf
    for ia, ib, ic in triangles:
        d = segment_triangle_distance(p, q, tuple(vertices[ia]),
                                      tuple(vertices[ib]), tuple(vertices[ic]))
        if d < best:
            best = d
    return best


def pinhole_project(p_cam, fx, fy, cx, cy):
    """Textbook pinhole formula on a camera-frame point (no pose math)."""
    if p_cam[2] <= 1e-6:
        return None
    return (cx + fx * p_cam[0] / p_cam[2], cy + fy * p_cam[1] / p_cam[2])
