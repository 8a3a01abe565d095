# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled O(n^2) pair kernels for the softened spin-weighted 1/r potential.

Pair loops run i < j in a fixed order so results are bit-reproducible.
"""
from libc.math cimport sqrt

import numpy as np


def forces(const double[:, ::1] x, const double[:, ::1] s, double g, double a2):
    cdef Py_ssize_t n = x.shape[0], i, j
    cdef double dx, dy, dz, inv, w, fx, fy, fz, xi, yi, zi, sx, sy, sz
    out = np.zeros((n, 3))
    cdef double[:, ::1] f = out
    with nogil:
        for i in range(n):
            xi = x[i, 0]; yi = x[i, 1]; zi = x[i, 2]
            sx = s[i, 0]; sy = s[i, 1]; sz = s[i, 2]
            fx = 0.0; fy = 0.0; fz = 0.0
            for j in range(i + 1, n):
                dx = xi - x[j, 0]; dy = yi - x[j, 1]; dz = zi - x[j, 2]
                inv = 1.0 / sqrt(dx * dx + dy * dy + dz * dz + a2)
                w = g * (sx * s[j, 0] + sy * s[j, 1] + sz * s[j, 2]) * inv * inv * inv
                fx -= w * dx; fy -= w * dy; fz -= w * dz
                f[j, 0] += w * dx; f[j, 1] += w * dy; f[j, 2] += w * dz
            f[i, 0] += fx; f[i, 1] += fy; f[i, 2] += fz
    return out


def potentials(const double[:, ::1] x, const double[:, ::1] s, double g, double a2):
    cdef Py_ssize_t n = x.shape[0], i, j
    cdef double dx, dy, dz, u, acc
    out = np.zeros(n)
    cdef double[::1] phi = out
    with nogil:
        for i in range(n):
            acc = 0.0
            for j in range(i + 1, n):
                dx = x[i, 0] - x[j, 0]; dy = x[i, 1] - x[j, 1]; dz = x[i, 2] - x[j, 2]
                u = -g * (s[i, 0] * s[j, 0] + s[i, 1] * s[j, 1] + s[i, 2] * s[j, 2]) \
                    / sqrt(dx * dx + dy * dy + dz * dz + a2)
                acc += u
                phi[j] += u
            phi[i] += acc
    return out


def potential_at(const double[:, ::1] x, const double[:, ::1] s, double g, double a2,
                 const double[::1] y, const double[::1] sy):
    """Potential of a probe spin ``sy`` at ``y`` due to all particles."""
    cdef Py_ssize_t n = x.shape[0], j
    cdef double dx, dy, dz, acc = 0.0
    with nogil:
        for j in range(n):
            dx = y[0] - x[j, 0]; dy = y[1] - x[j, 1]; dz = y[2] - x[j, 2]
            acc -= g * (sy[0] * s[j, 0] + sy[1] * s[j, 1] + sy[2] * s[j, 2]) \
                / sqrt(dx * dx + dy * dy + dz * dz + a2)
    return acc
