# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops for the forward pass and the divergence measures.

Every kernel releases the GIL so adapter capture passes scheduled on a
thread pool can overlap.  Signatures mirror ``_pykernels`` exactly.
"""

import numpy as np
cimport numpy as cnp
from cython cimport floating
from libc.math cimport exp, log, sqrt, cos, sin, pow, INFINITY, NAN

cnp.import_array()


def softmax_rows(const floating[:, ::1] x):
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1], i, j
    out_arr = np.empty((n, d), dtype=np.float64 if floating is double else np.float32)
    cdef floating[:, ::1] out = out_arr
    cdef double m, s
    with nogil:
        for i in range(n):
            m = x[i, 0]
            for j in range(1, d):
                if x[i, j] > m:
                    m = x[i, j]
            s = 0.0
            for j in range(d):
                out[i, j] = <floating>exp(x[i, j] - m)
                s += out[i, j]
            for j in range(d):
                out[i, j] = <floating>(out[i, j] / s)
    return out_arr


def kl_rows(const double[:, ::1] p, const double[:, ::1] q, double floor):
    cdef Py_ssize_t n = p.shape[0], d = p.shape[1], i, j
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double acc, qi
    with nogil:
        for i in range(n):
            acc = 0.0
            for j in range(d):
                if p[i, j] > 0.0:
                    qi = q[i, j]
                    if qi < floor:
                        qi = floor
                    acc += p[i, j] * log(p[i, j] / qi)
            out[i] = acc
    return out_arr


def rms_norm_rows(const floating[:, ::1] x, const floating[::1] gain, double eps):
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1], i, j
    out_arr = np.empty((n, d), dtype=np.float64 if floating is double else np.float32)
    cdef floating[:, ::1] out = out_arr
    cdef double ms, inv
    with nogil:
        for i in range(n):
            ms = 0.0
            for j in range(d):
                ms += <double>x[i, j] * x[i, j]
            inv = 1.0 / sqrt(ms / d + eps)
            for j in range(d):
                out[i, j] = <floating>(x[i, j] * inv * gain[j])
    return out_arr


def silu_mul(const floating[:, ::1] gate, const floating[:, ::1] up):
    cdef Py_ssize_t n = gate.shape[0], d = gate.shape[1], i, j
    out_arr = np.empty((n, d), dtype=np.float64 if floating is double else np.float32)
    cdef floating[:, ::1] out = out_arr
    cdef double g
    with nogil:
        for i in range(n):
            for j in range(d):
                g = gate[i, j]
                out[i, j] = <floating>(g / (1.0 + exp(-g)) * up[i, j])
    return out_arr


def rope_rows(const floating[:, ::1] x, const long long[::1] positions, int n_heads, double base):
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1], i, h, j
    cdef Py_ssize_t dh = d // n_heads, half = dh // 2, o
    out_arr = np.empty((n, d), dtype=np.float64 if floating is double else np.float32)
    cdef floating[:, ::1] out = out_arr
    cdef double theta, c, s, x1, x2
    with nogil:
        for i in range(n):
            for j in range(half):
                theta = positions[i] * pow(base, -2.0 * j / dh)
                c = cos(theta)
                s = sin(theta)
                for h in range(n_heads):
                    o = h * dh
                    x1 = x[i, o + j]
                    x2 = x[i, o + j + half]
                    out[i, o + j] = <floating>(x1 * c - x2 * s)
                    out[i, o + j + half] = <floating>(x1 * s + x2 * c)
    return out_arr


def causal_attention(const floating[:, ::1] q, const floating[:, ::1] k, const floating[:, ::1] v,
                     int n_heads, Py_ssize_t q_offset):
    cdef Py_ssize_t tq = q.shape[0], d = q.shape[1], tk = k.shape[0]
    cdef Py_ssize_t dh = d // n_heads, h, t, s, j, o, last
    out_arr = np.zeros((tq, d), dtype=np.float64 if floating is double else np.float32)
    cdef floating[:, ::1] out = out_arr
    cdef double[::1] w = np.empty(tk, dtype=np.float64)
    cdef double scale = 1.0 / sqrt(<double>dh), m, z, acc
    with nogil:
        for h in range(n_heads):
            o = h * dh
            for t in range(tq):
                last = q_offset + t
                m = -INFINITY
                for s in range(last + 1):
                    acc = 0.0
                    for j in range(dh):
                        acc += <double>q[t, o + j] * k[s, o + j]
                    w[s] = acc * scale
                    if w[s] > m:
                        m = w[s]
                z = 0.0
                for s in range(last + 1):
                    w[s] = exp(w[s] - m)
                    z += w[s]
                for j in range(dh):
                    acc = 0.0
                    for s in range(last + 1):
                        acc += w[s] * v[s, o + j]
                    out[t, o + j] = <floating>(acc / z)
    return out_arr


def cosine_similarity(const double[::1] u, const double[::1] v):
    cdef Py_ssize_t n = u.shape[0], i
    cdef double uv = 0.0, uu = 0.0, vv = 0.0
    with nogil:
        for i in range(n):
            uv += u[i] * v[i]
            uu += u[i] * u[i]
            vv += v[i] * v[i]
    if uu == 0.0 or vv == 0.0:
        return NAN
    return uv / (sqrt(uu) * sqrt(vv))


def euclidean_distance(const double[::1] u, const double[::1] v):
    cdef Py_ssize_t n = u.shape[0], i
    cdef double acc = 0.0, diff
    with nogil:
        for i in range(n):
            diff = u[i] - v[i]
            acc += diff * diff
    return sqrt(acc)
