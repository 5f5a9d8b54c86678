# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernels: fused attention forward and the masked-Laplacian apply.

Must stay numerically interchangeable with the numpy fallbacks in
lazypaint.kernels (same max-shifted softmax; accumulation order may differ
at float rounding level).
"""

import numpy as np

from libc.math cimport exp as c_exp


def attn_forward(const float[:, :, ::1] q, const float[:, :, ::1] k,
                 const float[:, :, ::1] v, double scale):
    """softmax(q k^T * scale) v for stacked heads: (B, n, dh) -> (B, n, dh)."""
    cdef Py_ssize_t B = q.shape[0], n = q.shape[1], dh = q.shape[2], m = k.shape[1]
    if k.shape[0] != B or v.shape[0] != B or v.shape[1] != m or k.shape[2] != dh or v.shape[2] != dh:
        raise ValueError("attn_forward: mismatched operand shapes")
    out_np = np.zeros((B, n, dh), dtype=np.float32)
    srow_np = np.empty(m, dtype=np.float64)
    cdef float[:, :, ::1] out = out_np
    cdef double[::1] srow = srow_np
    cdef Py_ssize_t b, i, j, c
    cdef double s, mx, z, w
    for b in range(B):
        for i in range(n):
            mx = -1e300
            for j in range(m):
                s = 0.0
                for c in range(dh):
                    s += q[b, i, c] * k[b, j, c]
                s *= scale
                srow[j] = s
                if s > mx:
                    mx = s
            z = 0.0
            for j in range(m):
                w = c_exp(srow[j] - mx)
                srow[j] = w
                z += w
            for j in range(m):
                w = srow[j] / z
                for c in range(dh):
                    out[b, i, c] += <float> (w * v[b, j, c])
    return out_np


def laplacian_apply(const double[::1] x, const long[:, ::1] nbr, const double[::1] deg):
    """y[i] = deg[i] * x[i] - sum_j x[nbr[i, j]], entries with nbr < 0 skipped."""
    cdef Py_ssize_t m = x.shape[0], K = nbr.shape[1]
    if nbr.shape[0] != m or deg.shape[0] != m:
        raise ValueError("laplacian_apply: mismatched operand shapes")
    out_np = np.empty(m, dtype=np.float64)
    cdef double[::1] out = out_np
    cdef Py_ssize_t i, j
    cdef long t
    cdef double acc
    for i in range(m):
        acc = deg[i] * x[i]
        for j in range(K):
            t = nbr[i, j]
            if t >= 0:
                acc -= x[t]
        out[i] = acc
    return out_np
