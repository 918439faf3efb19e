# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: B-spline basis evaluation and batched statevector
gate application.  Contract mirrors ``kanq._kernels_py``."""

import numpy as np

cimport numpy as cnp

cnp.import_array()

NAME = "compiled"


def bspline_basis(x, double t0, double h, int n_bases, int degree):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xs = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t n = xs.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.zeros((n, n_bases), dtype=np.float64)
    cdef double[::1] work = np.zeros(n_bases + degree, dtype=np.float64)
    _basis_rows(xs, t0, h, n_bases, degree, out, None, work, 0)
    return out


def bspline_basis_deriv(x, double t0, double h, int n_bases, int degree):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xs = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t n = xs.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.zeros((n, n_bases), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] dout = np.zeros((n, n_bases), dtype=np.float64)
    cdef double[::1] work = np.zeros(n_bases + degree, dtype=np.float64)
    _basis_rows(xs, t0, h, n_bases, degree, out, dout, work, 1)
    return out, dout


cdef void _basis_rows(double[::1] xs, double t0, double h, int n_bases, int degree,
                      cnp.ndarray[cnp.float64_t, ndim=2] out,
                      object dout_obj,
                      double[::1] work, int want_deriv):
    cdef Py_ssize_t r, n = xs.shape[0]
    cdef int i, d, count
    cdef double x, ti, dh
    cdef double[:, ::1] outv = out
    cdef double[:, ::1] doutv
    if want_deriv:
        doutv = dout_obj
    for r in range(n):
        x = xs[r]
        count = n_bases + degree
        for i in range(count):
            ti = t0 + i * h
            work[i] = 1.0 if (x >= ti and x < ti + h) else 0.0
        d = 1
        while d <= degree:
            if want_deriv and d == degree:
                for i in range(n_bases):
                    doutv[r, i] = (work[i] - work[i + 1]) / h
            dh = d * h
            count -= 1
            for i in range(count):
                ti = t0 + i * h
                work[i] = ((x - ti) / dh) * work[i] + ((ti + (d + 1) * h - x) / dh) * work[i + 1]
            d += 1
        for i in range(n_bases):
            outv[r, i] = work[i]


def apply_1q(states, gate, int wire, int n_qubits):
    cdef cnp.ndarray[cnp.complex128_t, ndim=2] s = np.ascontiguousarray(states, dtype=np.complex128)
    cdef cnp.ndarray[cnp.complex128_t, ndim=2] g = np.ascontiguousarray(gate, dtype=np.complex128)
    cdef cnp.ndarray[cnp.complex128_t, ndim=2] out = np.empty_like(s)
    cdef Py_ssize_t b, i, batch = s.shape[0]
    cdef int dim = 1 << n_qubits
    cdef int bit = 1 << (n_qubits - 1 - wire)
    cdef double complex g00 = g[0, 0], g01 = g[0, 1], g10 = g[1, 0], g11 = g[1, 1]
    cdef double complex a0, a1
    for b in range(batch):
        for i in range(dim):
            if i & bit:
                continue
            a0 = s[b, i]
            a1 = s[b, i | bit]
            out[b, i] = g00 * a0 + g01 * a1
            out[b, i | bit] = g10 * a0 + g11 * a1
    return out


def apply_cnot(states, int control, int target, int n_qubits):
    cdef cnp.ndarray[cnp.complex128_t, ndim=2] s = np.ascontiguousarray(states, dtype=np.complex128)
    cdef cnp.ndarray[cnp.complex128_t, ndim=2] out = np.empty_like(s)
    cdef Py_ssize_t b, i, batch = s.shape[0]
    cdef int dim = 1 << n_qubits
    cdef int cbit = 1 << (n_qubits - 1 - control)
    cdef int tbit = 1 << (n_qubits - 1 - target)
    for b in range(batch):
        for i in range(dim):
            if i & cbit:
                out[b, i] = s[b, i ^ tbit]
            else:
                out[b, i] = s[b, i]
    return out
