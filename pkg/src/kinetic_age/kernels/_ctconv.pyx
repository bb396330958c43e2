# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled temporal-convolution kernels.

Fused direct convolution over (N, C, T, V) tensors: no im2col buffer. The
per-sample inner loops live in verbatim C with ``restrict`` pointers so the
contiguous joint axis vectorizes; specializations with compile-time kernel
size and joint count (V=18, K_t in 3..17 odd) let the compiler unroll the
tap loop. The batch loop is OpenMP-parallel; the weight gradient
accumulates into per-thread float64 buffers.
"""

import numpy as np

cimport cython
from cython.parallel cimport parallel, prange

cimport openmp

cdef extern from *:
    """
    #define KA_MAX_V 64
    #define KA_MAX_LANE 2048

    #define KA_FWD_LOOP(REAL, KD, VD)                                          \\
        REAL acc[VD];                                                          \\
        for (long t = 0; t < t_out; t++)                                       \\
          for (long o = 0; o < co; o++) {                                      \\
            for (long v = 0; v < (VD); v++) acc[v] = 0;                        \\
            for (long c = 0; c < ci; c++) {                                    \\
              const REAL* restrict xrow = xp + (c * (t_out + (KD) - 1) + t) * (VD); \\
              const REAL* restrict wrow = w + (o * ci + c) * (KD);             \\
              for (long k = 0; k < (KD); k++) {                                \\
                REAL wv = wrow[k];                                             \\
                for (long v = 0; v < (VD); v++) acc[v] += wv * xrow[k * (VD) + v]; \\
              }                                                                \\
            }                                                                  \\
            REAL* restrict yrow = y + (o * t_out + t) * (VD);                  \\
            for (long v = 0; v < (VD); v++) yrow[v] = acc[v];                  \\
          }

    #define KA_DEFINE_FWD_K(SUF, REAL, KD)                                     \\
    static void ka_fwd_##SUF##_k##KD(const REAL* restrict xp,                   \\
            const REAL* restrict w, REAL* restrict y,                           \\
            long co, long ci, long t_out) {                                     \\
        KA_FWD_LOOP(REAL, KD, 18)                                               \\
    }

    #define KA_DW_LOOP(REAL, KD, VD)                                           \\
        REAL lane[(KD) * (VD)];                                                 \\
        for (long o = 0; o < co; o++)                                           \\
          for (long c = 0; c < ci; c++) {                                       \\
            for (long i = 0; i < (KD) * (VD); i++) lane[i] = 0;                 \\
            for (long t = 0; t < t_out; t++) {                                  \\
              const REAL* restrict dyrow = dy + (o * t_out + t) * (VD);         \\
              const REAL* restrict xbase = xp + (c * (t_out + (KD) - 1) + t) * (VD); \\
              for (long k = 0; k < (KD); k++)                                   \\
                for (long v = 0; v < (VD); v++)                                 \\
                  lane[k * (VD) + v] += dyrow[v] * xbase[k * (VD) + v];         \\
            }                                                                   \\
            for (long k = 0; k < (KD); k++) {                                   \\
              double s = 0;                                                     \\
              for (long v = 0; v < (VD); v++) s += (double) lane[k * (VD) + v]; \\
              dw_acc[(o * ci + c) * (KD) + k] += s;                             \\
            }                                                                   \\
          }

    #define KA_DEFINE_DW_K(SUF, REAL, KD)                                      \\
    static void ka_dw_##SUF##_k##KD(const REAL* restrict xp,                    \\
            const REAL* restrict dy, double* restrict dw_acc,                   \\
            long co, long ci, long t_out) {                                     \\
        KA_DW_LOOP(REAL, KD, 18)                                                \\
    }

    #define KA_INSTANTIATE(SUF, REAL)                                          \\
        KA_DEFINE_FWD_K(SUF, REAL, 3)                                           \\
        KA_DEFINE_FWD_K(SUF, REAL, 5)                                           \\
        KA_DEFINE_FWD_K(SUF, REAL, 7)                                           \\
        KA_DEFINE_FWD_K(SUF, REAL, 9)                                           \\
        KA_DEFINE_FWD_K(SUF, REAL, 11)                                          \\
        KA_DEFINE_FWD_K(SUF, REAL, 13)                                          \\
        KA_DEFINE_FWD_K(SUF, REAL, 15)                                          \\
        KA_DEFINE_FWD_K(SUF, REAL, 17)                                          \\
        KA_DEFINE_DW_K(SUF, REAL, 3)                                            \\
        KA_DEFINE_DW_K(SUF, REAL, 5)                                            \\
        KA_DEFINE_DW_K(SUF, REAL, 7)                                            \\
        KA_DEFINE_DW_K(SUF, REAL, 9)                                            \\
        KA_DEFINE_DW_K(SUF, REAL, 11)                                           \\
        KA_DEFINE_DW_K(SUF, REAL, 13)                                           \\
        KA_DEFINE_DW_K(SUF, REAL, 15)                                           \\
        KA_DEFINE_DW_K(SUF, REAL, 17)                                           \\
        static void ka_fwd_##SUF(const REAL* restrict xp, const REAL* restrict w, \\
                REAL* restrict y, long co, long ci, long kd, long t_out, long vd) { \\
            if (vd == 18) {                                                     \\
                switch (kd) {                                                   \\
                    case 3:  ka_fwd_##SUF##_k3(xp, w, y, co, ci, t_out); return; \\
                    case 5:  ka_fwd_##SUF##_k5(xp, w, y, co, ci, t_out); return; \\
                    case 7:  ka_fwd_##SUF##_k7(xp, w, y, co, ci, t_out); return; \\
                    case 9:  ka_fwd_##SUF##_k9(xp, w, y, co, ci, t_out); return; \\
                    case 11: ka_fwd_##SUF##_k11(xp, w, y, co, ci, t_out); return; \\
                    case 13: ka_fwd_##SUF##_k13(xp, w, y, co, ci, t_out); return; \\
                    case 15: ka_fwd_##SUF##_k15(xp, w, y, co, ci, t_out); return; \\
                    case 17: ka_fwd_##SUF##_k17(xp, w, y, co, ci, t_out); return; \\
                }                                                               \\
            }                                                                   \\
            { KA_FWD_LOOP(REAL, kd, vd) }                                       \\
        }                                                                       \\
        static void ka_dw_##SUF(const REAL* restrict xp, const REAL* restrict dy, \\
                double* restrict dw_acc, long co, long ci, long kd, long t_out, long vd) { \\
            if (vd == 18) {                                                     \\
                switch (kd) {                                                   \\
                    case 3:  ka_dw_##SUF##_k3(xp, dy, dw_acc, co, ci, t_out); return; \\
                    case 5:  ka_dw_##SUF##_k5(xp, dy, dw_acc, co, ci, t_out); return; \\
                    case 7:  ka_dw_##SUF##_k7(xp, dy, dw_acc, co, ci, t_out); return; \\
                    case 9:  ka_dw_##SUF##_k9(xp, dy, dw_acc, co, ci, t_out); return; \\
                    case 11: ka_dw_##SUF##_k11(xp, dy, dw_acc, co, ci, t_out); return; \\
                    case 13: ka_dw_##SUF##_k13(xp, dy, dw_acc, co, ci, t_out); return; \\
                    case 15: ka_dw_##SUF##_k15(xp, dy, dw_acc, co, ci, t_out); return; \\
                    case 17: ka_dw_##SUF##_k17(xp, dy, dw_acc, co, ci, t_out); return; \\
                }                                                               \\
            }                                                                   \\
            { KA_DW_LOOP(REAL, kd, vd) }                                        \\
        }

    KA_INSTANTIATE(f, float)
    KA_INSTANTIATE(d, double)
    """
    void ka_fwd_f(const float*, const float*, float*, long, long, long, long, long) nogil
    void ka_fwd_d(const double*, const double*, double*, long, long, long, long, long) nogil
    void ka_dw_f(const float*, const float*, double*, long, long, long, long, long) nogil
    void ka_dw_d(const double*, const double*, double*, long, long, long, long, long) nogil

ctypedef fused real:
    float
    double

MAX_V = 64
MAX_LANE = 2048


def conv_forward(real[:, :, :, ::1] xp, real[:, :, ::1] w, real[:, :, :, ::1] y):
    """y[n,o,t,v] = sum_{c,k} w[o,c,k] * xp[n,c,t+k,v]; xp pre-padded."""
    cdef long n_batch = y.shape[0]
    cdef long co = y.shape[1]
    cdef long t_out = y.shape[2]
    cdef long v_dim = y.shape[3]
    cdef long ci = w.shape[1]
    cdef long k_dim = w.shape[2]
    cdef Py_ssize_t n
    if v_dim > 64:
        raise ValueError(f"joint dimension {v_dim} exceeds compiled limit 64")
    if xp.shape[2] != t_out + k_dim - 1:
        raise ValueError("padded input length does not match kernel size")
    for n in prange(n_batch, nogil=True, schedule='static'):
        if real is float:
            ka_fwd_f(&xp[n, 0, 0, 0], &w[0, 0, 0], &y[n, 0, 0, 0],
                     co, ci, k_dim, t_out, v_dim)
        else:
            ka_fwd_d(&xp[n, 0, 0, 0], &w[0, 0, 0], &y[n, 0, 0, 0],
                     co, ci, k_dim, t_out, v_dim)


def conv_dw(real[:, :, :, ::1] xp, real[:, :, :, ::1] dy, Py_ssize_t ci, Py_ssize_t k_dim):
    """Returns dw[o,c,k] = sum_{n,t,v} dy[n,o,t,v] * xp[n,c,t+k,v] as float64."""
    cdef long n_batch = dy.shape[0]
    cdef long co = dy.shape[1]
    cdef long t_out = dy.shape[2]
    cdef long v_dim = dy.shape[3]
    cdef Py_ssize_t n, tid
    cdef Py_ssize_t wsize = co * ci * k_dim
    cdef int max_threads = openmp.omp_get_max_threads()
    if v_dim > 64:
        raise ValueError(f"joint dimension {v_dim} exceeds compiled limit 64")
    if k_dim * v_dim > 2048:
        raise ValueError("kernel size exceeds compiled scratch limit")

    acc_np = np.zeros((max_threads, wsize), dtype=np.float64)
    cdef double[:, ::1] acc = acc_np
    with nogil, parallel():
        tid = openmp.omp_get_thread_num()
        for n in prange(n_batch, schedule='static'):
            if real is float:
                ka_dw_f(&xp[n, 0, 0, 0], &dy[n, 0, 0, 0], &acc[tid, 0],
                        co, <long> ci, <long> k_dim, t_out, v_dim)
            else:
                ka_dw_d(&xp[n, 0, 0, 0], &dy[n, 0, 0, 0], &acc[tid, 0],
                        co, <long> ci, <long> k_dim, t_out, v_dim)

    return acc_np.sum(axis=0).reshape(co, ci, k_dim)
