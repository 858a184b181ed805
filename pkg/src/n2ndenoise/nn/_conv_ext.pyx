# cython: language_level=3
"""Same-padded, stride-1 1-D convolution over (batch, time, channels) arrays.

Each batch item is unfolded into a (T, k*C) column buffer and handed to BLAS
gemm, so the hot loop runs inside a single matrix product per item. Loops over
the batch are sequential, which keeps the reduction order (and therefore the
result bits) fixed from run to run.
"""
import numpy as np
cimport numpy as cnp
from libc.string cimport memcpy, memset
from scipy.linalg.cython_blas cimport dgemm, sgemm

cnp.import_array()

ctypedef fused real:
    float
    double


cdef inline void gemm_rm(char ta, char tb, int m, int n, int k,
                         real alpha, real* a, int lda, real* b, int ldb,
                         real beta, real* c, int ldc) noexcept nogil:
    # row-major C(m x n) = alpha * op(A) @ op(B) + beta * C, via the
    # column-major identity C^T = op(B)^T @ op(A)^T
    if real is float:
        sgemm(&tb, &ta, &n, &m, &k, &alpha, b, &ldb, a, &lda, &beta, c, &ldc)
    else:
        dgemm(&tb, &ta, &n, &m, &k, &alpha, b, &ldb, a, &lda, &beta, c, &ldc)


cdef void im2col(real* xb, real* col, int T, int C, int K, int left) noexcept nogil:
    # col[t, d*C + c] = x[t + d - left, c], zero outside [0, T)
    cdef int t, d, src
    cdef size_t row = <size_t>K * C
    for t in range(T):
        for d in range(K):
            src = t + d - left
            if 0 <= src < T:
                memcpy(&col[t * row + d * C], &xb[src * C], C * sizeof(real))
            else:
                memset(&col[t * row + d * C], 0, C * sizeof(real))


def conv1d_forward(real[:, :, ::1] x, real[:, :, ::1] kernel, real[::1] bias):
    cdef int B = x.shape[0], T = x.shape[1], C = x.shape[2]
    cdef int K = kernel.shape[0], O = kernel.shape[2]
    cdef int left = (K - 1) // 2
    cdef int KC = K * C
    dtype = np.float32 if real is float else np.float64
    out_arr = np.empty((B, T, O), dtype=dtype)
    col_arr = np.empty((T, KC), dtype=dtype)
    cdef real[:, :, ::1] out = out_arr
    cdef real[:, ::1] col = col_arr
    cdef int b, t, o
    cdef real one = 1
    with nogil:
        for b in range(B):
            for t in range(T):
                for o in range(O):
                    out[b, t, o] = bias[o]
            im2col(&x[b, 0, 0], &col[0, 0], T, C, K, left)
            gemm_rm(c'N', c'N', T, O, KC, one, &col[0, 0], KC,
                    &kernel[0, 0, 0], O, one, &out[b, 0, 0], O)
    return out_arr


def conv1d_backward(real[:, :, ::1] x, real[:, :, ::1] kernel,
                    real[:, :, ::1] grad_out):
    # grad_x is itself a same-length correlation: grad_out against the
    # time-flipped, in/out-swapped kernel with the padding mirrored
    cdef int B = x.shape[0], T = x.shape[1], C = x.shape[2]
    cdef int K = kernel.shape[0], O = kernel.shape[2]
    cdef int left = (K - 1) // 2
    cdef int KC = K * C, KO = K * O
    dtype = np.float32 if real is float else np.float64
    gx_arr = np.empty((B, T, C), dtype=dtype)
    gk_arr = np.zeros((K, C, O), dtype=dtype)
    gb_arr = np.zeros(O, dtype=dtype)
    col_arr = np.empty((T, KC), dtype=dtype)
    gcol_arr = np.empty((T, KO), dtype=dtype)
    flip_arr = np.ascontiguousarray(np.asarray(kernel)[::-1].transpose(0, 2, 1))
    cdef real[:, :, ::1] gx = gx_arr
    cdef real[:, :, ::1] gk = gk_arr
    cdef real[::1] gb = gb_arr
    cdef real[:, ::1] col = col_arr
    cdef real[:, ::1] gcol = gcol_arr
    cdef real[:, :, ::1] flip = flip_arr
    cdef int b, t, o
    cdef real one = 1, zero = 0
    with nogil:
        for b in range(B):
            for t in range(T):
                for o in range(O):
                    gb[o] += grad_out[b, t, o]
            im2col(&x[b, 0, 0], &col[0, 0], T, C, K, left)
            # grad_kernel (KC x O) += col^T @ grad_out[b]
            gemm_rm(c'T', c'N', KC, O, T, one, &col[0, 0], KC,
                    &grad_out[b, 0, 0], O, one, &gk[0, 0, 0], O)
            im2col(&grad_out[b, 0, 0], &gcol[0, 0], T, O, K, K - 1 - left)
            gemm_rm(c'N', c'N', T, C, KO, one, &gcol[0, 0], KO,
                    &flip[0, 0, 0], C, zero, &gx[b, 0, 0], C)
    return gx_arr, gk_arr, gb_arr
