# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot-loop kernels: batched tridiagonal solves and wall-normal stencils.

Arithmetic expression order matches kernels/reference.py term for term so both
backends produce bitwise-identical results.
"""


def thomas_batch(double[:, ::1] dl, double[:, ::1] d, double[:, ::1] du,
                 double[:, ::1] b, double[:, ::1] work_c, double[:, ::1] out):
    """Solve a batch of tridiagonal systems by the Thomas algorithm.

    All arrays have shape (nbatch, n).  dl[:, 0] and du[:, n-1] are ignored.
    work_c is scratch for the modified upper diagonal.  No pivoting: callers
    pass diagonally dominant systems.
    """
    cdef Py_ssize_t nb = d.shape[0]
    cdef Py_ssize_t n = d.shape[1]
    cdef Py_ssize_t i, j
    cdef double m
    for i in range(nb):
        m = 1.0 / d[i, 0]
        work_c[i, 0] = du[i, 0] * m
        out[i, 0] = b[i, 0] * m
        for j in range(1, n):
            m = 1.0 / (d[i, j] - dl[i, j] * work_c[i, j - 1])
            work_c[i, j] = du[i, j] * m
            out[i, j] = (b[i, j] - dl[i, j] * out[i, j - 1]) * m
        for j in range(n - 2, -1, -1):
            out[i, j] = out[i, j] - work_c[i, j] * out[i, j + 1]


def ddz_apply(double[:, ::1] f, double dz, double[:, ::1] out):
    """First derivative along axis 1: centered interior, one-sided 2nd-order edges."""
    cdef Py_ssize_t nx = f.shape[0]
    cdef Py_ssize_t nz = f.shape[1]
    cdef Py_ssize_t i, j
    cdef double inv2dz = 1.0 / (2.0 * dz)
    for i in range(nx):
        out[i, 0] = (-3.0 * f[i, 0] + 4.0 * f[i, 1] - f[i, 2]) * inv2dz
        for j in range(1, nz - 1):
            out[i, j] = (f[i, j + 1] - f[i, j - 1]) * inv2dz
        out[i, nz - 1] = (3.0 * f[i, nz - 1] - 4.0 * f[i, nz - 2] + f[i, nz - 3]) * inv2dz


def d2z_apply(double[:, ::1] f, double dz, double[:, ::1] out):
    """Second derivative along axis 1: 3-point interior, one-sided 2nd-order edges."""
    cdef Py_ssize_t nx = f.shape[0]
    cdef Py_ssize_t nz = f.shape[1]
    cdef Py_ssize_t i, j
    cdef double invdz2 = 1.0 / (dz * dz)
    for i in range(nx):
        out[i, 0] = (2.0 * f[i, 0] - 5.0 * f[i, 1] + 4.0 * f[i, 2] - f[i, 3]) * invdz2
        for j in range(1, nz - 1):
            out[i, j] = (f[i, j - 1] - 2.0 * f[i, j] + f[i, j + 1]) * invdz2
        out[i, nz - 1] = (2.0 * f[i, nz - 1] - 5.0 * f[i, nz - 2]
                          + 4.0 * f[i, nz - 3] - f[i, nz - 4]) * invdz2
