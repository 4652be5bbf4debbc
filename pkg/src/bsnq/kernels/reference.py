"""Pure-numpy kernels, the fallback when the compiled extension is unavailable.

Expression order matches _accel.pyx term for term so both backends produce
bitwise-identical results.
"""

def thomas_batch(dl, d, du, b, work_c, out):
    """Solve a batch of tridiagonal systems by the Thomas algorithm.

    All arrays have shape (nbatch, n).  dl[:, 0] and du[:, n-1] are ignored.
    work_c is scratch for the modified upper diagonal.  No pivoting: callers
    pass diagonally dominant systems.
    """
    n = d.shape[1]
    m = 1.0 / d[:, 0]
    work_c[:, 0] = du[:, 0] * m
    out[:, 0] = b[:, 0] * m
    for j in range(1, n):
        m = 1.0 / (d[:, j] - dl[:, j] * work_c[:, j - 1])
        work_c[:, j] = du[:, j] * m
        out[:, j] = (b[:, j] - dl[:, j] * out[:, j - 1]) * m
    for j in range(n - 2, -1, -1):
        out[:, j] = out[:, j] - work_c[:, j] * out[:, j + 1]


def ddz_apply(f, dz, out):
    """First derivative along axis 1: centered interior, one-sided 2nd-order edges."""
    nz = f.shape[1]
    inv2dz = 1.0 / (2.0 * dz)
    out[:, 0] = (-3.0 * f[:, 0] + 4.0 * f[:, 1] - f[:, 2]) * inv2dz
    out[:, 1:nz - 1] = (f[:, 2:nz] - f[:, 0:nz - 2]) * inv2dz
    out[:, nz - 1] = (3.0 * f[:, nz - 1] - 4.0 * f[:, nz - 2] + f[:, nz - 3]) * inv2dz


def d2z_apply(f, dz, out):
    """Second derivative along axis 1: 3-point interior, one-sided 2nd-order edges."""
    nz = f.shape[1]
    invdz2 = 1.0 / (dz * dz)
    out[:, 0] = (2.0 * f[:, 0] - 5.0 * f[:, 1] + 4.0 * f[:, 2] - f[:, 3]) * invdz2
    out[:, 1:nz - 1] = (f[:, 0:nz - 2] - 2.0 * f[:, 1:nz - 1] + f[:, 2:nz]) * invdz2
    out[:, nz - 1] = (2.0 * f[:, nz - 1] - 5.0 * f[:, nz - 2]
                      + 4.0 * f[:, nz - 3] - f[:, nz - 4]) * invdz2
