"""Compiled O(N^2) pair sums over grid nodes.

For every target node p the kernels accumulate
    A(p) = sum_{q != p} K(p, q) m(q)        (symmetric 3x3, stored as 6)
    C(p) = sum_{q != p} K(p, q) z(q)        (3-vector)
where K is the regularised kernel Phi_eps, optionally sandwiched between the
projector onto the complement of w = v(p) - v(q).  The diagonal is skipped.

Inner loops are branch free so LLVM can vectorise them; error_model="numpy"
drops the zero-division checks that would otherwise block that.
"""
import numpy as np
from numba import njit, prange

# symmetric storage order
XX, YY, ZZ, XY, XZ, YZ = range(6)

_FM = {"contract", "reassoc", "nsz"}


@njit(cache=True, parallel=True, fastmath=_FM, error_model="numpy")
def phi_pair_sums(Px, Py, Pz, P0, Vx, Vy, Vz, m, Zx, Zy, Zz, eps2, targets,
                  project, A, C):
    n = Px.shape[0]
    for t in prange(targets.shape[0]):
        i = targets[t]
        px, py, pz = Px[i], Py[i], Pz[i]
        p0 = P0[i]
        vx, vy, vz = Vx[i], Vy[i], Vz[i]
        pr = 1.0 if project else 0.0
        a0 = a1 = a2 = a3 = a4 = a5 = 0.0
        c0 = c1 = c2 = 0.0
        for j in range(n):
            qx, qy, qz = Px[j], Py[j], Pz[j]
            dx, dy, dz = px - qx, py - qy, pz - qz
            cx = py * qz - pz * qy
            cy = pz * qx - px * qz
            cz = px * qy - py * qx
            pq0 = p0 * P0[j]
            rho = ((dx * dx + dy * dy + dz * dz + cx * cx + cy * cy + cz * cz)
                   / (pq0 + px * qx + py * qy + pz * qz + 1.0))
            tr = rho * (rho + 2.0)
            r1 = rho + 1.0
            off = 1.0 if j != i else 0.0
            trs = tr + (1.0 - off)
            g = off * r1 * r1 / (pq0 * np.sqrt(trs + eps2) * trs)
            # Phi = g (tr I - d d^T + rho (p q^T + q p^T))
            s0 = g * (tr - dx * dx + 2.0 * rho * px * qx)
            s1 = g * (tr - dy * dy + 2.0 * rho * py * qy)
            s2 = g * (tr - dz * dz + 2.0 * rho * pz * qz)
            s3 = g * (-dx * dy + rho * (px * qy + qx * py))
            s4 = g * (-dx * dz + rho * (px * qz + qx * pz))
            s5 = g * (-dy * dz + rho * (py * qz + qy * pz))
            # projector onto the complement of w (no-op when pr = 0)
            wx, wy, wz = vx - Vx[j], vy - Vy[j], vz - Vz[j]
            inv = pr / np.sqrt(wx * wx + wy * wy + wz * wz + (1.0 - off))
            wx *= inv
            wy *= inv
            wz *= inv
            ux = s0 * wx + s3 * wy + s4 * wz
            uy = s3 * wx + s1 * wy + s5 * wz
            uz = s4 * wx + s5 * wy + s2 * wz
            sw = ux * wx + uy * wy + uz * wz
            s0 += -2.0 * wx * ux + sw * wx * wx
            s1 += -2.0 * wy * uy + sw * wy * wy
            s2 += -2.0 * wz * uz + sw * wz * wz
            s3 += -wx * uy - ux * wy + sw * wx * wy
            s4 += -wx * uz - ux * wz + sw * wx * wz
            s5 += -wy * uz - uy * wz + sw * wy * wz
            mj = m[j]
            zx, zy, zz = Zx[j], Zy[j], Zz[j]
            a0 += s0 * mj
            a1 += s1 * mj
            a2 += s2 * mj
            a3 += s3 * mj
            a4 += s4 * mj
            a5 += s5 * mj
            c0 += s0 * zx + s3 * zy + s4 * zz
            c1 += s3 * zx + s1 * zy + s5 * zz
            c2 += s4 * zx + s5 * zy + s2 * zz
        A[t, 0] = a0
        A[t, 1] = a1
        A[t, 2] = a2
        A[t, 3] = a3
        A[t, 4] = a4
        A[t, 5] = a5
        C[t, 0] = c0
        C[t, 1] = c1
        C[t, 2] = c2


@njit(cache=True, parallel=True, fastmath=_FM, error_model="numpy")
def scalar_pair_sums(Px, Py, Pz, P0, m, eps2, targets, kind, out):
    """Off-diagonal sums for the non-conservative and conservative drifts.

    kind 0: sum 4 (rho+1)/(p0 q0 sqrt(tau rho)) m(q)          -> out[:, 0]
    kind 1: sum 2 Lambda_eps rho (p + q) m(q)                  -> out[:, 0:3]
    kind 2: sum 2 Lambda_eps/(tau rho) ((rho+1) p - q) m(q)    -> out[:, 0:3]
    Lambda_eps = (rho+1)^2/(p0 q0) (tau rho + eps^2)^{-1/2} (tau rho)^{-1}
    reduces to Lambda at eps = 0.
    """
    n = Px.shape[0]
    for t in prange(targets.shape[0]):
        i = targets[t]
        px, py, pz = Px[i], Py[i], Pz[i]
        p0 = P0[i]
        o0 = o1 = o2 = 0.0
        for j in range(n):
            qx, qy, qz = Px[j], Py[j], Pz[j]
            dx, dy, dz = px - qx, py - qy, pz - qz
            cx = py * qz - pz * qy
            cy = pz * qx - px * qz
            cz = px * qy - py * qx
            pq0 = p0 * P0[j]
            rho = ((dx * dx + dy * dy + dz * dz + cx * cx + cy * cy + cz * cz)
                   / (pq0 + px * qx + py * qy + pz * qz + 1.0))
            tr = rho * (rho + 2.0)
            r1 = rho + 1.0
            off = 1.0 if j != i else 0.0
            trs = tr + (1.0 - off)
            w = off * m[j]
            if kind == 0:
                o0 += 4.0 * r1 / (pq0 * np.sqrt(trs)) * w
            else:
                lam = 2.0 * w * r1 * r1 / (pq0 * trs * np.sqrt(trs + eps2))
                if kind == 1:
                    lam *= rho
                    o0 += lam * (px + qx)
                    o1 += lam * (py + qy)
                    o2 += lam * (pz + qz)
                else:
                    o0 += lam * (r1 * px - qx)
                    o1 += lam * (r1 * py - qy)
                    o2 += lam * (r1 * pz - qz)
        out[t, 0] = o0
        if kind != 0:
            out[t, 1] = o1
            out[t, 2] = o2


@njit(cache=True, parallel=True, fastmath=_FM, error_model="numpy")
def coulomb_pair_sums(x, y, z, w):
    """sum_{q != p} w(q) / |p - q| for every node p."""
    n = x.shape[0]
    out = np.empty(n)
    for i in prange(n):
        acc = 0.0
        for j in range(n):
            dx, dy, dz = x[i] - x[j], y[i] - y[j], z[i] - z[j]
            off = 1.0 if j != i else 0.0
            acc += off * w[j] / np.sqrt(dx * dx + dy * dy + dz * dz + (1.0 - off))
        out[i] = acc
    return out


def unpack_sym(A6):
    """(..., 6) symmetric storage -> (..., 3, 3)."""
    out = np.empty(A6.shape[:-1] + (3, 3))
    out[..., 0, 0] = A6[..., XX]
    out[..., 1, 1] = A6[..., YY]
    out[..., 2, 2] = A6[..., ZZ]
    out[..., 0, 1] = out[..., 1, 0] = A6[..., XY]
    out[..., 0, 2] = out[..., 2, 0] = A6[..., XZ]
    out[..., 1, 2] = out[..., 2, 1] = A6[..., YZ]
    return out
