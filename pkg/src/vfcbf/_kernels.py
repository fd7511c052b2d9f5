"""Numba kernels behind the renderers and the fusion pass.

Everything in here works on plain contiguous float64 arrays so the hot
loops stay in nopython mode; the dataclass-facing wrappers live in
``world`` and ``scene_grid``. Per-ray work is independent, so the
parallel kernels are deterministic regardless of thread count.
"""
from __future__ import annotations

import numpy as np
from numba import njit, prange

PRIM_BOX = 0
PRIM_SPHERE = 1
PRIM_ROOM = 2  # inverted box: free inside, solid everywhere outside

SPHERE_TRACE_MAX_STEPS = 128
SPHERE_TRACE_HIT_EPS = 1e-4


@njit(cache=True, inline="always")
def _box_distance(px, py, pz, cx, cy, cz, hx, hy, hz):
    qx = abs(px - cx) - hx
    qy = abs(py - cy) - hy
    qz = abs(pz - cz) - hz
    ox = qx if qx > 0.0 else 0.0
    oy = qy if qy > 0.0 else 0.0
    oz = qz if qz > 0.0 else 0.0
    outside = np.sqrt(ox * ox + oy * oy + oz * oz)
    m = qx
    if qy > m:
        m = qy
    if qz > m:
        m = qz
    inside = m if m < 0.0 else 0.0
    return outside + inside


@njit(cache=True, inline="always")
def _scene_distance(px, py, pz, types, centers, params):
    best = 1e30
    best_k = 0
    for k in range(types.shape[0]):
        cx = centers[k, 0]
        cy = centers[k, 1]
        cz = centers[k, 2]
        if types[k] == PRIM_SPHERE:
            dx = px - cx
            dy = py - cy
            dz = pz - cz
            d = np.sqrt(dx * dx + dy * dy + dz * dz) - params[k, 0]
        else:
            d = _box_distance(px, py, pz, cx, cy, cz,
                              params[k, 0], params[k, 1], params[k, 2])
            if types[k] == PRIM_ROOM:
                d = -d
        if d < best:
            best = d
            best_k = k
    return best, best_k


@njit(cache=True)
def scene_sdf_point(px, py, pz, types, centers, params):
    d, _ = _scene_distance(px, py, pz, types, centers, params)
    return d


@njit(cache=True, parallel=True)
def scene_sdf_batch(points, types, centers, params, out):
    for i in prange(points.shape[0]):
        d, _ = _scene_distance(points[i, 0], points[i, 1], points[i, 2],
                               types, centers, params)
        out[i] = d


@njit(cache=True, parallel=True)
def sphere_trace(origin, dirs, types, centers, params, colors, bg,
                 max_range, depth_out, rgb_out):
    """First-hit depth and flat-shaded color per ray, miss -> max_range."""
    ox = origin[0]
    oy = origin[1]
    oz = origin[2]
    n = dirs.shape[0]
    for i in prange(n):
        dx = dirs[i, 0]
        dy = dirs[i, 1]
        dz = dirs[i, 2]
        t = 0.0
        hit = -1
        last_k = 0
        for _ in range(SPHERE_TRACE_MAX_STEPS):
            d, k = _scene_distance(ox + t * dx, oy + t * dy, oz + t * dz,
                                   types, centers, params)
            last_k = k
            if d < SPHERE_TRACE_HIT_EPS:
                hit = k
                break
            t += d
            if t >= max_range:
                break
        if hit < 0 and t >= max_range:
            depth_out[i] = max_range
            rgb_out[i, 0] = bg[0]
            rgb_out[i, 1] = bg[1]
            rgb_out[i, 2] = bg[2]
        else:
            # converged hit, or step budget spent while still marching:
            # report the distance reached (slight underestimate, never a miss)
            if hit < 0:
                hit = last_k
            tt = t
            if tt > max_range:
                tt = max_range
            if tt < 1e-9:
                tt = 1e-9
            depth_out[i] = tt
            rgb_out[i, 0] = colors[hit, 0]
            rgb_out[i, 1] = colors[hit, 1]
            rgb_out[i, 2] = colors[hit, 2]


@njit(cache=True, inline="always")
def _trilinear_setup(bx, by, bz, ivx, ivy, ivz, nx, ny, nz, px, py, pz):
    """Continuous voxel-center index and blend weights, clamped to the lattice."""
    ux = (px - bx) * ivx - 0.5
    uy = (py - by) * ivy - 0.5
    uz = (pz - bz) * ivz - 0.5
    if ux < 0.0:
        ux = 0.0
    if uy < 0.0:
        uy = 0.0
    if uz < 0.0:
        uz = 0.0
    if ux > nx - 1.0:
        ux = nx - 1.0
    if uy > ny - 1.0:
        uy = ny - 1.0
    if uz > nz - 1.0:
        uz = nz - 1.0
    i0 = int(ux)
    j0 = int(uy)
    k0 = int(uz)
    if i0 > nx - 2:
        i0 = nx - 2
    if j0 > ny - 2:
        j0 = ny - 2
    if k0 > nz - 2:
        k0 = nz - 2
    return i0, j0, k0, ux - i0, uy - j0, uz - k0


@njit(cache=True)
def trilinear_sigma(sigma, bmin, bmax, inv_voxel, px, py, pz):
    """Trilinear density at a point; zero outside the grid bounds."""
    if (px < bmin[0] or py < bmin[1] or pz < bmin[2]
            or px > bmax[0] or py > bmax[1] or pz > bmax[2]):
        return 0.0
    nx, ny, nz = sigma.shape
    i0, j0, k0, fx, fy, fz = _trilinear_setup(
        bmin[0], bmin[1], bmin[2], inv_voxel[0], inv_voxel[1], inv_voxel[2],
        nx, ny, nz, px, py, pz)
    gx = 1.0 - fx
    gy = 1.0 - fy
    gz = 1.0 - fz
    return (sigma[i0, j0, k0] * gx * gy * gz
            + sigma[i0 + 1, j0, k0] * fx * gy * gz
            + sigma[i0, j0 + 1, k0] * gx * fy * gz
            + sigma[i0, j0, k0 + 1] * gx * gy * fz
            + sigma[i0 + 1, j0 + 1, k0] * fx * fy * gz
            + sigma[i0 + 1, j0, k0 + 1] * fx * gy * fz
            + sigma[i0, j0 + 1, k0 + 1] * gx * fy * fz
            + sigma[i0 + 1, j0 + 1, k0 + 1] * fx * fy * fz)


@njit(cache=True, parallel=True)
def trilinear_sigma_batch(sigma, bmin, bmax, inv_voxel, points, out):
    for i in prange(points.shape[0]):
        out[i] = trilinear_sigma(sigma, bmin, bmax, inv_voxel,
                                 points[i, 0], points[i, 1], points[i, 2])


@njit(cache=True, parallel=True)
def volume_render_rays(sigma, color, bmin, bmax, inv_voxel,
                       origins, dirs, t_near, t_far, n_samples,
                       max_range, bg, residual_to_near,
                       depth_out, rgb_out, wsum_out):
    """Transmittance-weighted depth/color along each ray.

    Samples sit at the midpoints of ``n_samples`` equal strata of
    [t_near, t_far]. Residual weight goes to max_range / background
    (or to t_near when ``residual_to_near``). Rays are flattened over
    poses so a batch parallelizes across everything at once.
    """
    nx, ny, nz = sigma.shape
    dt = (t_far - t_near) / n_samples
    m = dirs.shape[0]
    for i in prange(m):
        ox = origins[i, 0]
        oy = origins[i, 1]
        oz = origins[i, 2]
        dx = dirs[i, 0]
        dy = dirs[i, 1]
        dz = dirs[i, 2]
        trans = 1.0
        acc_d = 0.0
        acc_r = 0.0
        acc_g = 0.0
        acc_b = 0.0
        for s in range(n_samples):
            t = t_near + (s + 0.5) * dt
            px = ox + t * dx
            py = oy + t * dy
            pz = oz + t * dz
            if (px < bmin[0] or py < bmin[1] or pz < bmin[2]
                    or px > bmax[0] or py > bmax[1] or pz > bmax[2]):
                continue
            i0, j0, k0, fx, fy, fz = _trilinear_setup(
                bmin[0], bmin[1], bmin[2],
                inv_voxel[0], inv_voxel[1], inv_voxel[2],
                nx, ny, nz, px, py, pz)
            gx = 1.0 - fx
            gy = 1.0 - fy
            gz = 1.0 - fz
            w000 = gx * gy * gz
            w100 = fx * gy * gz
            w010 = gx * fy * gz
            w001 = gx * gy * fz
            w110 = fx * fy * gz
            w101 = fx * gy * fz
            w011 = gx * fy * fz
            w111 = fx * fy * fz
            sig = (sigma[i0, j0, k0] * w000
                   + sigma[i0 + 1, j0, k0] * w100
                   + sigma[i0, j0 + 1, k0] * w010
                   + sigma[i0, j0, k0 + 1] * w001
                   + sigma[i0 + 1, j0 + 1, k0] * w110
                   + sigma[i0 + 1, j0, k0 + 1] * w101
                   + sigma[i0, j0 + 1, k0 + 1] * w011
                   + sigma[i0 + 1, j0 + 1, k0 + 1] * w111)
            if sig <= 0.0:
                continue
            a = 1.0 - np.exp(-sig * dt)
            w = trans * a
            acc_d += w * t
            cr = (color[i0, j0, k0, 0] * w000
                  + color[i0 + 1, j0, k0, 0] * w100
                  + color[i0, j0 + 1, k0, 0] * w010
                  + color[i0, j0, k0 + 1, 0] * w001
                  + color[i0 + 1, j0 + 1, k0, 0] * w110
                  + color[i0 + 1, j0, k0 + 1, 0] * w101
                  + color[i0, j0 + 1, k0 + 1, 0] * w011
                  + color[i0 + 1, j0 + 1, k0 + 1, 0] * w111)
            cg = (color[i0, j0, k0, 1] * w000
                  + color[i0 + 1, j0, k0, 1] * w100
                  + color[i0, j0 + 1, k0, 1] * w010
                  + color[i0, j0, k0 + 1, 1] * w001
                  + color[i0 + 1, j0 + 1, k0, 1] * w110
                  + color[i0 + 1, j0, k0 + 1, 1] * w101
                  + color[i0, j0 + 1, k0 + 1, 1] * w011
                  + color[i0 + 1, j0 + 1, k0 + 1, 1] * w111)
            cb = (color[i0, j0, k0, 2] * w000
                  + color[i0 + 1, j0, k0, 2] * w100
                  + color[i0, j0 + 1, k0, 2] * w010
                  + color[i0, j0, k0 + 1, 2] * w001
                  + color[i0 + 1, j0 + 1, k0, 2] * w110
                  + color[i0 + 1, j0, k0 + 1, 2] * w101
                  + color[i0, j0 + 1, k0 + 1, 2] * w011
                  + color[i0 + 1, j0 + 1, k0 + 1, 2] * w111)
            acc_r += w * cr
            acc_g += w * cg
            acc_b += w * cb
            trans *= 1.0 - a
            if trans < 1e-6:
                break
        resid_depth = t_near if residual_to_near else max_range
        d = acc_d + trans * resid_depth
        if d > max_range:
            d = max_range
        if d < 1e-9:
            d = 1e-9
        depth_out[i] = d
        r = acc_r + trans * bg[0]
        g = acc_g + trans * bg[1]
        b = acc_b + trans * bg[2]
        rgb_out[i, 0] = min(max(r, 0.0), 1.0)
        rgb_out[i, 1] = min(max(g, 0.0), 1.0)
        rgb_out[i, 2] = min(max(b, 0.0), 1.0)
        wsum_out[i] = 1.0 - trans


@njit(cache=True)
def fuse_mark(bmin, bmax, inv_voxel, nx, ny, nz,
              origin, dirs, depths, pix_rgb, max_range,
              carve_margin, deposit_width, step,
              carve_mask, deposit_mask, color_sum, color_cnt):
    """Mark carve/deposit voxels for one observation.

    Free space along each ray (up to carve_margin short of the observed
    depth) is marked for relaxation toward zero; a band of ``deposit_width``
    just behind the observed surface is marked for relaxation toward
    sigma_max, accumulating the pixel color. Runs single-threaded so the
    color accumulation stays deterministic.
    """
    ox = origin[0]
    oy = origin[1]
    oz = origin[2]
    n = dirs.shape[0]
    for i in range(n):
        d = depths[i]
        dx = dirs[i, 0]
        dy = dirs[i, 1]
        dz = dirs[i, 2]
        carve_end = d - carve_margin
        t = 0.5 * step
        while t < carve_end:
            px = ox + t * dx
            py = oy + t * dy
            pz = oz + t * dz
            ix = int((px - bmin[0]) * inv_voxel[0])
            iy = int((py - bmin[1]) * inv_voxel[1])
            iz = int((pz - bmin[2]) * inv_voxel[2])
            if 0 <= ix < nx and 0 <= iy < ny and 0 <= iz < nz:
                carve_mask[ix, iy, iz] = 1
            t += step
        if d >= max_range:
            continue  # nothing was hit: carve only
        n_dep = int(deposit_width / step) + 1
        dep_step = deposit_width / n_dep
        for k in range(n_dep + 1):
            t = d + k * dep_step
            px = ox + t * dx
            py = oy + t * dy
            pz = oz + t * dz
            ix = int((px - bmin[0]) * inv_voxel[0])
            iy = int((py - bmin[1]) * inv_voxel[1])
            iz = int((pz - bmin[2]) * inv_voxel[2])
            if 0 <= ix < nx and 0 <= iy < ny and 0 <= iz < nz:
                deposit_mask[ix, iy, iz] = 1
                color_sum[ix, iy, iz, 0] += pix_rgb[i, 0]
                color_sum[ix, iy, iz, 1] += pix_rgb[i, 1]
                color_sum[ix, iy, iz, 2] += pix_rgb[i, 2]
                color_cnt[ix, iy, iz] += 1
