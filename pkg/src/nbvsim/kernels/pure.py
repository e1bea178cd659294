"""Pure-Python voxel store and grid ray traversal.

Reference implementation of the kernel API. The compiled backend in
``_core.pyx`` mirrors this module operation-for-operation (same update
order, same clamping, same stepping rule) so that both produce bit-identical
maps and traces.
"""

import math

import numpy as np

BACKEND_NAME = "pure"

REASON_MAX_RANGE = 0
REASON_VIS_CUTOFF = 1
REASON_BOUNDS = 2

# grid indices live in signed 21-bit range so a key packs into one int64
KEY_BIAS = 1 << 20


def pack_key(ix, iy, iz):
    return ((ix + KEY_BIAS) << 42) | ((iy + KEY_BIAS) << 21) | (iz + KEY_BIAS)


def unpack_key(key):
    return (
        (key >> 42) - KEY_BIAS,
        ((key >> 21) & 0x1FFFFF) - KEY_BIAS,
        (key & 0x1FFFFF) - KEY_BIAS,
    )


def pack_keys(ijk):
    """Vectorized packing of an (n, 3) int array into int64 keys."""
    a = np.asarray(ijk, dtype=np.int64)
    if a.ndim == 1:
        a = a[None, :]
    return ((a[:, 0] + KEY_BIAS) << 42) | ((a[:, 1] + KEY_BIAS) << 21) | (a[:, 2] + KEY_BIAS)


def _sigmoid(logodds):
    return 1.0 / (1.0 + math.exp(-logodds))


class VoxelStore:
    """Sparse voxel map: occupancy log-odds plus per-class pseudo-counts.

    One ``integrate_rays`` call is one scan; within a scan each voxel receives
    at most one hit update or one miss update (hit wins).
    """

    def __init__(self, resolution, num_classes, hit_logodds, miss_logodds,
                 clamp_min, clamp_max):
        if resolution <= 0:
            raise ValueError("resolution must be positive")
        if num_classes < 2:
            raise ValueError("need at least two classes")
        self.resolution = float(resolution)
        self.num_classes = int(num_classes)
        self.hit_logodds = float(hit_logodds)
        self.miss_logodds = float(miss_logodds)
        self.clamp_min = float(clamp_min)
        self.clamp_max = float(clamp_max)
        self._index = {}      # packed key -> row
        self._keys = []       # packed key per row
        self._logodds = []
        self._counts = []     # per row: list of num_classes floats
        self._hit_stamp = []
        self._miss_stamp = []
        self._scan = 0
        self._created = 0

    def __len__(self):
        return len(self._keys)

    # -- row helpers ---------------------------------------------------

    def _get_or_create(self, key):
        row = self._index.get(key)
        if row is None:
            row = len(self._keys)
            self._index[key] = row
            self._keys.append(key)
            self._logodds.append(0.0)
            self._counts.append([0.0] * self.num_classes)
            self._hit_stamp.append(0)
            self._miss_stamp.append(0)
            self._created += 1
        return row

    def _clamp(self, value):
        if value < self.clamp_min:
            return self.clamp_min
        if value > self.clamp_max:
            return self.clamp_max
        return value

    # -- integration ----------------------------------------------------

    def integrate_rays(self, origin, endpoints, labels, is_hit, max_range):
        """Integrate one scan.

        endpoints of non-hit rays must already be truncated to max_range.
        Hit rays: endpoint voxel gets an occupancy hit and one class count;
        voxels walked before it get misses. Non-hit rays: every walked voxel
        (including the last) gets a miss. Returns (hits, misses, created).
        """
        origin = [float(origin[0]), float(origin[1]), float(origin[2])]
        n = len(endpoints)
        self._scan += 1
        scan = self._scan
        self._created = 0
        hits = 0
        misses = 0

        # phase A: endpoint hits (first ray landing in a voxel sets its label)
        end_rows = [-1] * n
        for i in range(n):
            if not is_hit[i]:
                continue
            ex, ey, ez = endpoints[i]
            key = pack_key(
                math.floor(ex / self.resolution),
                math.floor(ey / self.resolution),
                math.floor(ez / self.resolution),
            )
            row = self._get_or_create(key)
            end_rows[i] = row
            if self._hit_stamp[row] != scan:
                self._hit_stamp[row] = scan
                self._logodds[row] = self._clamp(self._logodds[row] + self.hit_logodds)
                self._counts[row][labels[i]] += 1.0
                hits += 1

        # phase B: free-space carving along each ray
        for i in range(n):
            ex, ey, ez = endpoints[i]
            dx = float(ex) - origin[0]
            dy = float(ey) - origin[1]
            dz = float(ez) - origin[2]
            dist = math.sqrt(dx * dx + dy * dy + dz * dz)
            if dist <= 0.0:
                continue
            ux, uy, uz = dx / dist, dy / dist, dz / dist
            end_row = end_rows[i]
            for ix, iy, iz in _walk_cells(origin, (ux, uy, uz), dist, self.resolution):
                key = pack_key(ix, iy, iz)
                row = self._index.get(key)
                if is_hit[i] and row is not None and row == end_row:
                    continue
                if row is None:
                    row = self._get_or_create(key)
                if self._hit_stamp[row] == scan:
                    continue
                if self._miss_stamp[row] != scan:
                    self._miss_stamp[row] = scan
                    self._logodds[row] = self._clamp(self._logodds[row] + self.miss_logodds)
                    misses += 1

        return hits, misses, self._created

    # -- traversal --------------------------------------------------------

    def traverse(self, origin, direction, max_range, vis_cutoff):
        """Walk the grid cells under a single ray.

        Returns (ijk int32 (n,3), p_o (n,), P_v (n,), known uint8 (n,), reason).
        P_v follows the running product of (1 - p_o) over all preceding
        voxels; early termination tracks transmittance through observed
        voxels only, so unknown space never truncates a trace.
        """
        origin = [float(origin[0]), float(origin[1]), float(origin[2])]
        direction = [float(direction[0]), float(direction[1]), float(direction[2])]
        cells = []
        pos = []
        pvs = []
        known = []
        pv = 1.0
        vis_obs = 1.0
        reason = REASON_MAX_RANGE
        for ix, iy, iz in _walk_cells(origin, direction, float(max_range), self.resolution):
            row = self._index.get(pack_key(ix, iy, iz))
            if row is None:
                po = 0.5
                known.append(0)
            else:
                po = _sigmoid(self._logodds[row])
                known.append(1)
            cells.append((ix, iy, iz))
            pos.append(po)
            pvs.append(pv)
            pv = pv * (1.0 - po)
            if row is not None:
                vis_obs = vis_obs * (1.0 - po)
                if vis_obs < vis_cutoff:
                    reason = REASON_VIS_CUTOFF
                    break
        ijk = np.array(cells, dtype=np.int32).reshape(-1, 3)
        return (ijk, np.array(pos), np.array(pvs),
                np.array(known, dtype=np.uint8), reason)

    def traverse_bundle(self, origin, directions, max_range, vis_cutoff):
        """Traverse many rays from one origin.

        Returns (offsets int64 (R+1,), ijk (M,3), p_o (M,), P_v (M,),
        known (M,)) with per-ray segments at offsets[i]:offsets[i+1].
        """
        offsets = [0]
        parts = []
        for d in directions:
            ijk, po, pv, kn, _ = self.traverse(origin, d, max_range, vis_cutoff)
            parts.append((ijk, po, pv, kn))
            offsets.append(offsets[-1] + len(po))
        if parts:
            ijk = np.concatenate([p[0] for p in parts])
            po = np.concatenate([p[1] for p in parts])
            pv = np.concatenate([p[2] for p in parts])
            kn = np.concatenate([p[3] for p in parts])
        else:
            ijk = np.zeros((0, 3), dtype=np.int32)
            po = np.zeros(0)
            pv = np.zeros(0)
            kn = np.zeros(0, dtype=np.uint8)
        return np.array(offsets, dtype=np.int64), ijk, po, pv, kn

    # -- queries -----------------------------------------------------------

    def lookup_many(self, ijk):
        """(found uint8 (n,), logodds (n,), counts (n, K)) for grid indices."""
        ijk = np.asarray(ijk, dtype=np.int64).reshape(-1, 3)
        n = len(ijk)
        found = np.zeros(n, dtype=np.uint8)
        logodds = np.zeros(n)
        counts = np.zeros((n, self.num_classes))
        for i in range(n):
            row = self._index.get(pack_key(int(ijk[i, 0]), int(ijk[i, 1]), int(ijk[i, 2])))
            if row is not None:
                found[i] = 1
                logodds[i] = self._logodds[row]
                counts[i] = self._counts[row]
        return found, logodds, counts

    def all_voxels(self):
        """(ijk int32 (n,3), logodds (n,), counts (n,K)) in insertion order."""
        n = len(self._keys)
        ijk = np.zeros((n, 3), dtype=np.int32)
        for i, key in enumerate(self._keys):
            ijk[i] = unpack_key(key)
        return ijk, np.array(self._logodds), np.array(self._counts).reshape(n, self.num_classes)

    def set_voxel(self, ix, iy, iz, logodds, counts):
        if len(counts) != self.num_classes:
            raise ValueError("counts length mismatch")
        row = self._get_or_create(pack_key(int(ix), int(iy), int(iz)))
        self._logodds[row] = float(logodds)
        self._counts[row] = [float(c) for c in counts]

    def frontier_voxels(self):
        """Grid indices of observed free voxels with an unknown 6-neighbor."""
        out = []
        for key, row in self._index.items():
            if self._logodds[row] >= 0.0:
                continue
            ix, iy, iz = unpack_key(key)
            for dx, dy, dz in ((1, 0, 0), (-1, 0, 0), (0, 1, 0),
                               (0, -1, 0), (0, 0, 1), (0, 0, -1)):
                if pack_key(ix + dx, iy + dy, iz + dz) not in self._index:
                    out.append((ix, iy, iz))
                    break
        return np.array(sorted(out), dtype=np.int32).reshape(-1, 3)


def _walk_cells(origin, direction, length, resolution):
    """Amanatides-Woo stepping: yield (ix, iy, iz) of every grid cell the
    segment [origin, origin + length*direction] passes through, in order.

    direction must be unit length. Cells entered exactly at the segment end
    are excluded. Ties in the boundary distance step x before y before z.
    """
    ox, oy, oz = origin
    dx, dy, dz = direction
    ix = math.floor(ox / resolution)
    iy = math.floor(oy / resolution)
    iz = math.floor(oz / resolution)

    step_x, tmax_x, tdelta_x = _axis_setup(ox, dx, ix, resolution)
    step_y, tmax_y, tdelta_y = _axis_setup(oy, dy, iy, resolution)
    step_z, tmax_z, tdelta_z = _axis_setup(oz, dz, iz, resolution)

    max_steps = int(3.0 * length / resolution) + 8
    for _ in range(max_steps):
        yield ix, iy, iz
        if tmax_x <= tmax_y and tmax_x <= tmax_z:
            if tmax_x >= length:
                return
            ix += step_x
            tmax_x += tdelta_x
        elif tmax_y <= tmax_z:
            if tmax_y >= length:
                return
            iy += step_y
            tmax_y += tdelta_y
        else:
            if tmax_z >= length:
                return
            iz += step_z
            tmax_z += tdelta_z


def _axis_setup(o, d, cell, resolution):
    if d > 0.0:
        return 1, ((cell + 1) * resolution - o) / d, resolution / d
    if d < 0.0:
        return -1, (cell * resolution - o) / d, -resolution / d
    return 0, math.inf, math.inf
