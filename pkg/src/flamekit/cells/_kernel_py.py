"""Pure-Python cell kernel: Hilbert-curve cell ids on the quadratic cube projection.

Plain int/float functions only, mirrored signature-for-signature by the
compiled twin in _kernel.pyx. Cell ids are 64-bit values: 3 face bits, then
2 bits per level along the Hilbert curve, then a trailing sentinel 1-bit.
"""

import math

IMPLEMENTATION = "python"

MAX_LEVEL = 30
POS_BITS = 2 * MAX_LEVEL + 1
MAX_SIZE = 1 << MAX_LEVEL
NUM_FACES = 6
WRAP_OFFSET = NUM_FACES << POS_BITS

_LOOKUP_BITS = 4
_SWAP_MASK = 0x01
_INVERT_MASK = 0x02

_POS_TO_IJ = ((0, 1, 3, 2), (0, 2, 3, 1), (3, 2, 0, 1), (3, 1, 0, 2))
_POS_TO_ORIENTATION = (_SWAP_MASK, 0, 0, _INVERT_MASK | _SWAP_MASK)
_LOOKUP_POS = [0] * (1 << (2 * _LOOKUP_BITS + 2))
_LOOKUP_IJ = [0] * (1 << (2 * _LOOKUP_BITS + 2))


def _init_lookup_cell(level, i, j, orig_orientation, pos, orientation):
    if level == _LOOKUP_BITS:
        ij = (i << _LOOKUP_BITS) + j
        _LOOKUP_POS[(ij << 2) + orig_orientation] = (pos << 2) + orientation
        _LOOKUP_IJ[(pos << 2) + orig_orientation] = (ij << 2) + orientation
    else:
        level += 1
        i <<= 1
        j <<= 1
        pos <<= 2
        r = _POS_TO_IJ[orientation]
        for index in range(4):
            _init_lookup_cell(
                level, i + (r[index] >> 1), j + (r[index] & 1),
                orig_orientation, pos + index,
                orientation ^ _POS_TO_ORIENTATION[index],
            )


_init_lookup_cell(0, 0, 0, 0, 0, 0)
_init_lookup_cell(0, 0, 0, _SWAP_MASK, 0, _SWAP_MASK)
_init_lookup_cell(0, 0, 0, _INVERT_MASK, 0, _INVERT_MASK)
_init_lookup_cell(0, 0, 0, _SWAP_MASK | _INVERT_MASK, 0,
                  _SWAP_MASK | _INVERT_MASK)


# -- scalar projections ------------------------------------------------------

def st_to_uv(s):
    # quadratic projection: cheap to evaluate, nearly equal-area cells
    if s >= 0.5:
        return (1.0 / 3.0) * (4 * s * s - 1)
    return (1.0 / 3.0) * (1 - 4 * (1 - s) * (1 - s))


def uv_to_st(u):
    if u >= 0:
        return 0.5 * math.sqrt(1 + 3 * u)
    return 1 - 0.5 * math.sqrt(1 - 3 * u)


def st_to_ij(s):
    return max(0, min(MAX_SIZE - 1, math.floor(MAX_SIZE * s)))


def face_uv_to_xyz(face, u, v):
    if face == 0:
        return (1.0, u, v)
    if face == 1:
        return (-u, 1.0, v)
    if face == 2:
        return (-u, -v, 1.0)
    if face == 3:
        return (-1.0, -v, -u)
    if face == 4:
        return (v, -1.0, -u)
    return (v, u, -1.0)


def _valid_face_xyz_to_uv(face, x, y, z):
    if face == 0:
        return y / x, z / x
    if face == 1:
        return -x / y, z / y
    if face == 2:
        return -x / z, -y / z
    if face == 3:
        return z / x, y / x
    if face == 4:
        return z / y, -x / y
    return -y / z, -x / z


def xyz_to_face_uv(x, y, z):
    ax, ay, az = abs(x), abs(y), abs(z)
    if ax > ay:
        face = 0 if ax > az else 2
    else:
        face = 1 if ay > az else 2
    if (x, y, z)[face] < 0:
        face += 3
    u, v = _valid_face_xyz_to_uv(face, x, y, z)
    return face, u, v


def face_xyz_to_uv(face, x, y, z):
    # (ok, u, v): ok is False when the point is on the wrong side of the cube
    w = (x, y, z)[face % 3]
    if face < 3:
        if w <= 0:
            return False, 0.0, 0.0
    elif w >= 0:
        return False, 0.0, 0.0
    u, v = _valid_face_xyz_to_uv(face, x, y, z)
    return True, u, v


def latlng_to_xyz(lat_deg, lng_deg):
    phi = math.radians(lat_deg)
    theta = math.radians(lng_deg)
    cosphi = math.cos(phi)
    return (math.cos(theta) * cosphi, math.sin(theta) * cosphi, math.sin(phi))


def xyz_to_latlng(x, y, z):
    lat = math.atan2(z, math.sqrt(x * x + y * y))
    lng = math.atan2(y, x)
    return math.degrees(lat), math.degrees(lng)


# -- cell id bit operations --------------------------------------------------

def from_face_ij(face, i, j):
    n = face << (POS_BITS - 1)
    bits = face & _SWAP_MASK
    mask = (1 << _LOOKUP_BITS) - 1
    for k in range(7, -1, -1):
        bits += ((i >> (k * _LOOKUP_BITS)) & mask) << (_LOOKUP_BITS + 2)
        bits += ((j >> (k * _LOOKUP_BITS)) & mask) << 2
        bits = _LOOKUP_POS[bits]
        n |= (bits >> 2) << (k * 2 * _LOOKUP_BITS)
        bits &= _SWAP_MASK | _INVERT_MASK
    return n * 2 + 1


def _from_face_ij_wrap(face, i, j):
    # clamp to a leaf just past the face edge, then hop via (u, v) space;
    # the linear projection suffices because only the sign/side matters here
    i = max(-1, min(MAX_SIZE, i))
    j = max(-1, min(MAX_SIZE, j))
    scale = 1.0 / MAX_SIZE
    u = scale * ((i << 1) + 1 - MAX_SIZE)
    v = scale * ((j << 1) + 1 - MAX_SIZE)
    x, y, z = face_uv_to_xyz(face, u, v)
    face, u, v = xyz_to_face_uv(x, y, z)
    return from_face_ij(face, st_to_ij(0.5 * (u + 1)), st_to_ij(0.5 * (v + 1)))


def from_face_ij_same(face, i, j, same_face):
    if same_face:
        return from_face_ij(face, i, j)
    return _from_face_ij_wrap(face, i, j)


def to_face_ij_orientation(cell_id):
    face = cell_id >> POS_BITS
    bits = face & _SWAP_MASK
    i = 0
    j = 0
    for k in range(7, -1, -1):
        nbits = MAX_LEVEL - 7 * _LOOKUP_BITS if k == 7 else _LOOKUP_BITS
        bits += ((cell_id >> (k * 2 * _LOOKUP_BITS + 1)) &
                 ((1 << (2 * nbits)) - 1)) << 2
        bits = _LOOKUP_IJ[bits]
        i += (bits >> (_LOOKUP_BITS + 2)) << (k * _LOOKUP_BITS)
        j += ((bits >> 2) & ((1 << _LOOKUP_BITS) - 1)) << (k * _LOOKUP_BITS)
        bits &= _SWAP_MASK | _INVERT_MASK
    # non-leaf cells at odd levels have the opposite Hilbert orientation
    if (cell_id & -cell_id) & 0x1111111111111110:
        bits ^= _SWAP_MASK
    return face, i, j, bits


def leaf_from_xyz(x, y, z):
    face, u, v = xyz_to_face_uv(x, y, z)
    return from_face_ij(face, st_to_ij(uv_to_st(u)), st_to_ij(uv_to_st(v)))


def leaf_from_latlng(lat_deg, lng_deg):
    x, y, z = latlng_to_xyz(lat_deg, lng_deg)
    return leaf_from_xyz(x, y, z)


def cell_from_latlng(lat_deg, lng_deg, level):
    return parent_at(leaf_from_latlng(lat_deg, lng_deg), level)


def lsb_of(cell_id):
    return cell_id & -cell_id


def lsb_for_level(level):
    return 1 << (2 * (MAX_LEVEL - level))


def level_of(cell_id):
    if cell_id & 1:
        return MAX_LEVEL
    x = cell_id & 0xffffffff
    level = -1
    if x != 0:
        level += 16
    else:
        x = (cell_id >> 32) & 0xffffffff
    x &= -x
    if x & 0x00005555:
        level += 8
    if x & 0x00550055:
        level += 4
    if x & 0x05050505:
        level += 2
    if x & 0x11111111:
        level += 1
    return level


def face_of(cell_id):
    return cell_id >> POS_BITS


def is_leaf(cell_id):
    return (cell_id & 1) != 0


def is_face(cell_id):
    return (cell_id & (lsb_for_level(0) - 1)) == 0


def is_valid_id(cell_id):
    return (0 < cell_id < (1 << 64) and (cell_id >> POS_BITS) < NUM_FACES and
            (lsb_of(cell_id) & 0x1555555555555555) != 0)


def parent_at(cell_id, level):
    new_lsb = lsb_for_level(level)
    return (cell_id & -new_lsb) | new_lsb


def child_at(cell_id, pos):
    new_lsb = lsb_of(cell_id) >> 2
    return cell_id + (2 * pos - 3) * new_lsb


def child_position(cell_id, level):
    # Hilbert position digit (0..3) of the level-`level` ancestor within its parent
    return (cell_id >> (2 * (MAX_LEVEL - level) + 1)) & 3


def range_min(cell_id):
    return cell_id - (lsb_of(cell_id) - 1)


def range_max(cell_id):
    return cell_id + (lsb_of(cell_id) - 1)


def contains_id(parent, other):
    return range_min(parent) <= other <= range_max(parent)


def size_ij(level):
    return 1 << (MAX_LEVEL - level)


# -- cell geometry -----------------------------------------------------------

def uv_bounds(cell_id):
    face, i, j, _ = to_face_ij_orientation(cell_id)
    cell_size = size_ij(level_of(cell_id))
    i_lo = i & -cell_size
    j_lo = j & -cell_size
    scale = 1.0 / MAX_SIZE
    return (face,
            st_to_uv(scale * i_lo), st_to_uv(scale * (i_lo + cell_size)),
            st_to_uv(scale * j_lo), st_to_uv(scale * (j_lo + cell_size)))


def center_uv(cell_id):
    face, si, ti = _center_si_ti(cell_id)
    half = 0.5 / MAX_SIZE
    return st_to_uv(half * si), st_to_uv(half * ti)


def _center_si_ti(cell_id):
    face, i, j, _ = to_face_ij_orientation(cell_id)
    if cell_id & 1:
        delta = 1
    elif (i ^ (cell_id >> 2)) & 1:
        delta = 2
    else:
        delta = 0
    return face, 2 * i + delta, 2 * j + delta


def center_xyz(cell_id):
    face, si, ti = _center_si_ti(cell_id)
    half = 0.5 / MAX_SIZE
    x, y, z = face_uv_to_xyz(face, st_to_uv(half * si), st_to_uv(half * ti))
    n = math.sqrt(x * x + y * y + z * z)
    return x / n, y / n, z / n


def center_latlng(cell_id):
    x, y, z = center_xyz(cell_id)
    return xyz_to_latlng(x, y, z)


def vertices_xyz(cell_id):
    """Four unit-length cell corners in counter-clockwise order."""
    face, u0, u1, v0, v1 = uv_bounds(cell_id)
    us = (u0, u1)
    vs = (v0, v1)
    out = []
    for k in range(4):
        x, y, z = face_uv_to_xyz(face, us[(k >> 1) ^ (k & 1)], vs[k >> 1])
        n = math.sqrt(x * x + y * y + z * z)
        out.append((x / n, y / n, z / n))
    return tuple(out)


def cell_contains_xyz(cell_id, x, y, z):
    face, u0, u1, v0, v1 = uv_bounds(cell_id)
    ok, u, v = face_xyz_to_uv(face, x, y, z)
    if not ok:
        return False
    return u0 <= u <= u1 and v0 <= v <= v1


def _get_u_norm(face, u):
    if face == 0:
        return (u, -1.0, 0.0)
    if face == 1:
        return (1.0, u, 0.0)
    if face == 2:
        return (1.0, 0.0, u)
    if face == 3:
        return (-u, 0.0, 1.0)
    if face == 4:
        return (0.0, -u, 1.0)
    return (0.0, -1.0, -u)


def _get_v_norm(face, v):
    if face == 0:
        return (-v, 0.0, 1.0)
    if face == 1:
        return (0.0, -v, 1.0)
    if face == 2:
        return (0.0, -1.0, -v)
    if face == 3:
        return (v, -1.0, 0.0)
    if face == 4:
        return (1.0, v, 0.0)
    return (1.0, 0.0, v)


def _edge_raw(cell_id, k, face, u0, u1, v0, v1):
    # inward-facing normal of the great circle through edge k
    if k == 0:
        return _get_v_norm(face, v0)            # south
    if k == 1:
        return _get_u_norm(face, u1)            # east
    if k == 2:
        x, y, z = _get_v_norm(face, v1)         # north
        return (-x, -y, -z)
    x, y, z = _get_u_norm(face, u0)             # west
    return (-x, -y, -z)


def cell_cap_bound(cell_id):
    """Bounding cap (axis, height) centered on the cell midpoint."""
    face, u0, u1, v0, v1 = uv_bounds(cell_id)
    x, y, z = face_uv_to_xyz(face, 0.5 * (u0 + u1), 0.5 * (v0 + v1))
    n = math.sqrt(x * x + y * y + z * z)
    ax, ay, az = x / n, y / n, z / n
    height = 0.0
    round_up = 1.0 + 1.0 / (1 << 52)
    for vx, vy, vz in vertices_xyz(cell_id):
        dx, dy, dz = ax - vx, ay - vy, az - vz
        dist2 = dx * dx + dy * dy + dz * dz
        height = max(height, round_up * 0.5 * dist2)
    return ax, ay, az, height


def cap_contains_xyz(ax, ay, az, height, x, y, z):
    dx, dy, dz = ax - x, ay - y, az - z
    return dx * dx + dy * dy + dz * dz <= 2 * height


def _cap_intersects_cell(ax, ay, az, height, cell_id, vertices):
    # true when the cap boundary region crosses the cell, given that no cell
    # vertex is inside the cap
    if height >= 1:
        return False
    if height < 0:
        return False
    if cell_contains_xyz(cell_id, ax, ay, az):
        return True
    sin2_angle = height * (2 - height)
    face, u0, u1, v0, v1 = uv_bounds(cell_id)
    for k in range(4):
        ex, ey, ez = _edge_raw(cell_id, k, face, u0, u1, v0, v1)
        dot = ax * ex + ay * ey + az * ez
        if dot > 0:
            continue
        if dot * dot > sin2_angle * (ex * ex + ey * ey + ez * ez):
            return False
        # closest point on the edge's great circle, toward the cap axis
        dx = ey * az - ez * ay
        dy = ez * ax - ex * az
        dz = ex * ay - ey * ax
        vx, vy, vz = vertices[k]
        wx, wy, wz = vertices[(k + 1) & 3]
        if (dx * vx + dy * vy + dz * vz < 0 and
                dx * wx + dy * wy + dz * wz > 0):
            return True
    return False


def cap_may_intersect_cell(ax, ay, az, height, cell_id):
    vertices = vertices_xyz(cell_id)
    for v in vertices:
        if cap_contains_xyz(ax, ay, az, height, v[0], v[1], v[2]):
            return True
    return _cap_intersects_cell(ax, ay, az, height, cell_id, vertices)


def cap_contains_cell(ax, ay, az, height, cell_id):
    vertices = vertices_xyz(cell_id)
    for v in vertices:
        if not cap_contains_xyz(ax, ay, az, height, v[0], v[1], v[2]):
            return False
    comp_height = 2 - max(height, 0.0)
    return not _cap_intersects_cell(-ax, -ay, -az, comp_height, cell_id,
                                    vertices)


# -- neighbors ---------------------------------------------------------------

def edge_neighbors(cell_id):
    level = level_of(cell_id)
    size = size_ij(level)
    face, i, j, _ = to_face_ij_orientation(cell_id)
    return (
        parent_at(from_face_ij_same(face, i, j - size, j - size >= 0), level),
        parent_at(from_face_ij_same(face, i + size, j,
                                    i + size < MAX_SIZE), level),
        parent_at(from_face_ij_same(face, i, j + size,
                                    j + size < MAX_SIZE), level),
        parent_at(from_face_ij_same(face, i - size, j, i - size >= 0), level),
    )


def vertex_neighbors(cell_id, level):
    """Neighbors at `level` (< this cell's level) around the closest vertex."""
    face, i, j, _ = to_face_ij_orientation(cell_id)
    halfsize = size_ij(level + 1)
    size = halfsize << 1
    if i & halfsize:
        ioffset = size
        isame = (i + size) < MAX_SIZE
    else:
        ioffset = -size
        isame = (i - size) >= 0
    if j & halfsize:
        joffset = size
        jsame = (j + size) < MAX_SIZE
    else:
        joffset = -size
        jsame = (j - size) >= 0

    out = [
        parent_at(cell_id, level),
        parent_at(from_face_ij_same(face, i + ioffset, j, isame), level),
        parent_at(from_face_ij_same(face, i, j + joffset, jsame), level),
    ]
    if isame or jsame:
        out.append(parent_at(
            from_face_ij_same(face, i + ioffset, j + joffset,
                              isame and jsame), level))
    return out
