# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled cell kernel; signature-for-signature twin of _kernel_py."""

from libc.math cimport atan2, cos, fabs, floor, sin, sqrt, M_PI

ctypedef unsigned long long u64
ctypedef long long i64

IMPLEMENTATION = "compiled"

MAX_LEVEL = 30
POS_BITS = 61
MAX_SIZE = 1 << 30
NUM_FACES = 6
WRAP_OFFSET = 6 << 61

cdef int _MAX_LEVEL = 30
cdef int _POS_BITS = 61
cdef i64 _MAX_SIZE = (<i64>1) << 30

cdef int _LOOKUP_BITS = 4
cdef int _SWAP_MASK = 0x01
cdef int _INVERT_MASK = 0x02

cdef int[4][4] _POS_TO_IJ
cdef int[4] _POS_TO_ORIENTATION
cdef int[1024] _LOOKUP_POS
cdef int[1024] _LOOKUP_IJ

_POS_TO_IJ[0][:] = [0, 1, 3, 2]
_POS_TO_IJ[1][:] = [0, 2, 3, 1]
_POS_TO_IJ[2][:] = [3, 2, 0, 1]
_POS_TO_IJ[3][:] = [3, 1, 0, 2]
_POS_TO_ORIENTATION[:] = [_SWAP_MASK, 0, 0, _INVERT_MASK | _SWAP_MASK]


cdef void _init_lookup_cell(int level, int i, int j, int orig_orientation,
                            int pos, int orientation):
    cdef int ij, index
    cdef int* r
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
                orientation ^ _POS_TO_ORIENTATION[index])


_init_lookup_cell(0, 0, 0, 0, 0, 0)
_init_lookup_cell(0, 0, 0, _SWAP_MASK, 0, _SWAP_MASK)
_init_lookup_cell(0, 0, 0, _INVERT_MASK, 0, _INVERT_MASK)
_init_lookup_cell(0, 0, 0, _SWAP_MASK | _INVERT_MASK, 0,
                  _SWAP_MASK | _INVERT_MASK)


# -- scalar projections ------------------------------------------------------

cdef inline double _st_to_uv(double s) nogil:
    if s >= 0.5:
        return (1.0 / 3.0) * (4 * s * s - 1)
    return (1.0 / 3.0) * (1 - 4 * (1 - s) * (1 - s))


cdef inline double _uv_to_st(double u) nogil:
    if u >= 0:
        return 0.5 * sqrt(1 + 3 * u)
    return 1 - 0.5 * sqrt(1 - 3 * u)


cdef inline i64 _st_to_ij(double s) nogil:
    cdef i64 v = <i64>floor(_MAX_SIZE * s)
    if v < 0:
        return 0
    if v > _MAX_SIZE - 1:
        return _MAX_SIZE - 1
    return v


def st_to_uv(double s):
    return _st_to_uv(s)


def uv_to_st(double u):
    return _uv_to_st(u)


def st_to_ij(double s):
    return _st_to_ij(s)


cdef inline void _face_uv_to_xyz(int face, double u, double v,
                                 double* x, double* y, double* z) nogil:
    if face == 0:
        x[0] = 1.0; y[0] = u; z[0] = v
    elif face == 1:
        x[0] = -u; y[0] = 1.0; z[0] = v
    elif face == 2:
        x[0] = -u; y[0] = -v; z[0] = 1.0
    elif face == 3:
        x[0] = -1.0; y[0] = -v; z[0] = -u
    elif face == 4:
        x[0] = v; y[0] = -1.0; z[0] = -u
    else:
        x[0] = v; y[0] = u; z[0] = -1.0


def face_uv_to_xyz(int face, double u, double v):
    cdef double x, y, z
    _face_uv_to_xyz(face, u, v, &x, &y, &z)
    return (x, y, z)


cdef inline void _valid_face_xyz_to_uv(int face, double x, double y, double z,
                                       double* u, double* v) nogil:
    if face == 0:
        u[0] = y / x; v[0] = z / x
    elif face == 1:
        u[0] = -x / y; v[0] = z / y
    elif face == 2:
        u[0] = -x / z; v[0] = -y / z
    elif face == 3:
        u[0] = z / x; v[0] = y / x
    elif face == 4:
        u[0] = z / y; v[0] = -x / y
    else:
        u[0] = -y / z; v[0] = -x / z


cdef inline int _xyz_to_face_uv(double x, double y, double z,
                                double* u, double* v) nogil:
    cdef double ax = fabs(x), ay = fabs(y), az = fabs(z)
    cdef int face
    cdef double w
    if ax > ay:
        face = 0 if ax > az else 2
    else:
        face = 1 if ay > az else 2
    w = x if face == 0 else (y if face == 1 else z)
    if w < 0:
        face += 3
    _valid_face_xyz_to_uv(face, x, y, z, u, v)
    return face


def xyz_to_face_uv(double x, double y, double z):
    cdef double u, v
    cdef int face = _xyz_to_face_uv(x, y, z, &u, &v)
    return face, u, v


def face_xyz_to_uv(int face, double x, double y, double z):
    cdef double u, v, w
    w = (x, y, z)[face % 3]
    if face < 3:
        if w <= 0:
            return False, 0.0, 0.0
    elif w >= 0:
        return False, 0.0, 0.0
    _valid_face_xyz_to_uv(face, x, y, z, &u, &v)
    return True, u, v


def latlng_to_xyz(double lat_deg, double lng_deg):
    cdef double phi = lat_deg * (M_PI / 180.0)
    cdef double theta = lng_deg * (M_PI / 180.0)
    cdef double cosphi = cos(phi)
    return (cos(theta) * cosphi, sin(theta) * cosphi, sin(phi))


def xyz_to_latlng(double x, double y, double z):
    cdef double lat = atan2(z, sqrt(x * x + y * y))
    cdef double lng = atan2(y, x)
    return lat * (180.0 / M_PI), lng * (180.0 / M_PI)


# -- cell id bit operations --------------------------------------------------

cdef u64 _from_face_ij(int face, i64 i, i64 j) nogil:
    cdef u64 n = (<u64>face) << (_POS_BITS - 1)
    cdef int bits = face & _SWAP_MASK
    cdef int mask = (1 << _LOOKUP_BITS) - 1
    cdef int k
    for k in range(7, -1, -1):
        bits += (<int>((i >> (k * _LOOKUP_BITS)) & mask)) << (_LOOKUP_BITS + 2)
        bits += (<int>((j >> (k * _LOOKUP_BITS)) & mask)) << 2
        bits = _LOOKUP_POS[bits]
        n |= (<u64>(bits >> 2)) << (k * 2 * _LOOKUP_BITS)
        bits &= _SWAP_MASK | _INVERT_MASK
    return n * 2 + 1


def from_face_ij(int face, i64 i, i64 j):
    return _from_face_ij(face, i, j)


cdef u64 _from_face_ij_wrap(int face, i64 i, i64 j) nogil:
    cdef double scale, u, v, x, y, z
    cdef int new_face
    if i < -1:
        i = -1
    if i > _MAX_SIZE:
        i = _MAX_SIZE
    if j < -1:
        j = -1
    if j > _MAX_SIZE:
        j = _MAX_SIZE
    scale = 1.0 / _MAX_SIZE
    u = scale * ((i << 1) + 1 - _MAX_SIZE)
    v = scale * ((j << 1) + 1 - _MAX_SIZE)
    _face_uv_to_xyz(face, u, v, &x, &y, &z)
    new_face = _xyz_to_face_uv(x, y, z, &u, &v)
    return _from_face_ij(new_face, _st_to_ij(0.5 * (u + 1)),
                         _st_to_ij(0.5 * (v + 1)))


cdef inline u64 _from_face_ij_same(int face, i64 i, i64 j,
                                   bint same_face) nogil:
    if same_face:
        return _from_face_ij(face, i, j)
    return _from_face_ij_wrap(face, i, j)


def from_face_ij_same(int face, i64 i, i64 j, bint same_face):
    return _from_face_ij_same(face, i, j, same_face)


cdef int _to_face_ij_orientation(u64 cell_id, i64* pi, i64* pj) nogil:
    cdef int face = <int>(cell_id >> _POS_BITS)
    cdef int bits = face & _SWAP_MASK
    cdef i64 i = 0, j = 0
    cdef int k, nbits
    for k in range(7, -1, -1):
        nbits = _MAX_LEVEL - 7 * _LOOKUP_BITS if k == 7 else _LOOKUP_BITS
        bits += (<int>((cell_id >> (k * 2 * _LOOKUP_BITS + 1)) &
                       ((1 << (2 * nbits)) - 1))) << 2
        bits = _LOOKUP_IJ[bits]
        i += (<i64>(bits >> (_LOOKUP_BITS + 2))) << (k * _LOOKUP_BITS)
        j += (<i64>((bits >> 2) & ((1 << _LOOKUP_BITS) - 1))) << (k * _LOOKUP_BITS)
        bits &= _SWAP_MASK | _INVERT_MASK
    if (cell_id & (0 - cell_id)) & <u64>0x1111111111111110:
        bits ^= _SWAP_MASK
    pi[0] = i
    pj[0] = j
    return (face << 2) | bits


def to_face_ij_orientation(u64 cell_id):
    cdef i64 i, j
    cdef int packed = _to_face_ij_orientation(cell_id, &i, &j)
    return packed >> 2, i, j, packed & 3


cdef u64 _leaf_from_xyz(double x, double y, double z) nogil:
    cdef double u, v
    cdef int face = _xyz_to_face_uv(x, y, z, &u, &v)
    return _from_face_ij(face, _st_to_ij(_uv_to_st(u)), _st_to_ij(_uv_to_st(v)))


def leaf_from_xyz(double x, double y, double z):
    return _leaf_from_xyz(x, y, z)


def leaf_from_latlng(double lat_deg, double lng_deg):
    cdef double phi = lat_deg * (M_PI / 180.0)
    cdef double theta = lng_deg * (M_PI / 180.0)
    cdef double cosphi = cos(phi)
    return _leaf_from_xyz(cos(theta) * cosphi, sin(theta) * cosphi, sin(phi))


cdef inline u64 _lsb_for_level(int level) nogil:
    return (<u64>1) << (2 * (_MAX_LEVEL - level))


cdef inline u64 _parent_at(u64 cell_id, int level) nogil:
    cdef u64 new_lsb = _lsb_for_level(level)
    return (cell_id & (0 - new_lsb)) | new_lsb


def cell_from_latlng(double lat_deg, double lng_deg, int level):
    cdef double phi = lat_deg * (M_PI / 180.0)
    cdef double theta = lng_deg * (M_PI / 180.0)
    cdef double cosphi = cos(phi)
    cdef u64 leaf = _leaf_from_xyz(cos(theta) * cosphi, sin(theta) * cosphi,
                                   sin(phi))
    return _parent_at(leaf, level)


def lsb_of(u64 cell_id):
    return cell_id & (0 - cell_id)


def lsb_for_level(int level):
    return _lsb_for_level(level)


cdef int _level_of(u64 cell_id) nogil:
    cdef u64 x
    cdef int level = -1
    if cell_id & 1:
        return _MAX_LEVEL
    x = cell_id & <u64>0xffffffff
    if x != 0:
        level += 16
    else:
        x = (cell_id >> 32) & <u64>0xffffffff
    x &= (0 - x)
    if x & <u64>0x00005555:
        level += 8
    if x & <u64>0x00550055:
        level += 4
    if x & <u64>0x05050505:
        level += 2
    if x & <u64>0x11111111:
        level += 1
    return level


def level_of(u64 cell_id):
    return _level_of(cell_id)


def face_of(u64 cell_id):
    return <int>(cell_id >> _POS_BITS)


def is_leaf(u64 cell_id):
    return (cell_id & 1) != 0


def is_face(u64 cell_id):
    return (cell_id & (_lsb_for_level(0) - 1)) == 0


def is_valid_id(object cell_id):
    cdef u64 v
    if not isinstance(cell_id, int):
        return False
    if cell_id <= 0 or cell_id >= (1 << 64):
        return False
    v = <u64>cell_id
    return ((v >> _POS_BITS) < 6 and
            ((v & (0 - v)) & <u64>0x1555555555555555) != 0)


def parent_at(u64 cell_id, int level):
    return _parent_at(cell_id, level)


cdef inline u64 _child_at(u64 cell_id, int pos) nogil:
    cdef u64 new_lsb = (cell_id & (0 - cell_id)) >> 2
    return cell_id + (<u64>(<i64>(2 * pos - 3))) * new_lsb


def child_at(u64 cell_id, int pos):
    return _child_at(cell_id, pos)


def child_position(u64 cell_id, int level):
    return <int>((cell_id >> (2 * (_MAX_LEVEL - level) + 1)) & 3)


cdef inline u64 _range_min(u64 cell_id) nogil:
    return cell_id - ((cell_id & (0 - cell_id)) - 1)


cdef inline u64 _range_max(u64 cell_id) nogil:
    return cell_id + ((cell_id & (0 - cell_id)) - 1)


def range_min(u64 cell_id):
    return _range_min(cell_id)


def range_max(u64 cell_id):
    return _range_max(cell_id)


def contains_id(u64 parent, u64 other):
    return _range_min(parent) <= other <= _range_max(parent)


def size_ij(int level):
    return (<i64>1) << (_MAX_LEVEL - level)


# -- cell geometry -----------------------------------------------------------

cdef void _uv_bounds(u64 cell_id, int* face, double* u0, double* u1,
                     double* v0, double* v1) nogil:
    cdef i64 i, j, cell_size, i_lo, j_lo
    cdef int packed = _to_face_ij_orientation(cell_id, &i, &j)
    cdef double scale = 1.0 / _MAX_SIZE
    face[0] = packed >> 2
    cell_size = (<i64>1) << (_MAX_LEVEL - _level_of(cell_id))
    i_lo = i & (0 - cell_size)
    j_lo = j & (0 - cell_size)
    u0[0] = _st_to_uv(scale * i_lo)
    u1[0] = _st_to_uv(scale * (i_lo + cell_size))
    v0[0] = _st_to_uv(scale * j_lo)
    v1[0] = _st_to_uv(scale * (j_lo + cell_size))


def uv_bounds(u64 cell_id):
    cdef int face
    cdef double u0, u1, v0, v1
    _uv_bounds(cell_id, &face, &u0, &u1, &v0, &v1)
    return face, u0, u1, v0, v1


cdef int _center_si_ti(u64 cell_id, i64* psi, i64* pti) nogil:
    cdef i64 i, j
    cdef int packed = _to_face_ij_orientation(cell_id, &i, &j)
    cdef int delta
    if cell_id & 1:
        delta = 1
    elif (i ^ (<i64>(cell_id >> 2))) & 1:
        delta = 2
    else:
        delta = 0
    psi[0] = 2 * i + delta
    pti[0] = 2 * j + delta
    return packed >> 2


def center_uv(u64 cell_id):
    cdef i64 si, ti
    _center_si_ti(cell_id, &si, &ti)
    cdef double half = 0.5 / _MAX_SIZE
    return _st_to_uv(half * si), _st_to_uv(half * ti)


cdef void _center_xyz(u64 cell_id, double* x, double* y, double* z) nogil:
    cdef i64 si, ti
    cdef int face = _center_si_ti(cell_id, &si, &ti)
    cdef double half = 0.5 / _MAX_SIZE
    cdef double n
    _face_uv_to_xyz(face, _st_to_uv(half * si), _st_to_uv(half * ti), x, y, z)
    n = sqrt(x[0] * x[0] + y[0] * y[0] + z[0] * z[0])
    x[0] /= n
    y[0] /= n
    z[0] /= n


def center_xyz(u64 cell_id):
    cdef double x, y, z
    _center_xyz(cell_id, &x, &y, &z)
    return x, y, z


def center_latlng(u64 cell_id):
    cdef double x, y, z
    _center_xyz(cell_id, &x, &y, &z)
    return (atan2(z, sqrt(x * x + y * y)) * (180.0 / M_PI),
            atan2(y, x) * (180.0 / M_PI))


cdef void _vertices(u64 cell_id, double* vx, double* vy, double* vz) nogil:
    cdef int face, k
    cdef double u0, u1, v0, v1, x, y, z, n, uu, vv
    _uv_bounds(cell_id, &face, &u0, &u1, &v0, &v1)
    for k in range(4):
        uu = u0 if ((k >> 1) ^ (k & 1)) == 0 else u1
        vv = v0 if (k >> 1) == 0 else v1
        _face_uv_to_xyz(face, uu, vv, &x, &y, &z)
        n = sqrt(x * x + y * y + z * z)
        vx[k] = x / n
        vy[k] = y / n
        vz[k] = z / n


def vertices_xyz(u64 cell_id):
    """Four unit-length cell corners in counter-clockwise order."""
    cdef double[4] vx, vy, vz
    _vertices(cell_id, vx, vy, vz)
    return ((vx[0], vy[0], vz[0]), (vx[1], vy[1], vz[1]),
            (vx[2], vy[2], vz[2]), (vx[3], vy[3], vz[3]))


cdef bint _cell_contains_xyz(u64 cell_id, double x, double y, double z) nogil:
    cdef int face
    cdef double u0, u1, v0, v1, u, v, w
    _uv_bounds(cell_id, &face, &u0, &u1, &v0, &v1)
    if face == 0 or face == 3:
        w = x
    elif face == 1 or face == 4:
        w = y
    else:
        w = z
    if face < 3:
        if w <= 0:
            return False
    elif w >= 0:
        return False
    _valid_face_xyz_to_uv(face, x, y, z, &u, &v)
    return u0 <= u <= u1 and v0 <= v <= v1


def cell_contains_xyz(u64 cell_id, double x, double y, double z):
    return _cell_contains_xyz(cell_id, x, y, z)


cdef void _edge_raw(int k, int face, double u0, double u1, double v0,
                    double v1, double* ex, double* ey, double* ez) nogil:
    cdef double u, v
    if k == 0:
        v = v0
        if face == 0:
            ex[0] = -v; ey[0] = 0; ez[0] = 1
        elif face == 1:
            ex[0] = 0; ey[0] = -v; ez[0] = 1
        elif face == 2:
            ex[0] = 0; ey[0] = -1; ez[0] = -v
        elif face == 3:
            ex[0] = v; ey[0] = -1; ez[0] = 0
        elif face == 4:
            ex[0] = 1; ey[0] = v; ez[0] = 0
        else:
            ex[0] = 1; ey[0] = 0; ez[0] = v
    elif k == 1:
        u = u1
        if face == 0:
            ex[0] = u; ey[0] = -1; ez[0] = 0
        elif face == 1:
            ex[0] = 1; ey[0] = u; ez[0] = 0
        elif face == 2:
            ex[0] = 1; ey[0] = 0; ez[0] = u
        elif face == 3:
            ex[0] = -u; ey[0] = 0; ez[0] = 1
        elif face == 4:
            ex[0] = 0; ey[0] = -u; ez[0] = 1
        else:
            ex[0] = 0; ey[0] = -1; ez[0] = -u
    elif k == 2:
        v = v1
        if face == 0:
            ex[0] = v; ey[0] = 0; ez[0] = -1
        elif face == 1:
            ex[0] = 0; ey[0] = v; ez[0] = -1
        elif face == 2:
            ex[0] = 0; ey[0] = 1; ez[0] = v
        elif face == 3:
            ex[0] = -v; ey[0] = 1; ez[0] = 0
        elif face == 4:
            ex[0] = -1; ey[0] = -v; ez[0] = 0
        else:
            ex[0] = -1; ey[0] = 0; ez[0] = -v
    else:
        u = u0
        if face == 0:
            ex[0] = -u; ey[0] = 1; ez[0] = 0
        elif face == 1:
            ex[0] = -1; ey[0] = -u; ez[0] = 0
        elif face == 2:
            ex[0] = -1; ey[0] = 0; ez[0] = -u
        elif face == 3:
            ex[0] = u; ey[0] = 0; ez[0] = -1
        elif face == 4:
            ex[0] = 0; ey[0] = u; ez[0] = -1
        else:
            ex[0] = 0; ey[0] = 1; ez[0] = u


cdef bint _cap_intersects_cell(double ax, double ay, double az, double height,
                               u64 cell_id, double* vx, double* vy,
                               double* vz) nogil:
    cdef int face, k
    cdef double u0, u1, v0, v1, ex, ey, ez, dot, sin2_angle
    cdef double dx, dy, dz
    if height >= 1 or height < 0:
        return False
    if _cell_contains_xyz(cell_id, ax, ay, az):
        return True
    sin2_angle = height * (2 - height)
    _uv_bounds(cell_id, &face, &u0, &u1, &v0, &v1)
    for k in range(4):
        _edge_raw(k, face, u0, u1, v0, v1, &ex, &ey, &ez)
        dot = ax * ex + ay * ey + az * ez
        if dot > 0:
            continue
        if dot * dot > sin2_angle * (ex * ex + ey * ey + ez * ez):
            return False
        dx = ey * az - ez * ay
        dy = ez * ax - ex * az
        dz = ex * ay - ey * ax
        if (dx * vx[k] + dy * vy[k] + dz * vz[k] < 0 and
                dx * vx[(k + 1) & 3] + dy * vy[(k + 1) & 3] +
                dz * vz[(k + 1) & 3] > 0):
            return True
    return False


def cap_contains_xyz(double ax, double ay, double az, double height,
                     double x, double y, double z):
    cdef double dx = ax - x, dy = ay - y, dz = az - z
    return dx * dx + dy * dy + dz * dz <= 2 * height


def cap_may_intersect_cell(double ax, double ay, double az, double height,
                           u64 cell_id):
    cdef double[4] vx, vy, vz
    cdef int k
    cdef double dx, dy, dz
    _vertices(cell_id, vx, vy, vz)
    for k in range(4):
        dx = ax - vx[k]
        dy = ay - vy[k]
        dz = az - vz[k]
        if dx * dx + dy * dy + dz * dz <= 2 * height:
            return True
    return _cap_intersects_cell(ax, ay, az, height, cell_id, vx, vy, vz)


def cap_contains_cell(double ax, double ay, double az, double height,
                      u64 cell_id):
    cdef double[4] vx, vy, vz
    cdef int k
    cdef double dx, dy, dz, comp_height
    _vertices(cell_id, vx, vy, vz)
    for k in range(4):
        dx = ax - vx[k]
        dy = ay - vy[k]
        dz = az - vz[k]
        if dx * dx + dy * dy + dz * dz > 2 * height:
            return False
    comp_height = 2 - (height if height > 0 else 0)
    return not _cap_intersects_cell(-ax, -ay, -az, comp_height, cell_id,
                                    vx, vy, vz)


def cell_cap_bound(u64 cell_id):
    """Bounding cap (axis, height) centered on the cell midpoint."""
    cdef int face, k
    cdef double u0, u1, v0, v1, x, y, z, n, height, dx, dy, dz, dist2
    cdef double[4] vx, vy, vz
    cdef double round_up = 1.0 + 1.0 / (<double>(1 << 52))
    _uv_bounds(cell_id, &face, &u0, &u1, &v0, &v1)
    _face_uv_to_xyz(face, 0.5 * (u0 + u1), 0.5 * (v0 + v1), &x, &y, &z)
    n = sqrt(x * x + y * y + z * z)
    x /= n
    y /= n
    z /= n
    _vertices(cell_id, vx, vy, vz)
    height = 0.0
    for k in range(4):
        dx = x - vx[k]
        dy = y - vy[k]
        dz = z - vz[k]
        dist2 = dx * dx + dy * dy + dz * dz
        if round_up * 0.5 * dist2 > height:
            height = round_up * 0.5 * dist2
    return x, y, z, height


# -- neighbors ---------------------------------------------------------------

def edge_neighbors(u64 cell_id):
    cdef int level = _level_of(cell_id)
    cdef i64 size = (<i64>1) << (_MAX_LEVEL - level)
    cdef i64 i, j
    cdef int packed = _to_face_ij_orientation(cell_id, &i, &j)
    cdef int face = packed >> 2
    return (
        _parent_at(_from_face_ij_same(face, i, j - size, j - size >= 0), level),
        _parent_at(_from_face_ij_same(face, i + size, j,
                                      i + size < _MAX_SIZE), level),
        _parent_at(_from_face_ij_same(face, i, j + size,
                                      j + size < _MAX_SIZE), level),
        _parent_at(_from_face_ij_same(face, i - size, j, i - size >= 0), level),
    )


def vertex_neighbors(u64 cell_id, int level):
    """Neighbors at `level` (< this cell's level) around the closest vertex."""
    cdef i64 i, j, halfsize, size, ioffset, joffset
    cdef bint isame, jsame
    cdef int packed = _to_face_ij_orientation(cell_id, &i, &j)
    cdef int face = packed >> 2
    halfsize = (<i64>1) << (_MAX_LEVEL - (level + 1))
    size = halfsize << 1
    if i & halfsize:
        ioffset = size
        isame = (i + size) < _MAX_SIZE
    else:
        ioffset = -size
        isame = (i - size) >= 0
    if j & halfsize:
        joffset = size
        jsame = (j + size) < _MAX_SIZE
    else:
        joffset = -size
        jsame = (j - size) >= 0

    out = [
        _parent_at(cell_id, level),
        _parent_at(_from_face_ij_same(face, i + ioffset, j, isame), level),
        _parent_at(_from_face_ij_same(face, i, j + joffset, jsame), level),
    ]
    if isame or jsame:
        out.append(_parent_at(
            _from_face_ij_same(face, i + ioffset, j + joffset,
                               isame and jsame), level))
    return out
