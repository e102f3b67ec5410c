# cython: boundscheck=False, wraparound=False, cdivision=True
# cython: initializedcheck=False, language_level=3
"""Compiled simulation kernels.

The per-step pipeline here mirrors the pure-Python reference in pystep.py
operation for operation, decomposed into block-local phases:

  boundary (commands) | detect + element/junction scatter | point/frame
  gather + velocity integration | per iteration: distance even, distance
  odd, contacts, central (pairs/bindings/grabs) | position integration |
  snapshot publish

Each array location is written by exactly one block per phase, so running
the phases serially in block order or concurrently with barriers between
them produces bitwise-identical results.  Worker threads synchronize with
a sense-reversing spin barrier (pause + sched_yield) without touching the
interpreter; steering commands and position snapshots cross the thread
boundary through a small ring buffer and a sequence-counted buffer.
"""

import numpy as np

from libc.math cimport sqrt, isfinite
from libc.string cimport memcpy

cdef extern from *:
    """
    #include <sched.h>
    #include <time.h>
    static inline long rs_add_fetch(long *p, long v)
        { return __atomic_add_fetch(p, v, __ATOMIC_ACQ_REL); }
    static inline long rs_load(long *p)
        { return __atomic_load_n(p, __ATOMIC_ACQUIRE); }
    static inline void rs_store(long *p, long v)
        { __atomic_store_n(p, v, __ATOMIC_RELEASE); }
    static inline void rs_pause(void) {
    #if defined(__x86_64__) || defined(__i386__)
        __builtin_ia32_pause();
    #endif
    }
    static inline long rs_now_ns(void) {
        struct timespec ts;
        clock_gettime(CLOCK_MONOTONIC, &ts);
        return ts.tv_sec * 1000000000L + ts.tv_nsec;
    }
    """
    long rs_add_fetch(long *p, long v) nogil
    long rs_load(long *p) nogil
    void rs_store(long *p, long v) nogil
    void rs_pause() nogil
    long rs_now_ns() nogil
    int sched_yield() nogil

DEF RING_CAP = 64
DEF STACK_CAP = 32

# counter slots
DEF CNT_PAIRS = 0
DEF CNT_CONTACTS = 1
DEF CNT_STEP = 2
DEF CNT_ERR = 3
DEF CNT_HEAD = 4
DEF CNT_TAIL = 5

# command op codes (mirrored in engine.py)
DEF OP_DRIVER_VELOCITY = 0
DEF OP_DRIVER_ROTATION = 1
DEF OP_GRAB = 2
DEF OP_RELEASE = 3


cdef struct Sim:
    long P, E, R, B, iters
    long coll_interval
    double coll_margin
    double dt, beta, mu, restitution
    double gx, gy, gz
    # state
    double *pos
    double *vel
    double *q
    double *w
    double *rest
    double *ustar          # (E,3) intrinsic strains
    double *mass
    double *invm
    double *inert          # (E,3)
    double *fext
    # material per element
    double *ks
    double *kp
    double *gt
    double *gr
    double *ext
    double *kb             # (E,3)
    # per point / frame flags
    double *cradii
    unsigned char *cmask
    unsigned char *plock
    unsigned char *flock
    long *elem_point
    long *elem_parity
    unsigned char *jvalid
    long *pt_elo
    long *pt_ehi
    # drivers
    double *drv_v
    double *drv_rot
    long *drv_pt
    long *drv_fr
    # contact slots
    unsigned char *cact
    double *cnorm
    double *cdepth
    double *cacc_n
    double *cacc_t
    # self-collision pairs
    long pair_cap
    long *pair_a
    long *pair_b
    double *pair_md
    double *pair_acc
    # bindings
    long nbind
    long *bind_a
    long *bind_b
    long *bind_mode
    # grabs
    long ngrab
    unsigned char *g_act
    long *g_pt
    double *g_tgt
    # mesh
    int has_mesh
    long n_nodes
    double *nmin
    double *nmax
    long *nstart
    long *ncount
    long *torder
    long *tris
    double *verts
    # self-collision groups
    int has_self
    long n_groups
    long *grp_rod
    long *grp_gi
    long *grp_s
    long *grp_e
    double *grp_c          # (G,3) centers scratch
    double touch
    double broad
    long excl
    # scatter scratch
    double *ef             # (E,3) force on the lower point (upper gets -ef)
    double *ff_own         # (E,4) frame force on frame e
    double *ff_next        # (E,4) junction-e contribution to frame e+1
    double *jtau           # (E,3) rotational damping per junction
    # block spans
    long *blk_ps
    long *blk_pe
    long *blk_es
    long *blk_ee
    # synchronization
    long *bar_count
    long *bar_sense
    long *bar_ns
    long *counters
    double *ring           # (RING_CAP, 6)
    long *ring_apply       # (RING_CAP,)
    # snapshot
    double *snap_pos
    double *snap_q
    long *snap_seq
    long *snap_step


cdef class CoreContext:
    cdef Sim sim
    cdef public object refs          # keeps every backing array alive
    cdef public object ring_apply    # numpy view used by the engine
    cdef public object counters_np


def core_available():
    return True


# ---------------------------------------------------------------------------
# context construction

cdef double* dptr(object arr) except? NULL:
    cdef double[::1] v
    a = np.ascontiguousarray(arr, dtype=np.float64).reshape(-1)
    if a.size == 0:
        return NULL
    v = a
    return &v[0]


cdef long* lptr(object arr) except? NULL:
    cdef long[::1] v
    a = np.ascontiguousarray(arr, dtype=np.int64).reshape(-1)
    if a.size == 0:
        return NULL
    v = a
    return &v[0]


cdef unsigned char* bptr(object arr) except? NULL:
    cdef unsigned char[::1] v
    a = arr.view(np.uint8).reshape(-1)
    if a.size == 0:
        return NULL
    v = a
    return &v[0]


def make_context(world, starts, ends, snap_pos, snap_frames, snap_seq,
                 snap_step):
    """Bind the world's arrays (shared, not copied) into a kernel context."""
    cdef CoreContext ctx = CoreContext()
    cdef Sim* s = &ctx.sim
    refs = []

    s.P = world.num_points
    s.E = world.num_elements
    s.R = len(world.rod_infos)
    s.B = len(starts)
    s.iters = world.solver.iterations
    s.coll_interval = world.collision_interval
    s.coll_margin = world.collision_margin
    s.dt = world.dt
    s.beta = world.solver.position_bias
    s.mu = world.solver.mu
    s.restitution = world.solver.restitution
    s.gx, s.gy, s.gz = (float(world.gravity[0]), float(world.gravity[1]),
                        float(world.gravity[2]))

    s.pos = dptr(world.positions); refs.append(world.positions)
    s.vel = dptr(world.velocities); refs.append(world.velocities)
    s.q = dptr(world.frames); refs.append(world.frames)
    s.w = dptr(world.angular_velocities); refs.append(world.angular_velocities)
    s.rest = dptr(world.rest_lengths); refs.append(world.rest_lengths)
    s.ustar = dptr(world.intrinsic_strains); refs.append(world.intrinsic_strains)
    s.mass = dptr(world.masses); refs.append(world.masses)
    s.invm = dptr(world.inv_masses); refs.append(world.inv_masses)
    s.inert = dptr(world.inertias); refs.append(world.inertias)
    s.fext = dptr(world.external_forces); refs.append(world.external_forces)
    s.ks = dptr(world.stretch_k); refs.append(world.stretch_k)
    s.kp = dptr(world.penalty_k); refs.append(world.penalty_k)
    s.gt = dptr(world.gamma_t); refs.append(world.gamma_t)
    s.gr = dptr(world.gamma_r); refs.append(world.gamma_r)
    s.ext = dptr(world.extensible); refs.append(world.extensible)
    s.kb = dptr(world.bend_k); refs.append(world.bend_k)
    s.cradii = dptr(world.contact_radii); refs.append(world.contact_radii)
    s.cmask = bptr(world.collide_mesh_mask); refs.append(world.collide_mesh_mask)
    s.plock = bptr(world.point_locked); refs.append(world.point_locked)
    s.flock = bptr(world.frame_locked); refs.append(world.frame_locked)
    s.elem_point = lptr(world.elem_point); refs.append(world.elem_point)
    s.elem_parity = lptr(world.elem_parity); refs.append(world.elem_parity)
    s.jvalid = bptr(world.junction_valid); refs.append(world.junction_valid)

    pt_elo = np.full(world.num_points, -1, dtype=np.int64)
    pt_ehi = np.full(world.num_points, -1, dtype=np.int64)
    for e in range(world.num_elements):
        p = world.elem_point[e]
        pt_elo[p] = e
        pt_ehi[p + 1] = e
    refs += [pt_elo, pt_ehi]
    s.pt_elo = lptr(pt_elo)
    s.pt_ehi = lptr(pt_ehi)

    s.drv_v = dptr(world.driver_velocity); refs.append(world.driver_velocity)
    s.drv_rot = dptr(world.driver_rotation); refs.append(world.driver_rotation)
    s.drv_pt = lptr(world.driven_point); refs.append(world.driven_point)
    s.drv_fr = lptr(world.driven_frame); refs.append(world.driven_frame)

    s.cact = bptr(world.contact_active); refs.append(world.contact_active)
    s.cnorm = dptr(world.contact_normal); refs.append(world.contact_normal)
    s.cdepth = dptr(world.contact_depth); refs.append(world.contact_depth)
    s.cacc_n = dptr(world.contact_acc_n); refs.append(world.contact_acc_n)
    s.cacc_t = dptr(world.contact_acc_t); refs.append(world.contact_acc_t)

    s.pair_cap = world.pair_a.shape[0]
    s.pair_a = lptr(world.pair_a); refs.append(world.pair_a)
    s.pair_b = lptr(world.pair_b); refs.append(world.pair_b)
    s.pair_md = dptr(world.pair_min_dist); refs.append(world.pair_min_dist)
    s.pair_acc = dptr(world.pair_acc); refs.append(world.pair_acc)

    s.nbind = world.bind_a.shape[0]
    s.bind_a = lptr(world.bind_a); refs.append(world.bind_a)
    s.bind_b = lptr(world.bind_b); refs.append(world.bind_b)
    s.bind_mode = lptr(world.bind_mode); refs.append(world.bind_mode)

    s.ngrab = world.grab_active.shape[0]
    s.g_act = bptr(world.grab_active); refs.append(world.grab_active)
    s.g_pt = lptr(world.grab_point); refs.append(world.grab_point)
    s.g_tgt = dptr(world.grab_target); refs.append(world.grab_target)

    tree = world.tree
    if tree is not None:
        if tree.max_depth + 1 > STACK_CAP:
            raise RuntimeError("tree deeper than the traversal stack capacity")
        s.has_mesh = 1
        s.n_nodes = tree.node_min.shape[0]
        s.nmin = dptr(tree.node_min); refs.append(tree.node_min)
        s.nmax = dptr(tree.node_max); refs.append(tree.node_max)
        s.nstart = lptr(tree.node_start); refs.append(tree.node_start)
        s.ncount = lptr(tree.node_count); refs.append(tree.node_count)
        s.torder = lptr(tree.tri_order); refs.append(tree.tri_order)
        s.tris = lptr(tree.triangles); refs.append(tree.triangles)
        s.verts = dptr(tree.vertices); refs.append(tree.vertices)
    else:
        s.has_mesh = 0

    cfg = world.self_collision
    if world.self_collision_enabled:
        s.has_self = 1
        grp_rod, grp_gi, grp_s, grp_e = [], [], [], []
        for info in world.rod_infos:
            start = 0
            gi = 0
            while start < info.num_points:
                end = min(info.num_points, start + cfg.group_size)
                grp_rod.append(info.index)
                grp_gi.append(gi)
                grp_s.append(info.point_offset + start)
                grp_e.append(info.point_offset + end)
                start = end
                gi += 1
        grp_rod = np.array(grp_rod, dtype=np.int64)
        grp_gi = np.array(grp_gi, dtype=np.int64)
        grp_s = np.array(grp_s, dtype=np.int64)
        grp_e = np.array(grp_e, dtype=np.int64)
        grp_c = np.zeros((len(grp_rod), 3))
        refs += [grp_rod, grp_gi, grp_s, grp_e, grp_c]
        s.n_groups = len(grp_rod)
        s.grp_rod = lptr(grp_rod)
        s.grp_gi = lptr(grp_gi)
        s.grp_s = lptr(grp_s)
        s.grp_e = lptr(grp_e)
        s.grp_c = dptr(grp_c)
        s.touch = 2.0 * cfg.point_radius
        s.broad = 2.0 * cfg.sphere_radius
        s.excl = cfg.neighbor_exclusion
    else:
        s.has_self = 0
        s.n_groups = 0

    E = world.num_elements
    ef = np.zeros((E, 3)); ff_own = np.zeros((E, 4))
    ff_next = np.zeros((E, 4)); jtau = np.zeros((E, 3))
    refs += [ef, ff_own, ff_next, jtau]
    s.ef = dptr(ef)
    s.ff_own = dptr(ff_own)
    s.ff_next = dptr(ff_next)
    s.jtau = dptr(jtau)

    starts = np.ascontiguousarray(starts, dtype=np.int64)
    ends = np.ascontiguousarray(ends, dtype=np.int64)
    # Owned elements of a block: lower point inside the block's point span
    # and not the final point of the rod.
    rod_last = {info.index: info.point_offset + info.num_points
                for info in world.rod_infos}
    blk_es = np.zeros(len(starts), dtype=np.int64)
    blk_ee = np.zeros(len(starts), dtype=np.int64)
    for b, (ps, pe) in enumerate(zip(starts, ends)):
        rod = int(world.rod_of_point[ps])
        last = rod_last[rod]
        blk_es[b] = ps - rod
        blk_ee[b] = min(int(pe), last - 1) - rod
    refs += [starts, ends, blk_es, blk_ee]
    s.blk_ps = lptr(starts)
    s.blk_pe = lptr(ends)
    s.blk_es = lptr(blk_es)
    s.blk_ee = lptr(blk_ee)

    bar_count = np.zeros(1, dtype=np.int64)
    bar_sense = np.zeros(1, dtype=np.int64)
    bar_ns = np.zeros(len(starts), dtype=np.int64)
    counters = np.zeros(8, dtype=np.int64)
    counters[CNT_STEP] = world.step_index
    counters[CNT_ERR] = -1
    ring = np.zeros((RING_CAP, 6))
    ring_apply = np.full(RING_CAP, -1, dtype=np.int64)
    refs += [bar_count, bar_sense, bar_ns, counters, ring, ring_apply]
    s.bar_count = lptr(bar_count)
    s.bar_sense = lptr(bar_sense)
    s.bar_ns = lptr(bar_ns)
    s.counters = lptr(counters)
    s.ring = dptr(ring)
    s.ring_apply = lptr(ring_apply)
    ctx.ring_apply = ring_apply
    ctx.counters_np = counters

    s.snap_pos = dptr(snap_pos); refs.append(snap_pos)
    s.snap_q = dptr(snap_frames); refs.append(snap_frames)
    s.snap_seq = lptr(snap_seq); refs.append(snap_seq)
    s.snap_step = lptr(snap_step); refs.append(snap_step)

    ctx.refs = refs
    return ctx


# ---------------------------------------------------------------------------
# small math helpers

cdef inline void qmul(double* a, double* b, double* out) noexcept nogil:
    out[0] = a[0]*b[0] - a[1]*b[1] - a[2]*b[2] - a[3]*b[3]
    out[1] = a[0]*b[1] + b[0]*a[1] + a[2]*b[3] - a[3]*b[2]
    out[2] = a[0]*b[2] + b[0]*a[2] + a[3]*b[1] - a[1]*b[3]
    out[3] = a[0]*b[3] + b[0]*a[3] + a[1]*b[2] - a[2]*b[1]


cdef inline void conj_mul_vec(double* a, double* b, double* out3) noexcept nogil:
    # vector part of conj(a) * b
    cdef double c[4]
    cdef double t[4]
    c[0] = a[0]; c[1] = -a[1]; c[2] = -a[2]; c[3] = -a[3]
    qmul(c, b, t)
    out3[0] = t[1]; out3[1] = t[2]; out3[2] = t[3]


cdef inline void bk_apply(long k, double* v, double* out) noexcept nogil:
    # out = B_k v for the skew bilinear forms of the strain measure
    if k == 0:
        out[0] = v[1]; out[1] = -v[0]; out[2] = -v[3]; out[3] = v[2]
    elif k == 1:
        out[0] = v[2]; out[1] = v[3]; out[2] = -v[0]; out[3] = -v[1]
    else:
        out[0] = v[3]; out[1] = -v[2]; out[2] = v[1]; out[3] = -v[0]


cdef inline void director3(double* q, double* out) noexcept nogil:
    out[0] = 2.0 * (q[1]*q[3] + q[0]*q[2])
    out[1] = 2.0 * (q[2]*q[3] - q[0]*q[1])
    out[2] = 1.0 - 2.0 * (q[1]*q[1] + q[2]*q[2])


cdef inline void jac_t_err(double* q, double* err, double* out4) noexcept nogil:
    # J(q)^T err, with J the 3x4 Jacobian of director3
    cdef double w = q[0], x = q[1], y = q[2], z = q[3]
    out4[0] = 2*y*err[0] - 2*x*err[1]
    out4[1] = 2*z*err[0] - 2*w*err[1] - 4*x*err[2]
    out4[2] = 2*w*err[0] + 2*z*err[1] - 4*y*err[2]
    out4[3] = 2*x*err[0] + 2*y*err[1]


# ---------------------------------------------------------------------------
# barrier

cdef inline void barrier(Sim* s, long block, long* sense) noexcept nogil:
    cdef long t0, arrived, want, spins
    if s.B <= 1:
        return
    t0 = rs_now_ns()
    want = sense[0] ^ 1
    arrived = rs_add_fetch(s.bar_count, 1)
    if arrived == s.B:
        s.bar_count[0] = 0
        rs_store(s.bar_sense, want)
    else:
        spins = 0
        while rs_load(s.bar_sense) != want:
            rs_pause()
            spins += 1
            if spins > 64:
                sched_yield()
    sense[0] = want
    s.bar_ns[block] += rs_now_ns() - t0


# ---------------------------------------------------------------------------
# phases

cdef void ph_boundary(Sim* s) noexcept nogil:
    """Block 0, start of step: consume staged commands, reset counters."""
    cdef long head, tail, slot, i0, i1
    cdef double op
    cdef double* r
    head = s.counters[CNT_HEAD]
    tail = rs_load(&s.counters[CNT_TAIL])
    while head < tail:
        slot = head % RING_CAP
        r = s.ring + slot * 6
        op = r[0]
        i0 = <long>r[1]
        i1 = <long>r[2]
        if op == OP_DRIVER_VELOCITY:
            s.drv_v[i0*3] = r[3]; s.drv_v[i0*3+1] = r[4]; s.drv_v[i0*3+2] = r[5]
        elif op == OP_DRIVER_ROTATION:
            s.drv_rot[i0] = r[3]
        elif op == OP_GRAB:
            s.g_pt[i0] = i1
            s.g_tgt[i0*3] = r[3]; s.g_tgt[i0*3+1] = r[4]; s.g_tgt[i0*3+2] = r[5]
            s.g_act[i0] = 1
        elif op == OP_RELEASE:
            s.g_act[i0] = 0
            s.g_pt[i0] = -1
        rs_store(&s.ring_apply[slot], s.counters[CNT_STEP])
        head += 1
        rs_store(&s.counters[CNT_HEAD], head)
    if s.counters[CNT_STEP] % s.coll_interval == 0:
        s.counters[CNT_PAIRS] = 0
    rs_store(&s.counters[CNT_CONTACTS], 0)


cdef double closest_tri(double* p, double* a, double* b, double* c,
                        double* out) noexcept nogil:
    cdef double ab[3]
    cdef double ac[3]
    cdef double ap[3]
    cdef double bp[3]
    cdef double cp[3]
    cdef double d1, d2, d3, d4, d5, d6, vc, vb, va, t, denom
    cdef int k
    for k in range(3):
        ab[k] = b[k] - a[k]
        ac[k] = c[k] - a[k]
        ap[k] = p[k] - a[k]
    d1 = ab[0]*ap[0] + ab[1]*ap[1] + ab[2]*ap[2]
    d2 = ac[0]*ap[0] + ac[1]*ap[1] + ac[2]*ap[2]
    if d1 <= 0.0 and d2 <= 0.0:
        for k in range(3): out[k] = a[k]
        return 0.0
    for k in range(3):
        bp[k] = p[k] - b[k]
    d3 = ab[0]*bp[0] + ab[1]*bp[1] + ab[2]*bp[2]
    d4 = ac[0]*bp[0] + ac[1]*bp[1] + ac[2]*bp[2]
    if d3 >= 0.0 and d4 <= d3:
        for k in range(3): out[k] = b[k]
        return 0.0
    vc = d1*d4 - d3*d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        t = d1 / (d1 - d3)
        for k in range(3): out[k] = a[k] + t*ab[k]
        return 0.0
    for k in range(3):
        cp[k] = p[k] - c[k]
    d5 = ab[0]*cp[0] + ab[1]*cp[1] + ab[2]*cp[2]
    d6 = ac[0]*cp[0] + ac[1]*cp[1] + ac[2]*cp[2]
    if d6 >= 0.0 and d5 <= d6:
        for k in range(3): out[k] = c[k]
        return 0.0
    vb = d5*d2 - d1*d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        t = d2 / (d2 - d6)
        for k in range(3): out[k] = a[k] + t*ac[k]
        return 0.0
    va = d3*d6 - d5*d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        t = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        for k in range(3): out[k] = b[k] + t*(c[k] - b[k])
        return 0.0
    denom = 1.0 / (va + vb + vc)
    for k in range(3):
        out[k] = a[k] + ab[k]*(vb*denom) + ac[k]*(vc*denom)
    return 0.0


cdef void mesh_contact(Sim* s, long i) noexcept nogil:
    """Broad + narrow phase + aggregation for one point sphere."""
    cdef long stack[STACK_CAP]
    cdef long top, node, cnt, start, t, tri, k, nhits
    cdef double lo[3]
    cdef double hi[3]
    cdef double closest[3]
    cdef double delta[3]
    cdef double n[3]
    cdef double wsum[3]
    cdef double best_n[3]
    cdef double face[3]
    cdef double e1[3]
    cdef double e2[3]
    cdef double *center
    cdef double *a
    cdef double *b
    cdef double *c
    cdef double radius, d, area2, dot, maxd, norm, depth
    center = s.pos + 3*i
    radius = s.cradii[i] + s.coll_margin
    for k in range(3):
        lo[k] = center[k] - radius
        hi[k] = center[k] + radius
    nhits = 0
    maxd = -1.0
    wsum[0] = wsum[1] = wsum[2] = 0.0
    best_n[0] = best_n[1] = best_n[2] = 0.0
    stack[0] = 0
    top = 1
    while top:
        top -= 1
        node = stack[top]
        if node >= s.n_nodes or s.ncount[node] < 0:
            continue
        if (s.nmin[3*node] > hi[0] or s.nmin[3*node+1] > hi[1]
                or s.nmin[3*node+2] > hi[2] or s.nmax[3*node] < lo[0]
                or s.nmax[3*node+1] < lo[1] or s.nmax[3*node+2] < lo[2]):
            continue
        cnt = s.ncount[node]
        if cnt > 0:
            start = s.nstart[node]
            for t in range(start, start + cnt):
                tri = s.torder[t]
                a = s.verts + 3*s.tris[3*tri]
                b = s.verts + 3*s.tris[3*tri+1]
                c = s.verts + 3*s.tris[3*tri+2]
                for k in range(3):
                    e1[k] = b[k] - a[k]
                    e2[k] = c[k] - a[k]
                face[0] = e1[1]*e2[2] - e1[2]*e2[1]
                face[1] = e1[2]*e2[0] - e1[0]*e2[2]
                face[2] = e1[0]*e2[1] - e1[1]*e2[0]
                area2 = sqrt(face[0]*face[0] + face[1]*face[1]
                             + face[2]*face[2])
                if area2 == 0.0:
                    s.counters[CNT_ERR] = s.counters[CNT_STEP]
                    continue
                closest_tri(center, a, b, c, closest)
                for k in range(3):
                    delta[k] = center[k] - closest[k]
                d = sqrt(delta[0]*delta[0] + delta[1]*delta[1]
                         + delta[2]*delta[2])
                if d >= radius:
                    continue
                dot = 0.0
                for k in range(3):
                    n[k] = face[k] / area2
                    dot += n[k] * (center[k] - a[k])
                if dot < 0.0:
                    for k in range(3):
                        n[k] = -n[k]
                depth = radius - d
                nhits += 1
                for k in range(3):
                    wsum[k] += depth * n[k]
                if depth > maxd:
                    maxd = depth
                    for k in range(3):
                        best_n[k] = n[k]
        else:
            stack[top] = 2*node + 1
            stack[top+1] = 2*node + 2
            top += 2
    if nhits == 0:
        return
    norm = sqrt(wsum[0]*wsum[0] + wsum[1]*wsum[1] + wsum[2]*wsum[2])
    if norm < 1e-12 * (maxd if maxd > 1.0 else 1.0):
        for k in range(3):
            s.cnorm[3*i+k] = best_n[k]
    else:
        for k in range(3):
            s.cnorm[3*i+k] = wsum[k] / norm
    # margin inflates detection only; depth stays relative to the true
    # radius so resting contacts are not pushed out
    maxd -= s.coll_margin
    if maxd < 0.0:
        maxd = 0.0
    s.cdepth[i] = maxd
    s.cact[i] = 1
    rs_add_fetch(&s.counters[CNT_CONTACTS], 1)


cdef void ph_selfpairs(Sim* s) noexcept nogil:
    """Block 0: bounding-sphere broad phase, point-pair expansion."""
    cdef long g, a, b, i, j, k, cnt
    cdef double dx, dy, dz, dd, inv
    if not s.has_self:
        return
    if s.counters[CNT_STEP] % s.coll_interval != 0:
        # reuse the previous pair set; reset per-step accumulators
        for k in range(s.counters[CNT_PAIRS]):
            s.pair_acc[k] = 0.0
        return
    for g in range(s.n_groups):
        s.grp_c[3*g] = 0.0; s.grp_c[3*g+1] = 0.0; s.grp_c[3*g+2] = 0.0
        for i in range(s.grp_s[g], s.grp_e[g]):
            for k in range(3):
                s.grp_c[3*g+k] += s.pos[3*i+k]
        inv = 1.0 / (s.grp_e[g] - s.grp_s[g])
        for k in range(3):
            s.grp_c[3*g+k] *= inv
    cnt = 0
    for a in range(s.n_groups):
        for b in range(a + 1, s.n_groups):
            if s.grp_rod[a] == s.grp_rod[b]:
                g = s.grp_gi[a] - s.grp_gi[b]
                if -s.excl <= g <= s.excl:
                    continue
            dx = s.grp_c[3*b] - s.grp_c[3*a]
            dy = s.grp_c[3*b+1] - s.grp_c[3*a+1]
            dz = s.grp_c[3*b+2] - s.grp_c[3*a+2]
            if dx*dx + dy*dy + dz*dz >= s.broad * s.broad:
                continue
            for i in range(s.grp_s[a], s.grp_e[a]):
                for j in range(s.grp_s[b], s.grp_e[b]):
                    dx = s.pos[3*j] - s.pos[3*i]
                    dy = s.pos[3*j+1] - s.pos[3*i+1]
                    dz = s.pos[3*j+2] - s.pos[3*i+2]
                    if dx*dx + dy*dy + dz*dz < s.touch * s.touch:
                        if cnt < s.pair_cap:
                            s.pair_a[cnt] = i
                            s.pair_b[cnt] = j
                            s.pair_md[cnt] = s.touch
                            s.pair_acc[cnt] = 0.0
                            cnt += 1
    s.counters[CNT_PAIRS] = cnt


cdef void ph_detect_scatter(Sim* s, long b) noexcept nogil:
    """Contacts for owned points; element/junction force scatter."""
    cdef long i, e, k, pa, pb
    cdef double d[3]
    cdef double tvec[3]
    cdef double d3v[3]
    cdef double err[3]
    cdef double pair[3]
    cdef double qp[4]
    cdef double qn[4]
    cdef double u[3]
    cdef double bq_p[4]
    cdef double bq_a[4]
    cdef double ga[4]
    cdef double gn[4]
    cdef double f4[4]
    cdef double *qa
    cdef double *qb
    cdef double length, v3, dotp, sign, inv_l, coeff, du, l
    cdef bint detect = s.counters[CNT_STEP] % s.coll_interval == 0
    # reset contact slots for owned points, then detect (or, on skipped
    # steps, keep the previous contact set and reset the accumulators)
    for i in range(s.blk_ps[b], s.blk_pe[b]):
        s.cacc_n[i] = 0.0
        s.cacc_t[i] = 0.0
        if detect:
            s.cact[i] = 0
            if s.has_mesh and s.cmask[i]:
                mesh_contact(s, i)
        elif s.cact[i]:
            rs_add_fetch(&s.counters[CNT_CONTACTS], 1)
    # element scatter: stretch + penalty pair force, penalty frame force,
    # translational damping; junction scatter: bend frame forces and
    # rotational damping
    for e in range(s.blk_es[b], s.blk_ee[b]):
        pa = s.elem_point[e]
        pb = pa + 1
        l = s.rest[e]
        for k in range(3):
            d[k] = s.pos[3*pb+k] - s.pos[3*pa+k]
        length = sqrt(d[0]*d[0] + d[1]*d[1] + d[2]*d[2])
        if length == 0.0:
            s.counters[CNT_ERR] = s.counters[CNT_STEP]
            for k in range(3):
                s.ef[3*e+k] = 0.0
            for k in range(4):
                s.ff_own[4*e+k] = 0.0
                s.ff_next[4*e+k] = 0.0
            continue
        for k in range(3):
            tvec[k] = d[k] / length
            pair[k] = 0.0
        if s.ext[e] != 0.0:
            v3 = length / l
            for k in range(3):
                pair[k] -= s.ks[e] * (v3 - 1.0) * tvec[k]
        qa = s.q + 4*e
        director3(qa, d3v)
        for k in range(3):
            err[k] = tvec[k] - d3v[k]
        dotp = err[0]*tvec[0] + err[1]*tvec[1] + err[2]*tvec[2]
        for k in range(3):
            pair[k] -= (s.kp[e] * l / length) * (err[k] - dotp * tvec[k])
        jac_t_err(qa, err, f4)
        for k in range(4):
            s.ff_own[4*e+k] = s.kp[e] * l * f4[k]
            s.ff_next[4*e+k] = 0.0
        # damping of relative translational velocity across the element
        for k in range(3):
            s.ef[3*e+k] = -pair[k] + s.gt[e] * (s.vel[3*pb+k] - s.vel[3*pa+k])
        # junction e couples frames e and e+1
        if s.jvalid[e]:
            qb = s.q + 4*(e+1)
            dotp = (qa[0]*qb[0] + qa[1]*qb[1] + qa[2]*qb[2] + qa[3]*qb[3])
            sign = -1.0 if dotp < 0.0 else 1.0
            inv_l = 1.0 / l
            for k in range(4):
                qn[k] = sign * qb[k]
                qp[k] = (qn[k] - qa[k]) * inv_l
            conj_mul_vec(qa, qp, u)
            for k in range(3):
                u[k] *= 2.0
            for k in range(3):
                du = u[k] - s.ustar[3*e+k]
                coeff = s.kb[3*e+k] * du * l
                bk_apply(k, qp, bq_p)
                bk_apply(k, qa, bq_a)
                for i in range(4):
                    ga[i] = 2.0*bq_p[i] + 2.0*inv_l*bq_a[i]
                    gn[i] = -2.0*inv_l*bq_a[i]
                for i in range(4):
                    s.ff_own[4*e+i] -= coeff * ga[i]
                    s.ff_next[4*e+i] -= sign * coeff * gn[i]
            for k in range(3):
                s.jtau[3*e+k] = s.gr[e] * (s.w[3*(e+1)+k] - s.w[3*e+k])


cdef void ph_gather(Sim* s, long b) noexcept nogil:
    """Per-point force gather + velocity update; per-frame torque gather +
    angular velocity update; drivers."""
    cdef long i, e, k, r, p
    cdef double f[3]
    cdef double F[4]
    cdef double tau[3]
    cdef double gyro[3]
    cdef double iw[3]
    cdef double *q
    cdef double dot
    for i in range(s.blk_ps[b], s.blk_pe[b]):
        for k in range(3):
            f[k] = s.mass[i] * (s.gx if k == 0 else (s.gy if k == 1 else s.gz))
            f[k] += s.fext[3*i+k]
        e = s.pt_elo[i]
        if e >= 0:
            for k in range(3):
                f[k] += s.ef[3*e+k]
        e = s.pt_ehi[i]
        if e >= 0:
            for k in range(3):
                f[k] -= s.ef[3*e+k]
        if not (isfinite(f[0]) and isfinite(f[1]) and isfinite(f[2])):
            s.counters[CNT_ERR] = s.counters[CNT_STEP]
        if not s.plock[i]:
            for k in range(3):
                s.vel[3*i+k] += s.dt * f[k] / s.mass[i]
    for e in range(s.blk_es[b], s.blk_ee[b]):
        q = s.q + 4*e
        for k in range(4):
            F[k] = s.ff_own[4*e+k]
        if e > 0 and s.jvalid[e-1]:
            for k in range(4):
                F[k] += s.ff_next[4*(e-1)+k]
        dot = F[0]*q[0] + F[1]*q[1] + F[2]*q[2] + F[3]*q[3]
        for k in range(4):
            F[k] -= dot * q[k]
        conj_mul_vec(q, F, tau)
        for k in range(3):
            tau[k] *= 0.5
        if s.jvalid[e]:
            for k in range(3):
                tau[k] += s.jtau[3*e+k]
        if e > 0 and s.jvalid[e-1]:
            for k in range(3):
                tau[k] -= s.jtau[3*(e-1)+k]
        if not (isfinite(tau[0]) and isfinite(tau[1]) and isfinite(tau[2])):
            s.counters[CNT_ERR] = s.counters[CNT_STEP]
        for k in range(3):
            iw[k] = s.inert[3*e+k] * s.w[3*e+k]
        gyro[0] = s.w[3*e+1]*iw[2] - s.w[3*e+2]*iw[1]
        gyro[1] = s.w[3*e+2]*iw[0] - s.w[3*e]*iw[2]
        gyro[2] = s.w[3*e]*iw[1] - s.w[3*e+1]*iw[0]
        if not s.flock[e]:
            for k in range(3):
                s.w[3*e+k] += s.dt * (tau[k] - gyro[k]) / s.inert[3*e+k]
    # drivers owned by this block
    for r in range(s.R):
        p = s.drv_pt[r]
        if p >= 0 and s.blk_ps[b] <= p < s.blk_pe[b]:
            for k in range(3):
                s.vel[3*p+k] = s.drv_v[3*r+k]
        e = s.drv_fr[r]
        if e >= 0 and s.blk_es[b] <= e < s.blk_ee[b]:
            s.w[3*e] = 0.0
            s.w[3*e+1] = 0.0
            s.w[3*e+2] = s.drv_rot[r]


cdef void ph_distance(Sim* s, long b, long parity) noexcept nogil:
    cdef long e, ia, ib, k
    cdef double d[3]
    cdef double n[3]
    cdef double dist, wsum, c, vrel, lam
    for e in range(s.blk_es[b], s.blk_ee[b]):
        if s.elem_parity[e] != parity or s.ext[e] != 0.0:
            continue
        ia = s.elem_point[e]
        ib = ia + 1
        for k in range(3):
            d[k] = s.pos[3*ib+k] - s.pos[3*ia+k]
        dist = sqrt(d[0]*d[0] + d[1]*d[1] + d[2]*d[2])
        wsum = s.invm[ia] + s.invm[ib]
        if dist <= 0.0 or wsum <= 0.0:
            continue
        for k in range(3):
            n[k] = d[k] / dist
        c = dist - s.rest[e]
        vrel = 0.0
        for k in range(3):
            vrel += (s.vel[3*ib+k] - s.vel[3*ia+k]) * n[k]
        lam = -(vrel + s.beta * c / s.dt) / wsum
        for k in range(3):
            s.vel[3*ia+k] -= s.invm[ia] * lam * n[k]
            s.vel[3*ib+k] += s.invm[ib] * lam * n[k]


cdef void ph_contacts(Sim* s, long b) noexcept nogil:
    cdef long i, k
    cdef double n[3]
    cdef double vt[3]
    cdef double vn, raw, new_acc, applied, m, vt_norm, cap, jt, scale, dot
    for i in range(s.blk_ps[b], s.blk_pe[b]):
        if s.cact[i] != 1 or s.plock[i]:
            continue
        m = s.mass[i]
        vn = 0.0
        for k in range(3):
            n[k] = s.cnorm[3*i+k]
            vn += s.vel[3*i+k] * n[k]
        raw = m * (-vn * (1.0 + s.restitution)
                   + s.beta * s.cdepth[i] / s.dt)
        new_acc = s.cacc_n[i] + raw
        if new_acc < 0.0:
            new_acc = 0.0
        applied = new_acc - s.cacc_n[i]
        for k in range(3):
            s.vel[3*i+k] += (applied / m) * n[k]
        s.cacc_n[i] = new_acc
        if s.mu > 0.0:
            dot = 0.0
            for k in range(3):
                dot += s.vel[3*i+k] * n[k]
            vt_norm = 0.0
            for k in range(3):
                vt[k] = s.vel[3*i+k] - dot * n[k]
                vt_norm += vt[k] * vt[k]
            vt_norm = sqrt(vt_norm)
            cap = s.mu * new_acc - s.cacc_t[i]
            if cap < 0.0:
                cap = 0.0
            jt = m * vt_norm
            if jt > cap:
                jt = cap
            if vt_norm > 0.0:
                scale = jt / (m * vt_norm)
                for k in range(3):
                    s.vel[3*i+k] -= scale * vt[k]
            s.cacc_t[i] += jt


cdef void ph_central(Sim* s) noexcept nogil:
    """Block 0: self pairs, then bindings, then grab anchors."""
    cdef long k, i, a, b
    cdef double d[3]
    cdef double n[3]
    cdef double dist, wsum, wa, wb, vrel, depth, raw, new_acc, lam
    for k in range(s.counters[CNT_PAIRS]):
        a = s.pair_a[k]
        b = s.pair_b[k]
        for i in range(3):
            d[i] = s.pos[3*b+i] - s.pos[3*a+i]
        dist = sqrt(d[0]*d[0] + d[1]*d[1] + d[2]*d[2])
        wsum = s.invm[a] + s.invm[b]
        if dist == 0.0 or wsum == 0.0:
            continue
        vrel = 0.0
        for i in range(3):
            n[i] = d[i] / dist
            vrel += (s.vel[3*b+i] - s.vel[3*a+i]) * n[i]
        depth = s.pair_md[k] - dist
        if depth < 0.0:
            depth = 0.0
        raw = (-vrel + s.beta * depth / s.dt) / wsum
        new_acc = s.pair_acc[k] + raw
        if new_acc < 0.0:
            new_acc = 0.0
        lam = new_acc - s.pair_acc[k]
        s.pair_acc[k] = new_acc
        for i in range(3):
            s.vel[3*a+i] -= s.invm[a] * lam * n[i]
            s.vel[3*b+i] += s.invm[b] * lam * n[i]
    for k in range(s.nbind):
        a = s.bind_a[k]
        b = s.bind_b[k]
        wa = 0.0 if s.bind_mode[k] == 0 else s.invm[a]
        wb = s.invm[b]
        for i in range(3):
            d[i] = s.pos[3*b+i] - s.pos[3*a+i]
        dist = sqrt(d[0]*d[0] + d[1]*d[1] + d[2]*d[2])
        wsum = wa + wb
        if dist == 0.0 or wsum == 0.0:
            continue
        vrel = 0.0
        for i in range(3):
            n[i] = d[i] / dist
            vrel += (s.vel[3*b+i] - s.vel[3*a+i]) * n[i]
        lam = -(vrel + s.beta * dist / s.dt) / wsum
        if wa > 0.0:
            for i in range(3):
                s.vel[3*a+i] -= wa * lam * n[i]
        for i in range(3):
            s.vel[3*b+i] += wb * lam * n[i]
    for k in range(s.ngrab):
        if not s.g_act[k]:
            continue
        b = s.g_pt[k]
        wb = s.invm[b]
        if wb == 0.0:
            continue
        for i in range(3):
            d[i] = s.pos[3*b+i] - s.g_tgt[3*k+i]
        dist = sqrt(d[0]*d[0] + d[1]*d[1] + d[2]*d[2])
        if dist == 0.0:
            continue
        vrel = 0.0
        for i in range(3):
            n[i] = d[i] / dist
            vrel += s.vel[3*b+i] * n[i]
        lam = -(vrel + s.beta * dist / s.dt) / wb
        for i in range(3):
            s.vel[3*b+i] += wb * lam * n[i]


cdef void ph_integrate(Sim* s, long b) noexcept nogil:
    cdef long i, e, k
    cdef double om[4]
    cdef double dq[4]
    cdef double *q
    cdef double norm
    for i in range(s.blk_ps[b], s.blk_pe[b]):
        for k in range(3):
            s.pos[3*i+k] += s.dt * s.vel[3*i+k]
    om[0] = 0.0
    for e in range(s.blk_es[b], s.blk_ee[b]):
        q = s.q + 4*e
        for k in range(3):
            om[k+1] = s.w[3*e+k]
        qmul(q, om, dq)
        for k in range(4):
            q[k] += s.dt * 0.5 * dq[k]
        norm = sqrt(q[0]*q[0] + q[1]*q[1] + q[2]*q[2] + q[3]*q[3])
        for k in range(4):
            q[k] /= norm


cdef void ph_publish(Sim* s) noexcept nogil:
    """Block 0: seqlock snapshot publish, then advance the step counter."""
    rs_store(s.snap_seq, s.snap_seq[0] + 1)
    memcpy(s.snap_pos, s.pos, 3 * s.P * sizeof(double))
    memcpy(s.snap_q, s.q, 4 * s.E * sizeof(double))
    s.snap_step[0] = s.counters[CNT_STEP] + 1
    rs_store(s.snap_seq, s.snap_seq[0] + 1)
    s.counters[CNT_STEP] += 1


# ---------------------------------------------------------------------------
# drivers

def step_serial(CoreContext ctx):
    """One time-step, all blocks executed in order on the calling thread."""
    cdef Sim* s = &ctx.sim
    cdef long b, it
    with nogil:
        ph_boundary(s)
        for b in range(s.B):
            ph_detect_scatter(s, b)
        ph_selfpairs(s)
        for b in range(s.B):
            ph_gather(s, b)
        for it in range(s.iters):
            for b in range(s.B):
                ph_distance(s, b, 0)
            for b in range(s.B):
                ph_distance(s, b, 1)
            for b in range(s.B):
                ph_contacts(s, b)
            ph_central(s)
        for b in range(s.B):
            ph_integrate(s, b)
        ph_publish(s)
    return int(s.counters[CNT_CONTACTS] + s.counters[CNT_PAIRS])


def update_params(CoreContext ctx, double dt, long iters):
    """Refresh the scalar stepping parameters; only between epochs."""
    if dt <= 0.0 or iters < 1:
        raise ValueError("dt must be positive and iters >= 1")
    ctx.sim.dt = dt
    ctx.sim.iters = iters


def begin_epoch(CoreContext ctx):
    """Reset barrier state and per-epoch timers before workers start."""
    cdef Sim* s = &ctx.sim
    cdef long b
    s.bar_count[0] = 0
    s.bar_sense[0] = 0
    for b in range(s.B):
        s.bar_ns[b] = 0


def run_epoch_worker(CoreContext ctx, long block, long steps):
    """Per-block epoch body; call once per worker thread per epoch."""
    cdef Sim* s = &ctx.sim
    cdef long st, it
    cdef long sense = 0
    with nogil:
        for st in range(steps):
            if block == 0:
                ph_boundary(s)
            barrier(s, block, &sense)
            ph_detect_scatter(s, block)
            if block == 0:
                ph_selfpairs(s)
            barrier(s, block, &sense)
            ph_gather(s, block)
            barrier(s, block, &sense)
            for it in range(s.iters):
                ph_distance(s, block, 0)
                barrier(s, block, &sense)
                ph_distance(s, block, 1)
                barrier(s, block, &sense)
                ph_contacts(s, block)
                barrier(s, block, &sense)
                if block == 0:
                    ph_central(s)
                barrier(s, block, &sense)
            ph_integrate(s, block)
            barrier(s, block, &sense)
            if block == 0:
                ph_publish(s)


def epoch_results(CoreContext ctx):
    """(active contacts after the last step, summed barrier wait ns)."""
    cdef Sim* s = &ctx.sim
    cdef long b, ns = 0
    for b in range(s.B):
        ns += s.bar_ns[b]
    return (int(s.counters[CNT_CONTACTS] + s.counters[CNT_PAIRS]), int(ns))


def error_step(CoreContext ctx):
    """Step index of the first non-finite/degenerate event, or -1."""
    return int(ctx.sim.counters[CNT_ERR])


def step_counter(CoreContext ctx):
    return int(ctx.sim.counters[CNT_STEP])


def stage_commands(CoreContext ctx, ops):
    """Append encoded command ops to the ring; returns global slot indices.

    Safe to call while an epoch is running: slots become visible to the
    stepping loop only once the tail counter is advanced past them.
    """
    cdef Sim* s = &ctx.sim
    cdef double[:, ::1] o = np.ascontiguousarray(ops, dtype=np.float64)
    cdef long n = o.shape[0]
    cdef long i, k, tail, slot, spins
    if o.shape[1] != 6:
        raise ValueError("ops must have shape (n, 6)")
    slots = []
    for i in range(n):
        tail = s.counters[CNT_TAIL]
        spins = 0
        while tail - rs_load(&s.counters[CNT_HEAD]) >= RING_CAP:
            sched_yield()
            spins += 1
            if spins > 1000000:
                raise RuntimeError("command ring full and not draining")
        slot = tail % RING_CAP
        s.ring_apply[slot] = -1
        for k in range(6):
            s.ring[slot*6 + k] = o[i, k]
        rs_store(&s.counters[CNT_TAIL], tail + 1)
        slots.append(int(tail))
    return slots


def applied_step_for(CoreContext ctx, long global_slot):
    """Apply-step of a staged op, or -1 if not yet consumed."""
    cdef Sim* s = &ctx.sim
    return int(rs_load(&s.ring_apply[global_slot % RING_CAP]))
