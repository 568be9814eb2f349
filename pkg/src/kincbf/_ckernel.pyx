# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled closed-loop rollout for systems with at most two coordinates.

Mirrors sim.control_step and sim._rk4 for the shipped models, barriers,
filters and tasks.  Reduced barrier dynamics use the inverse-inertia
projection (D_h = 1 / (J_h D^-1 J_h^T)) instead of an explicit partition.
"""
from libc.math cimport sin, cos, sqrt, fabs, isfinite, NAN

cdef enum:
    NMAX = 2

cdef enum Status:
    OK = 0
    DEGENERATE_GRADIENT = 1
    INTERNAL_CONTRACT = 2
    SINGULARITY = 3
    DIFFEOMORPHISM = 4
    COUPLING = 5
    DIVERGENCE = 6

_MESSAGES = {
    DEGENERATE_GRADIENT: "DegenerateGradientError: barrier gradient vanished while intervening",
    INTERNAL_CONTRACT: "InternalContractError: filter constraint lost its input direction",
    SINGULARITY: "SingularityError: task Jacobian singular",
    DIFFEOMORPHISM: "DiffeomorphismError: barrier coordinate change singular",
    COUPLING: "CouplingError: barrier not coupled with input",
    DIVERGENCE: "DivergenceError: integrator produced a non-finite state",
}

cdef double UPRIGHT = 3.141592653589793
cdef double EPS_V = 1e-8
cdef double EPS_PINV = 1e-10
cdef double EPS_DET = 1e-9
cdef double EPS_COUPLING = 1e-6


def describe(int status):
    return _MESSAGES.get(status, f"KincbfError: status {status}")


ctypedef struct Model:
    int code
    int k
    int m
    int n
    double p[8]

ctypedef struct Dyn:
    double D[NMAX][NMAX]
    double C[NMAX][NMAX]
    double G[NMAX]

ctypedef struct Cfg:
    Model mdl
    int bcode
    double bp[8]
    int fid
    double fp[12]
    int tcode
    double tp[12]
    double kd
    double kp
    double K[4]
    int joint_pd
    double qgoal[NMAX]

ctypedef struct Out:
    double cmd[NMAX]
    double u[NMAX]
    int ncmd
    double psi
    double intervened
    double residual
    double exact


# ---------------------------------------------------------------- models

cdef void dynamics(Model* md, double* q, double* qd, Dyn* d) nogil:
    cdef double m1, m2, l1, l2, g, c2, hh, mc, mp, l
    if md.code == 0:
        d.D[0][0] = md.p[0]
        d.C[0][0] = 0.0
        d.G[0] = 0.0
    elif md.code == 1:
        m1 = md.p[0]; m2 = md.p[1]; l1 = md.p[2]; l2 = md.p[3]; g = md.p[4]
        c2 = cos(q[1])
        d.D[0][0] = m1 * l1 * l1 + m2 * (l1 * l1 + 2 * l1 * l2 * c2 + l2 * l2)
        d.D[0][1] = m2 * (l1 * l2 * c2 + l2 * l2)
        d.D[1][0] = d.D[0][1]
        d.D[1][1] = m2 * l2 * l2
        hh = -m2 * l1 * l2 * sin(q[1])
        d.C[0][0] = hh * qd[1]
        d.C[0][1] = hh * (qd[0] + qd[1])
        d.C[1][0] = -hh * qd[0]
        d.C[1][1] = 0.0
        d.G[0] = (m1 + m2) * g * l1 * cos(q[0]) + m2 * g * l2 * cos(q[0] + q[1])
        d.G[1] = m2 * g * l2 * cos(q[0] + q[1])
    else:
        mc = md.p[0]; mp = md.p[1]; l = md.p[2]; g = md.p[3]
        d.D[0][0] = mc + mp
        d.D[0][1] = mp * l * cos(q[1])
        d.D[1][0] = d.D[0][1]
        d.D[1][1] = mp * l * l
        d.C[0][0] = 0.0
        d.C[0][1] = -mp * l * sin(q[1]) * qd[1]
        d.C[1][0] = 0.0
        d.C[1][1] = 0.0
        d.G[0] = 0.0
        d.G[1] = mp * g * l * sin(q[1])


cdef void actuation(Model* md, double B[NMAX][NMAX]) nogil:
    # identity for the fully actuated models, force on the cart otherwise
    B[0][0] = 1.0
    B[1][0] = 0.0
    B[0][1] = 0.0
    B[1][1] = 1.0 if md.code == 1 else 0.0


cdef void solve(int k, double A[NMAX][NMAX], double* b, double* x) nogil:
    cdef double det
    if k == 1:
        x[0] = b[0] / A[0][0]
        return
    det = A[0][0] * A[1][1] - A[0][1] * A[1][0]
    x[0] = (A[1][1] * b[0] - A[0][1] * b[1]) / det
    x[1] = (A[0][0] * b[1] - A[1][0] * b[0]) / det


cdef void task_map(Model* md, double* q, double* y, double J[NMAX][NMAX], double H[NMAX][NMAX][NMAX]) nogil:
    cdef double l1, l2, s1, c1, s12, c12
    cdef int a, i, j
    for a in range(NMAX):
        for i in range(NMAX):
            J[a][i] = 0.0
            for j in range(NMAX):
                H[a][i][j] = 0.0
    if md.code == 0:
        y[0] = q[0]
        J[0][0] = 1.0
    elif md.code == 1:
        l1 = md.p[2]; l2 = md.p[3]
        s1 = sin(q[0]); c1 = cos(q[0]); s12 = sin(q[0] + q[1]); c12 = cos(q[0] + q[1])
        y[0] = l1 * c1 + l2 * c12
        y[1] = l1 * s1 + l2 * s12
        J[0][0] = -l1 * s1 - l2 * s12
        J[0][1] = -l2 * s12
        J[1][0] = l1 * c1 + l2 * c12
        J[1][1] = l2 * c12
        H[0][0][0] = -l1 * c1 - l2 * c12
        H[0][0][1] = -l2 * c12
        H[0][1][0] = -l2 * c12
        H[0][1][1] = -l2 * c12
        H[1][0][0] = -l1 * s1 - l2 * s12
        H[1][0][1] = -l2 * s12
        H[1][1][0] = -l2 * s12
        H[1][1][1] = -l2 * s12
    else:
        y[0] = q[0]
        J[0][0] = 1.0


# ---------------------------------------------------------------- barrier

cdef double barrier(Cfg* c, double* q, double* grad, double hess[NMAX][NMAX]) nogil:
    """Value, gradient and Hessian of h(q)."""
    cdef int k = c.mdl.k, n = c.mdl.n, a, i, j, idx
    cdef double y[NMAX]
    cdef double J[NMAX][NMAX]
    cdef double H[NMAX][NMAX][NMAX]
    cdef double r[NMAX]
    cdef double val, width, center, dq
    for i in range(NMAX):
        grad[i] = 0.0
        for j in range(NMAX):
            hess[i][j] = 0.0
    if c.bcode == 0:
        task_map(&c.mdl, q, y, J, H)
        val = -c.bp[3] * c.bp[3]
        for a in range(n):
            r[a] = y[a] - c.bp[1 + a]
            val += r[a] * r[a]
        for i in range(k):
            for a in range(n):
                grad[i] += 2.0 * r[a] * J[a][i]
            for j in range(k):
                for a in range(n):
                    hess[i][j] += 2.0 * J[a][i] * J[a][j] + 2.0 * r[a] * H[a][i][j]
        return val
    width = c.bp[0]
    center = c.bp[1]
    idx = <int>c.bp[2]
    dq = q[idx] - center
    if c.bcode == 1:
        grad[idx] = -2.0 * dq
        hess[idx][idx] = -2.0
        return width * width - dq * dq
    grad[idx] = -1.0 if q[idx] >= center else 1.0
    return width - fabs(dq)


cdef inline double kappa(Cfg* c, double s) nogil:
    if c.fp[0] == 0.0:
        return c.fp[1] * s
    return c.fp[1] * s * s * s


# ---------------------------------------------------------------- tasks

cdef void task_ref(Cfg* c, double t, double* xd, double* xdd) nogil:
    cdef double th, r, w
    cdef int i, n = <int>c.tp[1]
    if c.tcode == 0:
        for i in range(n):
            xd[i] = c.tp[2 + i]
            xdd[i] = 0.0
    elif c.tcode == 1:
        for i in range(n):
            xd[i] = c.tp[2 + i] + c.tp[4 + i] * t
            xdd[i] = c.tp[4 + i]
    else:
        r = c.tp[4]; w = c.tp[5]
        th = w * t + c.tp[6]
        xd[0] = c.tp[2] + r * cos(th)
        xd[1] = c.tp[3] + r * sin(th)
        xdd[0] = -r * w * sin(th)
        xdd[1] = r * w * cos(th)


cdef int tracking(Cfg* c, double* q, double t, double* out) nogil:
    """Right-pseudoinverse velocity reference (square task Jacobian)."""
    cdef int n = c.mdl.n, k = c.mdl.k, a, b, i
    cdef double y[NMAX]
    cdef double J[NMAX][NMAX]
    cdef double H[NMAX][NMAX][NMAX]
    cdef double gram[NMAX][NMAX]
    cdef double xd[NMAX]
    cdef double xdd[NMAX]
    cdef double v[NMAX]
    cdef double z[NMAX]
    cdef double det
    task_map(&c.mdl, q, y, J, H)
    task_ref(c, t, xd, xdd)
    for a in range(n):
        v[a] = xdd[a] - c.tp[0] * (y[a] - xd[a])
        for b in range(n):
            gram[a][b] = 0.0
            for i in range(k):
                gram[a][b] += J[a][i] * J[b][i]
    det = gram[0][0] if n == 1 else gram[0][0] * gram[1][1] - gram[0][1] * gram[1][0]
    if not fabs(det) >= EPS_PINV:
        return SINGULARITY
    solve(n, gram, v, z)
    for i in range(k):
        out[i] = 0.0
        for a in range(n):
            out[i] += J[a][i] * z[a]
    return OK


# ---------------------------------------------------------------- filters

cdef int cbf_qp(double Lf, double* Lg, int m, double hval, Cfg* c, double* ud,
                int degenerate, Out* o) nogil:
    cdef double ah = kappa(c, hval), psi, nrm2 = 0.0, res
    cdef int i
    psi = Lf + ah
    for i in range(m):
        psi += Lg[i] * ud[i]
        nrm2 += Lg[i] * Lg[i]
    o.psi = psi
    if psi >= 0.0:
        for i in range(m):
            o.cmd[i] = ud[i]
        o.intervened = 0.0
    else:
        if nrm2 < EPS_V * EPS_V:
            return degenerate
        for i in range(m):
            o.cmd[i] = ud[i] - Lg[i] * (psi / nrm2)
        o.intervened = 1.0
    res = Lf + ah
    for i in range(m):
        res += Lg[i] * o.cmd[i]
    o.residual = res
    o.exact = res
    o.ncmd = m
    return OK


cdef double energy_value(Cfg* c, Dyn* d, double* q, double* qd, double h) nogil:
    cdef int i, j, k = c.mdl.k
    cdef double ke = 0.0
    for i in range(k):
        for j in range(k):
            ke += qd[i] * d.D[i][j] * qd[j]
    return -0.5 * ke + c.fp[2] * h


cdef double energy_exact(Cfg* c, Dyn* d, double* grad, double* qd, double* u, double hD) nogil:
    # hdot_D = -qd^T u + G^T qd + alpha_e J_h qd   (B = I)
    cdef int i, k = c.mdl.k
    cdef double r = 0.0
    for i in range(k):
        r += -qd[i] * u[i] + d.G[i] * qd[i] + c.fp[2] * grad[i] * qd[i]
    return r + kappa(c, hD)


ctypedef struct Reduced:
    double D_h
    double D_h_dot
    double B_h
    double drift
    double hdot


cdef int reduce(Cfg* c, Dyn* d, double* q, double* qd, double* grad, double hess[NMAX][NMAX],
                Reduced* r) nogil:
    """Scalar barrier dynamics for the cart-pole family (k = 2, m = 1)."""
    cdef int i, j, hidx = <int>c.fp[9]
    cdef double x[NMAX]
    cdef double jdot[NMAX]
    cdef double f[NMAX]
    cdef double inv = 0.0, rate, xDx = 0.0, jdq = 0.0, xf = 0.0
    if not fabs(grad[hidx]) >= EPS_DET:
        return DIFFEOMORPHISM
    solve(2, d.D, grad, x)
    for i in range(2):
        inv += grad[i] * x[i]
        jdot[i] = 0.0
        for j in range(2):
            jdot[i] += hess[i][j] * qd[j]
        jdq += jdot[i] * qd[i]
        f[i] = d.G[i]
        for j in range(2):
            f[i] += d.C[i][j] * qd[j]
    if not inv > 0.0:
        return INTERNAL_CONTRACT
    r.D_h = 1.0 / inv
    r.B_h = r.D_h * x[0]
    if not fabs(r.B_h) >= EPS_COUPLING:
        return COUPLING
    for i in range(2):
        xf += x[i] * f[i]
        for j in range(2):
            xDx += x[i] * (d.C[i][j] + d.C[j][i]) * x[j]
    r.drift = r.D_h * (xf - jdq)
    rate = 2.0 * (jdot[0] * x[0] + jdot[1] * x[1]) - xDx
    r.D_h_dot = -r.D_h * r.D_h * rate
    r.hdot = grad[0] * qd[0] + grad[1] * qd[1]
    return OK


cdef double certified(Cfg* c, Dyn* d, double* q, double* qd, double h, double* grad) nogil:
    cdef double x[NMAX]
    cdef double hd = 0.0, inv = 0.0
    cdef int i
    if c.mdl.m == c.mdl.k:
        return energy_value(c, d, q, qd, h)
    for i in range(2):
        hd += grad[i] * qd[i]
    if hd == 0.0:
        return c.fp[2] * h
    solve(2, d.D, grad, x)
    for i in range(2):
        inv += grad[i] * x[i]
    return -0.5 * hd * hd / inv + c.fp[2] * h


cdef int control(Cfg* c, double* q, double* qd, double t, Dyn* d, Out* o, double* h_out,
                 double* hD_out) nogil:
    cdef int k = c.mdl.k, m = c.mdl.m, i, j, st
    cdef double grad[NMAX]
    cdef double hess[NMAX][NMAX]
    cdef double qdes[NMAX]
    cdef double ud[NMAX]
    cdef double Lg[NMAX]
    cdef double y[NMAX]
    cdef double J[NMAX][NMAX]
    cdef double H[NMAX][NMAX][NMAX]
    cdef double xd[NMAX]
    cdef double xdd[NMAX]
    cdef double h, hD, Lf, speed, surr, alpha_e = c.fp[2], K0 = c.fp[3], K1 = c.fp[4]
    cdef double Kd[NMAX]
    cdef double hh, red_exact
    cdef Reduced r
    cdef int fid = c.fid
    Kd[0] = K0
    Kd[1] = K1

    dynamics(&c.mdl, q, qd, d)
    h = barrier(c, q, grad, hess)
    hD = certified(c, d, q, qd, h, grad)
    h_out[0] = h
    hD_out[0] = hD
    o.psi = NAN
    o.intervened = 0.0
    o.residual = NAN
    o.exact = NAN

    # nominal command
    if m < k:
        # cart-pole state feedback about the upright
        task_ref(c, t, xd, xdd)
        ud[0] = -(c.K[0] * (q[0] - xd[0]) + c.K[1] * (q[1] - UPRIGHT)
                  + c.K[2] * (qd[0] - xdd[0]) + c.K[3] * qd[1])
        o.ncmd = m
    elif c.joint_pd:
        if fid == 1 or fid == 4:
            for i in range(k):
                ud[i] = -c.kp * (q[i] - c.qgoal[i])
        else:
            for i in range(k):
                ud[i] = d.G[i] - c.kp * (q[i] - c.qgoal[i]) - c.kd * qd[i]
        o.ncmd = k
    else:
        st = tracking(c, q, t, qdes)
        if st != OK:
            return st
        if fid == 1 or fid == 4:
            for i in range(k):
                ud[i] = qdes[i]
        else:
            for i in range(k):
                ud[i] = d.G[i] + c.kd * (qdes[i] - qd[i])
        o.ncmd = k

    if fid == 0:
        for i in range(o.ncmd):
            o.cmd[i] = ud[i]
    elif fid == 1:
        st = cbf_qp(0.0, grad, k, h, c, ud, DEGENERATE_GRADIENT, o)
        if st != OK:
            return st
    elif fid == 2 or fid == 3:
        Lf = 0.0
        speed = 0.0
        for i in range(k):
            Lg[i] = -qd[i]
            speed += qd[i] * qd[i]
        speed = sqrt(speed)
        if fid == 3 and c.fp[8] == 1.0:
            for i in range(k):
                Lf += alpha_e * grad[i] * qd[i]
            Lf -= c.fp[6] * speed
        else:
            for i in range(k):
                Lf += (alpha_e * grad[i] + d.G[i]) * qd[i]
        if fid == 2:
            st = cbf_qp(Lf, Lg, k, hD, c, ud, INTERNAL_CONTRACT, o)
            if st != OK:
                return st
        else:
            surr = -c.fp[6] * speed * speed + alpha_e * h
            st = cbf_qp(Lf, Lg, k, surr, c, ud, INTERNAL_CONTRACT, o)
            if st != OK:
                return st
            o.exact = energy_exact(c, d, grad, qd, o.cmd, hD)
    elif fid == 4:
        Lf = 0.0
        for i in range(k):
            Lf += alpha_e * grad[i] * qd[i] + qd[i] * Kd[i] * qd[i]
            if c.fp[5] == 0.0:
                Lf += d.G[i] * qd[i]
            Lg[i] = -qd[i] * Kd[i]
        st = cbf_qp(Lf, Lg, k, hD, c, ud, INTERNAL_CONTRACT, o)
        if st != OK:
            return st
    else:
        hh = grad[0] * qd[0] + grad[1] * qd[1]
        if fid == 5:
            if hh == 0.0:
                Lg[0] = 0.0
                st = cbf_qp(0.0, Lg, m, alpha_e * h, c, ud, INTERNAL_CONTRACT, o)
                if st != OK:
                    return st
            else:
                st = reduce(c, d, q, qd, grad, hess, &r)
                if st != OK:
                    return st
                Lf = -0.5 * r.D_h_dot * hh * hh + hh * r.drift + alpha_e * hh
                Lg[0] = -hh * r.B_h
                st = cbf_qp(Lf, Lg, m, -0.5 * hh * r.D_h * hh + alpha_e * h, c, ud, INTERNAL_CONTRACT, o)
                if st != OK:
                    return st
        else:
            surr = -c.fp[6] * hh * hh + alpha_e * h
            if hh == 0.0:
                Lg[0] = 0.0
                st = cbf_qp(0.0, Lg, m, surr, c, ud, INTERNAL_CONTRACT, o)
                if st != OK:
                    return st
                o.exact = kappa(c, alpha_e * h)
            else:
                st = reduce(c, d, q, qd, grad, hess, &r)
                if st != OK:
                    return st
                speed = qd[0] * qd[0] + qd[1] * qd[1]
                Lf = -0.5 * c.fp[7] * hh * hh - c.fp[6] * fabs(hh) * (speed + 1.0) + alpha_e * hh
                Lg[0] = -hh * r.B_h
                st = cbf_qp(Lf, Lg, m, surr, c, ud, INTERNAL_CONTRACT, o)
                if st != OK:
                    return st
                red_exact = -0.5 * r.D_h_dot * hh * hh + hh * r.drift + alpha_e * hh
                o.exact = red_exact - hh * r.B_h * o.cmd[0] + kappa(c, -0.5 * hh * r.D_h * hh + alpha_e * h)

    # applied input
    if fid == 1 or fid == 4:
        for i in range(k):
            o.u[i] = -Kd[i] * (qd[i] - o.cmd[i])
            if c.fp[5] != 0.0:
                o.u[i] += d.G[i]
        if fid == 4:
            o.exact = energy_exact(c, d, grad, qd, o.u, hD)
    else:
        for i in range(m):
            o.u[i] = o.cmd[i]
    return OK


# ---------------------------------------------------------------- integration

cdef void accel(Model* md, double* q, double* qd, double* u, double* a) nogil:
    cdef Dyn d
    cdef double B[NMAX][NMAX]
    cdef double rhs[NMAX]
    cdef int i, j
    dynamics(md, q, qd, &d)
    actuation(md, B)
    for i in range(md.k):
        rhs[i] = -d.G[i]
        for j in range(md.m):
            rhs[i] += B[i][j] * u[j]
        for j in range(md.k):
            rhs[i] -= d.C[i][j] * qd[j]
    solve(md.k, d.D, rhs, a)


cdef int rk4(Model* md, double* q, double* qd, double* u, double dt) nogil:
    cdef double k1v[NMAX]
    cdef double k2v[NMAX]
    cdef double k3v[NMAX]
    cdef double k4v[NMAX]
    cdef double k2q[NMAX]
    cdef double k3q[NMAX]
    cdef double k4q[NMAX]
    cdef double qs[NMAX]
    cdef double vs[NMAX]
    cdef int i, k = md.k
    accel(md, q, qd, u, k1v)
    for i in range(k):
        qs[i] = q[i] + 0.5 * dt * qd[i]
        vs[i] = qd[i] + 0.5 * dt * k1v[i]
        k2q[i] = vs[i]
    accel(md, qs, vs, u, k2v)
    for i in range(k):
        qs[i] = q[i] + 0.5 * dt * k2q[i]
        vs[i] = qd[i] + 0.5 * dt * k2v[i]
        k3q[i] = vs[i]
    accel(md, qs, vs, u, k3v)
    for i in range(k):
        qs[i] = q[i] + dt * k3q[i]
        vs[i] = qd[i] + dt * k3v[i]
        k4q[i] = vs[i]
    accel(md, qs, vs, u, k4v)
    for i in range(k):
        q[i] = q[i] + dt / 6.0 * (qd[i] + 2 * k2q[i] + 2 * k3q[i] + k4q[i])
        qd[i] = qd[i] + dt / 6.0 * (k1v[i] + 2 * k2v[i] + 2 * k3v[i] + k4v[i])
        if not (isfinite(q[i]) and isfinite(qd[i])):
            return DIVERGENCE
    return OK


def rollout(int mcode, double[::1] mp, int bcode, double[::1] bp, int fid, double[::1] fp,
            int tcode, double[::1] tp, double[::1] cp, q0, qd0, double dt, int n_steps,
            double[:, ::1] out):
    """Fill ``out`` (n_steps + 1 rows, sim.trace_columns layout).

    Returns ``(status, rows)``: status 0 on success, otherwise an error code
    for :func:`describe` and the number of valid rows.
    """
    cdef Cfg c
    cdef Dyn d
    cdef Out o
    cdef double q[NMAX]
    cdef double qd[NMAX]
    cdef double h, hD, t
    cdef int i, j, col, st = OK, rows = 0
    cdef int k

    c.mdl.code = mcode
    c.mdl.k = 1 if mcode == 0 else 2
    c.mdl.m = 1 if mcode != 1 else 2
    c.mdl.n = 2 if mcode == 1 else 1
    k = c.mdl.k
    for i in range(8):
        c.mdl.p[i] = mp[i]
        c.bp[i] = bp[i]
    for i in range(12):
        c.fp[i] = fp[i]
        c.tp[i] = tp[i]
    c.bcode = bcode
    c.fid = fid
    c.tcode = tcode
    c.kd = cp[0]
    c.kp = cp[1]
    for i in range(4):
        c.K[i] = cp[2 + i]
    c.joint_pd = cp[6] != 0.0
    for i in range(NMAX):
        c.qgoal[i] = cp[7 + i]
    for i in range(k):
        q[i] = q0[i]
        qd[i] = qd0[i]

    with nogil:
        for i in range(n_steps + 1):
            t = i * dt
            st = control(&c, q, qd, t, &d, &o, &h, &hD)
            if st != OK:
                break
            rows = i + 1
            out[i, 0] = t
            for j in range(k):
                out[i, 1 + j] = q[j]
                out[i, 1 + k + j] = qd[j]
            col = 1 + 2 * k
            for j in range(o.ncmd):
                out[i, col + j] = o.cmd[j]
            col += o.ncmd
            for j in range(c.mdl.m):
                out[i, col + j] = o.u[j]
            col += c.mdl.m
            out[i, col] = h
            out[i, col + 1] = hD
            out[i, col + 2] = o.psi
            out[i, col + 3] = o.intervened
            out[i, col + 4] = o.residual
            out[i, col + 5] = o.exact
            if i == n_steps:
                break
            st = rk4(&c.mdl, q, qd, o.u, dt)
            if st != OK:
                break
    if st != OK:
        return st, rows
    return OK, n_steps + 1
