"""Compiled kernels shared by the flow, navigation, and learning layers.

Every flow field is lowered to one packed tuple of arrays (see
``FlowField._packed``) so a single jitted evaluator serves all flow
kinds. Mode-sum fields are evaluated through small per-point tables of
exp(i n x), exp(i n y) plus pack-time coefficient arrays, keeping the
inner mode loop free of transcendentals and of serial dependencies.
Callers provide a (4, ktab) float64 scratch array for those tables.
"""

import math

import numpy as np
from numba import njit

# Flow kind codes for the packed representation.
KIND_UNIFORM = 0       # params = (ux, uy); quiescent flow is (0, 0)
KIND_TAYLOR_GREEN = 1  # params = (amplitude,)
KIND_MODE_SUM = 2      # modes sorted by (kx, ky); kx >= 0 half plane
KIND_GRIDDED = 3       # grids[(u, v, a11, a12, a21, a22), ix, iy]

TWO_PI = 2.0 * math.pi


@njit(cache=True)
def flow_eval(kind, params, ikx, kyabs, kysgn, cu, cv, cp, c12, c21,
              pc0, ps0, paths, path_t0, path_inv_dt, grids, L, ktab,
              scratch, x, y, t, want_grad):
    """Velocity and velocity gradient of a packed flow at one point.

    Returns (u, v, a11, a12, a21, a22) with a_ij = d u_i / d x_j.
    When want_grad is False the gradient entries are zeros.
    """
    if kind == KIND_UNIFORM:
        return params[0], params[1], 0.0, 0.0, 0.0, 0.0

    if kind == KIND_TAYLOR_GREEN:
        a = params[0]
        sx = math.sin(x)
        cx = math.cos(x)
        sy = math.sin(y)
        cy = math.cos(y)
        u = a * sx * cy
        v = -a * cx * sy
        if want_grad:
            g = a * cx * cy
            h = a * sx * sy
            return u, v, g, -h, h, -g
        return u, v, 0.0, 0.0, 0.0, 0.0

    if kind == KIND_MODE_SUM:
        # Tables of exp(i n x) and exp(i n y) for n = 0 .. ktab-1.
        cxr = scratch[0]
        cxi = scratch[1]
        cyr = scratch[2]
        cyi = scratch[3]
        cx = math.cos(x)
        sx = math.sin(x)
        cy = math.cos(y)
        sy = math.sin(y)
        cxr[0] = 1.0
        cxi[0] = 0.0
        cyr[0] = 1.0
        cyi[0] = 0.0
        for n in range(1, ktab):
            cxr[n] = cxr[n - 1] * cx - cxi[n - 1] * sx
            cxi[n] = cxi[n - 1] * cx + cxr[n - 1] * sx
            cyr[n] = cyr[n - 1] * cy - cyi[n - 1] * sy
            cyi[n] = cyi[n - 1] * cy + cyr[n - 1] * sy
        unsteady = paths.shape[0] > 0
        i0 = 0
        frac = 0.0
        if unsteady:
            s = (t - path_t0) * path_inv_dt
            smax = paths.shape[0] - 1.0
            if s < 0.0:
                s = 0.0
            elif s > smax:
                s = smax
            i0 = int(s)
            if i0 > paths.shape[0] - 2:
                i0 = paths.shape[0] - 2
            frac = s - i0
        u = 0.0
        v = 0.0
        p = 0.0
        a12 = 0.0
        a21 = 0.0
        for m in range(ikx.size):
            exr = cxr[ikx[m]]
            exi = cxi[ikx[m]]
            sg = kysgn[m]
            eyr = cyr[kyabs[m]]
            eyi = sg * cyi[kyabs[m]]
            # exp(i k.x)
            er = exr * eyr - exi * eyi
            ei = exr * eyi + exi * eyr
            if unsteady:
                ph = paths[i0, m] * (1.0 - frac) + paths[i0 + 1, m] * frac
                pc = math.cos(ph)
                ps = math.sin(ph)
            else:
                pc = pc0[m]
                ps = ps0[m]
            c = er * pc - ei * ps  # cos(k.x + phi)
            u += cu[m] * c
            v += cv[m] * c
            if want_grad:
                sn = ei * pc + er * ps  # sin(k.x + phi)
                p += cp[m] * sn
                a12 += c12[m] * sn
                a21 += c21[m] * sn
        return u, v, -p, a12, a21, p

    # KIND_GRIDDED: bilinear interpolation on an L-periodic node grid.
    nx = grids.shape[1]
    ny = grids.shape[2]
    gx = (x % L) / L * nx
    gy = (y % L) / L * ny
    i0 = int(gx)
    j0 = int(gy)
    if i0 >= nx:
        i0 = nx - 1
    if j0 >= ny:
        j0 = ny - 1
    fx = gx - i0
    fy = gy - j0
    i1 = i0 + 1
    if i1 == nx:
        i1 = 0
    j1 = j0 + 1
    if j1 == ny:
        j1 = 0
    w00 = (1.0 - fx) * (1.0 - fy)
    w10 = fx * (1.0 - fy)
    w01 = (1.0 - fx) * fy
    w11 = fx * fy
    u = (w00 * grids[0, i0, j0] + w10 * grids[0, i1, j0]
         + w01 * grids[0, i0, j1] + w11 * grids[0, i1, j1])
    v = (w00 * grids[1, i0, j0] + w10 * grids[1, i1, j0]
         + w01 * grids[1, i0, j1] + w11 * grids[1, i1, j1])
    if not want_grad:
        return u, v, 0.0, 0.0, 0.0, 0.0
    a11 = (w00 * grids[2, i0, j0] + w10 * grids[2, i1, j0]
           + w01 * grids[2, i0, j1] + w11 * grids[2, i1, j1])
    a12 = (w00 * grids[3, i0, j0] + w10 * grids[3, i1, j0]
           + w01 * grids[3, i0, j1] + w11 * grids[3, i1, j1])
    a21 = (w00 * grids[4, i0, j0] + w10 * grids[4, i1, j0]
           + w01 * grids[4, i0, j1] + w11 * grids[4, i1, j1])
    a22 = (w00 * grids[5, i0, j0] + w10 * grids[5, i1, j0]
           + w01 * grids[5, i0, j1] + w11 * grids[5, i1, j1])
    return u, v, a11, a12, a21, a22


@njit(cache=True)
def advance_interval(kind, params, ikx, kyabs, kysgn, cu, cv, cp, c12, c21,
                     pc0, ps0, paths, path_t0, path_inv_dt, grids, L, ktab,
                     x, y, heading, engine_on, v_s, t0, dt, n_sub,
                     xb, yb, d_b, out_xy):
    """RK4-advance the vessel for up to n_sub steps under one fixed control.

    Position obeys dX/dt = u(X, t) + v_s * (cos heading, sin heading) when
    the engine is on, pure advection otherwise. Stops early when the
    target disc |X - x_B| <= d_b is entered; the crossing is located by
    linear interpolation of the distance to the target inside the step.
    A non-positive d_b disables the arrival check.

    Writes one row (x, y) per completed step into out_xy (the arrival row
    holds the interpolated entry point) and returns
    (n_rows, arrived, elapsed, x_end, y_end).
    """
    scratch = np.empty((4, ktab))
    upx = 0.0
    upy = 0.0
    if engine_on:
        upx = v_s * math.cos(heading)
        upy = v_s * math.sin(heading)
    check = d_b > 0.0
    db2 = d_b * d_b
    ddx = x - xb
    ddy = y - yb
    d2_prev = ddx * ddx + ddy * ddy
    elapsed = 0.0
    n_rows = 0
    for k in range(n_sub):
        tk = t0 + k * dt
        th = tk + 0.5 * dt
        u1, v1, _, _, _, _ = flow_eval(
            kind, params, ikx, kyabs, kysgn, cu, cv, cp, c12, c21,
            pc0, ps0, paths, path_t0, path_inv_dt, grids, L, ktab,
            scratch, x, y, tk, False)
        k1x = u1 + upx
        k1y = v1 + upy
        u2, v2, _, _, _, _ = flow_eval(
            kind, params, ikx, kyabs, kysgn, cu, cv, cp, c12, c21,
            pc0, ps0, paths, path_t0, path_inv_dt, grids, L, ktab,
            scratch, x + 0.5 * dt * k1x, y + 0.5 * dt * k1y, th, False)
        k2x = u2 + upx
        k2y = v2 + upy
        u3, v3, _, _, _, _ = flow_eval(
            kind, params, ikx, kyabs, kysgn, cu, cv, cp, c12, c21,
            pc0, ps0, paths, path_t0, path_inv_dt, grids, L, ktab,
            scratch, x + 0.5 * dt * k2x, y + 0.5 * dt * k2y, th, False)
        k3x = u3 + upx
        k3y = v3 + upy
        u4, v4, _, _, _, _ = flow_eval(
            kind, params, ikx, kyabs, kysgn, cu, cv, cp, c12, c21,
            pc0, ps0, paths, path_t0, path_inv_dt, grids, L, ktab,
            scratch, x + dt * k3x, y + dt * k3y, tk + dt, False)
        k4x = u4 + upx
        k4y = v4 + upy
        xn = x + dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        yn = y + dt / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
        if check:
            ddx = xn - xb
            ddy = yn - yb
            d2 = ddx * ddx + ddy * ddy
            if d2 <= db2:
                d_prev = math.sqrt(d2_prev)
                d_new = math.sqrt(d2)
                denom = d_prev - d_new
                if denom > 0.0:
                    f = (d_prev - d_b) / denom
                else:
                    f = 1.0
                if f < 0.0:
                    f = 0.0
                elif f > 1.0:
                    f = 1.0
                xn = x + f * (xn - x)
                yn = y + f * (yn - y)
                elapsed += f * dt
                out_xy[n_rows, 0] = xn
                out_xy[n_rows, 1] = yn
                n_rows += 1
                return n_rows, True, elapsed, xn, yn
            d2_prev = d2
        x = xn
        y = yn
        elapsed += dt
        out_xy[n_rows, 0] = x
        out_xy[n_rows, 1] = y
        n_rows += 1
    return n_rows, False, elapsed, x, y


@njit(cache=True)
def steering_rate(a11, a12, a21, a22, theta):
    """Optimal-steering angular rate driven by the flow gradient."""
    st = math.sin(theta)
    ct = math.cos(theta)
    return a21 * st * st - a12 * ct * ct + (a11 - a22) * ct * st


@njit(cache=True)
def integrate_steering(kind, params, ikx, kyabs, kysgn, cu, cv, cp, c12, c21,
                       pc0, ps0, paths, path_t0, path_inv_dt, grids, L, ktab,
                       x, y, theta, v_s, t0, dt, n_max,
                       xb, yb, d_b, record, out_xyth):
    """Integrate the coupled (X, theta) optimal-steering system with RK4.

    The engine is always on. Terminates on target-disc entry (interpolated
    inside the step) or after n_max steps. With record=True writes rows
    (x, y, theta mod 2pi) including the initial state at row 0.

    Returns (arrived, n_rows, elapsed, x_end, y_end, theta_end).
    """
    scratch = np.empty((4, ktab))
    if record:
        out_xyth[0, 0] = x
        out_xyth[0, 1] = y
        out_xyth[0, 2] = theta % TWO_PI
    n_rows = 1
    check = d_b > 0.0
    db2 = d_b * d_b
    ddx = x - xb
    ddy = y - yb
    d2_prev = ddx * ddx + ddy * ddy
    if check and d2_prev <= db2:
        return True, n_rows, 0.0, x, y, theta
    elapsed = 0.0
    for k in range(n_max):
        tk = t0 + k * dt
        th = tk + 0.5 * dt

        u, v, a11, a12, a21, a22 = flow_eval(
            kind, params, ikx, kyabs, kysgn, cu, cv, cp, c12, c21,
            pc0, ps0, paths, path_t0, path_inv_dt, grids, L, ktab,
            scratch, x, y, tk, True)
        k1x = u + v_s * math.cos(theta)
        k1y = v + v_s * math.sin(theta)
        k1t = steering_rate(a11, a12, a21, a22, theta)

        x2 = x + 0.5 * dt * k1x
        y2 = y + 0.5 * dt * k1y
        t2 = theta + 0.5 * dt * k1t
        u, v, a11, a12, a21, a22 = flow_eval(
            kind, params, ikx, kyabs, kysgn, cu, cv, cp, c12, c21,
            pc0, ps0, paths, path_t0, path_inv_dt, grids, L, ktab,
            scratch, x2, y2, th, True)
        k2x = u + v_s * math.cos(t2)
        k2y = v + v_s * math.sin(t2)
        k2t = steering_rate(a11, a12, a21, a22, t2)

        x3 = x + 0.5 * dt * k2x
        y3 = y + 0.5 * dt * k2y
        t3 = theta + 0.5 * dt * k2t
        u, v, a11, a12, a21, a22 = flow_eval(
            kind, params, ikx, kyabs, kysgn, cu, cv, cp, c12, c21,
            pc0, ps0, paths, path_t0, path_inv_dt, grids, L, ktab,
            scratch, x3, y3, th, True)
        k3x = u + v_s * math.cos(t3)
        k3y = v + v_s * math.sin(t3)
        k3t = steering_rate(a11, a12, a21, a22, t3)

        x4 = x + dt * k3x
        y4 = y + dt * k3y
        t4 = theta + dt * k3t
        u, v, a11, a12, a21, a22 = flow_eval(
            kind, params, ikx, kyabs, kysgn, cu, cv, cp, c12, c21,
            pc0, ps0, paths, path_t0, path_inv_dt, grids, L, ktab,
            scratch, x4, y4, tk + dt, True)
        k4x = u + v_s * math.cos(t4)
        k4y = v + v_s * math.sin(t4)
        k4t = steering_rate(a11, a12, a21, a22, t4)

        xn = x + dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        yn = y + dt / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
        tn = theta + dt / 6.0 * (k1t + 2.0 * k2t + 2.0 * k3t + k4t)
        if check:
            ddx = xn - xb
            ddy = yn - yb
            d2 = ddx * ddx + ddy * ddy
            if d2 <= db2:
                d_prev = math.sqrt(d2_prev)
                d_new = math.sqrt(d2)
                denom = d_prev - d_new
                if denom > 0.0:
                    f = (d_prev - d_b) / denom
                else:
                    f = 1.0
                if f < 0.0:
                    f = 0.0
                elif f > 1.0:
                    f = 1.0
                xn = x + f * (xn - x)
                yn = y + f * (yn - y)
                tn = theta + f * (tn - theta)
                elapsed += f * dt
                if record:
                    out_xyth[n_rows, 0] = xn
                    out_xyth[n_rows, 1] = yn
                    out_xyth[n_rows, 2] = tn % TWO_PI
                n_rows += 1
                return True, n_rows, elapsed, xn, yn, tn
            d2_prev = d2
        x = xn
        y = yn
        theta = tn
        elapsed += dt
        if record:
            out_xyth[n_rows, 0] = x
            out_xyth[n_rows, 1] = y
            out_xyth[n_rows, 2] = theta % TWO_PI
        n_rows += 1
    return False, n_rows, elapsed, x, y, theta


@njit(cache=True)
def shoot(kind, params, ikx, kyabs, kysgn, cu, cv, cp, c12, c21,
          pc0, ps0, paths, path_t0, path_inv_dt, grids, L, ktab,
          xs, ys, thetas, v_s, t0, dt, n_max, xb, yb, d_b,
          arrived_out, time_out):
    """Outcome-only steering integrations for a batch of launches."""
    dummy = np.empty((1, 3))
    for i in range(xs.size):
        arrived, _, elapsed, _, _, _ = integrate_steering(
            kind, params, ikx, kyabs, kysgn, cu, cv, cp, c12, c21,
            pc0, ps0, paths, path_t0, path_inv_dt, grids, L, ktab,
            xs[i], ys[i], thetas[i], v_s, t0, dt, n_max,
            xb, yb, d_b, False, dummy)
        arrived_out[i] = 1 if arrived else 0
        time_out[i] = elapsed


@njit(cache=True)
def select_action(H, s, u):
    """Sample an action index from softmax preferences of state row s.

    u is one uniform(0, 1) draw; inverse-CDF over the softmax with
    max-subtraction for overflow safety.
    """
    n = H.shape[1]
    m = H[s, 0]
    for j in range(1, n):
        if H[s, j] > m:
            m = H[s, j]
    z = 0.0
    for j in range(n):
        z += math.exp(H[s, j] - m)
    target = u * z
    acc = 0.0
    for j in range(n):
        acc += math.exp(H[s, j] - m)
        if acc >= target:
            return j
    return n - 1


@njit(cache=True)
def greedy_action(H, s):
    """Argmax of preferences; ties broken by the lowest action id."""
    n = H.shape[1]
    best = 0
    bv = H[s, 0]
    for j in range(1, n):
        if H[s, j] > bv:
            bv = H[s, j]
            best = j
    return best


@njit(cache=True)
def actor_critic_step(H, V, s, a, r, s_next, terminal,
                      alpha_actor, alpha_critic):
    """One-step actor-critic update in place; returns the TD error.

    Critic: V[s] += alpha_critic * e with e = r + V[s_next] - V[s]
    (bootstrap dropped on terminal transitions). Actor: preferences of
    state s move along the softmax policy gradient evaluated before the
    update. No other state row is touched.
    """
    n = H.shape[1]
    m = H[s, 0]
    for j in range(1, n):
        if H[s, j] > m:
            m = H[s, j]
    z = 0.0
    for j in range(n):
        z += math.exp(H[s, j] - m)
    e = r - V[s]
    if not terminal:
        e += V[s_next]
    V[s] += alpha_critic * e
    coef = alpha_actor * e
    for b in range(n):
        pb = math.exp(H[s, b] - m) / z
        ind = 1.0 if b == a else 0.0
        H[s, b] += coef * (ind - pb)
    return e


@njit(cache=True)
def tile_index(x, y, ox, oy, inv_delta, n_x, n_y):
    """Row-major tile id of a position; outside points clamp to the edge."""
    ix = int(math.floor((x - ox) * inv_delta))
    iy = int(math.floor((y - oy) * inv_delta))
    if ix < 0:
        ix = 0
    elif ix >= n_x:
        ix = n_x - 1
    if iy < 0:
        iy = 0
    elif iy >= n_y:
        iy = n_y - 1
    return iy * n_x + ix


@njit(cache=True)
def rl_episode(kind, params, ikx, kyabs, kysgn, cu, cv, cp, c12, c21,
               pc0, ps0, paths, path_t0, path_inv_dt, grids, L, ktab,
               H, V, ox, oy, inv_delta, n_x, n_y,
               ctrl_heading, ctrl_engine,
               x0, y0, flow_t0, v_s, dt, n_sub, total_step_cap,
               xb, yb, d_b, lam, v_s_nominal,
               learn, alpha_actor, alpha_critic,
               greedy, uniforms,
               record, out_xy, out_act, out_rew, out_eng, out_rows):
    """One tile-policy episode: decide every n_sub*dt, step with RK4.

    Controls are (ctrl_heading[a], ctrl_engine[a]) pairs; an engine-off
    action keeps the previous heading. Rewards follow the shaped
    minimum-time form with energy weight lam. With learn=True the
    preferences/values are updated in place after every decision interval
    (one-step actor-critic, zero bootstrap on arrival).

    Returns (reached, duration, t_pow, total_reward, n_epochs, n_clamped,
    n_rows). With record=True, out_xy gets one row per RK4 step and the
    per-epoch arrays hold action id, reward, engine flag and row count.
    """
    x = x0
    y = y0
    heading = 0.0
    steps_done = 0
    reached = False
    duration = 0.0
    t_pow = 0.0
    total_reward = 0.0
    n_epochs = 0
    n_clamped = 0
    n_rows = 0
    arena_w = n_x / inv_delta
    arena_h = n_y / inv_delta
    while steps_done < total_step_cap:
        s = tile_index(x, y, ox, oy, inv_delta, n_x, n_y)
        if (x < ox) or (x >= ox + arena_w) or (y < oy) or (y >= oy + arena_h):
            n_clamped += 1
        if greedy:
            a = greedy_action(H, s)
        else:
            a = select_action(H, s, uniforms[n_epochs])
        engine = ctrl_engine[a] != 0
        if engine:
            heading = ctrl_heading[a]
        n_this = n_sub
        remaining = total_step_cap - steps_done
        if n_this > remaining:
            n_this = remaining
        rows, arrived, elapsed, xn, yn = advance_interval(
            kind, params, ikx, kyabs, kysgn, cu, cv, cp, c12, c21,
            pc0, ps0, paths, path_t0, path_inv_dt, grids, L, ktab,
            x, y, heading, engine, v_s,
            flow_t0 + duration, dt, n_this, xb, yb, d_b,
            out_xy[n_rows:n_rows + n_this])
        steps_done += rows
        if engine:
            t_pow += elapsed
        # Shaped reward: time (and powered-time) penalty plus the change
        # in straight-line time-to-go at the nominal propulsion speed.
        pen = elapsed
        if engine:
            pen += lam * elapsed
        d_old = math.hypot(xb - x, yb - y)
        d_new = math.hypot(xb - xn, yb - yn)
        r = -pen + (d_old - d_new) / v_s_nominal
        total_reward += r
        duration += elapsed
        if learn:
            s_next = tile_index(xn, yn, ox, oy, inv_delta, n_x, n_y)
            actor_critic_step(H, V, s, a, r, s_next, arrived,
                              alpha_actor, alpha_critic)
        if record:
            out_act[n_epochs] = a
            out_rew[n_epochs] = r
            out_eng[n_epochs] = 1 if engine else 0
            out_rows[n_epochs] = rows
        n_rows += rows
        n_epochs += 1
        x = xn
        y = yn
        if arrived:
            reached = True
            break
    return reached, duration, t_pow, total_reward, n_epochs, n_clamped, n_rows


@njit(cache=True)
def accumulate_residence(pos, times, x0, y0, inv_pixel, out):
    """Add per-pixel residence time of one polyline trajectory to out.

    Each segment is split at pixel boundaries (Amanatides-Woo traversal)
    assuming constant velocity inside the segment. Endpoints outside the
    grid are clamped onto it, so boundary pixels absorb out-of-domain time
    and the total added mass always equals the trajectory duration.
    """
    nx = out.shape[0]
    ny = out.shape[1]
    wx = nx / inv_pixel
    wy = ny / inv_pixel
    eps = 1e-12 * (wx + wy)
    for seg in range(pos.shape[0] - 1):
        dt_seg = times[seg + 1] - times[seg]
        if dt_seg <= 0.0:
            continue
        ax = pos[seg, 0] - x0
        ay = pos[seg, 1] - y0
        bx = pos[seg + 1, 0] - x0
        by = pos[seg + 1, 1] - y0
        if ax < 0.0:
            ax = 0.0
        elif ax > wx - eps:
            ax = wx - eps
        if ay < 0.0:
            ay = 0.0
        elif ay > wy - eps:
            ay = wy - eps
        if bx < 0.0:
            bx = 0.0
        elif bx > wx - eps:
            bx = wx - eps
        if by < 0.0:
            by = 0.0
        elif by > wy - eps:
            by = wy - eps
        ix = int(ax * inv_pixel)
        iy = int(ay * inv_pixel)
        jx = int(bx * inv_pixel)
        jy = int(by * inv_pixel)
        if ix >= nx:
            ix = nx - 1
        if iy >= ny:
            iy = ny - 1
        if jx >= nx:
            jx = nx - 1
        if jy >= ny:
            jy = ny - 1
        if ix == jx and iy == jy:
            out[ix, iy] += dt_seg
            continue
        dx = bx - ax
        dy = by - ay
        step_x = 1 if dx > 0.0 else -1
        step_y = 1 if dy > 0.0 else -1
        if dx != 0.0:
            nxt = (ix + (1 if dx > 0.0 else 0)) / inv_pixel
            t_max_x = (nxt - ax) / dx
            t_dx = 1.0 / (abs(dx) * inv_pixel)
        else:
            t_max_x = 1e300
            t_dx = 1e300
        if dy != 0.0:
            nyt = (iy + (1 if dy > 0.0 else 0)) / inv_pixel
            t_max_y = (nyt - ay) / dy
            t_dy = 1.0 / (abs(dy) * inv_pixel)
        else:
            t_max_y = 1e300
            t_dy = 1e300
        s_cur = 0.0
        guard = nx + ny + 4
        done = False
        while guard > 0:
            guard -= 1
            s_next = t_max_x if t_max_x < t_max_y else t_max_y
            if s_next >= 1.0:
                out[ix, iy] += (1.0 - s_cur) * dt_seg
                done = True
                break
            out[ix, iy] += (s_next - s_cur) * dt_seg
            s_cur = s_next
            if t_max_x < t_max_y:
                t_max_x += t_dx
                ix += step_x
                if ix < 0:
                    ix = 0
                elif ix >= nx:
                    ix = nx - 1
            else:
                t_max_y += t_dy
                iy += step_y
                if iy < 0:
                    iy = 0
                elif iy >= ny:
                    iy = ny - 1
        if not done:
            out[ix, iy] += (1.0 - s_cur) * dt_seg
