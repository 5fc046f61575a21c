"""Numba kernels: packed Hamiltonian application and the jitted DP45 driver.

State layouts by integration kind:

* KIND_KET: psi, length nf * S (S = 1 for field-only models)
* KIND_MASTER: rho flattened row-major, length (nf * S)^2
* KIND_FRAME_MASTER: [rho-tilde flat, beta], length (nf * S)^2 + 1;
  the co-moving displacement beta is integrated jointly
* KIND_MEANFIELD1: [<a>, <s12>, <s22>], length 3
* KIND_CUMULANT2: 12 moments, see _rhs_cumulant

A Hamiltonian is (diag, terms): a real static diagonal plus terms
c_m(t) (F (x) M) + h.c. with F one of {id, a, adag, a^2, n}, M a small
spin matrix, and c_m(t) selected by a coefficient kind (constant,
e^{i nu t} harmonic, ramp shapes). All functions are module level with
cache=True so compilation survives across processes.
"""

import math

import numpy as np
from numba import njit

# field kinds
F_ID = 0
F_A = 1
F_ADAG = 2
F_A2 = 3
F_N = 4

# coefficient kinds
C_CONST = 0
C_HARMONIC = 1   # c0 exp(i p1 t)
C_RAMP_COS = 2   # c0 * (1 - cos(pi t / p1))/2, held at c0 for t >= p1
C_RAMP_LIN = 3   # c0 * t/p1, held
C_RAMP_COS_SQ = 4
C_RAMP_LIN_SQ = 5

# jump kinds
J_FIELD_A = 0
J_SPIN = 1

KIND_KET = 0
KIND_MASTER = 1
KIND_FRAME_MASTER = 2
KIND_MEANFIELD1 = 3
KIND_CUMULANT2 = 4

STATUS_OK = 0
STATUS_MAX_STEPS = 1
STATUS_STEP_UNDERFLOW = 2

_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = np.zeros((7, 7))
_A[1, 0] = 1 / 5
_A[2, 0], _A[2, 1] = 3 / 40, 9 / 40
_A[3, 0], _A[3, 1], _A[3, 2] = 44 / 45, -56 / 15, 32 / 9
_A[4, 0], _A[4, 1], _A[4, 2], _A[4, 3] = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
_A[5, 0], _A[5, 1], _A[5, 2], _A[5, 3], _A[5, 4] = \
    9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
_A[6, 0], _A[6, 2], _A[6, 3], _A[6, 4], _A[6, 5] = \
    35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])
_P = np.array([
    [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])


@njit(cache=True)
def _coef(t, ckind, c0, p1):
    if ckind == C_CONST:
        return c0
    if ckind == C_HARMONIC:
        return c0 * complex(math.cos(p1 * t), math.sin(p1 * t))
    if ckind == C_RAMP_COS:
        s = 1.0 if t >= p1 else 0.5 * (1.0 - math.cos(math.pi * t / p1))
        return c0 * s
    if ckind == C_RAMP_LIN:
        s = 1.0 if t >= p1 else t / p1
        return c0 * s
    if ckind == C_RAMP_COS_SQ:
        s = 1.0 if t >= p1 else 0.5 * (1.0 - math.cos(math.pi * t / p1))
        return c0 * s * s
    s = 1.0 if t >= p1 else t / p1
    return c0 * s * s


@njit(cache=True)
def _apply_h_ket(t, psi, out, nf, S, diag,
                 t_fkind, t_ckind, t_c0, t_p1, t_smat):
    """out = H(t) psi. psi indexed as i = n * S + s."""
    d = nf * S
    for i in range(d):
        out[i] = diag[i] * psi[i]
    for m in range(t_fkind.shape[0]):
        c = _coef(t, t_ckind[m], t_c0[m], t_p1[m])
        cc = np.conj(c)
        fk = t_fkind[m]
        M = t_smat[m]
        if fk == F_ID:
            # c (I x M) + cc (I x M†)
            for n in range(nf):
                base = n * S
                for s in range(S):
                    acc = 0.0 + 0.0j
                    for u in range(S):
                        acc += (c * M[s, u] + cc * np.conj(M[u, s])) * psi[base + u]
                    out[base + s] += acc
        elif fk == F_A:
            # c (a x M): row n takes sqrt(n+1) from block n+1
            # cc (a† x M†): row n takes sqrt(n) from block n-1
            for n in range(nf):
                base = n * S
                if n + 1 < nf:
                    w = math.sqrt(n + 1.0)
                    src = (n + 1) * S
                    for s in range(S):
                        acc = 0.0 + 0.0j
                        for u in range(S):
                            acc += M[s, u] * psi[src + u]
                        out[base + s] += c * w * acc
                if n >= 1:
                    w = math.sqrt(float(n))
                    src = (n - 1) * S
                    for s in range(S):
                        acc = 0.0 + 0.0j
                        for u in range(S):
                            acc += np.conj(M[u, s]) * psi[src + u]
                        out[base + s] += cc * w * acc
        elif fk == F_ADAG:
            for n in range(nf):
                base = n * S
                if n >= 1:
                    w = math.sqrt(float(n))
                    src = (n - 1) * S
                    for s in range(S):
                        acc = 0.0 + 0.0j
                        for u in range(S):
                            acc += M[s, u] * psi[src + u]
                        out[base + s] += c * w * acc
                if n + 1 < nf:
                    w = math.sqrt(n + 1.0)
                    src = (n + 1) * S
                    for s in range(S):
                        acc = 0.0 + 0.0j
                        for u in range(S):
                            acc += np.conj(M[u, s]) * psi[src + u]
                        out[base + s] += cc * w * acc
        elif fk == F_A2:
            # c (a^2 x M) + cc (a†^2 x M†)
            for n in range(nf):
                base = n * S
                if n + 2 < nf:
                    w = math.sqrt((n + 1.0) * (n + 2.0))
                    src = (n + 2) * S
                    for s in range(S):
                        acc = 0.0 + 0.0j
                        for u in range(S):
                            acc += M[s, u] * psi[src + u]
                        out[base + s] += c * w * acc
                if n >= 2:
                    w = math.sqrt(n * (n - 1.0))
                    src = (n - 2) * S
                    for s in range(S):
                        acc = 0.0 + 0.0j
                        for u in range(S):
                            acc += np.conj(M[u, s]) * psi[src + u]
                        out[base + s] += cc * w * acc
        else:  # F_N
            for n in range(nf):
                base = n * S
                for s in range(S):
                    acc = 0.0 + 0.0j
                    for u in range(S):
                        acc += (c * M[s, u] + cc * np.conj(M[u, s])) * psi[base + u]
                    out[base + s] += float(n) * acc


@njit(cache=True)
def _apply_h_rho(t, rho, out, nf, S, diag,
                 t_fkind, t_ckind, t_c0, t_p1, t_smat):
    """out = H(t) @ rho (left multiplication), rho shape (d, d)."""
    d = nf * S
    for i in range(d):
        di = diag[i]
        for j in range(d):
            out[i, j] = di * rho[i, j]
    for m in range(t_fkind.shape[0]):
        c = _coef(t, t_ckind[m], t_c0[m], t_p1[m])
        cc = np.conj(c)
        fk = t_fkind[m]
        M = t_smat[m]
        if fk == F_ID or fk == F_N:
            for n in range(nf):
                scale = float(n) if fk == F_N else 1.0
                for s in range(S):
                    row = n * S + s
                    for u in range(S):
                        w = scale * (c * M[s, u] + cc * np.conj(M[u, s]))
                        if w != 0.0:
                            src = n * S + u
                            for j in range(d):
                                out[row, j] += w * rho[src, j]
        elif fk == F_A or fk == F_ADAG:
            # treat as c (a x M) + cc (a† x M†), with roles swapped for F_ADAG
            if fk == F_A:
                cdn, cup = c, cc      # cdn couples n <- n+1, cup couples n <- n-1
            else:
                cdn, cup = cc, c
            for n in range(nf):
                if n + 1 < nf:
                    w0 = math.sqrt(n + 1.0)
                    for s in range(S):
                        row = n * S + s
                        for u in range(S):
                            mel = M[s, u] if fk == F_A else np.conj(M[u, s])
                            w = cdn * w0 * mel
                            if w != 0.0:
                                src = (n + 1) * S + u
                                for j in range(d):
                                    out[row, j] += w * rho[src, j]
                if n >= 1:
                    w0 = math.sqrt(float(n))
                    for s in range(S):
                        row = n * S + s
                        for u in range(S):
                            mel = np.conj(M[u, s]) if fk == F_A else M[s, u]
                            w = cup * w0 * mel
                            if w != 0.0:
                                src = (n - 1) * S + u
                                for j in range(d):
                                    out[row, j] += w * rho[src, j]
        else:  # F_A2
            for n in range(nf):
                if n + 2 < nf:
                    w0 = math.sqrt((n + 1.0) * (n + 2.0))
                    for s in range(S):
                        row = n * S + s
                        for u in range(S):
                            w = c * w0 * M[s, u]
                            if w != 0.0:
                                src = (n + 2) * S + u
                                for j in range(d):
                                    out[row, j] += w * rho[src, j]
                if n >= 2:
                    w0 = math.sqrt(n * (n - 1.0))
                    for s in range(S):
                        row = n * S + s
                        for u in range(S):
                            w = cc * w0 * np.conj(M[u, s])
                            if w != 0.0:
                                src = (n - 2) * S + u
                                for j in range(d):
                                    out[row, j] += w * rho[src, j]


@njit(cache=True)
def _add_dissipators(rho, dy, nf, S, j_kind, j_rate, j_smat, j_ldl):
    """dy += sum_k rate_k D[L_k] rho for field-a and spin-matrix jumps."""
    d = nf * S
    for kjump in range(j_kind.shape[0]):
        rate = j_rate[kjump]
        if j_kind[kjump] == J_FIELD_A:
            # a rho a†: [(n,s),(m,u)] <- sqrt(n+1) sqrt(m+1) rho[(n+1,s),(m+1,u)]
            for n in range(nf - 1):
                wn = math.sqrt(n + 1.0)
                for s in range(S):
                    row = n * S + s
                    srow = (n + 1) * S + s
                    for m in range(nf - 1):
                        wm = math.sqrt(m + 1.0)
                        for u in range(S):
                            dy[row, m * S + u] += rate * wn * wm * rho[srow, (m + 1) * S + u]
            # -(1/2){a†a, rho}: weight (n + m)/2
            for n in range(nf):
                for s in range(S):
                    row = n * S + s
                    for m in range(nf):
                        w = 0.5 * rate * (n + m)
                        for u in range(S):
                            dy[row, m * S + u] -= w * rho[row, m * S + u]
        else:
            L = j_smat[kjump]
            LdL = j_ldl[kjump]
            for n in range(nf):
                for m in range(nf):
                    # block is rho[n*S:(n+1)*S, m*S:(m+1)*S]
                    for s in range(S):
                        for u in range(S):
                            acc = 0.0 + 0.0j
                            for p in range(S):
                                lsp = L[s, p]
                                if lsp != 0.0:
                                    for q in range(S):
                                        acc += lsp * rho[n * S + p, m * S + q] * np.conj(L[u, q])
                            anti = 0.0 + 0.0j
                            for p in range(S):
                                anti += LdL[s, p] * rho[n * S + p, m * S + u]
                                anti += rho[n * S + s, m * S + p] * LdL[p, u]
                            dy[n * S + s, m * S + u] += rate * (acc - 0.5 * anti)


@njit(cache=True)
def _rhs_meanfield1(t, y, dy, params):
    omega = params[0].real
    kappa = params[1].real
    gamma = params[2].real
    Omega = params[3].real
    lam = params[4].real
    nsp = params[5].real
    eta = params[6].real
    omega_d = params[7].real
    B = params[8]
    a = y[0]
    s12 = y[1]
    s22 = y[2]
    Bc = np.conj(B)
    E = eta * complex(math.cos(omega_d * t), -math.sin(omega_d * t))
    dy[0] = -(1j * omega + 0.5 * kappa) * a \
        - 1j * lam * Bc * nsp * (s12 + np.conj(s12)) - 1j * E
    dy[1] = -(1j * Omega + 0.5 * gamma) * s12 \
        + 1j * lam * (B * a + Bc * np.conj(a)) * (2.0 * s22 - 1.0)
    x = B * a * s12
    yv = B * a * np.conj(s12)
    ds22 = -gamma * s22.real - 2.0 * lam * (x.imag - yv.imag)
    dy[2] = complex(ds22, 0.0)


@njit(cache=True)
def _rhs_cumulant2(t, y, dy, params):
    omega = params[0].real
    kappa = params[1].real
    gamma = params[2].real
    Omega = params[3].real
    lam = params[4].real
    nsp = params[5].real
    eta = params[6].real
    omega_d = params[7].real
    B = params[8]
    Bc = np.conj(B)
    E = eta * complex(math.cos(omega_d * t), -math.sin(omega_d * t))

    a = y[0]
    s12 = y[1]
    s22 = y[2].real
    a2 = y[3]
    nph = y[4].real
    as12 = y[5]
    as21 = y[6]
    as22 = y[7]
    w12 = y[8]
    w21 = y[9].real
    w1222 = y[10]
    w2222 = y[11].real

    ac = np.conj(a)
    s21 = np.conj(s12)
    nm1 = nsp - 1.0

    # Gaussian-closed mixed third moments (central form):
    # <XYZ> = <XY><Z> + <XZ><Y> + <YZ><X> - 2<X><Y><Z>
    a2s22 = a2 * s22 + 2.0 * as22 * a - 2.0 * a * a * s22
    ns22 = nph * s22 + np.conj(as22) * a + as22 * ac - 2.0 * (a * ac) * s22
    a2s12 = a2 * s12 + 2.0 * as12 * a - 2.0 * a * a * s12
    a2s21 = a2 * s21 + 2.0 * as21 * a - 2.0 * a * a * s21
    ns12 = nph * s12 + np.conj(as21) * a + as12 * ac - 2.0 * (a * ac) * s12
    ns21 = nph * s21 + np.conj(as12) * a + as21 * ac - 2.0 * (a * ac) * s21
    # field (x) two-spin triples (distinct sites)
    as2212 = a * w1222 + as22 * s12 + as12 * s22 - 2.0 * a * s22 * s12
    ads2212 = ac * w1222 + np.conj(as22) * s12 + np.conj(as21) * s22 - 2.0 * ac * s22 * s12
    as2222 = a * w2222 + 2.0 * as22 * s22 - 2.0 * a * s22 * s22
    ads2222 = ac * w2222 + 2.0 * np.conj(as22) * s22 - 2.0 * ac * s22 * s22
    as1212 = a * w12 + 2.0 * as12 * s12 - 2.0 * a * s12 * s12
    ads1212 = ac * w12 + 2.0 * np.conj(as21) * s12 - 2.0 * ac * s12 * s12
    as1221 = a * w21 + as12 * s21 + as21 * s12 - 2.0 * a * s12 * s21
    ads1221 = ac * w21 + np.conj(as21) * s21 + np.conj(as12) * s12 - 2.0 * ac * s12 * s21

    dy[0] = -(1j * omega + 0.5 * kappa) * a - 1j * lam * Bc * nsp * (s12 + s21) - 1j * E
    dy[1] = -(1j * Omega + 0.5 * gamma) * s12 \
        + 1j * lam * (2.0 * B * as22 + 2.0 * Bc * np.conj(as22) - B * a - Bc * ac)
    ds22 = -gamma * s22 - 2.0 * lam * ((B * as12).imag - (B * as21).imag)
    dy[2] = complex(ds22, 0.0)
    dy[3] = -(2j * omega + kappa) * a2 - 2j * lam * Bc * nsp * (as12 + as21) - 2j * E * a
    zdrive = complex(math.cos(omega_d * t), math.sin(omega_d * t)) * a
    dnph = -kappa * nph - 2.0 * lam * nsp * (B * (as12 + as21)).imag \
        - 2.0 * eta * zdrive.imag
    dy[4] = complex(dnph, 0.0)

    bracket6 = 2.0 * B * a2s22 - B * a2 + 2.0 * Bc * ns22 + 2.0 * Bc * s22 - Bc * nph - Bc
    dy[5] = -(1j * (omega + Omega) + 0.5 * (kappa + gamma)) * as12 \
        - 1j * E * s12 - 1j * lam * Bc * s22 \
        - 1j * lam * Bc * nm1 * (w12 + w21) + 1j * lam * bracket6
    dy[6] = -(1j * (omega - Omega) + 0.5 * (kappa + gamma)) * as21 \
        - 1j * E * s21 - 1j * lam * Bc * (1.0 - s22) \
        - 1j * lam * Bc * nm1 * (w21 + np.conj(w12)) - 1j * lam * bracket6
    bracket8 = B * a2s12 - B * a2s21 + Bc * ns12 + Bc * s12 - Bc * ns21 - Bc * s21
    dy[7] = -(1j * omega + 0.5 * kappa + gamma) * as22 \
        - 1j * lam * Bc * s12 - 1j * lam * Bc * nm1 * 2.0 * w1222.real \
        - 1j * E * s22 + 1j * lam * bracket8

    if nsp > 1.5:
        dy[8] = -(2j * Omega + gamma) * w12 \
            + 1j * lam * (4.0 * (B * as2212 + Bc * ads2212)
                          - 2.0 * (B * as12 + Bc * np.conj(as21)))
        dw21 = -gamma * w21 \
            + 4.0 * lam * (B * as2212 + Bc * ads2212).imag \
            - 2.0 * lam * (B * as12 + Bc * np.conj(as21)).imag
        dy[9] = complex(dw21, 0.0)
        dy[10] = -(1j * Omega + 1.5 * gamma) * w1222 \
            + 1j * lam * (2.0 * (B * as2222 + Bc * ads2222)
                          - 2.0 * (B * as22).real
                          + (B * as1212 + Bc * ads1212)
                          - (B * as1221 + Bc * ads1221))
        dw2222 = -2.0 * gamma * w2222 - 4.0 * lam * (B * as2212 + Bc * ads2212).imag
        dy[11] = complex(dw2222, 0.0)
    else:
        dy[8] = 0.0
        dy[9] = 0.0
        dy[10] = 0.0
        dy[11] = 0.0


@njit(cache=True)
def _rhs(kind, t, y, dy, work, nf, S, diag,
         t_fkind, t_ckind, t_c0, t_p1, t_smat,
         j_kind, j_rate, j_smat, j_ldl, params):
    if kind == KIND_KET:
        _apply_h_ket(t, y, work[:y.shape[0]], nf, S, diag,
                     t_fkind, t_ckind, t_c0, t_p1, t_smat)
        for i in range(y.shape[0]):
            dy[i] = -1j * work[i]
        return
    if kind == KIND_MEANFIELD1:
        _rhs_meanfield1(t, y, dy, params)
        return
    if kind == KIND_CUMULANT2:
        _rhs_cumulant2(t, y, dy, params)
        return
    d = nf * S
    rho = y[:d * d].reshape(d, d)
    m = work[:d * d].reshape(d, d)
    dyr = dy[:d * d].reshape(d, d)
    if kind == KIND_MASTER:
        _apply_h_rho(t, rho, m, nf, S, diag, t_fkind, t_ckind, t_c0, t_p1, t_smat)
        for i in range(d):
            for j in range(d):
                dyr[i, j] = -1j * (m[i, j] - np.conj(m[j, i]))
        _add_dissipators(rho, dyr, nf, S, j_kind, j_rate, j_smat, j_ldl)
        return
    # KIND_FRAME_MASTER
    omega = params[0].real
    lam_g = params[1].real     # g / sqrt(N)
    phase = params[2]          # e^{i theta}
    eta = params[3].real
    omega_d = params[4].real
    kappa = params[5].real
    beta = y[d * d]
    jx = t_smat[1]             # raw collective Jx, used for runtime terms
    # mean of Jx in the current state
    jx_mean = 0.0
    for n in range(nf):
        for s in range(S):
            for u in range(S):
                jx_mean += (rho[n * S + s, n * S + u] * jx[u, s]).real
    G = lam_g * np.conj(phase) * jx_mean
    Ed = eta * complex(math.cos(omega_d * t), -math.sin(omega_d * t))
    dbeta = -(1j * omega + 0.5 * kappa) * beta - 1j * Ed - 1j * G
    # static part: diagonal + coupling term (index 0 in the packed terms)
    _apply_h_rho(t, rho, m, nf, S, diag, t_fkind, t_ckind, t_c0, t_p1, t_smat)
    # spin drive 2 Re(phase * beta) * lam_g * (I x Jx)
    csd = 2.0 * (phase * beta).real * lam_g
    for n in range(nf):
        for s in range(S):
            row = n * S + s
            for u in range(S):
                w = csd * jx[s, u]
                if w != 0.0:
                    src = n * S + u
                    for j in range(d):
                        m[row, j] += w * rho[src, j]
    # field-linear counterterm -(G a† + G* a)
    Gc = np.conj(G)
    for n in range(nf):
        if n >= 1:
            w = -G * math.sqrt(float(n))
            for s in range(S):
                row = n * S + s
                src = (n - 1) * S + s
                for j in range(d):
                    m[row, j] += w * rho[src, j]
        if n + 1 < nf:
            w = -Gc * math.sqrt(n + 1.0)
            for s in range(S):
                row = n * S + s
                src = (n + 1) * S + s
                for j in range(d):
                    m[row, j] += w * rho[src, j]
    for i in range(d):
        for j in range(d):
            dyr[i, j] = -1j * (m[i, j] - np.conj(m[j, i]))
    _add_dissipators(rho, dyr, nf, S, j_kind, j_rate, j_smat, j_ldl)
    dy[d * d] = dbeta


@njit(cache=True)
def dp45_drive(kind, y0, t0, t_end, samples, rtol, atol, h_max, renorm,
               nf, S, diag, t_fkind, t_ckind, t_c0, t_p1, t_smat,
               j_kind, j_rate, j_smat, j_ldl, params, max_steps):
    """Adaptive DP45 propagation; returns (samples x state, accepted, rejected, status, t_last)."""
    n = y0.shape[0]
    y = y0.copy()
    out = np.empty((samples.shape[0], n), dtype=np.complex128)
    work = np.empty(n, dtype=np.complex128)
    k = np.empty((7, n), dtype=np.complex128)
    ytmp = np.empty(n, dtype=np.complex128)
    si = 0
    while si < samples.shape[0] and samples[si] <= t0 + 1e-15 * max(1.0, abs(t0)):
        for i in range(n):
            out[si, i] = y[i]
        si += 1
    if t_end <= t0:
        return out, 0, 0, STATUS_OK, t0

    span = t_end - t0
    _rhs(kind, t0, y, k[0], work, nf, S, diag, t_fkind, t_ckind, t_c0, t_p1,
         t_smat, j_kind, j_rate, j_smat, j_ldl, params)
    # initial step heuristic
    d0 = 0.0
    d1 = 0.0
    for i in range(n):
        sc = atol + rtol * abs(y[i])
        d0 += (abs(y[i]) / sc) ** 2
        d1 += (abs(k[0, i]) / sc) ** 2
    d0 = math.sqrt(d0 / n)
    d1 = math.sqrt(d1 / n)
    if d0 < 1e-10 or d1 < 1e-30:
        h = 1e-6 * span
    else:
        h = 0.01 * d0 / d1
    if h > h_max:
        h = h_max
    if h > span:
        h = span

    t = t0
    accepted = 0
    rejected = 0
    status = STATUS_OK

    while t < t_end:
        if accepted + rejected >= max_steps:
            status = STATUS_MAX_STEPS
            break
        if h < 1e-14 * max(1.0, abs(t)):
            # controller collapse, not an end-of-interval clamp
            status = STATUS_STEP_UNDERFLOW
            break
        if h > t_end - t:
            h = t_end - t
        for stage in range(1, 7):
            for i in range(n):
                acc = 0.0 + 0.0j
                for jj in range(stage):
                    aij = _A[stage, jj]
                    if aij != 0.0:
                        acc += aij * k[jj, i]
                ytmp[i] = y[i] + h * acc
            _rhs(kind, t + _C[stage] * h, ytmp, k[stage], work, nf, S, diag,
                 t_fkind, t_ckind, t_c0, t_p1, t_smat,
                 j_kind, j_rate, j_smat, j_ldl, params)
        # 5th order solution into ytmp, error norm accumulated on the fly
        errsum = 0.0
        for i in range(n):
            accy = 0.0 + 0.0j
            acce = 0.0 + 0.0j
            for jj in range(7):
                accy += _B[jj] * k[jj, i]
                acce += _E[jj] * k[jj, i]
            y1 = y[i] + h * accy
            err = h * acce
            a0 = abs(y[i])
            a1 = abs(y1)
            sc = atol + rtol * (a0 if a0 > a1 else a1)
            errsum += (abs(err) / sc) ** 2
            ytmp[i] = y1
        errn = math.sqrt(errsum / n)
        if math.isnan(errn):
            # state diverged; NaN would defeat the step controller
            status = STATUS_STEP_UNDERFLOW
            break
        if errn <= 1.0:
            t_new = t + h
            if t_end - t_new < 1e-14 * max(1.0, abs(t_end)):
                t_new = t_end
            scale = 1.0
            if renorm:
                nrm = 0.0
                for i in range(n):
                    nrm += abs(ytmp[i]) ** 2
                scale = 1.0 / math.sqrt(nrm)
            while si < samples.shape[0] and samples[si] <= t_new + 1e-15 * max(1.0, abs(t_new)):
                theta = (samples[si] - t) / h
                if theta >= 1.0 - 1e-12:
                    for i in range(n):
                        out[si, i] = ytmp[i] * scale
                else:
                    th2 = theta * theta
                    for i in range(n):
                        acc = 0.0 + 0.0j
                        for jj in range(7):
                            bj = _P[jj, 0] * theta + _P[jj, 1] * th2 \
                                + _P[jj, 2] * th2 * theta + _P[jj, 3] * th2 * th2
                            acc += bj * k[jj, i]
                        out[si, i] = y[i] + h * acc
                si += 1
            for i in range(n):
                y[i] = ytmp[i] * scale
                k[0, i] = k[6, i] * scale
            t = t_new
            accepted += 1
            if errn == 0.0:
                factor = 10.0
            else:
                factor = 0.9 * errn ** -0.2
                if factor > 10.0:
                    factor = 10.0
                if factor < 0.2:
                    factor = 0.2
            h = h * factor
            if h > h_max:
                h = h_max
        else:
            rejected += 1
            factor = 0.9 * errn ** -0.2
            if factor < 0.2:
                factor = 0.2
            h = h * factor

    if status == STATUS_OK:
        while si < samples.shape[0]:
            for i in range(n):
                out[si, i] = y[i]
            si += 1
    return out, accepted, rejected, status, t
