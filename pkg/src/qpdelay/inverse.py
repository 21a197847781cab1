"""Construction and certification of local inverses of T^sigma.

Three construction routes, always certified against the block they invert:

* Neumann series around the diagonal, for blocks whose diagonal modulus
  stays above a floor;
* Schur complement through the scalar h for a block containing the single
  singular site;
* resolvent-identity pasting, gluing certified patch inverses over a
  covering of the box into a global inverse.

Dense LU inversion is the oracle for all of them and also the production
path for blocks below a configured size cap.  Every certified inverse
records its norm bound, its achieved decay profile, and the residual of
M @ T - I.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (BoundBlown, ClusterTooWide, CoveringGap, DimensionMismatch,
                     NoConvergence, NormBoundExceeded, NotDiagonallyDominant,
                     SchurPivotTiny)
from .lattice import KBox, lattice_sites
from .smalldivisor import (build_clusters, default_schedule, find_singular_sites,
                           rho_scale)


@dataclass
class DecayCertificate:
    ok: bool
    rho: float
    c: float
    threshold: float
    worst_pair: tuple = None
    worst_excess: float = 0.0    # log(|entry|) - log(bound) at the worst pair

    def __bool__(self):
        return self.ok


@dataclass
class LocalInverse:
    """Certified dense inverse of T^sigma restricted to a site list."""

    sites: list
    matrix: np.ndarray
    norm_bound: float
    decay_profile: tuple        # (rho, c, threshold) fitted on the entries
    residual: float             # ||M T - I||_inf over the box
    cond: float
    sigma: float = 0.0
    method: str = "dense"
    t_dense: np.ndarray = field(repr=False, default=None)

    def opnorm(self):
        return float(np.linalg.norm(self.matrix, 2))

    def decay_profile_at(self, c, threshold=0.0):
        """Fit the decay profile at another exponent (e.g. c/2 for the
        refined half-exponent estimates); the stored profile uses the
        configured c."""
        return fit_decay_profile(self.matrix, self.sites, c, threshold)

    def kbox_hull(self):
        d = len(self.sites[0].k)
        lo = tuple(min(m.k[i] for m in self.sites) for i in range(d))
        hi = tuple(max(m.k[i] for m in self.sites) for i in range(d))
        return KBox(lo, hi)



def _cond1(T, M=None):
    """1-norm condition estimate ||T||_1 * ||T^-1||_1 (cheap, real)."""
    n1 = float(np.abs(T).sum(axis=0).max())
    if M is None:
        M = np.linalg.inv(T)
    return n1 * float(np.abs(M).sum(axis=0).max())

def _pair_separations(sites):
    """Matrix of sup-metric separations |k - k'| over a site list."""
    K = np.array([m.k for m in sites], dtype=int)
    if K.ndim == 1:
        K = K[:, None]
    return np.max(np.abs(K[:, None, :] - K[None, :, :]), axis=-1)


def fit_decay_profile(matrix, sites, c, threshold=0.0):
    """Largest rho with |M(m, m')| <= exp(-rho |k-k'|^c) past the threshold."""
    R = _pair_separations(sites)
    V = np.abs(matrix)
    mask = (R > max(threshold, 0)) & (V > 0.0)
    if not mask.any():
        return (np.inf, float(c), float(threshold))
    rho = float(np.min(-np.log(V[mask]) / R[mask].astype(float) ** c))
    return (rho, float(c), float(threshold))


def certify_decay(local, rho, c, threshold):
    """Entrywise check |M(m, m')| <= exp(-rho |k-k'|^c) for |k-k'| > threshold."""
    R = _pair_separations(local.sites)
    V = np.abs(local.matrix)
    mask = R > threshold
    if not mask.any():
        return DecayCertificate(ok=True, rho=float(rho), c=float(c),
                                threshold=float(threshold))
    with np.errstate(divide="ignore"):
        excess = np.where(V > 0, np.log(np.where(V > 0, V, 1.0)), -np.inf) \
            + rho * R.astype(float) ** c
    excess = np.where(mask, excess, -np.inf)
    i, ip = np.unravel_index(np.argmax(excess), excess.shape)
    worst = float(excess[i, ip])
    pair = (local.sites[i], local.sites[ip], float(V[i, ip]))
    return DecayCertificate(ok=bool(worst <= 0.0), rho=float(rho), c=float(c),
                            threshold=float(threshold), worst_pair=pair,
                            worst_excess=worst)


def _opnorm_est(M, exact_below=192):
    """Spectral norm, exact for small blocks, sqrt(|.|_1 |.|_inf) above."""
    if M.shape[0] <= exact_below:
        return float(np.linalg.norm(M, 2))
    n1 = float(np.abs(M).sum(axis=0).max())
    ninf = float(np.abs(M).sum(axis=1).max())
    return float(np.sqrt(n1 * ninf))


def _certified(sites, M, T, sigma, method, c=0.5, norm_bound=None):
    res = float(np.max(np.abs(M @ T - np.eye(len(sites)))))
    cond = _cond1(T, M)
    opn = _opnorm_est(M)
    return LocalInverse(sites=sites, matrix=M,
                        norm_bound=float(norm_bound) if norm_bound else opn * (1 + 1e-9),
                        decay_profile=fit_decay_profile(M, sites, c),
                        residual=res, cond=cond, sigma=float(sigma),
                        method=method, t_dense=T)


def dense_inverse(op, sites, sigma=0.0, c=0.5, check_range=True):
    """LU-based oracle/production inverse over an explicit site list."""
    T = op.dense(sites, sigma, check_range=check_range)
    M = np.linalg.inv(T)
    return _certified(sites, M, T, sigma, "dense", c=c)


def local_inverse_at_center(op, k0, halfwidth, sigma=0.0, clip=None, c=0.5):
    """Local inverse at center k0 computed through the translation reduction:
    the box is recentered at the origin and sigma shifted by <k0, omega>,
    which gives the same matrix entrywise as direct restriction."""
    k0 = tuple(int(x) for x in k0)
    box = KBox.around(k0, halfwidth, clip=clip)
    cbox = box.shift(tuple(-x for x in k0))
    csites = lattice_sites(op.n, cbox)
    shift = float(np.dot(k0, op.omega))
    T = op.dense(csites, sigma + shift, check_range=False)
    M = np.linalg.inv(T)
    gsites = [type(m)(m.mu, m.j, tuple(a + b for a, b in zip(m.k, k0)))
              for m in csites]
    return _certified(gsites, M, T, sigma, "dense-shifted", c=c)


def neumann_inverse(T_block, diag_floor, sites=None, sigma=0.0, c=0.5,
                    tail_tol=1e-14, max_terms=400):
    """Inverse by the Neumann series around the diagonal of the block.

    Requires min |diag| >= diag_floor and off-diagonal smallness
    ||offdiag|| / diag_floor < 1/4 (the numerical form of the contraction
    contract); the returned norm bound is 2/diag_floor.
    """
    T = np.asarray(T_block, dtype=complex)
    s = T.shape[0]
    if T.shape != (s, s):
        raise DimensionMismatch("block must be square")
    dvals = np.diag(T)
    floor = float(np.min(np.abs(dvals)))
    if diag_floor <= 0 or floor < diag_floor:
        raise NotDiagonallyDominant(
            f"min diagonal modulus {floor:.3e} below floor {diag_floor:.3e}")
    E = T - np.diag(dvals)
    q = float(np.linalg.norm(E, np.inf)) / diag_floor
    if q >= 0.25:
        raise NotDiagonallyDominant(
            f"contraction factor {q:.3f} >= 1/4; series not certified")
    Dinv = 1.0 / dvals
    M = np.diag(Dinv)
    term = M.copy()
    for _ in range(max_terms):
        term = -(Dinv[:, None] * (E @ term))
        M += term
        tail = float(np.linalg.norm(term, np.inf))
        if tail < tail_tol:
            break
    else:
        raise NoConvergence(f"Neumann tail stagnated at {tail:.3e}")
    if sites is None:
        li = LocalInverse(sites=None, matrix=M, norm_bound=2.0 / diag_floor,
                          decay_profile=(np.inf, c, 0.0),
                          residual=float(np.max(np.abs(M @ T - np.eye(s)))),
                          cond=_cond1(T, M), sigma=float(sigma),
                          method="neumann", t_dense=T)
        return li
    out = _certified(sites, M, T, sigma, "neumann", c=c, norm_bound=2.0 / diag_floor)
    return out


@dataclass
class SchurData:
    """Scalar pivot h = T(m*, m*) - eps^2 Q (T_{Omega1})^{-1} P and the
    recentered variable sigma1 = sigma + <k*, omega> + mu* lambda_{j*}."""

    h_value: complex
    sigma1: float
    m_star: object
    P: np.ndarray
    Q: np.ndarray
    correction: complex      # eps^2 Q (T_{Omega1})^{-1} P

    def recompute_correction(self, omega1_matrix, epsilon):
        return complex(epsilon ** 2 * (self.Q @ omega1_matrix @ self.P))


def schur_inverse(T_full, star_idx, omega1_inverse, epsilon, threshold,
                  sites=None, sigma=0.0, sigma1=0.0, c=0.5, phi=None):
    """Block inverse of [[T11, eps P], [eps Q, t22]] through the scalar h.

    T_full is dense over Omega1 + Omega2 with the singleton at star_idx;
    omega1_inverse must be certified over the complementary rows/columns.
    Raises SchurPivotTiny when |h| falls below the excision threshold.
    """
    T = np.asarray(T_full, dtype=complex)
    s = T.shape[0]
    rest = [i for i in range(s) if i != star_idx]
    M1 = omega1_inverse.matrix
    if M1.shape != (s - 1, s - 1):
        raise DimensionMismatch("omega1 inverse has wrong size")
    P = T[rest, star_idx] / epsilon if epsilon else T[rest, star_idx]
    Q = T[star_idx, rest] / epsilon if epsilon else T[star_idx, rest]
    correction = complex(epsilon ** 2 * (Q @ M1 @ P))
    h = complex(T[star_idx, star_idx] - correction)
    m_star = sites[star_idx] if sites is not None else None
    data = SchurData(h_value=h, sigma1=float(sigma1), m_star=m_star,
                     P=P, Q=Q, correction=correction)
    if abs(h) < threshold:
        raise SchurPivotTiny(
            f"|h| = {abs(h):.3e} below excision threshold {threshold:.3e}",
            witness={"h": h, "m_star": m_star, "sigma1": sigma1})
    M = np.zeros((s, s), dtype=complex)
    M1PQ = M1 @ P
    QM1 = Q @ M1
    M[np.ix_(rest, rest)] = M1 + np.outer(M1PQ, QM1) * (epsilon ** 2 / h)
    M[rest, star_idx] = -epsilon * M1PQ / h
    M[star_idx, rest] = -epsilon * QM1 / h
    M[star_idx, star_idx] = 1.0 / h
    if sites is None:
        li = LocalInverse(sites=None, matrix=M,
                          norm_bound=float(np.linalg.norm(M, 2)) * (1 + 1e-9),
                          decay_profile=(np.inf, c, 0.0),
                          residual=float(np.max(np.abs(M @ T - np.eye(s)))),
                          cond=_cond1(T, M), sigma=float(sigma),
                          method="schur", t_dense=T)
    else:
        li = _certified(sites, M, T, sigma, "schur", c=c)
    return li, data


def resolvent_residual(T, inv_parts, inv_full, idx1, idx2):
    """Norm of the resolvent-identity defect for a disjoint split.

    For any matrix T over Lambda = Lambda1 + Lambda2,
    T^-1 = (T1^-1 + T2^-1) - (T1^-1 + T2^-1)(T - T1 - T2) T^-1
    holds exactly; the returned norm is the numerical defect.
    """
    T = np.asarray(T, dtype=complex)
    s = T.shape[0]
    idx1, idx2 = list(idx1), list(idx2)
    if sorted(idx1 + idx2) != list(range(s)):
        raise DimensionMismatch("index split must partition the box")
    M1, M2 = inv_parts
    if M1.shape != (len(idx1), len(idx1)) or M2.shape != (len(idx2), len(idx2)):
        raise DimensionMismatch("part inverses must match the split sizes")
    B = np.zeros((s, s), dtype=complex)
    B[np.ix_(idx1, idx1)] = M1
    B[np.ix_(idx2, idx2)] = M2
    E = T.copy()
    E[np.ix_(idx1, idx1)] = 0.0
    E[np.ix_(idx2, idx2)] = 0.0
    defect = inv_full - B + B @ E @ inv_full
    return float(np.linalg.norm(defect, 2))


# ----------------------------------------------------------------------
# Pasting local inverses with the pointwise resolvent identity


def paste_inverse(local_inverses, op, K, B, sigma=0.0, c=0.5, Cprime=None,
                  global_sites=None, max_sweeps=200, tol=1e-13,
                  residual_cap=1e-6):
    """Global inverse over the box from certified patch inverses.

    Every k must have its K-ball (intersected with the box) inside some
    patch; each row takes the patch with the deepest containment and the
    pointwise resolvent identity is iterated to a fixed point, then the
    norm and decay conclusions are certified a posteriori.  Non-convergence
    or a blown bound is an excision trigger, not a crash.
    """
    if global_sites is None:
        global_sites = lattice_sites(op.n, KBox.centered(op.N, op.d))
    s = len(global_sites)
    site_pos = {m: i for i, m in enumerate(global_sites)}
    patches = []
    for li in local_inverses:
        idx = [site_pos[m] for m in li.sites if m in site_pos]
        if len(idx) != len(li.sites):
            raise DimensionMismatch("patch has sites outside the global box")
        patches.append(idx)
    entry_bound = max(float(np.max(np.abs(li.matrix))) for li in local_inverses)
    if entry_bound > B:
        raise BoundBlown(
            f"patch entry bound {entry_bound:.3e} exceeds B={B:.3e}")
    hulls = [li.kbox_hull() for li in local_inverses]
    if Cprime is None:
        Cprime = max(h.diam() for h in hulls) / max(K, 1) + 1.0
    elif any(h.diam() >= Cprime * K for h in hulls):
        raise BoundBlown("patch diameter exceeds C'K")

    gbox = KBox(tuple(min(m.k[i] for m in global_sites) for i in range(op.d)),
                tuple(max(m.k[i] for m in global_sites) for i in range(op.d)))
    assign = {}
    for i, m in enumerate(global_sites):
        ball = KBox.around(m.k, K, clip=gbox)
        best, best_margin = None, -1
        for a, h in enumerate(hulls):
            if h.contains_box(ball):
                margin = min(min(b - l for b, l in zip(ball.lo, h.lo)),
                             min(l - b for b, l in zip(ball.hi, h.hi)))
                if margin > best_margin:
                    best, best_margin = a, margin
        if best is None:
            raise CoveringGap(f"no patch contains the K-ball of k={m.k}")
        assign[i] = best

    T = op.dense(global_sites, sigma, check_range=False)
    rows_of = {a: [] for a in range(len(patches))}
    for i, a in assign.items():
        rows_of[a].append(i)
    # precompute per-patch pieces
    plan = []
    for a, rows in rows_of.items():
        if not rows:
            continue
        pidx = patches[a]
        local_row = {g: r for r, g in enumerate(pidx)}
        rsel = [local_row[i] for i in rows]
        out = [i for i in range(s) if i not in set(pidx)]
        Minv = local_inverses[a].matrix
        E = np.zeros((len(rows), s), dtype=complex)
        E[:, pidx] = Minv[rsel, :]
        coupling = Minv[rsel, :] @ T[np.ix_(pidx, out)] if out else None
        plan.append((rows, E, out, coupling))

    M = np.zeros((s, s), dtype=complex)
    converged = False
    for _ in range(max_sweeps):
        delta = 0.0
        for rows, E, out, coupling in plan:
            new_rows = E.copy()
            if out:
                new_rows -= coupling @ M[out, :]
            delta = max(delta, float(np.max(np.abs(new_rows - M[rows, :]))))
            M[rows, :] = new_rows
        if delta < tol:
            converged = True
            break
        if not np.isfinite(delta) or delta > 1e12 * max(B, 1.0):
            break
    if not converged:
        raise BoundBlown(
            f"pasting fixed point did not converge (last sweep delta {delta:.3e})")

    res = float(np.max(np.abs(M @ T - np.eye(s))))
    if res > residual_cap:
        raise BoundBlown(f"pasted inverse residual {res:.3e} above cap {residual_cap:.3e}")
    if float(np.max(np.abs(M))) > 2 * B:
        raise BoundBlown("pasted inverse exceeds the 2B entry bound")
    decay_radius = (100.0 * Cprime * K) ** (1.0 / (1.0 - c))
    cert = certify_decay(
        LocalInverse(sites=global_sites, matrix=M, norm_bound=2 * B,
                     decay_profile=(0, c, 0), residual=res, cond=0.0),
        rho=2.0 / 3.0, c=c, threshold=decay_radius)
    if not cert.ok:
        raise BoundBlown(
            f"pasted inverse violates the decay conclusion beyond {decay_radius:.1f}")
    return _certified(global_sites, M, T, sigma, "pasted", c=c)


# ----------------------------------------------------------------------
# Production driver


@dataclass
class InversionParams:
    """Certification thresholds and geometry for one inversion."""

    epsilon1: float
    C1: float = 8.0
    c: float = 0.5
    C2: float = 8.0
    C3: float = 2.0
    C5: float = 3.0
    N0: int = 4
    dense_cap: int = 4096
    schedule: list = None
    sepa_decay_threshold: float = None   # None -> formula value (often vacuous)
    method: str = "auto"                 # auto | dense | multiscale

    def phi(self, N):
        """Inverse-norm growth function Phi(N) = N^C1."""
        return float(max(N, 1)) ** self.C1

    def phi_threshold(self, N):
        """Schur-pivot excision threshold Phi(N)^(-1/2)."""
        return self.phi(N) ** -0.5


def sepa_property(local, Nprime, params):
    """Norm+decay property a local inverse must satisfy at scale Nprime."""
    if local.opnorm() > params.phi(Nprime):
        return False
    rho = rho_scale(Nprime, params.N0, params.C3)
    thr = params.sepa_decay_threshold
    if thr is None:
        thr = (np.log(Nprime) / rho) ** params.C2
    cert = certify_decay(local, rho / 10.0, params.c, thr)
    return bool(cert.ok)


def sepa_fail_predicate(op, sigma, params, clip_box):
    """Predicate for the cluster scan: does the local inverse at k0 fail?"""

    def fails(k0, scale):
        try:
            li = local_inverse_at_center(op, k0, scale, sigma=sigma,
                                         clip=clip_box, c=params.c)
        except np.linalg.LinAlgError:
            return True
        return not sepa_property(li, scale, params)

    return fails


def _sigma1_of(op, m_star, sigma):
    return float(sigma + np.dot(m_star.k, op.omega) + m_star.mu * op.lambdas[m_star.j - 1])


def _tile_regular_patches(box, K):
    """Overlapping regular patches: centers spaced 2K, halfwidth 2K, so each
    k has a full K-ball inside the patch of its nearest center."""
    axes = []
    for lo, hi in zip(box.lo, box.hi):
        pts = list(range(lo, hi + 1, 2 * K))
        if pts[-1] != hi:
            pts.append(hi)
        axes.append(pts)
    import itertools as _it
    return [KBox.around(c, 2 * K, clip=box) for c in _it.product(*axes)]


def invert_box(op, sigma, N, params):
    """Certified inverse of T^sigma on [-N, N]^d, with excision triggers.

    Below the dense cap (and with method='auto') a dense LU inverse is the
    production path; the multi-scale assembly (clusters -> Neumann/Schur
    patches -> pasting) runs above the cap or when forced.  Either way the
    result is checked against the norm growth function, the Schur pivot of
    a singular singleton is checked against its excision threshold, and two
    coexisting singular sites reject the frequency outright.
    Returns (LocalInverse, info dict).
    """
    box = KBox.centered(N, op.d)
    sites = lattice_sites(op.n, box)
    info = {"N": N, "sigma": float(sigma), "m_star": None, "h": None,
            "schur": None, "clusters": None, "patches": 0, "method": None}

    sing = find_singular_sites(op, params.epsilon1, box, sigma)
    if len(sing) > 1:
        raise ClusterTooWide(f"{len(sing)} singular sites in the box",
                             witness={"sites": sing[:4]})
    use_dense = (params.method == "dense" or
                 (params.method == "auto" and len(sites) <= params.dense_cap))

    if use_dense:
        try:
            li = dense_inverse(op, sites, sigma, c=params.c)
        except np.linalg.LinAlgError as exc:
            raise NormBoundExceeded(f"block numerically singular: {exc}",
                                    witness={"sigma": sigma}) from exc
        info["method"] = "dense"
        if sing:
            m_star = sing[0]
            star = sites.index(m_star)
            h = 1.0 / complex(li.matrix[star, star])
            sigma1 = _sigma1_of(op, m_star, sigma)
            info.update(m_star=m_star, h=h,
                        schur=SchurData(h_value=h, sigma1=sigma1, m_star=m_star,
                                        P=None, Q=None,
                                        correction=complex(
                                            li.t_dense[star, star] - h)))
            thr = params.phi_threshold(N)
            if abs(h) < thr:
                raise SchurPivotTiny(
                    f"|h| = {abs(h):.3e} below threshold {thr:.3e}",
                    witness={"h": h, "m_star": m_star, "sigma1": sigma1})
    else:
        li, extra = _invert_multiscale(op, sigma, N, box, sites, sing, params)
        info.update(extra)

    norm = li.norm_bound
    info["norm"] = norm
    info["phi_bound"] = params.phi(N)
    info["residual"] = li.residual
    if norm > params.phi(N):
        raise NormBoundExceeded(
            f"inverse norm {norm:.3e} exceeds Phi({N}) = {params.phi(N):.3e}",
            witness={"norm": norm})
    return li, info


def _invert_multiscale(op, sigma, N, box, sites, sing, params):
    schedule = params.schedule or default_schedule(params.N0, params.C3, N)
    predicate = sepa_fail_predicate(op, sigma, params, box)
    clusters = build_clusters(op, schedule, predicate, params.epsilon1,
                              N=N, sigma=sigma, C3=params.C3)
    K = max(params.N0, int(np.ceil(N ** (1.0 / params.C5))))
    patch_boxes = _tile_regular_patches(box, K)
    cluster_box = None
    if clusters.lambdas_nested:
        cluster_box = clusters.lambdas_nested[-1].enlarge(2 * K, clip=box)
        patch_boxes.append(cluster_box)

    locals_ = []
    methods = []
    for pb in patch_boxes:
        psites = lattice_sites(op.n, pb)
        is_cluster = cluster_box is not None and pb == cluster_box
        m_star = clusters.omega2 if is_cluster else None
        if m_star is not None and pb.contains(m_star.k):
            T = op.dense(psites, sigma, check_range=False)
            star = psites.index(m_star)
            rest = [i for i in range(len(psites)) if i != star]
            T1 = T[np.ix_(rest, rest)]
            try:
                inv1 = neumann_inverse(T1, params.epsilon1, sigma=sigma, c=params.c)
            except (NotDiagonallyDominant, NoConvergence):
                M1 = np.linalg.inv(T1)
                inv1 = LocalInverse(sites=None, matrix=M1,
                                    norm_bound=float(np.linalg.norm(M1, 2)) * (1 + 1e-9),
                                    decay_profile=(np.inf, params.c, 0.0),
                                    residual=float(np.max(np.abs(M1 @ T1 - np.eye(len(rest))))),
                                    cond=_cond1(T1, M1), sigma=sigma,
                                    method="dense", t_dense=T1)
            li, schur = schur_inverse(T, star, inv1, op.epsilon,
                                      params.phi_threshold(N), sites=psites,
                                      sigma=sigma,
                                      sigma1=_sigma1_of(op, m_star, sigma),
                                      c=params.c)
            methods.append("schur")
        else:
            T = op.dense(psites, sigma, check_range=False)
            floor = float(np.min(np.abs(np.diag(T))))
            try:
                li = neumann_inverse(T, max(floor, 1e-300), sites=psites,
                                     sigma=sigma, c=params.c)
                methods.append("neumann")
            except (NotDiagonallyDominant, NoConvergence):
                li = dense_inverse(op, psites, sigma, c=params.c,
                                   check_range=False)
                methods.append("dense")
            if is_cluster:
                schur = None
        locals_.append(li)

    B = 2.0 * max(float(np.max(np.abs(li.matrix))) for li in locals_)
    glob = paste_inverse(locals_, op, K, B, sigma=sigma, c=params.c,
                         global_sites=sites)
    m_star = clusters.omega2
    h = None
    schur_data = None
    if m_star is not None:
        star = sites.index(m_star)
        h = 1.0 / complex(glob.matrix[star, star])
        sigma1 = _sigma1_of(op, m_star, sigma)
        schur_data = SchurData(h_value=h, sigma1=sigma1, m_star=m_star,
                               P=None, Q=None,
                               correction=complex(glob.t_dense[star, star] - h))
        thr = params.phi_threshold(N)
        if abs(h) < thr:
            raise SchurPivotTiny(
                f"|h| = {abs(h):.3e} below threshold {thr:.3e}",
                witness={"h": h, "m_star": m_star, "sigma1": sigma1})
    # the block-inverse norm control: ||T_N^-1|| <= Phi(Nr^3) + Phi(Nr^6)/|h|
    norm_ctrl = None
    if h is not None and clusters.scales:
        nr = clusters.scales[-1]
        norm_ctrl = bool(glob.norm_bound
                         <= params.phi(nr ** 3) + params.phi(nr ** 6) / abs(h))
    return glob, {"method": "multiscale", "clusters": clusters,
                  "norm_control_2_ok": norm_ctrl,
                  "patches": len(locals_), "patch_methods": methods,
                  "m_star": m_star, "h": h, "schur": schur_data,
                  "K": K, "B": B}
