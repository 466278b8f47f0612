"""Detailed-balance verification for the cell maps.

For the scalar map with independent inputs

    X ~ GIG(-lam, alpha c1, c2),   Y ~ GIG(-lam, beta c2, c1)

the image (U, V) = f_dk(X, Y) is again an independent pair with the same
laws under c1 <-> c2; the conjugated variant uses A ~ GIG(-lam, alpha c1,
c2), B ~ GIG(lam, c1, beta c2) and psi.  The matrix variant replaces GIG
by MGIG with rate matrices (alpha a, b) and (beta b, a).  Verification is
two-pronged:

* deterministic -- the log-density transport identity
  log f_X + log f_Y = log f_U + log f_V pointwise (a consequence of the
  unit |Jacobian|), exact up to round-off for the scalar laws and up to
  the Monte-Carlo error of the MGIG normalizers for the matrix ones;

* statistical -- Kolmogorov-Smirnov tests of the mapped marginals against
  the claimed laws plus a permutation-calibrated distance-correlation
  test of independence between the mapped coordinates.

`machinery_check` exercises the joint-transform identities that pin these
laws down uniquely: the product identity x_{-s} y_s = u_{-s} v_s of the
four tilted-moment transforms, and the closed Bessel form of y_s and v_s
(checked as ratios, where the undetermined proportionality constants
cancel).
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from . import dist, matrix
from .errors import DomainError
from .maps import MapParams, f_dk, psi
from .rng import rng_stream
from .specfun import bessel_k_log

__all__ = [
    "BalanceSpec",
    "BalanceReport",
    "KsStat",
    "IndependenceStat",
    "MatrixNormalizers",
    "MachineryResult",
    "input_laws",
    "output_laws",
    "transport_residual",
    "transport_grid_max",
    "matrix_normalizers",
    "distance_correlation_test",
    "monte_carlo_balance",
    "machinery_check",
    "independence_calibration",
]


@dataclass(frozen=True)
class BalanceSpec:
    """Map parameters plus the (lam, c1, c2) of the claimed stationary laws.

    variant: "fdk" (plain scalar map), "psi" (conjugated scalar map) or
    "matrix" (SPD map; `a` and `b` hold the rate matrices and c1/c2 are
    unused).
    """

    map: MapParams
    lam: float
    c1: float = 1.0
    c2: float = 1.0
    variant: str = "fdk"
    a: np.ndarray | None = None
    b: np.ndarray | None = None

    def __post_init__(self):
        if self.variant not in ("fdk", "psi", "matrix"):
            raise DomainError(f"unknown variant {self.variant!r}")
        if self.variant == "matrix":
            if self.a is None or self.b is None:
                raise DomainError("matrix variant needs rate matrices a and b")
            object.__setattr__(self, "a", matrix.check_spd(self.a, "a"))
            object.__setattr__(self, "b", matrix.check_spd(self.b, "b"))
            if not (self.map.alpha > 0.0 and self.map.beta > 0.0):
                raise DomainError("matrix variant requires alpha, beta > 0")
        else:
            if not (self.c1 > 0.0 and self.c2 > 0.0):
                raise DomainError("c1, c2 must be > 0")

    @property
    def r(self) -> int:
        return 1 if self.variant != "matrix" else self.a.shape[0]


def input_laws(spec: BalanceSpec):
    """(law of the first input, law of the second input)."""
    al, be = spec.map.alpha, spec.map.beta
    if spec.variant == "fdk":
        return (dist.make_law(-spec.lam, al * spec.c1, spec.c2),
                dist.make_law(-spec.lam, be * spec.c2, spec.c1))
    if spec.variant == "psi":
        return (dist.make_law(-spec.lam, al * spec.c1, spec.c2),
                dist.make_law(spec.lam, spec.c1, be * spec.c2))
    return (matrix.MgigParams(spec.lam, al * spec.a, spec.b),
            matrix.MgigParams(spec.lam, be * spec.b, spec.a))


def output_laws(spec: BalanceSpec):
    """Claimed laws of the mapped pair: the input laws under the structural
    swap c1 <-> c2 (a <-> b for the matrix variant)."""
    if spec.variant == "matrix":
        swapped = replace(spec, a=spec.b, b=spec.a)
    else:
        swapped = replace(spec, c1=spec.c2, c2=spec.c1)
    return input_laws(swapped)


# ---------------------------------------------------------------------------
# deterministic transport identity
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MatrixNormalizers:
    """Log normalizers of the four MGIG laws with their MC standard errors."""

    log_x: float
    log_y: float
    log_u: float
    log_v: float
    se: float  # combined standard error of log_x + log_y - log_u - log_v


def matrix_normalizers(spec: BalanceSpec, seed: int = 0,
                       n: int = 200_000) -> MatrixNormalizers:
    """Estimate the four normalizers of a matrix BalanceSpec.

    At r = 1 the values are exact Bessel forms and se = 0.
    """
    law_x, law_y = input_laws(spec)
    law_u, law_v = output_laws(spec)
    vals, ses = [], []
    for i, law in enumerate((law_x, law_y, law_u, law_v)):
        ln, se = matrix.mgig_log_norm(law, seed=seed + i, n=n)
        vals.append(ln)
        ses.append(se)
    return MatrixNormalizers(*vals, se=float(np.sqrt(np.sum(np.square(ses)))))


def transport_residual(spec: BalanceSpec, point,
                       normalizers: MatrixNormalizers | None = None) -> float:
    """|log f_X(x) + log f_Y(y) - log f_U(u) - log f_V(v)| at one point.

    All densities are fully normalized.  The psi variant is evaluated
    through its conjugation (x, y) = (a, 1/b), under which its laws map
    exactly onto the fdk laws and the residual is identical.  For the
    matrix variant the result carries the MC error of the normalizers
    (supply `normalizers` to control it); gate with 3x their `se`.
    """
    if spec.variant == "psi":
        a, b = point
        return transport_residual(replace(spec, variant="fdk"), (a, 1.0 / b))
    law_x, law_y = input_laws(spec)
    law_u, law_v = output_laws(spec)
    if spec.variant == "fdk":
        x, y = point
        u, v = f_dk(spec.map, (x, y))
        return abs(dist.log_pdf(law_x, x) + dist.log_pdf(law_y, y)
                   - dist.log_pdf(law_u, u) - dist.log_pdf(law_v, v))
    x, y = point
    u, v = matrix.f_dk_matrix(spec.map, (x, y))
    norm = normalizers if normalizers is not None else matrix_normalizers(spec)
    unnorm = (matrix.mgig_log_pdf_unnorm(law_x, x)
              + matrix.mgig_log_pdf_unnorm(law_y, y)
              - matrix.mgig_log_pdf_unnorm(law_u, u)
              - matrix.mgig_log_pdf_unnorm(law_v, v))
    return abs(unnorm - norm.log_x - norm.log_y + norm.log_u + norm.log_v)


def transport_grid_max(spec: BalanceSpec, grid_n: int = 20,
                       lo: float = 0.05, hi: float = 20.0,
                       normalizers: MatrixNormalizers | None = None,
                       seed: int = 0) -> float:
    """Max transport residual over a grid (scalar: log grid on [lo, hi]^2;
    matrix: seeded random SPD pairs)."""
    if spec.variant in ("fdk", "psi"):
        pts = np.geomspace(lo, hi, grid_n)
        law_x, law_y = input_laws(replace(spec, variant="fdk"))
        law_u, law_v = output_laws(replace(spec, variant="fdk"))
        xg, yg = np.meshgrid(pts, pts)
        u, v = f_dk(spec.map, (xg, yg))
        res = (dist.log_pdf(law_x, xg) + dist.log_pdf(law_y, yg)
               - dist.log_pdf(law_u, u) - dist.log_pdf(law_v, v))
        return float(np.max(np.abs(res)))
    rng = rng_stream(seed, 51_000)
    norm = normalizers if normalizers is not None else matrix_normalizers(spec, seed)
    worst = 0.0
    for _ in range(grid_n):
        x = matrix.random_spd(spec.r, rng)
        y = matrix.random_spd(spec.r, rng)
        worst = max(worst, transport_residual(spec, (x, y), normalizers=norm))
    return worst


# ---------------------------------------------------------------------------
# distance-correlation independence test
# ---------------------------------------------------------------------------

def _dist_matrix(z: np.ndarray) -> np.ndarray:
    # z: (m, d) sample; returns the double-centered distance matrix
    diff = z[:, None, :] - z[None, :, :]
    d = np.sqrt(np.sum(diff * diff, axis=-1))
    return d - d.mean(axis=0, keepdims=True) - d.mean(axis=1, keepdims=True) + d.mean()


def distance_correlation_test(u: np.ndarray, v: np.ndarray,
                              n_perm: int = 499,
                              rng: np.random.Generator | None = None):
    """Distance correlation of two samples with a permutation p-value.

    Returns (dcor, p).  The double-centered distance matrices are computed
    once; each permutation only re-indexes the second one, so the test
    costs O(n_perm * m^2) after an O(m^2 d) setup.  The p-value
    (1 + #{perm >= observed}) / (n_perm + 1) is exact under independence.
    """
    if rng is None:
        rng = rng_stream(0, 60_000)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    m = u.shape[0]
    if v.shape[0] != m:
        raise DomainError("samples must have equal length")
    ca = _dist_matrix(u.reshape(m, -1))
    cb = _dist_matrix(v.reshape(m, -1))
    dvar = math.sqrt(max(float((ca * ca).mean()), 0.0)
                     * max(float((cb * cb).mean()), 0.0))
    if dvar <= 0.0:
        return 0.0, 1.0

    def dcor_of(cb_mat):
        dcov2 = max(float((ca * cb_mat).mean()), 0.0)
        return math.sqrt(dcov2 / math.sqrt(dvar)) if dvar > 0 else 0.0

    obs = dcor_of(cb)
    hits = 0
    for _ in range(n_perm):
        idx = rng.permutation(m)
        if dcor_of(cb[np.ix_(idx, idx)]) >= obs:
            hits += 1
    return obs, (1.0 + hits) / (n_perm + 1.0)


def independence_calibration(seed: int = 0, reps: int = 100, m: int = 400,
                             n_perm: int = 199) -> int:
    """Permutation p-value calibration under a known-independent null.

    Draws `reps` independent GIG pairs and counts p <= 0.01; super-uniform
    calibration means the count stays near reps/100.
    """
    law = dist.GigParams(0.5, 1.0, 1.0)
    hits = 0
    for k in range(reps):
        rng = rng_stream(seed, 61_000 + k)
        u = dist.draw(law, rng, m)
        v = dist.draw(law, rng, m)
        _, p = distance_correlation_test(u, v, n_perm=n_perm, rng=rng)
        if p <= 0.01:
            hits += 1
    return hits


# ---------------------------------------------------------------------------
# Monte-Carlo balance reports
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KsStat:
    statistic: float
    p_value: float
    n: int


@dataclass(frozen=True)
class IndependenceStat:
    statistic: float
    p_value: float
    n_used: int
    n_permutations: int


@dataclass
class BalanceReport:
    variant: str
    params: dict
    seed: int
    n: int
    max_log_residual: float
    residual_tol: float
    ks_stats: dict
    independence: IndependenceStat
    pass_flags: dict = field(default_factory=dict)
    mcmc: dict | None = None
    passed: bool = False

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "params": self.params,
            "seed": self.seed,
            "n": self.n,
            "max_log_residual": self.max_log_residual,
            "residual_tol": self.residual_tol,
            "ks_stats": {k: vars(v) for k, v in self.ks_stats.items()},
            "independence": vars(self.independence),
            "pass_flags": dict(self.pass_flags),
            "mcmc": self.mcmc,
            "passed": self.passed,
        }


def _spec_params_dict(spec: BalanceSpec) -> dict:
    out = {"alpha": spec.map.alpha, "beta": spec.map.beta, "lambda": spec.lam}
    if spec.variant == "matrix":
        out.update(r=spec.r, a=spec.a.tolist(), b=spec.b.tolist())
    else:
        out.update(c1=spec.c1, c2=spec.c2)
    return out


def monte_carlo_balance(spec: BalanceSpec, seed: int, n: int,
                        y_override: "dist.MarginalLaw | None" = None,
                        dcor_m: int = 1000, n_perm: int = 499,
                        mcmc: "matrix.McmcConfig | None" = None,
                        p_threshold: float = 0.01) -> BalanceReport:
    """Sample, map, test: KS per mapped marginal, distance correlation for
    the mapped pair, plus the deterministic transport residual.

    `y_override` replaces the law of the second input (negative controls).
    The independence test runs on a seeded subsample of size `dcor_m`.
    """
    if n < 1000:
        raise DomainError("need n >= 1000")
    if spec.variant == "matrix":
        return _matrix_balance(spec, seed, n, dcor_m, n_perm, mcmc, p_threshold)

    law_x, law_y = input_laws(spec)
    if y_override is not None:
        law_y = y_override
    law_u, law_v = output_laws(spec)
    xs = dist.draw(law_x, rng_stream(seed, 1), n)
    ys = dist.draw(law_y, rng_stream(seed, 2), n)
    the_map = f_dk if spec.variant == "fdk" else psi
    us, vs = the_map(spec.map, (xs, ys))

    names = ("U", "V") if spec.variant == "fdk" else ("S", "T")
    ks = {}
    for name, data, law in ((names[0], us, law_u), (names[1], vs, law_v)):
        res = stats.kstest(data, lambda q: dist.cdf(law, q))
        ks[name] = KsStat(float(res.statistic), float(res.pvalue), n)

    sub = rng_stream(seed, 3).choice(n, size=min(dcor_m, n), replace=False)
    stat, p = distance_correlation_test(us[sub], vs[sub], n_perm=n_perm,
                                        rng=rng_stream(seed, 4))
    ind = IndependenceStat(float(stat), float(p), len(sub), n_perm)

    resid = transport_grid_max(spec)
    flags = {f"ks_{name}": ks[name].p_value > p_threshold for name in ks}
    flags["independence"] = ind.p_value > p_threshold
    flags["transport"] = resid <= 1e-9
    report = BalanceReport(
        variant=spec.variant, params=_spec_params_dict(spec), seed=seed, n=n,
        max_log_residual=resid, residual_tol=1e-9, ks_stats=ks,
        independence=ind, pass_flags=flags, passed=all(flags.values()))
    return report


def _ess_stride(series: np.ndarray) -> int:
    # subsampling stride that leaves roughly independent values
    ess = matrix._ess(np.asarray(series)[None, :])
    return max(1, int(math.ceil(len(series) / max(ess, 1.0))))


def _matrix_balance(spec, seed, n, dcor_m, n_perm, mcmc, p_threshold):
    law_x, law_y = input_laws(spec)
    law_u, law_v = output_laws(spec)
    runs = {}
    for i, (key, law) in enumerate((("X", law_x), ("Y", law_y),
                                    ("U_ref", law_u), ("V_ref", law_v))):
        runs[key] = matrix.mgig_sample(law, seed + 17 * i + 1, n, mcmc=mcmc)
    us, vs = matrix.f_dk_matrix(spec.map, (runs["X"].draws, runs["Y"].draws))

    def functionals(draws):
        return {"logdet": np.log(np.linalg.det(draws)),
                "trace": np.trace(draws, axis1=-2, axis2=-1)}

    # residual MCMC autocorrelation makes nominal KS p-values
    # anti-conservative, so each series is subsampled to its effective size
    ks = {}
    max_stride = 1
    for key, mapped, ref in (("U", us, runs["U_ref"].draws),
                             ("V", vs, runs["V_ref"].draws)):
        fm, fr = functionals(mapped), functionals(ref)
        for fname in fm:
            sm = fm[fname][::_ess_stride(fm[fname])]
            sr = fr[fname][::_ess_stride(fr[fname])]
            max_stride = max(max_stride, _ess_stride(fm[fname]))
            res = stats.ks_2samp(sm, sr)
            ks[f"{key}_{fname}"] = KsStat(float(res.statistic),
                                          float(res.pvalue), len(sm))

    pool = np.arange(0, len(us), max_stride)
    sub = rng_stream(seed, 3).choice(pool, size=min(dcor_m, len(pool)),
                                     replace=False)
    stat, p = distance_correlation_test(
        matrix.sym_to_vec(us[sub]), matrix.sym_to_vec(vs[sub]),
        n_perm=n_perm, rng=rng_stream(seed, 4))
    ind = IndependenceStat(float(stat), float(p), len(sub), n_perm)

    norm = matrix_normalizers(spec, seed, n=400_000)
    resid = transport_grid_max(spec, grid_n=5, normalizers=norm, seed=seed)
    tol = max(3.0 * norm.se, 1e-9)

    mcmc_diag = {k: runs[k].diagnostics_dict() for k in runs}
    flags = {f"ks_{k}": ks[k].p_value > p_threshold for k in ks}
    flags["independence"] = ind.p_value > p_threshold
    flags["transport"] = resid <= tol
    flags["mcmc_ok"] = all(runs[k].ok for k in runs)
    return BalanceReport(
        variant="matrix", params=_spec_params_dict(spec), seed=seed, n=n,
        max_log_residual=resid, residual_tol=tol, ks_stats=ks,
        independence=ind, pass_flags=flags, mcmc=mcmc_diag,
        passed=all(flags.values()))


# ---------------------------------------------------------------------------
# proof-machinery identities
# ---------------------------------------------------------------------------

@dataclass
class MachineryResult:
    s: float
    sigma: float
    theta: float
    transforms: dict           # MC estimates of x_{-s}, y_s, u_{-s}, v_s
    product_lhs: float
    product_rhs: float
    product_se: float
    product_dev_se: float       # |lhs - rhs| in combined-SE units
    y_form_rel: float           # closed Bessel form vs transform ratio, y_s
    v_form_rel: float           # same for v_s
    pass_flags: dict = field(default_factory=dict)
    passed: bool = False

    def rows(self):
        return [
            ("product_dev_se", self.product_dev_se, 4.0, self.product_dev_se <= 4.0),
            ("y_closed_form_rel", self.y_form_rel, 1e-8, self.y_form_rel <= 1e-8),
            ("v_closed_form_rel", self.v_form_rel, 1e-8, self.v_form_rel <= 1e-8),
        ]


def _closed_ratio(r_s: float, beta: float, c1: float, c2: float,
                  pt1, pt2, flip: bool) -> float:
    # ((c2-th)/(c1-sg))^(r_s/2) K_{r_s}(2 sqrt(beta (c1-sg)(c2-th))),
    # as a ratio between two tilt points so the constant factor cancels;
    # `flip` inverts the power-law prefactor (the v_s form)
    def lg(sg, th):
        pref = 0.5 * r_s * (math.log(c2 - th) - math.log(c1 - sg))
        if flip:
            pref = -pref
        return pref + bessel_k_log(r_s, 2.0 * math.sqrt(beta * (c1 - sg) * (c2 - th)))

    return math.exp(lg(*pt1) - lg(*pt2))


def machinery_check(spec: BalanceSpec, s: float, sigma: float, theta: float,
                    seed: int, n: int) -> MachineryResult:
    """Check the tilted-transform identities that characterize the laws.

    Monte-Carlo route: the product identity x_{-s} y_s = u_{-s} v_s is
    estimated twice -- from (A, B) draws and from their psi image -- and
    the two estimates must agree within 4 combined standard errors.
    Closed-form route: ratios y_s(pt1)/y_s(pt2) and v_s(pt1)/v_s(pt2)
    computed from the extended Laplace transform must match the closed
    Bessel forms (power-law prefactor times K_{lam+s}) to 1e-8.
    """
    if spec.variant != "psi":
        raise DomainError("machinery_check runs on the psi variant")
    if not (sigma < 0.0 and theta < 0.0):
        raise DomainError("sigma and theta must be strictly negative")
    al, be = spec.map.alpha, spec.map.beta
    if be == 0.0 or al == 0.0:
        raise DomainError("closed forms need alpha, beta > 0")
    law_a, law_b = input_laws(spec)

    rng1, rng2 = rng_stream(seed, 5), rng_stream(seed, 6)
    a1, b1 = dist.draw(law_a, rng1, n), dist.draw(law_b, rng1, n)
    a2, b2 = dist.draw(law_a, rng2, n), dist.draw(law_b, rng2, n)
    s_img, t_img = psi(spec.map, (a2, b2))

    lhs_sample = a1 ** (-s) * b1 ** s * np.exp(
        sigma * (b1 + al * a1) + theta * (1.0 / a1 + be / b1))
    rhs_sample = s_img ** (-s) * t_img ** s * np.exp(
        sigma * (1.0 / s_img + be / t_img) + theta * (t_img + al * s_img))
    lhs, rhs = float(lhs_sample.mean()), float(rhs_sample.mean())
    se = math.hypot(float(lhs_sample.std()) / math.sqrt(n),
                    float(rhs_sample.std()) / math.sqrt(n))
    dev_se = abs(lhs - rhs) / se if se > 0 else 0.0

    transforms = {
        "x_minus_s": float(np.mean(a1 ** (-s) * np.exp(al * sigma * a1 + theta / a1))),
        "y_s": float(np.mean(b1 ** s * np.exp(sigma * b1 + be * theta / b1))),
        "u_minus_s": float(np.mean(s_img ** (-s)
                                   * np.exp(al * theta * s_img + sigma / s_img))),
        "v_s": float(np.mean(t_img ** s * np.exp(theta * t_img + be * sigma / t_img))),
    }

    # analytic route: y_s(sg, th) = L_B(s, sg, beta*th), B ~ GIG(lam, c1, beta c2);
    # v_s(sg, th) = L_T(s, th, beta*sg), T ~ GIG(lam, c2, beta c1)
    pt1 = (sigma, theta)
    pt2 = (2.0 * sigma, 0.5 * theta - 1.0)
    law_t = dist.make_law(spec.lam, spec.c2, be * spec.c1)
    r_s = spec.lam + s
    y_ratio = math.exp(dist.ext_laplace_log(law_b, s, pt1[0], be * pt1[1])
                       - dist.ext_laplace_log(law_b, s, pt2[0], be * pt2[1]))
    y_closed = _closed_ratio(r_s, be, spec.c1, spec.c2, pt1, pt2, flip=False)
    y_form_rel = abs(y_ratio - y_closed) / y_closed
    v_ratio = math.exp(dist.ext_laplace_log(law_t, s, pt1[1], be * pt1[0])
                       - dist.ext_laplace_log(law_t, s, pt2[1], be * pt2[0]))
    v_closed = _closed_ratio(r_s, be, spec.c1, spec.c2, pt1, pt2, flip=True)
    v_form_rel = abs(v_ratio - v_closed) / v_closed

    flags = {"product_identity": dev_se <= 4.0, "y_closed_form": y_form_rel <= 1e-8,
             "v_closed_form": v_form_rel <= 1e-8}
    return MachineryResult(
        s=s, sigma=sigma, theta=theta, transforms=transforms,
        product_lhs=lhs, product_rhs=rhs, product_se=se, product_dev_se=dev_se,
        y_form_rel=y_form_rel, v_form_rel=v_form_rel,
        pass_flags=flags, passed=all(flags.values()))
