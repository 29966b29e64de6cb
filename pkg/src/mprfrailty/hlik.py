"""Hierarchical likelihood core: h, its gradient, and curvature.

The joint log-likelihood of the data and the frailties is

    h = sum_ij ell1_ij + sum_i ell2_i,

where ell1 is the conditional log-density of an (possibly censored)
observation given its cluster's frailties and ell2 is the log-density of
the frailty pair.  Fixed and random effects are estimated by maximizing
h jointly; dispersion parameters by maximizing the adjusted profile
likelihood p = h - 0.5*log det(H/2pi) with H the observed information of
(theta, v).  This module evaluates all of those pieces analytically for
every frailty structure and baseline family.

Everything here is a pure function of its inputs; concurrent evaluation
at different parameter points is safe.
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .baselines import GOMPERTZ, WEIBULL, normalize_family
from .data import BVNF, CF, IF, NF, SCF, SHF, LINPRED_MAX, expand_random_effects
from .errors import CurvatureError, DivergedIterateError, DomainError, EvaluationError

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class HlikValue:
    """h split into its data part (ell1) and frailty part (ell2)."""

    h: float
    ell1_sum: float
    ell2_sum: float


@dataclass(frozen=True)
class ParamLayout:
    """Index layout of the stacked (theta, v) parameter vector.

    Order is [beta, alpha, v_beta block, v_alpha block]; a block is
    present only when the structure treats it as free (under CF the
    shape effects are phi * v_beta, so only the v_beta block appears).
    """

    m_beta: int
    m_alpha: int
    q: int
    has_vb: bool
    has_va: bool

    @classmethod
    def for_spec(cls, design, spec):
        return cls(
            m_beta=design.m_beta,
            m_alpha=design.m_alpha,
            q=design.q,
            has_vb=spec.has_scale_frailty,
            has_va=spec.has_shape_frailty,
        )

    @property
    def dim(self):
        return self.m_beta + self.m_alpha + self.q * (self.has_vb + self.has_va)

    @property
    def sl_beta(self):
        return slice(0, self.m_beta)

    @property
    def sl_alpha(self):
        return slice(self.m_beta, self.m_beta + self.m_alpha)

    @property
    def sl_vb(self):
        if not self.has_vb:
            return None
        start = self.m_beta + self.m_alpha
        return slice(start, start + self.q)

    @property
    def sl_va(self):
        if not self.has_va:
            return None
        start = self.m_beta + self.m_alpha + (self.q if self.has_vb else 0)
        return slice(start, start + self.q)

    def pack(self, beta, alpha, v_beta=None, v_alpha=None):
        x = np.empty(self.dim)
        x[self.sl_beta] = beta
        x[self.sl_alpha] = alpha
        if self.has_vb:
            x[self.sl_vb] = 0.0 if v_beta is None else v_beta
        if self.has_va:
            x[self.sl_va] = 0.0 if v_alpha is None else v_alpha
        return x

    def unpack(self, x):
        beta = x[self.sl_beta]
        alpha = x[self.sl_alpha]
        vb = x[self.sl_vb] if self.has_vb else None
        va = x[self.sl_va] if self.has_va else None
        return beta, alpha, vb, va


def _baseline_terms(family, s):
    """(Lambda0, lambda0, lambda0', lambda0'', log lambda0) at s = t**gamma."""
    if family == WEIBULL:
        one = np.ones_like(s)
        zero = np.zeros_like(s)
        return s, one, zero, zero, zero
    if family == GOMPERTZ:
        lam = np.exp(s)
        return np.expm1(s), lam, lam, lam, s
    inv = 1.0 / (1.0 + s)
    return np.log1p(s), inv, -inv * inv, 2.0 * inv**3, -np.log1p(s)


def _ell2_total(spec, q, vb, va):
    """sum_i ell2_i: total frailty log-density under the structure."""
    st = spec.structure
    if st == NF:
        return 0.0
    if st in (SCF, CF):
        sb = spec.sigma_beta
        return float(-q * (0.5 * LOG_2PI + math.log(sb)) - 0.5 * np.sum(vb**2) / sb**2)
    if st == SHF:
        sa = spec.sigma_alpha
        return float(-q * (0.5 * LOG_2PI + math.log(sa)) - 0.5 * np.sum(va**2) / sa**2)
    sb, sa = spec.sigma_beta, spec.sigma_alpha
    rho = 0.0 if st == IF else spec.rho
    omr = 1.0 - rho * rho
    const = -q * (LOG_2PI + math.log(sb) + math.log(sa) + 0.5 * math.log(omr))
    quad = np.sum((vb / sb) ** 2 + (va / sa) ** 2 - 2.0 * rho * (vb / sb) * (va / sa))
    return float(const - 0.5 * quad / omr)


class Evaluator:
    """Likelihood machinery bound to one (family, design, structure).

    Operates on the stacked parameter vector of :class:`ParamLayout`,
    which is what the Newton solver iterates on.  Dispersion parameters
    live in ``spec`` and are fixed for the lifetime of the object.
    """

    def __init__(self, family, design, spec):
        self.family = normalize_family(family)
        self.design = design
        self.spec = spec
        self.layout = ParamLayout.for_spec(design, spec)
        if self.family == GOMPERTZ:
            # exp(s) in the hazard overflows beyond this
            self._max_glogt = math.log(700.0)
        else:
            self._max_glogt = LINPRED_MAX

    # -- parameter expansion -------------------------------------------------

    def _predictors(self, x):
        d = self.design
        beta, alpha, vb_free, va_free = self.layout.unpack(x)
        idx = d.cluster_index
        lp_b = d.X_beta @ beta
        lp_a = d.X_alpha @ alpha
        vb = vb_free if vb_free is not None else np.zeros(d.q)
        if self.spec.structure == CF:
            va = self.spec.phi * vb
        elif va_free is not None:
            va = va_free
        else:
            va = np.zeros(d.q)
        lp_b = lp_b + vb[idx]
        lp_a = lp_a + va[idx]
        if np.any(np.abs(lp_b) > LINPRED_MAX) or np.any(np.abs(lp_a) > LINPRED_MAX):
            raise DivergedIterateError("linear predictor overflow; damp the step")
        glogt = np.exp(lp_a) * d.log_time
        if np.any(glogt > self._max_glogt):
            raise DivergedIterateError("transformed time overflow; damp the step")
        tau = np.exp(lp_b)
        gamma = np.exp(lp_a)
        s = np.exp(glogt)
        return tau, gamma, s, glogt, vb, va

    # -- frailty log-density and its derivatives ------------------------------

    def _ell2(self, vb, va):
        return _ell2_total(self.spec, self.design.q, vb, va)

    def _penalty_score(self, vb, va):
        """(U_vbeta, U_valpha): gradients of -ell2 w.r.t. the free blocks."""
        spec = self.spec
        st = spec.structure
        if st in (SCF, CF):
            return vb / spec.sigma_beta**2, None
        if st == SHF:
            return None, va / spec.sigma_alpha**2
        if st in (IF, BVNF):
            sb, sa = spec.sigma_beta, spec.sigma_alpha
            rho = 0.0 if st == IF else spec.rho
            c = 1.0 / (1.0 - rho * rho)
            u_vb = c * (vb / sb**2 - rho * va / (sb * sa))
            u_va = c * (va / sa**2 - rho * vb / (sb * sa))
            return u_vb, u_va
        return None, None

    def _penalty_curvature(self):
        """Scalars (q_bb, q_aa, q_ba) multiplying I_q in the information."""
        spec = self.spec
        st = spec.structure
        if st in (SCF, CF):
            return 1.0 / spec.sigma_beta**2, 0.0, 0.0
        if st == SHF:
            return 0.0, 1.0 / spec.sigma_alpha**2, 0.0
        if st in (IF, BVNF):
            sb, sa = spec.sigma_beta, spec.sigma_alpha
            rho = 0.0 if st == IF else spec.rho
            c = 1.0 / (1.0 - rho * rho)
            return c / sb**2, c / sa**2, -c * rho / (sb * sa)
        return 0.0, 0.0, 0.0

    # -- record-level likelihood terms ----------------------------------------

    def _ell1_vec(self, tau, gamma, s, glogt):
        d = self.design
        Lam0, _, _, _, log_lam0 = _baseline_terms(self.family, s)
        return (
            d.status * (np.log(tau) + np.log(gamma) + (gamma - 1.0) * d.log_time + log_lam0)
            - tau * Lam0
        )

    def _record_terms(self, tau, gamma, s, glogt):
        """U vectors and information weights, all length n."""
        d = self.design
        delta = d.status
        Lam0, lam0, dlam0, d2lam0, _ = _baseline_terms(self.family, s)
        a = dlam0 / lam0
        s_lam0 = s * lam0
        tau_Lam0 = tau * Lam0
        u_beta = delta - tau_Lam0
        u_alpha = delta + (delta * (1.0 + s * a) - tau * s_lam0) * glogt
        w_beta = tau_Lam0
        w_ba = tau * s_lam0 * glogt
        inner = delta * (s * (d2lam0 / lam0) + a - s * a * a) - tau * (lam0 + s * dlam0)
        w_alpha = -(delta * (1.0 + s * a) + glogt * s * inner - tau * s_lam0) * glogt
        return u_beta, u_alpha, w_beta, w_alpha, w_ba

    # -- cluster reductions ----------------------------------------------------

    def _csum(self, w):
        return np.bincount(self.design.cluster_index, weights=w, minlength=self.design.q)

    def _csum_cols(self, w, X):
        """Columns of X' W Z for one-hot Z: (m, q) array of cluster sums."""
        idx = self.design.cluster_index
        q = self.design.q
        out = np.empty((X.shape[1], q))
        for j in range(X.shape[1]):
            out[j] = np.bincount(idx, weights=w * X[:, j], minlength=q)
        return out

    # -- public evaluations ------------------------------------------------------

    def h_parts(self, x):
        tau, gamma, s, glogt, vb, va = self._predictors(x)
        ell1 = self._ell1_vec(tau, gamma, s, glogt)
        ell1_sum = float(np.sum(ell1))
        if not np.isfinite(ell1_sum):
            bad = int(np.argmax(~np.isfinite(ell1)))
            raise EvaluationError("non-finite conditional log-likelihood", index=bad)
        ell2_sum = self._ell2(vb, va)
        return HlikValue(h=ell1_sum + ell2_sum, ell1_sum=ell1_sum, ell2_sum=ell2_sum)

    def h(self, x):
        return self.h_parts(x).h

    def score(self, x):
        tau, gamma, s, glogt, vb, va = self._predictors(x)
        u_beta, u_alpha, *_ = self._record_terms(tau, gamma, s, glogt)
        return self._assemble_score(u_beta, u_alpha, vb, va)

    def _assemble_score(self, u_beta, u_alpha, vb, va):
        d, lay, spec = self.design, self.layout, self.spec
        g = np.empty(lay.dim)
        g[lay.sl_beta] = d.X_beta.T @ u_beta
        g[lay.sl_alpha] = d.X_alpha.T @ u_alpha
        u_vb, u_va = self._penalty_score(vb, va)
        if spec.structure == CF:
            g[lay.sl_vb] = self._csum(u_beta) + spec.phi * self._csum(u_alpha) - u_vb
        else:
            if lay.has_vb:
                g[lay.sl_vb] = self._csum(u_beta) - u_vb
            if lay.has_va:
                g[lay.sl_va] = self._csum(u_alpha) - u_va
        if not np.all(np.isfinite(g)):
            raise EvaluationError("non-finite score entry")
        return g

    def information(self, x, penalty=True):
        tau, gamma, s, glogt, vb, va = self._predictors(x)
        _, _, w_beta, w_alpha, w_ba = self._record_terms(tau, gamma, s, glogt)
        return self._assemble_information(w_beta, w_alpha, w_ba, penalty)

    def _assemble_information(self, w_beta, w_alpha, w_ba, penalty):
        d, lay, spec = self.design, self.layout, self.spec
        Xb, Xa = d.X_beta, d.X_alpha
        H = np.zeros((lay.dim, lay.dim))

        H[lay.sl_beta, lay.sl_beta] = (Xb * w_beta[:, None]).T @ Xb
        H[lay.sl_beta, lay.sl_alpha] = (Xb * w_ba[:, None]).T @ Xa
        H[lay.sl_alpha, lay.sl_beta] = H[lay.sl_beta, lay.sl_alpha].T
        H[lay.sl_alpha, lay.sl_alpha] = (Xa * w_alpha[:, None]).T @ Xa

        q_bb, q_aa, q_ba = self._penalty_curvature() if penalty else (0.0, 0.0, 0.0)
        qrange = np.arange(d.q)

        if spec.structure == CF:
            phi = spec.phi
            Hbv = self._csum_cols(w_beta, Xb) + phi * self._csum_cols(w_ba, Xb)
            Hav = self._csum_cols(w_ba, Xa) + phi * self._csum_cols(w_alpha, Xa)
            dvv = (
                self._csum(w_beta)
                + 2.0 * phi * self._csum(w_ba)
                + phi * phi * self._csum(w_alpha)
                + q_bb
            )
            H[lay.sl_beta, lay.sl_vb] = Hbv
            H[lay.sl_vb, lay.sl_beta] = Hbv.T
            H[lay.sl_alpha, lay.sl_vb] = Hav
            H[lay.sl_vb, lay.sl_alpha] = Hav.T
            H[lay.sl_vb, lay.sl_vb][qrange, qrange] = dvv
        else:
            if lay.has_vb:
                Hb_vb = self._csum_cols(w_beta, Xb)
                Ha_vb = self._csum_cols(w_ba, Xa)
                H[lay.sl_beta, lay.sl_vb] = Hb_vb
                H[lay.sl_vb, lay.sl_beta] = Hb_vb.T
                H[lay.sl_alpha, lay.sl_vb] = Ha_vb
                H[lay.sl_vb, lay.sl_alpha] = Ha_vb.T
                H[lay.sl_vb, lay.sl_vb][qrange, qrange] = self._csum(w_beta) + q_bb
            if lay.has_va:
                Hb_va = self._csum_cols(w_ba, Xb)
                Ha_va = self._csum_cols(w_alpha, Xa)
                H[lay.sl_beta, lay.sl_va] = Hb_va
                H[lay.sl_va, lay.sl_beta] = Hb_va.T
                H[lay.sl_alpha, lay.sl_va] = Ha_va
                H[lay.sl_va, lay.sl_alpha] = Ha_va.T
                H[lay.sl_va, lay.sl_va][qrange, qrange] = self._csum(w_alpha) + q_aa
            if lay.has_vb and lay.has_va:
                dcross = self._csum(w_ba) + q_ba
                H[lay.sl_vb, lay.sl_va][qrange, qrange] = dcross
                H[lay.sl_va, lay.sl_vb][qrange, qrange] = dcross

        if not np.all(np.isfinite(H)):
            raise EvaluationError("non-finite information weight")
        return H

    def h_score_info(self, x):
        """One-pass (HlikValue, score, information) sharing the record terms."""
        tau, gamma, s, glogt, vb, va = self._predictors(x)
        ell1 = self._ell1_vec(tau, gamma, s, glogt)
        ell1_sum = float(np.sum(ell1))
        if not np.isfinite(ell1_sum):
            bad = int(np.argmax(~np.isfinite(ell1)))
            raise EvaluationError("non-finite conditional log-likelihood", index=bad)
        ell2_sum = self._ell2(vb, va)
        parts = HlikValue(h=ell1_sum + ell2_sum, ell1_sum=ell1_sum, ell2_sum=ell2_sum)
        u_beta, u_alpha, w_beta, w_alpha, w_ba = self._record_terms(tau, gamma, s, glogt)
        g = self._assemble_score(u_beta, u_alpha, vb, va)
        H = self._assemble_information(w_beta, w_alpha, w_ba, penalty=True)
        return parts, g, H


# -- functional API over full-length frailty vectors ---------------------------


def _as_packed(design, spec, beta, alpha, v_beta, v_alpha):
    vb, va = expand_random_effects(spec, design.q, v_beta, v_alpha)
    lay = ParamLayout.for_spec(design, spec)
    x = lay.pack(
        np.asarray(beta, dtype=float),
        np.asarray(alpha, dtype=float),
        vb if lay.has_vb else None,
        va if lay.has_va else None,
    )
    return lay, x


def cond_loglik(family, time, status, tau, gamma):
    """Per-record conditional log-likelihood given the frailties.

    ell1 = delta*(log tau + log gamma + (gamma-1) log t + log lambda0(t**gamma))
           - tau * Lambda0(t**gamma)
    """
    family = normalize_family(family)
    t = np.asarray(time, dtype=float)
    delta = np.asarray(status, dtype=float)
    tau = np.asarray(tau, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    if np.any(t <= 0) or not np.all(np.isfinite(t)):
        raise DomainError("time must be positive and finite")
    if not np.all(np.isin(delta, (0.0, 1.0))):
        raise DomainError("status must be 0 or 1")
    if np.any(tau <= 0) or np.any(gamma <= 0):
        raise DomainError("tau and gamma must be positive")
    logt = np.log(t)
    s = np.exp(gamma * logt)
    Lam0, _, _, _, log_lam0 = _baseline_terms(family, s)
    out = delta * (np.log(tau) + np.log(gamma) + (gamma - 1.0) * logt + log_lam0) - tau * Lam0
    if not np.all(np.isfinite(out)):
        bad = int(np.argmax(~np.isfinite(np.atleast_1d(out))))
        raise EvaluationError("non-finite conditional log-likelihood", index=bad)
    return out if np.ndim(out) else float(out)


def frailty_logdensity(spec, v_beta=None, v_alpha=None, q=None):
    """Total frailty log-density sum_i ell2_i for the given structure."""
    if q is None:
        for v in (v_beta, v_alpha):
            if v is not None:
                q = len(np.asarray(v))
                break
        else:
            raise DomainError("q cannot be inferred; pass q or a frailty vector")
    vb, va = expand_random_effects(spec, q, v_beta, v_alpha)
    return _ell2_total(spec, q, vb, va)


def h_loglik(family, design, spec, beta, alpha, v_beta=None, v_alpha=None):
    """Joint log-likelihood h = sum ell1 + sum ell2 as an :class:`HlikValue`."""
    _, x = _as_packed(design, spec, beta, alpha, v_beta, v_alpha)
    return Evaluator(family, design, spec).h_parts(x)


def score(family, design, spec, beta, alpha, v_beta=None, v_alpha=None):
    """Stacked analytic gradient of h over (beta, alpha, free frailty blocks)."""
    _, x = _as_packed(design, spec, beta, alpha, v_beta, v_alpha)
    return Evaluator(family, design, spec).score(x)


def information(family, design, spec, beta, alpha, v_beta=None, v_alpha=None,
                penalty=True):
    """Observed information -d2h/d(theta,v)2 as a dense symmetric matrix.

    With ``penalty=False`` the frailty-precision blocks are omitted,
    giving the curvature of the conditional part sum ell1 alone (the
    H* matrix of the conditional-AIC effective degrees of freedom).
    """
    _, x = _as_packed(design, spec, beta, alpha, v_beta, v_alpha)
    return Evaluator(family, design, spec).information(x, penalty=penalty)


def logdet_pd(H):
    """log det of a symmetric positive-definite matrix via Cholesky.

    Raises :class:`CurvatureError` when the factorization fails, rather
    than silently taking absolute values of pivots.  H must already be
    validated finite (the assembly routines guarantee this).
    """
    try:
        L = scipy.linalg.cholesky(H, lower=True, check_finite=False)
    except scipy.linalg.LinAlgError:
        raise CurvatureError(
            "information matrix is not positive definite"
        ) from None
    return 2.0 * float(np.sum(np.log(np.diag(L))))


def adjusted_profile_loglik(family, design, spec, beta, alpha,
                            v_beta=None, v_alpha=None):
    """Laplace-adjusted profile log-likelihood p = h - 0.5 log det(H/2pi).

    Meaningful when (beta, alpha, v) is the inner maximizer of h for the
    dispersion carried by ``spec``; the caller is responsible for that.
    """
    lay, x = _as_packed(design, spec, beta, alpha, v_beta, v_alpha)
    ev = Evaluator(family, design, spec)
    hval = ev.h(x)
    H = ev.information(x, penalty=True)
    return hval - 0.5 * (logdet_pd(H) - lay.dim * LOG_2PI)
