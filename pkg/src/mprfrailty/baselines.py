"""Baseline cumulative-hazard families on the transformed time scale.

Each family supplies the cumulative hazard ``Lambda0``, the hazard
``lambda0`` with its first two derivatives, and the inverse of
``Lambda0`` (used by inverse-transform simulation).  The model applies
these to the transformed time s = t**gamma, so the Weibull family is
simply the identity cumulative hazard.

All functions accept scalars or numpy arrays and are stateless.
Derivatives are hand-coded closed forms: they sit in the innermost loop
of the information-matrix weights, and finite differences there would be
both slow and noisy.
"""

import numpy as np

from .errors import DomainError

WEIBULL = "weibull"
GOMPERTZ = "gompertz"
LOGLOGISTIC = "loglogistic"

FAMILIES = (WEIBULL, GOMPERTZ, LOGLOGISTIC)

# exp(s) overflows a float64 well before 710; fail loudly instead of
# letting inf propagate into Newton steps.
GOMPERTZ_MAX_ARG = 700.0

_ALIASES = {
    "weibull": WEIBULL,
    "gompertz": GOMPERTZ,
    "loglogistic": LOGLOGISTIC,
    "log-logistic": LOGLOGISTIC,
    "log_logistic": LOGLOGISTIC,
}


def normalize_family(name):
    """Map a family name string to its canonical identifier."""
    key = str(name).strip().lower()
    if key not in _ALIASES:
        raise DomainError(
            f"unknown baseline family {name!r}; expected one of {FAMILIES}"
        )
    return _ALIASES[key]


def _check_nonnegative(s, what):
    arr = np.asarray(s, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{what} must be finite")
    if np.any(arr < 0):
        raise DomainError(f"{what} must be non-negative")
    return arr


def cumulative_base(family, s):
    """Baseline cumulative hazard Lambda0(s) on the transformed scale.

    Weibull: s; Gompertz: exp(s) - 1; log-logistic: log(1 + s).
    """
    family = normalize_family(family)
    arr = _check_nonnegative(s, "s")
    if family == WEIBULL:
        out = arr.copy()
    elif family == GOMPERTZ:
        if np.any(arr > GOMPERTZ_MAX_ARG):
            raise DomainError(
                f"Gompertz cumulative hazard overflows for s > {GOMPERTZ_MAX_ARG}"
            )
        out = np.expm1(arr)
    else:
        out = np.log1p(arr)
    return out if np.ndim(s) else float(out)


def hazard_base_derivs(family, s):
    """Baseline hazard lambda0(s) and its first two derivatives.

    Returns the triple (lambda0, lambda0', lambda0'') evaluated at s > 0:
    Weibull (1, 0, 0); Gompertz (e**s, e**s, e**s);
    log-logistic (1/(1+s), -1/(1+s)**2, 2/(1+s)**3).
    """
    family = normalize_family(family)
    arr = np.asarray(s, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError("s must be finite")
    if np.any(arr <= 0):
        raise DomainError("s must be positive")
    if family == WEIBULL:
        lam = np.ones_like(arr)
        d1 = np.zeros_like(arr)
        d2 = np.zeros_like(arr)
    elif family == GOMPERTZ:
        if np.any(arr > GOMPERTZ_MAX_ARG):
            raise DomainError(
                f"Gompertz hazard overflows for s > {GOMPERTZ_MAX_ARG}"
            )
        lam = np.exp(arr)
        d1 = lam
        d2 = lam
    else:
        inv = 1.0 / (1.0 + arr)
        lam = inv
        d1 = -(inv * inv)
        d2 = 2.0 * inv * inv * inv
    if np.ndim(s):
        return lam, d1, d2
    return float(lam), float(d1), float(d2)


def inverse_cumulative_base(family, u):
    """Inverse of the baseline cumulative hazard: s with Lambda0(s) = u.

    Weibull: u; Gompertz: log(1 + u); log-logistic: exp(u) - 1.
    """
    family = normalize_family(family)
    arr = _check_nonnegative(u, "u")
    if family == WEIBULL:
        out = arr.copy()
    elif family == GOMPERTZ:
        out = np.log1p(arr)
    else:
        out = np.expm1(arr)
    return out if np.ndim(u) else float(out)
