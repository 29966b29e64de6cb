"""Model selection across frailty structures: rAIC, cAIC, boundary LRT.

Two information criteria are used.  The restricted criterion penalizes
the profile deviance by the number of dispersion parameters (df_r); the
conditional criterion penalizes the conditional deviance by the
effective degrees of freedom df_c = trace(H^-1 H*), where H* is the
curvature of the conditional part alone.  Variance components sit on the
boundary of their parameter space under the null, so the likelihood
ratio test for a single frailty variance uses the half-half mixture of
chi-square distributions with 0 and 1 degrees of freedom.
"""

from dataclasses import dataclass

from scipy.stats import chi2

from .data import IF, NF, SCF, SHF
from .errors import MPRFrailtyError

# 90th percentile of chi2(1): the 5% critical value of the
# (chi2_0 + chi2_1)/2 mixture for a variance on the boundary.
MIXTURE_CHI2_CRITICAL_5PCT = 2.705543

# null -> alternative pairs that pin exactly one frailty variance to zero
_NESTED_PAIRS = {(NF, SCF), (NF, SHF), (SCF, IF), (SHF, IF)}


class InconsistentFitsError(MPRFrailtyError, ValueError):
    """The null fit beats the alternative, which nesting forbids."""


def raic(fit):
    """Restricted AIC: -2 p(h) + 2 df_r."""
    return fit.deviance_profile + 2.0 * fit.df_r


def caic(fit):
    """Conditional AIC: -2 sum(ell1) + 2 df_c."""
    return fit.cond_deviance + 2.0 * fit.df_c


@dataclass(frozen=True)
class LrtResult:
    statistic: float
    critical_value: float
    significant: bool
    p_value: float


def frailty_lrt(fit_null, fit_alt):
    """Boundary-corrected LRT for a single frailty variance.

    The null must be the alternative with exactly one frailty variance
    pinned to zero (NF vs ScF/ShF, or ScF/ShF vs IF).
    """
    pair = (fit_null.structure, fit_alt.structure)
    if pair not in _NESTED_PAIRS:
        raise ValueError(
            f"{pair[0]} is not {pair[1]} with exactly one frailty variance "
            "pinned to zero; supported pairs: "
            + ", ".join(f"{a} vs {b}" for a, b in sorted(_NESTED_PAIRS))
        )
    statistic = fit_null.deviance_profile - fit_alt.deviance_profile
    if statistic < -1e-6:
        raise InconsistentFitsError(
            f"deviance of the richer model exceeds the reduced model by "
            f"{-statistic:.4g}; at least one fit has not converged"
        )
    statistic = max(statistic, 0.0)
    p_value = 0.5 if statistic == 0.0 else 0.5 * float(chi2.sf(statistic, df=1))
    return LrtResult(
        statistic=statistic,
        critical_value=MIXTURE_CHI2_CRITICAL_5PCT,
        significant=statistic > MIXTURE_CHI2_CRITICAL_5PCT,
        p_value=p_value,
    )


@dataclass
class SelectionRow:
    model: str
    deviance_r: float
    df_r: int
    raic: float
    delta_raic: float
    deviance_c: float
    df_c: float
    caic: float
    delta_caic: float
    converged: bool = True
    note: str = ""


@dataclass
class SelectionReport:
    rows: list
    failures: dict

    def best_raic(self):
        return min((r for r in self.rows), key=lambda r: r.raic).model

    def best_caic(self):
        return min((r for r in self.rows), key=lambda r: r.caic).model

    def to_csv_rows(self):
        header = [
            "model", "deviance_r", "df_r", "raic", "delta_raic",
            "deviance_c", "df_c", "caic", "delta_caic",
        ]
        body = [
            [
                r.model,
                f"{r.deviance_r:.10g}", f"{r.df_r:d}",
                f"{r.raic:.10g}", f"{r.delta_raic:.10g}",
                f"{r.deviance_c:.10g}", f"{r.df_c:.10g}",
                f"{r.caic:.10g}", f"{r.delta_caic:.10g}",
            ]
            for r in self.rows
        ]
        return [header] + body

    def to_text(self):
        lines = []
        head = (
            f"{'model':<6} {'-2p(h)':>10} {'df_r':>5} {'rAIC':>10} {'drAIC':>8} "
            f"{'-2l_c':>10} {'df_c':>7} {'cAIC':>10} {'dcAIC':>8}"
        )
        lines.append(head)
        lines.append("-" * len(head))
        for r in self.rows:
            mark = ""
            if r.delta_raic == 0.0:
                mark += " <rAIC"
            if r.delta_caic == 0.0:
                mark += " <cAIC"
            lines.append(
                f"{r.model:<6} {r.deviance_r:>10.2f} {r.df_r:>5d} "
                f"{r.raic:>10.2f} {r.delta_raic:>8.2f} "
                f"{r.deviance_c:>10.2f} {r.df_c:>7.2f} "
                f"{r.caic:>10.2f} {r.delta_caic:>8.2f}{mark}"
            )
        for model, reason in self.failures.items():
            lines.append(f"{model:<6} failed: {reason}")
        return "\n".join(lines)


def selection_report(fits, failures=None):
    """Build the comparison table from completed fits.

    ``failures`` maps structure names that could not be fitted to the
    reason; they appear as annotations, not as rows.
    """
    if not fits:
        raise ValueError("at least one completed fit is required")
    rows = []
    for f in fits:
        rows.append(
            SelectionRow(
                model=f.structure,
                deviance_r=f.deviance_profile,
                df_r=f.df_r,
                raic=raic(f),
                delta_raic=0.0,
                deviance_c=f.cond_deviance,
                df_c=f.df_c,
                caic=caic(f),
                delta_caic=0.0,
                converged=f.converged,
                note="" if f.converged else "not converged",
            )
        )
    raic_min = min(r.raic for r in rows)
    caic_min = min(r.caic for r in rows)
    for r in rows:
        r.delta_raic = r.raic - raic_min
        r.delta_caic = r.caic - caic_min
    return SelectionReport(rows=rows, failures=dict(failures or {}))
