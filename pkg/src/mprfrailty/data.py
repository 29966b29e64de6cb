"""Clustered survival data, frailty structures and design matrices.

The model has two regression components: the scale parameter tau and the
shape parameter gamma of the baseline hazard, each with its own linear
predictor on the log scale,

    log tau_ij   = x_ij' beta  + v_beta_i
    log gamma_ij = x_ij' alpha + v_alpha_i,

where i indexes clusters and j individuals within clusters.  The
cluster-level random effects (v_beta_i, v_alpha_i) follow one of six
structures selected by :class:`FrailtySpec`.
"""

import csv
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .errors import DataError, DivergedIterateError, DomainError, StructureError

# Frailty structures: none, scale-only, shape-only, independent pair,
# common (shape proportional to scale), bivariate normal pair.
NF = "NF"
SCF = "ScF"
SHF = "ShF"
IF = "IF"
CF = "CF"
BVNF = "BVNF"

STRUCTURES = (NF, SCF, SHF, IF, CF, BVNF)

DISPERSION_NAMES = {
    NF: (),
    SCF: ("sigma_beta",),
    SHF: ("sigma_alpha",),
    IF: ("sigma_beta", "sigma_alpha"),
    CF: ("sigma_beta", "phi"),
    BVNF: ("sigma_beta", "sigma_alpha", "rho"),
}

# Linear predictors beyond this magnitude overflow exp() or make the
# likelihood meaningless; the fitting loop treats this as "damp the step".
LINPRED_MAX = 700.0


def normalize_structure(name):
    """Map a structure name (case-insensitive) to its canonical form."""
    key = str(name).strip().lower()
    table = {s.lower(): s for s in STRUCTURES}
    if key not in table:
        raise DomainError(
            f"unknown frailty structure {name!r}; expected one of {STRUCTURES}"
        )
    return table[key]


@dataclass(frozen=True)
class FrailtySpec:
    """A frailty structure together with its dispersion parameters.

    Which dispersion fields are carried depends on the structure:

    ========= ======================================
    NF        none
    ScF       sigma_beta
    ShF       sigma_alpha
    IF        sigma_beta, sigma_alpha (rho fixed at 0)
    CF        sigma_beta, phi  (v_alpha = phi * v_beta)
    BVNF      sigma_beta, sigma_alpha, rho
    ========= ======================================
    """

    structure: str
    sigma_beta: float | None = None
    sigma_alpha: float | None = None
    rho: float | None = None
    phi: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "structure", normalize_structure(self.structure))
        s = self.structure
        want = DISPERSION_NAMES[s]
        for name in ("sigma_beta", "sigma_alpha", "rho", "phi"):
            val = getattr(self, name)
            if name in want:
                if val is None:
                    raise DomainError(f"structure {s} requires {name}")
                if not np.isfinite(val):
                    raise DomainError(f"{name} must be finite")
            elif val is not None:
                raise DomainError(f"structure {s} does not carry {name}")
        if self.sigma_beta is not None and self.sigma_beta <= 0:
            raise DomainError("sigma_beta must be positive")
        if self.sigma_alpha is not None and self.sigma_alpha <= 0:
            raise DomainError("sigma_alpha must be positive")
        if self.rho is not None and not (-1.0 < self.rho < 1.0):
            raise DomainError(
                "rho must lie strictly inside (-1, 1); use the CF structure "
                "for perfectly correlated frailties"
            )

    @property
    def has_scale_frailty(self):
        """True when v_beta is a free parameter block."""
        return self.structure in (SCF, IF, CF, BVNF)

    @property
    def has_shape_frailty(self):
        """True when v_alpha is a free parameter block (CF derives it)."""
        return self.structure in (SHF, IF, BVNF)

    @property
    def df_r(self):
        """Number of dispersion parameters governing the frailty law."""
        return {NF: 0, SCF: 1, SHF: 1, IF: 2, CF: 2, BVNF: 3}[self.structure]

    def dispersion_names(self):
        return DISPERSION_NAMES[self.structure]

    def dispersion_values(self):
        return tuple(getattr(self, n) for n in self.dispersion_names())

    def with_dispersion(self, values):
        """Return a copy with the carried dispersion parameters replaced."""
        names = self.dispersion_names()
        if len(values) != len(names):
            raise DomainError(
                f"structure {self.structure} carries {len(names)} dispersion "
                f"parameters, got {len(values)}"
            )
        return replace(self, **dict(zip(names, values)))


@dataclass(frozen=True)
class SurvivalRecord:
    """A single observation: cluster label, time, event status, covariates."""

    cluster: object
    time: float
    status: int
    covariates: tuple

    def __post_init__(self):
        if not (np.isfinite(self.time) and self.time > 0):
            raise DataError(f"time must be positive and finite, got {self.time}")
        if self.status not in (0, 1):
            raise DataError(f"status must be 0 or 1, got {self.status}")


class Dataset:
    """Clustered survival data held as column arrays.

    Attributes
    ----------
    clusters : ndarray of object, shape (n,)
        Cluster label per record, as given.
    time : ndarray of float, shape (n,)
    status : ndarray of int, shape (n,)
    covariates : ndarray of float, shape (n, p)
    covariate_names : list of str
    """

    def __init__(self, clusters, time, status, covariates, covariate_names):
        self.clusters = np.asarray(clusters, dtype=object)
        self.time = np.asarray(time, dtype=float)
        self.status = np.asarray(status, dtype=int)
        self.covariates = np.asarray(covariates, dtype=float)
        if self.covariates.ndim == 1:
            self.covariates = self.covariates.reshape(-1, 1)
        self.covariate_names = list(covariate_names)
        self._validate()

    def _validate(self):
        n = len(self.time)
        if n == 0:
            raise DataError("dataset is empty")
        if not (len(self.clusters) == len(self.status) == n):
            raise DataError("column lengths differ")
        if self.covariates.shape[0] != n:
            raise DataError("covariate rows do not match record count")
        if self.covariates.shape[1] != len(self.covariate_names):
            raise DataError("covariate names do not match covariate columns")
        if not np.all(np.isfinite(self.time)) or np.any(self.time <= 0):
            bad = int(np.argmax(~(np.isfinite(self.time) & (self.time > 0))))
            raise DataError("time must be positive and finite", row=bad + 1)
        if not np.all(np.isin(self.status, (0, 1))):
            bad = int(np.argmax(~np.isin(self.status, (0, 1))))
            raise DataError("status must be 0 or 1", row=bad + 1)
        if not np.all(np.isfinite(self.covariates)):
            bad = int(np.argmax(~np.all(np.isfinite(self.covariates), axis=1)))
            raise DataError("covariates must be finite", row=bad + 1)

    @property
    def n(self):
        return len(self.time)

    @property
    def n_covariates(self):
        return self.covariates.shape[1]

    def cluster_labels(self):
        """Distinct cluster labels in first-appearance order."""
        seen = {}
        for c in self.clusters:
            if c not in seen:
                seen[c] = len(seen)
        return list(seen)

    @classmethod
    def from_records(cls, records, covariate_names):
        records = list(records)
        if not records:
            raise DataError("dataset is empty")
        return cls(
            [r.cluster for r in records],
            [r.time for r in records],
            [r.status for r in records],
            [r.covariates for r in records],
            covariate_names,
        )

    @classmethod
    def read_csv(cls, path):
        """Read the `cluster,time,status,<covariate>...` CSV schema.

        The header row is required.  Parse failures raise
        :class:`DataError` carrying the 1-based data row number.
        """
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise DataError("file is empty; a header row is required") from None
            header = [h.strip() for h in header]
            if len(header) < 3 or [h.lower() for h in header[:3]] != [
                "cluster",
                "time",
                "status",
            ]:
                raise DataError(
                    "header must start with columns cluster,time,status; "
                    f"got {header[:3]}"
                )
            covariate_names = header[3:]
            clusters, times, statuses, rows = [], [], [], []
            for i, row in enumerate(reader, start=1):
                if not row or all(not c.strip() for c in row):
                    continue
                if len(row) != len(header):
                    raise DataError(
                        f"expected {len(header)} fields, got {len(row)}", row=i
                    )
                clusters.append(row[0].strip())
                try:
                    t = float(row[1])
                except ValueError:
                    raise DataError(f"time {row[1]!r} is not a number", row=i) from None
                if not (np.isfinite(t) and t > 0):
                    raise DataError(f"time must be positive, got {row[1]!r}", row=i)
                times.append(t)
                status_text = row[2].strip()
                if status_text not in ("0", "1"):
                    raise DataError(
                        f"status must be 0 or 1, got {status_text!r}", row=i
                    )
                statuses.append(int(status_text))
                try:
                    rows.append([float(c) for c in row[3:]])
                except ValueError:
                    raise DataError("covariates must be numeric", row=i) from None
        if not times:
            raise DataError("file contains a header but no data rows")
        covs = np.asarray(rows, dtype=float) if covariate_names else np.empty((len(times), 0))
        return cls(clusters, times, statuses, covs, covariate_names)


class ModelDesign:
    """Design matrices plus the response columns the likelihood needs.

    ``X_beta``/``X_alpha`` carry a leading intercept column; ``cluster_index``
    maps each record to a cluster in first-appearance order.  The dense
    incidence matrix Z is available as a property but the likelihood code
    works with the index vector directly.
    """

    def __init__(self, X_beta, X_alpha, cluster_index, cluster_labels,
                 time, status, scale_names, shape_names, covariate_values):
        self.X_beta = np.ascontiguousarray(X_beta, dtype=float)
        self.X_alpha = np.ascontiguousarray(X_alpha, dtype=float)
        self.cluster_index = np.asarray(cluster_index, dtype=np.intp)
        self.cluster_labels = list(cluster_labels)
        self.time = np.asarray(time, dtype=float)
        self.status = np.asarray(status, dtype=float)
        self.log_time = np.log(self.time)
        self.scale_names = list(scale_names)
        self.shape_names = list(shape_names)
        # raw covariate columns by name, for empirical modes in reporting
        self.covariate_values = dict(covariate_values)
        self.q = len(self.cluster_labels)
        self.n = len(self.time)
        self.cluster_sizes = np.bincount(self.cluster_index, minlength=self.q)

    @property
    def Z(self):
        """Dense n x q cluster incidence matrix (one 1 per row)."""
        Z = np.zeros((self.n, self.q))
        Z[np.arange(self.n), self.cluster_index] = 1.0
        return Z

    @property
    def m_beta(self):
        return self.X_beta.shape[1]

    @property
    def m_alpha(self):
        return self.X_alpha.shape[1]


def build_design(dataset, scale_covariates=None, shape_covariates=None):
    """Build the scale/shape design matrices and cluster incidence.

    Both covariate lists default to all covariates in the dataset; the
    scale and shape components may use different subsets.  Cluster
    ordering is first appearance, which makes the design (and hence the
    reported frailty labels) reproducible for a given file.
    """
    if scale_covariates is None:
        scale_covariates = list(dataset.covariate_names)
    if shape_covariates is None:
        shape_covariates = list(dataset.covariate_names)

    name_to_col = {name: j for j, name in enumerate(dataset.covariate_names)}
    for name in list(scale_covariates) + list(shape_covariates):
        if name not in name_to_col:
            raise DataError(
                f"unknown covariate {name!r}; dataset has {dataset.covariate_names}"
            )

    def with_intercept(names):
        cols = [np.ones(dataset.n)]
        cols += [dataset.covariates[:, name_to_col[v]] for v in names]
        return np.column_stack(cols)

    labels = dataset.cluster_labels()
    if len(labels) == 1:
        warnings.warn(
            "dataset has a single cluster; frailty variance is unidentifiable",
            stacklevel=2,
        )
    index_of = {lab: i for i, lab in enumerate(labels)}
    cluster_index = np.fromiter(
        (index_of[c] for c in dataset.clusters), dtype=np.intp, count=dataset.n
    )

    covariate_values = {
        name: dataset.covariates[:, j].copy() for name, j in name_to_col.items()
    }
    return ModelDesign(
        X_beta=with_intercept(scale_covariates),
        X_alpha=with_intercept(shape_covariates),
        cluster_index=cluster_index,
        cluster_labels=labels,
        time=dataset.time,
        status=dataset.status,
        scale_names=["(Intercept)"] + list(scale_covariates),
        shape_names=["(Intercept)"] + list(shape_covariates),
        covariate_values=covariate_values,
    )


def expand_random_effects(spec, q, v_beta=None, v_alpha=None):
    """Materialize full-length frailty vectors for a structure.

    Absent components are fixed at zero; under CF the shape effect is
    phi * v_beta regardless of any supplied v_alpha.
    """
    vb = np.zeros(q) if v_beta is None else np.asarray(v_beta, dtype=float)
    va = np.zeros(q) if v_alpha is None else np.asarray(v_alpha, dtype=float)
    if vb.shape != (q,) or va.shape != (q,):
        raise DomainError(f"random-effect vectors must have length q={q}")
    if not spec.has_scale_frailty:
        if np.any(vb != 0.0):
            raise StructureError(
                f"v_beta is structurally absent under {spec.structure}"
            )
        vb = np.zeros(q)
    if spec.structure == CF:
        va = spec.phi * vb
    elif not spec.has_shape_frailty:
        if np.any(va != 0.0):
            raise StructureError(
                f"v_alpha is structurally absent under {spec.structure}"
            )
        va = np.zeros(q)
    return vb, va


def linear_predictors(design, beta, alpha, v_beta=None, v_alpha=None):
    """Per-record distributional parameters (tau, gamma).

    tau = exp(X_beta @ beta + v_beta[cluster]) and analogously for gamma.
    A linear predictor beyond +-700 raises :class:`DivergedIterateError`
    so the fitting loop can damp the step instead of propagating inf.
    """
    beta = np.asarray(beta, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    if beta.shape != (design.m_beta,) or alpha.shape != (design.m_alpha,):
        raise DomainError("coefficient vector lengths do not match the design")
    idx = design.cluster_index
    lp_beta = design.X_beta @ beta
    lp_alpha = design.X_alpha @ alpha
    if v_beta is not None:
        lp_beta = lp_beta + np.asarray(v_beta, dtype=float)[idx]
    if v_alpha is not None:
        lp_alpha = lp_alpha + np.asarray(v_alpha, dtype=float)[idx]
    bound = LINPRED_MAX
    if np.any(np.abs(lp_beta) > bound) or np.any(np.abs(lp_alpha) > bound):
        raise DivergedIterateError(
            f"linear predictor magnitude exceeded {bound}; iterate diverged"
        )
    return np.exp(lp_beta), np.exp(lp_alpha)
