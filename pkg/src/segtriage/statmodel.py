"""Uncertainty-quality statistics.

Quantifies how class-wise uncertainties relate to segmentation quality:
Bravais-Pearson correlations per class, and an ordinary-least-squares
multiple regression of mean Dice on the class uncertainties, with full
inference statistics and backward elimination of insignificant
predictors.

Student-t tail probabilities come from the regularized incomplete beta
function (no normal approximation; fit samples can be as small as a few
dozen images).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict

import numpy as np
from scipy.special import betainc

from .metrics import DiceReport
from .uncertainty import ClassUncertaintyVector

__all__ = [
    "UndefinedCorrelationError",
    "SingularDesignError",
    "InsufficientDataError",
    "CorrelationReport",
    "QualityModel",
    "pearson",
    "correlation_report",
    "fit_quality_model",
    "predict_quality",
    "clamp_unit",
    "student_t_cdf",
    "student_t_two_sided_p",
    "f_survival",
    "significance_stars",
    "model_to_json",
    "model_from_json",
    "format_regression_table",
    "format_correlation_table",
]

MODEL_FORMAT = "segtriage-quality-model"
MODEL_FORMAT_VERSION = 1


class UndefinedCorrelationError(ValueError):
    """Correlation undefined: a series has zero variance."""


class SingularDesignError(ValueError):
    """Design matrix is rank deficient; coefficients are not identifiable."""


class InsufficientDataError(ValueError):
    """Too few observations for the requested fit."""


def student_t_cdf(x: float, df: float) -> float:
    """CDF of Student's t with ``df`` degrees of freedom.

    P(T <= x) = 1 - I_{df/(df+x^2)}(df/2, 1/2) / 2 for x >= 0, via the
    regularized incomplete beta function I.
    """
    if df <= 0:
        raise ValueError("degrees of freedom must be positive")
    if x != x:
        raise ValueError("x must not be NaN")
    tail = 0.5 * betainc(df / 2.0, 0.5, df / (df + x * x)) if math.isfinite(x) else 0.0
    return 1.0 - tail if x >= 0 else tail


def student_t_two_sided_p(t: float, df: float) -> float:
    """Two-sided p-value P(|T| >= |t|)."""
    if df <= 0:
        raise ValueError("degrees of freedom must be positive")
    if t != t:
        raise ValueError("t must not be NaN")
    if not math.isfinite(t):
        return 0.0
    return float(betainc(df / 2.0, 0.5, df / (df + t * t)))


def f_survival(f: float, df1: float, df2: float) -> float:
    """P(F >= f) for the F distribution with (df1, df2) degrees of freedom."""
    if df1 <= 0 or df2 <= 0:
        raise ValueError("degrees of freedom must be positive")
    if f != f:
        raise ValueError("f must not be NaN")
    if not math.isfinite(f):
        return 0.0
    if f <= 0:
        return 1.0
    return float(betainc(df2 / 2.0, df1 / 2.0, df2 / (df2 + df1 * f)))


def pearson(x, y) -> float:
    """Sample Bravais-Pearson correlation coefficient of two series."""
    xs = np.asarray(x, dtype=np.float64)
    ys = np.asarray(y, dtype=np.float64)
    if xs.ndim != 1 or ys.ndim != 1 or xs.shape != ys.shape:
        raise ValueError("x and y must be 1-D series of equal length")
    n = xs.size
    if n < 3:
        raise InsufficientDataError(f"need at least 3 observations, got {n}")
    dx = xs - xs.mean()
    dy = ys - ys.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedCorrelationError("a series has zero variance")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


@dataclass(frozen=True)
class CorrelationReport:
    """Per-class correlations of (U_c, Dice_c) plus the image-level
    correlation of (mean entropy, mean Dice).

    Entries are None where fewer than 3 usable pairs exist or a series is
    constant. ``per_class_n`` records how many pairs each entry used.
    """

    per_class_r: tuple[float | None, ...]
    image_level_r: float | None
    n: int
    per_class_n: tuple[int, ...]


def correlation_report(
    corpus: list[tuple[ClassUncertaintyVector, DiceReport, float]],
) -> CorrelationReport:
    """Correlate class uncertainties with per-class Dice over a corpus.

    ``corpus`` holds one (class uncertainties, Dice report, image mean
    entropy) triple per image. Pairs where a class is absent from the
    prediction are dropped for that class.
    """
    n = len(corpus)
    if n < 3:
        raise InsufficientDataError(f"need at least 3 images, got {n}")
    num_classes = corpus[0][0].num_classes
    per_r: list[float | None] = []
    per_n: list[int] = []
    for c in range(num_classes):
        xs = [cu.u[c] for cu, _, _ in corpus if cu.u[c] is not None]
        ys = [
            float(dr.per_class[c])
            for cu, dr, _ in corpus
            if cu.u[c] is not None
        ]
        per_n.append(len(xs))
        if len(xs) < 3:
            per_r.append(None)
            continue
        try:
            per_r.append(pearson(xs, ys))
        except UndefinedCorrelationError:
            per_r.append(None)
    try:
        image_r = pearson(
            [me for _, _, me in corpus], [dr.mean_dice for _, dr, _ in corpus]
        )
    except UndefinedCorrelationError:
        image_r = None
    return CorrelationReport(
        per_class_r=tuple(per_r),
        image_level_r=image_r,
        n=n,
        per_class_n=tuple(per_n),
    )


@dataclass(frozen=True)
class QualityModel:
    """Fitted OLS estimator of per-image mean Dice from class uncertainties.

    ``std_errors``/``t_values``/``p_values`` are aligned as
    [intercept, *included_predictors]. ``imputation_means`` records, per
    class, the corpus mean used whenever a class is absent from a
    prediction, both during the fit and in later predictions.
    """

    num_classes: int
    included_predictors: tuple[int, ...]
    intercept: float
    coefficients: tuple[float, ...]
    std_errors: tuple[float, ...]
    t_values: tuple[float, ...]
    p_values: tuple[float, ...]
    r_squared: float
    adj_r_squared: float
    residual_std_error: float
    f_statistic: float
    f_pvalue: float
    n_observations: int
    imputation_means: tuple[float, ...]
    alpha: float


@dataclass(frozen=True)
class _OlsFit:
    beta: np.ndarray
    std_errors: np.ndarray
    t_values: np.ndarray
    p_values: np.ndarray
    r_squared: float
    adj_r_squared: float
    residual_std_error: float
    f_statistic: float
    f_pvalue: float


def _fit_ols(X: np.ndarray, y: np.ndarray) -> _OlsFit:
    """OLS with inference statistics. X includes the intercept column."""
    n, p = X.shape
    if n < p + 1:
        raise InsufficientDataError(
            f"need more than {p} observations for {p} parameters, got {n}"
        )
    if np.linalg.matrix_rank(X) < p:
        raise SingularDesignError("design matrix is rank deficient")
    beta, _, _, _ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ beta
    rss = float(resid @ resid)
    df = n - p
    sigma2 = rss / df
    cov = sigma2 * np.linalg.inv(X.T @ X)
    se = np.sqrt(np.diag(cov))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = beta / se
    # 0/0 only on an exact fit with an exactly-zero coefficient
    t = np.where(np.isnan(t), 0.0, t)
    pvals = np.array([student_t_two_sided_p(float(tv), df) for tv in t])
    tss = float(((y - y.mean()) ** 2).sum())
    if tss == 0.0:
        raise InsufficientDataError("response has zero variance")
    r2 = 1.0 - rss / tss
    adj = 1.0 - (1.0 - r2) * (n - 1) / df
    k = p - 1
    if k >= 1:
        if r2 < 1.0:
            f_stat = (r2 / k) / ((1.0 - r2) / df)
        else:
            f_stat = math.inf
        f_p = f_survival(f_stat, k, df)
    else:
        f_stat = math.nan
        f_p = math.nan
    return _OlsFit(
        beta=beta,
        std_errors=se,
        t_values=t,
        p_values=pvals,
        r_squared=r2,
        adj_r_squared=adj,
        residual_std_error=math.sqrt(sigma2),
        f_statistic=f_stat,
        f_pvalue=f_p,
    )


def _imputed_design(
    corpus: list[tuple[ClassUncertaintyVector, float]], num_classes: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Predictor matrix with per-class mean imputation for absent entries."""
    n = len(corpus)
    present_sum = np.zeros(num_classes)
    present_n = np.zeros(num_classes, dtype=np.int64)
    for cu, _ in corpus:
        for c, val in enumerate(cu.u):
            if val is not None:
                present_sum[c] += val
                present_n[c] += 1
    if (present_n == 0).any():
        missing = np.flatnonzero(present_n == 0).tolist()
        raise SingularDesignError(
            f"class(es) {missing} are absent from every prediction; "
            "their uncertainty column cannot be estimated"
        )
    means = present_sum / present_n
    U = np.empty((n, num_classes))
    for i, (cu, _) in enumerate(corpus):
        for c, val in enumerate(cu.u):
            U[i, c] = means[c] if val is None else val
    y = np.array([d for _, d in corpus], dtype=np.float64)
    return U, y, means


def fit_quality_model(
    corpus: list[tuple[ClassUncertaintyVector, float]], alpha: float = 0.05
) -> QualityModel:
    """Fit mean Dice on all class uncertainties, then backward-eliminate.

    Starting from all C predictors (absent entries imputed with the
    corpus mean of present values), repeatedly drops the predictor with
    the largest p-value >= ``alpha`` and refits, one predictor per step,
    until every remaining predictor is significant. The intercept is
    never dropped.
    """
    if not corpus:
        raise InsufficientDataError("empty corpus")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be in (0, 1)")
    num_classes = corpus[0][0].num_classes
    U, y, means = _imputed_design(corpus, num_classes)
    n = len(corpus)
    included = list(range(num_classes))
    while True:
        X = np.column_stack([np.ones(n), U[:, included]]) if included else np.ones((n, 1))
        fit = _fit_ols(X, y)
        if not included:
            break
        predictor_p = fit.p_values[1:]
        worst = int(np.argmax(predictor_p))
        if predictor_p[worst] >= alpha:
            del included[worst]
            continue
        break
    return QualityModel(
        num_classes=num_classes,
        included_predictors=tuple(included),
        intercept=float(fit.beta[0]),
        coefficients=tuple(float(b) for b in fit.beta[1:]),
        std_errors=tuple(float(v) for v in fit.std_errors),
        t_values=tuple(float(v) for v in fit.t_values),
        p_values=tuple(float(v) for v in fit.p_values),
        r_squared=fit.r_squared,
        adj_r_squared=fit.adj_r_squared,
        residual_std_error=fit.residual_std_error,
        f_statistic=fit.f_statistic,
        f_pvalue=fit.f_pvalue,
        n_observations=n,
        imputation_means=tuple(float(m) for m in means),
        alpha=alpha,
    )


def predict_quality(model: QualityModel, u: ClassUncertaintyVector) -> float:
    """Estimated mean Dice for one image, unclamped.

    Absent classes are filled from the model's recorded imputation means.
    Clamping to [0,1] is a display concern; ranking downstream is
    order-preserving either way.
    """
    if u.num_classes != model.num_classes:
        raise ValueError(
            f"expected {model.num_classes} classes, got {u.num_classes}"
        )
    value = model.intercept
    for coef, c in zip(model.coefficients, model.included_predictors):
        uc = u.u[c]
        value += coef * (model.imputation_means[c] if uc is None else uc)
    return float(value)


def clamp_unit(x: float) -> float:
    """Clamp to [0,1] for display."""
    return min(1.0, max(0.0, x))


def significance_stars(p: float) -> str:
    """Conventional stars: * p<0.1, ** p<0.05, *** p<0.01."""
    if p != p:
        return ""
    if p < 0.01:
        return "***"
    if p < 0.05:
        return "**"
    if p < 0.1:
        return "*"
    return ""


def model_to_json(model: QualityModel) -> str:
    doc = {"format": MODEL_FORMAT, "format_version": MODEL_FORMAT_VERSION}
    doc.update(asdict(model))
    return json.dumps(doc, indent=2, sort_keys=True)


def model_from_json(text: str) -> QualityModel:
    doc = json.loads(text)
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError(f"not a quality model document: {doc.get('format')!r}")
    if doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model version {doc.get('format_version')!r}")
    return QualityModel(
        num_classes=int(doc["num_classes"]),
        included_predictors=tuple(int(i) for i in doc["included_predictors"]),
        intercept=float(doc["intercept"]),
        coefficients=tuple(float(v) for v in doc["coefficients"]),
        std_errors=tuple(float(v) for v in doc["std_errors"]),
        t_values=tuple(float(v) for v in doc["t_values"]),
        p_values=tuple(float(v) for v in doc["p_values"]),
        r_squared=float(doc["r_squared"]),
        adj_r_squared=float(doc["adj_r_squared"]),
        residual_std_error=float(doc["residual_std_error"]),
        f_statistic=float(doc["f_statistic"]),
        f_pvalue=float(doc["f_pvalue"]),
        n_observations=int(doc["n_observations"]),
        imputation_means=tuple(float(v) for v in doc["imputation_means"]),
        alpha=float(doc["alpha"]),
    )


def format_regression_table(model: QualityModel, class_names: list[str]) -> str:
    """Aligned text table of the fitted model with significance stars."""
    if len(class_names) != model.num_classes:
        raise ValueError("class_names length must match model.num_classes")
    rows: list[tuple[str, str]] = []
    rows.append(
        ("const", f"{model.intercept:.3f}{significance_stars(model.p_values[0])}")
    )
    coef_by_class = dict(zip(model.included_predictors, model.coefficients))
    p_by_class = dict(zip(model.included_predictors, model.p_values[1:]))
    for c, name in enumerate(class_names):
        if c in coef_by_class:
            rows.append(
                (name, f"{coef_by_class[c]:.3f}{significance_stars(p_by_class[c])}")
            )
        else:
            rows.append((name, ""))
    rows.append(("", ""))
    rows.append(("Observations", f"{model.n_observations}"))
    rows.append(("R2", f"{model.r_squared:.3f}"))
    rows.append(("Adjusted R2", f"{model.adj_r_squared:.3f}"))
    rows.append(("Residual Std. Error", f"{model.residual_std_error:.3f}"))
    if model.f_statistic == model.f_statistic:
        rows.append(
            (
                "F Statistic",
                f"{model.f_statistic:.3f}{significance_stars(model.f_pvalue)}",
            )
        )
    width = max(len(name) for name, _ in rows)
    lines = ["Dependent variable: mean Dice", "-" * (width + 14)]
    for name, value in rows:
        lines.append(f"{name:<{width}}  {value}" if name or value else "")
    lines.append("-" * (width + 14))
    lines.append("Note: * p<0.1; ** p<0.05; *** p<0.01")
    return "\n".join(lines)


def format_correlation_table(report: CorrelationReport, class_names: list[str]) -> str:
    """Aligned text table of per-class correlations."""
    if len(class_names) != len(report.per_class_r):
        raise ValueError("class_names length must match report")
    width = max(len(n) for n in class_names + ["image level (mean entropy)"])
    lines = [
        f"Correlation of class uncertainty vs per-class Dice (n={report.n})",
        "-" * (width + 14),
    ]
    for name, r, n_used in zip(class_names, report.per_class_r, report.per_class_n):
        shown = "n/a" if r is None else f"{r:+.3f}"
        lines.append(f"{name:<{width}}  {shown}  (pairs: {n_used})")
    image = "n/a" if report.image_level_r is None else f"{report.image_level_r:+.3f}"
    lines.append(f"{'image level (mean entropy)':<{width}}  {image}")
    lines.append("-" * (width + 14))
    return "\n".join(lines)
