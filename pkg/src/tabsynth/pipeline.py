"""Schema-driven, invertible preprocessing for mixed-type tables.

Numeric columns pass through a fixed chain: missing indicator, median
imputation, Box-Cox (skewed columns only), then standard or min-max scaling.
Categorical columns, and a binary target, become one-hot groups in a separate
condition matrix ``y``.
"""

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import ValidationError
from .table import RawTable, atomic_write_text

KINDS = ("continuous", "discrete", "categorical")
TARGET_ROLES = ("none", "binary_target", "continuous_target")
MISSING_CATEGORY = "<missing>"
DISCRETE_MAX_DISTINCT = 25
BOXCOX_MIN_SAMPLES = 20
BOXCOX_BOUNDS = (-5.0, 5.0)
PIPELINE_FORMAT_VERSION = 1


# -- schema -----------------------------------------------------------------

@dataclass
class ColumnSchema:
    name: str
    kind: str
    target: str = "none"
    sentinels: tuple = ()
    vocabulary: tuple = ()
    degenerate: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.target not in TARGET_ROLES:
            raise ValidationError(f"column {self.name!r}: unknown target role {self.target!r}")
        self.sentinels = tuple(str(s) for s in self.sentinels)
        self.vocabulary = tuple(str(v) for v in self.vocabulary)
        if self.kind == "categorical" and not self.vocabulary and not self.degenerate:
            raise ValidationError(f"column {self.name!r}: categorical vocabulary is empty")
        if self.target == "continuous_target" and self.kind == "categorical":
            raise ValidationError(f"column {self.name!r}: continuous target cannot be categorical")

    @property
    def is_numeric(self):
        return self.kind != "categorical" and self.target != "binary_target"

    def to_dict(self):
        return {"name": self.name, "kind": self.kind, "target": self.target,
                "sentinels": list(self.sentinels), "vocabulary": list(self.vocabulary),
                "degenerate": self.degenerate}


@dataclass
class Schema:
    columns: list

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise ValidationError("schema has duplicate column names")
        if sum(c.target != "none" for c in self.columns) > 1:
            raise ValidationError("at most one column may carry a target role")

    @property
    def names(self):
        return [c.name for c in self.columns]

    def __getitem__(self, name):
        for c in self.columns:
            if c.name == name:
                return c
        raise KeyError(name)

    @property
    def target(self):
        for c in self.columns:
            if c.target != "none":
                return c
        return None

    def check_table(self, table):
        if table.columns != self.names:
            raise ValidationError(
                f"table columns {table.columns} do not match schema columns {self.names}"
            )

    def apply_sentinels(self, table):
        """Copy of ``table`` with declared sentinel cells replaced by missing."""
        data = {}
        for name in table.columns:
            col = table[name]
            try:
                sentinels = set(self[name].sentinels)
            except KeyError:
                sentinels = set()
            if sentinels:
                col = col.copy()
                col[np.isin(col, list(sentinels))] = None
            data[name] = col
        return RawTable(table.columns, data)

    def to_dict(self):
        return {"columns": [c.to_dict() for c in self.columns]}

    @classmethod
    def from_dict(cls, d):
        try:
            cols = [ColumnSchema(**c) for c in d["columns"]]
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed schema: {exc}") from exc
        return cls(cols)

    def save(self, path):
        atomic_write_text(path, json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path):
        try:
            with open(path, encoding="utf-8") as fh:
                return cls.from_dict(json.load(fh))
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read schema {path}: {exc}") from exc


def _parse_floats(values, column):
    out = np.empty(len(values))
    for i, v in enumerate(values):
        try:
            out[i] = float(v)
        except (TypeError, ValueError):
            raise ValidationError(
                f"column {column!r}: row {i} value {v!r} is not numeric"
            ) from None
    if not np.all(np.isfinite(out)):
        raise ValidationError(f"column {column!r}: non-finite numeric value")
    return out


def _is_number(s):
    try:
        return np.isfinite(float(s))
    except (TypeError, ValueError):
        return False


def infer_schema(table, hints=None):
    """Guess a schema from cell contents; ``hints`` maps column names to field overrides."""
    if table.n_rows == 0 or not table.columns:
        raise ValidationError("cannot infer a schema from an empty table")
    hints = dict(hints or {})
    unknown = set(hints) - set(table.columns)
    if unknown:
        raise ValidationError(f"hints name unknown columns: {sorted(unknown)}")
    columns = []
    for name in table.columns:
        hint = dict(hints.get(name, {}))
        sentinels = set(hint.get("sentinels", ()))
        present = [v for v in table[name] if v is not None and v not in sentinels]
        fields = {"name": name, "sentinels": tuple(sorted(sentinels))}
        if not present:
            fields.update(kind="continuous", degenerate=True)
        elif all(_is_number(v) for v in present):
            vals = np.array([float(v) for v in present])
            distinct = np.unique(vals)
            integral = np.all(vals == np.round(vals))
            fields["kind"] = ("discrete" if integral and len(distinct) <= DISCRETE_MAX_DISTINCT
                              else "continuous")
        else:
            fields.update(kind="categorical", vocabulary=tuple(sorted(set(present))))
        fields.update(hint)
        if fields.get("target") == "binary_target" and not fields.get("vocabulary"):
            fields["vocabulary"] = tuple(sorted(set(present), key=_category_sort_key))
        columns.append(ColumnSchema(**fields))
    return Schema(columns)


def _category_sort_key(v):
    return (0, float(v), v) if _is_number(v) else (1, 0.0, v)


# -- Box-Cox ------------------------------------------------------------------

def boxcox_transform(x, lam):
    """``(x**lam - 1) / lam``, or ``log(x)`` at ``lam == 0``; ``x`` must be positive."""
    logx = np.log(np.asarray(x, dtype=np.float64))
    if lam == 0:
        return logx
    return np.expm1(lam * logx) / lam


def boxcox_inverse(v, lam):
    """Inverse Box-Cox. Returns ``(x, violated)``; violated entries (``1 + lam*v <= 0``) are NaN."""
    v = np.asarray(v, dtype=np.float64)
    if lam == 0:
        return np.exp(v), np.zeros(v.shape, dtype=bool)
    base = lam * v
    violated = base <= -1.0
    with np.errstate(invalid="ignore", over="ignore"):
        x = np.exp(np.log1p(np.where(violated, 0.0, base)) / lam)
    x[violated] = np.nan
    return x, violated


def boxcox_llf(x, lam):
    """Profile log-likelihood of ``lam`` for positive data ``x``."""
    x = np.asarray(x, dtype=np.float64)
    with np.errstate(over="ignore", invalid="ignore"):
        var = np.var(boxcox_transform(x, lam))
    if not np.isfinite(var) or var <= 0:
        return -np.inf
    return -0.5 * len(x) * np.log(var) + (lam - 1.0) * np.sum(np.log(x))


def _golden_max(fn, lo, hi, tol):
    inv_phi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c, d = b - inv_phi * (b - a), a + inv_phi * (b - a)
    fc, fd = fn(c), fn(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = fn(d)
    return 0.5 * (a + b)


def boxcox_lambda(values, tol=1e-3):
    """Maximum-likelihood Box-Cox exponent via golden-section search on [-5, 5]."""
    x = np.asarray(values, dtype=np.float64)
    if x.ndim != 1 or len(x) < BOXCOX_MIN_SAMPLES:
        raise ValidationError(f"Box-Cox needs at least {BOXCOX_MIN_SAMPLES} values")
    if np.any(x <= 0) or not np.all(np.isfinite(x)):
        raise ValidationError("Box-Cox needs finite positive values")
    if np.ptp(x) == 0:
        raise ValidationError("Box-Cox is undefined for constant data")
    return float(_golden_max(lambda lam: boxcox_llf(x, lam), *BOXCOX_BOUNDS, tol))


def skewness(x):
    x = np.asarray(x, dtype=np.float64)
    d = x - x.mean()
    m2 = np.mean(d * d)
    if m2 == 0:
        return 0.0
    return float(np.mean(d ** 3) / m2 ** 1.5)


# -- fitted state -------------------------------------------------------------

@dataclass
class NumericColumn:
    name: str
    kind: str
    has_indicator: bool
    impute_value: float
    boxcox: dict = None            # {"lambda": float, "shift": float} or None
    scaler: str = "standard"
    offset: float = 0.0            # scaled = (value - offset) / scale
    scale: float = 1.0
    unit_scale_flag: bool = False  # zero variance after imputation
    data_min: float = 0.0
    data_max: float = 0.0
    degenerate: bool = False


@dataclass
class CategoricalColumn:
    name: str
    categories: list
    most_frequent: str
    is_target: bool = False

    @property
    def width(self):
        return len(self.categories)


@dataclass
class EncodedBatch:
    """Numeric block ``x`` and one-hot condition block ``y`` for the same rows."""

    x: np.ndarray
    y: np.ndarray
    report: dict = field(default_factory=dict)

    @property
    def n_rows(self):
        return self.x.shape[0]

    def joined(self):
        return np.hstack([self.x, self.y])


@dataclass
class FittedPipeline:
    schema: Schema
    numeric: list
    categorical: list
    scaler: str = "standard"
    use_boxcox: bool = True
    skew_threshold: float = 1.0
    strict: bool = True

    # column layout -----------------------------------------------------------

    @property
    def x_columns(self):
        cols = []
        for c in self.numeric:
            if c.degenerate:
                continue
            cols.append(c.name)
            if c.has_indicator:
                cols.append(f"{c.name}__missing")
        return cols

    @property
    def x_width(self):
        return len(self.x_columns)

    @property
    def y_groups(self):
        """List of ``(column name, start, stop)`` slices into ``y``."""
        groups, start = [], 0
        for c in self.categorical:
            groups.append((c.name, start, start + c.width))
            start += c.width
        return groups

    @property
    def y_width(self):
        return sum(c.width for c in self.categorical)

    @property
    def target_group(self):
        for (name, start, stop), c in zip(self.y_groups, self.categorical):
            if c.is_target:
                return name, start, stop
        return None

    # encoding ----------------------------------------------------------------

    def _numeric_value_path(self, c, v):
        if c.boxcox is not None:
            v = boxcox_transform(v + c.boxcox["shift"], c.boxcox["lambda"])
        return (v - c.offset) / c.scale

    def transform(self, table):
        self.schema.check_table(table)
        table = self.schema.apply_sentinels(table)
        n = table.n_rows
        xs, report = [], {"unseen_categories": {}}
        for c in self.numeric:
            if c.degenerate:
                continue
            cells = table[c.name]
            missing = np.array([v is None for v in cells], dtype=bool)
            vals = np.full(n, c.impute_value)
            if (~missing).any():
                vals[~missing] = _parse_floats(cells[~missing], c.name)
            xs.append(self._numeric_value_path(c, vals))
            if c.has_indicator:
                xs.append(missing.astype(np.float64))
        ys = []
        for c in self.categorical:
            cells = table[c.name]
            slot = {cat: i for i, cat in enumerate(c.categories)}
            onehot = np.zeros((n, c.width))
            unseen = 0
            for i, v in enumerate(cells):
                key = MISSING_CATEGORY if v is None else v
                j = slot.get(key)
                if j is None:
                    if self.strict:
                        raise ValidationError(
                            f"column {c.name!r}: unseen category {key!r}"
                        )
                    j = slot[c.most_frequent]
                    unseen += 1
                onehot[i, j] = 1.0
            if unseen:
                report["unseen_categories"][c.name] = unseen
                warnings.warn(f"column {c.name!r}: {unseen} unseen categories mapped to "
                              f"{c.most_frequent!r}")
            ys.append(onehot)
        x = np.column_stack(xs) if xs else np.zeros((n, 0))
        y = np.hstack(ys) if ys else np.zeros((n, 0))
        return EncodedBatch(x, y, report)

    def inverse_transform(self, batch, return_report=False):
        x = np.asarray(batch.x, dtype=np.float64)
        y = np.asarray(batch.y, dtype=np.float64)
        if x.shape[1] != self.x_width or y.shape[1] != self.y_width:
            raise ValidationError(
                f"batch widths ({x.shape[1]}, {y.shape[1]}) do not match pipeline "
                f"({self.x_width}, {self.y_width})"
            )
        n = x.shape[0]
        out, clamped = {}, {}
        j = 0
        for c in self.numeric:
            if c.degenerate:
                out[c.name] = [None] * n
                continue
            v = x[:, j] * c.scale + c.offset
            j += 1
            if c.boxcox is not None:
                v, bad = boxcox_inverse(v, c.boxcox["lambda"])
                v = v - c.boxcox["shift"]
                if bad.any():
                    # λ>0 leaves the domain below, λ<0 above
                    v[bad] = c.data_min if c.boxcox["lambda"] > 0 else c.data_max
                    clamped[c.name] = int(bad.sum())
            missing = np.zeros(n, dtype=bool)
            if c.has_indicator:
                missing = x[:, j] > 0.5
                j += 1
            if c.kind == "discrete":
                out[c.name] = [None if m else str(int(r)) for m, r in zip(missing, np.rint(v))]
            else:
                out[c.name] = [None if m else repr(float(r)) for m, r in zip(missing, v)]
        for (name, start, stop), c in zip(self.y_groups, self.categorical):
            idx = np.argmax(y[:, start:stop], axis=1) if n else np.zeros(0, dtype=int)
            cats = np.array(c.categories, dtype=object)[idx]
            out[name] = [None if v == MISSING_CATEGORY else v for v in cats]
        table = RawTable(self.schema.names, {k: out[k] for k in self.schema.names})
        if return_report:
            return table, {"boxcox_clamped": clamped}
        return table

    # persistence -------------------------------------------------------------

    def to_dict(self):
        return {
            "format": "tabsynth-pipeline",
            "version": PIPELINE_FORMAT_VERSION,
            "schema": self.schema.to_dict(),
            "options": {"scaler": self.scaler, "boxcox": self.use_boxcox,
                        "skew_threshold": self.skew_threshold, "strict": self.strict},
            "numeric": [vars(c) for c in self.numeric],
            "categorical": [vars(c) for c in self.categorical],
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != "tabsynth-pipeline":
            raise ValidationError("not a pipeline artifact")
        if d.get("version") != PIPELINE_FORMAT_VERSION:
            raise ValidationError(f"unsupported pipeline version {d.get('version')!r}")
        opts = d["options"]
        return cls(Schema.from_dict(d["schema"]),
                   [NumericColumn(**c) for c in d["numeric"]],
                   [CategoricalColumn(**c) for c in d["categorical"]],
                   scaler=opts["scaler"], use_boxcox=opts["boxcox"],
                   skew_threshold=opts["skew_threshold"], strict=opts["strict"])

    def save(self, path):
        atomic_write_text(path, json.dumps(self.to_dict()) + "\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _fit_numeric(col, cells, scaler, use_boxcox, skew_threshold):
    missing = np.array([v is None for v in cells], dtype=bool)
    if missing.all():
        return NumericColumn(col.name, col.kind, False, 0.0, degenerate=True)
    observed = _parse_floats(cells[~missing], col.name)
    impute = float(np.median(observed))
    vals = np.where(missing, impute, 0.0)
    vals[~missing] = observed
    fitted = NumericColumn(col.name, col.kind, bool(missing.any()), impute,
                           scaler=scaler, data_min=float(observed.min()),
                           data_max=float(observed.max()))
    if (use_boxcox and len(vals) >= BOXCOX_MIN_SAMPLES and np.ptp(vals) > 0
            and abs(skewness(vals)) > skew_threshold):
        lo = vals.min()
        shift = 1e-6 - lo if lo <= 0 else 0.0
        try:
            lam = boxcox_lambda(vals + shift)
        except ValidationError:
            lam = None  # shift collapsed the column to a constant
        if lam is not None:
            fitted.boxcox = {"lambda": lam, "shift": float(shift)}
            vals = boxcox_transform(vals + shift, lam)
    if scaler == "standard":
        offset, scale = float(vals.mean()), float(vals.std())
    else:
        offset, scale = float(vals.min()), float(np.ptp(vals))
    if scale == 0 or not np.isfinite(scale):
        scale, fitted.unit_scale_flag = 1.0, True
    fitted.offset, fitted.scale = offset, scale
    return fitted


def _fit_categorical(col, cells, strict):
    cats = list(col.vocabulary)
    keys = [MISSING_CATEGORY if v is None else v for v in cells]
    values, counts = np.unique(np.array(keys, dtype=object), return_counts=True)
    extra = [v for v in values if v not in cats]
    if MISSING_CATEGORY in extra:
        cats.append(MISSING_CATEGORY)
        extra.remove(MISSING_CATEGORY)
    if extra:
        if strict:
            raise ValidationError(f"column {col.name!r}: values {extra} not in vocabulary")
        warnings.warn(f"column {col.name!r}: values {extra} outside vocabulary")
    if not cats:
        raise ValidationError(f"column {col.name!r}: no categories")
    in_vocab = [(c, v) for v, c in zip(values, counts) if v in cats]
    most = max(in_vocab, key=lambda t: t[0])[1] if in_vocab else cats[0]
    return CategoricalColumn(col.name, cats, str(most), col.target == "binary_target")


def fit_pipeline(table, schema, scaler="standard", boxcox=True, skew_threshold=1.0,
                 strict=True):
    """Fit every column's preprocessing state on ``table``."""
    if scaler not in ("standard", "minmax"):
        raise ValidationError(f"unknown scaler {scaler!r}")
    schema.check_table(table)
    if table.n_rows == 0:
        raise ValidationError("cannot fit a pipeline on an empty table")
    table = schema.apply_sentinels(table)
    numeric, categorical = [], []
    for col in schema.columns:
        if col.is_numeric:
            numeric.append(_fit_numeric(col, table[col.name], scaler, boxcox, skew_threshold))
        elif col.target == "binary_target":
            target_col = col
        else:
            categorical.append(_fit_categorical(col, table[col.name], strict))
    # the binary target group always sits last in y
    if schema.target is not None and schema.target.target == "binary_target":
        categorical.append(_fit_categorical(target_col, table[target_col.name], strict))
    return FittedPipeline(schema, numeric, categorical, scaler, boxcox, skew_threshold, strict)


def transform(pipeline, table):
    return pipeline.transform(table)


def inverse_transform(pipeline, batch, return_report=False):
    return pipeline.inverse_transform(batch, return_report=return_report)


class TabularEncoder(TransformerMixin, BaseEstimator):
    """Estimator wrapper around :func:`fit_pipeline`.

    ``fit`` takes a :class:`RawTable`; ``transform`` returns an
    :class:`EncodedBatch` and ``inverse_transform`` maps one back to a table.
    When ``schema`` is None it is inferred from the fitting table.
    """

    def __init__(self, schema=None, scaler="standard", boxcox=True, skew_threshold=1.0,
                 strict=True):
        self.schema = schema
        self.scaler = scaler
        self.boxcox = boxcox
        self.skew_threshold = skew_threshold
        self.strict = strict

    def fit(self, X, y=None):
        schema = self.schema if self.schema is not None else infer_schema(X)
        self.pipeline_ = fit_pipeline(X, schema, self.scaler, self.boxcox,
                                      self.skew_threshold, self.strict)
        self.schema_ = schema
        return self

    def transform(self, X):
        check_is_fitted(self, "pipeline_")
        return self.pipeline_.transform(X)

    def inverse_transform(self, X):
        check_is_fitted(self, "pipeline_")
        return self.pipeline_.inverse_transform(X)

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "pipeline_")
        y_names = [f"{c.name}={cat}" for c in self.pipeline_.categorical for cat in c.categories]
        return np.array(self.pipeline_.x_columns + y_names, dtype=object)
