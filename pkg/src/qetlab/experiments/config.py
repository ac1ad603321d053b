"""JSON experiment configuration.

Explicit matrices are nested lists whose entries are either real numbers or
``[re, im]`` pairs. Every parse failure raises :class:`ConfigError` carrying
the dotted path of the offending field.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..errors import ConfigError
from ..linalg import HilbertSpace
from ..model import ChainModel, Coupling, ising
from ..protocol import FeedbackControl, MeasurementScheme, Region

SWEEP_AXES = ("N", "b", "g", "distance", "axis_angle")
NAMED_AXES = {"x": (1.0, 0.0, 0.0), "y": (0.0, 1.0, 0.0), "z": (0.0, 0.0, 1.0)}


# -- field helpers ------------------------------------------------------------

def _get(doc, key, path, kind=None, default=...):
    if not isinstance(doc, dict):
        raise ConfigError(path, "expected an object")
    if key not in doc:
        if default is ...:
            raise ConfigError(f"{path}.{key}" if path else key, "missing required field")
        return default
    value = doc[key]
    where = f"{path}.{key}" if path else key
    if kind is not None:
        value = kind(value, where)
    return value


def _int(value, path):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(path, f"expected an integer, got {value!r}")
    return value


def _number(value, path):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    if not math.isfinite(value):
        raise ConfigError(path, "expected a finite number")
    return float(value)


def _number_list(value, path):
    if not isinstance(value, list):
        raise ConfigError(path, "expected a list")
    return [_number(v, f"{path}[{i}]") for i, v in enumerate(value)]


def _axis(value, path):
    if isinstance(value, str):
        if value.lower() not in NAMED_AXES:
            raise ConfigError(path, f"unknown axis {value!r}; use x, y, z or a 3-vector")
        return NAMED_AXES[value.lower()]
    vec = _number_list(value, path)
    if len(vec) != 3 or not any(vec):
        raise ConfigError(path, "axis must be a nonzero 3-vector")
    return tuple(vec)


def _matrix(value, path):
    if not isinstance(value, list) or not value or not all(isinstance(r, list) for r in value):
        raise ConfigError(path, "expected a square matrix as a list of rows")
    n = len(value)
    out = np.zeros((n, n), dtype=complex)
    for i, row in enumerate(value):
        if len(row) != n:
            raise ConfigError(f"{path}[{i}]", f"row has {len(row)} entries, expected {n}")
        for j, entry in enumerate(row):
            where = f"{path}[{i}][{j}]"
            if isinstance(entry, list):
                if len(entry) != 2:
                    raise ConfigError(where, "complex entries are [re, im] pairs")
                out[i, j] = complex(_number(entry[0], where), _number(entry[1], where))
            else:
                out[i, j] = _number(entry, where)
    return out


def _matrix_list(value, path):
    if not isinstance(value, list):
        raise ConfigError(path, "expected a list of matrices")
    return [_matrix(m, f"{path}[{i}]") for i, m in enumerate(value)]


def matrix_to_json(m):
    return [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(m)]


# -- config objects -----------------------------------------------------------

@dataclass(frozen=True)
class ModelSpec:
    preset: str = "ising"
    n_sites: int = 8
    b: float = 1.0
    g: float = 0.5
    site_dims: tuple = ()
    x_ops: tuple = ()
    couplings: tuple = ()       # ((y_ops, strengths), ...)

    def build(self):
        if self.preset == "ising":
            return ising(self.n_sites, self.b, self.g)
        space = HilbertSpace(self.site_dims)
        couplings = [Coupling(tuple(y), tuple(g)) for y, g in self.couplings]
        return ChainModel(space, self.x_ops, couplings, name="custom")

    def echo(self):
        if self.preset == "ising":
            return {"preset": "ising", "N": self.n_sites, "b": self.b, "g": self.g}
        return {"preset": "custom", "N": len(self.site_dims), "site_dims": list(self.site_dims)}


@dataclass(frozen=True)
class Geometry:
    n_a: int
    n_b: int
    l_a: int = 0
    l_b: int = 1

    @property
    def region_a(self):
        return Region(self.n_a, self.l_a)

    @property
    def region_b(self):
        return Region(self.n_b, self.l_b)

    def echo(self):
        return {"n_A": self.n_a, "l_A": self.l_a, "n_B": self.n_b, "l_B": self.l_b}


@dataclass(frozen=True)
class MeasurementSpec:
    axes: tuple = ((1.0, 0.0, 0.0),)   # one axis (broadcast) or one per A-site
    kraus: tuple = ()
    labels: tuple = ()

    def build(self, region_a):
        sites = tuple(region_a.sites)
        if self.kraus:
            return MeasurementScheme(sites, self.kraus, self.labels or None)
        axes = self.axes[0] if len(self.axes) == 1 else self.axes
        if len(self.axes) not in (1, len(sites)):
            raise ConfigError("measurement.axes", f"need 1 or {len(sites)} axes")
        return MeasurementScheme.bloch_projective(sites, axes)


@dataclass(frozen=True)
class ControlSpec:
    axis: tuple = (0.0, 1.0, 0.0)
    matrices: tuple = ()               # explicit per-outcome generators
    sites: tuple = ()                  # support of explicit generators
    theta: object = "optimize"         # "optimize", a number, or one number per outcome
    method: str = "auto"

    @property
    def optimize(self):
        return self.theta == "optimize"

    def build(self, region_b, n_outcomes):
        if isinstance(self.theta, (list, tuple)):
            thetas = tuple(self.theta)
            if len(thetas) != n_outcomes:
                raise ConfigError("control.theta", f"need {n_outcomes} angles, got {len(thetas)}")
        elif self.optimize:
            thetas = (0.0,) * n_outcomes
        else:
            thetas = (float(self.theta),) * n_outcomes
        if self.matrices:
            gens = self.matrices if len(self.matrices) > 1 else self.matrices * n_outcomes
            if len(gens) != n_outcomes:
                raise ConfigError("control.matrices", f"need 1 or {n_outcomes} generators")
            sites = self.sites or (region_b.center,)
            return FeedbackControl(sites, gens, thetas)
        return FeedbackControl.bloch(region_b.center, self.axis, n_outcomes, thetas)


@dataclass(frozen=True)
class VerifySpec:
    samples: int = 10_000
    dim_min: int = 2
    dim_max: int = 8
    identical: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelSpec
    geometry: Geometry
    measurement: MeasurementSpec = field(default_factory=MeasurementSpec)
    control: ControlSpec = field(default_factory=ControlSpec)
    sweep: dict = field(default_factory=dict)
    seed: int = 0
    tolerance: float = 1e-9
    verify: VerifySpec = field(default_factory=VerifySpec)
    mirror: dict = None         # optional role-exchange run: n_A, l_A, n_M, l_M

    def with_point(self, point):
        """Apply one sweep grid point (``N``, ``b``, ``g``, ``distance``, ``axis_angle``)."""
        model, geometry, meas = self.model, self.geometry, self.measurement
        if "N" in point:
            model = replace(model, n_sites=int(point["N"]))
        if "b" in point:
            model = replace(model, b=float(point["b"]))
        if "g" in point:
            model = replace(model, g=float(point["g"]))
        if "distance" in point:
            geometry = replace(geometry, n_b=geometry.n_a + int(point["distance"]))
        if "axis_angle" in point:
            phi = float(point["axis_angle"])
            meas = replace(meas, axes=((math.cos(phi), 0.0, math.sin(phi)),), kraus=())
        return replace(self, model=model, geometry=geometry, measurement=meas)


def _parse_model(doc):
    path = "model"
    preset = _get(doc, "preset", path, default="ising" if "site_dims" not in doc else "custom")
    if preset == "ising":
        return ModelSpec(
            preset="ising",
            n_sites=_get(doc, "N", path, _int),
            b=_get(doc, "b", path, _number),
            g=_get(doc, "g", path, _number),
        )
    if preset != "custom":
        raise ConfigError("model.preset", f"unknown preset {preset!r}")
    dims = _get(doc, "site_dims", path)
    if not isinstance(dims, list) or not dims:
        raise ConfigError("model.site_dims", "expected a non-empty list")
    dims = tuple(_int(d, f"model.site_dims[{i}]") for i, d in enumerate(dims))
    n = len(dims)
    x_ops = _get(doc, "x_ops", path, _matrix_list)
    if len(x_ops) == 1:
        x_ops = x_ops * n
    couplings = []
    for l, c in enumerate(_get(doc, "couplings", path, default=[])):
        cpath = f"model.couplings[{l}]"
        y_ops = _get(c, "y_ops", cpath, _matrix_list)
        if len(y_ops) == 1:
            y_ops = y_ops * n
        g = _get(c, "g", cpath)
        strengths = [_number(g, f"{cpath}.g")] * (n - 1) if not isinstance(g, list) else _number_list(g, f"{cpath}.g")
        couplings.append((tuple(y_ops), tuple(strengths)))
    return ModelSpec(preset="custom", n_sites=n, site_dims=dims, x_ops=tuple(x_ops), couplings=tuple(couplings))


def _parse_measurement(doc):
    path = "measurement"
    if "kraus" in doc:
        kraus = _get(doc, "kraus", path, _matrix_list)
        labels = doc.get("labels") or [str(i) for i in range(len(kraus))]
        if len(labels) != len(kraus):
            raise ConfigError("measurement.labels", "one label per Kraus operator")
        return MeasurementSpec(kraus=tuple(kraus), labels=tuple(str(s) for s in labels))
    if "axes" in doc:
        raw = _get(doc, "axes", path)
        if not isinstance(raw, list):
            raise ConfigError("measurement.axes", "expected a list of axes")
        return MeasurementSpec(axes=tuple(_axis(a, f"measurement.axes[{i}]") for i, a in enumerate(raw)))
    return MeasurementSpec(axes=(_get(doc, "axis", path, _axis, default=(1.0, 0.0, 0.0)),))


def _parse_control(doc):
    path = "control"
    theta = doc.get("theta", "optimize")
    if theta != "optimize":
        theta = _number_list(theta, "control.theta") if isinstance(theta, list) else _number(theta, "control.theta")
    method = doc.get("method", "auto")
    if method not in ("auto", "closed_form", "scan"):
        raise ConfigError("control.method", f"unknown method {method!r}")
    if "matrices" in doc:
        sites = doc.get("sites", [])
        if not isinstance(sites, list):
            raise ConfigError("control.sites", "expected a list of site indices")
        return ControlSpec(
            matrices=tuple(_get(doc, "matrices", path, _matrix_list)),
            sites=tuple(_int(s, f"control.sites[{i}]") for i, s in enumerate(sites)),
            theta=theta,
            method=method,
        )
    axis = _get(doc, "generator", path, _axis, default=(0.0, 1.0, 0.0))
    return ControlSpec(axis=axis, theta=theta, method=method)


def _parse_sweep(doc):
    if not isinstance(doc, dict):
        raise ConfigError("sweep", "expected an object mapping axis names to lists")
    out = {}
    for key, values in doc.items():
        if key not in SWEEP_AXES:
            raise ConfigError(f"sweep.{key}", f"unknown sweep axis; choose from {', '.join(SWEEP_AXES)}")
        where = f"sweep.{key}"
        if key in ("N", "distance"):
            if not isinstance(values, list):
                raise ConfigError(where, "expected a list")
            values = [_int(v, f"{where}[{i}]") for i, v in enumerate(values)]
        else:
            values = _number_list(values, where)
        if not values:
            raise ConfigError(where, "sweep axis is empty")
        out[key] = values
    return out


def parse_verify(doc):
    """The ``verify`` section and ``seed``; the only parts ``verify`` needs."""
    if not isinstance(doc, dict):
        raise ConfigError("", "config must be a JSON object")
    seed = _get(doc, "seed", "", _int, default=0)
    if not 0 <= seed < 2 ** 64:
        raise ConfigError("seed", "seed must fit in an unsigned 64-bit integer")
    vdoc = _get(doc, "verify", "", default={})
    verify = VerifySpec(
        samples=_get(vdoc, "samples", "verify", _int, default=10_000),
        dim_min=_get(vdoc, "dim_min", "verify", _int, default=2),
        dim_max=_get(vdoc, "dim_max", "verify", _int, default=8),
        identical=bool(vdoc.get("identical", False)),
    )
    if verify.samples < 1:
        raise ConfigError("verify.samples", "need at least one sample")
    if not 2 <= verify.dim_min <= verify.dim_max:
        raise ConfigError("verify.dim_min", "need 2 <= dim_min <= dim_max")
    return verify, seed


def parse_config(doc):
    if not isinstance(doc, dict):
        raise ConfigError("", "config must be a JSON object")
    model = _parse_model(_get(doc, "model", "", default={}) or {})
    reg = _get(doc, "regions", "", default={})
    geometry = Geometry(
        n_a=_get(reg, "n_A", "regions", _int),
        n_b=_get(reg, "n_B", "regions", _int),
        l_a=_get(reg, "l_A", "regions", _int, default=0),
        l_b=_get(reg, "l_B", "regions", _int, default=1),
    )
    measurement = _parse_measurement(_get(doc, "measurement", "", default={}))
    control = _parse_control(_get(doc, "control", "", default={}))
    sweep = _parse_sweep(_get(doc, "sweep", "", default={}))
    verify, seed = parse_verify(doc)
    tol = _get(doc, "tolerances", "", default={})
    tolerance = _get(tol, "energy", "tolerances", _number, default=1e-9)
    mirror = doc.get("mirror")
    if mirror is not None:
        mirror = {
            "n_A": _get(mirror, "n_A", "mirror", _int),
            "l_A": _get(mirror, "l_A", "mirror", _int, default=1),
            "n_M": _get(mirror, "n_M", "mirror", _int),
            "l_M": _get(mirror, "l_M", "mirror", _int, default=0),
        }
    return ExperimentConfig(model, geometry, measurement, control, sweep, seed, tolerance, verify, mirror)


def read_document(path):
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError("", f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"invalid JSON in {path}: {exc}") from exc
    return doc


def load_config(path):
    return parse_config(read_document(path))
