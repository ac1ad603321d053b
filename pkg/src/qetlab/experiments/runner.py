"""End-to-end pipelines behind the CLI: single runs, sweeps, and sampling checks."""
from __future__ import annotations

import itertools
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .. import __version__
from ..errors import DegenerateGroundStateError, GeometryError, QetError
from ..infotheory import (
    SLACK_NAMES,
    bound_chain,
    holder_check,
    pinsker_check,
    role_exchange_bound,
    trace_norm_spectral_identity,
)
from ..model import prepare
from ..protocol import Region, require_geometry, run_protocol
from .records import SCHEMA_VERSION
from .rng import SplitMix64, child_seed, random_density, random_hermitian

SWEEP_COLUMNS = (
    "index", "status", "N", "b", "g", "distance", "axis_angle",
    "E_A", "E_B", "E_B_correlator", "mean_H", "HB_norm", "S_ent", "I_AB", "I_ApB",
    "route_gap", "locality_rho1", "conservation", "far_site",
) + tuple(f"slack_{name}" for name in SLACK_NAMES) + ("pass",)


def execute(config):
    """Run the full pipeline for one config; returns a record dict.

    Raises :class:`GeometryError` or :class:`DegenerateGroundStateError`
    before any expensive work when the setup is invalid.
    """
    start = time.perf_counter()
    tol = config.tolerance
    geometry = config.geometry
    base = config.model.build()
    require_geometry(geometry.region_a, geometry.region_b, base.n_sites)
    model, ground = prepare(base)

    scheme = config.measurement.build(geometry.region_a)
    control = config.control.build(geometry.region_b, len(scheme))
    run = run_protocol(
        model, ground, geometry.region_a, geometry.region_b, scheme, control,
        optimize=config.control.optimize, method=config.control.method,
    )
    chain = bound_chain(run, tol)
    cons = run.conservation

    labels = [scheme.labels[mu] for mu in run.measurement.outcomes]
    scalars = {
        "ground_energy_raw": float(ground.energy + sum(model.offsets)),
        "ground_energy": float(ground.energy),
        "gap": float(ground.gap),
        "h_b_norm": run.h_b_norm,
        "e_a": run.e_a,
        "e_b": run.e_b_direct,
        "e_b_correlator": run.e_b_correlator,
        "mean_h": run.mean_h,
        "s_ent": chain.s_ent,
        "i_ab": chain.i_ab,
        "i_apb": chain.i_apb,
        "i_apb_relative": chain.i_apb_relative,
        "trace_distance": chain.trace_distance,
        "rhs_sum": chain.rhs_sum,
        "rhs_eb": chain.rhs_eb,
    }
    for label, p in zip(labels, run.probabilities):
        scalars[f"p[{label}]"] = float(p)
    for mu, theta in enumerate(run.control.thetas):
        scalars[f"theta[{scheme.labels[mu]}]"] = theta
    residuals = {
        "route_gap": run.route_gap,
        "locality_rho1": cons.locality_rho1,
        "hb_rho2": cons.hb_rho2,
        "conservation": cons.conservation,
        "far_site": cons.far_site,
        "commutator": run.commutator_max,
        **chain.identity_residuals,
    }
    flags = {
        "routes_agree": run.route_gap <= tol * (1 + run.h_b_norm),
        "conservation": cons.passed,
        "negative_region": cons.negative_region_ok,
        "eb_le_ea": cons.eb_le_ea,
        "passivity": run.e_a >= -tol and run.mean_h >= -tol,
        "probabilities": abs(float(np.sum(run.probabilities)) - 1.0) <= 1e-10,
        "bound_chain": chain.passed,
    }
    record = {
        "schema_version": SCHEMA_VERSION,
        "library_version": __version__,
        "seed": config.seed,
        "boundary": "open",
        "model": config.model.echo(),
        "geometry": geometry.echo(),
        "status": "ok",
        "scalars": scalars,
        "residuals": residuals,
        "slacks": dict(chain.slacks),
        "shifts": [float(x) for x in model.offsets],
        "pruned_outcomes": [scheme.labels[mu] for mu in run.measurement.pruned],
    }
    if config.mirror is not None:
        m = config.mirror
        mirror = role_exchange_bound(model, ground, Region(m["n_A"], m["l_A"]), Region(m["n_M"], m["l_M"]))
        record["mirror"] = {
            "s_ent": mirror.s_ent,
            "s_ent_complement": mirror.s_ent_complement,
            "s_ent_support": mirror.s_ent_support,
            "e_tilde": mirror.e_tilde,
            "h_tilde_norm": mirror.h_tilde_norm,
            "bound": mirror.bound,
            "slack": mirror.slack,
        }
        flags["role_exchange"] = mirror.passed
    record["flags"] = flags
    record["passed"] = all(flags.values())
    record["meta"] = {"wall_time_s": time.perf_counter() - start}
    return record


# -- sweeps -------------------------------------------------------------------

def sweep_points(sweep):
    """Grid points in a fixed axis order, last axis fastest."""
    axes = [name for name in ("N", "b", "g", "distance", "axis_angle") if name in sweep]
    for values in itertools.product(*(sweep[a] for a in axes)):
        yield dict(zip(axes, values))


def _sweep_task(args):
    index, config, point = args
    cfg = config.with_point(point)
    try:
        record = execute(cfg)
    except GeometryError as exc:
        return index, point, cfg, None, f"geometry: {exc}"
    except DegenerateGroundStateError as exc:
        return index, point, cfg, None, f"degenerate: {exc}"
    except QetError as exc:
        return index, point, cfg, None, f"error: {exc}"
    return index, point, cfg, record, "ok"


def sweep_row(index, point, cfg, record, status):
    row = {
        "index": index,
        "status": status,
        "N": cfg.model.n_sites,
        "b": cfg.model.b,
        "g": cfg.model.g,
        "distance": abs(cfg.geometry.n_b - cfg.geometry.n_a),
        "axis_angle": point.get("axis_angle"),
        "pass": False,
    }
    if record is None:
        return row
    s, r = record["scalars"], record["residuals"]
    row.update({
        "E_A": s["e_a"], "E_B": s["e_b"], "E_B_correlator": s["e_b_correlator"],
        "mean_H": s["mean_h"], "HB_norm": s["h_b_norm"], "S_ent": s["s_ent"],
        "I_AB": s["i_ab"], "I_ApB": s["i_apb"],
        "route_gap": r["route_gap"], "locality_rho1": r["locality_rho1"],
        "conservation": r["conservation"], "far_site": r["far_site"],
        "pass": record["passed"],
    })
    for name in SLACK_NAMES:
        row[f"slack_{name}"] = record["slacks"].get(name)
    return row


def run_sweep(config, workers=1):
    """Execute every grid point; returns ``[(row, record_or_None), ...]`` in grid order."""
    tasks = [(i, config, p) for i, p in enumerate(sweep_points(config.sweep))]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_task, tasks))
    else:
        results = [_sweep_task(t) for t in tasks]
    return [(sweep_row(*res), res[3]) for res in results]


# -- sampled inequality checks ------------------------------------------------

@dataclass(frozen=True)
class VerifyResult:
    samples: int
    pinsker_min: float
    pinsker_argmin: int
    holder_min: float
    holder_argmin: int
    spectral_max: float
    spectral_argmax: int
    infinite_relative: int
    seed: int

    def sample_seed(self, index):
        return child_seed(self.seed, index)


def _verify_chunk(args):
    seed, indices, dim_min, dim_max, identical = args
    out = []
    for i in indices:
        rng = SplitMix64.for_sample(seed, i)
        d = int(rng.integer(dim_min, dim_max))
        rho = random_density(rng, d)
        phi = rho.copy() if identical else random_density(rng, d)
        x = random_hermitian(rng, d)
        y = random_hermitian(rng, d)
        out.append((
            i,
            pinsker_check(rho, phi),
            holder_check(x, y),
            trace_norm_spectral_identity(rho, phi),
        ))
    return out


def run_verify(spec, seed, workers=1):
    indices = list(range(spec.samples))
    n_chunks = max(1, min(workers * 4, len(indices)))
    chunks = [indices[k::n_chunks] for k in range(n_chunks)]
    tasks = [(seed, c, spec.dim_min, spec.dim_max, spec.identical) for c in chunks]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_verify_chunk, tasks))
    else:
        parts = [_verify_chunk(t) for t in tasks]
    rows = sorted(itertools.chain.from_iterable(parts))
    pinsker = [(r[1], r[0]) for r in rows]
    holder = [(r[2], r[0]) for r in rows]
    spectral = [(r[3], r[0]) for r in rows]
    p_min, p_arg = min(pinsker)
    h_min, h_arg = min(holder)
    s_max, s_arg = max(spectral)
    return VerifyResult(
        samples=len(rows),
        pinsker_min=p_min,
        pinsker_argmin=p_arg,
        holder_min=h_min,
        holder_argmin=h_arg,
        spectral_max=s_max,
        spectral_argmax=s_arg,
        infinite_relative=sum(1 for v, _ in pinsker if math.isinf(v)),
        seed=seed,
    )
