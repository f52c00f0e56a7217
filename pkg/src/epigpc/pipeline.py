"""Offline/online orchestration behind the command line interface.

Directory layout under the output directory::

    offline/   manifest.json, config.yaml, expansion.json, kl.json,
               eigenvalues.csv, dd/ (coarse.json, subdomain_*.json, manifest.json)
    online/    sweep.csv, dd_sweep.csv, density_tau*_{hist,pdf}.csv, summary.json
    sweep/     error_table.csv, dd_error_table.csv, density_pairs_tau*.csv
    mc/        mc_<target>_tau*.csv, summary.json
    report/    table_gpc.csv, table_dd.csv, eigenvalues*.csv, summary.json
    .cache/    memoized model evaluations (not part of the deterministic output)
"""
from __future__ import annotations

import csv
import json
import logging
import shutil
from pathlib import Path

import numpy as np
import yaml
from scipy.linalg import eigh

from .config import ConfigError, RunConfig
from .ddreduce import DDResult
from .epistemic import rescale, tau_sweep
from .estimators import DomainDecompositionSurrogate, EpistemicSurrogate, GpcSurrogate
from .mcref import estimate_density, mc_moments, normal_block
from .models import CachedModel, DiffusionModel, SyntheticModel, kl_hash
from .polychaos import GpcExpansion, gpc_moments
from .randfield import write_eigenvalue_csv

logger = logging.getLogger(__name__)

#: floor for the denominator of pointwise relative errors
REL_EPS = 1e-14
ERROR_DEFINITION = "max over spatial points of |approx - ref| / max(|ref|, 1e-14)"
ERROR_HEADER = ["tau", "max_rel_mean_error", "max_rel_variance_error"]


def max_relative_error(approx, ref, eps: float = REL_EPS) -> float:
    approx = np.asarray(approx, dtype=float)
    ref = np.asarray(ref, dtype=float)
    return float(np.max(np.abs(approx - ref) / np.maximum(np.abs(ref), eps)))


def tau_label(tau: float) -> str:
    return f"{tau:g}"


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def build_model(cfg: RunConfig):
    m, s, cov = cfg.model, cfg.stochastic, cfg.covariance
    if m.type == "synthetic":
        return SyntheticModel.random(m.n_points, s.d, scale=m.scale, seed=m.seed)
    return DiffusionModel(
        nx=m.nx, ny=m.ny, extent=tuple(m.extent), d=s.d, sigma_max=cov.sigma_max,
        L=tuple(cov.L), log_mean=m.log_mean, left=m.left, right=m.right, sink=m.sink,
        sink_extent=None if m.sink_extent is None else tuple(m.sink_extent),
    )


def _model_with_cache(cfg: RunConfig, out: Path, use_cache: bool):
    model = build_model(cfg)
    kl = model.build_kl() if isinstance(model, DiffusionModel) else None
    if not use_cache:
        return model, model, kl
    cache_dir = out / ".cache"
    cache_dir.mkdir(parents=True, exist_ok=True)
    path = cache_dir / f"{model.config_hash()}_{kl_hash(kl)}.npz"
    return CachedModel(model, path), model, kl


def _point_index(cfg: RunConfig, model) -> int:
    if cfg.mc.point == "center":
        if isinstance(model, DiffusionModel):
            return model.center_index()
        return len(model.spatial_points) // 2
    idx = int(cfg.mc.point)
    if not 0 <= idx < len(model.spatial_points):
        raise ConfigError(f"mc.point: index {idx} outside [0, {len(model.spatial_points)})")
    return idx


def _taus(cfg: RunConfig, taus) -> list:
    taus = cfg.stochastic.taus if taus is None else taus
    for i, t in enumerate(taus):
        if not 1e-6 <= t <= 1.0:
            raise ConfigError(f"--tau[{i}]: must lie in [1e-06, 1], got {t!r}")
    return list(taus)


def run_offline(cfg: RunConfig, out, use_cache: bool | None = None) -> dict:
    """Build the maximum-variance surrogate(s) and persist them with a manifest."""
    out = Path(out)
    use_cache = cfg.cache if use_cache is None else use_cache
    off = out / "offline"
    off.mkdir(parents=True, exist_ok=True)
    evaluator, model, kl = _model_with_cache(cfg, out, use_cache)
    s, dd = cfg.stochastic, cfg.dd
    manifest = {
        "config_hash": cfg.offline_hash(),
        "model": model.config(),
        "model_hash": model.config_hash(),
        "kl_hash": kl_hash(kl),
        "dim": s.d,
        "n_points": int(len(model.spatial_points)),
        "evaluations": {},
        "artifacts": [],
    }
    if kl is not None:
        kl.save(off / "kl.json")
        spec = model.covariance()
        n_decay = min(cfg.covariance.n_decay, spec.n_points)
        K = spec.weights[0] * spec.matrix()
        lam = eigh(K, eigvals_only=True, subset_by_index=[spec.n_points - n_decay,
                                                          spec.n_points - 1])[::-1]
        write_eigenvalue_csv(off / "eigenvalues.csv", lam)
        manifest["kl_energy_ratio"] = kl.energy_ratio()
        manifest["artifacts"] += ["kl.json", "eigenvalues.csv"]
    if s.full_gpc:
        est = GpcSurrogate(degree=s.N, level=s.level).fit_model(evaluator)
        est.expansion_.save(off / "expansion.json")
        manifest["evaluations"]["gpc"] = est.n_model_evals_
        manifest["level"] = s.N + 2 if s.level is None else s.level
        manifest["artifacts"].append("expansion.json")
        logger.info("offline gPC: %d node evaluations", est.n_model_evals_)
    if dd.enabled:
        dd_est = DomainDecompositionSurrogate(
            layout=tuple(dd.layout), reduced_dim=dd.r, degree=dd.N_s, level=dd.level,
            coarse_level=dd.coarse_level, bounds=_bounds(cfg, model),
        ).fit(evaluator)
        res = dd_est.result_
        res.save(off / "dd")
        manifest["evaluations"]["dd_coarse"] = res.coarse_evals
        manifest["evaluations"]["dd_local"] = [red.n_evals for red in res.reductions]
        manifest["dd_energy_ratio"] = [red.energy_ratio() for red in res.reductions]
        for red in res.reductions:
            write_eigenvalue_csv(off / f"eigenvalues_subdomain_{red.s}.csv", red.local_eigs,
                                 label="mu")
        manifest["artifacts"].append("dd/")
        logger.info("offline DD: coarse %d + local %s node evaluations", res.coarse_evals,
                    [red.n_evals for red in res.reductions])
    (off / "config.yaml").write_text(cfg.dump())
    _write_json(off / "manifest.json", manifest)
    _finish_cache(evaluator, "offline")
    return manifest


def _finish_cache(evaluator, stage: str) -> None:
    """Persist the cache and record solve/hit counts next to it (not in the outputs)."""
    if not isinstance(evaluator, CachedModel):
        return
    evaluator.save()
    stats = {"stage": stage, "requests": evaluator.n_evals, "solves": evaluator.inner.n_evals,
             "hits": evaluator.hits}
    _write_json(Path(evaluator.path).with_name("last_run.json"), stats)
    logger.info("model solves: %d (cache hits %d)", stats["solves"], stats["hits"])


def _bounds(cfg, model):
    if isinstance(model, DiffusionModel):
        return ([0.0, 0.0], list(model.extent))
    return None


def load_offline(cfg: RunConfig, out):
    off = Path(out) / "offline"
    try:
        manifest = json.loads((off / "manifest.json").read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"no offline artifacts under {off}; run 'offline' first") from exc
    if manifest["config_hash"] != cfg.offline_hash():
        stored = yaml.safe_load((off / "config.yaml").read_text())
        diff = _diff(stored, cfg.to_dict())
        raise ConfigError("offline artifacts were built with a different configuration: "
                          + "; ".join(diff))
    expansion = GpcExpansion.load(off / "expansion.json") if (off / "expansion.json").exists() \
        else None
    dd = DDResult.load(off / "dd") if (off / "dd").exists() else None
    return manifest, expansion, dd


def _diff(a, b, path=""):
    out = []
    if isinstance(a, dict) and isinstance(b, dict):
        for k in sorted(set(a) | set(b)):
            if k in ("taus", "mc", "output", "cache"):
                continue
            out += _diff(a.get(k), b.get(k), f"{path}.{k}" if path else k)
    elif a != b:
        out.append(f"{path}: offline={a!r} current={b!r}")
    return out


def _surrogate_samples(expansion, tau, point, n, seed):
    X = normal_block(seed, 0, n, expansion.dim)
    return EpistemicSurrogate(tau=tau).fit(expansion).predict(X)[:, point]


def _write_density(prefix: Path, values, point, bins):
    dens = estimate_density(values, point_index=point, bins=bins)
    dens.histogram_csv(prefix.with_name(prefix.name + "_hist.csv"))
    dens.density_csv(prefix.with_name(prefix.name + "_pdf.csv"))
    return dens


def run_online(cfg: RunConfig, out, taus=None) -> dict:
    """Tau sweep and densities from offline artifacts only; no model solves."""
    out = Path(out)
    taus = _taus(cfg, taus)
    manifest, expansion, dd = load_offline(cfg, out)
    on = out / "online"
    on.mkdir(parents=True, exist_ok=True)
    model = build_model(cfg)
    point = _point_index(cfg, model)
    summary = {"taus": taus, "model_evaluations": 0, "point_index": point,
               "config_hash": manifest["config_hash"]}
    if expansion is not None and taus:
        tau_sweep(expansion, taus).to_csv(on / "sweep.csv")
        for tau in taus:
            vals = _surrogate_samples(expansion, tau, point, cfg.mc.density_samples, cfg.mc.seed)
            _write_density(on / f"density_tau{tau_label(tau)}", vals, point, cfg.mc.bins)
    if dd is not None and taus:
        dd_est = DomainDecompositionSurrogate.from_result(dd)
        with open(on / "dd_sweep.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["tau", "spatial_index", "mean", "variance"])
            for tau in taus:
                mean, var = dd_est.moments(tau)
                for i, (m, v) in enumerate(zip(mean, var)):
                    writer.writerow([repr(float(tau)), i, repr(float(m)), repr(float(v))])
        for tau in taus:
            X = normal_block(cfg.mc.seed, 0, cfg.mc.density_samples, dd.coarse.dim)
            vals = dd_est.predict(X, tau=tau)[:, point]
            _write_density(on / f"dd_density_tau{tau_label(tau)}", vals, point, cfg.mc.bins)
    summary["model_evaluations"] = model.n_evals
    _write_json(on / "summary.json", summary)
    return summary


def run_sweep(cfg: RunConfig, out, taus=None, use_cache: bool | None = None) -> dict:
    """Compare post-processed surrogates against direct per-tau assemblies."""
    out = Path(out)
    taus = _taus(cfg, taus)
    use_cache = cfg.cache if use_cache is None else use_cache
    manifest, expansion, dd = load_offline(cfg, out)
    sw = out / "sweep"
    sw.mkdir(parents=True, exist_ok=True)
    evaluator, model, _ = _model_with_cache(cfg, out, use_cache)
    point = _point_index(cfg, model)
    s = cfg.stochastic
    summary = {"taus": taus, "error_definition": ERROR_DEFINITION}
    if not taus:
        _write_json(sw / "summary.json", summary)
        return summary
    if expansion is not None:
        rows = []
        for tau in taus:
            direct = GpcSurrogate(degree=s.N, level=s.level).fit_model(evaluator, tau=tau)
            dm, dv = gpc_moments(direct.expansion_)
            sm, sv = gpc_moments(rescale(expansion, tau))
            rows.append([tau, max_relative_error(sm, dm), max_relative_error(sv, dv)])
            sur_vals = _surrogate_samples(expansion, tau, point, cfg.mc.density_samples,
                                          cfg.mc.seed)
            dir_vals = direct.predict(normal_block(cfg.mc.seed, 0, cfg.mc.density_samples,
                                                   s.d))[:, point]
            _write_density_pair(sw / f"density_pairs_tau{tau_label(tau)}.csv", sur_vals,
                                dir_vals)
        _write_table(sw / "error_table.csv", rows)
        summary["gpc"] = rows
    if dd is not None:
        dd_cfg = cfg.dd
        rows = []
        for tau in taus:
            direct = DomainDecompositionSurrogate(
                layout=tuple(dd_cfg.layout), reduced_dim=dd_cfg.r, degree=dd_cfg.N_s,
                level=dd_cfg.level, bounds=_bounds(cfg, model),
            ).fit(evaluator, tau=tau, coarse=dd.coarse)
            dm, dv = direct.moments(1.0)
            sm, sv = dd.moments(tau)
            rows.append([tau, max_relative_error(sm, dm), max_relative_error(sv, dv)])
        _write_table(sw / "dd_error_table.csv", rows)
        summary["dd"] = rows
    _write_json(sw / "summary.json", summary)
    _finish_cache(evaluator, "sweep")
    return summary


def _write_table(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ERROR_HEADER)
        for tau, em, ev in rows:
            writer.writerow([tau_label(tau), f"{em:.4e}", f"{ev:.4e}"])


def _write_density_pair(path, surrogate_vals, direct_vals, n_grid=256):
    a = estimate_density(surrogate_vals)
    b = estimate_density(direct_vals)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "pdf_surrogate", "pdf_direct"])
        if a.x is None or b.x is None:
            return
        lo, hi = min(a.x[0], b.x[0]), max(a.x[-1], b.x[-1])
        x = np.linspace(lo, hi, n_grid)
        pa = np.interp(x, a.x, a.pdf, left=0.0, right=0.0)
        pb = np.interp(x, b.x, b.pdf, left=0.0, right=0.0)
        for xi, p, q in zip(x, pa, pb):
            writer.writerow([repr(float(xi)), repr(float(p)), repr(float(q))])


def run_mc(cfg: RunConfig, out, taus=None, seed=None, target: str = "model",
           use_cache: bool | None = None) -> dict:
    """Monte Carlo moments of the model or the surrogate at each tau."""
    out = Path(out)
    taus = _taus(cfg, taus)
    seed = cfg.mc.seed if seed is None else seed
    mcdir = out / "mc"
    mcdir.mkdir(parents=True, exist_ok=True)
    summary = {"taus": taus, "seed": seed, "n": cfg.mc.n, "target": target, "runs": []}
    expansion = None
    if target == "surrogate" or (out / "offline" / "manifest.json").exists():
        _, expansion, _ = load_offline(cfg, out)
    if target == "model":
        evaluator, _, _ = _model_with_cache(cfg, out, False)
    elif expansion is None:
        raise ConfigError("surrogate Monte Carlo needs an offline gPC expansion")
    for tau in taus:
        if target == "surrogate":
            ev = EpistemicSurrogate(tau=tau).fit(expansion)
            est = mc_moments(ev, cfg.stochastic.d, cfg.mc.n, seed=seed, tau=1.0)
        else:
            est = mc_moments(evaluator, cfg.stochastic.d, cfg.mc.n, seed=seed, tau=tau)
        est.to_csv(mcdir / f"mc_{target}_tau{tau_label(tau)}.csv")
        run = {"tau": tau, "max_std_error": float(est.std_error.max())}
        if expansion is not None:
            sm, sv = gpc_moments(rescale(expansion, tau))
            se = np.maximum(est.std_error, REL_EPS)
            run["max_rel_mean_error_vs_surrogate"] = max_relative_error(sm, est.mean)
            run["max_abs_mean_z_vs_surrogate"] = float(np.max(np.abs(sm - est.mean) / se))
        summary["runs"].append(run)
    _write_json(mcdir / f"summary_{target}.json", summary)
    return summary


def report(cfg: RunConfig, out) -> dict:
    """Collect error tables (tau descending), eigenvalue decays and a JSON summary."""
    out = Path(out)
    rep = out / "report"
    if rep.exists():
        shutil.rmtree(rep)
    rep.mkdir(parents=True)
    summary = {"error_definition": ERROR_DEFINITION, "tables": [], "eigenvalue_files": []}
    man = out / "offline" / "manifest.json"
    if man.exists():
        manifest = json.loads(man.read_text())
        summary["config_hash"] = manifest["config_hash"]
        summary["evaluations"] = manifest["evaluations"]
    for src, dst in (("error_table.csv", "table_gpc.csv"), ("dd_error_table.csv", "table_dd.csv")):
        path = out / "sweep" / src
        if not path.exists():
            continue
        with open(path) as fh:
            rows = list(csv.reader(fh))[1:]
        if not rows:
            continue
        rows.sort(key=lambda r: -float(r[0]))
        with open(rep / dst, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(ERROR_HEADER)
            writer.writerows(rows)
        summary["tables"].append(dst)
    for path in sorted((out / "offline").glob("eigenvalues*.csv")):
        shutil.copy(path, rep / path.name)
        summary["eigenvalue_files"].append(path.name)
    for path in sorted((out / "mc").glob("summary_*.json")):
        summary.setdefault("mc", {})[path.stem] = json.loads(path.read_text())
    _write_json(rep / "summary.json", summary)
    return summary
