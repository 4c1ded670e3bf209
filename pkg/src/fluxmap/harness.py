"""Scenario harness: reuse-ratio sweeps, KL checks, gate calibration.

run_scenario executes the three environmental-change protocols (bs_move,
static_to_dynamic, env_change) as reuse-ratio sweeps. Per reuse ratio the
midpoint cache is warmed once from a dedicated stream (shared across
ratios, so every warm midpoint lies on one common stage-1 trajectory);
the per-trial streams derive from (master_seed, TRIAL, r_index, trial).
Trials therefore run against a warm cache and their step counts are the
steady-state reuse cost T - ceil(R*T).

Reported aggregates are means and sample standard deviations of per-trial
metrics; the trade-off column is mean_nmse + lambda * denoiser_calls.
Reports are plain dicts, JSON- and CSV-serializable, and regenerate
byte-identically from (spec, master_seed) apart from the timestamp.
"""

import json
import math
import subprocess
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from statistics import mean, stdev

import numpy as np

from . import __version__, codec, gate, metrics
from .cache import MidpointCache
from .corpus import canonical_pair
from .diffusion import forward_sample
from .errors import ValidationError
from .oracle import DEFAULT_SIGMA_TARGET, SceneOracle, StaticSceneOracle
from .reuse import (
    ReuseConfig,
    generate_flux,
    generate_full,
    generate_vanilla_reuse,
)
from .rng import CALIB, KL, TRIAL, WARMUP, SeedStream
from .scene import EnvironmentScene, scene_from_dict, scene_to_dict
from .simulator import simulate

KINDS = ("bs_move", "static_to_dynamic", "env_change")
DEFAULT_R_VALUES = (0.1, 0.4, 0.7, 0.9, 0.95, 0.98)
KL_T_GRID = (0.1, 0.25, 0.5, 0.75, 0.9, 1.0)
CURVE_T_GRID = (0.02, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.98, 1.0)


@dataclass(frozen=True)
class ScenarioSpec:
    """One sweep: a scene pair, a reuse mode, ratios, and trial counts."""

    kind: str
    scene_initial: EnvironmentScene
    scene_target: EnvironmentScene
    mode: str = "vanilla"
    r_values: tuple[float, ...] = DEFAULT_R_VALUES
    trials: int = 100
    T: int = 100
    master_seed: int = 0
    lambda_tradeoff: float = 0.0
    sigma_target: float = DEFAULT_SIGMA_TARGET
    factor: int = codec.DEFAULT_FACTOR
    m_bs: int = 16

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"kind must be one of {KINDS}")
        if self.mode not in ("vanilla", "flux"):
            raise ValidationError("scenario mode must be 'vanilla' or 'flux'")
        if self.trials <= 0 or self.T <= 0:
            raise ValidationError("trials and T must be positive")
        if not self.r_values:
            raise ValidationError("r_values must be non-empty")
        if any(not 0.0 < r < 1.0 for r in self.r_values):
            raise ValidationError("r_values must lie strictly inside (0, 1)")
        a, b = self.scene_initial, self.scene_target
        if a.n != b.n or a.resolution_m != b.resolution_m:
            raise ValidationError("scene pair must share grid size and resolution")
        if self.kind == "bs_move":
            if not (a.same_static(b) and a.same_dynamic(b)):
                raise ValidationError("bs_move requires identical H_s and H_d")
            if (a.bs.x, a.bs.y, a.bs.z) == (b.bs.x, b.bs.y, b.bs.z):
                raise ValidationError("bs_move requires the BS to move")
        elif self.kind == "static_to_dynamic":
            if not a.same_static(b):
                raise ValidationError("static_to_dynamic requires identical H_s")
            if (a.bs.x, a.bs.y, a.bs.z) != (b.bs.x, b.bs.y, b.bs.z):
                raise ValidationError("static_to_dynamic requires a fixed BS")
        elif self.kind == "env_change":
            if a.same_static(b):
                raise ValidationError("env_change requires the static layout to differ")
            if a.vehicles or b.vehicles:
                raise ValidationError("env_change holds the dynamic layer empty")


def spec_from_dict(data: dict) -> ScenarioSpec:
    if not isinstance(data, dict):
        raise ValidationError("scenario spec must be a JSON object")
    allowed = {
        "kind", "mode", "r_values", "trials", "T", "master_seed",
        "lambda_tradeoff", "sigma_target", "factor", "m_bs",
        "scene_initial", "scene_target",
    }
    unknown = set(data) - allowed
    if unknown:
        raise ValidationError(f"unknown keys in scenario spec: {sorted(unknown)}")
    for req in ("kind", "scene_initial", "scene_target"):
        if req not in data:
            raise ValidationError(f"scenario spec is missing {req!r}")
    kwargs = {k: data[k] for k in allowed & set(data) if not k.startswith("scene_")}
    if "r_values" in kwargs:
        kwargs["r_values"] = tuple(float(r) for r in kwargs["r_values"])
    return ScenarioSpec(
        scene_initial=scene_from_dict(data["scene_initial"]),
        scene_target=scene_from_dict(data["scene_target"]),
        **kwargs,
    )


def spec_to_dict(spec: ScenarioSpec) -> dict:
    return {
        "kind": spec.kind,
        "mode": spec.mode,
        "r_values": list(spec.r_values),
        "trials": spec.trials,
        "T": spec.T,
        "master_seed": spec.master_seed,
        "lambda_tradeoff": spec.lambda_tradeoff,
        "sigma_target": spec.sigma_target,
        "factor": spec.factor,
        "m_bs": spec.m_bs,
        "scene_initial": scene_to_dict(spec.scene_initial),
        "scene_target": scene_to_dict(spec.scene_target),
    }


def load_spec(path) -> ScenarioSpec:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as e:
            raise ValidationError(f"{path}: not valid JSON ({e})") from None
    return spec_from_dict(data)


def canonical_scenario(kind: str, mode: str = "vanilla", **overrides) -> ScenarioSpec:
    """The frozen scenario configuration shipped under scenes/ and used by
    the acceptance suite: canonical scene pair, 100 trials of T = 100 steps,
    master seed 1, pool factor 2."""
    initial, target = canonical_pair(kind)
    settings = dict(
        kind=kind,
        scene_initial=initial,
        scene_target=target,
        mode=mode,
        trials=100,
        T=100,
        master_seed=1,
        factor=2,
    )
    settings.update(overrides)
    return ScenarioSpec(**settings)


def build_tag() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True, text=True, timeout=5,
            cwd=Path(__file__).resolve().parent,
        )
        if out.returncode == 0 and out.stdout.strip():
            return f"fluxmap-{__version__}+{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return f"fluxmap-{__version__}"


def provenance(master_seed: int) -> dict:
    return {
        "master_seed": master_seed,
        "build": build_tag(),
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }


# ---------------------------------------------------------------------------
# Scenario sweeps
# ---------------------------------------------------------------------------


def _aggregate(values: list[float]) -> tuple[float, float]:
    return mean(values), (stdev(values) if len(values) > 1 else 0.0)


def run_scenario(spec: ScenarioSpec, cache_dir=None) -> dict:
    """Execute the sweep and return the report dict."""
    oracle = SceneOracle(spec.sigma_target, spec.factor)
    static_oracle = StaticSceneOracle(spec.sigma_target, spec.factor, m_bs=spec.m_bs)
    truth = simulate(spec.scene_target)
    master = SeedStream(spec.master_seed)

    with tempfile.TemporaryDirectory() as tmp:
        cache = MidpointCache(cache_dir if cache_dir is not None else tmp)
        rows = []
        timing = []
        for r_index, r in enumerate(sorted(spec.r_values)):
            config = ReuseConfig(
                T=spec.T, r_reuse=r, mode=spec.mode,
                lambda_tradeoff=spec.lambda_tradeoff,
            )
            # warm the midpoint for this ratio; all ratios share one
            # stage-1 stream so their midpoints lie on a single trajectory
            _generate(spec, oracle, static_oracle, config, cache, master.child(WARMUP))

            per_trial = {"nmse": [], "rmse": [], "ssim": [], "psnr_db": [], "ms": []}
            calls = None
            for i in range(spec.trials):
                stream = master.child(TRIAL, r_index, i)
                t0 = time.perf_counter()
                rmap, _, cplx = _generate(
                    spec, oracle, static_oracle, config, cache, stream
                )
                per_trial["ms"].append((time.perf_counter() - t0) * 1e3)
                report = metrics.evaluate(rmap, truth)
                per_trial["nmse"].append(report.nmse)
                per_trial["rmse"].append(report.rmse)
                per_trial["ssim"].append(report.ssim)
                per_trial["psnr_db"].append(report.psnr_db)
                if calls is None:
                    calls = cplx.denoiser_calls
                elif calls != cplx.denoiser_calls:
                    raise RuntimeError("trial step counts diverged within one ratio")
            m_nmse, s_nmse = _aggregate(per_trial["nmse"])
            m_rmse, s_rmse = _aggregate(per_trial["rmse"])
            m_ssim, s_ssim = _aggregate(per_trial["ssim"])
            m_psnr, s_psnr = _aggregate(per_trial["psnr_db"])
            rows.append(
                {
                    "r_reuse": r,
                    "mean_nmse": m_nmse, "std_nmse": s_nmse,
                    "mean_rmse": m_rmse, "std_rmse": s_rmse,
                    "mean_ssim": m_ssim, "std_ssim": s_ssim,
                    "mean_psnr_db": m_psnr, "std_psnr_db": s_psnr,
                    "denoiser_calls": calls,
                    "speedup": spec.T / calls,
                    "objective": m_nmse + spec.lambda_tradeoff * calls,
                }
            )
            timing.append({"r_reuse": r, "mean_wall_ms": mean(per_trial["ms"])})
    # timing is informational and, like the timestamp, excluded from the
    # report's reproducibility contract
    return {
        "scenario": spec_to_dict(spec),
        "rows": rows,
        "timing": timing,
        "provenance": provenance(spec.master_seed),
    }


def _generate(spec, oracle, static_oracle, config, cache, stream):
    if spec.mode == "vanilla":
        return generate_vanilla_reuse(
            oracle, spec.scene_initial, spec.scene_target, config, cache, stream
        )
    return generate_flux(
        static_oracle, oracle, spec.scene_target, config, cache, stream
    )


def baseline_nmse(
    spec: ScenarioSpec, trials: int | None = None
) -> float:
    """Mean NMSE of full generation for the target scene (no reuse)."""
    oracle = SceneOracle(spec.sigma_target, spec.factor)
    truth = simulate(spec.scene_target)
    config = ReuseConfig(T=spec.T, mode="none")
    master = SeedStream(spec.master_seed)
    values = []
    for i in range(trials or spec.trials):
        rmap, _, _ = generate_full(oracle, spec.scene_target, config, master.child(TRIAL, 0, i))
        values.append(metrics.nmse(rmap, truth))
    return mean(values)


# ---------------------------------------------------------------------------
# KL verification
# ---------------------------------------------------------------------------


def run_kl_check(
    dims: int,
    n_cases: int,
    n_samples: int,
    seed: int = 0,
    t_grid: tuple[float, ...] = KL_T_GRID,
    scene_pair: tuple[EnvironmentScene, EnvironmentScene] | None = None,
    curve_draws: int = 64,
    latent_scale: float = 1.0,
) -> dict:
    """Analytic-vs-Monte-Carlo agreement cases plus the convergence curve."""
    if n_samples < 10_000:
        raise ValidationError("n_samples must be at least 1e4")
    master = SeedStream(seed)
    cases = []
    for c in range(n_cases):
        gen = master.child(KL, 0, c).generator()
        z_i = gen.standard_normal(dims) * latent_scale
        z_j = gen.standard_normal(dims) * latent_scale
        for ti, t in enumerate(t_grid):
            analytic = gate.kl_closed_form(z_i, z_j, t)
            est, se = gate.kl_monte_carlo(
                z_i, z_j, t, n_samples, master.child(KL, 1, c, ti).generator()
            )
            cases.append(
                {
                    "dim": dims, "t": t, "analytic": analytic,
                    "estimate": est, "stderr": se,
                    "pass": abs(est - analytic) <= 3.0 * se,
                }
            )
    curve = convergence_curve(
        scene_pair, seed=seed, draws=curve_draws
    )
    return {
        "n_samples": n_samples,
        "cases": cases,
        "pass_rate": mean(1.0 if c["pass"] else 0.0 for c in cases) if cases else 1.0,
        "curve": curve,
        "provenance": provenance(seed),
    }


def convergence_curve(
    scene_pair: tuple[EnvironmentScene, EnvironmentScene] | None = None,
    seed: int = 0,
    draws: int = 64,
    t_grid: tuple[float, ...] = CURVE_T_GRID,
    factor: int = codec.DEFAULT_FACTOR,
) -> dict:
    """NMSE between forward-diffused latents of two scenes, shared noise.

    Mirrors the observation that trajectories of similar conditions merge
    as the noise level grows: the gap between the two diffused latents is
    (1-t) * (z_a - z_b) when the same noise drives both, so the curve
    decays monotonically and vanishes at t = 1. threshold_t marks the
    first grid point where the per-dimension divergence rate
    (1-t)^2/t * |dz|^2 / D drops below 1e-3.
    """
    if scene_pair is None:
        scene_pair = canonical_pair("bs_move")
    a, b = scene_pair
    z_a = codec.encode(simulate(a), factor)
    z_b = codec.encode(simulate(b), factor)
    dim = z_a.size
    master = SeedStream(seed)

    nmse_curve = []
    for t in t_grid:
        num = 0.0
        den = 0.0
        for d in range(draws):
            # identical generators so the same noise drives both scenes
            za_t = forward_sample(z_a, t, master.child(KL, 2, d).generator())
            zb_t = forward_sample(z_b, t, master.child(KL, 2, d).generator())
            diff = za_t.z.astype(np.float64) - zb_t.z.astype(np.float64)
            num += float(diff @ diff)
            den += float(zb_t.z.astype(np.float64) @ zb_t.z.astype(np.float64))
        nmse_curve.append(num / den if den > 0 else 0.0)

    gap = z_a.astype(np.float64) - z_b.astype(np.float64)
    gap_sq = float(gap @ gap)
    threshold_t = None
    for t in t_grid:
        if (1.0 - t) ** 2 / t * gap_sq / dim < 1e-3:
            threshold_t = t
            break
    return {
        "t": list(t_grid),
        "nmse": nmse_curve,
        "gap_sq": gap_sq,
        "dim": dim,
        "threshold_t": threshold_t,
        "draws": draws,
    }


# ---------------------------------------------------------------------------
# Gate calibration
# ---------------------------------------------------------------------------


def run_calibration(
    pairs: list[tuple[EnvironmentScene, EnvironmentScene]],
    budget: float,
    proj_seed: int = 42,
    r_reuse: float = 0.9,
    T: int = 100,
    trials: int = 8,
    master_seed: int = 0,
    sigma_target: float = DEFAULT_SIGMA_TARGET,
    factor: int = codec.DEFAULT_FACTOR,
) -> tuple[gate.GateConfig, dict]:
    """Measure reuse loss per pair, compute d_env, and choose tau."""
    if len(pairs) < 10:
        raise ValidationError("calibration needs at least 10 scene pairs")
    proj = gate.ProjectionPair.from_seed(proj_seed)
    oracle = SceneOracle(sigma_target, factor)
    config = ReuseConfig(T=T, r_reuse=r_reuse, mode="vanilla")
    full_config = ReuseConfig(T=T, mode="none")
    master = SeedStream(master_seed)

    points = []
    rows = []
    for p_index, (initial, target) in enumerate(pairs):
        truth = simulate(target)
        reuse_vals, full_vals = [], []
        with tempfile.TemporaryDirectory() as tmp:
            cache = MidpointCache(tmp)
            for i in range(trials):
                stream = master.child(CALIB, p_index, i)
                rmap_r, _, _ = generate_vanilla_reuse(
                    oracle, initial, target, config, cache, stream
                )
                rmap_f, _, _ = generate_full(oracle, target, full_config, stream)
                reuse_vals.append(metrics.nmse(rmap_r, truth))
                full_vals.append(metrics.nmse(rmap_f, truth))
        loss = mean(reuse_vals) - mean(full_vals)
        d = gate.d_env(initial, target, proj)
        points.append((d, loss))
        rows.append({"d_env": d, "nmse_increase": loss})

    n_tokens = gate.tokenize(pairs[0][0]).shape[0]
    norm = gate.d_env_normalization(n_tokens, proj.d_k)
    cfg = gate.calibrate_tau(points, budget, normalization=norm)
    report = {
        "pairs": rows,
        "tau": cfg.tau,
        "budget": budget,
        "normalization": cfg.normalization,
        "proj_seed": proj_seed,
        "r_reuse": r_reuse,
        "T": T,
        "trials": trials,
        "provenance": provenance(master_seed),
    }
    return cfg, report


# ---------------------------------------------------------------------------
# Report serialization
# ---------------------------------------------------------------------------


def _sanitize(obj):
    if isinstance(obj, float) and math.isinf(obj):
        return "inf"
    if isinstance(obj, dict):
        return {k: _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    return obj


def report_to_json(report: dict) -> str:
    return json.dumps(_sanitize(report), indent=2)


def sweep_rows_to_csv(report: dict) -> str:
    rows = report["rows"]
    if not rows:
        return ""
    cols = list(rows[0].keys())
    lines = [",".join(cols)]
    for row in rows:
        lines.append(",".join(_csv_cell(row[c]) for c in cols))
    return "\n".join(lines) + "\n"


def _csv_cell(value) -> str:
    if isinstance(value, float):
        return "inf" if math.isinf(value) else repr(value)
    return str(value)
