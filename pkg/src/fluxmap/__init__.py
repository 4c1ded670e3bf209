"""Radio-map generation with diffusion trajectory midpoint reuse."""

__version__ = "0.1.0"

from .cache import MidpointCache, MidpointRecord, make_record
from .codec import decode, encode, latent_dim
from .diffusion import (
    DiffusionSchedule,
    LatentState,
    Trajectory,
    forward_sample,
    noise_state,
    reverse_step,
    sample,
)
from .errors import (
    CacheMissError,
    ConfigurationError,
    DomainError,
    FluxmapError,
    IntegrityError,
    ValidationError,
)
from .gate import (
    GateConfig,
    ProjectionPair,
    calibrate_tau,
    d_env,
    embed,
    kl_monte_carlo,
    kl_closed_form,
    tokenize,
)
from .harness import ScenarioSpec, run_calibration, run_kl_check, run_scenario
from .metrics import MetricsReport, evaluate, mse, nmse, psnr, rmse, ssim, ssim_global
from .oracle import (
    GaussianTarget,
    MixtureTarget,
    SceneOracle,
    StaticSceneOracle,
    condition_to_target,
    posterior_mean_gaussian,
    posterior_mean_mixture,
)
from .raster import RadioMap, read_rmb, write_csv, write_rmb
from .reuse import (
    ComplexityEstimate,
    ReuseConfig,
    estimate_flops_saving,
    generate_flux,
    generate_full,
    generate_vanilla_reuse,
    switch_steps,
)
from .rng import SeedStream
from .scene import (
    BaseStation,
    EnvironmentScene,
    PropagationParams,
    Rect,
    load_scene,
    save_scene,
    scene_from_dict,
    scene_to_dict,
)
from .simulator import apply_building_mask, ray_blockage, simulate

__all__ = [name for name in dir() if not name.startswith("_")]
