"""Multi-prompt diffusion editing engine (C++ core)."""

from ._core import (
    NoisefuseError,
    alphas_cumprod,
    assemble_prompt,
    bridge_audio_prompt,
    cli,
    ddim_invert_step,
    ddim_sample_step,
    decode_tensor,
    encode_tensor,
    fuse_adaptive,
    fuse_mean,
    invert_to_sd,
    load_tensor,
    normalize_config,
    project_to_clip,
    reconstruct,
    residual_norm_map,
    run_scenario,
    save_tensor,
    scenario_names,
    select_timesteps,
    solve_tikhonov,
)

__all__ = [name for name in dir() if not name.startswith("_")]
