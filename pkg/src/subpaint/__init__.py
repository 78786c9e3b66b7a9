"""Subject-driven sprite editing with a tiny pixel-space diffusion model.

Subpackages and modules:

- ``schedules``   forward-noising schedules and the closed-form noising op
- ``denoiser``    tiny conditional UNet, prompt encoding, training loops
- ``sampler``     deterministic encode/decode walks along the schedule
- ``masking``     subject segmentation, dilation, bbox and paste helpers
- ``editor``      the iterative edit loop plus reference baselines
- ``evaluation``  toy perceptual embedders and score aggregation
- ``benchkit``    synthetic benchmark generator, experiment runner, CLI
"""

__version__ = "0.1.0"
